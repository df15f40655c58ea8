"""Stage orchestration: extend, solve and verify, with persisted artifacts.

Each stage reads what the previous one left on the Pipeline object and
writes JSON reports through a RunStore. A stage that raises an OutfluxError
is recorded as failed in the manifest and the remaining stages are skipped.
Plot tables are derived from the JSON reports by ``emit_plot_data``.
"""

import logging
import math
import time
from pathlib import Path
from typing import Any, Callable, Optional, Sequence, Union

import numpy as np

from outflux import __version__
from outflux.bogovskii import BogovskiiTransform, corrector_hat_v, uniformity_study
from outflux.config import RunConfig, load_config, thread_count
from outflux.cutoffs import OutletCutoff, TruncationCutoff, xi_bound_check
from outflux.estimates import (
    EstimateLedger,
    MeasuredConstants,
    Rectangle,
    admissibility,
    fit_recursion_constants,
    growth_bound_check,
    hardy_check,
    q_sequence,
    saint_venant_claim,
    uniformity_table,
)
from outflux.exceptions import ArtifactNotFoundError, OutfluxError, PreconditionError
from outflux.extension import (
    ExtensionField,
    LerayHopfStatistic,
    SamplingRegion,
    assemble_extension,
    leray_hopf_ratio,
    leray_hopf_trend,
    outlet_decay_check,
)
from outflux.geometry import check_ladder_integrals, classify_case
from outflux.models import ArtifactRecord, RunManifest, StageName, StageRecord
from outflux.solver import ContinuationState, DualNormReport, RunSetup, f_star, invade
from outflux.storage import RunStore

logger = logging.getLogger(__name__)

STAGES: tuple[StageName, ...] = ("extend", "solve", "verify")
PLOT_KINDS = ("ladder", "field", "ratios")
PLOT_STAGE = {"ladder": "verify", "field": "solve", "ratios": "extend"}


def default_out_dir(config: RunConfig, seed: int) -> Path:
    return Path("runs") / f"{config.config_hash[:12]}-{seed}"


class Pipeline:
    """Runs the stages of one configuration and records them in a manifest.

    Example:
        >>> pipeline = Pipeline(config, seed=7, out_dir="runs/channel")
        >>> manifest = pipeline.run()
        >>> manifest.failed_stage is None
        True
    """

    def __init__(
        self,
        config: RunConfig,
        seed: int = 0,
        out_dir: Optional[Union[str, Path]] = None,
        config_path: Optional[Union[str, Path]] = None,
    ):
        """Initialize the pipeline.

        Args:
            config: Validated run configuration
            seed: Root seed for every sampled trial
            out_dir: Run directory (default runs/<hash>-<seed>)
            config_path: Path recorded as the manifest input
        """
        self.config = config
        self.seed = seed
        self.store = RunStore(out_dir or default_out_dir(config, seed), config.config_hash)
        self.manifest = RunManifest(
            config_hash=config.config_hash,
            seed=seed,
            version=__version__,
            out_dir=str(self.store.out_dir),
            inputs={"config": str(config_path)} if config_path else {},
            threads=thread_count(),
        )
        self.setup: Optional[RunSetup] = None
        self.extension: Optional[ExtensionField] = None
        self.statistic: Optional[LerayHopfStatistic] = None
        self.continuation: Optional[ContinuationState] = None
        self.dual: Optional[DualNormReport] = None

    @property
    def cells(self) -> list[int]:
        assert self.setup is not None
        return list(range(min(self.config.verify.cells, self.setup.ladder.K)))

    def _record(self, artifact: ArtifactRecord) -> None:
        self.manifest.artifacts = [a for a in self.manifest.artifacts if a.name != artifact.name]
        self.manifest.artifacts.append(artifact)

    def _require(self, *names: str) -> None:
        missing = [n for n in names if getattr(self, n) is None]
        if missing:
            raise PreconditionError(f"stage needs the results of earlier stages: {missing}")

    def extend(self) -> None:
        """Build A, its flux ledger and the Leray-Hopf statistics per epsilon."""
        config = self.config
        self.setup = setup = RunSetup.from_config(config, self.seed)
        spec, ladder = setup.spec, setup.ladder
        collar = setup.settings.collar
        logger.info(f"Extending boundary data at eps={setup.epsilon} (ladder K={ladder.K})")
        self.extension = assemble_extension(
            setup.boundary, spec, epsilon=setup.epsilon, collar=collar, ladder=ladder
        )
        region = SamplingRegion.truncation(spec, ladder, 1)
        trials = config.verify.trials
        known = setup.choice.statistics if setup.choice is not None else {}
        per_epsilon: list[LerayHopfStatistic] = []
        for epsilon in sorted(config.verify.epsilons, reverse=True):
            stat = known.get(epsilon)
            if stat is None:
                field = (
                    self.extension
                    if epsilon == setup.epsilon
                    else assemble_extension(setup.boundary, spec, epsilon=epsilon, collar=collar,
                                            ladder=ladder)
                )
                stat = leray_hopf_ratio(field, spec, region, trials, epsilon, self.seed)
            per_epsilon.append(stat)
        chosen = [s for s in per_epsilon if s.epsilon == setup.epsilon]
        self.statistic = chosen[0] if chosen else leray_hopf_ratio(
            self.extension, spec, region, trials, setup.epsilon, self.seed
        )
        per_cell = [
            leray_hopf_ratio(self.extension, spec, SamplingRegion.cell(ladder, k), trials,
                             setup.epsilon, self.seed)
            for k in self.cells
        ]
        cutoff = OutletCutoff(spec.profile, spec.gamma, setup.epsilon, x_min=spec.last_abscissa)
        xi = xi_bound_check(cutoff, 400, seed=self.seed)
        decay = [
            outlet_decay_check(term, cutoff, ladder, len(self.cells), seed=self.seed)
            for term in self.extension.terms_of("carrier_outlet")
        ]
        assert self.extension.ledger is not None
        report = {
            "epsilon": setup.epsilon,
            "epsilon_choice": setup.choice.to_dict() if setup.choice is not None else None,
            "ledger": self.extension.ledger.to_dict(),
            "trace_error": self.extension.trace_error(),
            "terms": [term.label for term in self.extension.terms],
            "leray_hopf": [s.to_dict() for s in per_epsilon],
            "leray_hopf_chosen": self.statistic.to_dict(),
            "leray_hopf_cells": [s.to_dict() for s in per_cell],
            "leray_hopf_verdicts": leray_hopf_trend(per_epsilon, per_cell).to_dict(),
            "xi_bounds": {
                "sup_axis": xi.sup_axis,
                "sup_wall": xi.sup_wall,
                "sup_hessian": xi.sup_hessian,
                "support_ok": xi.support_ok,
            },
            "outlet_decay": [
                {"sup_value": d.sup_value, "sup_gradient": d.sup_gradient, "stable": d.stable}
                for d in decay
            ],
        }
        self._record(self.store.write_json("extension", "extend", report))

    def solve(self) -> None:
        """Invading-domain continuation with per-level velocity samples u = A + v."""
        self._require("setup", "extension")
        assert self.setup is not None and self.extension is not None
        setup = self.setup
        state = invade(setup.spec, setup.ladder, self.extension, setup.force, setup.settings)
        self.continuation = state
        levels = len(state.levels)
        self.dual = f_star(setup.force, setup.spec, setup.ladder, levels,
                           setup.settings.mesh_size, setup.settings.quadrature_order)
        a_norm = setup.boundary.size
        for lv in state.levels:
            nodes = lv.field.mesh.nodes
            u = self.extension.evaluate(nodes) + lv.field.evaluate(nodes)
            rows = np.column_stack([nodes, u])
            self._record(
                self.store.write_csv(f"field_level{lv.level}", "solve",
                                     ["x1", "x2", "u1", "u2"], rows)
            )
        report = {
            **state.to_dict(),
            "dual_norms": self.dual.to_dict(),
            "apriori_constants": [
                lv.result.apriori_constant(a_norm, self.dual.f_star) for lv in state.levels
            ],
            "level_differences": state.differences,
        }
        self._record(self.store.write_json("solution", "solve", report))

    def verify(self) -> None:
        """Inequality constants, Bogovskii uniformity and the Saint-Venant ledger."""
        self._require("setup", "statistic", "continuation", "dual")
        assert self.setup is not None and self.statistic is not None
        assert self.continuation is not None and self.dual is not None
        setup, ladder, cells = self.setup, self.setup.ladder, self.cells
        trials, seed = self.config.verify.trials, self.seed
        resolution = self.config.verify.bogovskii_resolution

        square = Rectangle(1.0, 1.0)
        hardy = [
            hardy_check(square, "bottom", trials, seed),
            hardy_check(square, "all", trials, seed),
        ]
        poincare = uniformity_table("poincare", ladder, cells, trials, seed)
        l4 = uniformity_table("l4", ladder, cells, trials, seed)
        study = uniformity_study(ladder, cells, resolution)
        transforms = {
            str(k): BogovskiiTransform(ladder, k).check_invariants(seed=seed).to_dict()
            for k in cells
        }
        last = self.continuation.last
        hats = {
            str(k): corrector_hat_v(last.field, ladder, k, resolution).ratio
            for k in cells
            if k < last.level
        }
        cutoff = max(TruncationCutoff(ladder, k).sampled_gradient_bound() for k in cells)
        measured = MeasuredConstants(
            nu=setup.settings.nu,
            bogovskii=max(study.ratios.values(), default=0.0),
            poincare=max(poincare.constants.values()),
            l4=max(l4.constants.values()),
            cutoff=cutoff,
            leray_hopf=self.statistic.max_ratio,
            quadratic=self.statistic.quadratic_max,
        )
        recursion = fit_recursion_constants(measured)

        growth = growth_bound_check(
            {f"level_{lv.level}": lv.profile for lv in self.continuation.levels}, ladder
        )
        y = np.asarray(self.continuation.y, dtype=float)
        a_norm, fs = setup.boundary.size, self.dual.f_star
        shape = a_norm**2 + a_norm**4 + fs**2
        n = y.size
        # Q_N = y_N; no y_k below the top level enters Q
        top_weight = 2.0 * shape * (1.0 + float(ladder.cumulative_integrals()[n - 1]))
        c_fit = (1.0 + 1e-12) * float(y[-1]) / top_weight if n and top_weight > 0 else 0.0
        q = q_sequence(a_norm, fs, ladder, c_fit=c_fit)
        gR = [ladder.g_at(k) for k in range(n)]
        verdicts: dict[str, Any] = {
            "hardy": all(r.stable for r in hardy),
            "poincare_uniform": poincare.uniform,
            "l4_uniform": l4.uniform,
            "bogovskii_spread": study.spread,
            "recursion_valid": recursion.valid,
        }
        admissible: Optional[dict[str, Any]] = None
        claim: Optional[dict[str, Any]] = None
        if recursion.valid:
            admissible = admissibility(q, ladder, recursion.c_star, recursion.c_2star).to_dict()
            report = saint_venant_claim(y, q.values[:n], recursion.c_star, recursion.c_2star, gR)
            claim = report.to_dict()
            verdicts["claim"] = report.verdict
            verdicts["claim_disagreements"] = report.disagreements
            verdicts["k0"] = admissible["k0"]
        ledger = EstimateLedger(y, q.values, q.c, recursion, verdicts)
        integrals = check_ladder_integrals(ladder)
        case = classify_case(setup.spec)

        report_doc = {
            "inequalities": {
                "hardy": [r.to_dict() for r in hardy],
                "poincare": poincare.to_dict(),
                "l4": l4.to_dict(),
            },
            "bogovskii": {
                "ratios": {str(k): r for k, r in study.ratios.items()},
                "spread": study.spread,
                "transforms": transforms,
                "hat_ratios": hats,
            },
            "measured": {
                "bogovskii": measured.bogovskii,
                "poincare": measured.poincare,
                "l4": measured.l4,
                "cutoff": measured.cutoff,
                "leray_hopf": measured.leray_hopf,
                "quadratic": measured.quadratic,
            },
            "ladder_integrals": {
                "growth_ratios": integrals.growth_ratios,
                "cell_upper_ok": integrals.cell_upper_ok,
                "cell_lower_ok": integrals.cell_lower_ok,
                "passed": integrals.passed,
            },
            "case": {
                "integral_case": case.integral_case,
                "growth_case": case.growth_case,
                "tail_exponent": case.tail_exponent,
            },
            "growth": growth.to_dict(),
            "admissibility": admissible,
            "claim": claim,
            "ledger": ledger.to_dict(),
        }
        self._record(self.store.write_json("verify", "verify", report_doc))
        table = {
            "k": list(range(ladder.K + 1)),
            "R_k": [float(r) for r in ladder.radii],
            "g": [ladder.g_at(k) for k in range(ladder.K + 1)],
            "int_gm3": [float(v) for v in q.cumulative],
            "y_k": [float(y[k]) if k < n else None for k in range(ladder.K + 1)],
            "Q_k": [float(v) for v in q.values],
        }
        self._record(self.store.write_json("ladder", "verify", table))

    def run(self, stages: Sequence[StageName] = STAGES) -> RunManifest:
        """Run the stages in order, stopping at the first failure.

        Returns:
            The manifest, also saved as manifest.json in the run directory
        """
        steps: dict[str, Callable[[], None]] = {
            "extend": self.extend,
            "solve": self.solve,
            "verify": self.verify,
        }
        for name in stages:
            start = time.perf_counter()
            try:
                steps[name]()
            except OutfluxError as e:
                seconds = time.perf_counter() - start
                logger.warning(f"Stage {name} failed after {seconds:.2f}s: {e}")
                self.manifest.stages.append(
                    StageRecord(name, "failed", seconds, str(e), e.exit_code)
                )
                break
            seconds = time.perf_counter() - start
            logger.info(f"Stage {name} completed in {seconds:.2f}s")
            self.manifest.stages.append(StageRecord(name, "completed", seconds))
        for kind in PLOT_KINDS:
            record = self.manifest.stage(PLOT_STAGE[kind])
            if record is not None and record.completed:
                emit_plot_data(self.manifest, kind)
        self.store.save_manifest(self.manifest)
        return self.manifest


def run_pipeline(
    config_path: Union[str, Path],
    seed: int = 0,
    out_dir: Optional[Union[str, Path]] = None,
    stages: Sequence[StageName] = STAGES,
) -> RunManifest:
    """Load a config and run the requested stages.

    Args:
        config_path: JSON config file
        seed: Root seed
        out_dir: Run directory (default runs/<hash>-<seed>)
        stages: Stages to run, in order

    Returns:
        RunManifest; a failed stage is marked in ``stages`` and ``failed_stage``

    Raises:
        ConfigError: If the config does not validate
        StorageError: If the run directory cannot be written
    """
    config = load_config(config_path)
    return Pipeline(config, seed, out_dir, config_path).run(stages)


def _ladder_rows(store: RunStore) -> list[list[float]]:
    table = store.read_json("ladder")
    columns = ["k", "R_k", "g", "int_gm3", "y_k", "Q_k"]
    return [
        [math.nan if v is None else v for v in row]
        for row in zip(*(table[c] for c in columns))
    ]


def _ratio_rows(store: RunStore) -> list[list[float]]:
    stats = store.read_json("extension")["leray_hopf"]
    rows: list[list[float]] = []
    previous: Optional[float] = None
    for stat in stats:
        ratio = stat["max_ratio"]
        monotone = 1 if previous is None or ratio < previous else 0
        rows.append([stat["epsilon"], ratio, stat["quadratic_max"], ratio / stat["epsilon"],
                     monotone])
        previous = ratio
    return rows


def _field_rows(store: RunStore, manifest: RunManifest) -> list[list[float]]:
    levels = [a.name for a in manifest.artifacts if a.name.startswith("field_level")]
    if not levels:
        raise ArtifactNotFoundError("run has no field samples")
    top = max(levels, key=lambda name: int(name.removeprefix("field_level")))
    _, data = store.read_csv(top)
    speed = np.hypot(data[:, 2], data[:, 3])
    return np.column_stack([data, speed]).tolist()


def emit_plot_data(manifest: RunManifest, kind: str) -> Path:
    """Write the plot table ``plot_<kind>.csv`` of a run.

    Columns:
        ladder: k,R_k,g,int_gm3,y_k,Q_k (y_k is nan beyond the solved level)
        field: x1,x2,u1,u2,speed on the nodes of the last solved level
        ratios: epsilon,max_ratio,quadratic_max,ratio_over_epsilon,monotone, by decreasing
            epsilon; monotone is 1 when the ratio dropped from the previous row

    Returns:
        Path of the CSV file

    Raises:
        ArtifactNotFoundError: If the stage producing the data did not complete
        PreconditionError: If the kind is unknown
    """
    if kind not in PLOT_STAGE:
        raise PreconditionError(f"unknown plot kind {kind!r}; expected one of {PLOT_KINDS}")
    stage = manifest.stage(PLOT_STAGE[kind])
    if stage is None or not stage.completed:
        raise ArtifactNotFoundError(
            f"plot data {kind!r} needs a completed {PLOT_STAGE[kind]} stage"
        )
    store = RunStore(manifest.out_dir, manifest.config_hash)
    if kind == "ladder":
        columns = ["k", "R_k", "g", "int_gm3", "y_k", "Q_k"]
        rows = _ladder_rows(store)
    elif kind == "ratios":
        columns = ["epsilon", "max_ratio", "quadratic_max", "ratio_over_epsilon", "monotone"]
        rows = _ratio_rows(store)
    else:
        columns = ["x1", "x2", "u1", "u2", "speed"]
        rows = _field_rows(store, manifest)
    record = store.write_csv(f"plot_{kind}", PLOT_STAGE[kind], columns, rows)
    manifest.artifacts = [a for a in manifest.artifacts if a.name != record.name]
    manifest.artifacts.append(record)
    logger.info(f"Plot data {kind} written to {record.path}")
    return store.path(record.path)
