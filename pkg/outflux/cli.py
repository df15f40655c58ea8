"""Command line entry point ``outflux``.

Subcommands::

    outflux extend    --config run.json [--seed N] [--out DIR]
    outflux solve     --config run.json ...
    outflux verify    --config run.json ...
    outflux ladder    --config run.json ...
    outflux run       --config run.json ...
    outflux bogovskii --config run.json --k 3

Exit codes: 0 success, 2 config error, 3 numeric failure, 4 violated
geometric or analytic hypothesis. ``OUTFLUX_THREADS`` caps worker pools.
"""

import argparse
import json
import logging
import sys
from typing import Any, Optional, Sequence

from outflux import __version__
from outflux.bogovskii import BogovskiiTransform, solve_div, two_bump_source
from outflux.config import load_config
from outflux.exceptions import OutfluxError
from outflux.geometry import DomainSpec, build_ladder
from outflux.models import RunManifest, StageName
from outflux.pipeline import STAGES, emit_plot_data, run_pipeline
from outflux.storage import RunStore

logger = logging.getLogger("outflux")

STAGES_FOR: dict[str, tuple[StageName, ...]] = {
    "extend": ("extend",),
    "solve": ("extend", "solve"),
    "verify": STAGES,
    "ladder": STAGES,
    "run": STAGES,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="outflux",
        description="Steady Navier-Stokes flow in symmetric domains with an outlet to infinity",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "extend": "Build the solenoidal extension and its flux ledger",
        "solve": "Extend, then solve on the invading domains",
        "verify": "Run all stages and report inequality constants and verdicts",
        "ladder": "Run all stages and print the k,R_k,g,int_gm3,y_k,Q_k table",
        "run": "Run all stages and print the manifest",
        "bogovskii": "Solve the two-bump divergence problem on one ladder cell",
    }
    for name, text in helps.items():
        cmd = sub.add_parser(name, help=text)
        cmd.add_argument("--config", required=True, help="Path to the JSON run configuration")
        cmd.add_argument("--seed", type=int, default=0, help="Root seed (default: 0)")
        cmd.add_argument("--out", default=None,
                         help="Run directory (default: runs/<config hash>-<seed>)")
        cmd.add_argument("--verbose", "-v", action="store_true", help="Log at DEBUG level")
        if name == "bogovskii":
            cmd.add_argument("--k", type=int, default=0, help="Ladder cell index (default: 0)")
    return parser


def _emit(payload: Any) -> None:
    print(json.dumps(payload, indent=2, sort_keys=True))


def _stage_summary(command: str, manifest: RunManifest) -> Any:
    store = RunStore(manifest.out_dir, manifest.config_hash)
    if command == "extend":
        report = store.read_json("extension")
        return {
            "epsilon": report["epsilon"],
            "balanced": report["ledger"]["balanced"],
            "trace_error": report["trace_error"],
            "leray_hopf": report["leray_hopf"],
            "leray_hopf_verdicts": report["leray_hopf_verdicts"],
        }
    if command == "solve":
        report = store.read_json("solution")
        return {
            "levels": [lv["level"] for lv in report["levels"]],
            "y": report["y"],
            "energy_residuals": [lv["energy_residual"] for lv in report["levels"]],
            "iterations": [lv["iterations"] for lv in report["levels"]],
        }
    if command == "verify":
        report = store.read_json("verify")
        return {
            "constants": report["measured"],
            "per_k": {
                "poincare": report["inequalities"]["poincare"]["per_k"],
                "l4": report["inequalities"]["l4"]["per_k"],
                "bogovskii": report["bogovskii"]["ratios"],
            },
            "verdicts": report["ledger"]["verdicts"],
        }
    return manifest.to_dict()


def _bogovskii(args: argparse.Namespace) -> int:
    config = load_config(args.config)
    spec = DomainSpec.from_config(config)
    spec.validate()
    ladder = build_ladder(spec.profile, spec.R0, config.ladder.K)
    transform = BogovskiiTransform(ladder, args.k)
    invariants = transform.check_invariants(seed=args.seed)
    solution = solve_div(
        transform, two_bump_source(ladder, args.k), config.verify.bogovskii_resolution
    )
    _emit(
        {
            "k": args.k,
            "ratio": solution.ratio,
            "residual": solution.residual,
            "load_residual": solution.load_residual,
            "multiplier": solution.multiplier,
            "star_check": invariants.to_dict()["star_check"],
        }
    )
    return 0 if invariants.passed else 4


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        if args.command == "bogovskii":
            return _bogovskii(args)
        manifest = run_pipeline(args.config, args.seed, args.out, STAGES_FOR[args.command])
        failed = manifest.failed_stage
        if failed is not None:
            record = manifest.stage(failed)
            assert record is not None
            logger.error(f"Stage {failed} failed: {record.error}")
            return record.exit_code
        if args.command == "ladder":
            path = emit_plot_data(manifest, "ladder")
            print(path.read_text(encoding="utf-8"), end="")
            return 0
        _emit(_stage_summary(args.command, manifest))
        return 0
    except OutfluxError as e:
        logger.error(f"{type(e).__name__}: {e}")
        return e.exit_code


if __name__ == "__main__":
    sys.exit(main())
