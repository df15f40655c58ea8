"""Perturbation solver for the truncated problems.

On Omega_l the unknown v = u - A solves, for every symmetric solenoidal eta
vanishing on the boundary of Omega_l,

    nu (grad v, grad eta) = -lam [ b(v + A; v, eta) + b(v; A, eta)
                                   + nu (grad A, grad eta) + b(A; A, eta) - <f, eta> ]

with b(w; u, eta) = int ((w . grad) u) . eta. The homotopy parameter lam runs
over a ladder ending at 1; each step is solved by Picard iteration with the
transport velocity lagged. The transport term is assembled in skew form, so
b(w; v, v) vanishes exactly and the energy identity holds to round-off.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Literal, Optional

import numpy as np
import numpy.typing as npt
from scipy import sparse

from outflux.config import RunConfig
from outflux.exceptions import (
    HypothesisError,
    NonConvergenceError,
    NumericError,
    PreconditionError,
)
from outflux.extension import (
    BoundaryData,
    LerayHopfStatistic,
    SamplingRegion,
    assemble_extension,
    leray_hopf_ratio,
)
from outflux.fields import (
    ChannelPerturbation,
    ForceFunction,
    PoiseuilleField,
    SumField,
    VectorField,
    ZeroField,
)
from outflux.geometry import DomainSpec, OutletProfile, TruncationLadder, build_ladder
from outflux.hermite import DiscreteField, HermiteSpace
from outflux.linalg import solve_sparse
from outflux.mesh import TruncationMesh, mesh_truncation

logger = logging.getLogger(__name__)

FloatArray = npt.NDArray[np.float64]

DIVERGENCE_BOUND = 1e12
SYMMETRY_TOL = 1e-10


class ForceField:
    """Body force f with f1 even and f2 odd in x2.

    ``bump``: f = amplitude * (1 - |x - c|^2 / r^2)_+^3 e1 with c = (center, 0).
    ``function``: any callable mapping (n, 2) points to (n, 2) values.
    """

    def __init__(
        self,
        kind: Literal["none", "bump", "function"] = "none",
        amplitude: float = 0.0,
        center: float = 0.0,
        radius: float = 0.5,
        function: Optional[ForceFunction] = None,
    ) -> None:
        if kind == "function" and function is None:
            raise PreconditionError("force kind 'function' needs a callable")
        if radius <= 0:
            raise PreconditionError(f"force radius must be positive, got {radius}")
        self.kind = kind
        self.amplitude = amplitude
        self.center = center
        self.radius = radius
        self.function = function

    @classmethod
    def from_config(cls, config: RunConfig) -> ForceField:
        force = config.force
        return cls(kind=force.kind, amplitude=force.amplitude, center=force.center,
                   radius=force.radius)

    @property
    def is_zero(self) -> bool:
        return self.kind == "none" or (self.kind == "bump" and self.amplitude == 0.0)

    def scaled(self, factor: float) -> ForceField:
        if self.kind == "function":
            assert self.function is not None
            inner = self.function
            return ForceField("function", function=lambda p: factor * inner(p))
        return ForceField(self.kind, factor * self.amplitude, self.center, self.radius)

    def evaluate(self, points: FloatArray) -> FloatArray:
        out = np.zeros((points.shape[0], 2))
        if self.kind == "bump":
            r2 = ((points[:, 0] - self.center) ** 2 + points[:, 1] ** 2) / self.radius**2
            out[:, 0] = self.amplitude * np.clip(1.0 - r2, 0.0, None) ** 3
        elif self.kind == "function":
            assert self.function is not None
            out = np.asarray(self.function(points), dtype=float).reshape(-1, 2)
        return out

    def check_symmetry(self, points: FloatArray) -> float:
        """Largest parity defect |f1(x') - f1(x)| + |f2(x') + f2(x)| at the given points.

        Raises:
            HypothesisError: If the defect exceeds 1e-10 times the largest value
        """
        values = self.evaluate(points)
        mirrored = self.evaluate(points * np.array([1.0, -1.0]))
        defect = float(np.max(np.abs(mirrored[:, 0] - values[:, 0])
                              + np.abs(mirrored[:, 1] + values[:, 1]), initial=0.0))
        scale = float(np.max(np.abs(values), initial=0.0))
        if defect > SYMMETRY_TOL * max(scale, 1.0):
            raise HypothesisError(f"force is not symmetric: parity defect {defect:.3e}")
        return defect


@dataclass(frozen=True)
class SolveConfig:
    """Numerical settings of the homotopy and continuation."""

    nu: float = 1.0
    epsilon: Optional[float] = None
    homotopy: tuple[float, ...] = (0.0, 0.25, 0.5, 0.75, 1.0)
    picard_tol: float = 1e-10
    picard_max_iter: int = 60
    mesh_size: float = 0.25
    levels: int = 3
    level_tol: float = 1e-4
    quadrature_order: int = 4
    collar: float = 0.5
    max_halvings: int = 6

    def __post_init__(self) -> None:
        self.validate()

    def validate(self) -> None:
        """Raises PreconditionError unless nu, epsilon and the tolerances are positive."""
        if self.nu <= 0:
            raise PreconditionError(f"nu must be positive, got {self.nu}")
        if self.epsilon is not None and self.epsilon <= 0:
            raise PreconditionError(f"epsilon must be positive, got {self.epsilon}")
        if self.picard_tol <= 0 or self.level_tol <= 0 or self.mesh_size <= 0:
            raise PreconditionError("tolerances and the mesh size must be positive")
        ladder = self.homotopy
        if (
            not ladder
            or ladder[0] < 0
            or ladder[-1] != 1.0
            or any(b <= a for a, b in zip(ladder, ladder[1:]))
        ):
            raise PreconditionError(f"homotopy ladder {ladder} must increase in [0, 1] to 1")

    @classmethod
    def from_config(cls, config: RunConfig) -> SolveConfig:
        solve = config.solve
        return cls(
            nu=solve.nu,
            epsilon=solve.epsilon,
            homotopy=tuple(solve.homotopy),
            picard_tol=solve.picard_tol,
            picard_max_iter=solve.picard_max_iter,
            mesh_size=solve.mesh_size,
            levels=solve.levels,
            level_tol=solve.level_tol,
            quadrature_order=solve.quadrature_order,
            collar=solve.collar,
        )


@dataclass
class LevelProblem:
    """Discrete operators of one truncation, with the extension frozen in."""

    space: HermiteSpace
    nu: float
    stiffness: sparse.csr_matrix
    reaction: sparse.csr_matrix
    wind: FloatArray
    viscous_load: FloatArray
    transport_load: FloatArray
    force_load: FloatArray

    @classmethod
    def from_mesh(
        cls,
        mesh: TruncationMesh,
        extension: VectorField,
        force: ForceField,
        nu: float,
        order: int = 4,
    ) -> LevelProblem:
        space = HermiteSpace(mesh, order)
        shape = space.points.shape[:2]
        pts = space.quadrature_points
        a = extension.evaluate(pts).reshape(*shape, 2)
        jac = extension.jacobian(pts).reshape(*shape, 2, 2)
        f = force.evaluate(pts).reshape(*shape, 2)
        logger.debug(
            f"Assembled level {mesh.level}: {space.n_free} unknowns, {mesh.n_cells} cells"
        )
        return cls(
            space=space,
            nu=nu,
            stiffness=space.stiffness(),
            reaction=space.reaction(jac),
            wind=a,
            viscous_load=space.gradient_load(jac),
            transport_load=space.load(np.einsum("cqij,cqj->cqi", jac, a)),
            force_load=space.load(f),
        )

    @classmethod
    def build(
        cls,
        spec: DomainSpec,
        ladder: TruncationLadder,
        level: int,
        extension: VectorField,
        force: ForceField,
        config: SolveConfig,
    ) -> LevelProblem:
        h = config.mesh_size
        mesh = mesh_truncation(spec, ladder, level, h, hy=h)
        return cls.from_mesh(mesh, extension, force, config.nu, config.quadrature_order)

    @property
    def level(self) -> int:
        return self.space.mesh.level

    @property
    def rhs(self) -> FloatArray:
        """-nu (grad A, grad eta) - b(A; A, eta) + <f, eta>."""
        return -self.nu * self.viscous_load - self.transport_load + self.force_load

    @property
    def h(self) -> float:
        return float(np.max(self.space.hx))


@dataclass
class LinearSystem:
    matrix: sparse.csr_matrix
    rhs: FloatArray
    context: str


def assemble_system(problem: LevelProblem, lam: float, current: DiscreteField) -> LinearSystem:
    """Picard system nu K + lam (C(v_current + A) + M) = lam b.

    Raises:
        PreconditionError: If lam lies outside [0, 1]
    """
    if not 0.0 <= lam <= 1.0:
        raise PreconditionError(f"homotopy parameter must lie in [0, 1], got {lam}")
    context = f"nu={problem.nu}, lambda={lam}, h={problem.h:.4g}"
    matrix = problem.nu * problem.stiffness
    if lam == 0.0:
        return LinearSystem(matrix.tocsr(), np.zeros(problem.space.n_free), context)
    vel, _ = current.quadrature_values()
    convection = problem.space.convection(problem.wind + vel)
    matrix = matrix + lam * (convection + problem.reaction)
    return LinearSystem(matrix.tocsr(), lam * problem.rhs, context)


@dataclass(frozen=True)
class EnergyBalance:
    """nu |grad v|^2 against the right-hand side terms at the solution."""

    energy: float
    reaction: float
    viscous: float
    transport: float
    force: float

    @property
    def residual(self) -> float:
        rhs = self.reaction + self.viscous + self.transport + self.force
        scale = max(abs(self.energy), abs(self.reaction), abs(self.viscous), abs(self.transport),
                    abs(self.force))
        return abs(self.energy - rhs) / scale if scale > 0 else 0.0


def energy_balance(problem: LevelProblem, lam: float, free: FloatArray) -> EnergyBalance:
    """Terms of nu |grad v|^2 = -lam [b(v; A, v) + nu (grad A, grad v) + b(A; A, v) - <f, v>]."""
    return EnergyBalance(
        energy=problem.nu * float(free @ (problem.stiffness @ free)),
        reaction=-lam * float(free @ (problem.reaction @ free)),
        viscous=-lam * problem.nu * float(free @ problem.viscous_load),
        transport=-lam * float(free @ problem.transport_load),
        force=lam * float(free @ problem.force_load),
    )


@dataclass(frozen=True)
class LambdaRecord:
    """One converged homotopy step."""

    lam: float
    iterations: int
    update_norm: float
    energy_residual: float
    dirichlet: float

    def to_dict(self) -> dict[str, float]:
        return {
            "lambda": self.lam,
            "iterations": self.iterations,
            "update_norm": self.update_norm,
            "energy_residual": self.energy_residual,
            "dirichlet": self.dirichlet,
        }


@dataclass
class PicardOutcome:
    field: DiscreteField
    iterations: int
    update_norm: float
    converged: bool


def picard(
    problem: LevelProblem,
    lam: float,
    start: DiscreteField,
    tol: float,
    max_iter: int,
) -> PicardOutcome:
    """Picard iteration at fixed lam, stopping on the relative Dirichlet update."""
    K = problem.stiffness
    current = start
    previous = start.free_coefficients()
    update = math.inf
    for iteration in range(1, max_iter + 1):
        system = assemble_system(problem, lam, current)
        free = solve_sparse(system.matrix, system.rhs, system.context)
        diff = free - previous
        size = math.sqrt(max(float(free @ (K @ free)), 0.0))
        change = math.sqrt(max(float(diff @ (K @ diff)), 0.0))
        update = change / size if size > 0 else change
        current = DiscreteField.from_free(problem.space, free)
        previous = free
        logger.debug(f"Picard lambda={lam} iteration {iteration}: update {update:.3e}")
        if not math.isfinite(update) or size > DIVERGENCE_BOUND:
            return PicardOutcome(current, iteration, update, False)
        if update <= tol:
            return PicardOutcome(current, iteration, update, True)
    return PicardOutcome(current, max_iter, update, False)


@dataclass
class HomotopyResult:
    """Solution at lam = 1 with the record of every homotopy step."""

    field: DiscreteField
    records: list[LambdaRecord]
    halvings: int = 0

    @property
    def iterations(self) -> int:
        return sum(r.iterations for r in self.records)

    @property
    def energy_residual(self) -> float:
        return max((r.energy_residual for r in self.records), default=0.0)

    @property
    def dirichlet(self) -> float:
        return self.records[-1].dirichlet if self.records else 0.0

    def apriori_constant(self, a_norm: float, f_star: float) -> float:
        """max over lam of |grad v|^2 / (|a|^2 + |a|^4 + |f|_*^2)."""
        shape = a_norm**2 + a_norm**4 + f_star**2
        top = max((r.dirichlet for r in self.records), default=0.0)
        return top / shape if shape > 0 else 0.0


def homotopy_solve(
    problem: LevelProblem,
    config: SolveConfig,
    initial: Optional[DiscreteField] = None,
    ladder: Optional[tuple[float, ...]] = None,
) -> HomotopyResult:
    """Walk the homotopy ladder to lam = 1 with Picard steps.

    A failed step is retried from the midpoint between the last converged
    parameter and the failed one, at most ``max_halvings`` times in total.

    Raises:
        NonConvergenceError: If Picard keeps failing; diagnostics carry the
            converged parameters and the failing one
    """
    pending = list(config.homotopy if ladder is None else ladder)
    state = DiscreteField.zeros(problem.space) if initial is None else initial
    last_ok: Optional[float] = None
    halvings = 0
    records: list[LambdaRecord] = []
    while pending:
        lam = pending[0]
        outcome = picard(problem, lam, state, config.picard_tol, config.picard_max_iter)
        if outcome.converged:
            pending.pop(0)
            state = outcome.field
            last_ok = lam
            free = state.free_coefficients()
            balance = energy_balance(problem, lam, free)
            records.append(
                LambdaRecord(lam, outcome.iterations, outcome.update_norm, balance.residual,
                             balance.energy / problem.nu)
            )
            logger.info(
                f"Level {problem.level} lambda={lam:.4g}: {outcome.iterations} Picard iterations, "
                f"energy residual {balance.residual:.2e}"
            )
            continue
        halvings += 1
        lower = 0.0 if last_ok is None else last_ok
        if halvings > config.max_halvings or lam - lower <= 1e-6:
            diagnostics: dict[str, Any] = {
                "level": problem.level,
                "failed_lambda": lam,
                "converged": [r.lam for r in records],
                "update_norm": outcome.update_norm,
                "halvings": halvings,
            }
            raise NonConvergenceError(
                f"Picard iteration failed at lambda={lam} on level {problem.level}", diagnostics
            )
        mid = 0.5 * (lower + lam)
        logger.warning(f"Picard failed at lambda={lam} (update {outcome.update_norm:.2e}); "
                       f"retrying from lambda={mid:.4g}")
        pending.insert(0, mid)
        if last_ok is None:
            state = DiscreteField.zeros(problem.space)
    return HomotopyResult(state, records, halvings)


def dual_norm(problem: LevelProblem) -> float:
    """Riesz surrogate of |f|_(H*(Omega_k)): sqrt(F^T K^-1 F) on the discrete space."""
    load = problem.force_load
    if not np.any(load):
        return 0.0
    riesz = solve_sparse(problem.stiffness, load, f"dual norm, h={problem.h:.4g}")
    return math.sqrt(max(float(load @ riesz), 0.0))


@dataclass
class DualNormReport:
    """|f|_(H*(Omega_k)) for k = 1..K and the weighted supremum |f|_*."""

    values: list[float]
    weights: list[float]

    @property
    def weighted(self) -> list[float]:
        return [v * w for v, w in zip(self.values, self.weights)]

    @property
    def f_star(self) -> float:
        return max(self.weighted, default=0.0)

    @property
    def argmax(self) -> int:
        weighted = self.weighted
        return 1 + int(np.argmax(weighted)) if weighted else 0

    def to_dict(self) -> dict[str, Any]:
        return {"values": self.values, "weights": self.weights, "f_star": self.f_star,
                "argmax": self.argmax}


def f_star(
    force: ForceField,
    spec: DomainSpec,
    ladder: TruncationLadder,
    levels: int,
    h: float,
    order: int = 4,
) -> DualNormReport:
    """|f|_* = sup_k |f|_(H*(Omega_k)) (1 + int_{R0}^{R_k} g^-3)^(-1/2) over k = 1..levels."""
    cumulative = ladder.cumulative_integrals()
    values, weights = [], []
    for k in range(1, levels + 1):
        if force.is_zero:
            values.append(0.0)
        else:
            mesh = mesh_truncation(spec, ladder, k, h, hy=h)
            problem = LevelProblem.from_mesh(mesh, ZeroField(), force, 1.0, order)
            values.append(dual_norm(problem))
        weights.append(1.0 / math.sqrt(1.0 + float(cumulative[k])))
    report = DualNormReport(values, weights)
    logger.debug(f"Dual norms {values}; |f|_* = {report.f_star:.4g}")
    return report


@dataclass
class LevelResult:
    """Converged solution on Omega_l with its Dirichlet profile."""

    level: int
    result: HomotopyResult
    profile: FloatArray
    difference: Optional[float] = None

    @property
    def field(self) -> DiscreteField:
        return self.result.field

    def tail(self, k: int) -> float:
        """int over Omega_l minus Omega_k of |grad v|^2."""
        return float(self.profile[-1] - self.profile[k])

    def to_dict(self) -> dict[str, Any]:
        return {
            "level": self.level,
            "y": [float(y) for y in self.profile],
            "difference": self.difference,
            "iterations": self.result.iterations,
            "energy_residual": self.result.energy_residual,
            "halvings": self.result.halvings,
            "lambda_steps": [r.to_dict() for r in self.result.records],
        }


@dataclass
class ContinuationState:
    """Levels of the invading-domain continuation."""

    levels: list[LevelResult] = field(default_factory=list)
    stopped_early: bool = False

    @property
    def last(self) -> LevelResult:
        return self.levels[-1]

    @property
    def y(self) -> FloatArray:
        return self.last.profile

    @property
    def differences(self) -> list[float]:
        return [lv.difference for lv in self.levels if lv.difference is not None]

    def to_dict(self) -> dict[str, Any]:
        return {
            "levels": [lv.to_dict() for lv in self.levels],
            "y": [float(y) for y in self.y] if self.levels else [],
            "stopped_early": self.stopped_early,
        }


def invade(
    spec: DomainSpec,
    ladder: TruncationLadder,
    extension: VectorField,
    force: ForceField,
    config: SolveConfig,
    levels: Optional[int] = None,
) -> ContinuationState:
    """Solve on Omega_1, Omega_2, ... warm-starting each level from the last.

    The previous solution is extended by zero onto the next mesh and used as
    the start of a direct solve at lam = 1; if that fails the full homotopy
    ladder runs from zero. Stops once the relative L2 difference of
    consecutive levels on Omega_1 drops below ``level_tol``.

    Raises:
        PreconditionError: If the ladder is shorter than the requested levels
        NonConvergenceError: If a level cannot be solved
    """
    top = config.levels if levels is None else levels
    if not 1 <= top <= ladder.K:
        raise PreconditionError(f"invade needs 1 <= levels <= {ladder.K}, got {top}")
    state = ContinuationState()
    previous: Optional[DiscreteField] = None
    for level in range(1, top + 1):
        problem = LevelProblem.build(spec, ladder, level, extension, force, config)
        result: Optional[HomotopyResult] = None
        if previous is not None:
            try:
                result = homotopy_solve(problem, config, previous.prolong(problem.space),
                                        ladder=(1.0,))
            except NumericError as e:
                logger.warning(f"Warm start failed on level {level} ({e}); running the ladder")
        if result is None:
            result = homotopy_solve(problem, config)
        current = result.field
        difference: Optional[float] = None
        if previous is not None:
            R1 = ladder.R(1)
            size = current.l2_norm(x_max=R1)
            gap = current.l2_difference(previous, R1)
            difference = gap / size if size > 0 else gap
        state.levels.append(
            LevelResult(level, result, current.dirichlet_profile(ladder), difference)
        )
        logger.info(
            f"Level {level} done: Dirichlet {current.dirichlet():.6g}"
            + (f", level difference {difference:.3e}" if difference is not None else "")
        )
        previous = current
        if difference is not None and difference < config.level_tol:
            state.stopped_early = level < top
            break
    return state


@dataclass
class EpsilonChoice:
    """Largest candidate epsilon whose Leray-Hopf statistic stays below nu / 4."""

    epsilon: float
    statistics: dict[float, LerayHopfStatistic]
    fallback: bool

    def to_dict(self) -> dict[str, Any]:
        return {
            "epsilon": self.epsilon,
            "fallback": self.fallback,
            "statistics": {str(e): s.to_dict() for e, s in self.statistics.items()},
        }


def choose_epsilon(
    spec: DomainSpec,
    boundary: BoundaryData,
    ladder: TruncationLadder,
    nu: float,
    candidates: list[float],
    trials: int = 24,
    seed: int = 0,
    collar: float = 0.5,
) -> EpsilonChoice:
    """Measure the Leray-Hopf statistic on Omega_1 for each candidate epsilon.

    Falls back to the smallest candidate, with a warning, when none passes.
    """
    if not candidates:
        raise PreconditionError("choose_epsilon needs at least one candidate")
    region = SamplingRegion.truncation(spec, ladder, 1)
    statistics: dict[float, LerayHopfStatistic] = {}
    for epsilon in sorted(candidates, reverse=True):
        extension = assemble_extension(boundary, spec, epsilon=epsilon, collar=collar,
                                       ladder=ladder)
        stat = leray_hopf_ratio(extension, spec, region, trials=trials, epsilon=epsilon, seed=seed)
        statistics[epsilon] = stat
        if stat.max_ratio <= nu / 4.0:
            logger.info(f"Chose epsilon={epsilon}: Leray-Hopf statistic {stat.max_ratio:.4g}")
            return EpsilonChoice(epsilon, statistics, False)
    smallest = min(candidates)
    logger.warning(
        f"No epsilon in {candidates} gives a Leray-Hopf statistic <= nu/4 = {nu / 4:.4g}; "
        f"using {smallest}"
    )
    return EpsilonChoice(smallest, statistics, True)


@dataclass(frozen=True)
class PoiseuilleCase:
    """Channel problem with a known exact perturbation."""

    h: float
    l2_error: float
    iterations: int
    energy_residual: float


@dataclass
class PoiseuilleStudy:
    cases: list[PoiseuilleCase]

    @property
    def orders(self) -> list[float]:
        return [
            math.log(a.l2_error / b.l2_error) / math.log(a.h / b.h)
            for a, b in zip(self.cases, self.cases[1:])
        ]


def poiseuille_benchmark(
    h: float,
    nu: float = 1.0,
    U: float = 1.0,
    H: float = 1.0,
    length: float = 4.0,
    amplitude: float = 0.2,
    error_order: int = 6,
) -> PoiseuilleCase:
    """Solve in the channel (0, length) x (-H, H) with A = Poiseuille + perturbation.

    The Poiseuille flow solves the stationary equations with a constant
    pressure gradient, so the exact perturbation is v = -perturbation; the
    L2 error is measured with a finer Gauss rule.
    """
    profile = OutletProfile(kind="constant", scale=H)
    spec = DomainSpec(profile=profile, R0=length, gamma=1.0)
    ladder = build_ladder(profile, length, 1)
    mesh = mesh_truncation(spec, ladder, 0, h, hy=h)
    perturbation = ChannelPerturbation(amplitude, H, x0=0.25 * length, length=0.5 * length)
    extension = SumField([PoiseuilleField(U, H), perturbation])
    problem = LevelProblem.from_mesh(mesh, extension, ForceField(), nu, order=4)
    config = SolveConfig(nu=nu, homotopy=(1.0,), picard_tol=1e-12, picard_max_iter=100)
    result = homotopy_solve(problem, config)
    error_space = HermiteSpace(mesh, error_order)
    solution = DiscreteField(error_space, result.field.coeffs)
    vel, _ = solution.quadrature_values()
    exact = -perturbation.evaluate(error_space.quadrature_points).reshape(vel.shape)
    diff = vel - exact
    error = math.sqrt(float(np.sum(error_space.weights[..., None] * diff * diff)))
    logger.info(f"Poiseuille benchmark h={h}: L2 error {error:.3e}")
    return PoiseuilleCase(h, error, result.iterations, result.energy_residual)


def poiseuille_convergence(
    sizes: tuple[float, ...] = (0.5, 0.25, 0.125), **kwargs: Any
) -> PoiseuilleStudy:
    """L2 errors of the channel benchmark under mesh refinement."""
    return PoiseuilleStudy([poiseuille_benchmark(h, **kwargs) for h in sizes])


@dataclass
class RunSetup:
    """Everything a run needs before the first solve."""

    spec: DomainSpec
    ladder: TruncationLadder
    boundary: BoundaryData
    force: ForceField
    settings: SolveConfig
    epsilon: float
    choice: Optional[EpsilonChoice] = None

    @classmethod
    def from_config(cls, config: RunConfig, seed: int = 0) -> RunSetup:
        """Validate the domain, build the ladder and fix epsilon.

        Without a configured epsilon the Leray-Hopf selection runs over
        ``verify.epsilons``; zero boundary data takes the largest candidate.
        """
        spec = DomainSpec.from_config(config)
        spec.validate()
        ladder = build_ladder(spec.profile, spec.R0, config.ladder.K)
        boundary = BoundaryData.from_config(config)
        force = ForceField.from_config(config)
        settings = SolveConfig.from_config(config)
        if settings.epsilon is not None:
            return cls(spec, ladder, boundary, force, settings, settings.epsilon)
        if boundary.is_zero:
            return cls(spec, ladder, boundary, force, settings, max(config.verify.epsilons))
        choice = choose_epsilon(spec, boundary, ladder, settings.nu, config.verify.epsilons,
                                trials=config.verify.trials, seed=seed, collar=settings.collar)
        return cls(spec, ladder, boundary, force, settings, choice.epsilon, choice)
