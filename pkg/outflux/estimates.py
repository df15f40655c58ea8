"""Sampled functional inequalities and the Saint-Venant ledger.

Every fitted constant is the maximum of a ratio over explicit trial functions,
so it is a lower bound for the true supremum. Uniformity in k is judged as
bounded variation of the fitted constants across ladder cells.

The recursion for the local Dirichlet integrals y_k reads

    y_k <= c_* (y_(k+1) - y_k) + c_** g(R_k) (y_(k+1) - y_k)^(3/2) + Q_k / 2,
    Q_k = 2 c (1 + int_{R0}^{R_k} g^-3),

and Q is admissible when Q_k / 2 >= c_* (Q_(k+1) - Q_k) + c_** g(R_k) (Q_(k+1) - Q_k)^(3/2).
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Literal, Optional, Sequence

import numpy as np
import numpy.typing as npt
from scipy import optimize

from outflux.config import thread_count
from outflux.exceptions import PreconditionError
from outflux.fields import composite_rule, gauss_rule, graded_rule
from outflux.geometry import TruncationLadder
from outflux.seeding import derive_seed

logger = logging.getLogger(__name__)

FloatArray = npt.NDArray[np.float64]

MIN_TRIALS = 20
STABLE_FACTOR = 1.25
UNIFORM_FACTOR = 2.0
LADYZHENSKAYA = 2.0**0.25
CLAIM_RTOL = 1e-10
DIRECT_RTOL = 1e-8


@dataclass(frozen=True)
class Rectangle:
    """(0, width) x (0, height)."""

    width: float
    height: float

    def dilated(self, factor: float) -> Rectangle:
        return Rectangle(self.width * factor, self.height * factor)


@dataclass(frozen=True)
class HardyTrial:
    """w = s * X(x / W) * Y(y / H).

    For the bottom edge Y = t^p and X = 1 + a cos(2 pi m s); for the whole
    boundary both factors are (4 s (1 - s))^p and X carries the cosine too.
    """

    p: float
    amplitude: float = 0.0
    mode: int = 1
    scale: float = 1.0

    def scaled(self, factor: float) -> HardyTrial:
        return HardyTrial(self.p, self.amplitude, self.mode, self.scale * factor)

    def _wave(self, s: FloatArray, W: float) -> tuple[FloatArray, FloatArray]:
        k = 2.0 * math.pi * self.mode
        wave = self.scale * (1.0 + self.amplitude * np.cos(k * s))
        return wave, -self.scale * self.amplitude * k / W * np.sin(k * s)

    def _bubble(self, s: FloatArray, L: float) -> tuple[FloatArray, FloatArray]:
        base = 4.0 * s * (1.0 - s)
        value = base**self.p
        return value, self.p * base ** (self.p - 1.0) * 4.0 * (1.0 - 2.0 * s) / L


def _two_sided_rule(
    length: float, depth: float, panel: float, order: int
) -> tuple[FloatArray, FloatArray]:
    t, w = graded_rule(0.5 * length, depth=depth, panel=panel, order=order)
    return np.concatenate([t, length - t]), np.concatenate([w, w])


def hardy_ratio(
    region: Rectangle, trial: HardyTrial, subset: Literal["bottom", "all"] = "bottom"
) -> float:
    """int |w|^2 / dist^2(x, subset) divided by int |grad w|^2."""
    W, H = region.width, region.height
    if subset == "bottom":
        x, wx = composite_rule(0.0, W, 16)
        y, wy = graded_rule(H)
        c, dc = trial._wave(x / W, W)
        p = trial.p
        t = y / H
        Y0 = wy @ (t ** (2.0 * p) / y**2)
        Y1 = wy @ ((p * t ** (p - 1.0) / H) ** 2)
        Y2 = wy @ t ** (2.0 * p)
        num = (wx @ (c * c)) * Y0
        den = (wx @ (c * c)) * Y1 + (wx @ (dc * dc)) * Y2
        return float(num / den)
    x, wx = _two_sided_rule(W, 30.0, 0.5, 8)
    y, wy = _two_sided_rule(H, 30.0, 0.5, 8)
    bx, dbx = trial._bubble(x / W, W)
    c, dc = trial._wave(x / W, W)
    X, dX = bx * c, dbx * c + bx * dc
    Y, dY = trial._bubble(y / H, H)
    d = np.minimum(np.minimum(x, W - x)[:, None], np.minimum(y, H - y)[None, :])
    w2 = np.outer(wx, wy)
    num = np.sum(w2 * np.outer(X * X, Y * Y) / d**2)
    den = np.sum(w2 * (np.outer(dX * dX, Y * Y) + np.outer(X * X, dY * dY)))
    return float(num / den)


def _hardy_trials(count: int, subset: str, seed: int) -> list[HardyTrial]:
    lo, hi = (0.55, 1.5) if subset == "bottom" else (0.75, 2.0)
    trials = [HardyTrial(lo)]
    for i in range(1, count):
        rng = np.random.default_rng(derive_seed(seed, i))
        trials.append(
            HardyTrial(
                p=float(lo + (hi - lo) * (i + rng.uniform()) / count),
                amplitude=float(rng.uniform(0.0, 0.5)),
                mode=int(rng.integers(1, 4)),
            )
        )
    return trials


@dataclass(frozen=True)
class InequalityReport:
    """Fitted constant of one inequality with its stability under trial doubling."""

    name: str
    constant: float
    doubled: float
    ratios: tuple[float, ...]
    region: str = ""
    extra: dict[str, float] = field(default_factory=dict)

    @property
    def stable(self) -> bool:
        return self.doubled <= STABLE_FACTOR * self.constant

    def to_dict(self) -> dict[str, Any]:
        return {
            "name": self.name,
            "region": self.region,
            "constant": self.constant,
            "doubled": self.doubled,
            "stable": self.stable,
            "trials": len(self.ratios),
            **self.extra,
        }


def hardy_check(
    region: Rectangle,
    subset: Literal["bottom", "all"] = "bottom",
    trials: int = 24,
    seed: int = 0,
) -> InequalityReport:
    """Fitted Hardy constant for trials vanishing on ``subset`` of the rectangle boundary.

    The ``dilation`` entry is the fitted constant on the rectangle scaled by 2.

    Raises:
        PreconditionError: If fewer than 20 trials are requested
    """
    if trials < MIN_TRIALS:
        raise PreconditionError(f"hardy_check needs at least {MIN_TRIALS} trials")
    family = _hardy_trials(trials, subset, seed)
    ratios = [hardy_ratio(region, t, subset) for t in family]
    more = [hardy_ratio(region, t, subset) for t in _hardy_trials(2 * trials, subset, seed + 1)]
    dilated = max(hardy_ratio(region.dilated(2.0), t, subset) for t in family)
    report = InequalityReport(
        name="hardy",
        constant=max(ratios),
        doubled=max(ratios + more),
        ratios=tuple(ratios),
        region=f"rectangle {region.width}x{region.height} ({subset})",
        extra={"dilation": dilated},
    )
    logger.info(f"Hardy constant ({subset}): {report.constant:.4g}, stable={report.stable}")
    return report


@dataclass(frozen=True)
class CellTrial:
    """u = X(xi) Y(eta) on omega_k with xi = (x1 - R_k) / width and eta = x2 / g(x1).

    Y = sin(m pi (eta + 1) / 2) vanishes on the walls. X is
    sin(n pi xi) + b sin((n + 1) pi xi) when ``vanish_x`` (zero on the
    cross-sections too), otherwise 1 + b cos(n pi xi).
    """

    m: int
    n: int
    b: float = 0.0
    vanish_x: bool = True
    scale: float = 1.0

    def scaled(self, factor: float) -> CellTrial:
        return CellTrial(self.m, self.n, self.b, self.vanish_x, self.scale * factor)

    def x_factor(self, xi: FloatArray) -> tuple[FloatArray, FloatArray]:
        n = self.n
        if self.vanish_x:
            value = np.sin(n * math.pi * xi) + self.b * np.sin((n + 1) * math.pi * xi)
            slope = n * math.pi * np.cos(n * math.pi * xi) + self.b * (n + 1) * math.pi * np.cos(
                (n + 1) * math.pi * xi
            )
            return value, slope
        return 1.0 + self.b * np.cos(n * math.pi * xi), -self.b * n * math.pi * np.sin(
            n * math.pi * xi
        )

    def y_factor(self, eta: FloatArray) -> tuple[FloatArray, FloatArray]:
        k = 0.5 * self.m * math.pi
        return np.sin(k * (eta + 1.0)), k * np.cos(k * (eta + 1.0))


@dataclass
class CellQuadrature:
    """Tensor rule on omega_k in the coordinates (xi, eta)."""

    xi: FloatArray
    eta: FloatArray
    g: FloatArray
    dg: FloatArray
    weights: FloatArray
    width: float

    @classmethod
    def build(cls, ladder: TruncationLadder, k: int, panels: int = 8, order: int = 8,
              eta_order: int = 32) -> CellQuadrature:
        a, b = ladder.cell(k)
        x1, wx = composite_rule(a, b, panels, order)
        e, we = gauss_rule(eta_order)
        eta = 2.0 * e - 1.0
        g = ladder.profile.value(x1)
        dg = ladder.profile.derivative(x1)
        weights = np.outer(wx * g, 2.0 * we)
        return cls((x1 - a) / (b - a), eta, g, dg, weights, b - a)

    def sample(self, trial: CellTrial) -> tuple[FloatArray, FloatArray]:
        """u and |grad u|^2 on the (x1, eta) grid."""
        X, dX = trial.x_factor(self.xi)
        Y, dY = trial.y_factor(self.eta)
        s = trial.scale
        u = s * np.outer(X, Y)
        du1 = s * (np.outer(dX / self.width, Y)
                   - np.outer(X * self.dg / self.g, self.eta * dY))
        du2 = s * np.outer(X / self.g, dY)
        return u, du1 * du1 + du2 * du2


def poincare_ratio(quad: CellQuadrature, trial: CellTrial, g_ref: float) -> float:
    """int u^2 / (g(R_k)^2 int |grad u|^2)."""
    u, grad2 = quad.sample(trial)
    return float(np.sum(quad.weights * u * u) / (g_ref**2 * np.sum(quad.weights * grad2)))


def l4_ratios(quad: CellQuadrature, trial: CellTrial, g_ref: float) -> tuple[float, float]:
    """Direct |u|_4 / (g^(1/2) |grad u|) and the chained bound.

    The chained bound is 2^(1/4) (|u| / (g |grad u|))^(1/2).
    """
    u, grad2 = quad.sample(trial)
    l2 = math.sqrt(float(np.sum(quad.weights * u * u)))
    l4 = float(np.sum(quad.weights * u**4)) ** 0.25
    grad = math.sqrt(float(np.sum(quad.weights * grad2)))
    direct = l4 / (math.sqrt(g_ref) * grad)
    chained = LADYZHENSKAYA * math.sqrt(l2 / (g_ref * grad))
    return direct, chained


def _cell_trials(count: int, seed: int, vanish_only: bool) -> list[CellTrial]:
    trials = [CellTrial(1, 1, 0.0, True)]
    for i in range(1, count):
        rng = np.random.default_rng(derive_seed(seed, i))
        vanish = vanish_only or bool(rng.uniform() < 0.5)
        trials.append(
            CellTrial(
                m=int(rng.integers(1, 4)),
                n=int(rng.integers(1, 4)),
                b=float(rng.uniform(-0.5, 0.5)),
                vanish_x=vanish,
            )
        )
    return trials


def rectangle_rayleigh(width: float, height: float) -> float:
    """1 / (pi^2 (1/w^2 + 1/h^2)), the Rayleigh quotient of the first Dirichlet mode."""
    return 1.0 / (math.pi**2 * (1.0 / width**2 + 1.0 / height**2))


def poincare_check(
    ladder: TruncationLadder, k: int, trials: int = 24, seed: int = 0
) -> InequalityReport:
    """Fitted C_P in int u^2 <= C_P g(R_k)^2 int |grad u|^2 for u vanishing on the walls of omega_k.

    The first trial is the product sine vanishing on all of the boundary; its
    ratio is reported as ``first_mode``.

    Raises:
        PreconditionError: If fewer than 20 trials are requested
    """
    if trials < MIN_TRIALS:
        raise PreconditionError(f"poincare_check needs at least {MIN_TRIALS} trials")
    quad = CellQuadrature.build(ladder, k)
    g_ref = ladder.g_at(k)
    ratios = [poincare_ratio(quad, t, g_ref) for t in _cell_trials(trials, seed, False)]
    more = [poincare_ratio(quad, t, g_ref) for t in _cell_trials(2 * trials, seed + 1, False)]
    report = InequalityReport(
        name="poincare",
        constant=max(ratios),
        doubled=max(ratios + more),
        ratios=tuple(ratios),
        region=f"omega_{k}",
        extra={"first_mode": ratios[0]},
    )
    logger.debug(f"Poincare constant on omega_{k}: {report.constant:.4g}")
    return report


def l4_check(
    ladder: TruncationLadder, k: int, trials: int = 24, seed: int = 0
) -> InequalityReport:
    """Fitted C_4 in |u|_4 <= C_4 g(R_k)^(1/2) |grad u| for u in H^1_0(omega_k).

    ``chain_ok`` is 1 when the chained Ladyzhenskaya bound dominates the
    direct ratio at every trial.

    Raises:
        PreconditionError: If fewer than 20 trials are requested
    """
    if trials < MIN_TRIALS:
        raise PreconditionError(f"l4_check needs at least {MIN_TRIALS} trials")
    quad = CellQuadrature.build(ladder, k)
    g_ref = ladder.g_at(k)
    pairs = [l4_ratios(quad, t, g_ref) for t in _cell_trials(trials, seed, True)]
    more = [l4_ratios(quad, t, g_ref)[0] for t in _cell_trials(2 * trials, seed + 1, True)]
    ratios = [p[0] for p in pairs]
    chain_ok = all(direct <= chained * (1 + 1e-12) for direct, chained in pairs)
    report = InequalityReport(
        name="l4",
        constant=max(ratios),
        doubled=max(ratios + more),
        ratios=tuple(ratios),
        region=f"omega_{k}",
        extra={"chain_ok": float(chain_ok), "chained_max": max(p[1] for p in pairs)},
    )
    logger.debug(f"L4 constant on omega_{k}: {report.constant:.4g}")
    return report


@dataclass
class UniformityTable:
    """Per-cell fitted constants of one inequality."""

    name: str
    reports: dict[int, InequalityReport]

    @property
    def constants(self) -> dict[int, float]:
        return {k: r.constant for k, r in sorted(self.reports.items())}

    @property
    def spread(self) -> float:
        values = list(self.constants.values())
        return max(values) / min(values) if values and min(values) > 0 else 1.0

    @property
    def uniform(self) -> bool:
        return self.spread <= UNIFORM_FACTOR

    def to_dict(self) -> dict[str, Any]:
        return {
            "name": self.name,
            "per_k": {str(k): v for k, v in self.constants.items()},
            "spread": self.spread,
            "uniform": self.uniform,
        }


def uniformity_table(
    name: Literal["poincare", "l4"],
    ladder: TruncationLadder,
    ks: Sequence[int],
    trials: int = 24,
    seed: int = 0,
    workers: Optional[int] = None,
) -> UniformityTable:
    """Run one cell inequality over several k in parallel."""
    check = poincare_check if name == "poincare" else l4_check
    with ThreadPoolExecutor(max_workers=workers or thread_count()) as pool:
        reports = list(pool.map(lambda k: check(ladder, k, trials, seed), ks))
    table = UniformityTable(name, dict(zip(ks, reports)))
    logger.info(f"{name} constants over k={list(ks)}: spread {table.spread:.3f}")
    return table


@dataclass
class QSequence:
    """Q_k = 2 c (1 + I_k) with I_k = int_{R0}^{R_k} g^-3."""

    c: float
    cumulative: FloatArray
    values: FloatArray

    @property
    def increments(self) -> FloatArray:
        return np.diff(self.values)


def q_sequence(
    a_norm: float, f_star: float, ladder: TruncationLadder, c_fit: float = 1.0
) -> QSequence:
    """Q_k with c = c_fit (|a|^2 + |a|^4 + |f|_*^2)."""
    c = c_fit * (a_norm**2 + a_norm**4 + f_star**2)
    cumulative = ladder.cumulative_integrals()
    return QSequence(c, cumulative, 2.0 * c * (1.0 + cumulative))


def _recursion_rhs(
    increment: FloatArray, c_star: float, c_2star: float, g: FloatArray
) -> FloatArray:
    return c_star * increment + c_2star * g * np.clip(increment, 0.0, None) ** 1.5


@dataclass
class AdmissibilityReport:
    """Both sides of the admissibility inequality for k = 0..K-1."""

    lhs: FloatArray
    rhs: FloatArray
    cell_ratios: FloatArray

    @property
    def holds(self) -> list[bool]:
        return [bool(hi <= lo * (1 + 1e-12)) for lo, hi in zip(self.lhs, self.rhs)]

    @property
    def ratios(self) -> FloatArray:
        return np.where(self.lhs > 0, self.rhs / np.where(self.lhs > 0, self.lhs, 1.0), np.inf)

    @property
    def k0(self) -> Optional[int]:
        """Smallest k from which the inequality holds up to the end of the ladder."""
        holds = self.holds
        if not holds or not holds[-1]:
            return None
        k = len(holds) - 1
        while k > 0 and holds[k - 1]:
            k -= 1
        return k

    def to_dict(self) -> dict[str, Any]:
        return {
            "k0": self.k0,
            "holds": self.holds,
            "ratios": [float(r) for r in self.ratios],
            "cell_ratios": [float(r) for r in self.cell_ratios],
        }


def admissibility(
    q: QSequence, ladder: TruncationLadder, c_star: float, c_2star: float
) -> AdmissibilityReport:
    """Q_k / 2 against c_* dQ_k + c_** g(R_k) dQ_k^(3/2).

    ``cell_ratios`` holds int_{R_(k-1)}^{R_k} g^-3 / (1 + I_k) for k = 1..K; the
    admissibility ratio tends to 0 with it.
    """
    g = np.array([ladder.g_at(k) for k in range(ladder.K)])
    lhs = 0.5 * q.values[:-1]
    rhs = _recursion_rhs(q.increments, c_star, c_2star, g)
    cells = np.diff(q.cumulative) / (1.0 + q.cumulative[1:])
    report = AdmissibilityReport(lhs, rhs, cells)
    if report.k0 is None:
        logger.warning(
            f"Admissibility fails at the end of the ladder (c_*={c_star}, c_**={c_2star}); "
            "the constants are too aggressive"
        )
    return report


@dataclass
class ClaimReport:
    """Backward induction over k = N-1..0 for y_k <= Q_k.

    ``implied[k]`` is True when the induction reaches k: y_N <= Q_N starts it
    and every step from k + 1 down to k has the recursion and admissibility,
    which force y_k <= Q_k since F(t) = c_* t + c_** g t^(3/2) is increasing.
    The verdict is True only when the chain reaches k = 0. ``holds`` is the
    direct comparison, kept apart as a cross-check; ``disagreements`` lists
    indices the induction reached where the direct comparison fails.
    ``verdict`` is None when a hypothesis fails.
    """

    holds: list[bool] = field(default_factory=list)
    implied: list[bool] = field(default_factory=list)
    recursion: list[bool] = field(default_factory=list)
    admissible: list[bool] = field(default_factory=list)
    hypothesis_failures: list[str] = field(default_factory=list)

    @property
    def verdict(self) -> Optional[bool]:
        if self.hypothesis_failures:
            return None
        return all(self.implied) and not self.disagreements

    @property
    def chain_break(self) -> Optional[int]:
        """Highest k the induction cannot reach."""
        for k in range(len(self.implied) - 1, -1, -1):
            if not self.implied[k]:
                return k
        return None

    @property
    def disagreements(self) -> list[int]:
        return [k for k, (i, h) in enumerate(zip(self.implied, self.holds)) if i and not h]

    @property
    def first_violation(self) -> Optional[int]:
        """Highest k with y_k > Q_k, the first one met walking down from N."""
        for k in range(len(self.holds) - 1, -1, -1):
            if not self.holds[k]:
                return k
        return None

    def to_dict(self) -> dict[str, Any]:
        return {
            "verdict": self.verdict,
            "chain_break": self.chain_break,
            "first_violation": self.first_violation,
            "disagreements": self.disagreements,
            "hypothesis_failures": self.hypothesis_failures,
            "implied": self.implied,
            "recursion": self.recursion,
            "admissible": self.admissible,
        }


def saint_venant_claim(
    y: Sequence[float],
    Q: Sequence[float],
    c_star: float,
    c_2star: float,
    gR: Sequence[float],
) -> ClaimReport:
    """Check y_k <= Q_k for k < N by the backward induction of the Saint-Venant argument.

    Hypotheses: equal lengths, y and Q nonnegative, y nondecreasing and
    y_N <= Q_N. When one fails the report carries the failures and no verdict.
    """
    report = ClaimReport()
    n = len(y)
    if n == 0 or len(Q) != n or len(gR) != n:
        report.hypothesis_failures.append("y, Q and g(R_k) need the same nonzero length")
        return report
    ya, Qa, ga = np.asarray(y, float), np.asarray(Q, float), np.asarray(gR, float)
    if np.any(ya < 0) or np.any(Qa < 0) or c_star < 0 or c_2star < 0:
        report.hypothesis_failures.append("y, Q and the constants must be nonnegative")
    if np.any(np.diff(ya) < 0):
        report.hypothesis_failures.append("y must be nondecreasing")
    if ya[-1] > Qa[-1]:
        report.hypothesis_failures.append(f"y_N = {ya[-1]:.6g} exceeds Q_N = {Qa[-1]:.6g}")
    if report.hypothesis_failures:
        logger.warning(f"Saint-Venant hypotheses fail: {report.hypothesis_failures}")
        return report
    recursion = ya[:-1] <= (
        _recursion_rhs(np.diff(ya), c_star, c_2star, ga[:-1]) + 0.5 * Qa[:-1]
    ) * (1 + CLAIM_RTOL)
    admissible = 0.5 * Qa[:-1] * (1 + CLAIM_RTOL) >= _recursion_rhs(
        np.diff(Qa), c_star, c_2star, ga[:-1]
    )
    implied = [True] * n
    for k in range(n - 2, -1, -1):
        implied[k] = bool(implied[k + 1] and recursion[k] and admissible[k])
    report.implied = implied
    report.recursion = [bool(r) for r in recursion]
    report.admissible = [bool(a) for a in admissible]
    report.holds = [bool(v <= q * (1 + DIRECT_RTOL)) for v, q in zip(ya, Qa)]
    if report.disagreements:
        logger.error(f"Induction reaches k={report.disagreements} where y_k > Q_k")
    logger.debug(
        f"Saint-Venant verdict {report.verdict}, chain break {report.chain_break}, "
        f"first violation {report.first_violation}"
    )
    return report


def equality_sequence(
    Q: Sequence[float], c_star: float, c_2star: float, gR: Sequence[float], y_top: float
) -> FloatArray:
    """Largest nondecreasing y with y_N = y_top satisfying the recursion, walking down from N.

    Where the recursion can hold with equality below y_(k+1) the root is
    taken, otherwise y_k = y_(k+1).
    """
    n = len(Q)
    y = np.zeros(n)
    y[-1] = y_top
    for k in range(n - 2, -1, -1):
        upper, half, g = y[k + 1], 0.5 * Q[k], gR[k]

        def excess(v: float) -> float:
            d = upper - v
            return v - c_star * d - c_2star * g * max(d, 0.0) ** 1.5 - half

        if excess(upper) <= 0.0:
            y[k] = upper
        else:
            y[k] = optimize.brentq(excess, 0.0, upper, xtol=1e-14, rtol=1e-14)
    return y


@dataclass
class GrowthReport:
    """c_hat = max_k y_k / (1 + I_k) per profile."""

    constants: dict[str, float]
    saturated: dict[str, bool]

    @property
    def spread(self) -> float:
        values = [v for v in self.constants.values() if v > 0]
        return max(values) / min(values) if values else 1.0

    @property
    def stable(self) -> bool:
        return self.spread <= UNIFORM_FACTOR

    def to_dict(self) -> dict[str, Any]:
        return {"c_hat": self.constants, "saturated": self.saturated, "spread": self.spread,
                "stable": self.stable}


def profile_saturated(y: FloatArray, fraction: float = 0.05) -> bool:
    """Increments decrease and the last one is below ``fraction`` of max y."""
    inc = np.diff(np.asarray(y, float))
    if inc.size == 0 or float(np.max(y)) == 0.0:
        return True
    decreasing = bool(np.all(np.diff(inc) <= 1e-12 * float(np.max(y))))
    return decreasing and float(inc[-1]) < fraction * float(np.max(y))


def growth_bound_check(profiles: dict[str, FloatArray], ladder: TruncationLadder) -> GrowthReport:
    """Fit c_hat for each labelled profile y_0..y_l and compare them."""
    cumulative = ladder.cumulative_integrals()
    constants: dict[str, float] = {}
    saturated: dict[str, bool] = {}
    for label, y in profiles.items():
        y = np.asarray(y, float)
        constants[label] = float(np.max(y / (1.0 + cumulative[: y.size]), initial=0.0))
        saturated[label] = profile_saturated(y)
    report = GrowthReport(constants, saturated)
    logger.info(f"Growth constants {constants}: stable={report.stable}")
    return report


@dataclass(frozen=True)
class MeasuredConstants:
    """Inequality constants measured by the toolkit."""

    nu: float
    bogovskii: float
    poincare: float
    l4: float
    cutoff: float
    leray_hopf: float
    quadratic: float
    mu: Optional[float] = None


@dataclass(frozen=True)
class RecursionConstants:
    """c_* and c_** from measured constants; invalid unless the denominator is positive."""

    c_star: float
    c_2star: float
    denominator: float

    @property
    def valid(self) -> bool:
        return self.denominator > 0

    def to_dict(self) -> dict[str, Any]:
        return {"c_star": self.c_star, "c_2star": self.c_2star,
                "denominator": self.denominator, "valid": self.valid}


def fit_recursion_constants(measured: MeasuredConstants) -> RecursionConstants:
    """Chain the measured constants into c_* and c_**.

    With C_U = 1 + C_theta sqrt(C_P) (1 + C_B) bounding |grad U_k| by the
    local Dirichlet norm and D = nu - LH - mu C_U / 2:

        c_*  = (nu C_U + sqrt(q) C_U (2 + C_U) + mu C_U / 2) / D
        c_** = C_4^2 C_U (1 + C_U) / D

    where LH is the Leray-Hopf statistic, q the quadratic-form statistic and
    mu defaults to nu / 4.
    """
    nu = measured.nu
    mu = nu / 4.0 if measured.mu is None else measured.mu
    cu = 1.0 + measured.cutoff * math.sqrt(measured.poincare) * (1.0 + measured.bogovskii)
    denominator = nu - measured.leray_hopf - 0.5 * mu * cu
    if denominator <= 0:
        logger.warning(
            f"Recursion denominator {denominator:.4g} <= 0: viscosity does not absorb the "
            "extension; decrease epsilon or mu"
        )
        return RecursionConstants(math.inf, math.inf, denominator)
    c_star = (nu * cu + math.sqrt(measured.quadratic) * cu * (2.0 + cu) + 0.5 * mu * cu)
    c_2star = measured.l4**2 * cu * (1.0 + cu)
    return RecursionConstants(c_star / denominator, c_2star / denominator, denominator)


@dataclass
class EstimateLedger:
    """Dirichlet profile, Q sequence, fitted constants and verdicts."""

    y: FloatArray
    Q: FloatArray
    c: float
    constants: RecursionConstants
    verdicts: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if np.any(np.diff(self.y) < -1e-12 * max(1.0, float(np.max(self.y, initial=0.0)))):
            raise PreconditionError("ledger y must be nondecreasing")
        if np.any(np.diff(self.Q) < 0):
            raise PreconditionError("ledger Q must be nondecreasing")

    def to_dict(self) -> dict[str, Any]:
        return {
            "y": [float(v) for v in self.y],
            "Q": [float(v) for v in self.Q],
            "c": self.c,
            "constants": self.constants.to_dict(),
            "verdicts": self.verdicts,
        }
