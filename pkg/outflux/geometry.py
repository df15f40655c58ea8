"""Domain geometry: outlet profile, holes, truncation ladder and point classification.

The domain is symmetric about the x1-axis::

    Omega = {x1 >= x_left, |x2| < g(x1)} minus the closures of the holes G_1..G_N

Its bounded part Omega_0 is the piece with x1 < R0; the outlet continues to the
right. The outlet is cut into cells omega_k = {R_k < x1 < R_(k+1)} whose radii
follow R_(k+1) = R_k + g(R_k) / (2 L_eff).
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field
from functools import lru_cache
from typing import TYPE_CHECKING, Literal, Optional, Union

import numpy as np
import numpy.typing as npt
from scipy import integrate

from outflux.exceptions import (
    GeometryError,
    PreconditionError,
    ProfileInvalidError,
    QuadratureError,
)

if TYPE_CHECKING:
    from outflux.config import RunConfig

logger = logging.getLogger(__name__)

FloatArray = npt.NDArray[np.float64]
ArrayLike = Union[float, FloatArray]

DEFAULT_RTOL = 1e-10
BOUNDARY_TOL = 1e-9
TAIL_STEPS = 64
GROWTH_FACTOR = 109.0


@dataclass(frozen=True)
class ProfileBounds:
    """Sampled regularity bounds of an outlet profile."""

    lipschitz: float
    sup_derivative: float
    sup_g_second: float
    g_min: float


@dataclass(frozen=True)
class OutletProfile:
    """Outlet half-width g(t).

    ``constant``: g = scale. ``power``: g = scale * (1 + t) ** alpha, defined for t > -1.
    """

    kind: Literal["constant", "power"] = "constant"
    alpha: float = 0.0
    scale: float = 1.0
    R_star: float = 0.0
    lipschitz: Optional[float] = None

    def _base(self, t: FloatArray) -> FloatArray:
        base = 1.0 + t
        if np.any(base <= 0):
            raise ProfileInvalidError(f"power profile evaluated at t <= -1 (min t={t.min()})")
        return base

    def value(self, t: ArrayLike) -> FloatArray:
        t = np.asarray(t, dtype=float)
        if self.kind == "constant":
            return np.full_like(t, self.scale)
        return self.scale * self._base(t) ** self.alpha

    def derivative(self, t: ArrayLike) -> FloatArray:
        t = np.asarray(t, dtype=float)
        if self.kind == "constant":
            return np.zeros_like(t)
        return self.scale * self.alpha * self._base(t) ** (self.alpha - 1.0)

    def second_derivative(self, t: ArrayLike) -> FloatArray:
        t = np.asarray(t, dtype=float)
        if self.kind == "constant":
            return np.zeros_like(t)
        a = self.alpha
        return self.scale * a * (a - 1.0) * self._base(t) ** (a - 2.0)

    def __call__(self, t: ArrayLike) -> FloatArray:
        return self.value(t)

    def estimate_lipschitz(self, t_min: Optional[float] = None, samples: int = 4001) -> float:
        """Numeric sup of |g'| on a geometric grid starting at t_min (default R_star)."""
        if self.lipschitz is not None:
            return self.lipschitz
        start = self.R_star if t_min is None else t_min
        span = 1e3 * max(1.0, float(self.value(start)))
        grid = start + np.expm1(np.linspace(0.0, math.log1p(span), samples))
        return float(np.max(np.abs(self.derivative(grid))))

    def validate(self, t_min: float, t_max: float, samples: int = 2001) -> ProfileBounds:
        """Check positivity, finiteness and the Lipschitz bound on [t_min, t_max].

        Raises:
            ProfileInvalidError: If g is nonpositive, nonfinite or violates the Lipschitz check
        """
        grid = np.linspace(t_min, t_max, samples)
        g = self.value(grid)
        if not np.all(np.isfinite(g)) or np.any(g <= 0):
            raise ProfileInvalidError(f"g must be positive and finite on [{t_min}, {t_max}]")
        dg = self.derivative(grid)
        gg2 = g * self.second_derivative(grid)
        if not (np.all(np.isfinite(dg)) and np.all(np.isfinite(gg2))):
            raise ProfileInvalidError("|g'| or |g g''| is not finite on the sampled range")
        lipschitz = max(self.estimate_lipschitz(t_min), float(np.max(np.abs(dg))))
        rng = np.random.default_rng(0)
        a = rng.uniform(t_min, t_max, samples)
        b = rng.uniform(t_min, t_max, samples)
        jump = np.abs(self.value(a) - self.value(b))
        if np.any(jump > lipschitz * np.abs(a - b) * (1.0 + 1e-9) + 1e-14):
            raise ProfileInvalidError(f"Lipschitz check failed for L={lipschitz}")
        return ProfileBounds(
            lipschitz=lipschitz,
            sup_derivative=float(np.max(np.abs(dg))),
            sup_g_second=float(np.max(np.abs(gg2))),
            g_min=float(g.min()),
        )


@dataclass(frozen=True)
class Hole:
    """Ellipse with semi-axes (semi_x, semi_y) centered at (center, center_y)."""

    center: float
    semi_x: float
    semi_y: float
    center_y: float = 0.0

    def rho(self, x1: ArrayLike, x2: ArrayLike) -> FloatArray:
        u = (np.asarray(x1, dtype=float) - self.center) / self.semi_x
        w = (np.asarray(x2, dtype=float) - self.center_y) / self.semi_y
        return np.sqrt(u * u + w * w)

    def contains(self, x1: ArrayLike, x2: ArrayLike) -> npt.NDArray[np.bool_]:
        return self.rho(x1, x2) < 1.0

    def point(self, theta: ArrayLike) -> FloatArray:
        theta = np.asarray(theta, dtype=float)
        x1 = self.center + self.semi_x * np.cos(theta)
        x2 = self.center_y + self.semi_y * np.sin(theta)
        return np.stack([x1, x2], axis=-1)

    def polyline(self, n: int = 512) -> FloatArray:
        return self.point(np.linspace(0.0, 2.0 * np.pi, n, endpoint=False))

    @property
    def x_min(self) -> float:
        return self.center - self.semi_x

    @property
    def x_max(self) -> float:
        return self.center + self.semi_x

    @property
    def perimeter(self) -> float:
        a, b = self.semi_x, self.semi_y
        value, _ = integrate.quad(
            lambda t: math.hypot(a * math.sin(t), b * math.cos(t)), 0.0, 2.0 * math.pi
        )
        return float(value)

    @property
    def size(self) -> float:
        return max(self.semi_x, self.semi_y)


def _crosses_axis(points: FloatArray) -> bool:
    return bool(points[:, 1].min() < 0.0 < points[:, 1].max())


@dataclass(frozen=True)
class DomainSpec:
    """Symmetric domain with holes in its bounded part and one outlet."""

    profile: OutletProfile
    R0: float
    gamma: float
    outlet: Literal["in", "out"] = "in"
    x_left: float = 0.0
    holes: tuple[Hole, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "holes", tuple(sorted(self.holes, key=lambda h: h.center)))

    @classmethod
    def from_config(cls, config: RunConfig) -> DomainSpec:
        profile = OutletProfile(
            kind=config.profile.kind,
            alpha=config.profile.alpha,
            scale=config.profile.scale,
            R_star=config.r_star,
            lipschitz=config.profile.lipschitz,
        )
        holes = tuple(
            Hole(center=h.center, semi_x=h.axes[0], semi_y=h.axes[1]) for h in config.holes
        )
        return cls(
            profile=profile,
            R0=config.r0,
            gamma=config.gamma,
            outlet=config.outlet,
            x_left=config.x_left,
            holes=holes,
        )

    @property
    def hole_count(self) -> int:
        return len(self.holes)

    @property
    def last_abscissa(self) -> float:
        """Axis abscissa X_N of the hole nearest the outlet (x_left without holes)."""
        return self.holes[-1].center if self.holes else self.x_left

    @property
    def components(self) -> list[str]:
        return ["outer"] + [f"hole{i}" for i in range(1, self.hole_count + 1)]

    def wall(self, x1: ArrayLike) -> FloatArray:
        return self.profile.value(x1)

    def contains(self, points: FloatArray) -> npt.NDArray[np.bool_]:
        """Open-domain membership, evaluated with |x2| so it is mirror-exact."""
        x1 = points[:, 0]
        y = np.abs(points[:, 1])
        inside = x1 > self.x_left
        g = np.zeros_like(x1)
        g[inside] = self.wall(x1[inside])
        inside &= y < g
        for hole in self.holes:
            inside &= ~hole.contains(x1, y)
        return inside

    def wall_clearance(self, hole: Hole) -> float:
        pts = hole.polyline(720)
        return float(np.min(self.wall(pts[:, 0]) - np.abs(pts[:, 1])))

    def hole_clearance(self, index: int) -> float:
        """Smallest gap between hole ``index`` (1-based) and every other boundary part."""
        hole = self.holes[index - 1]
        gaps = [self.wall_clearance(hole), hole.x_min - self.x_left, self.R0 - hole.x_max]
        if index > 1:
            gaps.append(hole.x_min - self.holes[index - 2].x_max)
        if index < self.hole_count:
            gaps.append(self.holes[index].x_min - hole.x_max)
        return float(min(gaps))

    def boundary_distance(self, points: FloatArray) -> FloatArray:
        """Cheap lower estimate of the distance to the boundary of Omega."""
        x1 = points[:, 0]
        y = np.abs(points[:, 1])
        xs = np.maximum(x1, self.x_left)
        slope = np.sqrt(1.0 + self.profile.derivative(xs) ** 2)
        dist = np.minimum((self.wall(xs) - y) / slope, x1 - self.x_left)
        for hole in self.holes:
            dist = np.minimum(dist, (hole.rho(x1, y) - 1.0) * min(hole.semi_x, hole.semi_y))
        return dist

    def validate(self) -> None:
        """Assert symmetry, axis crossings, containment and the drain-curve crossing.

        Raises:
            GeometryError: If any geometric hypothesis fails
            ProfileInvalidError: If g is invalid on the core
        """
        if self.R0 < self.profile.R_star:
            raise GeometryError(f"R0={self.R0} must be >= R_star={self.profile.R_star}")
        if self.R0 <= self.x_left or self.profile.R_star < self.x_left:
            raise GeometryError("x_left must lie left of R_star and R0")
        self.profile.validate(self.x_left, self.R0)
        left_wall = np.stack(
            [np.full(64, self.x_left), np.linspace(-1.0, 1.0, 64) * float(self.wall(self.x_left))],
            axis=1,
        )
        if not _crosses_axis(left_wall):
            raise GeometryError("outer boundary does not cross the x1-axis")
        for i, hole in enumerate(self.holes, start=1):
            if hole.center_y != 0.0:
                raise GeometryError(f"hole {i} is not symmetric about the x1-axis")
            if not _crosses_axis(hole.polyline()):
                raise GeometryError(f"hole {i} does not cross the x1-axis")
            if hole.x_min <= self.x_left or hole.x_max >= self.R0:
                raise GeometryError(f"hole {i} is not contained in the core x_left < x1 < R0")
            if self.wall_clearance(hole) <= 0.0:
                raise GeometryError(f"hole {i} touches the outer wall")
        for i in range(1, self.hole_count):
            if self.holes[i].x_min <= self.holes[i - 1].x_max:
                raise GeometryError(f"holes {i} and {i + 1} overlap")
        if self.holes:
            crossing = self.gamma / (self.gamma + 1.0) * float(self.wall(self.last_abscissa))
            if crossing >= self.holes[-1].semi_y:
                raise GeometryError(
                    f"curve x2 = gamma/(gamma+1) g(x1) does not cross hole {self.hole_count} "
                    f"({crossing:.4g} >= {self.holes[-1].semi_y:.4g}); decrease gamma"
                )
        logger.debug(f"Domain validated: {self.hole_count} holes, R0={self.R0}")


@dataclass(frozen=True)
class TruncationLadder:
    """Radii R_0 < R_1 < ... < R_K of the outlet cells."""

    profile: OutletProfile
    radii: tuple[float, ...]
    L_eff: float

    @property
    def K(self) -> int:
        return len(self.radii) - 1

    def R(self, k: int) -> float:
        return self.radii[k]

    def g_at(self, k: int) -> float:
        return float(self.profile.value(self.radii[k]))

    def step(self, k: int) -> float:
        return self.radii[k + 1] - self.radii[k]

    def cell(self, k: int) -> tuple[float, float]:
        return self.radii[k], self.radii[k + 1]

    def index_of(self, x1: float) -> int:
        """-1 left of R_0, k inside [R_k, R_(k+1)), K at or beyond R_K."""
        if x1 < self.radii[0]:
            return -1
        return int(min(np.searchsorted(self.radii, x1, side="right") - 1, self.K))

    def sandwich(self, k: int, samples: int = 100) -> tuple[float, float]:
        """Min and max of g(t)/g(R_k) over sampled t in [R_k, R_(k+1)]."""
        t = np.linspace(self.radii[k], self.radii[k + 1], samples)
        ratio = self.profile.value(t) / self.g_at(k)
        return float(ratio.min()), float(ratio.max())

    def cumulative_integrals(self, rtol: float = DEFAULT_RTOL) -> FloatArray:
        """I_k = int_{R_0}^{R_k} g^-3 for k = 0..K, summed cell by cell."""
        cells = [
            integral_g_minus3(self.profile, a, b, rtol=rtol, classify=False).value
            for a, b in zip(self.radii, self.radii[1:])
        ]
        return np.concatenate(([0.0], np.cumsum(cells)))


def _step_radii(profile: OutletProfile, R0: float, K: int, L_eff: float) -> list[float]:
    radii = [float(R0)]
    for _ in range(K):
        g = float(profile.value(radii[-1]))
        if not (math.isfinite(g) and g > 0):
            raise ProfileInvalidError(f"g({radii[-1]}) = {g} is not positive")
        radii.append(radii[-1] + g / (2.0 * L_eff))
    return radii


def build_ladder(
    profile: OutletProfile, R0: float, K: int, lipschitz: Optional[float] = None
) -> TruncationLadder:
    """Build the truncation ladder with L_eff = max(L, 1/2).

    Args:
        profile: Outlet profile
        R0: First radius, at least R_star
        K: Number of cells
        lipschitz: Lipschitz constant; estimated from g' when omitted

    Returns:
        TruncationLadder with K+1 radii

    Raises:
        PreconditionError: If R0 < R_star or K < 1
        ProfileInvalidError: If g is nonpositive or the sandwich bounds fail
    """
    if R0 < profile.R_star or K < 1:
        raise PreconditionError(f"build_ladder needs R0 >= R_star and K >= 1 (R0={R0}, K={K})")
    L = profile.estimate_lipschitz(profile.R_star) if lipschitz is None else lipschitz
    L_eff = max(L, 0.5)
    ladder = TruncationLadder(profile=profile, radii=tuple(_step_radii(profile, R0, K, L_eff)),
                              L_eff=L_eff)
    for k in range(K):
        lo, hi = ladder.sandwich(k)
        if lo < 0.5 - 1e-12 or hi > 1.5 + 1e-12:
            raise ProfileInvalidError(
                f"sandwich bound fails on cell {k}: g/g(R_k) in [{lo:.4f}, {hi:.4f}]"
            )
    logger.info(f"Built ladder K={K} from R0={R0}: R_K={ladder.radii[-1]:.6g}, L_eff={L_eff:.4g}")
    return ladder


@dataclass(frozen=True)
class GIntegral:
    """Value of int_a^b g^-3 with its error estimate and the outlet case."""

    value: float
    error: float
    case: Optional[Literal["i", "ii"]] = None
    tail_exponent: Optional[float] = None


def _quad(func: object, a: float, b: float, rtol: float) -> tuple[float, float]:
    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        try:
            result = integrate.quad(func, a, b, epsabs=0.0, epsrel=rtol, limit=400,
                                    full_output=1)
        except integrate.IntegrationWarning as e:
            raise QuadratureError(f"quadrature on [{a}, {b}] did not converge: {e}") from e
    if len(result) > 3:
        raise QuadratureError(f"quadrature on [{a}, {b}] did not converge: {result[3]}")
    return float(result[0]), float(result[1])


@lru_cache(maxsize=64)
def _tail_case(profile: OutletProfile, start: float) -> tuple[Literal["i", "ii"], float]:
    L_eff = max(profile.estimate_lipschitz(profile.R_star), 0.5)
    radii = _step_radii(profile, start, TAIL_STEPS, L_eff)
    cells = np.array([_quad(lambda t: float(profile.value(t)) ** -3, a, b, 1e-8)[0]
                      for a, b in zip(radii, radii[1:])])
    k = np.arange(TAIL_STEPS // 2, TAIL_STEPS) + 1.0
    slope = np.polyfit(np.log(k), np.log(cells[TAIL_STEPS // 2:]), 1)[0]
    exponent = float(-slope)
    return ("i" if exponent > 1.05 else "ii"), exponent


def integral_g_minus3(
    profile: OutletProfile,
    a: float,
    b: float,
    rtol: float = DEFAULT_RTOL,
    classify: bool = True,
) -> GIntegral:
    """Adaptive quadrature of int_a^b g(t)^-3 dt; b may be +inf.

    The case is "i" when the tail integral converges. It is read off the decay
    exponent p of the ladder-cell integrals d_k ~ k^-p (convergent for p > 1).

    Raises:
        PreconditionError: If a >= b
        QuadratureError: If the quadrature does not converge
    """
    if not a < b:
        raise PreconditionError(f"integral needs a < b (a={a}, b={b})")
    value, error = _quad(lambda t: float(profile.value(t)) ** -3, a, b, rtol)
    if not classify:
        return GIntegral(value=value, error=error)
    case, exponent = _tail_case(profile, max(a, profile.R_star))
    return GIntegral(value=value, error=error, case=case, tail_exponent=exponent)


@dataclass(frozen=True)
class CaseReport:
    """Growth regime of the Dirichlet integral for a domain."""

    integral_case: Literal["i", "ii"]
    growth_case: Literal["i", "ii", "none"]
    tail_exponent: float


def classify_case(spec: DomainSpec) -> CaseReport:
    """Combine the tail classification with the outlet selector.

    Case (ii) needs the outer outlet; an infinite integral with the inner
    outlet is reported as "none".
    """
    result = integral_g_minus3(spec.profile, spec.R0, spec.R0 + 1.0)
    assert result.case is not None and result.tail_exponent is not None
    if result.case == "i":
        growth: Literal["i", "ii", "none"] = "i"
    else:
        growth = "ii" if spec.outlet == "out" else "none"
    return CaseReport(result.case, growth, result.tail_exponent)


@dataclass
class LadderIntegralReport:
    """Cumulative integrals and the per-step growth checks."""

    cumulative: FloatArray
    growth_ratios: list[float] = field(default_factory=list)
    cell_upper_ok: list[bool] = field(default_factory=list)
    cell_lower_ok: list[bool] = field(default_factory=list)

    @property
    def growth_ok(self) -> bool:
        return all(r <= GROWTH_FACTOR for r in self.growth_ratios)

    @property
    def passed(self) -> bool:
        return self.growth_ok and all(self.cell_upper_ok) and all(self.cell_lower_ok)


def check_ladder_integrals(
    ladder: TruncationLadder, rtol: float = DEFAULT_RTOL
) -> LadderIntegralReport:
    """Check I_(k+1) <= 109 I_k (k >= 1) and the two-sided cell bounds.

    Cell k satisfies int <= 4 / (L g^2(R_k)), and the cell ending at R_k
    satisfies int >= 1 / (27 L g^2(R_k)).
    """
    cumulative = ladder.cumulative_integrals(rtol)
    report = LadderIntegralReport(cumulative=cumulative)
    for k in range(1, ladder.K):
        report.growth_ratios.append(float(cumulative[k + 1] / cumulative[k]))
    for k in range(ladder.K):
        bound = 4.0 / (ladder.L_eff * ladder.g_at(k) ** 2)
        report.cell_upper_ok.append(bool(cumulative[k + 1] - cumulative[k] <= bound * (1 + 1e-12)))
    for k in range(1, ladder.K + 1):
        bound = 1.0 / (27.0 * ladder.L_eff * ladder.g_at(k) ** 2)
        report.cell_lower_ok.append(bool(cumulative[k] - cumulative[k - 1] >= bound * (1 - 1e-12)))
    logger.debug(f"Ladder growth ratios: {report.growth_ratios}")
    return report


@dataclass(frozen=True)
class RegionTag:
    """Region of a point: core, cell k, tail, exterior or a boundary component."""

    kind: Literal["core", "cell", "tail", "exterior", "boundary"]
    name: str = ""
    index: Optional[int] = None

    def __str__(self) -> str:
        if self.kind == "cell":
            return f"omega_{self.index}"
        if self.kind == "core":
            return "omega0"
        if self.kind == "boundary":
            return f"boundary:{self.name}"
        return self.kind


def classify_point(spec: DomainSpec, ladder: TruncationLadder, x: tuple[float, float]) -> RegionTag:
    """Tag a point; boundary band width is 1e-9 times the truncated domain diameter.

    All tests use |x2|, so a point and its mirror image get the same tag.
    """
    x1 = float(x[0])
    y = abs(float(x[1]))
    R_K = ladder.radii[-1]
    g_max = float(np.max(spec.wall(np.linspace(spec.x_left, R_K, 64))))
    tol = BOUNDARY_TOL * math.hypot(R_K - spec.x_left, 2.0 * g_max)
    if x1 < spec.x_left - tol:
        return RegionTag("exterior")
    g = float(spec.wall(max(x1, spec.x_left)))
    if abs(x1 - spec.x_left) <= tol and y <= g + tol:
        return RegionTag("boundary", "outer", 0)
    if abs(y - g) <= tol:
        return RegionTag("boundary", "outer", 0)
    if y > g:
        return RegionTag("exterior")
    for i, hole in enumerate(spec.holes, start=1):
        rho = float(hole.rho(x1, y))
        if abs(rho - 1.0) * min(hole.semi_x, hole.semi_y) <= tol:
            return RegionTag("boundary", f"hole{i}", i)
        if rho < 1.0:
            return RegionTag("exterior")
    if abs(x1 - R_K) <= tol:
        return RegionTag("boundary", "section", ladder.K)
    if x1 > R_K:
        return RegionTag("tail")
    if x1 < spec.R0:
        return RegionTag("core")
    return RegionTag("cell", index=ladder.index_of(x1))
