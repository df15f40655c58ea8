"""Symmetric solenoidal extension A = B0 + B_inf of the boundary datum.

Construction order:

1. Strip carriers move the flux of the outer wall and of every hole except the
   last one along thin strips around the axis into the last hole G_N.
2. The drain carrier b_inf moves the total flux F from G_N to infinity.
3. On every boundary component the residual trace a - (carriers) has zero
   flux, so a Hopf-collar corrector curl(chi E) removes it.

Every term is a stream-function field, so the sum is exactly divergence free.
Carriers are symmetric by construction and correctors are symmetrized.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Any, Callable, ClassVar, Literal, Optional, Sequence, Union

import numpy as np
import numpy.typing as npt
from scipy.interpolate import CubicSpline

from outflux.config import thread_count
from outflux.cutoffs import HopfCutoff, OutletCutoff, sample_band
from outflux.exceptions import GeometryError, PreconditionError
from outflux.fields import (
    BumpStreamField,
    StreamDerivatives,
    StreamFunctionField,
    SumField,
    VectorField,
    XiStreamField,
    ZeroField,
    boundary_fluxes,
    chord_quadrature,
    graded_rule,
    hole_quadrature,
    mirror,
    section_flux,
    symmetrize,
)
from outflux.geometry import DomainSpec, Hole, OutletProfile, TruncationLadder
from outflux.seeding import derive_seed

if TYPE_CHECKING:
    from outflux.config import RunConfig

logger = logging.getLogger(__name__)

FloatArray = npt.NDArray[np.float64]
Residual = Callable[[FloatArray], FloatArray]
TermKind = Literal["carrier_strip", "carrier_outlet", "corrector_B0", "corrector_Binf"]

FLUX_TOL = 1e-8
TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class BoundaryData:
    """Boundary datum a, described by its flux per component.

    On the outer boundary the trace is a normal jet through the left wall,
    a = -F_0 * 15 / (16 h) * (1 - (x2 / h)^2)^2 e1 for |x2| < h, with
    h = outer_support * g(x_left). On hole i it is the normal field with flux
    F_i spread uniformly in the angle, plus an optional symmetric swirl
    s_i sin(theta) tangentially.
    """

    outer_flux: float = 0.0
    hole_fluxes: tuple[float, ...] = ()
    swirl: tuple[float, ...] = ()
    outer_support: float = 0.5

    @classmethod
    def from_config(cls, config: RunConfig) -> BoundaryData:
        count = len(config.holes)
        fluxes = tuple(config.boundary.hole_fluxes) or (0.0,) * count
        swirl = tuple(config.boundary.swirl) or (0.0,) * count
        return cls(
            outer_flux=config.boundary.outer_flux,
            hole_fluxes=fluxes,
            swirl=swirl,
            outer_support=config.boundary.outer_support,
        )

    @property
    def total_flux(self) -> float:
        return self.outer_flux + sum(self.hole_fluxes)

    @property
    def is_zero(self) -> bool:
        return self.outer_flux == 0.0 and not any(self.hole_fluxes) and not any(self.swirl)

    @property
    def size(self) -> float:
        """Euclidean norm of all fluxes and swirl amplitudes; |a| in the growth constant."""
        values = (self.outer_flux, *self.hole_fluxes, *self.swirl)
        return math.sqrt(sum(v * v for v in values))

    def fluxes(self) -> dict[str, float]:
        """F_i keyed by component name."""
        out = {"outer": self.outer_flux}
        for i, value in enumerate(self.hole_fluxes, start=1):
            out[f"hole{i}"] = value
        return out

    def validate(self, spec: DomainSpec) -> None:
        """Raises PreconditionError if the datum does not match the holes of spec."""
        if len(self.hole_fluxes) != spec.hole_count:
            raise PreconditionError(
                f"boundary datum has {len(self.hole_fluxes)} hole fluxes, "
                f"domain has {spec.hole_count} holes"
            )
        if self.swirl and len(self.swirl) != spec.hole_count:
            raise PreconditionError("swirl needs one entry per hole")

    def trace(self, spec: DomainSpec, component: str, points: FloatArray) -> FloatArray:
        """Values of a at boundary points of one component."""
        out = np.zeros((points.shape[0], 2))
        if component == "outer":
            H = float(spec.wall(spec.x_left))
            h = self.outer_support * H
            on_wall = np.abs(points[:, 0] - spec.x_left) <= 1e-12 * max(1.0, abs(spec.x_left))
            s = points[:, 1] / h
            jet = np.where(np.abs(s) < 1.0, 15.0 / (16.0 * h) * (1.0 - s * s) ** 2, 0.0)
            out[:, 0] = np.where(on_wall, -self.outer_flux * jet, 0.0)
            return out
        index = int(component.removeprefix("hole"))
        hole = spec.holes[index - 1]
        a, b = hole.semi_x, hole.semi_y
        theta = np.arctan2((points[:, 1] - hole.center_y) / b, (points[:, 0] - hole.center) / a)
        normal = -np.stack([b * np.cos(theta), a * np.sin(theta)], axis=1)
        size2 = np.sum(normal * normal, axis=1)
        out += self.hole_fluxes[index - 1] / TWO_PI * normal / size2[:, None]
        swirl = self.swirl[index - 1] if self.swirl else 0.0
        if swirl:
            tangent = np.stack([-a * np.sin(theta), b * np.cos(theta)], axis=1)
            out += (swirl * np.sin(theta) / np.sqrt(size2))[:, None] * tangent
        return out


@dataclass(frozen=True)
class StripSpec:
    """Strips Y_i = [X_i - eta_i, X_N + eta_N] x [-delta, delta].

    Index 0 is the outer boundary (anchored at x_left with no margin); indices
    1..N are the holes, anchored at their axis abscissas.
    """

    delta: float
    anchors: tuple[float, ...]
    margins: tuple[float, ...]

    @property
    def last(self) -> int:
        return len(self.anchors) - 1

    def corridor(self, i: int) -> tuple[float, float]:
        return self.anchors[i] - self.margins[i], self.anchors[-1] + self.margins[-1]

    @classmethod
    def auto(cls, spec: DomainSpec) -> StripSpec:
        """delta is half the smaller of the hole half-heights and the narrowest wall gap."""
        if not spec.holes:
            raise PreconditionError("strips need at least one hole")
        end = spec.holes[-1].x_max
        wall = float(np.min(spec.wall(np.linspace(spec.x_left, end, 257))))
        delta = 0.5 * min(min(h.semi_y for h in spec.holes), wall)
        anchors = (spec.x_left, *(h.center for h in spec.holes))
        margins = (0.0, *(0.5 * h.semi_x for h in spec.holes))
        strips = cls(delta=delta, anchors=anchors, margins=margins)
        logger.debug(f"Strips: delta={delta:.4g}, anchors={anchors}")
        return strips

    def validate(self, spec: DomainSpec) -> None:
        """Raises GeometryError if a strip does not join its component to the last hole."""
        if self.last != spec.hole_count:
            raise GeometryError(f"strip spec has {self.last} holes, domain has {spec.hole_count}")
        for i, hole in enumerate(spec.holes, start=1):
            if self.delta >= hole.semi_y:
                raise GeometryError(f"line x2 = delta misses hole {i}; decrease delta")
            start = self.anchors[i] - self.margins[i]
            if not hole.contains(start, 0.0):
                raise GeometryError(f"strip {i} does not start inside hole {i}")
        last = spec.holes[-1]
        if not last.contains(self.anchors[-1] + self.margins[-1], 0.0):
            raise GeometryError("strips do not end inside the last hole")
        _, end = self.corridor(0)
        if self.delta >= float(np.min(spec.wall(np.linspace(spec.x_left, end, 257)))):
            raise GeometryError("strip half-height reaches the outer wall")

    def cutoff(self, epsilon: float, i: int) -> OutletCutoff:
        """xi_delta for strip i."""
        profile = OutletProfile(kind="constant", scale=self.delta)
        return OutletCutoff(profile, gamma=1.0, epsilon=epsilon, x_min=self.corridor(i)[0])


@dataclass
class ExtensionTerm:
    """One summand of the extension with its provenance."""

    kind: TermKind
    label: str
    field: VectorField
    component: Optional[str] = None
    flux: float = 0.0


def carrier_strip(strips: StripSpec, i: int, flux: float, epsilon: float) -> ExtensionTerm:
    """b_i = -(F_i / 2) xi~_delta on the strip from component i to the last hole.

    The flux of b_i is F_i through component i, -F_i through the last hole and
    zero through every hole the strip crosses.

    Raises:
        PreconditionError: If i is not an outer or non-final hole index
    """
    if not 0 <= i < strips.last:
        raise PreconditionError(f"strip carriers exist for components 0..{strips.last - 1}")
    start, end = strips.corridor(i)
    cutoff = strips.cutoff(epsilon, i)
    label = "outer" if i == 0 else f"hole{i}"
    term_field = XiStreamField(cutoff, 0.5 * flux, start, end)
    return ExtensionTerm("carrier_strip", f"b_{i}", term_field, label, flux)


def carrier_outlet(
    cutoff: OutletCutoff, flux: float, spec: Optional[DomainSpec] = None
) -> ExtensionTerm:
    """b_inf = -(F / 2) xi~, draining F from the last hole to infinity.

    Raises:
        GeometryError: If the curve x2 = gamma/(gamma+1) g(x1) does not cross the last hole
    """
    if spec is not None and spec.holes:
        crossing = cutoff.gamma / (cutoff.gamma + 1.0) * float(spec.wall(spec.last_abscissa))
        if crossing >= spec.holes[-1].semi_y:
            raise GeometryError(
                f"drain curve at height {crossing:.4g} misses the last hole; decrease gamma"
            )
    term_field = XiStreamField(cutoff, 0.5 * flux, cutoff.start)
    return ExtensionTerm("carrier_outlet", "b_inf", term_field, None, flux)


@dataclass(frozen=True)
class DecayReport:
    """Sampled suprema of |b| g and |grad b| g^2 over the outlet cells."""

    sup_value: float
    sup_gradient: float
    doubled_value: float
    doubled_gradient: float

    @property
    def stable(self) -> bool:
        finite = all(math.isfinite(v) for v in (self.sup_value, self.sup_gradient))
        return (
            finite
            and self.doubled_value <= 1.25 * self.sup_value + 1e-300
            and self.doubled_gradient <= 1.25 * self.sup_gradient + 1e-300
        )


def _decay_suprema(
    term_field: VectorField, cutoff: OutletCutoff, x_range: tuple[float, float], n: int, seed: int
) -> tuple[float, float]:
    band = sample_band(cutoff, x_range, n, seed)
    pts = np.concatenate([band, mirror(band)])
    g = cutoff.profile.value(pts[:, 0])
    value = np.linalg.norm(term_field.evaluate(pts), axis=1)
    grad = np.linalg.norm(term_field.jacobian(pts).reshape(-1, 4), axis=1)
    return float(np.max(value * g)), float(np.max(grad * g * g))


def outlet_decay_check(
    term: ExtensionTerm,
    cutoff: OutletCutoff,
    ladder: TruncationLadder,
    cells: int = 5,
    samples: int = 400,
    seed: int = 0,
) -> DecayReport:
    """Check |b_inf| <= C / g and |grad b_inf| <= C / g^2 on [R_0, R_cells]."""
    x_range = (ladder.R(0), ladder.R(min(cells, ladder.K)))
    value, grad = _decay_suprema(term.field, cutoff, x_range, samples, derive_seed(seed, 0))
    value2, grad2 = _decay_suprema(term.field, cutoff, x_range, 2 * samples, derive_seed(seed, 1))
    report = DecayReport(value, grad, value2, grad2)
    logger.debug(f"Decay of {term.label}: |b| g <= {value:.4g}, |grad b| g^2 <= {grad:.4g}")
    return report


@dataclass(frozen=True)
class CollarCoordinates:
    """Tangential and normal collar coordinates with first and second derivatives.

    Hessians are stored as (xx, xy, yy).
    """

    tangential: FloatArray
    normal: FloatArray
    grad_t: FloatArray
    grad_n: FloatArray
    hess_t: FloatArray
    hess_n: FloatArray


CurveRule = tuple[FloatArray, FloatArray, FloatArray]


@dataclass(frozen=True)
class EllipseCollar:
    """Collar 1 <= rho < 1 + kappa outside a hole, in elliptic polar coordinates."""

    hole: Hole
    kappa: float
    periodic: ClassVar[bool] = True

    def grid(self) -> FloatArray:
        """Angles, uniform plus graded toward the axis crossings theta = 0 and pi."""
        t = 0.5 * math.pi * np.exp(-np.linspace(0.25, 20.0, 80))
        uniform = np.linspace(0.0, TWO_PI, 513)
        return np.unique(np.concatenate([uniform, t, math.pi - t, math.pi + t, TWO_PI - t]))

    def frame(self, theta: FloatArray) -> tuple[FloatArray, FloatArray, FloatArray]:
        """Curve points, d x / d theta and d x / d rho at rho = 1."""
        a, b = self.hole.semi_x, self.hole.semi_y
        c, s = np.cos(theta), np.sin(theta)
        return (
            self.hole.point(theta),
            np.stack([-a * s, b * c], axis=1),
            np.stack([a * c, b * s], axis=1),
        )

    def support(self, points: FloatArray) -> npt.NDArray[np.bool_]:
        rho = self.hole.rho(points[:, 0], points[:, 1])
        return np.asarray((rho >= 1.0) & (rho < 1.0 + self.kappa))

    def coordinates(self, points: FloatArray) -> CollarCoordinates:
        a, b = self.hole.semi_x, self.hole.semi_y
        u = (points[:, 0] - self.hole.center) / a
        w = (points[:, 1] - self.hole.center_y) / b
        r2 = u * u + w * w
        rho = np.sqrt(r2)
        r3 = r2 * rho
        r4 = r2 * r2
        return CollarCoordinates(
            tangential=np.mod(np.arctan2(w, u), TWO_PI),
            normal=rho - 1.0,
            grad_t=np.stack([-w / (a * r2), u / (b * r2)], axis=1),
            grad_n=np.stack([u / (a * rho), w / (b * rho)], axis=1),
            hess_t=np.stack(
                [
                    2.0 * u * w / (a * a * r4),
                    (w * w - u * u) / (a * b * r4),
                    -2.0 * u * w / (b * b * r4),
                ],
                axis=1,
            ),
            hess_n=np.stack(
                [w * w / (a * a * r3), -u * w / (a * b * r3), u * u / (b * b * r3)], axis=1
            ),
        )

    def curve_rule(self) -> CurveRule:
        """Points, weights and n dS / d theta with n out of Omega."""
        thetas, weights, normals = hole_quadrature(self.hole)
        return self.hole.point(thetas), weights, normals


@dataclass(frozen=True)
class WallCollar:
    """Collar x_left <= x1 < x_left + kappa along the left wall."""

    x_left: float
    half_height: float
    kappa: float
    periodic: ClassVar[bool] = False

    def grid(self) -> FloatArray:
        H = self.half_height
        t = 0.5 * H * np.exp(-np.linspace(0.25, 20.0, 80))
        uniform = np.linspace(-H, H, 401)
        return np.unique(np.concatenate([uniform, t, -t, [0.0]]))

    def frame(self, s: FloatArray) -> tuple[FloatArray, FloatArray, FloatArray]:
        n = s.size
        points = np.stack([np.full(n, self.x_left), s], axis=1)
        return points, np.tile([0.0, 1.0], (n, 1)), np.tile([1.0, 0.0], (n, 1))

    def support(self, points: FloatArray) -> npt.NDArray[np.bool_]:
        d = points[:, 0] - self.x_left
        return np.asarray((d >= 0.0) & (d < self.kappa))

    def coordinates(self, points: FloatArray) -> CollarCoordinates:
        n = points.shape[0]
        zero = np.zeros((n, 3))
        return CollarCoordinates(
            tangential=points[:, 1].copy(),
            normal=points[:, 0] - self.x_left,
            grad_t=np.tile([0.0, 1.0], (n, 1)),
            grad_n=np.tile([1.0, 0.0], (n, 1)),
            hess_t=zero,
            hess_n=zero.copy(),
        )

    def curve_rule(self) -> CurveRule:
        t, w = graded_rule(self.half_height)
        s = np.concatenate([t, -t])
        points = np.stack([np.full(s.size, self.x_left), s], axis=1)
        return points, np.concatenate([w, w]), np.tile([-1.0, 0.0], (s.size, 1))


Collar = Union[EllipseCollar, WallCollar]


def residual_flux(residual: Residual, collar: Collar) -> tuple[float, float]:
    """Flux of a residual trace through the collar's curve and its absolute size."""
    points, weights, normals = collar.curve_rule()
    r = residual(points)
    flux = float(weights @ np.einsum("ij,ij->i", r, normals))
    size = float(weights @ (np.linalg.norm(r, axis=1) * np.linalg.norm(normals, axis=1)))
    return flux, size


class CollarCorrector(StreamFunctionField):
    """A_* = curl(chi E) with E(t, d) = psi(t) + d q(t) matching a trace on the curve.

    psi' and q are the tangential and normal components of (-r2, r1) along
    the curve, interpolated by cubic splines, so grad E = (-r2, r1) on the
    curve and curl(E) reproduces r there.
    """

    def __init__(self, collar: Collar, residual: Residual, epsilon: float) -> None:
        self.collar = collar
        self.cutoff = HopfCutoff(epsilon, collar.kappa)
        grid = collar.grid()
        points, along, across = collar.frame(grid)
        r = residual(points)
        self.is_zero = not np.any(r)
        potential = np.stack([-r[:, 1], r[:, 0]], axis=1)
        slope = np.einsum("ij,ij->i", potential, along)
        normal = np.einsum("ij,ij->i", potential, across)
        if collar.periodic:
            bc = "periodic"
            slope[-1] = slope[0]
            normal[-1] = normal[0]
            mean = CubicSpline(grid, slope, bc_type=bc).integrate(grid[0], grid[-1])
            slope = slope - mean / (grid[-1] - grid[0])
        else:
            bc = "natural"
        self.grid = grid
        self._slope = CubicSpline(grid, slope, bc_type=bc)
        self._stream = self._slope.antiderivative()
        self._normal = CubicSpline(grid, normal, bc_type=bc)

    def stream_derivatives(self, points: FloatArray) -> StreamDerivatives:
        n = points.shape[0]
        out = StreamDerivatives.zeros(n)
        if self.is_zero:
            return out
        mask = self.collar.support(points)
        if not mask.any():
            return out
        c = self.collar.coordinates(points[mask])
        t = c.tangential
        d = c.normal
        lo, hi = self.grid[0], self.grid[-1]
        inside = ((t >= lo) & (t <= hi)).astype(float)
        t = np.clip(t, lo, hi)
        psi = self._stream(t)
        dpsi = self._slope(t) * inside
        ddpsi = self._slope(t, 1) * inside
        q = self._normal(t)
        dq = self._normal(t, 1) * inside
        ddq = self._normal(t, 2) * inside
        chi, dchi, ddchi = self.cutoff.evaluate(d)

        E = psi + d * q
        Et = dpsi + d * dq
        Ett = ddpsi + d * ddq
        Pt = chi * Et
        Pn = dchi * E + chi * q
        Ptt = chi * Ett
        Ptn = dchi * Et + chi * dq
        Pnn = ddchi * E + 2.0 * dchi * q
        gt, gn = c.grad_t, c.grad_n

        def second(i: int, j: int, h: int) -> FloatArray:
            return (
                Ptt * gt[:, i] * gt[:, j]
                + Ptn * (gt[:, i] * gn[:, j] + gt[:, j] * gn[:, i])
                + Pnn * gn[:, i] * gn[:, j]
                + Pt * c.hess_t[:, h]
                + Pn * c.hess_n[:, h]
            )

        out.value[mask] = chi * E
        out.d1[mask] = Pt * gt[:, 0] + Pn * gn[:, 0]
        out.d2[mask] = Pt * gt[:, 1] + Pn * gn[:, 1]
        out.d11[mask] = second(0, 0, 0)
        out.d12[mask] = second(0, 1, 1)
        out.d22[mask] = second(1, 1, 2)
        return out


def corrector(
    residual: Residual,
    collar: Collar,
    epsilon: float,
    label: str,
    kind: TermKind = "corrector_B0",
    component: Optional[str] = None,
) -> ExtensionTerm:
    """Symmetrized Hopf-collar corrector removing a zero-flux residual trace.

    Raises:
        PreconditionError: If the residual has nonzero flux through the curve
    """
    flux, size = residual_flux(residual, collar)
    if abs(flux) > FLUX_TOL * (1.0 + size):
        raise PreconditionError(
            f"residual trace on {component or label} has flux {flux:.3e}; carriers are unbalanced"
        )
    built = CollarCorrector(collar, residual, epsilon)
    term_field: VectorField = ZeroField() if built.is_zero else symmetrize(built)
    logger.debug(f"Corrector {label}: residual flux {flux:.2e}, trace size {size:.3e}")
    return ExtensionTerm(kind, label, term_field, component, 0.0)


@dataclass
class FluxLedger:
    """Per-term and total fluxes through every boundary component and cross-section."""

    entries: dict[str, dict[str, float]]
    expected: dict[str, float]
    sections: dict[float, float]
    total_flux: float

    @property
    def totals(self) -> dict[str, float]:
        return {
            name: sum(entry[name] for entry in self.entries.values()) for name in self.expected
        }

    def balanced(self, tol: float = 1e-6) -> bool:
        totals = self.totals
        ok = all(abs(totals[name] - value) <= tol for name, value in self.expected.items())
        return ok and all(abs(value + self.total_flux) <= tol for value in self.sections.values())

    def to_dict(self) -> dict[str, Any]:
        return {
            "terms": self.entries,
            "expected": self.expected,
            "totals": self.totals,
            "sections": {f"{x:.12g}": value for x, value in self.sections.items()},
            "total_flux": self.total_flux,
            "balanced": self.balanced(),
        }


@dataclass
class ExtensionField:
    """A = sum of carrier and corrector terms."""

    terms: list[ExtensionTerm]
    spec: DomainSpec
    boundary: BoundaryData
    epsilon: float
    strips: Optional[StripSpec] = None
    ledger: Optional[FluxLedger] = None
    _sum: SumField = field(init=False, repr=False)

    def __post_init__(self) -> None:
        self._sum = SumField([term.field for term in self.terms])

    def evaluate(self, points: FloatArray) -> FloatArray:
        return self._sum.evaluate(points)

    def jacobian(self, points: FloatArray) -> FloatArray:
        return self._sum.jacobian(points)

    def terms_of(self, kind: TermKind) -> list[ExtensionTerm]:
        return [term for term in self.terms if term.kind == kind]

    def trace_error(self) -> dict[str, float]:
        """Relative L2 mismatch between A and a on every boundary component."""
        errors: dict[str, float] = {}
        for name, collar in _collars(self.spec, 0.5).items():
            points, weights, normals = collar.curve_rule()
            ds = weights * np.linalg.norm(normals, axis=1)
            target = self.boundary.trace(self.spec, name, points)
            diff = self.evaluate(points) - target
            err = math.sqrt(float(ds @ np.sum(diff * diff, axis=1)))
            scale = math.sqrt(float(ds @ np.sum(target * target, axis=1)))
            errors[name] = err / scale if scale > 0.0 else err
        return errors


def _collars(spec: DomainSpec, fraction: float) -> dict[str, Collar]:
    H = float(spec.wall(spec.x_left))
    gaps = [H, spec.R0 - spec.x_left]
    if spec.holes:
        gaps.append(spec.holes[0].x_min - spec.x_left)
    collars: dict[str, Collar] = {"outer": WallCollar(spec.x_left, H, fraction * min(gaps))}
    for i, hole in enumerate(spec.holes, start=1):
        kappa = fraction * spec.hole_clearance(i) / hole.size
        collars[f"hole{i}"] = EllipseCollar(hole, kappa)
    return collars


def build_ledger(
    terms: list[ExtensionTerm],
    spec: DomainSpec,
    boundary: BoundaryData,
    ladder: Optional[TruncationLadder] = None,
    sections: int = 5,
) -> FluxLedger:
    """Quadrature fluxes of every term and of the sum across the ladder radii."""
    entries = {term.label: boundary_fluxes(term.field, spec) for term in terms}
    radii = ladder.radii[: min(sections, ladder.K) + 1] if ladder is not None else (spec.R0,)
    total = SumField([term.field for term in terms])
    cross = {float(x): section_flux(total, float(x), float(spec.wall(x))) for x in radii}
    return FluxLedger(entries, boundary.fluxes(), cross, boundary.total_flux)


def assemble_extension(
    boundary: BoundaryData,
    spec: DomainSpec,
    strips: Optional[StripSpec] = None,
    epsilon: float = 0.2,
    collar: float = 0.5,
    ladder: Optional[TruncationLadder] = None,
) -> ExtensionField:
    """Build A = B0 + B_inf for the datum on the domain.

    Args:
        boundary: Fluxes and swirl of the boundary datum
        spec: Validated domain
        strips: Strip layout (automatic when omitted)
        epsilon: Cut-off parameter shared by carriers and correctors
        collar: Fraction of the clearance used by corrector collars
        ladder: Ladder whose radii get cross-section fluxes in the ledger

    Returns:
        Extension field with its flux ledger

    Raises:
        GeometryError: If a strip or the drain curve misses its hole
        PreconditionError: If the datum does not match the domain
    """
    spec.validate()
    boundary.validate(spec)
    if boundary.is_zero:
        ext = ExtensionField([], spec, boundary, epsilon, strips)
        ext.ledger = build_ledger([], spec, boundary, ladder)
        return ext

    terms: list[ExtensionTerm] = []
    if spec.holes:
        strips = strips or StripSpec.auto(spec)
        strips.validate(spec)
        sources = [boundary.outer_flux, *boundary.hole_fluxes[:-1]]
        for i, flux in enumerate(sources):
            if flux != 0.0:
                terms.append(carrier_strip(strips, i, flux, epsilon))
    cutoff = OutletCutoff(spec.profile, spec.gamma, epsilon, x_min=spec.last_abscissa)
    if boundary.total_flux != 0.0:
        terms.append(carrier_outlet(cutoff, boundary.total_flux, spec))

    carriers = SumField([term.field for term in terms])
    last = spec.components[-1]
    for name, shape in _collars(spec, collar).items():

        def residual(points: FloatArray, name: str = name) -> FloatArray:
            return boundary.trace(spec, name, points) - carriers.evaluate(points)

        kind: TermKind = "corrector_Binf" if name == last and spec.holes else "corrector_B0"
        term = corrector(residual, shape, epsilon, f"E_{name}", kind, name)
        if not isinstance(term.field, ZeroField):
            terms.append(term)

    ext = ExtensionField(terms, spec, boundary, epsilon, strips)
    ext.ledger = build_ledger(terms, spec, boundary, ladder)
    logger.info(
        f"Assembled extension at eps={epsilon}: {len(terms)} terms, F={boundary.total_flux:.4g}, "
        f"ledger balanced={ext.ledger.balanced()}"
    )
    return ext


@dataclass(frozen=True)
class SamplingRegion:
    """Slab x_min < x1 < x_max of the domain where trial fields live."""

    x_min: float
    x_max: float
    label: str

    @classmethod
    def cell(cls, ladder: TruncationLadder, k: int) -> SamplingRegion:
        lo, hi = ladder.cell(k)
        return cls(lo, hi, f"omega_{k}")

    @classmethod
    def truncation(cls, spec: DomainSpec, ladder: TruncationLadder, k: int) -> SamplingRegion:
        return cls(spec.x_left, ladder.R(k), f"Omega_{k}")


@dataclass(frozen=True)
class LerayHopfStatistic:
    """max |int (w . grad) w . A| / int |grad w|^2 over the trials, with the quadratic form."""

    region: str
    epsilon: float
    max_ratio: float
    quadratic_max: float
    ratios: tuple[float, ...]
    skipped: int

    def to_dict(self) -> dict[str, Any]:
        return {
            "region": self.region,
            "epsilon": self.epsilon,
            "max_ratio": self.max_ratio,
            "quadratic_max": self.quadratic_max,
            "trials": len(self.ratios),
            "skipped": self.skipped,
        }


AXIS_BEND = 0.5
SCALING_SPREAD = 3.0


def _trial_abscissa(
    spec: DomainSpec, region: SamplingRegion, u: float
) -> Optional[tuple[float, float]]:
    """Abscissa at fraction u of the usable length of the region, with its room.

    Usable is the middle half of the region minus each hole widened by six
    tenths of its clearance, which covers the hole's corrector collar. Room is
    the distance to the ends of the usable piece holding the abscissa.
    """
    span = region.x_max - region.x_min
    pieces = [(region.x_min + 0.25 * span, region.x_max - 0.25 * span)]
    for i, hole in enumerate(spec.holes, start=1):
        margin = 0.6 * spec.hole_clearance(i)
        left = hole.x_min - margin
        right = hole.x_max + margin
        cut: list[tuple[float, float]] = []
        for lo, hi in pieces:
            if right <= lo or left >= hi:
                cut.append((lo, hi))
                continue
            if left > lo:
                cut.append((lo, left))
            if right < hi:
                cut.append((right, hi))
        pieces = cut
    pieces = [(max(lo, spec.x_left), hi) for lo, hi in pieces if hi > max(lo, spec.x_left)]
    total = sum(hi - lo for lo, hi in pieces)
    if not total > 0.0:
        return None
    target = u * total
    for lo, hi in pieces:
        if target <= hi - lo:
            return lo + target, min(target, hi - lo - target)
        target -= hi - lo
    lo, hi = pieces[-1]
    return hi, 0.0


def trial_field(
    spec: DomainSpec,
    region: SamplingRegion,
    index: int,
    count: int,
    epsilon: float,
    seed: int,
) -> Optional[BumpStreamField]:
    """Symmetric zero-trace trial field number ``index`` of ``count``.

    Three quarters of the trials are bent bumps on the axis. Trial i has layer
    depth t_i stratified over (0, 1) and radius L exp(-t_i / eps), where L is
    the largest radius that fits the usable piece of the region (clear of
    hole collars) below the top of the drain band, so the bump reaches the
    part of the band where the cut-off sits at level t_i for every epsilon.
    The rest are mirrored pairs off the axis. All draws depend on the index
    and seed only. Returns None when there is no room.
    """
    rng = np.random.default_rng(derive_seed(seed, index))
    u_position, u_depth, u_height, u_radius = rng.uniform(size=4)
    n_axis = count - count // 4
    place = _trial_abscissa(spec, region, float(u_position))
    if place is None:
        return None
    c1, room = place
    if index < n_axis:
        clearance = float(spec.boundary_distance(np.array([[c1, 0.0]]))[0])
        top = spec.gamma * float(spec.wall(c1)) / (spec.gamma + 1.0)
        reach = min(0.95 * min(room, clearance) / (1.0 + AXIS_BEND), top)
        depth = (index + float(u_depth)) / n_axis
        radius = reach * math.exp(-min(depth / epsilon, 700.0))
        if not radius > 0.0:
            return None
        return BumpStreamField((c1, 0.0), radius, AXIS_BEND)
    c2 = float(spec.wall(c1)) * (0.2 + 0.4 * float(u_height))
    if not spec.contains(np.array([[c1, c2]]))[0]:
        return None
    clearance = float(spec.boundary_distance(np.array([[c1, c2]]))[0])
    cap = 0.95 * min(room, clearance, c2)
    radius = cap * math.exp(math.log(0.05) * float(u_radius))
    if not radius > 0.0:
        return None
    return BumpStreamField((c1, c2), radius)


def trial_statistics(A: VectorField, trial: BumpStreamField) -> Optional[tuple[float, float]]:
    """Leray-Hopf and quadratic-form ratios of one trial; None if grad w vanishes."""
    num = den = quad = 0.0
    for center in trial.centers:
        pts, w = chord_quadrature(center, trial.radius, trial.bend)
        vel = trial.evaluate(pts)
        J = trial.jacobian(pts)
        a = A.evaluate(pts)
        num += float(w @ np.einsum("ni,nij,nj->n", a, J, vel))
        den += float(w @ np.einsum("nij,nij->n", J, J))
        quad += float(w @ (np.sum(a * a, axis=1) * np.sum(vel * vel, axis=1)))
    if not den > 0.0:
        return None
    return abs(num) / den, quad / den


def leray_hopf_ratio(
    A: VectorField,
    spec: DomainSpec,
    region: SamplingRegion,
    trials: int = 24,
    epsilon: float = 0.1,
    seed: int = 0,
    workers: Optional[int] = None,
) -> LerayHopfStatistic:
    """Sampled Leray-Hopf statistic of A over symmetric solenoidal zero-trace trials.

    Trials are independent and seeded per index, so the result does not depend
    on the worker count.

    Raises:
        PreconditionError: If fewer than 20 trials are requested
    """
    if trials < 20:
        raise PreconditionError("leray_hopf_ratio needs at least 20 trials")
    fields = [trial_field(spec, region, i, trials, epsilon, seed) for i in range(trials)]

    def run(trial: Optional[BumpStreamField]) -> Optional[tuple[float, float]]:
        return None if trial is None else trial_statistics(A, trial)

    with ThreadPoolExecutor(max_workers=workers or thread_count()) as pool:
        results = list(pool.map(run, fields))
    kept = [r for r in results if r is not None]
    ratios = tuple(r[0] for r in kept)
    stat = LerayHopfStatistic(
        region=region.label,
        epsilon=epsilon,
        max_ratio=max(ratios, default=0.0),
        quadratic_max=max((r[1] for r in kept), default=0.0),
        ratios=ratios,
        skipped=trials - len(kept),
    )
    logger.debug(
        f"Leray-Hopf on {region.label} at eps={epsilon}: max {stat.max_ratio:.4g} "
        f"({stat.skipped} skipped)"
    )
    return stat


def spread(values: Sequence[float]) -> float:
    """max / min of nonnegative values; 1 when all vanish, inf when only some do."""
    if not values or max(values) == 0.0:
        return 1.0
    low = min(values)
    return max(values) / low if low > 0.0 else math.inf


@dataclass(frozen=True)
class LerayHopfTrend:
    """Verdicts on statistics of one extension across epsilon and across cells.

    ``monotone`` asks for a strict decrease of the statistic as epsilon
    decreases, ``scaling`` for statistic / epsilon within a factor
    SCALING_SPREAD, ``uniform`` for the cell statistics within the same factor.
    Verdicts are None when there is nothing to compare.
    """

    epsilons: tuple[float, ...]
    values: tuple[float, ...]
    cell_values: tuple[float, ...]

    @property
    def active(self) -> bool:
        return any(v > 0.0 for v in self.values)

    @property
    def scaling_spread(self) -> float:
        return spread([v / e for v, e in zip(self.values, self.epsilons)])

    @property
    def cell_spread(self) -> float:
        return spread(self.cell_values)

    @property
    def monotone(self) -> Optional[bool]:
        if len(self.values) < 2 or not self.active:
            return None
        return all(b < a for a, b in zip(self.values, self.values[1:]))

    @property
    def scaling(self) -> Optional[bool]:
        if len(self.values) < 2 or not self.active:
            return None
        return self.scaling_spread <= SCALING_SPREAD

    @property
    def uniform(self) -> Optional[bool]:
        if len(self.cell_values) < 2 or not any(v > 0.0 for v in self.cell_values):
            return None
        return self.cell_spread <= SCALING_SPREAD

    def to_dict(self) -> dict[str, Any]:
        return {
            "leray_hopf_monotone": self.monotone,
            "leray_hopf_scaling": self.scaling,
            "leray_hopf_uniform": self.uniform,
            "scaling_spread": self.scaling_spread,
            "cell_spread": self.cell_spread,
        }


def leray_hopf_trend(
    per_epsilon: Sequence[LerayHopfStatistic],
    per_cell: Sequence[LerayHopfStatistic] = (),
) -> LerayHopfTrend:
    """Order statistics by decreasing epsilon and collect the trend verdicts."""
    ordered = sorted(per_epsilon, key=lambda s: -s.epsilon)
    trend = LerayHopfTrend(
        epsilons=tuple(s.epsilon for s in ordered),
        values=tuple(s.max_ratio for s in ordered),
        cell_values=tuple(s.max_ratio for s in per_cell),
    )
    if trend.monotone is False or trend.scaling is False:
        logger.warning(
            f"Leray-Hopf trend off: values {trend.values} at eps {trend.epsilons}, "
            f"scaling spread {trend.scaling_spread:.3g}"
        )
    return trend
