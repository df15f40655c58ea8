"""Vector fields, stream-function fields and boundary quadrature.

A vector field maps points of shape (n, 2) to values (n, 2) and Jacobians
(n, 2, 2) with ``J[:, i, j] = d A_i / d x_j``. Stream-function fields use the
convention A = (d Phi / d x2, -d Phi / d x1), so they are divergence free
exactly and their flux through a curve is the jump of Phi along it.
"""

from __future__ import annotations

import logging
import math
from abc import ABC, abstractmethod
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Optional, Protocol, Sequence, runtime_checkable

import numpy as np
import numpy.typing as npt

from outflux.cutoffs import OutletCutoff
from outflux.exceptions import DomainError
from outflux.geometry import DomainSpec, Hole

logger = logging.getLogger(__name__)

FloatArray = npt.NDArray[np.float64]

LOG_DEPTH = 60.0


@runtime_checkable
class VectorField(Protocol):
    """Anything that can be evaluated with its Jacobian at a batch of points."""

    def evaluate(self, points: FloatArray) -> FloatArray: ...

    def jacobian(self, points: FloatArray) -> FloatArray: ...


def mirror(points: FloatArray) -> FloatArray:
    out = np.array(points, dtype=float, copy=True)
    out[:, 1] = -out[:, 1]
    return out


@dataclass
class StreamDerivatives:
    """Phi and its derivatives up to second order."""

    value: FloatArray
    d1: FloatArray
    d2: FloatArray
    d11: FloatArray
    d12: FloatArray
    d22: FloatArray

    @classmethod
    def zeros(cls, n: int) -> StreamDerivatives:
        return cls(*(np.zeros(n) for _ in range(6)))

    def scaled(self, factor: float) -> StreamDerivatives:
        return StreamDerivatives(
            self.value * factor,
            self.d1 * factor,
            self.d2 * factor,
            self.d11 * factor,
            self.d12 * factor,
            self.d22 * factor,
        )


def velocity_from_stream(s: StreamDerivatives) -> FloatArray:
    return np.stack([s.d2, -s.d1], axis=1)


def jacobian_from_stream(s: StreamDerivatives) -> FloatArray:
    J = np.empty((s.d1.size, 2, 2))
    J[:, 0, 0] = s.d12
    J[:, 0, 1] = s.d22
    J[:, 1, 0] = -s.d11
    J[:, 1, 1] = -s.d12
    return J


class StreamFunctionField(ABC):
    """Field given by a scalar stream function."""

    @abstractmethod
    def stream_derivatives(self, points: FloatArray) -> StreamDerivatives:
        """Phi with first and second derivatives at the points."""

    def stream(self, points: FloatArray) -> FloatArray:
        return self.stream_derivatives(points).value

    def evaluate(self, points: FloatArray) -> FloatArray:
        return velocity_from_stream(self.stream_derivatives(points))

    def jacobian(self, points: FloatArray) -> FloatArray:
        return jacobian_from_stream(self.stream_derivatives(points))


class ZeroField(StreamFunctionField):
    """The zero field."""

    def stream_derivatives(self, points: FloatArray) -> StreamDerivatives:
        return StreamDerivatives.zeros(points.shape[0])


class SumField:
    """Pointwise sum of fields."""

    def __init__(self, terms: Sequence[VectorField]) -> None:
        self.terms = list(terms)

    def evaluate(self, points: FloatArray) -> FloatArray:
        total = np.zeros((points.shape[0], 2))
        for term in self.terms:
            total += term.evaluate(points)
        return total

    def jacobian(self, points: FloatArray) -> FloatArray:
        total = np.zeros((points.shape[0], 2, 2))
        for term in self.terms:
            total += term.jacobian(points)
        return total


class SymmetrizedField:
    """(A1 even, A2 odd) part of a field; idempotent pointwise."""

    def __init__(self, field: VectorField) -> None:
        self.field = field

    def evaluate(self, points: FloatArray) -> FloatArray:
        a = self.field.evaluate(points)
        b = self.field.evaluate(mirror(points))
        return np.stack([0.5 * (a[:, 0] + b[:, 0]), 0.5 * (a[:, 1] - b[:, 1])], axis=1)

    def jacobian(self, points: FloatArray) -> FloatArray:
        J = self.field.jacobian(points)
        M = self.field.jacobian(mirror(points))
        out = np.empty_like(J)
        out[:, 0, 0] = 0.5 * (J[:, 0, 0] + M[:, 0, 0])
        out[:, 0, 1] = 0.5 * (J[:, 0, 1] - M[:, 0, 1])
        out[:, 1, 0] = 0.5 * (J[:, 1, 0] - M[:, 1, 0])
        out[:, 1, 1] = 0.5 * (J[:, 1, 1] + M[:, 1, 1])
        return out


def symmetrize(field: VectorField) -> SymmetrizedField:
    """Return the symmetric part of a field."""
    return SymmetrizedField(field)


class XiStreamField(StreamFunctionField):
    """Phi = amplitude * (Xi - 1) for start <= x1 < end, zero elsewhere.

    Xi equals xi on the upper half and 2 - xi(x1, -x2) on the lower half, so
    Phi is odd in x2 and the cross-section flux of the field is -2 * amplitude.
    """

    def __init__(
        self,
        cutoff: OutletCutoff,
        amplitude: float,
        start: float,
        end: float = math.inf,
    ) -> None:
        self.cutoff = cutoff
        self.amplitude = amplitude
        self.start = start
        self.end = end

    def stream_derivatives(self, points: FloatArray) -> StreamDerivatives:
        n = points.shape[0]
        out = StreamDerivatives.zeros(n)
        x1 = points[:, 0]
        inside = (x1 >= self.start) & (x1 < self.end)
        if self.amplitude == 0.0 or not inside.any():
            return out
        x2 = points[inside, 1]
        sign = np.where(x2 < 0.0, -1.0, 1.0)
        d = self.cutoff.derivatives(x1[inside], np.abs(x2))
        amp = self.amplitude
        # lower half: Xi - 1 = 1 - xi(x1, -x2)
        out.value[inside] = amp * sign * (d.value - 1.0)
        out.d1[inside] = amp * sign * d.d1
        out.d2[inside] = amp * d.d2
        out.d11[inside] = amp * sign * d.d11
        out.d12[inside] = amp * d.d12
        out.d22[inside] = amp * sign * d.d22
        return out


def tilde_xi_field(cutoff: OutletCutoff, points: FloatArray) -> FloatArray:
    """xi~ = (-d xi / d x2, d xi / d x1), mirrored to the lower half.

    Raises:
        DomainError: If a point lies left of the outlet start or beyond the wall
    """
    x1 = points[:, 0]
    if np.any(x1 < cutoff.start) or np.any(np.abs(points[:, 1]) > cutoff.profile.value(x1)):
        raise DomainError("tilde_xi_field evaluated outside the outlet")
    return XiStreamField(cutoff, -1.0, cutoff.start).evaluate(points)


class PoiseuilleField(StreamFunctionField):
    """Parabolic channel flow A1 = U (1 - x2^2 / H^2) on |x2| <= H."""

    def __init__(self, U: float, H: float) -> None:
        self.U = U
        self.H = H

    @property
    def section_flux(self) -> float:
        return 4.0 * self.U * self.H / 3.0

    def stream_derivatives(self, points: FloatArray) -> StreamDerivatives:
        y = points[:, 1]
        n = y.size
        H2 = self.H * self.H
        return StreamDerivatives(
            value=self.U * (y - y**3 / (3.0 * H2)),
            d1=np.zeros(n),
            d2=self.U * (1.0 - y * y / H2),
            d11=np.zeros(n),
            d12=np.zeros(n),
            d22=-2.0 * self.U * y / H2,
        )


class ChannelPerturbation(StreamFunctionField):
    """psi = a P(x2) S(x1) with P = x2 (H^2 - x2^2)^2 / H^5 and S = sin^2(pi (x1 - x0) / l).

    psi and its gradient vanish on the walls x2 = +-H and the ends x1 = x0, x0 + l.
    """

    def __init__(self, amplitude: float, H: float, x0: float, length: float) -> None:
        self.amplitude = amplitude
        self.H = H
        self.x0 = x0
        self.length = length

    def factors(self, points: FloatArray) -> tuple[list[FloatArray], list[FloatArray]]:
        """P and its derivatives up to order 3, S and its derivatives up to order 3."""
        y = points[:, 1]
        H = self.H
        H5 = H**5
        P = [
            (H**4 * y - 2.0 * H * H * y**3 + y**5) / H5,
            (H**4 - 6.0 * H * H * y * y + 5.0 * y**4) / H5,
            (-12.0 * H * H * y + 20.0 * y**3) / H5,
            (-12.0 * H * H + 60.0 * y * y) / H5,
        ]
        k = math.pi / self.length
        arg = 2.0 * k * (points[:, 0] - self.x0)
        S = [
            0.5 * (1.0 - np.cos(arg)),
            k * np.sin(arg),
            2.0 * k * k * np.cos(arg),
            -4.0 * k**3 * np.sin(arg),
        ]
        return P, S

    def stream_derivatives(self, points: FloatArray) -> StreamDerivatives:
        P, S = self.factors(points)
        a = self.amplitude
        return StreamDerivatives(
            value=a * P[0] * S[0],
            d1=a * P[0] * S[1],
            d2=a * P[1] * S[0],
            d11=a * P[0] * S[2],
            d12=a * P[1] * S[1],
            d22=a * P[2] * S[0],
        )


class BumpStreamField(StreamFunctionField):
    """psi = x2 (b(x; c)^2 + b(x; c_mirror)^2) with b = (1 - s)_+^3.

    s = ((dx - bend dy^2 / r)^2 + dy^2) / r^2, so a positive bend curves the
    support into a crescent opening toward -x1. The trial field is symmetric,
    solenoidal and supported in the bump(s). For a center on the axis only one
    bump is used.
    """

    def __init__(self, center: tuple[float, float], radius: float, bend: float = 0.0) -> None:
        self.center = (float(center[0]), abs(float(center[1])))
        self.radius = float(radius)
        self.bend = float(bend)

    @property
    def centers(self) -> list[tuple[float, float]]:
        c1, c2 = self.center
        return [(c1, 0.0)] if c2 == 0.0 else [(c1, c2), (c1, -c2)]

    def stream_derivatives(self, points: FloatArray) -> StreamDerivatives:
        n = points.shape[0]
        x2 = points[:, 1]
        phi = np.zeros(n)
        p1 = np.zeros(n)
        p2 = np.zeros(n)
        p11 = np.zeros(n)
        p12 = np.zeros(n)
        p22 = np.zeros(n)
        r = self.radius
        r2 = r * r
        beta = self.bend
        for c1, c2 in self.centers:
            dy = x2 - c2
            q = points[:, 0] - c1 - beta * dy * dy / r
            s = (q * q + dy * dy) / r2
            m = np.clip(1.0 - s, 0.0, None)
            sx = 2.0 * q / r2
            sy = (2.0 * dy - 4.0 * beta * q * dy / r) / r2
            sxx = 2.0 / r2
            sxy = -4.0 * beta * dy / (r * r2)
            syy = (2.0 - 4.0 * beta * q / r + 8.0 * beta * beta * dy * dy / r2) / r2
            phi += m**6
            p1 += -6.0 * m**5 * sx
            p2 += -6.0 * m**5 * sy
            p11 += 30.0 * m**4 * sx * sx - 6.0 * m**5 * sxx
            p12 += 30.0 * m**4 * sx * sy - 6.0 * m**5 * sxy
            p22 += 30.0 * m**4 * sy * sy - 6.0 * m**5 * syy
        return StreamDerivatives(
            value=x2 * phi,
            d1=x2 * p1,
            d2=phi + x2 * p2,
            d11=x2 * p11,
            d12=p1 + x2 * p12,
            d22=2.0 * p2 + x2 * p22,
        )


@lru_cache(maxsize=16)
def gauss_rule(order: int) -> tuple[FloatArray, FloatArray]:
    """Gauss-Legendre nodes and weights on [0, 1]."""
    x, w = np.polynomial.legendre.leggauss(order)
    return 0.5 * (x + 1.0), 0.5 * w


@lru_cache(maxsize=16)
def _graded_unit_rule(depth: float, panel: float, order: int) -> tuple[FloatArray, FloatArray]:
    nodes, weights = gauss_rule(order)
    n_panels = int(math.ceil(depth / panel))
    edges = np.linspace(0.0, depth, n_panels + 1)
    widths = np.diff(edges)
    s = (edges[:-1, None] + widths[:, None] * nodes[None, :]).ravel()
    ws = (widths[:, None] * weights[None, :]).ravel()
    return np.exp(-s), ws * np.exp(-s)


def graded_rule(
    length: float, depth: float = LOG_DEPTH, panel: float = 0.25, order: int = 16
) -> tuple[FloatArray, FloatArray]:
    """Quadrature on (0, length] graded toward 0 by t = length * exp(-s).

    Returns distances t from the graded end and weights.
    """
    t, w = _graded_unit_rule(depth, panel, order)
    return length * t, length * w


def composite_rule(
    a: float, b: float, panels: int, order: int = 16
) -> tuple[FloatArray, FloatArray]:
    """Composite Gauss-Legendre rule on [a, b]."""
    nodes, weights = gauss_rule(order)
    edges = np.linspace(a, b, panels + 1)
    widths = np.diff(edges)
    x = (edges[:-1, None] + widths[:, None] * nodes[None, :]).ravel()
    w = (widths[:, None] * weights[None, :]).ravel()
    return x, w


def section_flux(field: VectorField, x1: float, half_height: float) -> float:
    """int A . e1 dx2 over the cross-section {x1} x (-g, g), graded toward the axis."""
    t, w = graded_rule(half_height)
    upper = np.stack([np.full(t.size, x1), t], axis=1)
    lower = mirror(upper)
    return float(w @ field.evaluate(upper)[:, 0] + w @ field.evaluate(lower)[:, 0])


def hole_quadrature(hole: Hole) -> tuple[FloatArray, FloatArray, FloatArray]:
    """Angles, weights in theta and the outward-of-Omega normal vectors N(theta) dtheta.

    The four quarter arcs are graded toward the axis crossings theta = 0 and pi.
    """
    t, w = graded_rule(0.5 * math.pi)
    thetas = np.concatenate([t, math.pi - t, math.pi + t, 2.0 * math.pi - t])
    weights = np.concatenate([w, w, w, w])
    normals = -np.stack([hole.semi_y * np.cos(thetas), hole.semi_x * np.sin(thetas)], axis=1)
    return thetas, weights, normals


def hole_flux(field: VectorField, hole: Hole) -> float:
    """int_Gamma A . n dS with n pointing out of Omega (into the hole)."""
    thetas, weights, normals = hole_quadrature(hole)
    values = field.evaluate(hole.point(thetas))
    return float(weights @ np.einsum("ij,ij->i", values, normals))


def outer_flux(field: VectorField, spec: DomainSpec, x_end: Optional[float] = None) -> float:
    """Flux out of Omega through the left wall and the walls up to x_end (default R0)."""
    H = float(spec.wall(spec.x_left))
    t, w = graded_rule(H)
    upper = np.stack([np.full(t.size, spec.x_left), t], axis=1)
    left = -(w @ field.evaluate(upper)[:, 0] + w @ field.evaluate(mirror(upper))[:, 0])
    end = spec.R0 if x_end is None else x_end
    x, wx = composite_rule(spec.x_left, end, max(8, int(math.ceil(8 * (end - spec.x_left)))))
    g = spec.wall(x)
    dg = spec.profile.derivative(x)
    top = field.evaluate(np.stack([x, g], axis=1))
    bottom = field.evaluate(np.stack([x, -g], axis=1))
    walls = wx @ (top[:, 1] - dg * top[:, 0]) + wx @ (-bottom[:, 1] - dg * bottom[:, 0])
    return float(left + walls)


def boundary_fluxes(field: VectorField, spec: DomainSpec) -> dict[str, float]:
    """Flux through every boundary component, keyed 'outer', 'hole1', ..."""
    fluxes = {"outer": outer_flux(field, spec)}
    for i, hole in enumerate(spec.holes, start=1):
        fluxes[f"hole{i}"] = hole_flux(field, hole)
    return fluxes


def chord_quadrature(
    center: tuple[float, float], radius: float, bend: float = 0.0, order: int = 16
) -> tuple[FloatArray, FloatArray]:
    """Rule on the support of one bump: Gauss along each horizontal chord.

    Chords are stacked in x2 on a rule graded toward x2 = 0 when the bump sits
    on the axis and on a composite Gauss rule otherwise. Along a chord the
    bump is a polynomial, so x1-derivatives of it integrate to zero exactly.
    """
    c1, c2 = center
    if c2 == 0.0:
        t, wt = graded_rule(radius, panel=0.5, order=8)
        dy = np.concatenate([t, -t])
        wy = np.concatenate([wt, wt])
    else:
        dy, wy = composite_rule(-radius, radius, 4, order)
    half = np.sqrt(np.clip(radius * radius - dy * dy, 0.0, None))
    mid = c1 + bend * dy * dy / radius
    u, wu = gauss_rule(order)
    x1 = mid[:, None] + half[:, None] * (2.0 * u[None, :] - 1.0)
    x2 = np.broadcast_to((c2 + dy)[:, None], x1.shape)
    w = (2.0 * wy * half)[:, None] * wu[None, :]
    return np.stack([x1.ravel(), x2.ravel()], axis=1), w.ravel()


def divergence_residual(
    field: VectorField, points: FloatArray, scales: FloatArray
) -> FloatArray:
    """|div A| / |grad A| by central differences with step 1e-4 * local scale."""
    h = 1e-4 * scales
    e1 = np.stack([h, np.zeros_like(h)], axis=1)
    e2 = np.stack([np.zeros_like(h), h], axis=1)
    dx = (field.evaluate(points + e1) - field.evaluate(points - e1)) / (2.0 * h[:, None])
    dy = (field.evaluate(points + e2) - field.evaluate(points - e2)) / (2.0 * h[:, None])
    div = dx[:, 0] + dy[:, 1]
    grad = np.max(np.abs(np.concatenate([dx, dy], axis=1)), axis=1)
    return np.where(grad > 0.0, np.abs(div) / np.where(grad > 0.0, grad, 1.0), 0.0)


ForceFunction = Callable[[FloatArray], FloatArray]
