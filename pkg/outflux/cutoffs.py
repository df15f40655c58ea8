"""Cut-off functions with analytic derivatives.

- ``transition``: the quintic Psi(t) = 10t^3 - 15t^4 + 6t^5 clamped to [0, 1].
- ``OutletCutoff``: xi(x) = Psi(eps ln(gamma (g(x1) - x2) / x2)), equal to 1 near
  the axis and 0 near the wall. With a constant profile delta and gamma = 1 it
  is the strip cut-off xi_delta.
- ``TruncationCutoff``: theta_k, 1 on Omega_k and 0 beyond R_(k+1).
- ``HopfCutoff``: chi(d) = Psi(eps ln(kappa / d)), with |chi'| <= eps sup|Psi'| / d.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np
import numpy.typing as npt

from outflux.exceptions import DomainError, PreconditionError
from outflux.geometry import OutletProfile, TruncationLadder

logger = logging.getLogger(__name__)

FloatArray = npt.NDArray[np.float64]
ArrayLike = Union[float, FloatArray]

PSI_PRIME_MAX = 1.875


def transition(t: ArrayLike, order: int = 0) -> FloatArray:
    """Psi and its first two derivatives, vectorized."""
    t = np.asarray(t, dtype=float)
    s = np.clip(t, 0.0, 1.0)
    inside = (t > 0.0) & (t < 1.0)
    if order == 0:
        return s * s * s * (10.0 - 15.0 * s + 6.0 * s * s)
    if order == 1:
        return np.where(inside, 30.0 * s * s * (1.0 - s) ** 2, 0.0)
    if order == 2:
        return np.where(inside, 60.0 * s * (1.0 - s) * (1.0 - 2.0 * s), 0.0)
    raise ValueError(f"order must be 0, 1 or 2, got {order}")


def psi_eval(t: float, order: int = 0) -> float:
    """Scalar Psi, Psi' or Psi''."""
    return float(transition(t, order))


@dataclass(frozen=True)
class CutoffDerivatives:
    """Value, gradient and Hessian entries of a scalar cut-off."""

    value: FloatArray
    d1: FloatArray
    d2: FloatArray
    d11: FloatArray
    d12: FloatArray
    d22: FloatArray

    @classmethod
    def constant(cls, n: int, value: float) -> CutoffDerivatives:
        zero = np.zeros(n)
        return cls(np.full(n, value), zero, zero.copy(), zero.copy(), zero.copy(), zero.copy())


@dataclass(frozen=True)
class OutletCutoff:
    """Outlet cut-off xi for the upper half x2 >= 0."""

    profile: OutletProfile
    gamma: float
    epsilon: float
    x_min: Optional[float] = None

    def __post_init__(self) -> None:
        if self.gamma <= 0 or self.epsilon <= 0:
            raise PreconditionError("OutletCutoff needs gamma > 0 and epsilon > 0")

    @property
    def start(self) -> float:
        return self.profile.R_star if self.x_min is None else self.x_min

    def band(self, x1: ArrayLike) -> tuple[FloatArray, FloatArray]:
        """Lower and upper x2 of the transition band at x1."""
        g = self.profile.value(x1)
        lower = self.gamma * g / (self.gamma + math.exp(min(1.0 / self.epsilon, 700.0)))
        upper = self.gamma * g / (self.gamma + 1.0)
        return lower, upper

    def derivatives(self, x1: FloatArray, x2: FloatArray) -> CutoffDerivatives:
        """xi and its derivatives at points with x2 >= 0 (vectorized, no range checks)."""
        n = x1.size
        out = CutoffDerivatives.constant(n, 0.0)
        value = np.where(x2 <= 0.0, 1.0, 0.0)
        lower, upper = self.band(x1)
        value = np.where((x2 > 0.0) & (x2 <= lower), 1.0, value)
        mask = (x2 > lower) & (x2 < upper)
        if not mask.any():
            return CutoffDerivatives(value, out.d1, out.d2, out.d11, out.d12, out.d22)
        eps = self.epsilon
        t1 = x1[mask]
        y = x2[mask]
        g = self.profile.value(t1)
        dg = self.profile.derivative(t1)
        ddg = self.profile.second_derivative(t1)
        gap = g - y
        tau = eps * np.log(self.gamma * gap / y)
        tau1 = eps * dg / gap
        tau2 = -eps * g / (gap * y)
        tau11 = eps * (ddg / gap - dg * dg / (gap * gap))
        tau12 = eps * dg / (gap * gap)
        tau22 = eps * (1.0 / (y * y) - 1.0 / (gap * gap))
        p0 = transition(tau)
        p1 = transition(tau, 1)
        p2 = transition(tau, 2)
        value[mask] = p0
        d1, d2 = out.d1, out.d2
        d11, d12, d22 = out.d11, out.d12, out.d22
        d1[mask] = p1 * tau1
        d2[mask] = p1 * tau2
        d11[mask] = p2 * tau1 * tau1 + p1 * tau11
        d12[mask] = p2 * tau1 * tau2 + p1 * tau12
        d22[mask] = p2 * tau2 * tau2 + p1 * tau22
        return CutoffDerivatives(value, d1, d2, d11, d12, d22)


def xi_eval(
    cutoff: OutletCutoff, x: tuple[float, float], want_grad: bool = True
) -> tuple[float, Optional[FloatArray]]:
    """Value of xi at one point of the upper outlet, with its gradient on request.

    Raises:
        DomainError: If x lies outside the upper half of the outlet
    """
    x1, x2 = float(x[0]), float(x[1])
    if x1 < cutoff.start or x2 < 0.0 or x2 > float(cutoff.profile.value(x1)):
        raise DomainError(f"point ({x1}, {x2}) is outside the upper outlet")
    d = cutoff.derivatives(np.array([x1]), np.array([x2]))
    grad = np.array([d.d1[0], d.d2[0]]) if want_grad else None
    return float(d.value[0]), grad


@dataclass(frozen=True)
class XiBoundReport:
    """Sampled suprema of the outlet cut-off bounds."""

    epsilon: float
    sup_axis: float
    sup_wall: float
    sup_hessian: float
    support_ok: bool
    samples: int


def sample_band(
    cutoff: OutletCutoff, x_range: tuple[float, float], samples: int, seed: int = 0
) -> FloatArray:
    """Points spread log-uniformly in x2 across the transition band."""
    rng = np.random.default_rng(seed)
    x1 = rng.uniform(x_range[0], x_range[1], samples)
    lower, upper = cutoff.band(x1)
    x2 = lower * (upper / lower) ** rng.uniform(0.0, 1.0, samples)
    return np.stack([x1, x2], axis=1)


def xi_bound_check(
    cutoff: OutletCutoff,
    samples: int,
    x_range: Optional[tuple[float, float]] = None,
    seed: int = 0,
) -> XiBoundReport:
    """Sample sup |d xi| x2 / eps, sup |d xi| g and sup |d^2 xi| g^2 over the band.

    Raises:
        PreconditionError: If fewer than 100 samples are requested
    """
    if samples < 100:
        raise PreconditionError("xi_bound_check needs at least 100 samples")
    if x_range is None:
        g0 = float(cutoff.profile.value(cutoff.start))
        x_range = (cutoff.start, cutoff.start + 10.0 * g0)
    pts = sample_band(cutoff, x_range, samples, seed)
    x1, x2 = pts[:, 0], pts[:, 1]
    d = cutoff.derivatives(x1, x2)
    g = cutoff.profile.value(x1)
    grad = np.maximum(np.abs(d.d1), np.abs(d.d2))
    hess = np.max(np.abs(np.stack([d.d11, d.d12, d.d22])), axis=0)
    nonzero = grad > 0
    gm = cutoff.gamma
    band_ok = ((1.0 + gm) * x2 / gm <= g * (1 + 1e-12)) & (
        g <= (math.exp(1.0 / cutoff.epsilon) + gm) * x2 / gm * (1 + 1e-12)
    )
    report = XiBoundReport(
        epsilon=cutoff.epsilon,
        sup_axis=float(np.max(grad * x2) / cutoff.epsilon),
        sup_wall=float(np.max(grad * g)),
        sup_hessian=float(np.max(hess * g * g)),
        support_ok=bool(np.all(band_ok[nonzero])),
        samples=samples,
    )
    logger.debug(f"xi bounds at eps={cutoff.epsilon}: {report}")
    return report


@dataclass(frozen=True)
class TruncationCutoff:
    """theta_k(x) = Psi((R_(k+1) - x1) / (R_(k+1) - R_k)), even in x2."""

    ladder: TruncationLadder
    k: int

    def __post_init__(self) -> None:
        if not 0 <= self.k < self.ladder.K:
            raise PreconditionError(f"theta_k needs 0 <= k < {self.ladder.K}")

    @property
    def width(self) -> float:
        return self.ladder.step(self.k)

    @property
    def gradient_constant(self) -> float:
        """c in |grad theta_k| <= c / g(R_k)."""
        return 2.0 * self.ladder.L_eff * PSI_PRIME_MAX

    def profile(self, x1: ArrayLike) -> tuple[FloatArray, FloatArray, FloatArray]:
        """theta, d theta / dx1 and d^2 theta / dx1^2."""
        s = (self.ladder.R(self.k + 1) - np.asarray(x1, dtype=float)) / self.width
        return (
            transition(s),
            -transition(s, 1) / self.width,
            transition(s, 2) / self.width**2,
        )

    def sampled_gradient_bound(self, samples: int = 2001) -> float:
        """sup |grad theta_k| * g(R_k) over the transition cell."""
        x1 = np.linspace(*self.ladder.cell(self.k), samples)
        _, d1, _ = self.profile(x1)
        return float(np.max(np.abs(d1)) * self.ladder.g_at(self.k))


def theta_eval(
    cutoff: TruncationCutoff, x: tuple[float, float], want_grad: bool = True
) -> tuple[float, Optional[FloatArray]]:
    """theta_k at one point, with gradient (d theta / dx1, 0) on request."""
    value, d1, _ = cutoff.profile(float(x[0]))
    grad = np.array([float(d1), 0.0]) if want_grad else None
    return float(value), grad


@dataclass(frozen=True)
class HopfCutoff:
    """chi(d) = Psi(eps ln(kappa / d)); 1 for d <= kappa e^(-1/eps), 0 for d >= kappa."""

    epsilon: float
    kappa: float

    def __post_init__(self) -> None:
        if self.epsilon <= 0 or self.kappa <= 0:
            raise PreconditionError("HopfCutoff needs epsilon > 0 and kappa > 0")

    @property
    def plateau(self) -> float:
        return self.kappa * math.exp(-min(1.0 / self.epsilon, 700.0))

    def evaluate(self, d: ArrayLike) -> tuple[FloatArray, FloatArray, FloatArray]:
        """chi, chi' and chi'' as functions of the distance-like coordinate d."""
        d = np.asarray(d, dtype=float)
        value = np.where(d < self.kappa, 1.0, 0.0)
        first = np.zeros_like(d)
        second = np.zeros_like(d)
        mask = (d > self.plateau) & (d < self.kappa)
        if mask.any():
            dm = d[mask]
            tau = self.epsilon * np.log(self.kappa / dm)
            t1 = -self.epsilon / dm
            t2 = self.epsilon / (dm * dm)
            p1 = transition(tau, 1)
            value[mask] = transition(tau)
            first[mask] = p1 * t1
            second[mask] = transition(tau, 2) * t1 * t1 + p1 * t2
        return value, first, second

    @property
    def gradient_constant(self) -> float:
        """c in |chi'(d)| <= eps c / d."""
        return PSI_PRIME_MAX
