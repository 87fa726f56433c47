"""Exact laws of symmetric sticky Brownian motion started at 0.

The process has generator f''/2 off the origin and boundary condition
f'(0+)/2 - f'(0-)/2 = alpha * Lf(0).  It is W(r^-1(t)) for a standard
Brownian motion W with r(s) = s + alpha * L^W(s, 0).
"""

from __future__ import annotations

import math

import numpy as np
from scipy import integrate, special

from .errors import DomainError, NumericalFailure

QUAD_RTOL = 1e-8
ERFCX_SWITCH = 6.0


def _check_symmetric(p_plus: float) -> None:
    if abs(p_plus - 0.5) > 1e-12:
        raise DomainError(f"closed forms need p_+ = p_- = 1/2, got p_+ = {p_plus:g}")


def _check_alpha(alpha: float) -> None:
    if not (alpha > 0 and math.isfinite(alpha)):
        raise DomainError(f"alpha must be positive and finite, got {alpha:g}")


def normal_cdf(x: float) -> float:
    """Standard normal distribution function via the complementary error function."""
    return 0.5 * math.erfc(-x / math.sqrt(2.0))


def bm_local_time_tail(t: float, y: float) -> float:
    """``P(L^W(t, 0) > y) = 2 (1 - Phi(y / sqrt(t)))`` for Brownian motion from 0."""
    if not t > 0:
        raise DomainError(f"t must be positive, got {t:g}")
    if y < 0:
        raise DomainError(f"y must be >= 0, got {y:g}")
    return math.erfc(y / math.sqrt(2.0 * t))


def sticky_local_time_tail(t: float, y: float, alpha: float, p_plus: float = 0.5) -> float:
    """``P(alpha L^X(t, 0) > y)``, equal to ``P(L^W(t - y, 0) > y / alpha)``."""
    _check_symmetric(p_plus)
    _check_alpha(alpha)
    if not t > 0:
        raise DomainError(f"t must be positive, got {t:g}")
    if not 0 <= y < t:
        raise DomainError(f"need 0 <= y < t (alpha L <= t), got y={y:g}, t={t:g}")
    return math.erfc((y / alpha) / math.sqrt(2.0 * (t - y)))


def sticky_occupation_cdf(t: float, y: float, alpha: float) -> float:
    """Distribution function of ``alpha L^X(t, 0)``; equals 1 for ``y >= t``."""
    if y < 0:
        return 0.0
    if y >= t:
        return 1.0
    return 1.0 - sticky_local_time_tail(t, y, alpha)


def point_mass(t: float, alpha: float, p_plus: float = 0.5) -> float:
    """``P(X(t) = 0) = 2 exp(2t/alpha^2) (1 - Phi(2 sqrt(t)/alpha))``.

    Written as ``erfcx(sqrt(2t)/alpha)`` so large arguments do not overflow.
    """
    _check_symmetric(p_plus)
    _check_alpha(alpha)
    if t < 0:
        raise DomainError(f"t must be >= 0, got {t:g}")
    z = math.sqrt(2.0 * t) / alpha
    if 2.0 * math.sqrt(t) / alpha > ERFCX_SWITCH:
        return float(special.erfcx(z))
    return math.exp(z * z) * math.erfc(z)


def _quad(f, a, b, what):
    val, err = integrate.quad(f, a, b, epsabs=0.0, epsrel=QUAD_RTOL, limit=200)
    if not math.isfinite(val) or err > max(1e-10, 1e-6 * abs(val)):
        raise NumericalFailure(f"{what}: quadrature did not converge (error {err:g})")
    return val


def expected_occupation(t: float, alpha: float, p_plus: float = 0.5) -> float:
    """``E[alpha L^X(t, 0)] = int_0^t P(alpha L^X(t, 0) > y) dy``.

    Integrated in ``u`` with ``y = t - u^2`` to tame the endpoint at ``y = t``.
    """
    _check_symmetric(p_plus)
    _check_alpha(alpha)
    if t < 0:
        raise DomainError(f"t must be >= 0, got {t:g}")
    if t == 0:
        return 0.0
    root = math.sqrt(t)

    def f(u):
        if u <= 0.0:
            return 0.0
        y = t - u * u
        return 2.0 * u * math.erfc((y / alpha) / (math.sqrt(2.0) * u))

    return _quad(f, 0.0, root, "expected occupation")


def char_fn(lam: float, t: float, alpha: float, p_plus: float = 0.5) -> float:
    """Characteristic function ``E exp(i lam X(t))`` (real by symmetry).

    Solves ``d phi/dt = -(lam^2/2)(phi - P(X(t)=0))`` with ``phi(0) = 1``:
    ``phi = exp(-lam^2 t/2) + (lam^2/2) int_0^t exp(-lam^2 (t-s)/2) P(X(s)=0) ds``.
    """
    _check_symmetric(p_plus)
    _check_alpha(alpha)
    if t < 0:
        raise DomainError(f"t must be >= 0, got {t:g}")
    k = 0.5 * lam * lam
    if t == 0 or k == 0:
        return 1.0
    tail = _quad(lambda s: math.exp(-k * (t - s)) * point_mass(s, alpha), 0.0, t,
                 "characteristic function")
    return math.exp(-k * t) + k * tail


def char_fn_ode_residual(lam: float, t: float, alpha: float, h: float = 1e-4) -> float:
    """``|d phi/dt + (lam^2/2)(phi - P(X(t)=0))|`` with a central difference in t."""
    if t <= h:
        raise DomainError(f"t must exceed the difference step {h:g}")
    dphi = (char_fn(lam, t + h, alpha) - char_fn(lam, t - h, alpha)) / (2 * h)
    return abs(dphi + 0.5 * lam * lam * (char_fn(lam, t, alpha) - point_mass(t, alpha)))


def occupation_from_point_mass(t: float, alpha: float) -> float:
    """``int_0^t P(X(s)=0) ds``; equals :func:`expected_occupation`."""
    _check_alpha(alpha)
    if t <= 0:
        return 0.0
    # substitution s = u^2 smooths the sqrt behaviour at 0
    return _quad(lambda u: 2.0 * u * point_mass(u * u, alpha), 0.0, math.sqrt(t),
                 "point mass integral")


def sticky_occupation_cdf_vec(t: float, y, alpha: float) -> np.ndarray:
    """Vectorised :func:`sticky_occupation_cdf` for KS comparisons."""
    y = np.asarray(y, float)
    out = np.ones_like(y)
    inside = (y >= 0) & (y < t)
    yy = y[inside]
    out[inside] = 1.0 - special.erfc((yy / alpha) / np.sqrt(2.0 * (t - yy)))
    out[y < 0] = 0.0
    return out
