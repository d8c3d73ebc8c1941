"""Cylinder functions for the mode solvers.

Scalar entry points (``bessel_j`` and friends) validate their inputs and
return a :class:`BesselEval`; the array helpers below are thin wrappers over
``scipy.special`` used by the vectorized kernels.  Complex arguments are only
supported by the exponentially scaled helpers (``jve_c``, ``h1e_c``), which the
scattering integrals evaluate on a deformed contour.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import special as sp

MAX_ORDER = 10
MAX_ARG = 1.0e3

# exp() overflows/underflows beyond this; I and K switch to scaled storage
_EXP_SAFE = 700.0


class BesselDomainError(ValueError):
    pass


@dataclass(frozen=True)
class BesselEval:
    """Value and first derivative of a cylinder function.

    The true value is ``value * exp(exponent)``.  ``exponent`` is zero unless
    the unscaled number is not representable in double precision (I and K
    beyond x ~ 700).
    """

    order: int
    argument: float
    value: float
    derivative: float
    exponent: float = 0.0

    @property
    def true_value(self) -> float:
        return self.value * np.exp(self.exponent)

    @property
    def true_derivative(self) -> float:
        return self.derivative * np.exp(self.exponent)

    @property
    def log_abs_value(self) -> float:
        return float(np.log(abs(self.value)) + self.exponent)


def _check(order, x):
    if isinstance(order, bool) or not isinstance(order, (int, np.integer)):
        raise BesselDomainError(f"order must be an integer, got {order!r}")
    if not 0 <= order <= MAX_ORDER:
        raise BesselDomainError(f"order {order} outside [0, {MAX_ORDER}]")
    x = float(x)
    if not np.isfinite(x) or x <= 0.0 or x > MAX_ARG:
        raise BesselDomainError(f"argument {x} outside (0, {MAX_ARG:g}]")
    return int(order), x


def bessel_j(order: int, x: float) -> BesselEval:
    order, x = _check(order, x)
    return BesselEval(order, x, float(sp.jv(order, x)), float(sp.jvp(order, x)))


def bessel_y(order: int, x: float) -> BesselEval:
    order, x = _check(order, x)
    return BesselEval(order, x, float(sp.yv(order, x)), float(sp.yvp(order, x)))


def bessel_i(order: int, x: float) -> BesselEval:
    order, x = _check(order, x)
    if x <= _EXP_SAFE:
        return BesselEval(order, x, float(sp.iv(order, x)), float(sp.ivp(order, x)))
    # I'_v = (I_{v-1} + I_{v+1}) / 2 holds for the scaled functions too
    val = sp.ive(order, x)
    der = 0.5 * (sp.ive(order - 1, x) + sp.ive(order + 1, x))
    return BesselEval(order, x, float(val), float(der), exponent=x)


def bessel_k(order: int, x: float) -> BesselEval:
    order, x = _check(order, x)
    if x <= _EXP_SAFE:
        return BesselEval(order, x, float(sp.kv(order, x)), float(sp.kvp(order, x)))
    val = sp.kve(order, x)
    der = -0.5 * (sp.kve(order - 1, x) + sp.kve(order + 1, x))
    return BesselEval(order, x, float(val), float(der), exponent=-x)


# ---------------------------------------------------------------------------
# array helpers (real argument, integer order)

jv = sp.jv
yv = sp.yv
kv = sp.kv
iv = sp.iv
kve = sp.kve


def jvp(nu, x):
    return 0.5 * (sp.jv(nu - 1, x) - sp.jv(nu + 1, x))


def yvp(nu, x):
    return 0.5 * (sp.yv(nu - 1, x) - sp.yv(nu + 1, x))


def kvp(nu, x):
    return -0.5 * (sp.kv(nu - 1, x) + sp.kv(nu + 1, x))


def kvep(nu, x):
    """Derivative of K scaled by exp(x): K'_nu(x) * exp(x)."""
    return -0.5 * (sp.kve(nu - 1, x) + sp.kve(nu + 1, x))


# ---------------------------------------------------------------------------
# complex argument, exponentially scaled


def jve_c(nu, z):
    """J_nu(z) * exp(-|Im z|) and its z-derivative with the same scaling."""
    val = sp.jve(nu, z)
    der = 0.5 * (sp.jve(nu - 1, z) - sp.jve(nu + 1, z))
    return val, der


def h1e_c(nu, z):
    """H1_nu(z) * exp(-i z) and its z-derivative with the same scaling."""
    val = sp.hankel1e(nu, z)
    der = 0.5 * (sp.hankel1e(nu - 1, z) - sp.hankel1e(nu + 1, z))
    return val, der
