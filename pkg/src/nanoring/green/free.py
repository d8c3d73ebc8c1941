"""Free-space dyadic Green's tensor.

Normalization: curl curl G - k0^2 G = delta * I, so that

    G0(R) = exp(i k R) / (4 pi R) * [ (1 + i/x - 1/x^2) I + (-1 - 3i/x + 3/x^2) R^R^ ],  x = k R

and Im G0(r, r) = k0 / (6 pi) * I.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

# below this k*R the imaginary part switches to its Taylor series
_SERIES_X = 0.05


class SingularityError(ValueError):
    pass


@dataclass(frozen=True)
class DyadicValue:
    """A 3x3 dyadic evaluated at (r1, r2) and frequency k0."""

    matrix: np.ndarray = field(repr=False)
    r1: tuple
    r2: tuple
    k0: float
    basis: str = "cartesian"

    def __post_init__(self):
        if self.basis not in ("cartesian", "cylindrical"):
            raise ValueError(f"unknown basis {self.basis!r}")
        if np.shape(self.matrix) != (3, 3):
            raise ValueError("matrix must be 3x3")

    def project(self, u1, u2) -> complex:
        """u1* . G . u2"""
        return complex(np.conj(u1) @ self.matrix @ np.asarray(u2))


def _split(r1, r2):
    d = np.asarray(r1, float) - np.asarray(r2, float)
    dist = np.linalg.norm(d, axis=-1)
    with np.errstate(invalid="ignore", divide="ignore"):
        rhat = d / dist[..., None]
    rr = rhat[..., :, None] * rhat[..., None, :]
    return dist, rr


def g0_tensor(r1, r2, k0):
    """Full complex G0 for arrays of point pairs, shape (..., 3, 3)."""
    dist, rr = _split(r1, r2)
    if np.any(dist == 0.0):
        raise SingularityError("real part of G0 diverges at coincident points")
    x = np.asarray(k0 * dist, dtype=float)
    pre = np.exp(1j * x) / (4.0 * np.pi * dist)
    a = np.asarray(1.0 + 1j / x - 1.0 / x**2)
    b = np.asarray(-1.0 - 3j / x + 3.0 / x**2)
    eye = np.eye(3)
    return pre[..., None, None] * (a[..., None, None] * eye + b[..., None, None] * rr)


def g0_imag_tensor(r1, r2, k0):
    """Im G0, regular everywhere including coincident points."""
    dist, rr = _split(r1, r2)
    x = np.asarray(k0 * dist, dtype=float)
    small = x < _SERIES_X
    xs = np.where(small, 1.0, x)
    s, c = np.sin(xs), np.cos(xs)
    a = s / xs - s / xs**3 + c / xs**2
    b = -s / xs - 3.0 * c / xs**2 + 3.0 * s / xs**3
    x2 = x * x
    a = np.where(small, 2.0 / 3.0 - 2.0 * x2 / 15.0 + x2 * x2 / 140.0, a)
    b = np.where(small, x2 / 15.0 - x2 * x2 / 210.0, b)
    rr = np.where(small[..., None, None], 0.0, rr)
    eye = np.eye(3)
    return (k0 / (4.0 * np.pi)) * (a[..., None, None] * eye + b[..., None, None] * rr)


def g0(r1, r2, k0, imag_only: bool = False) -> DyadicValue:
    """Free-space dyadic at a single point pair.

    At coincident points only the imaginary part exists; pass
    ``imag_only=True`` to get ``i * Im G0`` there instead of an error.
    """
    r1 = tuple(float(v) for v in r1)
    r2 = tuple(float(v) for v in r2)
    if imag_only:
        m = 1j * g0_imag_tensor(np.array(r1), np.array(r2), k0)
    else:
        m = g0_tensor(np.array(r1), np.array(r2), k0)
    return DyadicValue(np.asarray(m, dtype=complex), r1, r2, float(k0))
