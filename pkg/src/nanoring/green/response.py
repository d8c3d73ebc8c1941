"""Response of the dielectric cylinder to a regular cylindrical wave.

For one azimuthal order nu and axial wavenumber kz, an incident field outside
the fiber with longitudinal components

    E_z = a J_nu(krho r),  H_z = b J_nu(krho r)

produces a scattered wave (s_E, s_H) * H1_nu(krho r) outside and a
transmitted wave (t_E, t_H) * J_nu(krho1 r) inside, where
krho = sqrt(k0^2 - kz^2) (Im >= 0) and krho1 = sqrt(n^2 k0^2 - kz^2).

All Bessel factors are exponentially scaled.  The solver returns

    s_hat = s * exp(i krho - Im krho),   t_hat = t * exp(Im krho1 - Im krho)

per unit incident amplitude, which stay O(1) anywhere on the integration
contours.  The callers restore the exponentials in combined form so that
nothing overflows.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import specfun as sf
from ..cylinder import tangential, transverse


def radial_wavenumbers(k0, n, kz):
    kz = np.asarray(kz, dtype=complex)
    krho = np.sqrt(k0 * k0 - kz * kz)
    krho = np.where(krho.imag < 0, -krho, krho)
    krho1 = np.sqrt(n * n * k0 * k0 - kz * kz)
    return krho, krho1


@dataclass
class Response:
    """Scaled reflection (2x2) and transmission (2x2) per (nu, kz) node.

    Columns correspond to unit incident (a, b); rows to (E_z, H_z) amplitudes.
    """

    nu: np.ndarray
    kz: np.ndarray
    krho: np.ndarray
    krho1: np.ndarray
    refl: np.ndarray
    trans: np.ndarray


def solve_response(n, k0, nu, kz) -> Response:
    nu, kz = np.broadcast_arrays(np.asarray(nu), np.asarray(kz, dtype=complex))
    krho, krho1 = radial_wavenumbers(k0, n, kz)
    eps = n * n
    j, dj = sf.jve_c(nu, krho)
    h, dh = sf.h1e_c(nu, krho)
    j1, dj1 = sf.jve_c(nu, krho1)
    kt_o, kt_i = krho * krho, krho1 * krho1
    zero = np.zeros_like(j)
    args_o = (nu, kz, k0, 1.0, kt_o, 1.0)
    args_i = (nu, kz, k0, eps, kt_i, 1.0)
    with np.errstate(over="ignore", invalid="ignore"):
        cols = np.stack([
            tangential(*args_o, h, krho * dh, zero, zero),
            tangential(*args_o, zero, zero, h, krho * dh),
            -tangential(*args_i, j1, krho1 * dj1, zero, zero),
            -tangential(*args_i, zero, zero, j1, krho1 * dj1),
        ], axis=-1)
        rhs = -np.stack([
            tangential(*args_o, j, krho * dj, zero, zero),
            tangential(*args_o, zero, zero, j, krho * dj),
        ], axis=-1)
    # orders far above k0 a overflow the Hankel factors at the surface; the
    # fiber is transparent to them (response below double precision)
    bad = ~(np.all(np.isfinite(cols), axis=(-2, -1)) & np.all(np.isfinite(rhs), axis=(-2, -1)))
    if np.any(bad):
        cols = np.where(bad[..., None, None], np.eye(4), cols)
        rhs = np.where(bad[..., None, None], 0.0, rhs)
    # column equilibration keeps the solve accurate when the Hankel and
    # Bessel columns differ by many orders of magnitude
    scale = np.max(np.abs(cols), axis=-2, keepdims=True)
    scale = np.where(scale > 0, scale, 1.0)
    sol = np.linalg.solve(cols / scale, rhs) / np.swapaxes(scale, -1, -2)
    return Response(nu, kz, krho, krho1, sol[..., :2, :], sol[..., 2:, :])


def outside_field(nu, kz, k0, krho, r, ez_amp, hz_amp, kind):
    """(E_r, E_phi, E_z) at radius r outside the fiber for E_z, H_z amplitudes
    multiplying ``kind`` = 'J' (scaled jve) or 'H' (scaled hankel1e)."""
    x = krho * r
    if kind == "J":
        f, df = sf.jve_c(nu, x)
    else:
        f, df = sf.h1e_c(nu, x)
    ez, dez = ez_amp * f, ez_amp * krho * df
    hz, dhz = hz_amp * f, hz_amp * krho * df
    e_r, e_phi, _, _ = transverse(nu, kz, k0, 1.0, krho * krho, r, ez, dez, hz, dhz)
    return np.stack(np.broadcast_arrays(e_r, e_phi, ez), axis=-1)


def inside_field(nu, kz, k0, n, krho1, r, ez_amp, hz_amp):
    x = krho1 * r
    f, df = sf.jve_c(nu, x)
    ez, dez = ez_amp * f, ez_amp * krho1 * df
    hz, dhz = hz_amp * f, hz_amp * krho1 * df
    e_r, e_phi, _, _ = transverse(nu, kz, k0, n * n, krho1 * krho1, r, ez, dez, hz, dhz)
    return np.stack(np.broadcast_arrays(e_r, e_phi, ez), axis=-1)


def source_amplitudes(nu, kz, k0, krho, r_src, u_local):
    """Scaled incident amplitudes (a_hat, b_hat) at the fiber of a unit point
    dipole at radius r_src with local components u_local = (u_r, u_phi, u_z).

    The true amplitudes are (a_hat, b_hat) * exp(i krho r_src) times the
    source phase exp(-i nu phi_src - i kz z_src).
    """
    h, dh = sf.h1e_c(nu, krho * r_src)
    u = np.asarray(u_local)
    u_r, u_p, u_z = u[..., 0], u[..., 1], u[..., 2]
    a = (1j / (8.0 * np.pi * k0 * k0)) * (
        u_z * krho * krho * h - 1j * kz * krho * u_r * dh - (kz * nu / r_src) * u_p * h)
    b = -(1.0 / (8.0 * np.pi * k0)) * (krho * dh * u_p + (1j * nu / r_src) * h * u_r)
    return np.stack(np.broadcast_arrays(a, b), axis=-1)
