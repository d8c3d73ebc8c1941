"""Field components of cylindrical waves in a homogeneous region.

Units: fiber radius a = 1, c = mu0 = eps0 = 1, so omega = k0 and the relative
permittivity is eps = n**2.  Every wave carries exp(i*nu*phi + i*kz*z - i*w*t).
Given the longitudinal components E_z, H_z (and their radial derivatives) the
transverse ones follow from Maxwell's curl equations:

    E_r   = ( i kz dEz - k0 nu Hz / r) / kt2
    E_phi = (-kz nu Ez / r - i k0 dHz) / kt2
    H_r   = ( i kz dHz + k0 eps nu Ez / r) / kt2
    H_phi = (-kz nu Hz / r + i k0 eps dEz) / kt2

with kt2 = eps k0**2 - kz**2.
"""
from __future__ import annotations

import numpy as np


def transverse(nu, kz, k0, eps, kt2, r, ez, dez, hz, dhz):
    """Return (E_r, E_phi, H_r, H_phi); all arguments broadcast."""
    inv = 1.0 / kt2
    e_r = (1j * kz * dez - k0 * nu * hz / r) * inv
    e_phi = (-kz * nu * ez / r - 1j * k0 * dhz) * inv
    h_r = (1j * kz * dhz + k0 * eps * nu * ez / r) * inv
    h_phi = (-kz * nu * hz / r + 1j * k0 * eps * dez) * inv
    return e_r, e_phi, h_r, h_phi


def tangential(nu, kz, k0, eps, kt2, r, ez, dez, hz, dhz):
    """Tangential set (E_z, H_z, E_phi, H_phi) used in boundary matching."""
    _, e_phi, _, h_phi = transverse(nu, kz, k0, eps, kt2, r, ez, dez, hz, dhz)
    return np.stack(np.broadcast_arrays(ez, hz, e_phi, h_phi), axis=-1)


def cyl_to_cart(e_r, e_phi, e_z, phi):
    c, s = np.cos(phi), np.sin(phi)
    return np.stack([c * e_r - s * e_phi, s * e_r + c * e_phi, e_z], axis=-1)


def cart_to_cyl(vec, phi):
    """vec[..., 3] Cartesian -> (r, phi, z) components at azimuth phi."""
    c, s = np.cos(phi), np.sin(phi)
    vx, vy, vz = vec[..., 0], vec[..., 1], vec[..., 2]
    return np.stack([c * vx + s * vy, -s * vx + c * vy, vz], axis=-1)


def cyl_basis(phi):
    """Rows r_hat, phi_hat, z_hat (Cartesian) at azimuth phi: shape (..., 3, 3)."""
    phi = np.asarray(phi, dtype=float)
    c, s = np.cos(phi), np.sin(phi)
    z, o = np.zeros_like(phi), np.ones_like(phi)
    r_hat = np.stack([c, s, z], axis=-1)
    p_hat = np.stack([-s, c, z], axis=-1)
    z_hat = np.stack([z, z, o], axis=-1)
    return np.stack([r_hat, p_hat, z_hat], axis=-2)
