"""Radiation-mode (continuum) part of the fiber Green's tensor.

Radiation modes at fixed (beta, nu) with |beta| < k0 form a two-dimensional
continuum.  The basis used here consists of the two scattering states with a
unit incoming Hankel wave H2_nu(q r) in either E_z or H_z.  Outside the fiber
each state is

    E_z, H_z = 2 J_nu(q r) (in the incoming channel) + s H1_nu(q r),

inside it is the transmitted J_nu(h r) wave.  Unitarity of the scattering
matrix makes the two states orthogonal with equal norm, and combined with the
delta normalization in (beta, q) the anti-Hermitian part of the Green's
tensor becomes

    Im G_r(r, r') = 1 / (32 pi k0^2) sum_nu int_{-k0}^{k0} dbeta q^2
                    sum_c E_c(r) (x) E_c(r')^*,

with E_c carrying exp(i nu phi + i beta z).  In the homogeneous limit this
reduces to Im G0 exactly.  The beta integral is done in t with beta = k0 cos t,
which removes the square-root endpoint behaviour at beta = +/-k0.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..quadrature import clustered_breaks, panel_rule
from .response import inside_field, outside_field, solve_response


@dataclass(frozen=True)
class RadiationRule:
    """Gauss-Legendre panels in t on (0, pi), clustered toward both ends."""

    panels: int = 8
    nodes_per_panel: int = 64

    def nodes(self, k0):
        t, w = panel_rule(clustered_breaks(0.0, np.pi, self.panels), self.nodes_per_panel)
        beta = k0 * np.cos(t)
        q = k0 * np.sin(t)
        # dbeta q^2 = q^3 dt
        return beta, q, w * q**3

    def refined(self):
        return RadiationRule(self.panels, 2 * self.nodes_per_panel)


@dataclass
class RadiationBasis:
    """Solved scattering states for orders nu and the nodes of one rule."""

    n: float
    k0: float
    nu: np.ndarray
    beta: np.ndarray
    q: np.ndarray
    weight: np.ndarray
    resp: object

    @classmethod
    def build(cls, n, k0, nu_max, rule: RadiationRule):
        beta, q, w = rule.nodes(k0)
        nu = np.arange(-nu_max, nu_max + 1)[:, None]
        resp = solve_response(n, k0, nu, beta[None, :] + 0j)
        return cls(n, k0, nu, beta, q, w, resp)

    def state_fields(self, r):
        """Cylindrical fields of both states at radius r: shape (nu, beta, 2, 3)."""
        nu, kz, k0 = self.nu, self.beta[None, :] + 0j, self.k0
        krho = self.resp.krho
        out = []
        for c in range(2):
            if r >= 1.0:
                inc = np.zeros(2)
                inc[c] = 2.0
                s = self.resp.refl[..., :, c] * 2.0
                f = outside_field(nu, kz, k0, krho, r, inc[0], inc[1], "J")
                with np.errstate(over="ignore", invalid="ignore"):
                    sc = outside_field(nu, kz, k0, krho, r, s[..., 0], s[..., 1], "H") * np.exp(
                        1j * krho * (r - 1.0))[..., None]
                # high orders near grazing incidence: the Hankel factor overflows
                # where the reflection has underflowed to zero
                silent = (np.abs(s[..., 0]) == 0) & (np.abs(s[..., 1]) == 0)
                f = f + np.where(silent[..., None], 0.0, sc)
            else:
                t = self.resp.trans[..., :, c] * 2.0
                f = inside_field(nu, kz, k0, self.n, self.resp.krho1, r, t[..., 0], t[..., 1])
            out.append(f)
        return np.stack(out, axis=-2)

    def prefactor(self):
        return self.weight / (32.0 * np.pi * self.k0**2)


def _cart_fields(basis, p):
    """Cartesian state fields at cylindrical point p, phases included."""
    rho, phi, z = p
    f = basis.state_fields(rho)
    ph = np.exp(1j * basis.nu * phi + 1j * basis.beta[None, :] * z)
    c, s = np.cos(phi), np.sin(phi)
    e_r, e_p, e_z = f[..., 0], f[..., 1], f[..., 2]
    cart = np.stack([c * e_r - s * e_p, s * e_r + c * e_p, e_z], axis=-1)
    return cart * ph[..., None, None]


def radiation_orders(basis: RadiationBasis, p1, p2) -> np.ndarray:
    """Per-order anti-Hermitian part, shape (2 nu_max + 1, 3, 3) (Cartesian).

    p1, p2 are cylindrical (rho, phi, z).  Summing over orders gives
    Im G_r(r1, r2) up to truncation.
    """
    e1 = _cart_fields(basis, p1)
    e2 = _cart_fields(basis, p2)
    w = basis.prefactor()
    return np.einsum("b,vbci,vbcj->vij", w, e1, e2.conj())
