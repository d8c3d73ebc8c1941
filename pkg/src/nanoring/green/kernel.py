"""Fast couplings between atoms that share a radius and local dipole components.

For atoms at the same distance rho from the axis whose dipoles have the same
cylindrical components u = (u_r, u_phi, u_z) in their own local frames, every
channel of the projected coupling depends only on (dtheta, dz) and factorizes
into azimuthal and axial phases:

    g(dtheta, dz) = sum_nu e^{i nu dtheta} sum_k K_nu(k) e^{i k dz}.

The per-node weights K_nu(k) are computed once, so scanning dz costs one
matrix product.  Values are in the dimensionless scaling g_hat = (6 pi / k0) g,
for which decay rates read Gamma / gamma0 = Im g_hat.
"""
from __future__ import annotations

import numpy as np

from ..fiber_modes import FiberSpec, list_guided_modes
from ..quadrature import ConvergenceError, relative_change
from .free import g0_imag_tensor, g0_tensor
from .guided import direction_weight
from .radiation import RadiationBasis, RadiationRule
from .response import outside_field, solve_response, source_amplitudes
from .scattering import auto_nu_max, kz_contour


class GeometryError(ValueError):
    pass


def _local_to_cart(u_local, theta):
    c, s = np.cos(theta), np.sin(theta)
    u_r, u_p, u_z = u_local
    return np.stack(np.broadcast_arrays(c * u_r - s * u_p, s * u_r + c * u_p, u_z + 0 * theta), axis=-1)


def _coincident(dtheta, dz):
    wrapped = np.angle(np.exp(1j * np.asarray(dtheta)))
    return (np.abs(wrapped) < 1e-12) & (np.abs(np.asarray(dz)) < 1e-12)


class RingKernel:
    """Channel-resolved couplings for atoms on a common cylinder rho.

    Parameters
    ----------
    fiber, k0 : fiber and vacuum wavenumber (units of 1/a).
    rho : radius of the atoms, must exceed 1.
    u_local : dipole components (u_r, u_phi, u_z), real, unit norm.
    config : GreenConfig.
    dz_values : axial separations the kernel will be asked about; they set
        the kz contour of the dispersive part and the radiation convergence
        check.
    """

    def __init__(self, fiber: FiberSpec, k0, rho, u_local, config, dz_values=(0.0,), modes=None, cache=None):
        if not rho > 1.0:
            raise GeometryError(f"atoms must lie outside the fiber (rho={rho})")
        self.fiber, self.k0, self.rho = fiber, float(k0), float(rho)
        self.u = np.asarray(u_local, dtype=float)
        if not np.isclose(np.linalg.norm(self.u), 1.0):
            raise ValueError("dipole must be a unit vector")
        self.config = config
        self.scale = 6.0 * np.pi / self.k0
        dz_values = np.abs(np.atleast_1d(np.asarray(dz_values, dtype=float)))
        self.dz_max = float(dz_values.max(initial=0.0))
        if modes is None:
            modes = list_guided_modes(fiber, k0, config.l_max, cache)
        self.modes = modes
        self._build_guided()
        self._build_radiation(dz_values)
        self.has_shifts = bool(config.shifts)
        if self.has_shifts:
            self._build_scattering()

    # -- guided --------------------------------------------------------------
    def _build_guided(self):
        keys, coef, nu, kz, f = [], [], [], [], []
        for s in self.modes:
            a = self.u @ s.profile(self.rho)
            keys.append(s.key)
            coef.append(self.scale * 1j * s.dbeta_domega / (4.0 * self.k0) * abs(a) ** 2)
            nu.append(s.id.nu)
            kz.append(s.kz)
            f.append(s.id.f)
        self.guided_keys = sorted(set(keys), key=lambda k: keys.index(k))
        self._g_key = np.array([self.guided_keys.index(k) for k in keys], dtype=int)
        self._g_coef = np.array(coef, dtype=complex)
        self._g_nu = np.array(nu, dtype=float)
        self._g_kz = np.array(kz, dtype=float)
        self._g_f = np.array(f, dtype=float)

    def guided(self, dtheta, dz):
        """{(family, l, m): complex array} in g_hat units."""
        dtheta, dz = np.broadcast_arrays(np.asarray(dtheta, float), np.asarray(dz, float))
        out = {k: np.zeros(dtheta.shape, complex) for k in self.guided_keys}
        for i in range(len(self._g_coef)):
            w = direction_weight(self._g_f[i], dz)
            ph = np.exp(1j * (self._g_nu[i] * dtheta + self._g_kz[i] * dz))
            out[self.guided_keys[self._g_key[i]]] += self._g_coef[i] * w * ph
        return out

    # -- radiation -----------------------------------------------------------
    def _radiation_weights(self, rule):
        basis = RadiationBasis.build(self.fiber.n_fiber, self.k0, self.config.nu_max, rule)
        fields = basis.state_fields(self.rho)  # (nu, beta, 2, 3)
        proj = fields @ self.u
        kr = self.scale * basis.prefactor()[None, :] * np.sum(np.abs(proj) ** 2, axis=-1)
        return basis.nu[:, 0].astype(float), basis.beta, kr

    def _build_radiation(self, dz_values):
        cfg = self.config
        rule = RadiationRule(cfg.panels, cfg.nodes_per_panel)
        probe = np.unique(np.concatenate([[0.0], dz_values]))
        nu, beta, kr = self._radiation_weights(rule)
        prev = kr @ np.exp(1j * np.outer(beta, probe))
        change = np.inf
        for _ in range(cfg.max_doublings):
            rule = rule.refined()
            nu, beta, kr_new = self._radiation_weights(rule)
            cur = kr_new @ np.exp(1j * np.outer(beta, probe))
            change = relative_change(cur, prev)
            prev, kr = cur, kr_new
            if change < cfg.tol:
                break
        else:
            raise ConvergenceError(
                f"radiation quadrature not converged at k0={self.k0:.6f} (change {change:.2e})", change)
        self.radiation_change = change
        self.radiation_nodes = rule.panels * rule.nodes_per_panel
        self._r_nu, self._r_beta, self._r_k = nu, beta, kr

    @property
    def radiation_orders(self):
        return [int(v) for v in self._r_nu]

    def radiation(self, dtheta, dz):
        """Array (orders, ...) of i * K_nu in g_hat units."""
        dtheta, dz = np.broadcast_arrays(np.asarray(dtheta, float), np.asarray(dz, float))
        flat = dz.ravel()
        axial = self._r_k @ np.exp(1j * np.outer(self._r_beta, flat))
        axial = axial.reshape((-1,) + dz.shape)
        az = np.exp(1j * self._r_nu.reshape((-1,) + (1,) * dz.ndim) * dtheta)
        return 1j * axial * az

    # -- dispersive part (full complex Green's tensor) -----------------------
    def _build_scattering(self):
        cfg = self.config
        n, k0, rho = self.fiber.n_fiber, self.k0, self.rho
        nu_max = cfg.scat_nu_max or auto_nu_max(rho, rho, cfg.scat_tol)
        contour = kz_contour(k0, n, 1, self.dz_max, 2.0 * rho - 2.0, cfg.scat_nodes)
        nu = np.arange(-nu_max, nu_max + 1)[:, None]
        kz = contour.nodes[None, :]
        resp = solve_response(n, k0, nu, kz)
        amps = source_amplitudes(nu, kz, k0, resp.krho, rho, self.u)
        s = np.einsum("...ij,...j->...i", resp.refl, amps)
        fld = outside_field(nu, kz, k0, resp.krho, rho, s[..., 0], s[..., 1], "H")
        expo = np.exp(1j * resp.krho * (2.0 * rho - 2.0) + 1j * resp.krho.real)
        self._s_k = self.scale * (fld @ self.u) * expo * contour.weights[None, :]
        self._s_nu = nu[:, 0].astype(float)
        self._s_kz = contour.nodes
        self.contour = contour

    def _scattered(self, dtheta, dz):
        # the contour serves dz >= 0; reciprocity covers the other sign
        flip = dz < 0
        dtheta = np.where(flip, -dtheta, dtheta)
        dz = np.abs(dz)
        if np.any(dz > self.dz_max * (1 + 1e-12) + 1e-12):
            raise ValueError(f"dz={dz.max()} beyond the kernel's range {self.dz_max}")
        flat_t, flat_z = dtheta.ravel(), dz.ravel()
        axial = self._s_k @ np.exp(1j * np.outer(self._s_kz, flat_z))
        val = np.sum(axial * np.exp(1j * np.outer(self._s_nu, flat_t)), axis=0)
        return val.reshape(dz.shape)

    # -- free space ----------------------------------------------------------
    def free(self, dtheta, dz):
        dtheta, dz = np.broadcast_arrays(np.asarray(dtheta, float), np.asarray(dz, float))
        same = _coincident(dtheta, dz)
        r1 = np.stack([self.rho * np.cos(dtheta), self.rho * np.sin(dtheta), dz], axis=-1)
        r2 = np.array([self.rho, 0.0, 0.0])
        u1 = _local_to_cart(self.u, dtheta)
        u2 = _local_to_cart(self.u, 0.0)
        out = np.empty(dtheta.shape, complex)
        if np.any(~same):
            g = g0_tensor(r1[~same], r2, self.k0)
            out[~same] = self.scale * np.einsum("...i,...ij,j->...", u1[~same], g, u2)
        if np.any(same):
            gi = g0_imag_tensor(r2, r2, self.k0)
            out[same] = 1j * self.scale * (u2 @ gi @ u2)
        return out

    # -- all channels ---------------------------------------------------------
    def channels(self, dtheta, dz):
        """Dictionary of channel arrays: free, guided, radiation, dispersive, total."""
        dtheta, dz = np.broadcast_arrays(np.asarray(dtheta, float), np.asarray(dz, float))
        free = self.free(dtheta, dz)
        guided = self.guided(dtheta, dz)
        rad = self.radiation(dtheta, dz)
        g_sum = sum(guided.values()) if guided else np.zeros(dtheta.shape, complex)
        same = _coincident(dtheta, dz)
        if self.has_shifts:
            full = free + self._scattered(dtheta, dz)
            disp = np.where(same, 0.0, full.real - g_sum.real)
        else:
            disp = np.zeros(dtheta.shape)
        # the radiation orders only carry the anti-Hermitian part; their sum
        # is imaginary up to rounding, which is dropped here
        # without the dispersive channel the real part would be incomplete,
        # so rates-only kernels return a purely imaginary total
        re = np.where(same, 0.0, g_sum.real) + disp if self.has_shifts else 0.0
        total = re + 1j * (g_sum.imag + rad.sum(axis=0).imag)
        return {
            "free": free,
            "guided": guided,
            "radiation": {int(v): rad[i] for i, v in enumerate(self._r_nu)},
            "dispersive": disp,
            "total": total,
        }
