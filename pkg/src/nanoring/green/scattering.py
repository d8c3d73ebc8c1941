"""Full complex Green's tensor of the fiber as G0 + G_scat.

G_scat is the cylinder's response to the cylindrical-wave expansion of a
point dipole,

    G0(r, r') = (i / 8 pi) sum_nu int dkz  J_nu(krho r<) H1_nu(krho r>) e^{i nu dphi + i kz dz}  (+ gradient terms),

integrated over kz on a contour that avoids the branch points +/-k0,
+/-n k0 and the guided poles:

    kz = x - i delta sin(pi x / T),  |x| <= T,

passing below the positive real axis and above the negative one (the
retarded prescription).  Beyond |x| = T the contour turns by 45 degrees into
the half plane where exp(i kz dz) decays, which is why a contour is built
for one sign of dz.  delta shrinks as the largest |dz| grows so that
exp(delta * |dz|) stays bounded.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..cylinder import cart_to_cyl, cyl_basis, cyl_to_cart
from ..quadrature import _leggauss, panel_rule
from .free import g0_tensor
from .response import inside_field, outside_field, solve_response, source_amplitudes

DELTA_CAP = 0.5
# exp(delta * dz_max) is kept at or below exp(GROWTH)
GROWTH = 2.5
# tails are cut where the integrand has decayed by exp(-TAIL_DECAY)
TAIL_DECAY = 36.0


@dataclass(frozen=True)
class KzContour:
    nodes: np.ndarray
    weights: np.ndarray
    sign: int
    delta: float
    half_width: float


def kz_contour(k0: float, n: float, sign: int = 1, dz_max: float = 0.0,
               decay_length: float = 0.2, nodes_per_panel: int = 16,
               refine: int = 1) -> KzContour:
    """Quadrature nodes on the deformed kz contour.

    ``decay_length`` is the smallest (r + r' - 2a) + |dz| the contour has to
    serve; it sets how far the tails extend.  ``refine`` halves all panel
    widths once per unit.
    """
    sign = 1 if sign >= 0 else -1
    big_t = 1.25 * n * k0 + 0.5
    delta = min(DELTA_CAP, GROWTH / max(dz_max, 1e-12))
    width = min(delta, 0.5, 2.0 / max(dz_max, 1.0)) / 2 ** (refine - 1)
    panels = max(4, int(np.ceil(2 * big_t / width)))
    x, wx = panel_rule(np.linspace(-big_t, big_t, panels + 1), nodes_per_panel)
    arg = np.pi * x / big_t
    kz_c = x - 1j * delta * np.sin(arg)
    w_c = wx * (1.0 - 1j * delta * (np.pi / big_t) * np.cos(arg))

    # tails: kz = +/-(T + t) + i sign t
    scale = 1.0 / max(decay_length, 1e-3)
    t_max = TAIL_DECAY * scale
    breaks = [0.0]
    step = min(0.25 * scale, width * 4)
    while breaks[-1] < t_max:
        breaks.append(breaks[-1] + step)
        step *= 1.5
    t, wt = panel_rule(np.array(breaks), nodes_per_panel)
    kz_r = big_t + t + 1j * sign * t
    kz_l = -big_t - t + 1j * sign * t
    w_r = wt * (1.0 + 1j * sign)
    w_l = wt * (1.0 - 1j * sign)  # integrate from -inf up to -T
    nodes = np.concatenate([kz_l[::-1], kz_c, kz_r])
    weights = np.concatenate([w_l[::-1], w_c, w_r])
    return KzContour(nodes, weights, sign, delta, big_t)


def auto_nu_max(r1: float, r2: float, tol: float = 1e-5, cap: int = 80) -> int:
    """Azimuthal orders needed for the quasi-static tail (a^2/(r1 r2))^nu < tol."""
    ratio = 1.0 / max(r1, 1.0 + 1e-6) / max(r2, 1.0 + 1e-6)
    return int(min(cap, max(8, np.ceil(np.log(tol) / np.log(ratio)))))


def _pair_scattered(resp, contour, nu, k0, n, p1, p2, u_cart):
    """G_scat . u_cart at p1 for a unit dipole u_cart at p2 (cylindrical points)."""
    rho1, phi1, z1 = p1
    rho2, phi2, z2 = p2
    u_loc = cyl_basis(phi2) @ u_cart
    amps = source_amplitudes(nu, resp.kz, k0, resp.krho, rho2, u_loc)
    krho = resp.krho
    phase = np.exp(1j * nu * (phi1 - phi2) + 1j * resp.kz * (z1 - z2))
    if rho1 >= 1.0:
        s = np.einsum("...ij,...j->...i", resp.refl, amps)
        fld = outside_field(nu, resp.kz, k0, krho, rho1, s[..., 0], s[..., 1], "H")
        expo = np.exp(1j * krho * (rho1 + rho2 - 2.0) + 1j * krho.real)
    else:
        t = np.einsum("...ij,...j->...i", resp.trans, amps)
        fld = inside_field(nu, resp.kz, k0, n, resp.krho1, rho1, t[..., 0], t[..., 1])
        expo = np.exp(1j * krho * (rho2 - 1.0) + 1j * krho.real - np.abs(resp.krho1.imag) * (1.0 - rho1))
    total = np.sum(fld * (expo * phase * contour.weights)[..., None], axis=(0, 1))
    return cyl_to_cart(total[0], total[1], total[2], phi1)


def _cyl(p):
    p = np.asarray(p, float)
    return float(np.hypot(p[0], p[1])), float(np.arctan2(p[1], p[0])), float(p[2])


def fiber_tensor(n: float, k0: float, r1, r2, nu_max: int | None = None,
                 nodes_per_panel: int = 16, refine: int = 1) -> np.ndarray:
    """Complex 3x3 Green's tensor of the fiber (Cartesian) for one point pair.

    The source r2 must lie outside the core.  For r1 outside this is
    G0 + G_scat; for r1 inside it is the transmitted field alone.
    """
    p1, p2 = _cyl(r1), _cyl(r2)
    if p2[0] <= 1.0:
        raise ValueError("source point must lie outside the fiber")
    dz = p1[2] - p2[2]
    if nu_max is None:
        nu_max = auto_nu_max(p1[0] if p1[0] >= 1.0 else 1.0 / max(p1[0], 1e-3), p2[0])
    dec = max(p1[0], 1.0) + p2[0] - 2.0 + abs(dz)
    contour = kz_contour(k0, n, 1 if dz >= 0 else -1, abs(dz), dec, nodes_per_panel, refine)
    nu = np.arange(-nu_max, nu_max + 1)[:, None]
    resp = solve_response(n, k0, nu, contour.nodes[None, :])
    cols = [_pair_scattered(resp, contour, nu, k0, n, p1, p2, e) for e in np.eye(3)]
    g = np.stack(cols, axis=-1)
    if p1[0] >= 1.0:
        g = g + g0_tensor(np.asarray(r1, float), np.asarray(r2, float), k0)
    return g
