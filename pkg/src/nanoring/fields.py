"""Emitted field and intensity maps of a prepared single-excitation state.

The field of amplitudes c_j on dipoles u_j at r_j is taken as

    E(r) = (6 pi / k0) sum_j G(r, r_j) . u_j c_j,

(arbitrary units; maps are normalized to a maximum of 1 anyway).  Near the
fiber G = G0 + G_scat outside the core and the transmitted field inside,
both from the cylindrical-wave construction.  For one ring the sources only
enter through

    C_nu = sum_j c_j exp(-i nu theta_j),

so a REM n only excites the orders nu = n mod N and the 2 pi / N rotation
symmetry of |E|^2 is exact.
"""
from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.signal import find_peaks

from .collective import ENVIRONMENTS, RingSpec
from .cylinder import cyl_to_cart
from .fiber_modes import FiberSpec, GuidedModeSolution
from .green import GreenConfig
from .green.free import SingularityError, g0_tensor
from .green.response import inside_field, outside_field, solve_response, source_amplitudes
from .green.scattering import auto_nu_max, kz_contour

MIN_DISTANCE = 1e-3
AXIS_EPS = 1e-9
# orders whose source sum is below this fraction of the largest are skipped
ORDER_CUTOFF = 1e-13
# radial grid used for constant-z planes (per side of the fiber surface)
RADIAL_POINTS = (64, 320)


def _check_inputs(amplitudes, rings, environment):
    if environment not in ENVIRONMENTS:
        raise ValueError(f"environment must be one of {ENVIRONMENTS}")
    rings = tuple(rings)
    c = np.asarray(amplitudes, dtype=complex).ravel()
    if c.size != sum(r.n_atoms for r in rings):
        raise ValueError("one amplitude per atom is required")
    return c, rings


def _split(c, rings):
    out, i = [], 0
    for r in rings:
        out.append(c[i:i + r.n_atoms])
        i += r.n_atoms
    return out


def _free_field(points, c, rings, k0):
    """(6 pi / k0) sum_j G0(r, r_j) u_j c_j at points[..., 3]."""
    pts = np.asarray(points, float)
    e = np.zeros(pts.shape, complex)
    pos = np.concatenate([r.positions for r in rings])
    dip = np.concatenate([r.dipoles for r in rings])
    for rj, uj, cj in zip(pos, dip, c):
        if cj == 0:
            continue
        g = g0_tensor(pts, rj, k0)
        e += cj * np.einsum("...ij,j->...i", g, uj)
    return (6.0 * np.pi / k0) * e


def _check_distance(points, rings):
    pts = np.asarray(points, float).reshape(-1, 3)
    pos = np.concatenate([r.positions for r in rings])
    d = np.min(np.linalg.norm(pts[:, None, :] - pos[None, :, :], axis=-1))
    if d < MIN_DISTANCE:
        raise SingularityError(f"field point within {d:.2e} of an atom")


class _RingScatter:
    """Scattered (or transmitted) field of one ring on kz contours.

    One contour per sign of z - z_ring; ``radial(r, sign)`` gives the
    per-(nu, kz) field at radius r with source sums, weights and scaled
    exponentials folded in, in cylindrical components.
    """

    def __init__(self, ring: RingSpec, amps, fiber: FiberSpec, k0, config: GreenConfig,
                 dz_abs_max, r_min, signs=(1, -1)):
        self.ring, self.fiber, self.k0 = ring, fiber, float(k0)
        n = fiber.n_fiber
        cnu_max = config.scat_nu_max or auto_nu_max(max(r_min, 1.0), ring.rho, config.scat_tol)
        if r_min < 1.0:
            cnu_max = config.scat_nu_max or auto_nu_max(1.0 / max(r_min, 1e-3), ring.rho, config.scat_tol)
        nu = np.arange(-cnu_max, cnu_max + 1)
        csum = np.exp(-1j * np.outer(nu, ring.thetas)) @ amps
        keep = np.abs(csum) > ORDER_CUTOFF * max(np.max(np.abs(csum)), 1e-300)
        self.nu = nu[keep][:, None]
        self.csum = csum[keep][:, None]
        self.contours, self.resp, self.src = {}, {}, {}
        if not np.any(keep):
            return
        decay = max(r_min, 1.0) + ring.rho - 2.0
        for s in signs:
            ct = kz_contour(self.k0, n, s, dz_abs_max, max(decay, 1e-2), config.scat_nodes)
            resp = solve_response(n, self.k0, self.nu, ct.nodes[None, :])
            self.contours[s], self.resp[s] = ct, resp
            self.src[s] = source_amplitudes(self.nu, resp.kz, self.k0, resp.krho, ring.rho, ring.u_local)

    @property
    def empty(self):
        return self.nu.size == 0

    def radial(self, r, sign):
        """(nu, kz, 3) cylindrical field factors at radius r."""
        resp, ct, amps = self.resp[sign], self.contours[sign], self.src[sign]
        krho, rho = resp.krho, self.ring.rho
        if r >= 1.0:
            s = np.einsum("...ij,...j->...i", resp.refl, amps)
            fld = outside_field(self.nu, resp.kz, self.k0, krho, r, s[..., 0], s[..., 1], "H")
            expo = np.exp(1j * krho * (r + rho - 2.0) + 1j * krho.real)
        else:
            t = np.einsum("...ij,...j->...i", resp.trans, amps)
            # the nu / r terms have finite limits on the axis
            r = max(r, AXIS_EPS)
            fld = inside_field(self.nu, resp.kz, self.k0, self.fiber.n_fiber, resp.krho1, r, t[..., 0], t[..., 1])
            expo = np.exp(1j * krho * (rho - 1.0) + 1j * krho.real - np.abs(resp.krho1.imag) * (1.0 - r))
        return fld * (expo * ct.weights[None, :] * self.csum)[..., None]

    def at_radius(self, r, phi, z):
        """Cylindrical field at points of a common radius: phi, z 1-d arrays."""
        phi, z = np.broadcast_arrays(np.asarray(phi, float), np.asarray(z, float))
        out = np.zeros(phi.shape + (3,), complex)
        if self.empty:
            return out
        dz = z - self.ring.z0
        for s in (1, -1):
            sel = (dz >= 0) if s == 1 else (dz < 0)
            if not np.any(sel):
                continue
            f = self.radial(r, s)  # (nu, kz, 3)
            kz = self.contours[s].nodes
            az = np.exp(1j * np.outer(phi[sel], self.nu[:, 0]))  # (p, nu)
            ax = np.exp(1j * np.outer(kz, dz[sel]))  # (kz, p)
            out[sel] = np.einsum("pn,nkc,kp->pc", az, f, ax)
        return out


def field_at(point, amplitudes, rings: Sequence[RingSpec], environment: str = "fiber",
             fiber: Optional[FiberSpec] = None, k0: float = 1.0,
             config: GreenConfig = GreenConfig()) -> np.ndarray:
    """Complex Cartesian field at one point (arbitrary units, see module doc)."""
    c, rings = _check_inputs(amplitudes, rings, environment)
    p = np.asarray(point, float)
    _check_distance(p, rings)
    return field_at_points(p[None, :], c, rings, environment, fiber, k0, config)[0]


def field_at_points(points, amplitudes, rings, environment="fiber", fiber=None, k0=1.0,
                    config: GreenConfig = GreenConfig(), threads: int = 1) -> np.ndarray:
    """Field at an array of points (..., 3); points sharing a radius are batched."""
    c, rings = _check_inputs(amplitudes, rings, environment)
    pts = np.asarray(points, float)
    shape = pts.shape
    pts = pts.reshape(-1, 3)
    _check_distance(pts, rings)
    r = np.hypot(pts[:, 0], pts[:, 1])
    if environment == "free":
        return _free_field(pts, c, rings, k0).reshape(shape)
    if fiber is None:
        raise ValueError("a fiber is required for environment='fiber'")
    inside = r < fiber.radius
    out = np.zeros(pts.shape, complex)
    if np.any(~inside):
        out[~inside] = _free_field(pts[~inside], c, rings, k0)
    phi = np.arctan2(pts[:, 1], pts[:, 0])
    scale = 6.0 * np.pi / k0
    radii, inv = np.unique(np.round(r, 12), return_inverse=True)
    for ring, amps in zip(rings, _split(c, rings)):
        dz = pts[:, 2] - ring.z0
        sc = _RingScatter(ring, amps, fiber, k0, config, float(np.max(np.abs(dz))), float(radii[0]))
        if sc.empty:
            continue

        def work(i):
            sel = inv == i
            return sel, sc.at_radius(radii[i], phi[sel], pts[sel, 2])

        items = range(len(radii))
        if threads > 1:
            with ThreadPoolExecutor(threads) as ex:
                parts = list(ex.map(work, items))
        else:
            parts = [work(i) for i in items]
        for sel, cyl in parts:
            out[sel] += scale * cyl_to_cart(cyl[:, 0], cyl[:, 1], cyl[:, 2], phi[sel])
    return out.reshape(shape)


# ---------------------------------------------------------------------------
# planar maps


REFERENCE_PLANES = {"xz": (1.5, 5.0), "xy": (1.5, 5.0, 20.0)}


@dataclass
class IntensityGrid:
    """|E|^2 on a plane, normalized to a maximum of 1.

    ``plane`` is 'xz' (fixed y = offset) or 'xy' (fixed z = offset);
    ``intensity[i, j]`` belongs to (u[j], v[i]) with u = x and v = z or y.
    ``mask`` flags pixels inside the fiber core (their values are evaluated
    from the transmitted field, not zeroed).
    """

    plane: str
    offset: float
    u: np.ndarray
    v: np.ndarray
    intensity: np.ndarray
    environment: str
    mask: np.ndarray
    peak: float = 1.0
    meta: dict = field(default_factory=dict)

    @property
    def resolution(self):
        return (len(self.u), len(self.v))

    def header(self) -> dict:
        flat = np.flatnonzero(self.mask.ravel())
        return {
            "plane": self.plane,
            "offset_over_a": self.offset,
            "extents": {"u": [float(self.u[0]), float(self.u[-1])], "v": [float(self.v[0]), float(self.v[-1])]},
            "axes": {"u": "x", "v": "z" if self.plane == "xz" else "y"},
            "resolution": list(self.resolution),
            "environment": self.environment,
            "normalization": {"peak_before_scaling": self.peak},
            "mask": {"kind": "fiber_core", "radius_over_a": 1.0, "values_evaluated": True,
                     "count": int(flat.size), "flat_indices": flat.tolist()},
            **self.meta,
        }

    def write(self, json_fh, csv_fh):
        json.dump(self.header(), json_fh, indent=1)
        json_fh.write("\n")
        csv_fh.write("x,y_or_z,intensity\n")
        for i, vv in enumerate(self.v):
            for j, uu in enumerate(self.u):
                csv_fh.write(f"{uu:.10g},{vv:.10g},{self.intensity[i, j]:.10g}\n")


DEFAULT_HALF_WIDTH = 10.0  # in units of rho, on every axis


def default_extent(rings):
    rho = max(r.rho for r in rings)
    return (-DEFAULT_HALF_WIDTH * rho, DEFAULT_HALF_WIDTH * rho)


def _radial_grid(r_max):
    # clustered toward the fiber surface, where high orders vary fastest
    n_in, n_out = RADIAL_POINTS
    t_in = np.linspace(0.0, 1.0, n_in)
    inner = 1.0 - (1.0 - t_in) ** 2 if r_max > 0 else t_in
    t_out = np.linspace(0.0, 1.0, n_out)
    outer = 1.0 + (r_max - 1.0) * t_out ** 2
    return inner, outer


def _xy_fiber(us, vs, z, c, rings, fiber, k0, config, threads):
    """Scattered / transmitted field on a constant-z plane via radial splines."""
    xx, yy = np.meshgrid(us, vs)
    r = np.hypot(xx, yy)
    phi = np.arctan2(yy, xx)
    out = np.zeros(xx.shape + (3,), complex)
    r_max = float(r.max()) * (1 + 1e-9)
    inner, outer = _radial_grid(max(r_max, 1.0 + 1e-6))
    scale = 6.0 * np.pi / k0
    for ring, amps in zip(rings, _split(c, rings)):
        dz = z - ring.z0
        sign = 1 if dz >= 0 else -1
        r_min = float(r.min())
        sc = _RingScatter(ring, amps, fiber, k0, config, abs(dz), r_min, signs=(sign,))
        if sc.empty:
            continue
        for region, grid in (("in", inner), ("out", outer)):
            sel = (r < 1.0) if region == "in" else (r >= 1.0)
            if not np.any(sel):
                continue
            if region == "in":
                grid = grid[grid < 1.0]
                grid = np.append(grid, 1.0 - 1e-12)
            ax = np.exp(1j * sc.contours[sign].nodes * dz)

            def work(rr):
                return np.einsum("nkc,k->nc", sc.radial(rr, sign), ax)

            if threads > 1:
                with ThreadPoolExecutor(threads) as ex:
                    vals = np.stack(list(ex.map(work, grid)))
            else:
                vals = np.stack([work(rr) for rr in grid])
            spline = CubicSpline(grid, vals, axis=0)
            rad = spline(r[sel])  # (p, nu, 3)
            cyl = np.einsum("pnc,pn->pc", rad, np.exp(1j * np.outer(phi[sel], sc.nu[:, 0])))
            out[sel] += scale * cyl_to_cart(cyl[:, 0], cyl[:, 1], cyl[:, 2], phi[sel])
    return out


def intensity_map(plane: str, amplitudes, rings: Sequence[RingSpec], environment: str = "fiber",
                  fiber: Optional[FiberSpec] = None, k0: float = 1.0, offset: float = 1.5 * 1.1,
                  resolution: int = 201, extent_u=None, extent_v=None,
                  config: GreenConfig = GreenConfig(), threads: int = 1) -> IntensityGrid:
    """Normalized |E|^2 on the plane y = offset ('xz') or z = offset ('xy').

    ``resolution`` is the number of samples per axis (an int or a pair).
    Extents default to +/-10 rho on both axes.
    """
    if plane not in ("xz", "xy"):
        raise ValueError("plane must be 'xz' or 'xy'")
    c, rings = _check_inputs(amplitudes, rings, environment)
    nu_, nv_ = (resolution, resolution) if np.isscalar(resolution) else resolution
    if nu_ < 2 or nv_ < 2:
        raise ValueError("resolution must be at least 2 per axis")
    eu = extent_u or default_extent(rings)
    ev = extent_v or default_extent(rings)
    us = np.linspace(eu[0], eu[1], int(nu_))
    vs = np.linspace(ev[0], ev[1], int(nv_))
    uu, vv = np.meshgrid(us, vs)
    if plane == "xz":
        pts = np.stack([uu, np.full_like(uu, offset), vv], axis=-1)
    else:
        pts = np.stack([uu, vv, np.full_like(uu, offset)], axis=-1)
    _check_distance(pts, rings)
    r = np.hypot(pts[..., 0], pts[..., 1])
    mask = (r < 1.0) if environment == "fiber" else np.zeros(r.shape, bool)
    if environment == "free":
        e = _free_field(pts, c, rings, k0)
    elif fiber is None:
        raise ValueError("a fiber is required for environment='fiber'")
    elif plane == "xz":
        e = field_at_points(pts, c, rings, environment, fiber, k0, config, threads)
    else:
        e = _xy_fiber(us, vs, offset, c, rings, fiber, k0, config, threads)
        outside = r >= 1.0
        e[outside] += _free_field(pts[outside], c, rings, k0)
    inten = np.sum(np.abs(e) ** 2, axis=-1)
    peak = float(inten.max())
    if peak > 0:
        inten = inten / peak
    return IntensityGrid(plane, float(offset), us, vs, inten, environment, mask, peak)


def mode_intensity(mode: GuidedModeSolution, x, y) -> np.ndarray:
    """|e|^2 of a guided mode on (x, y) points (phase-independent)."""
    r = np.maximum(np.hypot(x, y), AXIS_EPS)
    e = mode.profile(np.ravel(r))
    return np.sum(np.abs(e) ** 2, axis=-1).reshape(np.shape(r))


def correlation(a, b) -> float:
    """Normalized (zero-mean) cross-correlation of two maps."""
    a = np.asarray(a, float).ravel() - np.mean(a)
    b = np.asarray(b, float).ravel() - np.mean(b)
    den = np.linalg.norm(a) * np.linalg.norm(b)
    return float(a @ b / den) if den > 0 else 0.0


def count_maxima(values, rel_prominence: float = 0.01) -> int:
    """Interior local maxima of a 1-d profile whose prominence is at least
    ``rel_prominence`` times the profile maximum (quadrature ripple is
    ignored that way)."""
    v = np.asarray(values, float)
    top = float(np.max(v)) if v.size else 0.0
    if top <= 0:
        return 0
    peaks, _ = find_peaks(v, prominence=rel_prominence * top)
    return int(len(peaks))


def fringe_count(grid: IntensityGrid, rel_prominence: float = 0.01) -> int:
    """Prominent maxima summed over every fixed-v cut (rows) of a map."""
    return int(sum(count_maxima(row, rel_prominence) for row in grid.intensity))
