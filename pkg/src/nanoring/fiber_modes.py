"""Guided modes of a step-index nanofiber (core index n, vacuum outside).

Lengths are in units of the fiber radius (a = 1) and c = 1, so k0 = omega.
Mode fields are built from their longitudinal components,

    inside   E_z = A J_nu(h r),  H_z = B J_nu(h r),   h = sqrt(n^2 k0^2 - beta^2)
    outside  E_z = C K_nu(q r),  H_z = D K_nu(q r),   q = sqrt(beta^2 - k0^2)

with nu = p*l and kz = f*beta; (A, B, C, D) is the null vector of the
tangential-continuity system at r = a.  Profiles are normalized so that
the integral of n(r)^2 |e|^2 over the cross-section is 1.

HE/EH labeling: the hybrid eigenvalue equation is quadratic in
J'_l(u)/(u J_l(u)); the root taken with the minus sign of the discriminant
is HE, the plus sign EH.  The two branches never share a zero, so each
hybrid root belongs to exactly one family, and within a family roots are
numbered m = 1, 2, ... by decreasing beta.
"""
from __future__ import annotations

import json
import os
import tempfile
import threading
from dataclasses import dataclass, field
from typing import Iterable, Optional

import numpy as np
from scipy import optimize

from . import specfun as sf
from .cylinder import tangential, transverse

FAMILIES = ("HE", "EH", "TE", "TM")

SCAN_POINTS = 2000
FD_STEP = 1e-6
# HE11 with q*a below this is treated as unresolvable (field spread over an
# astronomically large area, coupling to any atom below double precision).
MIN_DECAY = 1e-9


class DispersionError(ValueError):
    pass


@dataclass(frozen=True)
class FiberSpec:
    n_fiber: float = 1.45
    radius: float = 1.0

    def __post_init__(self):
        if not self.n_fiber > 1.0:
            raise ValueError(f"n_fiber must exceed 1, got {self.n_fiber}")
        if self.radius != 1.0:
            raise ValueError("lengths are expressed in fiber radii; radius must be 1")

    def v_number(self, k0: float) -> float:
        return k0 * self.radius * np.sqrt(self.n_fiber**2 - 1.0)


@dataclass(frozen=True)
class ModeId:
    family: str
    l: int
    m: int
    p: Optional[int] = None
    f: int = 1

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}")
        if self.family in ("TE", "TM"):
            if self.l != 0 or self.p is not None:
                raise ValueError("TE/TM modes have l = 0 and no rotation sign")
        elif self.l < 1 or self.p not in (1, -1):
            raise ValueError("hybrid modes need l >= 1 and p = +/-1")
        if self.m < 1 or self.f not in (1, -1):
            raise ValueError("need m >= 1 and f = +/-1")

    @property
    def label(self) -> str:
        return f"{self.family}{self.l}{self.m}"

    @property
    def nu(self) -> int:
        return (self.p or 0) * self.l


def wavenumber(lambda0_over_d: float, rho: float = 1.1, n_atoms: int = 5) -> float:
    """k0 (in 1/a) for a wavelength given in units of the ring spacing d."""
    d = 2.0 * rho * np.sin(np.pi / n_atoms)
    return 2.0 * np.pi / (lambda0_over_d * d)


# ---------------------------------------------------------------------------
# characteristic equations


def _uw(fiber, k0, beta):
    u = np.sqrt(np.maximum(fiber.n_fiber**2 * k0**2 - beta**2, 0.0))
    w = np.sqrt(np.maximum(beta**2 - k0**2, 0.0))
    return u, w


def _hybrid_branch(fiber, k0, l, beta, u, w, family):
    n2 = fiber.n_fiber**2
    ratio = sf.kve(l - 1, w) / (w * sf.kve(l, w))
    kp = -l / w**2 - ratio
    sqrt_r = l * (1.0 / u**2 + 1.0 / w**2) * beta / k0
    disc = np.sqrt((n2 - 1.0) ** 2 * kp**2 + 4.0 * n2 * sqrt_r**2)
    x_eh = (-(n2 + 1.0) * kp + disc) / (2.0 * n2)
    if family == "EH":
        return x_eh
    # HE root via the product of roots, (kp^2 - R) / n^2; kp + sqrt(R) is
    # expanded so the O(1/w^2) terms cancel analytically near cutoff
    kp_plus = l / (k0 * (beta + k0)) + l * beta / (k0 * u**2) - ratio
    return (kp - sqrt_r) * kp_plus / (n2 * x_eh)


def characteristic_residual(fiber: FiberSpec, k0: float, family: str, l: int, beta: float) -> float:
    """Standard step-index eigenvalue function; its zeros are the guided betas.

    TE: J1(u)/(u J0(u)) + K1(w)/(w K0(w)); TM: the same with n^2 on the J
    term; HE/EH: J'_l(u)/(u J_l(u)) minus the matching branch root.
    """
    if not k0 < beta < fiber.n_fiber * k0:
        raise DispersionError(f"beta={beta} outside the guided interval ({k0}, {fiber.n_fiber * k0})")
    u, w = _uw(fiber, k0, beta)
    if family == "TE":
        return float(sf.jv(1, u) / (u * sf.jv(0, u)) + sf.kve(1, w) / (w * sf.kve(0, w)))
    if family == "TM":
        return float(fiber.n_fiber**2 * sf.jv(1, u) / (u * sf.jv(0, u)) + sf.kve(1, w) / (w * sf.kve(0, w)))
    if l < 1:
        raise DispersionError("hybrid modes need l >= 1")
    jp = sf.jvp(l, u) / (u * sf.jv(l, u))
    return float(jp - _hybrid_branch(fiber, k0, l, beta, u, w, family))


def _pole_free(fiber, k0, family, l, beta):
    """Residual multiplied through by the Bessel denominators (no poles)."""
    u, w = _uw(fiber, k0, beta)
    if family in ("TE", "TM"):
        eps = 1.0 if family == "TE" else fiber.n_fiber**2
        return eps * sf.jv(1, u) * w * sf.kve(0, w) + u * sf.jv(0, u) * sf.kve(1, w)
    x = _hybrid_branch(fiber, k0, l, beta, u, w, family)
    return sf.jvp(l, u) / u - sf.jv(l, u) * x


def _beta_of_s(fiber, k0, s):
    # w = V s^2 clusters samples near cutoff (beta -> k0)
    w = fiber.v_number(k0) * s * s
    return np.sqrt(k0**2 + w**2)


@np.errstate(all="ignore")
def _find_roots(fiber, k0, family, l):
    """All guided betas of (family, l), decreasing."""
    s = (np.arange(SCAN_POINTS) + 0.5) / SCAN_POINTS
    beta = _beta_of_s(fiber, k0, s)
    vals = _pole_free(fiber, k0, family, l, beta)
    roots = []
    idx = np.nonzero(np.sign(vals[:-1]) * np.sign(vals[1:]) < 0)[0]
    fun = lambda t: float(_pole_free(fiber, k0, family, l, _beta_of_s(fiber, k0, t)))
    for i in idx:
        t = optimize.brentq(fun, s[i], s[i + 1], xtol=1e-16, rtol=4 * np.finfo(float).eps, maxiter=200)
        b = float(_beta_of_s(fiber, k0, t))
        if b - k0 > 0 and np.sqrt(b * b - k0 * k0) > MIN_DECAY and b < fiber.n_fiber * k0:
            roots.append(b)
    return sorted(roots, reverse=True)


# ---------------------------------------------------------------------------
# dispersion cache


def _key(fiber, k0, family, l, m):
    return f"n={fiber.n_fiber:.6g},k0a={k0:.6f},{family},l={l},m={m}"


def _count_key(fiber, k0, family, l):
    return f"n={fiber.n_fiber:.6g},k0a={k0:.6f},{family},l={l},count"


class DispersionCache:
    """Root cache with optional JSON persistence.

    Entries keep the exact (n, k0) they were computed at; a lookup whose
    exact inputs differ from the stored ones is a miss, so cached and
    uncached runs are bitwise identical.
    """

    def __init__(self, path: Optional[str] = None):
        self.path = path
        self._lock = threading.Lock()
        self._data: dict = {}
        self._dirty = False
        if path and os.path.exists(path):
            with open(path) as fh:
                self._data = json.load(fh)

    def get(self, key, n, k0):
        with self._lock:
            e = self._data.get(key)
        if e is None or e.get("n_exact") != n or e.get("k0a_exact") != k0:
            return None
        return e

    def put(self, key, n, k0, **values):
        with self._lock:
            if key in self._data and self._data[key].get("k0a_exact") == k0:
                return
            self._data[key] = dict(values, n_exact=n, k0a_exact=k0)
            self._dirty = True

    def __len__(self):
        return len(self._data)

    def save(self):
        if not self.path or not self._dirty:
            return
        from filelock import FileLock

        with FileLock(self.path + ".lock"):
            merged = {}
            if os.path.exists(self.path):
                with open(self.path) as fh:
                    merged = json.load(fh)
            with self._lock:
                merged.update(self._data)
                self._dirty = False
            d = os.path.dirname(os.path.abspath(self.path))
            fd, tmp = tempfile.mkstemp(dir=d, suffix=".tmp")
            with os.fdopen(fd, "w") as fh:
                json.dump(merged, fh, indent=1, sort_keys=True)
            os.replace(tmp, self.path)


_default_cache = DispersionCache()


def _roots(fiber, k0, family, l, cache):
    cache = _default_cache if cache is None else cache
    ck = _count_key(fiber, k0, family, l)
    hit = cache.get(ck, fiber.n_fiber, k0)
    if hit is not None:
        betas = []
        for m in range(1, hit["count"] + 1):
            e = cache.get(_key(fiber, k0, family, l, m), fiber.n_fiber, k0)
            if e is None:
                break
            # the exact beta is stored next to beta/k0 so hits are bitwise identical
            betas.append(e["beta"] if "beta" in e else e["beta_over_k0"] * k0)
        else:
            return betas
    betas = _find_roots(fiber, k0, family, l)
    for m, b in enumerate(betas, start=1):
        cache.put(_key(fiber, k0, family, l, m), fiber.n_fiber, k0, beta_over_k0=b / k0, beta=b)
    cache.put(ck, fiber.n_fiber, k0, count=len(betas))
    return betas


def _dbeta_domega(fiber, k0, family, l, m, cache):
    cache = _default_cache if cache is None else cache
    key = _key(fiber, k0, family, l, m)
    e = cache.get(key, fiber.n_fiber, k0)
    if e is not None and "dbeta_domega" in e:
        return e["dbeta_domega"]
    h = FD_STEP * k0
    hi = _find_roots(fiber, k0 + h, family, l)
    lo = _find_roots(fiber, k0 - h, family, l)
    if len(lo) < m or len(hi) < m:
        raise DispersionError(f"{family}{l}{m} too close to cutoff for a centered derivative at k0={k0}")
    val = (hi[m - 1] - lo[m - 1]) / (2.0 * h)
    with cache._lock:
        if key in cache._data:
            cache._data[key]["dbeta_domega"] = val
            cache._dirty = True
    return val


# ---------------------------------------------------------------------------
# mode profiles


def _radial(fiber, k0, beta, nu, r, inside):
    """Columns of the (Ez, Hz) basis functions evaluated at radius r.

    Returns ez, dez for a unit coefficient; outside functions are scaled by
    1/K_nu(q a) to stay O(1).
    """
    if inside:
        h = np.sqrt(fiber.n_fiber**2 * k0**2 - beta**2)
        return sf.jv(nu, h * r), h * sf.jvp(nu, h * r)
    q = np.sqrt(beta**2 - k0**2)
    scale = sf.kve(nu, q)
    damp = np.exp(-q * (r - 1.0))
    return sf.kve(nu, q * r) * damp / scale, q * sf.kvep(nu, q * r) * damp / scale


def _boundary_matrix(fiber, k0, beta, nu, kz):
    n2 = fiber.n_fiber**2
    h2 = n2 * k0**2 - beta**2
    q2 = beta**2 - k0**2
    ji, dji = _radial(fiber, k0, beta, nu, 1.0, True)
    ko, dko = _radial(fiber, k0, beta, nu, 1.0, False)
    cols = [
        tangential(nu, kz, k0, n2, h2, 1.0, ji, dji, 0.0, 0.0),
        tangential(nu, kz, k0, n2, h2, 1.0, 0.0, 0.0, ji, dji),
        -tangential(nu, kz, k0, 1.0, -q2, 1.0, ko, dko, 0.0, 0.0),
        -tangential(nu, kz, k0, 1.0, -q2, 1.0, 0.0, 0.0, ko, dko),
    ]
    return np.stack(cols, axis=-1)


def _field_from_coeffs(fiber, k0, beta, nu, kz, coeffs, r):
    """(E_r, E_phi, E_z) at radii r (no azimuthal/axial phase)."""
    r = np.asarray(r, dtype=float)
    out = np.zeros(r.shape + (3,), dtype=complex)
    n2 = fiber.n_fiber**2
    for inside, (ce, ch), eps, kt2 in (
        (True, coeffs[:2], n2, n2 * k0**2 - beta**2),
        (False, coeffs[2:], 1.0, k0**2 - beta**2),
    ):
        sel = (r < 1.0) if inside else (r >= 1.0)
        if not np.any(sel):
            continue
        rs = r[sel]
        f, df = _radial(fiber, k0, beta, nu, rs, inside)
        ez, dez, hz, dhz = ce * f, ce * df, ch * f, ch * df
        e_r, e_phi, _, _ = transverse(nu, kz, k0, eps, kt2, rs, ez, dez, hz, dhz)
        out[sel] = np.stack([e_r, e_phi, ez + 0j], axis=-1)
    return out


def _norm_integral(fiber, k0, beta, nu, kz, coeffs):
    n2 = fiber.n_fiber**2
    x, w = np.polynomial.legendre.leggauss(96)
    r_in = 0.5 * (x + 1.0)
    e_in = _field_from_coeffs(fiber, k0, beta, nu, kz, coeffs, r_in)
    inner = n2 * np.sum(0.5 * w * r_in * np.sum(np.abs(e_in) ** 2, axis=-1))
    q = np.sqrt(beta**2 - k0**2)
    # r = 1 + t / q; geometric panels resolve the algebraic tail near cutoff (small q)
    edges = np.concatenate([[0.0], np.geomspace(1e-3 * min(1.0, q), 60.0, 40)])
    xg, wg = np.polynomial.legendre.leggauss(16)
    a, b = edges[:-1, None], edges[1:, None]
    t = (0.5 * (b - a) * (xg + 1.0) + a).ravel()
    wt = (0.5 * (b - a) * wg).ravel()
    r = 1.0 + t / q
    e = _field_from_coeffs(fiber, k0, beta, nu, kz, coeffs, r)
    outer = np.sum(wt * r * np.sum(np.abs(e) ** 2, axis=-1)) / q
    return 2.0 * np.pi * (inner + outer)


@dataclass(frozen=True)
class GuidedModeSolution:
    """A resolved guided mode with one (p, f) choice.

    ``coeffs`` are (A, B, C, D) after normalization; ``field`` evaluates the
    complex mode function including exp(i p l phi + i f beta z).
    """

    id: ModeId
    beta: float
    dbeta_domega: float
    k0: float
    fiber: FiberSpec
    coeffs: np.ndarray = field(repr=False, compare=False)
    normalization: float = field(default=1.0, repr=False)

    @property
    def label(self) -> str:
        return self.id.label

    @property
    def key(self) -> tuple:
        return (self.id.family, self.id.l, self.id.m)

    @property
    def kz(self) -> float:
        return self.id.f * self.beta

    def profile(self, r):
        """Cylindrical components at radii r, without the phase factors."""
        return _field_from_coeffs(self.fiber, self.k0, self.beta, self.id.nu, self.kz, self.coeffs, r)

    def field(self, r, phi, z=0.0):
        r, phi, z = np.broadcast_arrays(np.asarray(r, float), np.asarray(phi, float), np.asarray(z, float))
        ph = np.exp(1j * (self.id.nu * phi + self.kz * z))
        return self.profile(r) * ph[..., None]


def _make_solution(fiber, k0, family, l, m, p, f, beta, dbdw):
    nu = (p or 0) * l
    kz = f * beta
    mat = _boundary_matrix(fiber, k0, beta, nu, kz)
    _, sv, vh = np.linalg.svd(mat)
    coeffs = vh[-1].conj()
    if family == "TE":
        coeffs[[0, 2]] = 0.0
    elif family == "TM":
        coeffs[[1, 3]] = 0.0
    # fix the global phase: largest coefficient real positive
    i = int(np.argmax(np.abs(coeffs)))
    coeffs = coeffs * (abs(coeffs[i]) / coeffs[i])
    norm = _norm_integral(fiber, k0, beta, nu, kz, coeffs)
    coeffs = coeffs / np.sqrt(norm)
    return GuidedModeSolution(ModeId(family, l, m, p, f), beta, dbdw, k0, fiber, coeffs, 1.0 / np.sqrt(norm))


def solve_dispersion(fiber: FiberSpec, k0: float, family: str, l: int, m: int,
                     p: Optional[int] = None, f: int = 1, cache: Optional[DispersionCache] = None
                     ) -> Optional[GuidedModeSolution]:
    """The m-th guided root of (family, l), or None below cutoff."""
    if family in ("HE", "EH") and p is None:
        p = 1
    ModeId(family, l, m, p, f)
    betas = _roots(fiber, k0, family, l, cache)
    if len(betas) < m:
        return None
    dbdw = _dbeta_domega(fiber, k0, family, l, m, cache)
    return _make_solution(fiber, k0, family, l, m, p, f, betas[m - 1], dbdw)


def list_guided_modes(fiber: FiberSpec, k0: float, l_max: int = 8,
                      cache: Optional[DispersionCache] = None) -> list[GuidedModeSolution]:
    """Every guided mode with l <= l_max, one entry per (p, f)."""
    if l_max < 1:
        raise ValueError("l_max must be >= 1")
    out = []
    for family in FAMILIES:
        ls = [0] if family in ("TE", "TM") else range(1, l_max + 1)
        for l in ls:
            betas = _roots(fiber, k0, family, l, cache)
            for m, b in enumerate(betas, start=1):
                dbdw = _dbeta_domega(fiber, k0, family, l, m, cache)
                ps = (None,) if l == 0 else (1, -1)
                for p in ps:
                    for f in (1, -1):
                        out.append(_make_solution(fiber, k0, family, l, m, p, f, b, dbdw))
    out.sort(key=lambda s: (-s.beta, s.id.family, s.id.l, s.id.m, -(s.id.p or 0), -s.id.f))
    return out


def mode_profile(mode: GuidedModeSolution, r: float, theta: float) -> np.ndarray:
    """(e_r, e_theta, e_z) of a normalized mode at (r, theta, z = 0)."""
    if r <= 0:
        raise ValueError("r must be positive")
    return mode.field(r, theta)


def distinct_modes(modes: Iterable[GuidedModeSolution]) -> dict:
    """Group (p, f) copies by physical mode key (family, l, m)."""
    groups: dict = {}
    for s in modes:
        groups.setdefault(s.key, []).append(s)
    return groups


def mode_label(key) -> str:
    return f"{key[0]}{key[1]}{key[2]}"


def dispersion_table(fiber: FiberSpec, lambda0_over_d: Iterable[float], rho: float = 1.1,
                     n_atoms: int = 5, l_max: int = 8, cache: Optional[DispersionCache] = None) -> list[tuple]:
    """Rows (lambda0/d, mode label, beta/k0) for every guided mode at each grid point."""
    rows = []
    for x in lambda0_over_d:
        k0 = wavenumber(float(x), rho, n_atoms)
        for family in FAMILIES:
            ls = [0] if family in ("TE", "TM") else range(1, l_max + 1)
            for l in ls:
                for m, b in enumerate(_roots(fiber, k0, family, l, cache), start=1):
                    rows.append((float(x), f"{family}{l}{m}", b / k0))
    return rows
