"""Two identical rings separated by dz along the fiber.

In the basis of single-ring REMs the 2N x 2N coupling matrix splits into
2 x 2 blocks [[lambda_n, nu_n], [nu_n, lambda_n]] with

    nu_n = (1/N) sum_{k,l} g_{k+N, l} exp(-2 i pi n (k - l) / N),

so the symmetric / antisymmetric combinations have mu_n^(+/-) = lambda_n +/- nu_n.
All eigenvalues are in the g_hat scaling (Gamma / gamma0 = Im).
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import linalg, signal

from .collective import EffectiveHamiltonian, RingSpec, dft_eigenvalue, rem_indices, rem_state
from .fiber_modes import FiberSpec, mode_label
from .green import GreenConfig, RingKernel


class RingMismatchError(ValueError):
    pass


class BlockResidualError(ValueError):
    pass


class InsufficientDataError(ValueError):
    pass


def _check_pair(rings):
    if len(rings) != 2:
        raise RingMismatchError("expected exactly two rings")
    a, b = rings
    if (a.n_atoms, a.rho, a.orientation) != (b.n_atoms, b.rho, b.orientation):
        raise RingMismatchError("the two rings must be identical apart from their height")
    return a.n_atoms


def coupling_nu(h: EffectiveHamiltonian, n: int) -> dict:
    """nu_n of a two-ring Hamiltonian with its channel decomposition.

    Returns {'total': nu_n, 'free': free-space nu_n, 'guided': {label: ...},
    'radiation': {order: ...}}.
    """
    n_atoms = _check_pair(h.rings)
    rows, cols = np.arange(n_atoms, 2 * n_atoms), np.arange(n_atoms)
    f = lambda m: dft_eigenvalue(m, n, n_atoms, rows, cols)
    return {
        "total": f(h.total),
        "free": f(h.free),
        "guided": {mode_label(k): f(v) for k, v in h.guided.items()},
        "radiation": {nu: f(v) for nu, v in h.radiation.items()},
    }


def rem_basis(n_atoms: int) -> np.ndarray:
    """Unitary 2N x 2N matrix whose columns are |Psi_n^(I)>, then |Psi_n^(II)>."""
    idx = rem_indices(n_atoms)
    single = np.stack([rem_state(n, n_atoms) for n in idx], axis=1)
    z = np.zeros_like(single)
    return np.block([[single, z], [z, single]])


@dataclass
class BlockStructure:
    indices: list
    matrix: np.ndarray  # g_hat in the REM basis
    lam: np.ndarray
    nu: np.ndarray
    residual: float

    def to_json(self) -> dict:
        def pairs(m):
            return [[float(v.real), float(v.imag)] for v in np.asarray(m).ravel()]
        return {
            "indices": self.indices,
            "shape": list(self.matrix.shape),
            "matrix_row_major": pairs(self.matrix),
            "lambda": pairs(self.lam),
            "nu": pairs(self.nu),
            "residual": self.residual,
        }


def block_structure(h: EffectiveHamiltonian, tol: float = 1e-9) -> BlockStructure:
    n_atoms = _check_pair(h.rings)
    u = rem_basis(n_atoms)
    m = u.conj().T @ h.total @ u
    lam = np.diag(m[:n_atoms, :n_atoms]).copy()
    nu = np.diag(m[n_atoms:, :n_atoms]).copy()
    expected = np.block([[np.diag(lam), np.diag(nu)], [np.diag(nu), np.diag(lam)]])
    scale = max(float(np.max(np.abs(m))), 1e-300)
    residual = float(np.max(np.abs(m - expected))) / scale
    if residual > tol:
        raise BlockResidualError(f"REM basis does not block-diagonalize the matrix (residual {residual:.2e})")
    return BlockStructure(rem_indices(n_atoms), m, lam, nu, residual)


def phase_switch(state: np.ndarray) -> np.ndarray:
    """Apply a pi phase to the second ring's amplitudes (|Psi+> <-> |Psi->)."""
    state = np.asarray(state, dtype=complex).copy()
    half = state.shape[0] // 2
    state[half:] *= -1.0
    return state


def symmetric_state(n: int, n_atoms: int, sign: int = 1) -> np.ndarray:
    s = rem_state(n, n_atoms)
    return np.concatenate([s, sign * s]) / np.sqrt(2.0)


def propagate(h: EffectiveHamiltonian, state: np.ndarray, t: float) -> np.ndarray:
    """exp(-i H t) |state>, t in units of 1/gamma0."""
    return linalg.expm(-1j * h.matrix * t) @ np.asarray(state, complex)


# ---------------------------------------------------------------------------
# separation scans


@dataclass
class TwoRingResult:
    dz: float
    n: int
    lam: complex
    nu: complex
    lam_free: complex
    nu_free: complex
    nu_guided: dict = field(default_factory=dict)
    nu_radiation: dict = field(default_factory=dict)

    @property
    def mu_plus(self) -> complex:
        return self.lam + self.nu

    @property
    def mu_minus(self) -> complex:
        return self.lam - self.nu

    @property
    def gamma_plus(self) -> float:
        return self.mu_plus.imag

    @property
    def gamma_minus(self) -> float:
        return self.mu_minus.imag

    @property
    def gamma_plus_free(self) -> float:
        return (self.lam_free + self.nu_free).imag

    @property
    def gamma_minus_free(self) -> float:
        return (self.lam_free - self.nu_free).imag


def separation_kernel(ring: RingSpec, fiber: FiberSpec, k0: float, dz_grid,
                      config: GreenConfig = GreenConfig(), cache=None) -> RingKernel:
    return RingKernel(fiber, k0, ring.rho, ring.u_local, config, np.asarray(dz_grid, float), cache=cache)


def scan_separation(ring: RingSpec, fiber: FiberSpec, k0: float, dz_grid: Sequence[float],
                    config: GreenConfig = GreenConfig(), kernel: Optional[RingKernel] = None,
                    cache=None) -> list[TwoRingResult]:
    """nu_n and mu_n^(+/-) for every dz in the grid and every REM n.

    Results are ordered by dz, then n.
    """
    dz = np.asarray(dz_grid, dtype=float)
    if np.any(dz <= 0):
        raise ValueError("separations must be positive")
    if kernel is None:
        kernel = separation_kernel(ring, fiber, k0, dz, config, cache)
    n_atoms = ring.n_atoms
    th = 2.0 * np.pi * np.arange(n_atoms) / n_atoms
    # g(theta_m, dz) for m = 0..N-1 (the second ring is above the first)
    dth = th[:, None] * np.ones_like(dz)[None, :]
    inter = kernel.channels(dth, np.broadcast_to(dz, dth.shape))
    intra = kernel.channels(th, np.zeros_like(th))
    free_inter = kernel.free(dth, np.broadcast_to(dz, dth.shape))

    def dft(vals, n):
        # (1/N) sum_{k,l} g(theta_k - theta_l) e^{-i n (theta_k - theta_l)} = sum_m g(theta_m) e^{-i n theta_m}
        ph = np.exp(-1j * n * th)
        return np.tensordot(ph, vals, axes=(0, 0))

    per_n = {}
    for n in rem_indices(n_atoms):
        per_n[n] = dict(
            lam=complex(dft(intra["total"], n)),
            lam_free=complex(dft(intra["free"], n)),
            nu=dft(inter["total"], n),
            nu_free=dft(free_inter, n),
            guided={mode_label(k): dft(v, n) for k, v in inter["guided"].items()},
            rad={nu: dft(v, n) for nu, v in inter["radiation"].items()},
        )
    out = []
    for i, z in enumerate(dz):
        for n in rem_indices(n_atoms):
            d = per_n[n]
            out.append(TwoRingResult(
                float(z), n, d["lam"], complex(d["nu"][i]), d["lam_free"], complex(d["nu_free"][i]),
                {k: complex(v[i]) for k, v in d["guided"].items()},
                {nu: complex(v[i]) for nu, v in d["rad"].items()},
            ))
    return out


def scan_columns(results: Sequence[TwoRingResult]) -> list[str]:
    labels = []
    orders = []
    for r in results:
        for k in r.nu_guided:
            if k not in labels:
                labels.append(k)
        for nu in r.nu_radiation:
            if nu not in orders:
                orders.append(nu)
    if "HE11" in labels:
        labels.remove("HE11")
        labels.insert(0, "HE11")
    cols = ["dz_over_a", "n", "gamma_plus_free", "gamma_minus_free", "gamma_plus_fiber",
            "gamma_minus_fiber", "re_nu", "im_nu"]
    cols += [f"nu_guided_{k}" for k in labels]
    cols += [f"nu_rad_{nu:+d}" for nu in sorted(orders)]
    return cols


def write_scan_csv(results: Sequence[TwoRingResult], fh, header_line: Optional[str] = None):
    """CSV of a separation scan; channel columns hold Im of the channel's nu_n."""
    cols = scan_columns(results)
    if header_line:
        fh.write(header_line.rstrip("\n") + "\n")
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(cols)
    fmt = lambda v: f"{v:.12g}"
    for r in results:
        row = [fmt(r.dz), r.n, fmt(r.gamma_plus_free), fmt(r.gamma_minus_free), fmt(r.gamma_plus),
               fmt(r.gamma_minus), fmt(r.nu.real), fmt(r.nu.imag)]
        for c in cols[8:]:
            if c.startswith("nu_guided_"):
                row.append(fmt(r.nu_guided.get(c[len("nu_guided_"):], 0j).imag))
            else:
                row.append(fmt(r.nu_radiation.get(int(c[len("nu_rad_"):]), 0j).imag))
        w.writerow(row)


def select(results: Sequence[TwoRingResult], n: int) -> list[TwoRingResult]:
    return [r for r in results if r.n == n]


# ---------------------------------------------------------------------------
# oscillation analysis


@dataclass
class Component:
    """One damped oscillation a exp(-z / decay_length) cos(2 pi z / period + phi).

    ``amplitude`` is twice the RMS modulus of its complex exponential term
    over the window (the peak amplitude a for an undamped component);
    ``channel`` is the coupling channel carrying most of it.
    """

    period: float
    amplitude: float
    decay_length: float
    channel: str = ""
    shares: dict = field(default_factory=dict)


@dataclass
class OscillationReport:
    n: int
    window: tuple
    period: float
    method: str
    classification: str
    components: list
    beat: Optional[tuple] = None

    @property
    def has_beat(self) -> bool:
        return self.beat is not None


MIN_PEAKS = 3
PENCIL_REL = 1e-2
PENCIL_CAP = 16


def _period(z, s, min_peaks=MIN_PEAKS):
    """Median spacing between local maxima of s(z); None when too few peaks."""
    s = s - np.mean(s)
    prom = 0.05 * np.ptp(s)
    peaks, _ = signal.find_peaks(s, prominence=prom)
    if len(peaks) < min_peaks:
        return None
    # refine each maximum with a parabola through its neighbours
    pos = []
    h = z[1] - z[0]
    for p in peaks:
        if 0 < p < len(s) - 1:
            a, b, c = s[p - 1], s[p], s[p + 1]
            den = a - 2 * b + c
            pos.append(z[p] + (0.5 * (a - c) / den * h if den != 0 else 0.0))
        else:
            pos.append(z[p])
    return float(np.median(np.diff(pos)))


def _pencil_poles(x, rel=PENCIL_REL, cap=PENCIL_CAP):
    """Signal poles of a uniformly sampled sequence (matrix pencil method)."""
    n = len(x)
    depth = n // 3
    hankel = linalg.hankel(x[: n - depth], x[n - depth - 1:])
    _, sv, vh = linalg.svd(hankel, full_matrices=False)
    order = max(1, min(int(np.sum(sv > rel * sv[0])), cap))
    v = vh[:order].conj().T
    return linalg.eigvals(linalg.pinv(v[:-1]) @ v[1:])


def spectral_components(z, x, rel=PENCIL_REL, cap=PENCIL_CAP):
    """Damped sinusoids making up the mean-removed signal x(z).

    Returns (components sorted by amplitude, basis matrix, pole indices); the
    basis columns are the complex exponentials of the fit, so other signals
    on the same grid can be projected onto them.
    """
    x = np.asarray(x, float) - np.mean(x)
    h = z[1] - z[0]
    poles = _pencil_poles(x, rel, cap)
    basis = poles[None, :] ** np.arange(len(x))[:, None]
    coef = linalg.lstsq(basis, x.astype(complex))[0]
    omega = np.angle(poles) / h
    decay = np.log(np.maximum(np.abs(poles), 1e-300)) / h
    comps, index = [], []
    for i in range(len(poles)):
        if omega[i] <= 1e-9 * np.pi / h:
            continue  # conjugate partner or non-oscillating term
        amp = 2.0 * np.sqrt(np.mean(np.abs(coef[i] * basis[:, i]) ** 2))
        length = np.inf if decay[i] >= 0 else -1.0 / decay[i]
        comps.append(Component(float(2 * np.pi / omega[i]), float(amp), float(length)))
        index.append(i)
    order = np.argsort([-c.amplitude for c in comps])
    return [comps[i] for i in order], basis, [index[i] for i in order]


def _amplitude(s):
    s = s - np.mean(s)
    return float(np.sqrt(2.0) * np.sqrt(np.mean(s * s)))


def _channel_signals(rs, environment):
    if environment == "free":
        return {"free": np.array([2 * r.nu_free.imag for r in rs])}
    chans = {k: np.array([2 * r.nu_guided[k].imag for r in rs]) for k in rs[0].nu_guided}
    # radiation orders +nu and -nu are grouped (one standing azimuthal pattern)
    for nu in sorted({abs(v) for v in rs[0].nu_radiation}):
        chans[f"rad_pm{nu}"] = np.array(
            [2 * sum(r.nu_radiation.get(s, 0j) for s in {nu, -nu}).imag for r in rs])
    return chans


def oscillation_analysis(results: Sequence[TwoRingResult], n: int, window=(None, None),
                         environment: str = "fiber", min_fraction: float = 0.1,
                         period_tolerance: float = 0.3) -> OscillationReport:
    """Dominant period, decay class and beats of Gamma_n^(+) - Gamma_n^(-).

    The signal is 2 Im nu_n on the (uniform) dz grid restricted to the
    window.  The period is the median spacing of its maxima, or the
    strongest spectral component when fewer than three maxima are present.
    Spectral components come from a matrix-pencil fit of the signal; those
    with amplitude at least ``min_fraction`` of the strongest are kept and
    each is attributed to the coupling channel (guided mode or radiation
    order pair ``rad_pm<nu>``) whose signal projects most strongly onto it.
    A beat is two kept components whose periods differ by at most
    ``period_tolerance`` relative to the longer one.  The oscillation is
    ``persistent`` when its amplitude over the last third of the window is
    at least half that over the first third, else ``damped``.
    """
    if environment not in ("fiber", "free"):
        raise ValueError("environment must be 'fiber' or 'free'")
    rs = [r for r in select(results, n)
          if (window[0] is None or r.dz >= window[0]) and (window[1] is None or r.dz <= window[1])]
    if len(rs) < 16:
        raise InsufficientDataError("need at least 16 grid points in the window")
    z = np.array([r.dz for r in rs])
    if not np.allclose(np.diff(z), z[1] - z[0], rtol=1e-6, atol=1e-12):
        raise InsufficientDataError("oscillation analysis needs a uniform dz grid")
    chans = _channel_signals(rs, environment)
    sig = np.array([2 * (r.nu_free if environment == "free" else r.nu).imag for r in rs])
    if np.ptp(sig) == 0:
        raise InsufficientDataError("signal does not oscillate in the window")

    comps, basis, idx = spectral_components(z, sig)
    if not comps:
        raise InsufficientDataError("no oscillating component found")
    period = _period(z, sig)
    method = "peaks"
    if period is None:
        period, method = comps[0].period, "spectrum"
        if z[-1] - z[0] < (MIN_PEAKS - 1) * period:
            raise InsufficientDataError(
                f"window holds {(z[-1] - z[0]) / period:.1f} periods; need {MIN_PEAKS} maxima")
    third = max(len(z) // 3, 2)
    classification = "persistent" if _amplitude(sig[-third:]) >= 0.5 * _amplitude(sig[:third]) else "damped"

    # attribute components to channels through the same exponentials
    top = comps[0].amplitude
    kept = []
    for c, i in zip(comps, idx):
        if c.amplitude < min_fraction * top:
            continue
        shares = {}
        for label, v in chans.items():
            coef = linalg.lstsq(basis, (v - v.mean()).astype(complex))[0]
            shares[label] = float(2.0 * np.sqrt(np.mean(np.abs(coef[i] * basis[:, i]) ** 2)))
        c.shares = shares
        c.channel = max(shares, key=shares.get)
        kept.append(c)
    beat = None
    for i in range(len(kept)):
        for j in range(i + 1, len(kept)):
            a, b = kept[i], kept[j]
            if abs(a.period - b.period) <= period_tolerance * max(a.period, b.period):
                beat = (a, b)
                break
        if beat:
            break
    return OscillationReport(n, (float(z[0]), float(z[-1])), float(period), method, classification, kept, beat)


def blocks_json(bs: BlockStructure, dz: float, extra: Optional[dict] = None) -> str:
    d = {"dz_over_a": dz, **bs.to_json()}
    if extra:
        d.update(extra)
    return json.dumps(d, indent=1)
