"""Single-excitation effective Hamiltonian of atomic rings and their
radiation eigenmodes (REMs).

Couplings are stored in the dimensionless form g_hat = (6 pi / k0) g, where
g_ij = u_i* . G(r_i, r_j) . u_j.  In units of gamma0 the Hamiltonian is
H = -g_hat / 2 and the decay rate of a mode with coupling eigenvalue
lambda_hat is Gamma / gamma0 = Im lambda_hat (a single free-space atom has
lambda_hat = i, i.e. decays at gamma0).

For one ring of N equally spaced atoms the matrix is circulant and

    lambda_n = (1/N) sum_{k,l} g_kl exp(-2 i pi n (k - l) / N),

with eigenvector amplitudes exp(2 i pi n (j - 1) / N) / sqrt(N).
"""
from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Iterable, Optional, Sequence

import numpy as np

from .fiber_modes import FiberSpec, list_guided_modes, mode_label, wavenumber
from .green import CouplingChannels, GeometryError, GreenConfig, RingKernel, coupling
from .quadrature import ConvergenceError
from .green.free import g0_imag_tensor, g0_tensor

ORIENTATIONS = {
    "orthoradial": (0.0, 1.0, 0.0),
    "longitudinal": (0.0, 0.0, 1.0),
}

ENVIRONMENTS = ("fiber", "free")


class SymmetryError(ValueError):
    pass


@dataclass(frozen=True)
class RingSpec:
    """N atoms at radius rho, height z0 and polar angles 2 pi (j - 1) / N."""

    n_atoms: int = 5
    rho: float = 1.1
    z0: float = 0.0
    orientation: str = "orthoradial"

    def __post_init__(self):
        if self.n_atoms < 2:
            raise ValueError("a ring needs at least two atoms")
        if self.orientation not in ORIENTATIONS:
            raise ValueError(f"orientation must be one of {sorted(ORIENTATIONS)}")
        if not self.rho > 0:
            raise ValueError("rho must be positive")

    @property
    def spacing(self) -> float:
        return 2.0 * self.rho * math.sin(math.pi / self.n_atoms)

    @property
    def thetas(self) -> np.ndarray:
        return 2.0 * np.pi * np.arange(self.n_atoms) / self.n_atoms

    @property
    def u_local(self) -> np.ndarray:
        return np.array(ORIENTATIONS[self.orientation])

    @property
    def positions(self) -> np.ndarray:
        t = self.thetas
        return np.stack([self.rho * np.cos(t), self.rho * np.sin(t), np.full_like(t, self.z0)], axis=-1)

    @property
    def dipoles(self) -> np.ndarray:
        t = self.thetas
        u_r, u_p, u_z = self.u_local
        return np.stack([u_r * np.cos(t) - u_p * np.sin(t), u_r * np.sin(t) + u_p * np.cos(t),
                         np.full_like(t, u_z)], axis=-1)

    def shifted(self, dz: float) -> "RingSpec":
        return replace(self, z0=self.z0 + dz)


def rem_indices(n_atoms: int) -> list[int]:
    lo = math.ceil(-(n_atoms - 1) / 2)
    return list(range(lo, lo + n_atoms))


def rem_state(n: int, n_atoms: int) -> np.ndarray:
    if n not in rem_indices(n_atoms):
        raise IndexError(f"REM index {n} outside {rem_indices(n_atoms)}")
    j = np.arange(n_atoms)
    return np.exp(2j * np.pi * n * j / n_atoms) / np.sqrt(n_atoms)


def selection_rule(n: int, l: int, p: int, n_atoms: int) -> bool:
    """True when (n + p l) is a multiple of N.

    Which sign of p couples depends on the orientation convention of the
    mode phase; per physical mode (both p) the rule is symmetric, and the
    channel rates below are reported per mode.
    """
    if p not in (1, -1):
        raise ValueError("p must be +1 or -1")
    return (n + p * l) % n_atoms == 0


def mode_couples(n: int, l: int, n_atoms: int) -> bool:
    """Whether REM n can emit into a mode of azimuthal order l (either rotation)."""
    return selection_rule(n, l, 1, n_atoms) or selection_rule(n, l, -1, n_atoms)


# ---------------------------------------------------------------------------
# Hamiltonian


@dataclass
class EffectiveHamiltonian:
    """Channel-resolved coupling matrices of a set of rings.

    ``total`` and the channel matrices hold g_hat; ``matrix`` is the
    Hamiltonian -g_hat / 2 in units of gamma0 (hbar = 1).  Atoms are ordered
    ring by ring.
    """

    k0: float
    rings: tuple
    environment: str
    total: np.ndarray
    free: np.ndarray
    guided: dict = field(default_factory=dict)
    radiation: dict = field(default_factory=dict)
    dispersive: Optional[np.ndarray] = None

    @property
    def dimension(self) -> int:
        return self.total.shape[0]

    @property
    def matrix(self) -> np.ndarray:
        return -0.5 * self.total

    def channel_matrices(self) -> dict:
        """{label: g_hat matrix} for every guided mode and radiation order."""
        out = {mode_label(k): v for k, v in self.guided.items()}
        out.update({f"rad{nu:+d}": v for nu, v in self.radiation.items()})
        return out

    def channels(self, i: int, j: int) -> CouplingChannels:
        return CouplingChannels(
            complex(self.free[i, j]),
            {k: complex(v[i, j]) for k, v in self.guided.items()},
            {nu: complex(v[i, j]) for nu, v in self.radiation.items()},
            float(self.dispersive[i, j]) if self.dispersive is not None else 0.0,
            complex(self.total[i, j]),
        )


def _atoms(rings):
    pos = np.concatenate([r.positions for r in rings])
    dip = np.concatenate([r.dipoles for r in rings])
    theta = np.concatenate([r.thetas for r in rings])
    z = np.concatenate([np.full(r.n_atoms, r.z0) for r in rings])
    return pos, dip, theta, z


def _free_matrix(pos, dip, k0):
    m = len(pos)
    scale = 6.0 * np.pi / k0
    out = np.empty((m, m), complex)
    for i in range(m):
        for j in range(m):
            if i == j or np.allclose(pos[i], pos[j], rtol=0, atol=1e-12):
                out[i, j] = 1j * scale * dip[i] @ g0_imag_tensor(pos[i], pos[j], k0) @ dip[j]
            else:
                out[i, j] = scale * dip[i] @ g0_tensor(pos[i], pos[j], k0) @ dip[j]
    return out


def _uniform(rings):
    return len({(r.rho, r.orientation) for r in rings}) == 1


def build_hamiltonian(rings: Sequence[RingSpec], fiber: FiberSpec, k0: float,
                      config: GreenConfig = GreenConfig(), environment: str = "fiber",
                      kernel: Optional[RingKernel] = None, cache=None) -> EffectiveHamiltonian:
    """Coupling matrices for the atoms of ``rings`` (ordered ring by ring)."""
    rings = tuple(rings)
    if environment not in ENVIRONMENTS:
        raise ValueError(f"environment must be one of {ENVIRONMENTS}")
    pos, dip, theta, z = _atoms(rings)
    free = _free_matrix(pos, dip, k0)
    if environment == "free":
        return EffectiveHamiltonian(k0, rings, environment, free.copy(), free)
    for r in rings:
        if not r.rho > fiber.radius:
            raise GeometryError(f"ring at rho={r.rho} is inside the fiber")
    m = len(pos)
    if _uniform(rings):
        if kernel is None:
            dzs = np.abs(z[:, None] - z[None, :]).ravel()
            kernel = RingKernel(fiber, k0, rings[0].rho, rings[0].u_local, config, dzs, cache=cache)
        ch = kernel.channels(theta[:, None] - theta[None, :], z[:, None] - z[None, :])
        # the free channel from the kernel equals the direct one; keep the direct one
        return EffectiveHamiltonian(k0, rings, environment, ch["total"], free, ch["guided"],
                                    ch["radiation"], ch["dispersive"])
    modes = list_guided_modes(fiber, k0, config.l_max, cache)
    total = np.empty((m, m), complex)
    disp = np.zeros((m, m))
    guided: dict = {}
    radiation: dict = {}
    for i in range(m):
        for j in range(i, m):
            c = coupling(pos[i], dip[i], pos[j], dip[j], fiber, k0, config, modes)
            for a, b in ((i, j), (j, i)):
                total[a, b] = c.total
                disp[a, b] = c.dispersive
                for k, v in c.guided.items():
                    guided.setdefault(k, np.zeros((m, m), complex))[a, b] = v
                for nu, v in c.radiation.items():
                    radiation.setdefault(nu, np.zeros((m, m), complex))[a, b] = v
    return EffectiveHamiltonian(k0, rings, environment, total, free, guided, radiation, disp)


# ---------------------------------------------------------------------------
# REMs


@dataclass
class REMResult:
    """One radiation eigenmode of a single ring.

    ``eigenvalue`` is lambda_hat_n (Gamma/gamma0 = Im); the Hamiltonian
    eigenvalue is -eigenvalue / 2.  Rates are in units of gamma0.
    """

    n: int
    eigenvalue: complex
    state: np.ndarray
    gamma_total: float
    gamma_free: float
    gamma_guided: float
    guided_rates: dict = field(default_factory=dict)
    radiation_rates: dict = field(default_factory=dict)
    free_eigenvalue: complex = 0j

    @property
    def gamma_radiation(self) -> float:
        return float(sum(self.radiation_rates.values()))

    def branching(self, label: str) -> float:
        return self.guided_rates.get(label, 0.0) / self.gamma_total


def dft_eigenvalue(mat: np.ndarray, n: int, n_atoms: int, rows=None, cols=None) -> complex:
    """(1/N) sum_{k,l} M[k,l] exp(-2 i pi n (k - l) / N) over a N x N block."""
    rows = np.arange(n_atoms) if rows is None else rows
    cols = np.arange(n_atoms) if cols is None else cols
    block = mat[np.ix_(rows, cols)]
    k = np.arange(n_atoms)
    ph = np.exp(-2j * np.pi * n * (k[:, None] - k[None, :]) / n_atoms)
    return complex(np.sum(block * ph) / n_atoms)


def circulant_residual(mat: np.ndarray) -> float:
    rolled = np.roll(np.roll(mat, 1, axis=0), 1, axis=1)
    scale = max(float(np.max(np.abs(mat))), 1e-300)
    return float(np.max(np.abs(rolled - mat))) / scale


def _single_ring(h: EffectiveHamiltonian) -> int:
    if len(h.rings) != 1:
        raise ValueError("expected a single-ring Hamiltonian")
    return h.rings[0].n_atoms


def rem_eigenvalues(h: EffectiveHamiltonian) -> list[REMResult]:
    """REMs of a single ring via the discrete Fourier formula."""
    n_atoms = _single_ring(h)
    for name, mat in [("total", h.total), ("free", h.free)] + list(h.channel_matrices().items()):
        res = circulant_residual(mat)
        if res > 1e-8:
            raise SymmetryError(f"{name} coupling matrix is not circulant (residual {res:.2e})")
    out = []
    for n in rem_indices(n_atoms):
        lam = dft_eigenvalue(h.total, n, n_atoms)
        lam0 = dft_eigenvalue(h.free, n, n_atoms)
        guided = {mode_label(k): dft_eigenvalue(v, n, n_atoms).imag for k, v in h.guided.items()}
        rad = {nu: dft_eigenvalue(v, n, n_atoms).imag for nu, v in h.radiation.items()}
        out.append(REMResult(n, lam, rem_state(n, n_atoms), lam.imag, lam0.imag,
                             float(sum(guided.values())), guided, rad, lam0))
    return out


def channel_rates(rem: REMResult, h: EffectiveHamiltonian) -> dict:
    """{mode label: rate, 'radiation': rate} for REM ``rem.n`` from the channel blocks."""
    n_atoms = _single_ring(h)
    out = {mode_label(k): dft_eigenvalue(v, rem.n, n_atoms).imag for k, v in h.guided.items()}
    out["radiation"] = sum(dft_eigenvalue(v, rem.n, n_atoms).imag for v in h.radiation.values())
    return out


def dense_eigenvalues(h: EffectiveHamiltonian) -> np.ndarray:
    """Eigenvalues of g_hat by dense non-Hermitian diagonalization."""
    return np.linalg.eigvals(h.total)


# ---------------------------------------------------------------------------
# wavelength scans


@dataclass
class ScanRow:
    lambda0_over_d: float
    n: int
    gamma_free: float
    gamma_total: float
    gamma_guided: float
    ratios: dict

    @property
    def gamma_guided_ratio(self) -> float:
        return self.gamma_guided / self.gamma_total


@dataclass
class ScanTable:
    ring: RingSpec
    rows: list
    mode_labels: list

    def columns(self) -> list[str]:
        return (["lambda0_over_d", "n", "gamma_free", "gamma_total", "gamma_guided_ratio"]
                + [f"ratio_{m}" for m in self.mode_labels] + ["lambda0_over_a"])

    def records(self) -> list[list]:
        out = []
        d = self.ring.spacing
        for r in self.rows:
            out.append([r.lambda0_over_d, r.n, r.gamma_free, r.gamma_total, r.gamma_guided_ratio]
                       + [r.ratios.get(m, 0.0) for m in self.mode_labels] + [r.lambda0_over_d * d])
        return out

    def select(self, n: int) -> list:
        return [r for r in self.rows if r.n == n]

    def write_csv(self, fh, header_line: Optional[str] = None):
        if header_line:
            fh.write(header_line.rstrip("\n") + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(self.columns())
        for rec in self.records():
            w.writerow([f"{v:.12g}" if isinstance(v, float) else v for v in rec])


def _scan_point(ring, fiber, x, config, cache):
    k0 = wavenumber(x, ring.rho, ring.n_atoms)
    try:
        h = build_hamiltonian([ring], fiber, k0, config, cache=cache)
    except ConvergenceError as err:
        raise ConvergenceError(f"lambda0/d={x:.6g}: {err}", err.residual) from err
    rows = []
    for rem in rem_eigenvalues(h):
        ratios = {k: v / rem.gamma_total for k, v in rem.guided_rates.items()}
        rows.append(ScanRow(float(x), rem.n, rem.gamma_free, rem.gamma_total, rem.gamma_guided, ratios))
    return rows


def scan_wavelength(ring: RingSpec, fiber: FiberSpec, grid: Iterable[float],
                    config: GreenConfig = GreenConfig(), threads: int = 1, cache=None) -> ScanTable:
    """Decay rates and guided branching ratios of every REM over a lambda0/d grid.

    Level shifts are not part of the table, so the dispersive channel is
    switched off for speed.
    """
    grid = [float(x) for x in grid]
    config = replace(config, shifts=False)
    work = lambda x: _scan_point(ring, fiber, x, config, cache)
    if threads > 1:
        with ThreadPoolExecutor(threads) as ex:
            parts = list(ex.map(work, grid))
    else:
        parts = [work(x) for x in grid]
    rows = [r for part in parts for r in part]
    # guided columns in order of appearance as the wavelength decreases
    order = sorted(range(len(grid)), key=lambda i: -grid[i])
    labels: list = []
    for i in order:
        for r in parts[i]:
            for k in r.ratios:
                if k not in labels:
                    labels.append(k)
    if "HE11" in labels:
        labels.remove("HE11")
        labels.insert(0, "HE11")
    return ScanTable(ring, rows, labels)
