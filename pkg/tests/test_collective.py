import io

import numpy as np
import pytest

from nanoring.collective import (RingSpec, SymmetryError, EffectiveHamiltonian, build_hamiltonian,
                                 channel_rates, dense_eigenvalues, dft_eigenvalue, rem_eigenvalues,
                                 rem_indices, rem_state, scan_wavelength, selection_rule)
from nanoring.fiber_modes import wavenumber
from nanoring.green import GeometryError, GreenConfig

RATES = GreenConfig(shifts=False)


def test_ring_geometry():
    ring = RingSpec(5, 1.1)
    assert ring.spacing == pytest.approx(2 * 1.1 * np.sin(np.pi / 5), abs=1e-12)
    t = ring.thetas
    assert np.allclose(ring.dipoles, np.stack([-np.sin(t), np.cos(t), 0 * t], -1))
    assert np.allclose(RingSpec(5, 1.1, orientation="longitudinal").dipoles, [[0, 0, 1]] * 5)
    assert np.allclose(np.linalg.norm(ring.positions[:, :2], axis=1), 1.1)
    assert ring.shifted(2.0).positions[0, 2] == 2.0
    for bad in (dict(n_atoms=1), dict(orientation="radial"), dict(rho=-1.0)):
        with pytest.raises(ValueError):
            RingSpec(**bad)


def test_rem_index_sets():
    assert rem_indices(5) == [-2, -1, 0, 1, 2]
    assert rem_indices(4) == [-1, 0, 1, 2]
    assert rem_indices(2) == [0, 1]
    with pytest.raises(IndexError):
        rem_state(3, 5)


@pytest.mark.parametrize("n_atoms", [2, 3, 5, 8])
def test_rem_states_orthonormal(n_atoms):
    basis = np.array([rem_state(n, n_atoms) for n in rem_indices(n_atoms)])
    assert np.allclose(basis.conj() @ basis.T, np.eye(n_atoms), atol=1e-14)
    assert np.allclose(rem_state(0, n_atoms), 1 / np.sqrt(n_atoms))
    assert np.allclose(np.abs(basis), 1 / np.sqrt(n_atoms))


def test_selection_rule_examples():
    assert selection_rule(1, 1, -1, 5)
    assert not selection_rule(0, 1, 1, 5) and not selection_rule(0, 1, -1, 5)
    assert selection_rule(2, 3, 1, 5)
    with pytest.raises(ValueError):
        selection_rule(0, 1, 0, 5)


def test_free_single_atom_and_circulant():
    ring = RingSpec(6, 1.3)
    h = build_hamiltonian([ring], None, 1.7, environment="free")
    assert np.allclose(np.diag(h.total).imag, 1.0, atol=1e-12)
    assert np.allclose(h.matrix, -h.total / 2)
    for k in range(6):
        assert np.allclose(np.roll(np.roll(h.total, k, 0), k, 1), h.total, atol=1e-13)


def test_hamiltonian_symmetric_random(fiber, rng):
    for _ in range(3):
        k0 = wavenumber(rng.uniform(1.3, 3.4))
        rings = [RingSpec(int(rng.integers(2, 6)), rng.uniform(1.05, 1.6), 0.0, "orthoradial"),
                 RingSpec(int(rng.integers(2, 6)), rng.uniform(1.05, 1.6), rng.uniform(0.3, 3), "longitudinal")]
        h = build_hamiltonian(rings, fiber, k0, RATES)
        assert np.max(np.abs(h.total - h.total.T)) <= 1e-10 * np.max(np.abs(h.total))
        for mat in h.channel_matrices().values():
            assert np.max(np.abs(mat - mat.T)) <= 1e-10 * max(np.max(np.abs(mat)), 1e-300)


def test_two_atom_reduction(fiber, k0_34):
    h = build_hamiltonian([RingSpec(2, 1.2)], fiber, k0_34)
    g11, g12 = h.total[0, 0], h.total[0, 1]
    rem = {r.n: r.eigenvalue for r in rem_eigenvalues(h)}
    assert rem[0] == pytest.approx(g11 + g12, abs=1e-12)
    assert rem[1] == pytest.approx(g11 - g12, abs=1e-12)


@pytest.mark.parametrize("orientation", ["orthoradial", "longitudinal"])
@pytest.mark.parametrize("lam", [1.3, 1.8, 3.4])
def test_rem_identities(fiber, cache, orientation, lam):
    ring = RingSpec(5, 1.1, orientation=orientation)
    k0 = wavenumber(lam)
    h = build_hamiltonian([ring], fiber, k0, cache=cache)
    rems = rem_eigenvalues(h)
    by_n = {r.n: r for r in rems}
    for r in rems:
        # H |psi_n> = -lambda_n / 2 |psi_n>
        assert np.allclose(h.matrix @ r.state, -r.eigenvalue / 2 * r.state, atol=1e-9)
        assert r.gamma_total > 0
        assert r.gamma_guided <= r.gamma_total * (1 + 1e-9)
        ch = channel_rates(r, h)
        assert sum(ch.values()) == pytest.approx(r.gamma_total, abs=1e-9)
        for label, v in ch.items():
            if label != "radiation":
                assert -1e-12 <= v / r.gamma_total <= 1 + 1e-9
        if orientation == "orthoradial":
            assert abs(ch.get("TM01", 0.0)) < 1e-12
        else:
            assert abs(ch.get("TE01", 0.0)) < 1e-12
    for n in (1, 2):
        assert by_n[n].eigenvalue == pytest.approx(by_n[-n].eigenvalue, abs=1e-10)
    dense = dense_eigenvalues(h)
    for r in rems:
        assert np.min(np.abs(dense - r.eigenvalue)) < 1e-9


def test_dft_matches_dense_random(fiber, rng):
    for _ in range(4):
        n_atoms = int(rng.integers(2, 11))
        ring = RingSpec(n_atoms, rng.uniform(1.05, 2.0), orientation=str(rng.choice(["orthoradial", "longitudinal"])))
        k0 = wavenumber(rng.uniform(1.2, 4.0), ring.rho, n_atoms)
        h = build_hamiltonian([ring], fiber, k0)
        dense = dense_eigenvalues(h)
        for r in rem_eigenvalues(h):
            assert np.min(np.abs(dense - r.eigenvalue)) < 1e-9


def test_non_circulant_rejected():
    m = np.eye(3, dtype=complex) * 1j
    m[0, 1] = m[1, 0] = 0.3
    h = EffectiveHamiltonian(1.0, (RingSpec(3, 1.2),), "free", m, m)
    with pytest.raises(SymmetryError):
        rem_eigenvalues(h)


def test_atoms_inside_fiber_rejected(fiber):
    with pytest.raises(GeometryError):
        build_hamiltonian([RingSpec(5, 0.8)], fiber, 1.4)


@pytest.fixture(scope="module")
def seven_atom_rems(fiber):
    h = build_hamiltonian([RingSpec(7, 1.1)], fiber, wavenumber(3.0, 1.1, 7), RATES)
    return [r for r in rem_eigenvalues(h) if abs(r.n) >= 3]


def test_high_rems_subradiant_for_seven_atoms(seven_atom_rems):
    for r in seven_atom_rems:
        assert r.gamma_total < 0.5
        assert r.gamma_total < r.gamma_free
        assert r.gamma_guided == pytest.approx(0.0, abs=1e-12)


@pytest.mark.xfail(strict=True, reason="free-space baseline is already 0.36 here; the 0.1 bound is "
                                       "only reached near lambda0/d = 4 (see decision log)")
def test_high_rems_below_tenth_at_lambda_3d(seven_atom_rems):
    assert all(r.gamma_total < 0.1 for r in seven_atom_rems)


def test_scan_table_csv_and_threads(fiber, cache):
    ring = RingSpec(5, 1.1)
    grid = [1.5, 1.8, 2.5]
    t1 = scan_wavelength(ring, fiber, grid, cache=cache)
    t2 = scan_wavelength(ring, fiber, grid, threads=2, cache=cache)
    a, b = io.StringIO(), io.StringIO()
    t1.write_csv(a, "# test")
    t2.write_csv(b, "# test")
    assert a.getvalue() == b.getvalue()
    lines = a.getvalue().splitlines()
    assert lines[0] == "# test"
    cols = lines[1].split(",")
    assert cols[:6] == ["lambda0_over_d", "n", "gamma_free", "gamma_total", "gamma_guided_ratio", "ratio_HE11"]
    assert {"ratio_TE01", "ratio_TM01", "ratio_HE21"} <= set(cols)
    assert cols[-1] == "lambda0_over_a"
    assert len(lines) == 2 + 5 * len(grid)
    # absent modes are written as zeros
    row = dict(zip(cols, lines[-1].split(",")))
    assert float(row["ratio_TM01"]) == 0.0
