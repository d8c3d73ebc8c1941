"""Randomized invariants (hypothesis)."""
import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from nanoring.collective import RingSpec, build_hamiltonian, dense_eigenvalues, rem_eigenvalues, rem_state
from nanoring.fiber_modes import FiberSpec, wavenumber
from nanoring.fields import field_at_points
from nanoring.green import GreenConfig, coupling, fiber_tensor, g0_imag_tensor, g0_tensor
from nanoring.tworing import block_structure

FIBER = FiberSpec(1.45)
RATES = GreenConfig(shifts=False)
SLOW = settings(max_examples=8, deadline=None, suppress_health_check=[HealthCheck.too_slow])
FAST = settings(max_examples=60, deadline=None)

lam = st.floats(1.3, 4.0)
rho = st.floats(1.05, 2.0)
orient = st.sampled_from(["orthoradial", "longitudinal"])
coord = st.floats(-4, 4)


def unit(v):
    v = np.asarray(v, float)
    return v / np.linalg.norm(v)


vec = st.tuples(coord, coord, coord).filter(lambda v: np.linalg.norm(v) > 1e-3)


@FAST
@given(vec, vec, st.floats(0.2, 5.0))
def test_g0_reciprocal_and_psd(a, b, k0):
    a, b = np.array(a), np.array(b)
    if np.linalg.norm(a - b) < 1e-3:
        return
    assert np.allclose(g0_tensor(a, b, k0), g0_tensor(b, a, k0).T, rtol=1e-12, atol=1e-15)
    # the 2x2-block matrix of Im G0 over two points is positive semi-definite
    blk = np.block([[g0_imag_tensor(a, a, k0), g0_imag_tensor(a, b, k0)],
                    [g0_imag_tensor(b, a, k0), g0_imag_tensor(b, b, k0)]])
    assert np.min(np.linalg.eigvalsh(0.5 * (blk + blk.T))) > -1e-12


@SLOW
@given(st.integers(2, 10), rho, lam, orient)
def test_circulant_identity(n_atoms, r, x, o):
    ring = RingSpec(n_atoms, r, orientation=o)
    h = build_hamiltonian([ring], FIBER, wavenumber(x, r, n_atoms), RATES)
    dense = dense_eigenvalues(h)
    for rem in rem_eigenvalues(h):
        assert np.min(np.abs(dense - rem.eigenvalue)) < 1e-9
        assert rem.gamma_total > 0
        assert rem.gamma_free >= -1e-12


@SLOW
@given(st.floats(1.02, 2.5), st.floats(0, 2 * np.pi), coord, st.floats(1.02, 2.5), st.floats(0, 2 * np.pi),
       coord, lam)
def test_fiber_tensor_reciprocal(r1, p1, z1, r2, p2, z2, x):
    a = np.array([r1 * np.cos(p1), r1 * np.sin(p1), z1])
    b = np.array([r2 * np.cos(p2), r2 * np.sin(p2), z2])
    if np.linalg.norm(a - b) < 1e-2:
        return
    k0 = wavenumber(x)
    t1, t2 = fiber_tensor(1.45, k0, a, b), fiber_tensor(1.45, k0, b, a)
    assert np.max(np.abs(t1 - t2.T)) < 1e-8 * np.max(np.abs(t1))


@SLOW
@given(st.floats(1.02, 3.0), st.floats(0, 2 * np.pi), coord, st.tuples(coord, coord, coord), lam)
def test_passivity(r, p, z, u, x):
    if np.linalg.norm(u) < 1e-2:
        return
    u = unit(u)
    pt = np.array([r * np.cos(p), r * np.sin(p), z])
    c = coupling(pt, u, pt, u, FIBER, wavenumber(x), RATES)
    assert c.total.imag > 0


@SLOW
@given(st.floats(0.3, 12.0), lam, orient)
def test_mu_identity(dz, x, o):
    ring = RingSpec(5, 1.1, orientation=o)
    h = build_hamiltonian([ring, ring.shifted(dz)], FIBER, wavenumber(x), RATES)
    bs = block_structure(h)
    dense = np.linalg.eigvals(h.total)
    for m in np.concatenate([bs.lam + bs.nu, bs.lam - bs.nu]):
        assert np.min(np.abs(dense - m)) < 1e-9


@SLOW
@given(st.sampled_from([0, 1, 2, -1, -2]), st.floats(1.2, 4.0), st.floats(0, 2 * np.pi), coord, lam)
def test_rotation_invariance(n, r_obs, th, z, x):
    th2 = th + 2 * np.pi / 5
    pts = np.array([[r_obs * np.cos(t), r_obs * np.sin(t), z] for t in (th, th2)])
    ring = RingSpec(5, 1.1)
    if np.min(np.linalg.norm(pts[:, None, :] - ring.positions[None], axis=-1)) < 1e-2:
        return
    e = field_at_points(pts, rem_state(n, 5), [ring], "fiber", FIBER, wavenumber(x))
    i = np.sum(np.abs(e) ** 2, axis=-1)
    assert i[1] == pytest.approx(i[0], rel=1e-9, abs=1e-12 * max(i[0], 1e-300))
