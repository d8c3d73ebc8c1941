import numpy as np
import pytest

from nanoring.fiber_modes import FiberSpec, list_guided_modes, wavenumber
from nanoring.green import (ConvergenceError, GeometryError, GreenConfig, RingKernel, SingularityError,
                            coupling, fiber_tensor, g0, g0_imag_tensor, g0_tensor, g_guided, g_radiation)
from nanoring.green.radiation import RadiationBasis, RadiationRule, radiation_orders


def random_outside_points(rng, count, r_lo=1.05, r_hi=3.0, z_span=3.0):
    r = rng.uniform(r_lo, r_hi, count)
    phi = rng.uniform(0, 2 * np.pi, count)
    z = rng.uniform(-z_span, z_span, count)
    return np.stack([r * np.cos(phi), r * np.sin(phi), z], axis=-1)


def scalar_green(p, k0):
    r = np.linalg.norm(p)
    return np.exp(1j * k0 * r) / (4 * np.pi * r)


def g0_finite_difference(d, k0, h=1e-3):
    """(I + grad grad / k0^2) exp(ikR) / (4 pi R), fourth-order central differences."""
    out = np.eye(3, dtype=complex) * scalar_green(d, k0)
    e = np.eye(3)
    for i in range(3):
        for j in range(3):
            f = lambda a, b: scalar_green(d + a * h * e[i] + b * h * e[j], k0)
            if i == j:
                f1 = lambda s: scalar_green(d + s * h * e[i], k0)
                d2 = (-f1(2) + 16 * f1(1) - 30 * f1(0) + 16 * f1(-1) - f1(-2)) / (12 * h * h)
            else:
                d2 = (f(1, 1) - f(1, -1) - f(-1, 1) + f(-1, -1)) / (4 * h * h)
            out[i, j] += d2 / k0**2
    return out


class TestFree:
    def test_matches_finite_difference(self, rng):
        k0 = 1.7
        for d in rng.normal(size=(6, 3)) * 2:
            ref = g0_finite_difference(d, k0)
            got = g0_tensor(d, np.zeros(3), k0)
            assert np.max(np.abs(got - ref)) < 1e-5 * np.max(np.abs(ref))

    def test_self_imaginary_part(self):
        for k0 in (0.5, 1.43, 2.7):
            r = np.array([1.2, -0.3, 4.0])
            assert np.allclose(g0_imag_tensor(r, r, k0), k0 / (6 * np.pi) * np.eye(3), rtol=0, atol=1e-15)
            v = g0(r, r, k0, imag_only=True)
            u = np.array([0.6, 0.0, 0.8])
            assert v.project(u, u).imag * 6 * np.pi / k0 == pytest.approx(1.0, abs=1e-12)

    def test_imaginary_part_continuous_near_coincidence(self):
        k0 = 2.0
        r2 = np.zeros(3)
        for dist in (1e-1, 3e-2, 1e-3):
            r1 = np.array([dist, 0.4 * dist, -0.2 * dist])
            series = g0_imag_tensor(r1, r2, k0)
            if k0 * np.linalg.norm(r1) > 0.05:
                assert np.allclose(series, g0_tensor(r1, r2, k0).imag, atol=1e-12)
            assert np.allclose(series, k0 / (6 * np.pi) * np.eye(3), atol=k0**3 * dist**2)

    def test_real_part_singular(self):
        with pytest.raises(SingularityError):
            g0_tensor(np.ones(3), np.ones(3), 1.0)
        with pytest.raises(SingularityError):
            g0(np.ones(3), np.ones(3), 1.0)

    def test_reciprocity(self, rng):
        for _ in range(20):
            r1, r2 = rng.normal(size=(2, 3))
            assert np.allclose(g0_tensor(r1, r2, 1.3), g0_tensor(r2, r1, 1.3).T, rtol=1e-12, atol=0)

    def test_dicke_pair(self):
        k0 = 1.5
        r = np.array([0.0, 0.0, 0.0])
        u = np.array([0.0, 1.0, 0.0])
        g_self = 6 * np.pi / k0 * (u @ g0_imag_tensor(r, r, k0) @ u)
        h = np.array([[g_self, g_self], [g_self, g_self]])
        rates = np.sort(np.linalg.eigvalsh(h))
        assert rates == pytest.approx([0.0, 2.0], abs=1e-12)


class TestFiberChannels:
    def test_reciprocity_per_channel(self, fiber, k0_18, modes_18, rng):
        for r1, r2 in random_outside_points(rng, 6).reshape(3, 2, 3):
            ga, gb = g_guided(r1, r2, k0_18, modes_18), g_guided(r2, r1, k0_18, modes_18)
            for k in ga:
                scale = max(np.max(np.abs(ga[k].matrix)), 1e-300)
                assert np.max(np.abs(ga[k].matrix - gb[k].matrix.T)) <= 1e-8 * scale
            ra, rb = g_radiation(r1, r2, k0_18, fiber, 5), g_radiation(r2, r1, k0_18, fiber, 5)
            for nu in ra:
                # exchanging the points maps order nu onto -nu; each |nu| group is reciprocal
                scale = np.max(np.abs(ra[nu].matrix)) + 1e-300
                assert np.max(np.abs(ra[nu].matrix - rb[-nu].matrix.T)) <= 1e-8 * scale
                pair_a = ra[nu].matrix + ra[-nu].matrix
                pair_b = rb[nu].matrix + rb[-nu].matrix
                assert np.max(np.abs(pair_a - pair_b.T)) <= 1e-8 * np.max(np.abs(pair_a))
            ta, tb = fiber_tensor(1.45, k0_18, r1, r2), fiber_tensor(1.45, k0_18, r2, r1)
            assert np.max(np.abs(ta - tb.T)) <= 1e-8 * np.max(np.abs(ta))

    def test_total_coupling_reciprocal(self, fiber, k0_34, modes_34, rng):
        for r1, r2 in random_outside_points(rng, 4).reshape(2, 2, 3):
            u1, u2 = rng.normal(size=(2, 3))
            u1, u2 = u1 / np.linalg.norm(u1), u2 / np.linalg.norm(u2)
            a = coupling(r1, u1, r2, u2, fiber, k0_34, modes=modes_34)
            b = coupling(r2, u2, r1, u1, fiber, k0_34, modes=modes_34)
            assert abs(a.total - b.total) <= 1e-8 * abs(a.total)

    def test_mode_and_scattering_routes_agree(self, fiber, k0_18, modes_18, rng):
        for r1, r2 in random_outside_points(rng, 8).reshape(4, 2, 3):
            gg = sum(v.matrix for v in g_guided(r1, r2, k0_18, modes_18).values())
            gr = sum(v.matrix for v in g_radiation(r1, r2, k0_18, fiber, 12).values())
            full = fiber_tensor(1.45, k0_18, r1, r2)
            assert np.max(np.abs((gg + gr).imag - full.imag)) < 1e-5 * np.max(np.abs(full))

    def test_homogeneous_limit(self):
        # the residual against G0 is the weak-contrast scattering, linear in
        # (n - 1); both constructions must agree on it and it must vanish
        k0 = wavenumber(1.8)
        r1, r2 = np.array([1.5, 0.3, -1.0]), np.array([-1.2, 1.1, 1.3])
        ref = g0_tensor(r1, r2, k0).imag
        errs = []
        for dn in (1e-4, 1e-5, 1e-6):
            fib = FiberSpec(1.0 + dn)
            modes = list_guided_modes(fib, k0)
            gg = sum((v.matrix for v in g_guided(r1, r2, k0, modes).values()), np.zeros((3, 3)))
            gr = sum(v.matrix for v in g_radiation(r1, r2, k0, fib, 12).values())
            scat = fiber_tensor(1.0 + dn, k0, r1, r2).imag
            assert np.max(np.abs((gg + gr).imag - scat)) < 1e-9 * np.max(np.abs(ref))
            errs.append(np.max(np.abs((gg + gr).imag - ref)) / np.max(np.abs(ref)))
        assert errs[0] < 1e-2
        assert errs[0] / errs[1] == pytest.approx(10, rel=0.01)
        assert errs[1] / errs[2] == pytest.approx(10, rel=0.01)

    def test_guided_vanishes_without_contrast(self):
        fib = FiberSpec(1.0 + 1e-4)
        k0 = wavenumber(1.8)
        modes = list_guided_modes(fib, k0)
        u = np.array([0.0, 1.0, 0.0])
        c = coupling([1.1, 0, 0], u, [1.1, 0, 0], u, fib, k0, GreenConfig(shifts=False), modes)
        assert abs(c.guided_total()) < 1e-3

    @pytest.mark.parametrize("lam", [3.4, 1.8])
    def test_single_atom_far_from_fiber(self, fiber, lam):
        k0 = wavenumber(lam)
        rho = 20.0
        cfg = GreenConfig(shifts=False, nu_max=int(k0 * rho) + 12)
        for u in np.eye(3):
            c = coupling([rho, 0, 0], u, [rho, 0, 0], u, fiber, k0, cfg)
            assert c.total.imag == pytest.approx(1.0, rel=0.01)

    def test_passivity_and_channel_sum(self, fiber, k0_18, modes_18, rng):
        for p in random_outside_points(rng, 5, r_lo=1.02, r_hi=2.5):
            u = rng.normal(size=3)
            u /= np.linalg.norm(u)
            c = coupling(p, u, p, u, fiber, k0_18, modes=modes_18)
            assert c.total.imag > 0
            assert c.total.imag == pytest.approx(c.guided_total().imag + c.radiation_total().imag, abs=1e-8)
            assert c.free.imag == pytest.approx(1.0, abs=1e-12)
            assert all(v.imag >= -1e-12 for v in c.guided.values())

    def test_channel_sum_with_shifts(self, fiber, k0_18, modes_18):
        r1, r2 = np.array([1.1, 0, 0]), np.array([0, 1.3, 0.8])
        u1, u2 = np.array([0, 1.0, 0]), np.array([-1.0, 0, 0])
        c = coupling(r1, u1, r2, u2, fiber, k0_18, modes=modes_18)
        assert c.total.real == pytest.approx(c.guided_total().real + c.dispersive, abs=1e-8)
        assert c.total.imag == pytest.approx(c.guided_total().imag + c.radiation_total().imag, abs=1e-8)
        # the real part is the full scattering-construction value
        full = 6 * np.pi / k0_18 * (u1 @ fiber_tensor(1.45, k0_18, r1, r2) @ u2)
        assert c.total.real == pytest.approx(full.real, rel=1e-8)
        off = coupling(r1, u1, r2, u2, fiber, k0_18, GreenConfig(shifts=False), modes_18)
        assert off.total.real == 0.0 and off.total.imag == c.total.imag

    def test_guided_phase_advances_with_dz(self, fiber, k0_34, modes_34):
        beta = modes_34[0].beta
        u = np.array([0.3, 0.9, np.sqrt(1 - 0.9)])
        r1 = np.array([1.2, 0.0, 0.0])
        base = None
        for dz in (0.5, 1.7, 4.0, 9.3):
            r2 = np.array([0.0, 1.5, -dz])
            v = complex(sum(g_guided(r1, r2, k0_34, modes_34)[("HE", 1, 1)].project(u, u) for _ in [0]))
            if base is None:
                base, dz0 = v, dz
                continue
            assert abs(v) == pytest.approx(abs(base), rel=1e-12)
            assert np.angle(v / base) == pytest.approx(np.angle(np.exp(1j * beta * (dz - dz0))), abs=1e-10)

    def test_quadrature_converged(self, fiber, k0_18):
        p1, p2 = (1.1, 0.0, 0.0), (1.1, 2 * np.pi / 5, 3.0)
        rule = RadiationRule()
        for _ in range(2):
            rule = rule.refined()
        a = radiation_orders(RadiationBasis.build(1.45, k0_18, 7, rule), p1, p2).sum(0)
        b = radiation_orders(RadiationBasis.build(1.45, k0_18, 7, rule.refined()), p1, p2).sum(0)
        assert np.max(np.abs(a - b)) < 1e-3 * np.max(np.abs(b))

    def test_convergence_error_reports_residual(self, fiber, k0_18):
        with pytest.raises(ConvergenceError) as err:
            g_radiation([1.1, 0, 0], [1.2, 0, 1], k0_18, fiber, 7, RadiationRule(1, 2), tol=1e-14,
                        max_doublings=1)
        assert err.value.residual is not None and err.value.residual > 0

    def test_points_inside_fiber_rejected(self, fiber, k0_34):
        with pytest.raises(GeometryError):
            coupling([0.5, 0, 0], [0, 1, 0], [1.2, 0, 0], [0, 1, 0], fiber, k0_34)
        with pytest.raises(GeometryError):
            RingKernel(fiber, k0_34, 0.9, (0, 1, 0), GreenConfig())

    def test_mode_solution_must_match_k0(self, fiber, k0_34, modes_18):
        with pytest.raises(ValueError):
            g_guided([1.1, 0, 0], [1.2, 0, 0], k0_34, modes_18)


def test_ring_kernel_matches_pointwise_coupling(fiber, k0_18, modes_18):
    rho, u_loc = 1.1, np.array([0.0, 1.0, 0.0])
    dz = np.array([0.0, 0.7, 2.5])
    kern = RingKernel(fiber, k0_18, rho, u_loc, GreenConfig(), dz, modes=modes_18)
    for th, z in ((2 * np.pi / 5, 0.0), (4 * np.pi / 5, 0.7), (0.0, 2.5)):
        ch = kern.channels(th, z)
        r1 = np.array([rho * np.cos(th), rho * np.sin(th), z])
        u1 = np.array([-np.sin(th), np.cos(th), 0.0])
        c = coupling(r1, u1, [rho, 0, 0], [0, 1.0, 0], fiber, k0_18, modes=modes_18)
        assert complex(ch["total"]) == pytest.approx(c.total, rel=1e-6, abs=1e-9)
        for k, v in c.guided.items():
            assert complex(ch["guided"][k]) == pytest.approx(v, rel=1e-9, abs=1e-12)
