import json
import math

import numpy as np
import pytest

from slemc import drivers, loewner, observables as ob
from slemc.pathspace import SampledPath
from slemc.seeds import substream

# independent adaptive-quadrature oracle values (scipy.integrate.dblquad,
# epsabs 1e-12), frozen:
PSI0_K4_RM4 = 1.9503560345290203        # |z|^-1 (Im z)^1/2 over [-1,1]x[0.1,1.1]
CAP_BOX_LOW = 0.640910393247985         # (y/|z|)^(4/3) over [-1,1]x[0.25,0.75]
CAP_BOX_HIGH = 0.8426787363386817       # same over [-1,1]x[0.75,1.25]


class TestGreens:
    def test_interior_values(self):
        assert ob.green_interior(4.0, -4.0, 1j) == pytest.approx(1.0)
        assert ob.green_interior(4.0, -4.0, 2j) == pytest.approx(2 ** -1 * 2 ** 0.5)
        assert ob.green_interior(8 / 3, -16 / 3, 1 + 1j) == pytest.approx(0.5)

    def test_interior_rejects_real(self):
        with pytest.raises(ValueError):
            ob.green_interior(4.0, -4.0, 1.0 + 0j)

    def test_sle_shape_values(self):
        assert ob.green_sle_shape(6.0, 1j) == pytest.approx(1.0)
        assert ob.green_sle_shape(8 / 3, 2j) == pytest.approx(2 ** (-2 / 3))
        with pytest.raises(ValueError):
            ob.green_sle_shape(8.0, 1j)

    def test_sle_shape_equals_interior_at_rho_kappa_minus_8(self):
        rng = substream(1, 0)
        z = rng.normal(size=100) + 1j * np.abs(rng.normal(size=100)) + 0.05j
        for kappa in (2.0, 8 / 3, 4.0, 6.0):
            a = ob.green_sle_shape(kappa, z)
            b = ob.green_interior(kappa, kappa - 8.0, z)
            np.testing.assert_allclose(a, b, rtol=1e-12)

    def test_capacity_shape(self):
        assert ob.green_capacity_shape(6.0, 3j) == pytest.approx(1.0)
        assert ob.green_capacity_shape(8.0, 1 + 1j) == pytest.approx(2 ** -0.5)
        assert ob.green_capacity_shape(6.0, 5.0 + 0j) == 0.0
        with pytest.raises(ValueError):
            ob.green_capacity_shape(6.0, 0.0)

    def test_boundary_values(self):
        assert ob.green_boundary(6.0, -2.0, 1.0) == pytest.approx(1.0)
        assert ob.green_boundary(6.0, -2.0, 4.0) == pytest.approx(4 ** (-1 / 3))
        assert ob.green_boundary(6.0, -2.0, -4.0) == ob.green_boundary(6.0, -2.0, 4.0)
        with pytest.raises(ValueError):
            ob.green_boundary(6.0, -2.0, 0.0)

    @pytest.mark.parametrize("kappa,rho", [(2.0, -6.0), (6.0, -8.0), (4.0, -1.0)])
    def test_interior_homogeneity(self, kappa, rho):
        rng = substream(2, 0)
        z = rng.normal(size=50) + 1j * (np.abs(rng.normal(size=50)) + 0.05)
        for a in (0.5, 2.0, 7.0):
            lhs = ob.green_interior(kappa, rho, a * z)
            rhs = a ** (rho / kappa + rho * rho / (8 * kappa)) * \
                ob.green_interior(kappa, rho, z)
            np.testing.assert_allclose(lhs, rhs, rtol=1e-12)

    def test_capacity_shape_scale_invariant(self):
        z = np.array([0.3 + 0.7j, -1 + 2j, 5 + 0.1j])
        np.testing.assert_allclose(ob.green_capacity_shape(6.0, 3.7 * z),
                                   ob.green_capacity_shape(6.0, z), rtol=1e-12)


class TestGreenSpec:
    def test_dispatch_matches_functions(self):
        z = np.array([0.3 + 0.4j, 1 + 1j])
        np.testing.assert_array_equal(
            ob.GreenSpec(6.0, "interior", -8.0).evaluate(z),
            ob.green_interior(6.0, -8.0, z))
        np.testing.assert_array_equal(
            ob.GreenSpec(6.0, "capacity").evaluate(z),
            ob.green_capacity_shape(6.0, z))
        np.testing.assert_array_equal(
            ob.GreenSpec(8 / 3, "sle").evaluate(z),
            ob.green_sle_shape(8 / 3, z))
        assert ob.GreenSpec(6.0, "boundary", -2.0).evaluate(4.0) == \
            ob.green_boundary(6.0, -2.0, 4.0)

    def test_dimensions(self):
        spec = ob.GreenSpec(6.0, "capacity")
        assert spec.interior_dim == pytest.approx(1.75)
        assert spec.boundary_dim == pytest.approx(2 - 8 / 6)
        assert spec.effective_rho == -8.0
        assert ob.GreenSpec(4.0, "sle").effective_rho == -4.0

    def test_validation(self):
        with pytest.raises(ValueError):
            ob.GreenSpec(8.0, "sle")
        with pytest.raises(ValueError):
            ob.GreenSpec(6.0, "interior")
        with pytest.raises(ValueError):
            ob.GreenSpec(6.0, "nope", -1.0)


class TestMartingaleObservable:
    def test_starts_at_green(self):
        cfg = drivers.DriverConfig(kappa=2.0, dt=1e-3, horizon=0.1, rho=-6.0,
                                   force_point=0.5 + 1j)
        _, track = drivers.simulate_sle_rho_interior(cfg, substream(3, 0))
        m = ob.martingale_M_interior(track, 2.0, -6.0)
        assert m[0] == pytest.approx(ob.green_interior(2.0, -6.0, 0.5 + 1j))

    def test_zero_after_swallow(self):
        cfg = drivers.DriverConfig(kappa=6.0, dt=1e-3, horizon=40.0, rho=-8.0,
                                   force_point=1j)
        _, track = drivers.simulate_sle_rho_interior(cfg, substream(4, 0))
        assert track.swallowed
        m = ob.martingale_M_interior(track, 6.0, -8.0)
        k_dead = int(track.swallow_time / cfg.dt) + 1
        assert np.all(m[k_dead:] == 0.0)

    def test_closed_form_flow_oracle(self):
        """lambda = 0, z0 = i, t = 0.1: compare the flow-computed value to
        the slit closed form g = sqrt(z^2+4t), g' = z/g."""
        kappa, rho = 2.0, -6.0
        dt, t = 1e-4, 0.1
        drv = SampledPath(dt, np.zeros(int(t / dt)), lifetime=math.inf)
        st = loewner.evolve_points(drv, [1j], record_every=10 ** 9)[-1]
        g = complex(np.sqrt(complex(-1 + 4 * t)))
        z_exact, d_exact = g, abs(1j / g)
        m_exact = ob.m_interior(kappa, rho, z_exact, d_exact)
        m_flow = ob.m_interior(kappa, rho, st.g[0] - st.lam, abs(st.gprime[0]))
        assert m_flow == pytest.approx(m_exact, rel=1e-6)

    def test_boundary_closed_form_oracle(self):
        """lambda = 0, x0 = 3, t = 1: g = sqrt(9+4t), g' = x0/g."""
        kappa, rho = 6.0, -2.0
        dt = 1e-4
        drv = SampledPath(dt, np.zeros(int(1.0 / dt)), lifetime=math.inf)
        st = loewner.evolve_points(drv, [3.0], record_every=10 ** 9,
                                   boundary=True)[-1]
        g, gp = math.sqrt(13.0), 3.0 / math.sqrt(13.0)
        m_exact = ob.m_boundary(kappa, rho, g, gp)
        m_flow = ob.m_boundary(kappa, rho, st.g[0] - st.lam, st.gprime[0])
        assert m_flow == pytest.approx(m_exact, rel=1e-6)
        assert ob.m_boundary(kappa, rho, 3.0, 1.0) == pytest.approx(
            ob.green_boundary(kappa, rho, 3.0))

    def test_mean_is_nonincreasing(self):
        """Supermartingale trend: E[M_t] decreases in t beyond CI noise."""
        kappa, rho, z0, dt, n = 6.0, -8.0, 1j, 1e-3, 2500
        lam = drivers.brownian_batch(kappa, n, dt, 1.0 + 2 * dt, substream(40, 0))
        steps = [100, 300, 600, 1000]
        recs = loewner.flow_interior(lam, dt, np.array([z0]), steps, 1e-3)
        prev = None
        for rec in recs:
            z = rec["w"][:, 0] - rec["lam"]
            alive = rec["alive"][:, 0]
            m = np.where(alive, ob.m_interior(kappa, rho, np.where(alive, z, 1j),
                                              np.abs(rec["gprime"][:, 0])), 0.0)
            if prev is not None:
                diff = m - prev
                assert diff.mean() <= 3.0 * diff.std() / math.sqrt(n)
            prev = m

    def test_mean_matches_survival(self):
        """E[M_t]/G = P[survival to t] under the force-point law."""
        kappa, rho, z0, t, dt, n = 6.0, -8.0, 1j, 0.5, 1e-3, 3000
        lam = drivers.brownian_batch(kappa, n, dt, t + 2 * dt, substream(5, 0))
        rec = loewner.flow_interior(lam, dt, np.array([z0]), [int(t / dt)],
                                    1e-3)[0]
        z = rec["w"][:, 0] - rec["lam"]
        alive = rec["alive"][:, 0]
        m = np.where(alive, ob.m_interior(kappa, rho, np.where(alive, z, 1j),
                                          np.abs(rec["gprime"][:, 0])), 0.0)
        mean_w = m.mean() / ob.green_interior(kappa, rho, z0)
        res = drivers.radial_swallow_times(kappa, rho, z0, n, substream(5, 1),
                                           ds=1e-3, s_max=8.0)
        p_surv = np.mean(res["T"] > t)
        se = math.hypot(m.std() / math.sqrt(n), math.sqrt(p_surv * (1 - p_surv) / n))
        assert abs(mean_w - p_surv) <= 3.5 * se


class TestQuadrature:
    def test_psi0_matches_dblquad_oracle(self):
        val = ob.quad_green("interior", 4.0, -4.0, [(-1, 1, 0.1, 1.1)], 0.002)
        assert val == pytest.approx(PSI0_K4_RM4, rel=1e-4)

    def test_psi_additive_over_disjoint_regions(self):
        kappa, rho, dt = 4.0, -4.0, 1e-3
        lam = drivers.brownian_batch(kappa, 1, dt, 0.05, substream(6, 0))[0]
        drv = SampledPath(dt, lam, lifetime=math.inf)
        u1 = [(-1.0, 0.0, 0.1, 1.1)]
        u2 = [(0.0, 1.0, 0.1, 1.1)]
        g1 = ob.QuadratureGrid.build(u1, 0.05)
        g2 = ob.QuadratureGrid.build(u2, 0.05)
        g12 = ob.QuadratureGrid.build(u1 + u2, 0.05)
        steps = list(range(0, drv.n + 1, 10))
        f1 = loewner.evolve_points(drv, g1.nodes, record_every=10)
        f2 = loewner.evolve_points(drv, g2.nodes, record_every=10)
        f12 = loewner.evolve_points(drv, g12.nodes, record_every=10)
        p1 = ob.psi_U(f1, g1, kappa, rho)
        p2 = ob.psi_U(f2, g2, kappa, rho)
        p12 = ob.psi_U(f12, g12, kappa, rho)
        np.testing.assert_allclose(p12, p1 + p2, rtol=1e-10)

    def test_psi0_equals_green_quadrature(self):
        kappa, rho = 4.0, -4.0
        grid = ob.QuadratureGrid.build([(-1, 1, 0.1, 1.1)], 0.01)
        drv = SampledPath(1e-3, np.zeros(10), lifetime=math.inf)
        flow = loewner.evolve_points(drv, grid.nodes, record_every=10 ** 9)
        psi0 = ob.psi_U(flow[:1], grid, kappa, rho)[0]
        assert psi0 == pytest.approx(
            grid.integrate(ob.green_interior(kappa, rho, grid.nodes)), rel=1e-12)

    def test_refinement_flag(self):
        val, flagged = ob.quad_green_refined("capacity", 6.0, None,
                                             [(-1, 1, 0.25, 1.25)], 0.01)
        assert not flagged
        assert val == pytest.approx(CAP_BOX_LOW + CAP_BOX_HIGH, rel=1e-3)

    def test_nodes_strictly_interior(self):
        grid = ob.QuadratureGrid.build([(-1, 1, 0.0, 1.0)], 0.05)
        assert np.all(grid.nodes.imag > 0)


class TestCapacityGreenMc:
    def test_unreachable_point_is_exact_zero(self):
        rep = ob.capacity_green_mc(6.0, 3j, 1.0, 500, substream(7, 0))
        assert rep.value == 0.0
        assert rep.stderr == 0.0

    def test_scaling_within_ci(self):
        n = 800
        r1 = ob.capacity_green_mc(6.0, 1j, 1.0, n, substream(8, 0))
        r2 = ob.capacity_green_mc(6.0, 2j, 4.0, n, substream(8, 1))
        joint = math.hypot(r1.stderr, r2.stderr)
        assert abs(r1.value - r2.value) <= 1.96 * joint + 1e-12

    def test_long_time_limit_approaches_shape(self):
        n = 800
        rep = ob.capacity_green_mc(6.0, 0.5 + 0.5j, 200.0, n, substream(9, 0))
        shape = ob.green_capacity_shape(6.0, 0.5 + 0.5j)
        assert rep.value >= 0.95 * shape

    def test_sde_sampler_agrees(self):
        n = 400
        r1 = ob.capacity_green_mc(6.0, 1j, 1.0, n, substream(10, 0), sampler="radial")
        r2 = ob.capacity_green_mc(6.0, 1j, 1.0, n, substream(10, 1), sampler="sde")
        joint = math.hypot(r1.stderr, r2.stderr)
        assert abs(r1.value - r2.value) <= 3 * joint

    def test_report_schema(self):
        rep = ob.capacity_green_mc(6.0, 1j, 0.5, 50, substream(11, 0), seed=11)
        doc = rep.to_dict()
        assert set(doc) == {"name", "kappa", "rho", "value", "stderr", "ci95",
                            "n", "seed", "flags"}
        json.dumps(doc)


class TestCKappa1:
    def test_capacity_constant_is_time_invariant(self):
        """The lattice estimate of int G_t dA / t agrees across t (the
        constant scales linearly in t)."""
        reps = [ob.c_kappa1_lattice(6.0, t, substream(20, i), x_max=4.0,
                                    pitch=0.5, n_per_node=120, ds=2e-3,
                                    s_max=6.0)
                for i, t in enumerate((0.5, 1.0, 2.0))]
        for a, b in ((0, 1), (1, 2), (0, 2)):
            ra, rb = reps[a], reps[b]
            joint = math.hypot(ra.stderr, rb.stderr)
            assert abs(ra.value - rb.value) <= 3 * joint
        for rep in reps:
            assert rep.ci95[0] > 0  # strictly positive, CI excludes 0


class TestMinkowskiContent:
    def test_segment_tube_value(self):
        kappa, r = 8 / 3, 0.05
        d = 1 + kappa / 8
        pts = np.array([0.5 + 0.5j, 0.5 + 1.0j])
        region = [(0.0, 1.0, 0.2, 1.4)]
        val = ob.minkowski_content(pts, region, kappa, r, pitch=r / 8)
        expect = r ** (d - 2) * (2 * r * 0.5 + math.pi * r * r)
        assert val == pytest.approx(expect, rel=0.05)

    def test_disjoint_region_zero(self):
        pts = np.array([0.5 + 0.5j, 0.6 + 0.5j])
        assert ob.minkowski_content(pts, [(5, 6, 1, 2)], 8 / 3, 0.05) == 0.0

    def test_r_stabilization_on_sle_sample(self):
        """Fixed-scale content at r and r/2 differ by < 20% on a curve
        sample (self-convergence of the surrogate)."""
        kappa, dt = 8 / 3, 2.5e-4
        lam = drivers.brownian_batch(kappa, 1, dt, 3.0, substream(12, 0))[0]
        pts = loewner.trace_curve_points(lam, dt, np.arange(0, 12000, 2))
        region = [(-0.6, 0.6, 0.3, 1.2)]
        c1 = ob.minkowski_content(pts, region, kappa, 0.02)
        c2 = ob.minkowski_content(pts, region, kappa, 0.01)
        assert abs(c2 - c1) / c1 < 0.2

    def test_kappa_range_enforced(self):
        with pytest.raises(ValueError):
            ob.minkowski_content(np.array([1j]), [(0, 1, 0, 1)], 9.0, 0.05)
