import math

import numpy as np
import pytest

from slemc import pathspace as ps
from slemc import drivers, stats
from slemc.seeds import substream


def ramp(dt=0.01, T=2.0, slope=1.0):
    n = ps.grid_count(T, dt)
    return ps.SampledPath(dt, slope * np.arange(n) * dt, lifetime=T,
                          terminal_limit=slope * T)


class TestSampledPath:
    def test_grid_count_invariant(self):
        p = ramp()
        assert p.n == math.ceil(p.lifetime / p.dt)

    def test_terminal_requires_finite(self):
        with pytest.raises(ValueError):
            ps.SampledPath(0.1, np.zeros(5), lifetime=math.inf, terminal_limit=1.0)

    def test_bad_counts_rejected(self):
        with pytest.raises(ValueError):
            ps.SampledPath(0.1, np.zeros(3), lifetime=1.0)

    def test_values_immutable(self):
        p = ramp()
        with pytest.raises(ValueError):
            p.values[0] = 5.0

    def test_interpolation_with_terminal(self):
        p = ps.SampledPath(0.4, np.array([0.0, 0.4, 0.8]), lifetime=1.0,
                           terminal_limit=1.0)
        assert p.value_at(0.9) == pytest.approx(0.9)


class TestKill:
    def test_truncates_at_tau(self):
        f = ramp(T=2.0)
        g = ps.kill(f, 1.0)
        assert g.lifetime == 1.0
        assert g.n == ps.grid_count(1.0, f.dt)
        np.testing.assert_array_equal(g.values, f.values[: g.n])

    def test_no_op_beyond_lifetime(self):
        f = ramp(T=2.0)
        assert ps.kill(f, 3.0) is f

    def test_terminal_is_interpolated(self):
        f = ramp(T=2.0)  # f(t) = t
        assert ps.kill(f, 1.0).terminal_limit == pytest.approx(1.0)

    def test_nonpositive_tau_rejected(self):
        with pytest.raises(ValueError):
            ps.kill(ramp(), 0.0)


class TestConcat:
    def test_affine_pieces(self):
        f = ramp(dt=0.01, T=1.0)          # f(t) = t, limit 1
        g = ramp(dt=0.01, T=1.0)          # g(s) = s
        h = ps.concat(f, g)
        assert h.lifetime == pytest.approx(2.0)
        assert h.value_at(1.5) == pytest.approx(1.5)

    def test_constant_plateau(self):
        f = ramp(dt=0.01, T=1.0)
        g = ps.SampledPath(0.01, np.zeros(100), lifetime=1.0, terminal_limit=0.0)
        h = ps.concat(f, g)
        assert h.value_at(1.7) == pytest.approx(1.0)

    def test_quadratic_then_negative_ramp(self):
        dt = 1e-3
        t = np.arange(ps.grid_count(1.0, dt)) * dt
        f = ps.SampledPath(dt, t ** 2, lifetime=1.0, terminal_limit=1.0)
        g = ps.SampledPath(dt, -t, lifetime=1.0, terminal_limit=-1.0)
        h = ps.concat(f, g)
        assert h.value_at(1.25) == pytest.approx(0.75, abs=1e-9)

    def test_lifetime_additivity_exact(self):
        f = ps.kill(ramp(dt=0.01, T=2.0), 0.77)
        g = ramp(dt=0.01, T=1.31)
        assert ps.concat(f, g).lifetime == f.lifetime + g.lifetime

    def test_junction_continuity(self):
        f = ps.kill(ramp(dt=0.01, T=2.0), 0.775)
        g = ramp(dt=0.01, T=1.0, slope=-2.0)
        h, tj = ps.concat_marked(f, g)
        eps = 1e-9
        assert abs(h.value_at(tj - eps) - h.value_at(tj + eps)) < 1e-6

    def test_preconditions(self):
        f_inf = ps.SampledPath(0.01, np.zeros(10), lifetime=math.inf)
        g = ramp(dt=0.01, T=1.0)
        with pytest.raises(ValueError):
            ps.concat(f_inf, g)
        f = ramp(dt=0.01, T=1.0)
        bad_g = ps.SampledPath(0.01, np.ones(100), lifetime=1.0, terminal_limit=2.0)
        with pytest.raises(ValueError):
            ps.concat(f, bad_g)
        with pytest.raises(ValueError):
            ps.concat(f, ramp(dt=0.02, T=1.0))


class TestConcatMarked:
    def test_junction_is_first_lifetime(self):
        f = ps.kill(ramp(T=2.0), 0.5)
        g = ramp(T=0.5)
        h, tj = ps.concat_marked(f, g)
        assert tj == f.lifetime
        assert h.lifetime == pytest.approx(1.0)

    def test_split_recovers_inputs(self):
        rng = substream(3, 0)
        vals = np.cumsum(rng.normal(0, 0.1, size=200))
        vals[0] = 0.0
        f = ps.kill(ps.SampledPath(0.01, vals, lifetime=math.inf), 1.0)
        g_vals = np.cumsum(rng.normal(0, 0.1, size=100))
        g_vals[0] = 0.0
        g = ps.SampledPath(0.01, g_vals, lifetime=1.0, terminal_limit=g_vals[-1])
        h, tj = ps.concat_marked(f, g)
        f2, g2 = ps.split_at_junction(h, tj)
        np.testing.assert_allclose(f2.values, f.values, atol=1e-12)
        np.testing.assert_allclose(g2.values, g.values, atol=0.02)  # grid rounding


class TestShiftRestart:
    def test_ramp(self):
        g = ps.shift_restart(ramp(dt=0.01, T=2.0), 1.0)
        assert g.lifetime == pytest.approx(1.0)
        assert g.values[0] == 0.0
        assert g.value_at(0.5) == pytest.approx(0.5)

    def test_constant_gives_zero(self):
        f = ps.SampledPath(0.1, np.full(20, 3.3), lifetime=2.0, terminal_limit=3.3)
        g = ps.shift_restart(f, 0.55)
        np.testing.assert_allclose(g.values, 0.0, atol=1e-12)

    def test_r_zero_recenters(self):
        f = ps.SampledPath(0.1, 2.0 + np.arange(20) * 0.1, lifetime=2.0,
                           terminal_limit=4.0)
        g = ps.shift_restart(f, 0.0)
        assert g.values[0] == 0.0
        assert g.value_at(1.0) == pytest.approx(1.0)

    def test_r_beyond_lifetime_rejected(self):
        with pytest.raises(ValueError):
            ps.shift_restart(ramp(T=1.0), 1.0)


class TestSampleKilled:
    def brownian_sampler(self, kappa=2.0, dt=1e-2, horizon=3.0):
        def sample(rng):
            lam = drivers.brownian_batch(kappa, 1, dt, horizon, rng)[0]
            return ps.SampledPath(dt, lam, lifetime=math.inf)
        return sample

    def test_step_weight_is_dirac(self):
        spec = ps.KillSpec(weight_fn=lambda f: (f.times >= 1.0).astype(float))
        killed, w = ps.sample_killed(self.brownian_sampler(), spec, substream(4, 0))
        assert w == 1.0
        assert abs(killed.lifetime - 1.0) <= killed.dt

    def test_ramp_weight_uniform_kill(self):
        spec = ps.KillSpec(weight_fn=lambda f: np.minimum(f.times, 2.0))
        rng = substream(5, 0)
        taus, weights = [], []
        for _ in range(2000):
            killed, w = ps.sample_killed(self.brownian_sampler(), spec, rng)
            taus.append(killed.lifetime)
            weights.append(w)
        assert np.allclose(weights, 2.0)
        taus = np.array(taus)
        # uniform on (0, 2]
        assert abs(taus.mean() - 1.0) < 0.05
        assert abs(np.mean(taus < 0.5) - 0.25) < 0.04

    def test_zero_mass_returns_weight_zero(self):
        spec = ps.KillSpec(weight_fn=lambda f: np.zeros(f.n))
        path, w = ps.sample_killed(self.brownian_sampler(), spec, substream(6, 0))
        assert w == 0.0
        assert path.truncated

    def test_strip_occupation_matches_resampling_oracle(self):
        """Weighted kill-time law against a brute-force oracle that draws
        many kill times per path from the same increments."""
        def strip_weight(f):
            inside = (f.values > 0.0) & (f.values < 0.5)
            theta = np.concatenate([[0.0], np.cumsum(inside[:-1]) * f.dt])
            return theta

        spec = ps.KillSpec(weight_fn=strip_weight)
        rng = substream(7, 0)
        sampler = self.brownian_sampler()
        taus, weights = [], []
        oracle_taus, oracle_w = [], []
        for _ in range(700):
            f = sampler(rng)
            theta = strip_weight(f)
            if theta[-1] > 0:
                # oracle: 40 inverse-CDF draws per path, weight split evenly
                us = rng.uniform(0, theta[-1], size=40)
                ks = np.searchsorted(theta, us, side="left").clip(1, f.n - 1)
                dth = theta[ks] - theta[ks - 1]
                frac = np.where(dth > 0, (us - theta[ks - 1]) / np.where(dth > 0, dth, 1.0), 1.0)
                oracle_taus.extend((ks - 1 + frac) * f.dt)
                oracle_w.extend([theta[-1] / 40.0] * 40)
            killed, w = ps.sample_killed(lambda _: f, spec, rng)
            if w > 0:
                taus.append(killed.lifetime)
                weights.append(w)
        res = stats.weighted_ks_test(np.array(taus), np.array(weights),
                                     np.array(oracle_taus), np.array(oracle_w),
                                     substream(7, 1), n_perm=300)
        assert res.p_value > 0.01

    def test_killspec_validation(self):
        with pytest.raises(ValueError):
            ps.KillSpec()
        with pytest.raises(ValueError):
            ps.KillSpec(fixed_time=1.0, time_fn=lambda f: 1.0)
        with pytest.raises(ValueError):
            ps.KillSpec(fixed_time=-1.0)
        bad = ps.KillSpec(weight_fn=lambda f: np.linspace(1.0, 0.0, f.n))
        with pytest.raises(ValueError):
            ps.sample_killed(self.brownian_sampler(), bad, substream(8, 0))
