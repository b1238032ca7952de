import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from gsmlab.bodies import LpBody, counterexample_body, d_u
from gsmlab.montecarlo import MCEstimate, RngStream
from gsmlab.sampling_priors import Dataset, LfhtDataset, sample_dataset, sample_lfht_dataset
from gsmlab.tests import (
    CoordinateSelection,
    RegionKind,
    TestDecision,
    calibrate_gof_threshold,
    gof_projection_statistic,
    gof_projection_test,
    gof_two_part_test,
    lfht_full_test,
    lfht_moments_h0,
    lfht_plan,
    lfht_projection_test,
    lfht_region_predicate,
    lfht_select_coordinates,
    lfht_selected_test,
    lfht_statistic,
    t3_threshold,
    two_part_params,
)


def const(rows, dim, value=0.0):
    return Dataset(np.full((rows, dim), float(value)))


class TestGofProjection:
    def test_zero_data_accepts(self):
        dec = gof_projection_test(const(4, 3), 3, 1e-3)
        assert dec.statistic == 0.0 and not dec.reject and dec.value == "AcceptH0"

    def test_unit_mean_rejects(self):
        data = Dataset(np.array([[1.0, 0.0], [1.0, 0.0]]))
        assert gof_projection_test(data, 1, 0.5).reject

    def test_d_too_large(self):
        with pytest.raises(ValueError):
            gof_projection_test(const(2, 2), 3, 0.1)

    def test_null_level(self):
        d, n, level = 5, 40, 1 / 8
        thr = calibrate_gof_threshold(d, n, level, method="chi2")
        gen = RngStream(1).generator()
        means = gen.standard_normal((40000, d)) / math.sqrt(n)
        rate = np.mean(gof_projection_statistic(means, d) >= thr)
        assert abs(rate - level) <= 3 * 1.96 * math.sqrt(level * (1 - level) / 40000)

    @given(st.integers(0, 2**32))
    def test_row_permutation_invariance(self, seed):
        rng = np.random.default_rng(seed)
        x = rng.normal(size=(7, 4))
        a = gof_projection_test(Dataset(x), 3, 0.2)
        b = gof_projection_test(Dataset(x[rng.permutation(7)]), 3, 0.2)
        assert a.statistic == pytest.approx(b.statistic, rel=1e-12, abs=1e-15)

    @given(st.floats(0, 10), st.floats(0, 10), st.floats(0, 10))
    def test_decision_monotone(self, s1, s2, thr):
        lo, hi = sorted((s1, s2))
        dec = lambda s: TestDecision(s >= thr, s, thr).reject
        assert dec(hi) >= dec(lo)


class TestCalibration:
    def test_chi2_one_sigma(self):
        level = 2 * stats.norm.sf(1.0)
        assert calibrate_gof_threshold(1, 1, level, method="chi2") == pytest.approx(1.0, rel=1e-10)

    def test_level_near_one(self):
        assert calibrate_gof_threshold(3, 10, 1 - 1e-9, method="chi2") < 1e-5

    def test_bad_level(self):
        with pytest.raises(ValueError):
            calibrate_gof_threshold(1, 1, 1.0, method="chi2")

    @pytest.mark.parametrize("d", [1, 5, 20])
    def test_mc_matches_chi2(self, d):
        mc = calibrate_gof_threshold(d, 50, 1 / 8, trials=10**5, stream=RngStream(2, (d,)))
        exact = calibrate_gof_threshold(d, 50, 1 / 8, method="chi2")
        assert mc == pytest.approx(exact, rel=0.02)

    def test_mc_one_sigma(self):
        level = 2 * stats.norm.sf(1.0)
        assert calibrate_gof_threshold(1, 1, level, trials=10**5, stream=RngStream(3)) == pytest.approx(1.0, rel=0.02)


class TestTwoPart:
    def test_params(self):
        prm = two_part_params(0.25)
        assert (prm.d, prm.D) == (4, 8)
        assert prm.max_threshold == pytest.approx(0.25**1.2)

    def test_zero_accepts(self):
        assert not gof_two_part_test(const(3, 8), 0.25).reject

    def test_spike_rejects_via_max(self):
        eps = 0.25
        prm = two_part_params(eps)
        x = np.zeros((1, prm.D))
        x[0, prm.d] = 2 * eps ** (6 / 5)
        dec = gof_two_part_test(Dataset(x), eps)
        assert dec.reject
        assert dec.extras["energy"] == 0.0
        assert dec.extras["max"] > dec.extras["max_threshold"]

    def test_energy_branch(self):
        x = np.zeros((1, 8))
        x[0, 0] = 0.25
        dec = gof_two_part_test(Dataset(x), 0.25)
        assert dec.reject and dec.extras["energy"] > dec.extras["energy_threshold"]

    def test_too_few_coordinates(self):
        with pytest.raises(ValueError):
            gof_two_part_test(const(2, 7), 0.25)


class TestLfhtProjection:
    def test_z_equals_x(self):
        ds = LfhtDataset(const(2, 3, 1.0), const(2, 3, 0.0), const(4, 3, 1.0))
        dec = lfht_projection_test(ds, 3)
        assert dec.statistic < 0 and not dec.reject

    @given(st.integers(0, 2**32))
    def test_antisymmetry(self, seed):
        ds = sample_lfht_dataset([0.2, 0.1], [0.0], [0.1], 8, 5, 4, RngStream(seed))
        a = lfht_projection_test(ds, 3)
        b = lfht_projection_test(ds.swapped(), 3)
        assert b.statistic == -a.statistic
        if a.statistic != 0:
            assert a.reject != b.reject

    def test_moments_under_h0(self):
        d, n, m = 5, 200, 200
        tx = np.zeros(d)
        tx[0] = 0.5
        ty = np.zeros(d)
        mean, var = lfht_moments_h0(tx, ty, d, n, m)
        gen = RngStream(4).generator()
        trials = 20000
        mx = tx + gen.standard_normal((trials, d)) / math.sqrt(n)
        my = ty + gen.standard_normal((trials, d)) / math.sqrt(n)
        mz = tx + gen.standard_normal((trials, d)) / math.sqrt(m)
        t = lfht_statistic(mx, my, mz)
        assert MCEstimate.from_values(t).covers(mean)
        dev = (t - t.mean()) ** 2
        assert MCEstimate.from_values(dev * trials / (trials - 1)).covers(var)


class TestSelection:
    def _halves(self, tx, ty, n, dim, seed):
        s = RngStream(seed)
        return (sample_dataset(tx, n // 2, dim, s.child(0)), sample_dataset(ty, n // 2, dim, s.child(1)))

    def test_full_when_d_u_covers(self):
        body = counterexample_body(6)
        X1, Y1 = self._halves([0.1], [0.0], 40, 6, 0)
        sel = lfht_select_coordinates(X1, Y1, body, 40, 0.3)
        assert sel.d_u_used == 6
        assert sel.selected == tuple(range(6)) and sel.t3 == ()

    def test_identical_halves(self):
        body = counterexample_body(2000)
        X1, _ = self._halves([0.1], [0.0], 20000, 2000, 1)
        sel = lfht_select_coordinates(X1, X1, body, 20000, 0.3)
        assert sel.d_u_used < 2000
        assert sel.t3 == ()
        assert sel.selected == tuple(range(sel.d_u_used))

    def test_large_gap_selected(self):
        body = counterexample_body(2000)
        X1 = const(10000, 2000)
        samples = np.zeros((10000, 2000))
        samples[:, 1500] = 1.0
        Y1 = Dataset(samples)
        sel = lfht_select_coordinates(X1, Y1, body, 20000, 0.3)
        assert sel.t3 == (1500,)

    def test_half_size_checked(self):
        body = counterexample_body(6)
        X1, Y1 = self._halves([0.1], [0.0], 40, 6, 2)
        with pytest.raises(ValueError):
            lfht_select_coordinates(X1, Y1, body, 60, 0.3)

    def test_selected_all_equals_projection(self):
        ds = sample_lfht_dataset([0.3, 0.1], [0.0], [0.0], 10, 7, 5, RngStream(5))
        sel = CoordinateSelection(tuple(range(5)), 5, 1 / 32, 5, 0.0)
        a = lfht_selected_test(ds.X, ds.Y, ds.Z, sel)
        b = lfht_projection_test(ds, 5)
        assert a.statistic == pytest.approx(b.statistic, rel=1e-13)
        assert a.reject == b.reject

    def test_z_at_x_mean(self):
        X2 = Dataset(np.array([[1.0, 2.0], [1.0, 2.0]]))
        Y2 = const(2, 2)
        sel = CoordinateSelection((0, 1), 2, 1 / 32, 2, 0.0)
        assert not lfht_selected_test(X2, Y2, Dataset(X2.samples[:1]), sel).reject

    def test_empty_selection(self):
        sel = CoordinateSelection((), 0, 1 / 32, 2, 0.0)
        with pytest.raises(ValueError):
            lfht_selected_test(const(1, 2), const(1, 2), const(1, 2), sel)

    def test_conditional_moments(self):
        # fixed selection, second halves and Z fresh: E and Var of the statistic given the selection
        N, m, D = 150, 120, 6
        tx = np.array([0.3, 0.2, 0.0, 0.1, 0.0, 0.0])
        ty = np.zeros(D)
        mask = np.array([1, 1, 0, 1, 0, 0.0])
        k = int(mask.sum())
        gen = RngStream(6).generator()
        trials = 20000
        mx = tx + gen.standard_normal((trials, D)) / math.sqrt(N)
        my = ty + gen.standard_normal((trials, D)) / math.sqrt(N)
        mz = tx + gen.standard_normal((trials, D)) / math.sqrt(m)
        t = lfht_statistic(mx, my, mz, mask)
        sep = float(np.sum(mask * (tx - ty) ** 2))
        var = (4 / m + 4 / N) * sep + 4 * k / N**2 + 8 * k / (m * N)
        assert MCEstimate.from_values(t).covers(-sep)
        dev = (t - t.mean()) ** 2 * trials / (trials - 1)
        assert MCEstimate.from_values(dev).covers(var)


class TestFullScheme:
    def test_deterministic(self):
        body = counterexample_body(40)
        a = lfht_full_test(sample_lfht_dataset([0.2], [0.0], [0.2], 50, 30, 40, RngStream(7)), body, 0.3)
        b = lfht_full_test(sample_lfht_dataset([0.2], [0.0], [0.2], 50, 30, 40, RngStream(7)), body, 0.3)
        assert a == b

    def test_truncates_to_kolmogorov_dim(self):
        body = counterexample_body(40)
        dec = lfht_full_test(sample_lfht_dataset([0.2], [0.0], [0.2], 50, 30, 40, RngStream(8)), body, 0.3)
        assert dec.extras["D"] == 10

    def test_d_u_at_third_scale(self):
        body = counterexample_body(100)
        plan = lfht_plan(body, 10**9, 0.3)
        assert plan.D == 10
        assert plan.d_u == d_u(body, 10**9, 0.1, 1 / 32, 10)

    def test_odd_split(self):
        plan = lfht_plan(counterexample_body(20), 11, 0.3)
        assert (plan.n0, plan.N) == (5, 6)

    def test_needs_two_samples(self):
        body = counterexample_body(20)
        with pytest.raises(ValueError):
            lfht_full_test(sample_lfht_dataset([0.2], [0.0], [0.2], 1, 3, 20, RngStream(0)), body, 0.3)

    def test_short_data(self):
        body = counterexample_body(20)
        with pytest.raises(ValueError):
            lfht_full_test(sample_lfht_dataset([0.2], [0.0], [0.2], 4, 3, 5, RngStream(0)), body, 0.3)

    def test_t3_threshold_formula(self):
        assert t3_threshold(100, 10, 1 / 32) == pytest.approx(4 * math.sqrt(2 * math.log(640) / 100))


class TestRegionPredicates:
    def test_quad_large(self):
        body = LpBody.constant(10)
        assert lfht_region_predicate("SufficientQuad", body, 10**9, 10**9, 0.5)

    def test_quad_boundary(self):
        body = LpBody.constant(10)
        eps = 0.5
        m, n = math.ceil(96 / eps**2), math.ceil(96 * math.sqrt(10) / eps**2)
        assert lfht_region_predicate(RegionKind.SUFFICIENT_QUAD, body, m, n, eps)
        assert not lfht_region_predicate(RegionKind.SUFFICIENT_QUAD, body, m - 1, n, eps)

    def test_necessary_m_floor(self):
        body = counterexample_body(50)
        assert not lfht_region_predicate("NecessaryLp", body, 10, 10**6, 0.3)

    def test_unknown_kind(self):
        with pytest.raises(ValueError):
            lfht_region_predicate("Other", counterexample_body(5), 1, 1, 0.3)

    @pytest.mark.filterwarnings("ignore::gsmlab.bodies.PrefixTooShortWarning")
    @settings(max_examples=300)
    @given(st.integers(1, 10**7), st.integers(1, 10**7), st.floats(0.01, 1.0),
           st.sampled_from([1.0, 1.5, 2.0]), st.booleans())
    def test_sufficient_inside_necessary(self, m, n, eps, p, truncate):
        body = LpBody(p, 1.0 / np.arange(1, 201) ** 0.7)
        if lfht_region_predicate("SufficientLp", body, m, n, eps, truncate=truncate):
            assert lfht_region_predicate("NecessaryLp", body, m, n, eps)
