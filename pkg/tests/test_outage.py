import numpy as np
import pytest
from scipy import special

from relaysec.channel import SystemConfig
from relaysec.outage import (
    BATCH,
    DiversityEstimate,
    InsufficientData,
    OutageCurve,
    beta_ratio_check,
    diversity_slope,
    estimate_mean_rates,
    estimate_outage,
    outage_upper_bound,
    pout1_check,
    pout2_check,
)


def cfg(**kw):
    base = dict(n=4, k=10, l=3, m=10, sigma2=1.0, snr=100.0, gamma=1.0, epsilon=0.05, seed=0)
    base.update(kw)
    return SystemConfig(**base)


class TestEstimateOutage:
    def test_zero_threshold_never_in_outage(self):
        curve = estimate_outage(cfg(gamma=0.0), [10.0], 2000, "exact")
        assert curve.outage_count[0] == 0
        assert curve.pout_mc[0] == 0.0

    def test_tiny_snr_always_in_outage(self):
        curve = estimate_outage(cfg(), [-60.0], 2000, "exact")
        assert curve.pout_mc[0] == 1.0

    def test_counts_match_probability(self):
        trials = BATCH + 123   # exercises a partial tail batch
        curve = estimate_outage(cfg(), [10.0, 20.0], trials, "exact")
        np.testing.assert_allclose(curve.pout_mc, curve.outage_count / trials)

    def test_deterministic(self):
        c = cfg(seed=3)
        a = estimate_outage(c, [10.0, 15.0], 3000, "exact")
        b = estimate_outage(c, [10.0, 15.0], 3000, "exact")
        assert np.array_equal(a.outage_count, b.outage_count)

    def test_modes_differ_and_bound_each_other(self):
        # the asymptotic-mode destination rate is a lower bound, so its
        # outage estimate dominates the exact one
        c = cfg(seed=5)
        grid = [15.0, 20.0]
        exact = estimate_outage(c, grid, 20000, "exact")
        asym = estimate_outage(c, grid, 20000, "asymptotic")
        assert np.all(asym.pout_mc >= exact.pout_mc - 3e-3)

    def test_rejects_bad_trials(self):
        with pytest.raises(ValueError):
            estimate_outage(cfg(), [10.0], 0, "exact")


class TestEstimateMeanRates:
    def test_means_are_consistent(self):
        curve = estimate_mean_rates(cfg(seed=2), [20.0, 30.0], 5000, "exact")
        assert np.all(curve.r_secrecy_mean >= 0)
        assert np.all(curve.r_bob_mean > 0)
        assert np.all(curve.r_secrecy_mean <= curve.r_bob_mean)
        assert curve.r_secrecy_mean[1] > curve.r_secrecy_mean[0]

    def test_deterministic(self):
        a = estimate_mean_rates(cfg(seed=4), [25.0], 4000, "exact")
        b = estimate_mean_rates(cfg(seed=4), [25.0], 4000, "exact")
        assert np.array_equal(a.r_secrecy_mean, b.r_secrecy_mean)


class TestOutageUpperBound:
    def test_invalid_below_threshold(self):
        # snr^(1-eps) <= 2^(2g+2) snr^eps makes the bound vacuous; for
        # gamma=1, eps=0.05 the threshold is 16^(1/0.9) ~ 21.8
        assert outage_upper_bound(1.0, 10.0, 0.05, 3) is None
        assert outage_upper_bound(1.0, 20.0, 0.05, 3) is None
        assert outage_upper_bound(1.0, 30.0, 0.05, 3) is not None

    def test_l2_exponential_cdf(self):
        snr, eps, gamma = 1e4, 0.01, 1.0
        t = 2 ** (2 * gamma + 1) / (snr ** (1 - eps) - 2 ** (2 * gamma + 2) * snr**eps)
        got = outage_upper_bound(gamma, snr, eps, 2)
        assert got == pytest.approx(1.0 - np.exp(-t), rel=1e-12)
        assert t == pytest.approx(8.0 / (snr**0.99 - 16 * snr**0.01))

    def test_small_argument_power_law(self):
        # gamma CDF ~ t^(l-1) / (l-1)! so the log-log slope is l-1
        for l in (2, 3, 4):
            vals = []
            for snr in (1e7, 1e8):
                gamma, eps = 1.0, 0.05
                t = 2 ** (2 * gamma + 1) / (snr ** (1 - eps) - 2 ** (2 * gamma + 2) * snr**eps)
                p = outage_upper_bound(gamma, snr, eps, l)
                vals.append(p / (t ** (l - 1) / special.factorial(l - 1)))
            assert abs(vals[0] - 1) < 0.01 and abs(vals[1] - 1) < 0.01


class TestDiversitySlope:
    def synthetic(self, slope, grid_db, trials=10**6, count_floor=10**4):
        snr = 10.0 ** (np.asarray(grid_db) / 10.0)
        pout = 10.0**2.0 / snr**slope
        counts = np.maximum((pout * trials).astype(np.int64), count_floor)
        return OutageCurve(
            snr_db=np.asarray(grid_db, dtype=float), pout_mc=pout,
            pout_ub=[None] * len(grid_db), trials=np.full(len(grid_db), trials),
            outage_count=counts, resamples=np.zeros(len(grid_db), dtype=np.int64),
            mode="exact", cfg=cfg(),
        )

    def test_exact_power_law(self):
        est = diversity_slope(self.synthetic(2.0, [30, 35, 40, 45]))
        assert est.slope == pytest.approx(2.0, abs=1e-6)

    def test_l4_power_law(self):
        est = diversity_slope(self.synthetic(3.0, [30, 35, 40, 45]))
        assert est.slope == pytest.approx(3.0, abs=1e-6)

    def test_window_trimming(self):
        curve = self.synthetic(2.0, [10, 20, 30, 35, 40, 45])
        est = diversity_slope(curve, (30.0, 45.0))
        assert est.points_used == 4

    def test_low_count_points_dropped(self):
        curve = self.synthetic(2.0, [30, 35, 40, 45])
        curve.outage_count[-1] = 50   # below the 100-event floor
        est = diversity_slope(curve)
        assert est.points_used == 3

    def test_insufficient_data(self):
        curve = self.synthetic(2.0, [30, 35, 40, 45])
        curve.outage_count[:] = 10
        with pytest.raises(InsufficientData):
            diversity_slope(curve)


class TestBetaRatioCheck:
    def test_cdf_midpoint_l2(self):
        # Beta(1, 1) is uniform: F(1/2) = 1/2
        from scipy import stats
        assert stats.beta(1, 1).cdf(0.5) == pytest.approx(0.5)

    def test_ks_and_moments(self):
        rep = beta_ratio_check(cfg(l=3, k=8, seed=1), 30000)
        assert rep.passed
        assert rep.ks_statistic < rep.ks_critical_1pct
        assert abs(rep.par_mean - 1.0) < rep.par_tol
        assert abs(rep.perp_mean - 2.0) < rep.perp_tol

    def test_needs_nonselected_relay(self):
        with pytest.raises(ValueError):
            beta_ratio_check(cfg(n=3, k=3, l=3), 100)


class TestPout1Check:
    def test_closed_form_hand_value(self):
        # snr^eps = 100: non-selected factor (1 - 100^-(l-1))^(k-l)
        c = cfg(n=4, k=5, l=3, epsilon=0.5)
        rep = pout1_check(c, 40.0, 30000)
        assert rep.closed_nonselected == pytest.approx((1 - 1e-4) ** 2)
        assert abs(rep.freq_nonselected - rep.closed_nonselected) < max(rep.ci3_nonselected, 1e-3)

    def test_joint_frequency_tends_to_one(self):
        c = cfg(n=4, k=6, l=3, epsilon=0.5)
        freqs = [pout1_check(c, db, 4000, key=10 + i).freq_joint
                 for i, db in enumerate([10.0, 30.0, 60.0])]
        assert freqs[-1] > 0.99
        assert freqs[0] <= freqs[1] <= freqs[2] + 1e-9


class TestPout2Check:
    def test_report_and_discrepancy(self):
        c = cfg(n=3, k=6, l=3, epsilon=0.3, seed=2)
        rep = pout2_check(c, [10, 20, 30, 40, 50, 60], 20000)
        # frequency rises toward one while the printed form collapses to zero
        assert np.all(np.diff(rep.freq) >= -1e-9)
        assert rep.freq[-1] > 0.9
        assert rep.printed_form[-1] < 1e-5
        assert rep.supports == "corrected"
        # the fitted exponential floor tracks the data; the printed form cannot
        assert rep.fitted_scale > 0
        assert np.abs(rep.freq - rep.corrected_form).max() < 0.05
        assert np.abs(rep.freq - rep.printed_form).max() > 0.5
