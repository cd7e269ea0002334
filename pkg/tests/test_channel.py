import numpy as np
import pytest
from scipy import stats

from relaysec.channel import (
    SystemConfig,
    TAG_TEST,
    crandn,
    sample_channel,
    select_relays,
    substream,
)


def cfg(**kw):
    base = dict(n=4, k=10, l=3, m=10, sigma2=1.0, snr=100.0, gamma=1.0, epsilon=0.05, seed=0)
    base.update(kw)
    return SystemConfig(**base)


class TestSystemConfig:
    def test_power_derivation(self):
        c = cfg(snr=200.0, sigma2=2.0, m=5)
        assert c.power == pytest.approx(200.0 * 2.0 / 10.0)

    @pytest.mark.parametrize(
        "bad",
        [
            dict(l=1),
            dict(l=5),            # l > min(n, k) = 4
            dict(n=1),
            dict(k=1, l=2),
            dict(m=0),
            dict(sigma2=0.0),
            dict(snr=0.0),
            dict(epsilon=0.0),
            dict(epsilon=1.0),
            dict(gamma=-0.5),
        ],
    )
    def test_invariants_rejected(self, bad):
        with pytest.raises(ValueError):
            cfg(**bad)


class TestSampleChannel:
    def test_gain_power_unit_mean(self):
        rng = substream(0, TAG_TEST, 0)
        h = crandn(rng, 10**6)
        mean = np.mean(np.abs(h) ** 2)
        assert abs(mean - 1.0) < 0.01

    def test_magnitude_is_rayleigh(self):
        rng = substream(0, TAG_TEST, 100)
        g = crandn(rng, 10**5)
        res = stats.kstest(np.abs(g), "rayleigh", args=(0, 1 / np.sqrt(2)))
        assert res.pvalue > 0.01

    def test_same_seed_same_realization(self):
        c = cfg()
        ch1 = sample_channel(c, substream(c.seed, TAG_TEST, 2))
        ch2 = sample_channel(c, substream(c.seed, TAG_TEST, 2))
        assert np.array_equal(ch1.h, ch2.h)
        assert np.array_equal(ch1.g, ch2.g)
        assert np.array_equal(ch1.selected, ch2.selected)

    def test_shapes_and_selection(self):
        c = cfg()
        ch = sample_channel(c, substream(0, TAG_TEST, 3))
        assert ch.h.shape == (10, 4)
        assert ch.g.shape == (10,)
        assert ch.selected.size == 3
        assert np.all(np.diff(ch.selected) > 0)
        assert set(ch.nonselected) == set(range(10)) - set(ch.selected)

    def test_chi_square_sum_moments(self):
        # sum of l-1 gain powers is Gamma(l-1, 1): check mean and variance
        rng = substream(0, TAG_TEST, 4)
        n = 10**5
        k = 2   # l - 1 for l = 3
        s = np.sum(np.abs(crandn(rng, (n, k))) ** 2, axis=1)
        mean_tol = 3 * np.sqrt(k / n)
        var_tol = 3 * np.sqrt((2 * k**2 + 6 * k) / n)
        assert abs(np.mean(s) - k) < mean_tol
        assert abs(np.var(s) - k) < var_tol


class TestSelectRelays:
    def test_full_selection(self):
        c = cfg(k=4, l=4)
        sel = select_relays(c, substream(0, TAG_TEST, 5))
        assert np.array_equal(sel, np.arange(4))

    def test_uniform_membership(self):
        c = cfg(k=10, l=2)
        rng = substream(0, TAG_TEST, 6)
        counts = np.zeros(10)
        n = 10**5
        for _ in range(n):
            counts[select_relays(c, rng)] += 1
        freq = counts / n
        assert np.all(np.abs(freq - 0.2) < 0.01)

    def test_deterministic(self):
        c = cfg()
        s1 = select_relays(c, substream(7, TAG_TEST, 7))
        s2 = select_relays(c, substream(7, TAG_TEST, 7))
        assert np.array_equal(s1, s2)

    def test_substreams_order_independent(self):
        a_then_b = (substream(1, TAG_TEST, 8).random(), substream(1, TAG_TEST, 9).random())
        b_then_a = (substream(1, TAG_TEST, 9).random(), substream(1, TAG_TEST, 8).random())
        assert a_then_b[0] == b_then_a[1]
        assert a_then_b[1] == b_then_a[0]
