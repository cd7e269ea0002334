import numpy as np
import pytest

from relaysec.beamforming import compute_beamformers
from relaysec.channel import ChannelRealization, SystemConfig, TAG_TEST, crandn, substream
from relaysec.kernels import (
    HAVE_NUMBA,
    active_backend,
    batch_beamform,
    batch_rates,
    set_workers,
    _rates_numpy,
)
from relaysec.protocol import effective_link
from relaysec.rates import secrecy_rate


def draw_batch(b, k, n, l, key):
    rng = substream(0, TAG_TEST, 60, key)
    h = crandn(rng, (b, k, n))
    g = crandn(rng, (b, k))
    u = rng.random((b, k))
    sel = np.sort(np.argpartition(u, l - 1, axis=1)[:, :l], axis=1)
    return h, g, sel


class TestBatchBeamform:
    def test_matches_reference(self):
        h, g, sel = draw_batch(40, 8, 4, 3, 0)
        a, heff, cond = batch_beamform(h, sel)
        for t in range(40):
            ch = ChannelRealization(h[t], g[t], sel[t])
            bs = compute_beamformers(ch)
            np.testing.assert_allclose(heff[t], bs.heff, atol=1e-10)
            diag = np.abs(bs.heff[sel[t], np.arange(3)]) ** 2
            np.testing.assert_allclose(a[t], diag, rtol=1e-10)
        assert np.all(np.isfinite(cond))


@pytest.mark.parametrize("mode", ["exact", "asymptotic"])
class TestBackendParity:
    def test_backends_agree(self, mode):
        h, g, sel = draw_batch(200, 10, 4, 3, 1)
        rs_np, rb_np, re_np, bad_np = _rates_numpy(h, g, sel, 10, 10**3.3, mode == "exact")
        assert not bad_np.any()
        if HAVE_NUMBA:
            rs_nb, rb_nb, re_nb, bad_nb = batch_rates(h, g, sel, 10, 10**3.3, mode)
            np.testing.assert_allclose(rs_nb, rs_np, rtol=1e-10, atol=1e-12)
            np.testing.assert_allclose(rb_nb, rb_np, rtol=1e-10, atol=1e-12)
            np.testing.assert_allclose(re_nb, re_np, rtol=1e-10, atol=1e-12)
            assert not bad_nb.any()

    def test_matches_single_realization_plane(self, mode):
        snr = 10**2.4
        h, g, sel = draw_batch(50, 9, 4, 3, 2)
        rs, rb, re, bad = batch_rates(h, g, sel, 7, snr, mode)
        cfg = SystemConfig(n=4, k=9, l=3, m=7, sigma2=1.0, snr=snr)
        for t in range(50):
            ch = ChannelRealization(h[t], g[t], sel[t])
            bs = compute_beamformers(ch)
            link = effective_link(bs, ch, cfg)
            bd = secrecy_rate(link, bs, ch, cfg, mode)
            r_bob = bd.r_bob_exact if mode == "exact" else bd.r_bob_lb
            assert rs[t] == pytest.approx(bd.r_secrecy, abs=1e-10)
            assert rb[t] == pytest.approx(r_bob, abs=1e-10)
            assert re[t] == pytest.approx(bd.r_eve_max, abs=1e-10)


class TestBackendSelection:
    def test_env_flag_numpy(self, monkeypatch):
        monkeypatch.setenv("RELAYSEC_BACKEND", "numpy")
        assert active_backend() == "numpy"

    def test_env_flag_auto(self, monkeypatch):
        monkeypatch.delenv("RELAYSEC_BACKEND", raising=False)
        assert active_backend() in ("numba", "numpy")

    def test_env_flag_invalid(self, monkeypatch):
        monkeypatch.setenv("RELAYSEC_BACKEND", "cuda")
        with pytest.raises(ValueError):
            active_backend()

    def test_numpy_flag_routes_to_fallback(self, monkeypatch):
        h, g, sel = draw_batch(20, 6, 4, 2, 3)
        monkeypatch.setenv("RELAYSEC_BACKEND", "numpy")
        rs1, *_ = batch_rates(h, g, sel, 10, 100.0, "exact")
        rs2, *_ = _rates_numpy(h, g, sel, 10, 100.0, True)
        assert np.array_equal(rs1, rs2)


@pytest.mark.skipif(not HAVE_NUMBA, reason="numba unavailable")
class TestThreadInvariance:
    def test_results_identical_across_worker_counts(self):
        h, g, sel = draw_batch(3000, 10, 4, 3, 4)
        set_workers(1)
        rs1, rb1, re1, bad1 = batch_rates(h, g, sel, 10, 10**3, "exact")
        set_workers(4)
        rs4, rb4, re4, bad4 = batch_rates(h, g, sel, 10, 10**3, "exact")
        set_workers(None)
        assert np.array_equal(rs1, rs4)
        assert np.array_equal(rb1, rb4)
        assert np.array_equal(re1, re4)
        assert np.array_equal(bad1, bad4)


class TestDegenerateFlags:
    def test_rank_deficient_draw_flagged(self):
        h, g, sel = draw_batch(8, 6, 4, 3, 5)
        h[2, sel[2, 1]] = h[2, sel[2, 0]]  # duplicate selected row: singular Gram
        rs, rb, re, bad = batch_rates(h, g, sel, 10, 100.0, "exact")
        assert bad[2]
        assert not bad[[0, 1, 3, 4, 5, 6, 7]].any()

    def test_parallel_vectors_flagged_in_asym_mode(self):
        h, g, sel = draw_batch(8, 6, 4, 3, 6)
        a, heff, _ = batch_beamform(h, sel)
        mask = np.ones((8, 6), dtype=bool)
        np.put_along_axis(mask, sel, False, axis=1)
        non0 = np.nonzero(mask[3])[0][0]
        # second hop of the selected relays parallel to relay non0's leakage
        g[3, sel[3]] = heff[3, non0, :]
        rs, rb, re, bad = batch_rates(h, g, sel, 10, 100.0, "asymptotic")
        assert bad[3]
