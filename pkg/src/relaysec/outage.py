"""Secrecy-outage Monte Carlo, the closed-form high-SNR bound, diversity
slope fitting, and the distributional validation probes.

Trials are drawn in fixed-size batches from counter-based substreams
keyed by (seed, stream tag, grid point, batch, resample round), so a
curve is a pure function of (config, grid, trials, mode) no matter how
many workers execute the batches.  Degenerate draws (numerically
singular Gram matrix, parallel leakage vectors in asymptotic mode) are
resampled from their own substream and counted.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import special, stats

from .channel import (
    SystemConfig,
    TAG_DIST,
    TAG_OUTAGE,
    crandn,
    substream,
)
from .kernels import batch_beamform, batch_rates

BATCH = 4096
MIN_EVENTS_PER_POINT = 100
DEFAULT_FIT_WINDOW_DB = (30.0, 45.0)
_MAX_RESAMPLE_ROUNDS = 64


class InsufficientData(Exception):
    """Too few well-estimated points in the fit window."""


@dataclass
class OutageCurve:
    """Monte Carlo outage estimates over an SNR grid, one mode, one config."""

    snr_db: np.ndarray
    pout_mc: np.ndarray
    pout_ub: list            # float or None where the bound is invalid
    trials: np.ndarray       # per point
    outage_count: np.ndarray
    resamples: np.ndarray    # degenerate draws replaced per point
    mode: str
    cfg: SystemConfig


@dataclass
class DiversityEstimate:
    """Least-squares slope of -log10(pout) versus log10(snr)."""

    slope: float
    fit_window_db: tuple
    residual: float          # sum of squared fit residuals
    points_used: int


@dataclass
class RateCurve:
    """Mean per-channel-use rates over an SNR grid (ergodic averages)."""

    snr_db: np.ndarray
    r_secrecy_mean: np.ndarray
    r_bob_mean: np.ndarray
    r_eve_max_mean: np.ndarray
    trials: np.ndarray
    resamples: np.ndarray
    mode: str
    cfg: SystemConfig


def _draw_batch(cfg: SystemConfig, tag: int, point: int, batch: int, round_: int, size: int):
    """One deterministic batch of channel draws for a grid point."""
    rng = substream(cfg.seed, tag, point, batch, round_)
    h = crandn(rng, (size, cfg.k, cfg.n))
    g = crandn(rng, (size, cfg.k))
    u = rng.random((size, cfg.k))
    sel = np.sort(np.argpartition(u, cfg.l - 1, axis=1)[:, : cfg.l], axis=1)
    return h, g, sel


def _point_rates(cfg: SystemConfig, tag: int, point: int, trials: int, mode: str, snr_lin: float):
    """Yield (rs, r_bob, r_eve) batch arrays with degenerates resampled."""
    resamples = 0
    n_batches = (trials + BATCH - 1) // BATCH
    for b in range(n_batches):
        size = min(BATCH, trials - b * BATCH)
        h, g, sel = _draw_batch(cfg, tag, point, b, 0, size)
        rs, rb, re, bad = batch_rates(h, g, sel, cfg.m, snr_lin, mode)
        round_ = 0
        while bad.any():
            round_ += 1
            if round_ > _MAX_RESAMPLE_ROUNDS:
                raise RuntimeError("persistent degenerate draws; check the configuration")
            idx = np.nonzero(bad)[0]
            resamples += idx.size
            h2, g2, sel2 = _draw_batch(cfg, tag, point, b, round_, idx.size)
            rs2, rb2, re2, bad2 = batch_rates(h2, g2, sel2, cfg.m, snr_lin, mode)
            rs[idx], rb[idx], re[idx] = rs2, rb2, re2
            bad = np.zeros_like(bad)
            bad[idx] = bad2
        yield rs, rb, re
    # communicate the resample count to the caller through the generator return
    return resamples


def estimate_outage(
    cfg: SystemConfig,
    snr_grid_db,
    trials: int,
    mode: str = "exact",
) -> OutageCurve:
    """Monte Carlo secrecy-outage probability over an SNR grid.

    Per point, ``trials`` independent realizations are drawn and the
    fraction with secrecy rate strictly below ``cfg.gamma`` is counted.
    Deterministic given (cfg, grid, trials, mode) for any worker count.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    snr_db = np.asarray(snr_grid_db, dtype=float)
    counts = np.zeros(snr_db.size, dtype=np.int64)
    resamples = np.zeros(snr_db.size, dtype=np.int64)
    ub = []
    for p, db in enumerate(snr_db):
        snr_lin = 10.0 ** (db / 10.0)
        run_cfg = _with_snr(cfg, snr_lin)
        it = _point_rates(run_cfg, TAG_OUTAGE, p, trials, mode, snr_lin)
        while True:
            try:
                rs, _, _ = next(it)
            except StopIteration as stop:
                resamples[p] = stop.value or 0
                break
            counts[p] += int(np.count_nonzero(rs < cfg.gamma))
        ub.append(outage_upper_bound(cfg.gamma, snr_lin, cfg.epsilon, cfg.l))
    return OutageCurve(
        snr_db=snr_db,
        pout_mc=counts / float(trials),
        pout_ub=ub,
        trials=np.full(snr_db.size, trials, dtype=np.int64),
        outage_count=counts,
        resamples=resamples,
        mode=mode,
        cfg=cfg,
    )


def estimate_mean_rates(
    cfg: SystemConfig,
    snr_grid_db,
    trials: int,
    mode: str = "exact",
) -> RateCurve:
    """Ergodic mean secrecy/destination/eavesdropper rates over a grid."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    snr_db = np.asarray(snr_grid_db, dtype=float)
    sums = np.zeros((snr_db.size, 3))
    resamples = np.zeros(snr_db.size, dtype=np.int64)
    for p, db in enumerate(snr_db):
        snr_lin = 10.0 ** (db / 10.0)
        run_cfg = _with_snr(cfg, snr_lin)
        it = _point_rates(run_cfg, TAG_OUTAGE, p, trials, mode, snr_lin)
        while True:
            try:
                rs, rb, re = next(it)
            except StopIteration as stop:
                resamples[p] = stop.value or 0
                break
            sums[p, 0] += rs.sum()
            sums[p, 1] += rb.sum()
            sums[p, 2] += re.sum()
    means = sums / float(trials)
    return RateCurve(
        snr_db=snr_db,
        r_secrecy_mean=means[:, 0],
        r_bob_mean=means[:, 1],
        r_eve_max_mean=means[:, 2],
        trials=np.full(snr_db.size, trials, dtype=np.int64),
        resamples=resamples,
        mode=mode,
        cfg=cfg,
    )


def _with_snr(cfg: SystemConfig, snr_lin: float) -> SystemConfig:
    return SystemConfig(
        n=cfg.n, k=cfg.k, l=cfg.l, m=cfg.m, sigma2=cfg.sigma2, snr=snr_lin,
        gamma=cfg.gamma, epsilon=cfg.epsilon, seed=cfg.seed,
    )


def outage_upper_bound(gamma: float, snr_linear: float, epsilon: float, l: int):
    """Closed-form high-SNR outage bound; None below its validity threshold.

    The bound is the CDF of a Gamma(l-1, 1) variable (the sum of the
    selected second-hop powers excluding the strongest) at the threshold
    induced by the secrecy-rate target.
    """
    denom = snr_linear ** (1.0 - epsilon) - 2.0 ** (2.0 * gamma + 2.0) * snr_linear**epsilon
    if denom <= 0.0:
        return None
    t = 2.0 ** (2.0 * gamma + 1.0) / denom
    return float(special.gammainc(l - 1, t))


def diversity_slope(curve: OutageCurve, window_db=DEFAULT_FIT_WINDOW_DB) -> DiversityEstimate:
    """Least-squares diversity-order fit on the log-log outage curve.

    Uses only in-window points with at least MIN_EVENTS_PER_POINT outage
    events (low-count points bias an asymptotic slope); requires three.
    """
    lo, hi = window_db
    keep = (
        (curve.snr_db >= lo)
        & (curve.snr_db <= hi)
        & (curve.outage_count >= MIN_EVENTS_PER_POINT)
        & (curve.pout_mc > 0)
    )
    if np.count_nonzero(keep) < 3:
        raise InsufficientData(
            f"{np.count_nonzero(keep)} usable points in [{lo}, {hi}] dB; need 3"
        )
    x = np.log10(10.0 ** (curve.snr_db[keep] / 10.0))
    y = -np.log10(curve.pout_mc[keep])
    coeffs, res, *_ = np.polyfit(x, y, 1, full=True)
    residual = float(res[0]) if res.size else 0.0
    return DiversityEstimate(
        slope=float(coeffs[0]),
        fit_window_db=(float(lo), float(hi)),
        residual=residual,
        points_used=int(np.count_nonzero(keep)),
    )


# ---------------------------------------------------------------------------
# distributional validation probes
# ---------------------------------------------------------------------------

def _geometry_samples(cfg: SystemConfig, samples: int, key: int):
    """Per-realization (a, g_sel, leakage row of the first non-selected relay)."""
    if cfg.k <= cfg.l:
        raise ValueError("need k > l for a non-selected relay")
    a_all = np.empty((samples, cfg.l))
    g_all = np.empty((samples, cfg.l), dtype=np.complex128)
    hv_all = np.empty((samples, cfg.l), dtype=np.complex128)
    done = 0
    batch_idx = 0
    while done < samples:
        size = min(BATCH, samples - done)
        h, g, sel = _draw_batch(cfg, TAG_DIST, key, batch_idx, 0, size)
        a, heff, cond1 = batch_beamform(h, sel)
        mask = np.ones((size, cfg.k), dtype=bool)
        np.put_along_axis(mask, sel, False, axis=1)
        first_non = np.argmax(mask, axis=1)
        ok = np.isfinite(cond1) & (cond1 < 1e12)
        n_ok = int(np.count_nonzero(ok))
        take = min(n_ok, samples - done)
        idx = np.nonzero(ok)[0][:take]
        a_all[done : done + take] = a[idx]
        g_all[done : done + take] = np.take_along_axis(g[idx], sel[idx], axis=1)
        hv_all[done : done + take] = heff[idx, first_non[idx], :]
        done += take
        batch_idx += 1
    return a_all, g_all, hv_all


@dataclass
class BetaRatioReport:
    """Projection-ratio distribution check for a non-selected relay."""

    samples: int
    ks_statistic: float
    ks_pvalue: float
    ks_critical_1pct: float
    par_mean: float          # squared parallel component, expected 1
    perp_mean: float         # squared orthogonal component, expected l-1
    par_tol: float           # 3 sigma Monte Carlo bands
    perp_tol: float
    passed: bool


def beta_ratio_check(cfg: SystemConfig, samples: int, key: int = 0) -> BetaRatioReport:
    """Check |<h'_l, g>|^2 / (|h'_l|^2 |g|^2) against Beta(1, l-1).

    Also checks the parallel/orthogonal decomposition moments of the
    second-hop vector relative to the leakage direction.
    """
    _, g_sel, hv = _geometry_samples(cfg, samples, key)
    hn = np.sum(np.abs(hv) ** 2, axis=1)
    gn = np.sum(np.abs(g_sel) ** 2, axis=1)
    ip2 = np.abs(np.sum(hv * np.conj(g_sel), axis=1)) ** 2
    ratio = ip2 / (hn * gn)
    par = ip2 / hn
    perp = gn - par

    ks = stats.kstest(ratio, stats.beta(1, cfg.l - 1).cdf)
    crit = np.sqrt(-np.log(0.005) / (2.0 * samples))  # alpha = 0.01 two-sided
    par_tol = 3.0 * np.std(par) / np.sqrt(samples)
    perp_tol = 3.0 * np.std(perp) / np.sqrt(samples)
    passed = (
        ks.statistic < crit
        and abs(np.mean(par) - 1.0) < par_tol
        and abs(np.mean(perp) - (cfg.l - 1)) < perp_tol
    )
    return BetaRatioReport(
        samples=samples,
        ks_statistic=float(ks.statistic),
        ks_pvalue=float(ks.pvalue),
        ks_critical_1pct=float(crit),
        par_mean=float(np.mean(par)),
        perp_mean=float(np.mean(perp)),
        par_tol=float(par_tol),
        perp_tol=float(perp_tol),
        passed=bool(passed),
    )


@dataclass
class JointEventReport:
    """Joint low-rate event frequency versus the closed-form factorisation."""

    snr_db: float
    freq_joint: float
    freq_selected: float
    freq_nonselected: float
    closed_nonselected: float
    product_estimate: float      # closed-form non-selected factor x MC selected
    ci3_joint: float             # 3 sigma binomial half-widths
    ci3_nonselected: float
    samples: int


def pout1_check(cfg: SystemConfig, snr_db: float, samples: int, key: int = 1) -> JointEventReport:
    """Probe the joint event that every relay rate falls under the
    SNR-epsilon threshold, against the closed-form non-selected factor."""
    snr = 10.0 ** (snr_db / 10.0)
    thr = snr**cfg.epsilon
    ev_non, ev_sel = _joint_events(cfg, snr, samples, key)
    freq_joint = float(np.mean(ev_non & ev_sel))
    freq_sel = float(np.mean(ev_sel))
    freq_non = float(np.mean(ev_non))
    closed_non = (1.0 - thr ** (-(cfg.l - 1))) ** (cfg.k - cfg.l)
    return JointEventReport(
        snr_db=snr_db,
        freq_joint=freq_joint,
        freq_selected=freq_sel,
        freq_nonselected=freq_non,
        closed_nonselected=float(closed_non),
        product_estimate=float(closed_non * freq_sel),
        ci3_joint=3.0 * np.sqrt(max(freq_joint * (1 - freq_joint), 1e-12) / samples),
        ci3_nonselected=3.0 * np.sqrt(max(freq_non * (1 - freq_non), 1e-12) / samples),
        samples=samples,
    )


def _joint_events(cfg: SystemConfig, snr: float, samples: int, key: int):
    thr = snr**cfg.epsilon
    ev_non = np.empty(samples, dtype=bool)
    ev_sel = np.empty(samples, dtype=bool)
    done = 0
    batch_idx = 0
    while done < samples:
        size = min(BATCH, samples - done)
        h, g, sel = _draw_batch(cfg, TAG_DIST, key, batch_idx, 0, size)
        a, heff, cond1 = batch_beamform(h, sel)
        g_sel = np.take_along_axis(g, sel, axis=1)
        ag = np.abs(g_sel) ** 2
        tot = ag.sum(axis=1)
        sel_ratio = ag / (tot[:, None] - ag)
        ev_s = (sel_ratio < thr - 1.0).all(axis=1)
        mask = np.ones((size, cfg.k), dtype=bool)
        np.put_along_axis(mask, sel, False, axis=1)
        hv = heff[mask].reshape(size, cfg.k - cfg.l, cfg.l)
        hn = np.sum(np.abs(hv) ** 2, axis=2)
        ip2 = np.abs(np.sum(hv * np.conj(g_sel)[:, None, :], axis=2)) ** 2
        ratio = ip2 / (hn * tot[:, None])
        ev_n = (ratio < 1.0 - 1.0 / thr).all(axis=1)
        take = min(size, samples - done)
        ev_non[done : done + take] = ev_n[:take]
        ev_sel[done : done + take] = ev_s[:take]
        done += take
        batch_idx += 1
    return ev_non, ev_sel


@dataclass
class GainFloorReport:
    """Effective-gain floor event versus the printed and corrected forms."""

    snr_db: np.ndarray
    freq: np.ndarray
    printed_form: np.ndarray      # (1 - exp(-1/(2 snr^eps)))^l, tends to 0
    corrected_form: np.ndarray    # exp(-c l / snr^eps) with fitted scale c
    fitted_scale: float
    supports: str                 # which form the data tracks


def pout2_check(cfg: SystemConfig, snr_grid_db, samples: int, key: int = 2) -> GainFloorReport:
    """Probe P[min_l |h'_{l,l}|^2 > snr^-eps] on a grid.

    The printed closed form decays to zero while the event frequency
    tends to one; the corrected exponential-floor reading is fitted for
    scale and reported alongside.
    """
    snr_db = np.asarray(snr_grid_db, dtype=float)
    freq = np.empty(snr_db.size)
    a_all, _, _ = _geometry_samples(cfg, samples, key)
    amin = a_all.min(axis=1)
    for i, db in enumerate(snr_db):
        u = (10.0 ** (db / 10.0)) ** (-cfg.epsilon)
        freq[i] = np.mean(amin > u)
    u_grid = (10.0 ** (snr_db / 10.0)) ** (-cfg.epsilon)
    printed = (1.0 - np.exp(-0.5 * u_grid)) ** cfg.l
    pos = freq > 0
    if pos.any():
        c = float(-np.sum(u_grid[pos] * np.log(freq[pos])) / (cfg.l * np.sum(u_grid[pos] ** 2)))
    else:
        c = float("nan")
    corrected = np.exp(-c * cfg.l * u_grid)
    err_printed = float(np.mean((freq - printed) ** 2))
    err_corrected = float(np.mean((freq - corrected) ** 2))
    return GainFloorReport(
        snr_db=snr_db,
        freq=freq,
        printed_form=printed,
        corrected_form=corrected,
        fitted_scale=c,
        supports="corrected" if err_corrected < err_printed else "printed",
    )
