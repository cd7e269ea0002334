"""Batched per-trial rate evaluation: the Monte Carlo hot path.

Two interchangeable backends compute identical formulas:

* a numba ``@njit(parallel=True)`` kernel with hand-rolled small-matrix
  Cholesky (the default when numba imports), and
* a vectorised pure-numpy fallback.

Selection is via the ``RELAYSEC_BACKEND`` environment flag
(``auto`` / ``numba`` / ``numpy``); worker count for the numba path via
``RELAYSEC_WORKERS``.  Per-trial outputs are bit-identical for any
thread count, so event counting downstream is reproducible.

Everything here works with the noise variance normalised to 1 and the
relay power budget equal to ``snr``; the rates are invariant to that
scaling.  :mod:`relaysec.rates` is the single-realization reference
implementation these kernels are tested against.
"""

from __future__ import annotations

import os

import numpy as np

try:
    import numba
    from numba import njit, prange

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a hard dependency but stay usable
    HAVE_NUMBA = False

COND_CAP = 1e12
_PARALLEL_TOL = 1e-12


def active_backend() -> str:
    """Resolve the RELAYSEC_BACKEND flag to 'numba' or 'numpy'."""
    choice = os.environ.get("RELAYSEC_BACKEND", "auto").strip().lower()
    if choice in ("", "auto"):
        return "numba" if HAVE_NUMBA else "numpy"
    if choice not in ("numba", "numpy"):
        raise ValueError(f"RELAYSEC_BACKEND must be auto, numba or numpy, got {choice!r}")
    if choice == "numba" and not HAVE_NUMBA:
        raise RuntimeError("RELAYSEC_BACKEND=numba but numba is not importable")
    return choice


def set_workers(count: int | None = None) -> int:
    """Pin the numba worker count (None or 0 means all available cores)."""
    if not HAVE_NUMBA:
        return 1
    limit = numba.config.NUMBA_NUM_THREADS
    threads = limit if not count else max(1, min(int(count), limit))
    numba.set_num_threads(threads)
    return threads


def workers_from_env() -> int:
    """Apply the RELAYSEC_WORKERS override, if any."""
    raw = os.environ.get("RELAYSEC_WORKERS", "").strip()
    return set_workers(int(raw) if raw else None)


def batch_rates(h, g, sel, m, snr, mode="exact"):
    """Per-trial secrecy rates for a batch of channel draws.

    Parameters
    ----------
    h : (B, K, N) complex first-hop draws
    g : (B, K) complex second-hop draws
    sel : (B, L) int selected indices, ascending per row
    m : symbol pairs per relay
    snr : linear per-relay SNR
    mode : "exact" or "asymptotic"

    Returns
    -------
    rs, r_bob, r_eve : (B,) float64 per-channel-use rates
    bad : (B,) bool, True for degenerate draws the caller must resample
    """
    if mode not in ("exact", "asymptotic"):
        raise ValueError(f"unknown mode {mode!r}")
    h = np.ascontiguousarray(h, dtype=np.complex128)
    g = np.ascontiguousarray(g, dtype=np.complex128)
    sel = np.ascontiguousarray(sel, dtype=np.int64)
    exact = mode == "exact"
    if active_backend() == "numba":
        return _rates_numba(h, g, sel, np.int64(m), float(snr), exact)
    return _rates_numpy(h, g, sel, int(m), float(snr), exact)


# ---------------------------------------------------------------------------
# pure-numpy path (vectorised over trials)
# ---------------------------------------------------------------------------

def batch_beamform(h, sel):
    """Vectorised ZF geometry for a batch: gains and full effective matrix.

    Returns ``(a, heff, cond1)`` where ``a[b, j] = |h'_{j,j}|^2`` of draw
    ``b``, ``heff[b, r, j]`` is the effective gain of beam ``j`` at relay
    ``r`` and ``cond1`` the 1-norm condition estimate of the Gram matrix.
    Singular draws come back with non-finite entries; callers mask on
    ``cond1``.
    """
    h = np.ascontiguousarray(h, dtype=np.complex128)
    sel = np.ascontiguousarray(sel, dtype=np.int64)
    hs = np.take_along_axis(h, sel[:, :, None], axis=1)
    gram = hs @ hs.conj().swapaxes(1, 2)
    det = np.linalg.det(gram)
    fixable = ~np.isfinite(det) | (np.abs(det) < 1e-280)
    if fixable.any():
        # keep batched inv happy; these draws are flagged via cond1
        eye = np.eye(sel.shape[1], dtype=np.complex128)
        gram = gram.copy()
        gram[fixable] = eye
    ginv = np.linalg.inv(gram)
    cond1 = np.abs(gram).sum(axis=1).max(axis=1) * np.abs(ginv).sum(axis=1).max(axis=1)
    cond1 = np.where(fixable, np.inf, cond1)
    diag = np.real(np.diagonal(ginv, axis1=1, axis2=2))
    a = 1.0 / diag
    b = hs.conj().swapaxes(1, 2) @ ginv
    heff = (h @ b) * np.sqrt(np.abs(a))[:, None, :]
    return a, heff, cond1


def _nonselected_rows(k, sel):
    mask = np.ones((sel.shape[0], k), dtype=bool)
    np.put_along_axis(mask, sel, False, axis=1)
    return mask


def _rates_numpy(h, g, sel, m, s, exact):
    n_b, k, _ = h.shape
    n_l = sel.shape[1]
    a, heff, cond1 = batch_beamform(h, sel)
    bad = ~np.isfinite(cond1) | (cond1 > COND_CAP)
    a = np.where(a > 0, a, 1.0)  # flagged draws only; keeps the math finite

    g_sel = np.take_along_axis(g, sel, axis=1)
    ag = np.abs(g_sel) ** 2
    mask_non = _nonselected_rows(k, sel)
    hv = heff[mask_non].reshape(n_b, k - n_l, n_l) if k > n_l else None

    mf = float(m)
    if exact:
        alpha2 = a + 1.0 / s
        gp2 = a * ag / alpha2
        gp = np.sqrt(a / alpha2) * g_sel
        n0 = 1.0 + (ag / alpha2).sum(axis=1)
        rho2 = gp2.sum(axis=1)
        sg2 = np.sqrt(gp2).sum(axis=1) ** 2
        q = sg2 / rho2
        w = mf * rho2 - gp2[:, 0]
        num_b = (s * rho2 + n0) * (s * sg2 + n0)
        den_b = n0 * ((s / mf) * (1.0 + q) * w + n0)
        r_bob_pair = np.log2(num_b / den_b)

        num_s = (s * a + 1.0) ** 2
        first = s * a.copy()
        first[:, 0] *= (mf - 1.0) / mf
        tail = mf * mf * (rho2[:, None] - gp2 - gp2[:, :1]) + mf * (mf - 1.0) * gp2[:, :1]
        tail[:, 0] = mf * (mf - 1.0) * (rho2 - gp2[:, 0])
        den_s = (first + (s / mf) * (a / rho2[:, None]) * w[:, None] + 1.0) \
            + (s * s / (mf * mf)) * (a * a / rho2[:, None]) * tail
        r_eve_pair = np.log2(num_s / den_s).max(axis=1)

        if hv is not None:
            hn = (np.abs(hv) ** 2).sum(axis=2)
            sh2 = np.abs(hv.sum(axis=2)) ** 2
            q_l = sh2 / rho2[:, None]
            w_h = mf * hn - np.abs(hv[:, :, 0]) ** 2
            cross = mf * (hv * np.conj(gp)[:, None, :]).sum(axis=2) \
                - hv[:, :, 0] * np.conj(gp[:, 0])[:, None]
            num_n = (s * hn + 1.0) * (s * sh2 + 1.0)
            den_n = ((s / mf) * (w_h + q_l * w[:, None]) + 1.0) \
                + (s * s / (mf * mf)) * q_l * (w_h * w[:, None] - np.abs(cross) ** 2)
            r_eve_pair = np.maximum(r_eve_pair, np.log2(num_n / den_n).max(axis=1))
    else:
        sg2 = ag.sum(axis=1)
        n0a = 1.0 + (ag / a).sum(axis=1)
        r_bob_pair = np.log2(1.0 + s * sg2 / n0a) - 1.0
        rest = sg2[:, None] - ag
        bad |= (rest <= 0.0).any(axis=1)
        rest = np.where(rest > 0, rest, 1.0)
        r_eve_pair = np.log2(1.0 + ag / rest).max(axis=1)
        if hv is not None:
            hn = (np.abs(hv) ** 2).sum(axis=2)
            hg = hn * sg2[:, None]
            ip2 = np.abs((hv * np.conj(g_sel)[:, None, :]).sum(axis=2)) ** 2
            rem = hg - ip2
            bad |= (rem <= _PARALLEL_TOL * hg).any(axis=1)
            rem = np.where(rem > 0, rem, 1.0)
            r_eve_pair = np.maximum(r_eve_pair, np.log2(hg / rem).max(axis=1))

    r_bob = 0.5 * r_bob_pair
    r_eve = 0.5 * r_eve_pair
    rs = np.maximum(0.0, r_bob - r_eve)
    bad |= ~(np.isfinite(rs) & np.isfinite(r_bob) & np.isfinite(r_eve))
    return rs, r_bob, r_eve, bad


# ---------------------------------------------------------------------------
# numba path (per-trial loops, parallel over trials)
# ---------------------------------------------------------------------------

if HAVE_NUMBA:

    @njit(cache=True, parallel=True)
    def _rates_numba(h, g, sel, m, s, exact):  # pragma: no cover - exercised via batch_rates
        n_b, k, n = h.shape
        n_l = sel.shape[1]
        n_e = k - n_l
        mf = float(m)
        rs = np.empty(n_b)
        r_bob_out = np.empty(n_b)
        r_eve_out = np.empty(n_b)
        bad = np.zeros(n_b, dtype=np.bool_)

        for t in prange(n_b):
            # Gram matrix of the selected sub-channel
            gram = np.empty((n_l, n_l), dtype=np.complex128)
            for i in range(n_l):
                hi = sel[t, i]
                for j in range(i, n_l):
                    hj = sel[t, j]
                    acc = 0.0 + 0.0j
                    for c in range(n):
                        acc += h[t, hi, c] * np.conj(h[t, hj, c])
                    gram[i, j] = acc
                    if i != j:
                        gram[j, i] = np.conj(acc)

            # Cholesky gram = low low^H; failure marks a degenerate draw
            low = np.zeros((n_l, n_l), dtype=np.complex128)
            ok = True
            for j in range(n_l):
                ss = gram[j, j].real
                for p in range(j):
                    ss -= low[j, p].real ** 2 + low[j, p].imag ** 2
                if not ss > 0.0:
                    ok = False
                    break
                low[j, j] = np.sqrt(ss)
                for i in range(j + 1, n_l):
                    acc = gram[i, j]
                    for p in range(j):
                        acc -= low[i, p] * np.conj(low[j, p])
                    low[i, j] = acc / low[j, j]
            if not ok:
                bad[t] = True
                rs[t] = np.nan
                r_bob_out[t] = np.nan
                r_eve_out[t] = np.nan
                continue

            # inverse of the lower factor, then ginv = ainv^H ainv
            ainv = np.zeros((n_l, n_l), dtype=np.complex128)
            for j in range(n_l):
                ainv[j, j] = 1.0 / low[j, j]
                for i in range(j + 1, n_l):
                    acc = 0.0 + 0.0j
                    for p in range(j, i):
                        acc += low[i, p] * ainv[p, j]
                    ainv[i, j] = -acc / low[i, i]
            ginv = np.empty((n_l, n_l), dtype=np.complex128)
            for i in range(n_l):
                for j in range(i, n_l):
                    acc = 0.0 + 0.0j
                    for p in range(j, n_l):
                        acc += np.conj(ainv[p, i]) * ainv[p, j]
                    ginv[i, j] = acc
                    if i != j:
                        ginv[j, i] = np.conj(acc)

            # 1-norm condition estimate of the Gram matrix
            gmax = 0.0
            imax = 0.0
            for j in range(n_l):
                gcol = 0.0
                icol = 0.0
                for i in range(n_l):
                    gcol += abs(gram[i, j])
                    icol += abs(ginv[i, j])
                if gcol > gmax:
                    gmax = gcol
                if icol > imax:
                    imax = icol
            if not gmax * imax <= COND_CAP:
                bad[t] = True
                rs[t] = np.nan
                r_bob_out[t] = np.nan
                r_eve_out[t] = np.nan
                continue

            a = np.empty(n_l)
            for j in range(n_l):
                a[j] = 1.0 / ginv[j, j].real

            g_sel = np.empty(n_l, dtype=np.complex128)
            ag = np.empty(n_l)
            for j in range(n_l):
                g_sel[j] = g[t, sel[t, j]]
                ag[j] = g_sel[j].real ** 2 + g_sel[j].imag ** 2

            trial_bad = False
            if exact:
                alpha2 = np.empty(n_l)
                gp2 = np.empty(n_l)
                gp = np.empty(n_l, dtype=np.complex128)
                n0 = 1.0
                rho2 = 0.0
                sg = 0.0
                for j in range(n_l):
                    alpha2[j] = a[j] + 1.0 / s
                    gp2[j] = a[j] * ag[j] / alpha2[j]
                    gp[j] = np.sqrt(a[j] / alpha2[j]) * g_sel[j]
                    n0 += ag[j] / alpha2[j]
                    rho2 += gp2[j]
                    sg += np.sqrt(gp2[j])
                sg2 = sg * sg
                q = sg2 / rho2
                w = mf * rho2 - gp2[0]
                r_bob_pair = np.log2(
                    (s * rho2 + n0) * (s * sg2 + n0) / (n0 * ((s / mf) * (1.0 + q) * w + n0))
                )

                r_eve_pair = -np.inf
                for j in range(n_l):
                    num = (s * a[j] + 1.0) ** 2
                    if j == 0:
                        first = s * a[j] * (mf - 1.0) / mf
                        tail = mf * (mf - 1.0) * (rho2 - gp2[0])
                    else:
                        first = s * a[j]
                        tail = mf * mf * (rho2 - gp2[j] - gp2[0]) + mf * (mf - 1.0) * gp2[0]
                    den = (first + (s / mf) * (a[j] / rho2) * w + 1.0) \
                        + (s * s / (mf * mf)) * (a[j] * a[j] / rho2) * tail
                    r = np.log2(num / den)
                    if r > r_eve_pair:
                        r_eve_pair = r

                for e in range(n_e):
                    # walk the complement of the (ascending) selection
                    row = e
                    ptr = 0
                    while ptr < n_l and sel[t, ptr] <= row:
                        row += 1
                        ptr += 1
                    # effective gains of this relay: (h_row . Hsel^H) ginv, scaled
                    hv = np.empty(n_l, dtype=np.complex128)
                    cvec = np.empty(n_l, dtype=np.complex128)
                    for j in range(n_l):
                        acc = 0.0 + 0.0j
                        hj = sel[t, j]
                        for c in range(n):
                            acc += h[t, row, c] * np.conj(h[t, hj, c])
                        cvec[j] = acc
                    for j in range(n_l):
                        acc = 0.0 + 0.0j
                        for p in range(n_l):
                            acc += cvec[p] * ginv[p, j]
                        hv[j] = acc * np.sqrt(a[j])
                    hn = 0.0
                    sh = 0.0 + 0.0j
                    xc = 0.0 + 0.0j
                    for j in range(n_l):
                        hn += hv[j].real ** 2 + hv[j].imag ** 2
                        sh += hv[j]
                        xc += mf * hv[j] * np.conj(gp[j])
                    xc -= hv[0] * np.conj(gp[0])
                    sh2 = sh.real**2 + sh.imag**2
                    q_l = sh2 / rho2
                    w_h = mf * hn - (hv[0].real ** 2 + hv[0].imag ** 2)
                    x2 = xc.real**2 + xc.imag**2
                    num = (s * hn + 1.0) * (s * sh2 + 1.0)
                    den = ((s / mf) * (w_h + q_l * w) + 1.0) \
                        + (s * s / (mf * mf)) * q_l * (w_h * w - x2)
                    r = np.log2(num / den)
                    if r > r_eve_pair:
                        r_eve_pair = r
            else:
                sg2 = 0.0
                n0a = 1.0
                for j in range(n_l):
                    sg2 += ag[j]
                    n0a += ag[j] / a[j]
                r_bob_pair = np.log2(1.0 + s * sg2 / n0a) - 1.0

                r_eve_pair = -np.inf
                for j in range(n_l):
                    rest = sg2 - ag[j]
                    if rest <= 0.0:
                        trial_bad = True
                        break
                    r = np.log2(1.0 + ag[j] / rest)
                    if r > r_eve_pair:
                        r_eve_pair = r
                if not trial_bad:
                    for e in range(n_e):
                        row = e
                        ptr = 0
                        while ptr < n_l and sel[t, ptr] <= row:
                            row += 1
                            ptr += 1
                        hv = np.empty(n_l, dtype=np.complex128)
                        cvec = np.empty(n_l, dtype=np.complex128)
                        for j in range(n_l):
                            acc = 0.0 + 0.0j
                            hj = sel[t, j]
                            for c in range(n):
                                acc += h[t, row, c] * np.conj(h[t, hj, c])
                            cvec[j] = acc
                        for j in range(n_l):
                            acc = 0.0 + 0.0j
                            for p in range(n_l):
                                acc += cvec[p] * ginv[p, j]
                            hv[j] = acc * np.sqrt(a[j])
                        hn = 0.0
                        ip = 0.0 + 0.0j
                        for j in range(n_l):
                            hn += hv[j].real ** 2 + hv[j].imag ** 2
                            ip += hv[j] * np.conj(g_sel[j])
                        hg = hn * sg2
                        rem = hg - (ip.real**2 + ip.imag**2)
                        if rem <= _PARALLEL_TOL * hg:
                            trial_bad = True
                            break
                        r = np.log2(hg / rem)
                        if r > r_eve_pair:
                            r_eve_pair = r

            if trial_bad:
                bad[t] = True
                rs[t] = np.nan
                r_bob_out[t] = np.nan
                r_eve_out[t] = np.nan
                continue

            r_bob = 0.5 * r_bob_pair
            r_eve = 0.5 * r_eve_pair
            r_secrecy = r_bob - r_eve
            if r_secrecy < 0.0:
                r_secrecy = 0.0
            if not (np.isfinite(r_secrecy) and np.isfinite(r_bob) and np.isfinite(r_eve)):
                bad[t] = True
                rs[t] = np.nan
                r_bob_out[t] = np.nan
                r_eve_out[t] = np.nan
            else:
                rs[t] = r_secrecy
                r_bob_out[t] = r_bob
                r_eve_out[t] = r_eve

        return rs, r_bob_out, r_eve_out, bad

else:  # pragma: no cover

    def _rates_numba(h, g, sel, m, s, exact):
        raise RuntimeError("numba is not available")
