"""Closed-form achievable rates and the secrecy-rate composition.

Exact rates are covariance-determinant ratios for the jointly Gaussian
observation pairs at the destination and at each relay, conditioned on
the traced symbol pair.  The symbol-ratio expectation that appears in
the conditional covariances is fixed at 1 (its true Gaussian value
diverges; see the bounded-symbol validation mode in
:mod:`relaysec.protocol`).  Asymptotic rates are the high-SNR limits,
expressed in raw second-hop gains.

All pair rates are in bits per pair; the secrecy composition converts to
bits per channel use with the prefactor 1/2 (the exact prefactors tend
to 1/2 for large numbers of pairs).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .beamforming import BeamformSet, NotANonSelectedRelay
from .channel import ChannelRealization, SystemConfig
from .protocol import EffectiveLink

_PARALLEL_TOL = 1e-12


class LoneRelayDegenerate(Exception):
    """All other selected gains vanish; the interference ratio is unbounded."""


class ParallelVectors(Exception):
    """Leakage and second-hop vectors are numerically parallel (measure zero)."""


@dataclass
class RateBreakdown:
    """Per-channel-use rates of one realization, plus the secrecy rate."""

    r_bob_exact: float        # destination, covariance-ratio form
    r_bob_lb: float           # destination lower bound (embeds its -1/2)
    r_sel: np.ndarray         # one per selected relay
    r_nonsel: np.ndarray      # one per non-selected relay
    r_eve_max: float          # max over all k relays
    r_secrecy: float          # max(0, r_bob - r_eve_max) in the active mode
    mode: str                 # "exact" or "asymptotic"


def _symbol_weights_sum(link: EffectiveLink, m: int, pair_position: int) -> float:
    """sum_j w_j |g'_j|^2 with w = m-1 on the pair owner and m elsewhere."""
    gp2 = np.abs(link.gprime) ** 2
    return float(m * np.sum(gp2) - gp2[pair_position])


def bob_pair_rate_exact(link: EffectiveLink, cfg: SystemConfig, pair_position: int = 0) -> float:
    """Destination pair rate from the covariance-determinant ratio.

    Numerator: product of the unconditional variances of the two
    combined observations.  Denominator: expected conditional covariance
    determinant given the traced pair, with the symbol-ratio expectation
    set to 1.
    """
    p, s2 = cfg.power, cfg.sigma2
    m = cfg.m
    rho2 = link.rho**2
    sg2 = link.sum_abs_gprime**2
    n0 = link.n0
    q = sg2 / rho2
    w = _symbol_weights_sum(link, m, pair_position)
    num = (2 * m * p * rho2 + s2 * n0) * (2 * m * p * sg2 + s2 * n0)
    den = s2 * n0 * (2 * p * (1 + q) * w + s2 * n0)
    return float(np.log2(num / den))


def bob_pair_rate_lb(link: EffectiveLink, cfg: SystemConfig, mode: str = "exact") -> float:
    """Destination pair-rate lower bound (already embeds its -1 bit).

    In asymptotic mode the effective gains are replaced by the raw
    second-hop gains and the noise inflation uses the effective
    first-hop gains directly.
    """
    if mode == "exact":
        gain = link.rho**2
        n0 = link.n0
    elif mode == "asymptotic":
        g2 = np.abs(link.g_sel) ** 2
        gain = float(np.sum(g2))
        n0 = float(1.0 + np.sum(g2 / np.abs(link.h_diag) ** 2))
    else:
        raise ValueError(f"unknown mode {mode!r}")
    snr_term = 2 * cfg.m * cfg.power * gain / (cfg.sigma2 * n0)
    return float(np.log2(1.0 + snr_term) - 1.0)


def selected_pair_rate_exact(
    position: int, link: EffectiveLink, cfg: SystemConfig, pair_position: int = 0
) -> float:
    """Pair rate at a selected relay from its covariance-determinant ratio.

    The relay that owns the traced pair sees two of the 2m symbols
    pinned by the conditioning, which removes one symbol's worth of
    residual interference from its first-use observation; the other
    selected relays keep all 2m of their own symbols unresolved.
    """
    p, s2, m = cfg.power, cfg.sigma2, cfg.m
    a = float(np.abs(link.h_diag[position]) ** 2)
    gp2 = np.abs(link.gprime) ** 2
    rho2 = float(np.sum(gp2))
    w = _symbol_weights_sum(link, m, pair_position)
    num = (2 * m * p * a + s2) ** 2
    if position == pair_position:
        first = 2 * (m - 1) * p * a
        tail = m * (m - 1) * (rho2 - gp2[pair_position])
    else:
        first = 2 * m * p * a
        tail = m * m * (rho2 - gp2[position] - gp2[pair_position]) + m * (m - 1) * gp2[pair_position]
    den = s2 * (first + 2 * p * (a / rho2) * w + s2) + 4 * p * p * (a * a / rho2) * tail
    return float(np.log2(num / den))


def selected_pair_rate_asym(position: int, g_selected: np.ndarray) -> float:
    """High-SNR pair rate at a selected relay: its own gain over the rest."""
    g2 = np.abs(np.asarray(g_selected)) ** 2
    rest = float(np.sum(g2) - g2[position])
    if rest <= 0.0:
        raise LoneRelayDegenerate("all other selected gains vanish")
    return float(np.log2(1.0 + g2[position] / rest))


def nonselected_pair_rate_exact(
    relay: int,
    bs: BeamformSet,
    link: EffectiveLink,
    cfg: SystemConfig,
    pair_position: int = 0,
) -> float:
    """Pair rate at a non-selected relay from its covariance ratio.

    The relay observes the coherent sum of all beams in both channel
    uses; the determinant couples its leakage vector with the effective
    second-hop gains through a Cauchy-Schwarz-type remainder.
    """
    if relay in bs.selected:
        raise NotANonSelectedRelay(f"relay {relay} is selected")
    p, s2, m = cfg.power, cfg.sigma2, cfg.m
    hv = bs.heff[relay]
    gp = link.gprime
    rho2 = link.rho**2
    hn = float(np.sum(np.abs(hv) ** 2))
    sh = complex(np.sum(hv))
    q_l = abs(sh) ** 2 / rho2
    w_h = float(m * hn - np.abs(hv[pair_position]) ** 2)
    w_g = _symbol_weights_sum(link, m, pair_position)
    cross = complex(m * np.sum(hv * np.conj(gp)) - hv[pair_position] * np.conj(gp[pair_position]))
    num = (2 * m * p * hn + s2) * (2 * m * p * abs(sh) ** 2 + s2)
    den = s2 * (2 * p * (w_h + q_l * w_g) + s2) + 4 * p * p * q_l * (w_h * w_g - abs(cross) ** 2)
    return float(np.log2(num / den))


def nonselected_pair_rate_asym(h_row: np.ndarray, g_selected: np.ndarray) -> float:
    """High-SNR pair rate at a non-selected relay (power-flat ratio form)."""
    h_row = np.asarray(h_row, dtype=np.complex128)
    g_selected = np.asarray(g_selected, dtype=np.complex128)
    hg = float(np.sum(np.abs(h_row) ** 2) * np.sum(np.abs(g_selected) ** 2))
    ip2 = abs(np.sum(h_row * np.conj(g_selected))) ** 2
    if hg - ip2 <= _PARALLEL_TOL * hg:
        raise ParallelVectors("leakage vector numerically parallel to second hop")
    return float(np.log2(hg / (hg - ip2)))


def secrecy_rate(
    link: EffectiveLink,
    bs: BeamformSet,
    ch: ChannelRealization,
    cfg: SystemConfig,
    mode: str = "exact",
    pair_position: int = 0,
) -> RateBreakdown:
    """Per-channel-use rate breakdown and secrecy rate of one realization.

    Every pair rate is halved to a per-channel-use rate; the secrecy
    rate is the destination rate minus the best relay rate, clamped at
    zero.  In exact mode the destination uses the covariance-ratio form,
    in asymptotic mode its lower bound.
    """
    if mode not in ("exact", "asymptotic"):
        raise ValueError(f"unknown mode {mode!r}")
    n_sel = bs.selected.size
    non = ch.nonselected

    r_bob_exact = 0.5 * bob_pair_rate_exact(link, cfg, pair_position)
    r_bob_lb = 0.5 * bob_pair_rate_lb(link, cfg, mode="asymptotic" if mode == "asymptotic" else "exact")

    if mode == "exact":
        r_sel = np.array(
            [0.5 * selected_pair_rate_exact(j, link, cfg, pair_position) for j in range(n_sel)]
        )
        r_nonsel = np.array(
            [0.5 * nonselected_pair_rate_exact(r, bs, link, cfg, pair_position) for r in non]
        )
        r_bob = r_bob_exact
    else:
        r_sel = np.array([0.5 * selected_pair_rate_asym(j, link.g_sel) for j in range(n_sel)])
        r_nonsel = np.array(
            [0.5 * nonselected_pair_rate_asym(bs.heff[r], link.g_sel) for r in non]
        )
        r_bob = r_bob_lb

    r_eve_max = float(max(r_sel.max(), r_nonsel.max())) if r_nonsel.size else float(r_sel.max())
    return RateBreakdown(
        r_bob_exact=r_bob_exact,
        r_bob_lb=r_bob_lb,
        r_sel=r_sel,
        r_nonsel=r_nonsel,
        r_eve_max=r_eve_max,
        r_secrecy=max(0.0, r_bob - r_eve_max),
        mode=mode,
    )
