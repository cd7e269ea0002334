"""Two-hop effective link, dissolution precoding, and signal traces.

This is the validation plane of the simulator: it builds the scalar
quantities the rate formulas consume (normalisation factors, effective
second-hop gains, noise inflation), solves for the dissolution factor
that folds all non-pair symbols into the traced pair's coordinates, and
can synthesise full noisy observations for all four channel-use types.
The Monte Carlo hot path never calls into here.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .beamforming import BeamformSet
from .channel import ChannelRealization, SystemConfig, crandn

# Validation-only floor for the pair-denominator symbol magnitude,
# relative to sqrt(P).  Gaussian symbols make moments of the dissolution
# factor diverge; truncating the denominator keeps sample moments finite.
BOUNDED_SYMBOL_FLOOR = 0.1

_DEGENERATE_FLOOR = 1e-12


class DegenerateSymbol(Exception):
    """Pair-denominator symbol magnitude below floor; caller redraws."""


@dataclass
class EffectiveLink:
    """Everything the rate formulas consume, for one realization.

    ``alpha`` are the relay normalisation factors, ``gprime`` the
    effective relay-to-destination gains, ``rho`` the broadcast
    normalisation, ``n0`` the destination noise inflation (>= 1).
    ``h_diag`` and ``g_sel`` keep the raw per-relay quantities so the
    asymptotic rate forms can be evaluated from the same object.
    """

    alpha: np.ndarray            # l relay normalisation factors, > 0
    gprime: np.ndarray           # l effective second-hop gains
    rho: float                   # sqrt(sum |g'|^2), > 0
    n0: float                    # 1 + sum |g_l|^2 / alpha_l^2
    sum_abs_gprime: float        # sum |g'_l|
    h_diag: np.ndarray           # l effective first-hop gains h'_{l,l}
    g_sel: np.ndarray            # l raw second-hop gains of the selection

    def __post_init__(self):
        if not np.all(self.alpha > 0):
            raise ValueError("alpha entries must be positive")
        if not self.rho > 0:
            raise ValueError("rho must be positive")
        if self.n0 < 1:
            raise ValueError("n0 must be >= 1")


@dataclass
class SymbolBlock:
    """Gaussian source symbols, one row of 2m per selected relay."""

    x: np.ndarray      # l x 2m complex symbols
    power: float       # E|x|^2 per symbol


@dataclass
class DissolutionFactor:
    """Scalar folding all non-pair signals into the traced pair."""

    beta: complex
    pair: tuple[int, int]    # (selected position, pair index), 0-based


@dataclass
class SignalTrace:
    """Noisy observations for the four channel-use types of one pair."""

    z1: np.ndarray     # k first-use relay observations (global relay index)
    y1: complex        # destination observation after first forwarding
    z2: np.ndarray     # k third-use relay observations
    y2: complex        # destination observation after coherent combining,
                       # rescaled by rho / sum|g'|


def effective_link(bs: BeamformSet, ch: ChannelRealization, cfg: SystemConfig) -> EffectiveLink:
    """Effective two-hop quantities for the selected relays."""
    n_sel = bs.selected.size
    h_diag = bs.heff[bs.selected, np.arange(n_sel)]
    g_sel = ch.g[bs.selected]
    alpha = np.sqrt(np.abs(h_diag) ** 2 + cfg.sigma2 / (2 * cfg.m * cfg.power))
    gprime = h_diag * g_sel / alpha
    rho = float(np.sqrt(np.sum(np.abs(gprime) ** 2)))
    n0 = float(1.0 + np.sum(np.abs(g_sel) ** 2 / alpha**2))
    return EffectiveLink(
        alpha=alpha,
        gprime=gprime,
        rho=rho,
        n0=n0,
        sum_abs_gprime=float(np.sum(np.abs(gprime))),
        h_diag=h_diag,
        g_sel=g_sel,
    )


def sample_symbols(
    cfg: SystemConfig,
    rng: np.random.Generator,
    bounded_pair: tuple[int, int] | None = None,
) -> SymbolBlock:
    """Draw an l x 2m block of CN(0, P) symbols.

    With ``bounded_pair`` set, the denominator symbol of that pair is
    rejection-sampled to magnitude >= 0.1 sqrt(P) so that moments
    involving the dissolution factor stay finite (validation mode only;
    rate formulas never use this).
    """
    p = cfg.power
    x = crandn(rng, (cfg.l, 2 * cfg.m)) * np.sqrt(p)
    if bounded_pair is not None:
        l0, i0 = bounded_pair
        floor = BOUNDED_SYMBOL_FLOOR * np.sqrt(p)
        while abs(x[l0, 2 * i0 + 1]) < floor:
            x[l0, 2 * i0 + 1] = crandn(rng, ()) * np.sqrt(p)
    return SymbolBlock(x=x, power=p)


def dissolution_factor(
    link: EffectiveLink, sym: SymbolBlock, pair: tuple[int, int]
) -> DissolutionFactor:
    """Solve for the factor that absorbs every non-pair signal.

    For pair (l0, i0) the factor beta satisfies

        g'_{l0} x_{l0,2i0} + beta g'_{l0} x_{l0,2i0+1} = sum_l g'_l sum_i x_{l,i}

    exactly, so the aggregate first-use observation lives in the traced
    pair's coordinates.
    """
    l0, i0 = pair
    x_a = sym.x[l0, 2 * i0]
    x_b = sym.x[l0, 2 * i0 + 1]
    if abs(x_b) < _DEGENERATE_FLOOR * np.sqrt(sym.power):
        raise DegenerateSymbol("pair denominator symbol below magnitude floor")
    total = np.sum(link.gprime * np.sum(sym.x, axis=1))
    beta = (total - link.gprime[l0] * x_a) / (link.gprime[l0] * x_b)
    return DissolutionFactor(beta=complex(beta), pair=(l0, i0))


def simulate_signals(
    bs: BeamformSet,
    link: EffectiveLink,
    ch: ChannelRealization,
    sym: SymbolBlock,
    diss: DissolutionFactor,
    cfg: SystemConfig,
    rng: np.random.Generator,
    include_noise: bool = True,
) -> SignalTrace:
    """Full noisy trace of one precoded pair through the network.

    First use: per-stream sums beamformed to the selected relays (with
    leakage at non-selected ones).  Second use: amplify-and-forward to
    the destination.  Third use: the dissolved pair combination broadcast
    on all beams.  Fourth use: phase-aligned forwarding and coherent
    combining at the destination.
    """
    k = ch.h.shape[0]
    sel = bs.selected
    non = ch.nonselected
    l0, i0 = diss.pair
    sums = np.sum(sym.x, axis=1)
    sigma = np.sqrt(cfg.sigma2)

    def _noise(shape=()):
        if not include_noise:
            return np.zeros(shape, dtype=np.complex128) if shape else 0j
        return sigma * crandn(rng, shape)

    # first channel use at the relays
    n1 = _noise(k)
    z1 = np.empty(k, dtype=np.complex128)
    z1[sel] = link.h_diag * sums + n1[sel]
    if non.size:
        z1[non] = bs.heff[non] @ sums + n1[non]

    # second channel use: relays normalise and forward, destination adds noise
    y1 = np.sum(link.gprime * sums) + np.sum(ch.g[sel] / link.alpha * n1[sel]) + _noise()

    # third channel use: dissolved pair combination broadcast on all beams
    x_a = sym.x[l0, 2 * i0]
    x_b = sym.x[l0, 2 * i0 + 1]
    pair_sig = link.gprime[l0] * x_b - diss.beta * link.gprime[l0] * x_a
    bcast = pair_sig / link.rho
    n2 = _noise(k)
    z2 = np.empty(k, dtype=np.complex128)
    z2[sel] = link.h_diag * bcast + n2[sel]
    if non.size:
        z2[non] = np.sum(bs.heff[non], axis=1) * bcast + n2[non]

    # fourth channel use: phase-aligned forwarding, coherent combining,
    # then rescaling so the pair signal appears with unit coefficient
    precode = np.conj(link.gprime) / (link.alpha * np.abs(link.gprime))
    y2_raw = np.sum(ch.g[sel] * precode * z2[sel]) + _noise()
    y2 = link.rho / link.sum_abs_gprime * y2_raw

    return SignalTrace(z1=z1, y1=complex(y1), z2=z2, y2=complex(y2))
