"""Secrecy-rate and outage simulator for untrusted amplify-and-forward
relay networks using zero-forcing beamforming and interference-dissolution
precoding."""

from .beamforming import BeamformSet, NotANonSelectedRelay, compute_beamformers, nonselected_effective_vector
from .channel import ChannelRealization, SystemConfig, sample_channel, select_relays, substream
from .kernels import active_backend, batch_rates, set_workers
from .numerics import (
    DimensionMismatch,
    SingularChannel,
    conj_transpose,
    hermitian_det2,
    inner_product,
    norm,
    norm_sq,
    right_pseudo_inverse,
)
from .outage import (
    DiversityEstimate,
    InsufficientData,
    OutageCurve,
    RateCurve,
    beta_ratio_check,
    diversity_slope,
    estimate_mean_rates,
    estimate_outage,
    outage_upper_bound,
    pout1_check,
    pout2_check,
)
from .protocol import (
    DegenerateSymbol,
    DissolutionFactor,
    EffectiveLink,
    SignalTrace,
    SymbolBlock,
    dissolution_factor,
    effective_link,
    sample_symbols,
    simulate_signals,
)
from .rates import (
    LoneRelayDegenerate,
    ParallelVectors,
    RateBreakdown,
    bob_pair_rate_exact,
    bob_pair_rate_lb,
    nonselected_pair_rate_asym,
    nonselected_pair_rate_exact,
    secrecy_rate,
    selected_pair_rate_asym,
    selected_pair_rate_exact,
)

__version__ = "0.1.0"
