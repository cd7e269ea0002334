"""Zero-forcing beamforming over the selected sub-channel.

The beamformers are the columns of the right pseudo-inverse of the
selected rows of the channel matrix, normalised to unit norm before
transmission.  Effective scalar gains are computed for every relay
(selected rows collapse to a positive diagonal, non-selected rows keep
leakage from all beams).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import ChannelRealization
from .numerics import right_pseudo_inverse


class NotANonSelectedRelay(Exception):
    """Relay index is selected (or out of range); no leakage vector exists."""


@dataclass
class BeamformSet:
    """Beamformers plus the effective gains they induce at every relay.

    ``heff[r, j]`` is the scalar relay ``r`` sees when beam ``j`` carries a
    unit symbol, ``h_r . b_j / ||b_j||``.  Rows are indexed by global relay
    index, columns by selection-order position; for selected relays the
    off-diagonal entries are nulled by construction.
    """

    b: np.ndarray          # n x l unnormalised beamformer columns
    b_norms: np.ndarray    # l column norms
    heff: np.ndarray       # k x l effective gains
    selected: np.ndarray   # selection order defining the column order


def compute_beamformers(ch: ChannelRealization) -> BeamformSet:
    """ZF beamformers for the selected sub-channel plus all effective gains."""
    h_sel = ch.h[ch.selected]
    b = right_pseudo_inverse(h_sel)
    b_norms = np.linalg.norm(b, axis=0)
    heff = (ch.h @ b) / b_norms[None, :]
    return BeamformSet(b=b, b_norms=b_norms, heff=heff, selected=ch.selected)


def nonselected_effective_vector(bs: BeamformSet, relay: int) -> np.ndarray:
    """Leakage gains seen by a non-selected relay, one entry per beam."""
    if not 0 <= relay < bs.heff.shape[0]:
        raise NotANonSelectedRelay(f"relay index {relay} out of range")
    if relay in bs.selected:
        raise NotANonSelectedRelay(f"relay {relay} is selected")
    return bs.heff[relay].copy()
