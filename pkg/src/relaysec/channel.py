"""Rayleigh-fading channel sampling and random relay selection.

Channel gains are i.i.d. circularly-symmetric complex Gaussian with unit
variance, so each |gain|^2 is Exp(1) and each magnitude is Rayleigh with
scale 1/sqrt(2).  Relay selection is a uniform random subset, fixed per
coherence block and stored in ascending order for reproducibility.

Randomness comes from counter-based Philox streams keyed by
``(seed, *key)`` through :func:`substream`, so Monte Carlo trials are
reproducible regardless of evaluation order or worker count.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class SystemConfig:
    """Network dimensions, power budget and experiment thresholds.

    ``snr`` is the average SNR a relay can deliver, ``2mP/sigma2`` in
    linear scale; the per-symbol transmit power ``P`` is derived from it.
    """

    n: int                    # transmit antennas
    k: int                    # relays (each treated as a potential eavesdropper)
    l: int                    # selected relays, 2 <= l <= min(n, k)
    m: int = 10               # symbol pairs per selected relay
    sigma2: float = 1.0       # noise variance (linear power)
    snr: float = 100.0        # 2mP/sigma2, linear
    gamma: float = 1.0        # secrecy-rate threshold, bits/channel use
    epsilon: float = 0.05     # diversity-bound exponent parameter
    seed: int = 0             # 64-bit stream seed

    def __post_init__(self):
        if self.n < 2:
            raise ValueError("n must be >= 2")
        if self.k < 2:
            raise ValueError("k must be >= 2")
        if not 2 <= self.l <= min(self.n, self.k):
            raise ValueError("l must satisfy 2 <= l <= min(n, k)")
        if self.m < 1:
            raise ValueError("m must be >= 1")
        if not self.sigma2 > 0:
            raise ValueError("sigma2 must be > 0")
        if not self.snr > 0:
            raise ValueError("snr must be > 0")
        if self.gamma < 0:
            raise ValueError("gamma must be >= 0")
        if not 0 < self.epsilon < 1:
            raise ValueError("epsilon must be in (0, 1)")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must fit in 64 bits")

    @property
    def power(self) -> float:
        """Per-symbol transmit power P = snr * sigma2 / (2m)."""
        return self.snr * self.sigma2 / (2 * self.m)


@dataclass
class ChannelRealization:
    """One coherence block: first-hop matrix, second-hop vector, selection."""

    h: np.ndarray          # k x n first-hop gains
    g: np.ndarray          # k second-hop gains
    selected: np.ndarray   # l distinct relay indices, ascending

    def __post_init__(self):
        self.h = np.asarray(self.h, dtype=np.complex128)
        self.g = np.asarray(self.g, dtype=np.complex128)
        self.selected = np.asarray(self.selected, dtype=np.int64)
        k = self.h.shape[0]
        if self.g.shape != (k,):
            raise ValueError("g length must match h rows")
        if len(np.unique(self.selected)) != self.selected.size:
            raise ValueError("selected indices must be distinct")
        if self.selected.size and (self.selected.min() < 0 or self.selected.max() >= k):
            raise ValueError("selected indices out of range")
        if not (np.all(np.isfinite(self.h)) and np.all(np.isfinite(self.g))):
            raise ValueError("channel gains must be finite")

    @property
    def nonselected(self) -> np.ndarray:
        """The k - l relay indices outside the selection, ascending."""
        mask = np.ones(self.h.shape[0], dtype=bool)
        mask[self.selected] = False
        return np.nonzero(mask)[0]


# Stream tags keep the substream key spaces of independent consumers apart.
TAG_OUTAGE = 1
TAG_RATE = 2
TAG_DIST = 3
TAG_VALIDATE = 4
TAG_TEST = 9


def substream(seed: int, *key: int) -> np.random.Generator:
    """Counter-based generator keyed by ``(seed, *key)``.

    Streams for distinct keys are independent and do not depend on the
    order in which they are created, which keeps parallel Monte Carlo
    trials bit-stable.
    """
    return np.random.Generator(np.random.Philox(seed=np.random.SeedSequence((seed, *key))))


def crandn(rng: np.random.Generator, shape) -> np.ndarray:
    """CN(0, 1) draws: unit-variance circularly-symmetric complex Gaussian."""
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)


def select_relays(config: SystemConfig, rng: np.random.Generator) -> np.ndarray:
    """Uniform random l-subset of the k relays, ascending order."""
    return np.sort(rng.permutation(config.k)[: config.l])


def sample_channel(config: SystemConfig, rng: np.random.Generator) -> ChannelRealization:
    """Draw one coherence block (first hop, second hop, selection)."""
    h = crandn(rng, (config.k, config.n))
    g = crandn(rng, config.k)
    selected = select_relays(config, rng)
    return ChannelRealization(h, g, selected)
