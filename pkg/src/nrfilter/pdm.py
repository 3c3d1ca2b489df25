"""Probability density maps around a predicted token.

Every token in the chunk except the predicted one drops its per-class
probability into one of B equal-width bins over [0, 1]; the contribution
is scaled by a Gaussian distance decay and divided by the total token
count. The unweighted cumulative variant keeps raw probability sums per
bin, which is easier to read when inspecting single chunks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .core import Chunk, EntitySpan
from .errors import AnchorOutOfRange, NonPositiveDecayRate

DEFAULT_DECAY_RATE = 1.0
DEFAULT_BINS = 10


@dataclass(frozen=True)
class DecayConfig:
    """Gaussian decay rate and bin count for density maps."""

    decay_rate: float = DEFAULT_DECAY_RATE
    bins: int = DEFAULT_BINS

    def __post_init__(self):
        if not self.decay_rate > 0:
            raise NonPositiveDecayRate(f"decay rate must be > 0, got {self.decay_rate}")
        if self.bins < 1:
            raise ValueError(f"bin count must be >= 1, got {self.bins}")


@dataclass(frozen=True, eq=False)
class ProbabilityDensityMap:
    """A (bins, K) grid of decay-weighted probability mass."""

    values: np.ndarray
    config: DecayConfig
    anchor: int

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        values.flags.writeable = False
        object.__setattr__(self, "values", values)

    @property
    def total_mass(self) -> float:
        return float(self.values.sum())


def decay_weight(t: int, t_predicted: int, decay_rate: float) -> float:
    """exp(-d^2 / (2 R^2)) for d = |t - t_predicted|; 1 at distance 0."""
    if not decay_rate > 0:
        raise NonPositiveDecayRate(f"decay rate must be > 0, got {decay_rate}")
    d = abs(t - t_predicted)
    return math.exp(-(d * d) / (2.0 * decay_rate * decay_rate))


def _check_anchor(chunk: Chunk, t_predicted: int):
    if not 0 <= t_predicted < chunk.n_tokens:
        raise AnchorOutOfRange(
            f"anchor {t_predicted} outside chunk {chunk.id!r} of {chunk.n_tokens} tokens"
        )


def _bin_indices(probs: np.ndarray, bins: int) -> np.ndarray:
    # floor(p * B), with p == 1.0 clamped into the top bin so [0, 1] is covered.
    idx = np.floor(probs * bins).astype(np.int64)
    return np.minimum(idx, bins - 1)


def compute_pdm(
    chunk: Chunk,
    t_predicted: int,
    config: DecayConfig = DecayConfig(),
    exclude: Iterable[int] | None = None,
) -> ProbabilityDensityMap:
    """Decay-weighted density map around ``t_predicted``.

    Each contributing token t adds W_t * prob / numTokens to the bin of
    its class probability, where numTokens counts every token in the
    chunk (the predicted token included) and W_t is the Gaussian decay
    weight. ``exclude`` widens the excluded set beyond the predicted
    token itself, e.g. to all tokens of a multi-token predicted span.
    """
    _check_anchor(chunk, t_predicted)
    excluded = {t_predicted} if exclude is None else set(exclude) | {t_predicted}
    T = chunk.n_tokens
    K = chunk.probs.shape[1]
    grid = np.zeros((config.bins, K), dtype=np.float64)

    keep = np.array([t for t in range(T) if t not in excluded], dtype=np.int64)
    if keep.size:
        probs = chunk.probs[keep]
        d = np.abs(keep - t_predicted).astype(np.float64)
        weights = np.exp(-(d * d) / (2.0 * config.decay_rate * config.decay_rate))
        contrib = weights[:, None] * probs / T
        flat = _bin_indices(probs, config.bins) * K + np.arange(K)
        grid = np.bincount(
            flat.ravel(), weights=contrib.ravel(), minlength=config.bins * K
        ).reshape(config.bins, K)
    return ProbabilityDensityMap(grid, config, t_predicted)


def compute_pdm_for_span(
    chunk: Chunk, span: EntitySpan, config: DecayConfig = DecayConfig()
) -> ProbabilityDensityMap:
    """Density map for a predicted span: anchored at its opening token,
    with the whole span excluded from contributing.

    Excluding the span's own I tokens (not just the anchor) keeps the
    span's high-confidence mass from flooding the top bins and masking
    the neighborhood signal. This is the one place that choice lives.
    """
    return compute_pdm(chunk, span.anchor, config, exclude=span.positions)


def cumulative_bins(chunk: Chunk, t_predicted: int, bins: int = DEFAULT_BINS) -> np.ndarray:
    """Unweighted per-bin probability sums around ``t_predicted``.

    Same binning as compute_pdm but each token adds its raw probability:
    no decay weight, no division by the token count.
    """
    _check_anchor(chunk, t_predicted)
    K = chunk.probs.shape[1]
    grid = np.zeros((bins, K), dtype=np.float64)
    keep = np.array([t for t in range(chunk.n_tokens) if t != t_predicted], dtype=np.int64)
    if keep.size:
        probs = chunk.probs[keep]
        flat = _bin_indices(probs, bins) * K + np.arange(K)
        grid = np.bincount(
            flat.ravel(), weights=probs.ravel(), minlength=bins * K
        ).reshape(bins, K)
    return grid


def bin_edges(bins: int) -> list[tuple[float, float]]:
    """(lo, hi) edges of each probability bin."""
    return [(i / bins, (i + 1) / bins) for i in range(bins)]


def grid_to_obj(pdm: ProbabilityDensityMap) -> dict:
    """JSON-friendly dump of the full grid, for the debug CLI flag."""
    return {
        "anchor": pdm.anchor,
        "bins": pdm.config.bins,
        "decay_rate": pdm.config.decay_rate,
        "values": [[float(v) for v in row] for row in pdm.values],
    }
