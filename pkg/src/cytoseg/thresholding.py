"""
Otsu thresholding and its prior-weighted variant.

Bins are stored 0..255. A threshold ``T`` puts pixels ``<= T`` in the dark
class and ``> T`` in the bright class. The reweighting pivot ``ell`` counts
bins from one: ``ell`` is the number of leading bins whose cumulative
probability stays strictly below the prior, so stored bins ``0 .. ell - 2``
(those with one-based index below ``ell``) are boosted.
"""

from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError, InvalidParameterError, NoValidThresholdError

N_BINS = 256
_LEVELS = np.arange(N_BINS, dtype=np.float64)


@dataclass(frozen=True)
class Histogram:
    counts: np.ndarray

    def __post_init__(self):
        counts = np.asarray(self.counts)
        if counts.shape != (N_BINS,):
            raise InvalidInputError(f"histogram needs {N_BINS} bins, got shape {counts.shape}")
        if np.any(counts < 0):
            raise InvalidInputError("histogram counts must be non-negative")
        object.__setattr__(self, "counts", counts.astype(np.int64))

    @classmethod
    def from_image(cls, img, mask=None):
        values = np.asarray(img, dtype=np.uint8)
        if mask is not None:
            values = values[np.asarray(mask, dtype=bool)]
        return cls(np.bincount(values.ravel(), minlength=N_BINS))

    @classmethod
    def from_text(cls, text):
        """Parse the 256-line integer serialization."""
        return cls(np.array([int(line) for line in text.split()], dtype=np.int64))

    def to_text(self):
        return "\n".join(str(int(c)) for c in self.counts) + "\n"

    @property
    def total(self):
        return int(self.counts.sum())

    @property
    def p(self):
        total = self.total
        if total == 0:
            raise NoValidThresholdError("histogram is empty")
        return self.counts / total


@dataclass(frozen=True)
class ThresholdParams:
    prior_alpha: float = 0.05

    def __post_init__(self):
        if not 0 < self.prior_alpha < 1:
            raise InvalidParameterError(f"prior_alpha must lie in (0, 1), got {self.prior_alpha}")


@dataclass(frozen=True)
class ThresholdResult:
    threshold: int
    within_class_variance: float
    ell: int | None = None


def _probabilities(hist):
    return hist.p if isinstance(hist, Histogram) else np.asarray(hist, dtype=np.float64)


def within_class_variance(hist, t):
    """
    ``w1 * var1 + w2 * var2`` for the cut after bin ``t``.

    An empty class contributes zero. ``hist`` may be a Histogram or a raw
    probability vector.
    """
    if not 0 <= t < N_BINS - 1:
        raise InvalidParameterError(f"cut point must lie in [0, {N_BINS - 2}], got {t}")
    p = _probabilities(hist)
    total = 0.0
    for cls in (slice(0, t + 1), slice(t + 1, N_BINS)):
        w = p[cls].sum()
        if w > 0:
            mu = (_LEVELS[cls] * p[cls]).sum() / w
            total += ((_LEVELS[cls] - mu) ** 2 * p[cls]).sum()
    return float(total)


def _variance_curve(p):
    """Within-class variance for every cut 0..254 (centred two-pass form)."""
    cuts = np.arange(N_BINS - 1)
    dark = _LEVELS[None, :] <= cuts[:, None]
    weights = np.where(dark, p, 0.0), np.where(dark, 0.0, p)
    curve = np.zeros(len(cuts))
    for wp in weights:
        w = wp.sum(axis=1)
        mu = np.divide((wp * _LEVELS).sum(axis=1), w, out=np.zeros_like(w), where=w > 0)
        curve += (wp * (_LEVELS[None, :] - mu[:, None]) ** 2).sum(axis=1)
    return curve


def _best_cut(weights):
    weights = np.asarray(weights, dtype=np.float64)
    if np.count_nonzero(weights) < 2:
        raise NoValidThresholdError("need at least two occupied bins to threshold")
    p = weights / weights.sum()
    curve = _variance_curve(p)
    t = int(np.argmin(curve))
    return t, float(curve[t])


def otsu_threshold(hist):
    """Classic Otsu: the smallest cut minimizing within-class variance."""
    t, var = _best_cut(_probabilities(hist))
    return ThresholdResult(t, var)


def compute_ell(hist, prior_alpha):
    """Largest ``ell`` such that the first ``ell`` bins hold probability below ``prior_alpha``."""
    if not 0 < prior_alpha < 1:
        raise InvalidParameterError(f"prior_alpha must lie in (0, 1), got {prior_alpha}")
    cum = np.cumsum(_probabilities(hist))
    return int(np.count_nonzero(cum < prior_alpha))


def reweight(hist, prior_alpha):
    """
    Prior-weighted, unnormalized distribution and its pivot.

    Bins with one-based index below ``ell`` are scaled by ``1 - prior_alpha``,
    the rest (including bin ``ell`` itself) by ``prior_alpha``.
    """
    p = _probabilities(hist)
    ell = compute_ell(p, prior_alpha)
    boosted = np.arange(N_BINS) + 1 < ell
    return np.where(boosted, p * (1 - prior_alpha), p * prior_alpha), ell


def reweighted_probabilities(hist, prior_alpha):
    """The renormalized distribution ``p_new`` that modified Otsu thresholds."""
    p_prime, _ = reweight(hist, prior_alpha)
    s = p_prime.sum()
    if s <= 0:
        raise NoValidThresholdError("reweighted histogram is empty")
    return p_prime / s


def modified_otsu(hist, params=ThresholdParams()):
    """
    Otsu threshold on the prior-weighted histogram.

    When the dark class is rare, its leading bins are boosted by
    ``1 - alpha`` relative to the ``alpha`` weight of the remainder, which
    pulls the cut toward the dark mode instead of splitting the dominant
    bright class. With ``alpha = 0.5`` this reduces exactly to ``otsu_threshold``.
    """
    if not isinstance(params, ThresholdParams):
        params = ThresholdParams(params)
    p_prime, ell = reweight(hist, params.prior_alpha)
    if p_prime.sum() <= 0:
        raise NoValidThresholdError("reweighted histogram is empty")
    t, var = _best_cut(p_prime)
    return ThresholdResult(t, var, ell)
