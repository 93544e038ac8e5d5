"""Membership-weighted target-density estimators and their divergence.

Discrete targets get a weighted empirical PMF with a small Laplace floor;
continuous targets a weighted Gaussian KDE whose bandwidth follows Scott's
rule with the Kish effective sample size n_eff = (sum w)^2 / sum w^2.

The divergence between two estimated subgroup distributions is the
Jensen-Shannon divergence, approximated from weighted samples. Each group's
KL term is an average under the membership-tilted distribution, i.e. the
weights are normalized by the group's soft subgroup mass S_a = sum m_i:

    KL_a ~= (1/S_a) * sum_{i in group a} m_i * log(p_a(y_i) / mix(y_i)),
    JS   ~= (KL_0 + KL_1) / 2,   mix = (p_0 + p_1) / 2.

Normalizing by the subgroup mass (not the group count) keeps the estimate a
pure divergence: it does not grow or shrink with subgroup size, so size
preferences enter the training objective only through the generality and
covariate terms. With full weights the two normalizations coincide.

Each evaluation also yields per-sample gradient coefficients
d(JS)/d(m_i) = (log-ratio_i - KL_a) / (2 S_a) under the stop-gradient
contract: densities are treated as constants between refits, so no gradient
flows into estimator weights, centers, or bandwidths.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Tuple, Union

import numpy as np

from .errors import DimensionMismatch, IndexOutOfRange, UnfittedEstimator, ZeroTotalWeight

PMF_FLOOR = 1e-9       # Laplace floor added to PMF entries, then renormalized
DENSITY_FLOOR = 1e-12  # floor applied to density values before taking logs
DEGENERATE_VAR = 1e-12 # weighted variance below this triggers the KDE fallback


@dataclass(frozen=True)
class WeightedEmpiricalPMF:
    """Weighted empirical PMF over labels 0..n_classes-1."""

    probs: np.ndarray
    total_weight: float

    def __post_init__(self):
        self.probs.setflags(write=False)

    @property
    def n_classes(self) -> int:
        return self.probs.shape[0]

    def density(self, y) -> np.ndarray:
        """Probability of each label in y (labels must be in-range ints)."""
        labels = np.asarray(np.round(y), dtype=np.int64)
        if labels.size and (labels.min() < 0 or labels.max() >= self.n_classes):
            raise IndexOutOfRange(
                f"labels outside 0..{self.n_classes - 1} passed to PMF"
            )
        return self.probs[labels]

    def to_json(self) -> dict:
        return {
            "kind": "pmf",
            "probs": self.probs.tolist(),
            "total_weight": self.total_weight,
        }

    def summary(self) -> dict:
        return self.to_json()


def fit_discrete(y, m, n_classes: int) -> WeightedEmpiricalPMF:
    """Fit a membership-weighted PMF with Laplace floor PMF_FLOOR.

    Raises ZeroTotalWeight when the weights sum to <= 0.
    """
    y = np.asarray(y)
    m = np.asarray(m, dtype=np.float64)
    if y.shape != m.shape:
        raise DimensionMismatch(f"y and m shapes differ: {y.shape} vs {m.shape}")
    total = float(m.sum())
    if total <= 0:
        raise ZeroTotalWeight(f"total membership weight {total} is not positive")
    labels = np.asarray(np.round(y), dtype=np.int64)
    if labels.min() < 0 or labels.max() >= n_classes:
        raise IndexOutOfRange(f"labels outside 0..{n_classes - 1}")
    counts = np.bincount(labels, weights=m, minlength=n_classes)
    probs = counts / total
    probs = probs + PMF_FLOOR
    probs = probs / probs.sum()
    return WeightedEmpiricalPMF(probs=probs, total_weight=total)


@dataclass(frozen=True)
class WeightedKDE:
    """Weighted Gaussian KDE over a 1-d sample.

    Bandwidth is Scott's rule on the Kish effective sample size:
    h = sigma_w * n_eff^(-1/5) with n_eff = (sum m)^2 / sum m^2 and sigma_w
    the (unbiased, aweights-convention) weighted standard deviation. If the
    weighted variance is degenerate the bandwidth falls back to
    1e-6 * (1 + |mean|) and the estimator is flagged.
    """

    centers: np.ndarray
    weights: np.ndarray  # normalized to sum 1
    bandwidth: float
    n_eff: float
    mean: float
    std: float
    total_weight: float
    degenerate: bool = False

    def __post_init__(self):
        self.centers.setflags(write=False)
        self.weights.setflags(write=False)

    def density(self, y) -> np.ndarray:
        """KDE density at each query point (vectorized, not floored)."""
        y = np.atleast_1d(np.asarray(y, dtype=np.float64))
        z = (y[:, None] - self.centers[None, :]) / self.bandwidth
        kern = np.exp(-0.5 * z**2) / (np.sqrt(2.0 * np.pi) * self.bandwidth)
        return kern @ self.weights

    def to_json(self) -> dict:
        return {
            "kind": "kde",
            "centers": self.centers.tolist(),
            "weights": self.weights.tolist(),
            "bandwidth": self.bandwidth,
            "n_eff": self.n_eff,
            "degenerate": self.degenerate,
        }

    def summary(self) -> dict:
        qs = weighted_quantiles(self.centers, self.weights, (0.1, 0.25, 0.5, 0.75, 0.9))
        return {
            "kind": "kde",
            "mean": self.mean,
            "std": self.std,
            "bandwidth": self.bandwidth,
            "n_eff": self.n_eff,
            "quantiles": {str(q): v for q, v in qs.items()},
            "degenerate": self.degenerate,
        }


def weighted_quantiles(values, weights, qs) -> dict:
    order = np.argsort(values)
    v = np.asarray(values)[order]
    cw = np.cumsum(np.asarray(weights)[order])
    cw = cw / cw[-1]
    return {q: float(v[np.searchsorted(cw, q)]) if v.size else float("nan") for q in qs}


def fit_kde(y, m) -> WeightedKDE:
    """Fit a membership-weighted Gaussian KDE.

    Raises ZeroTotalWeight when weights sum to <= 0; degenerate support
    (weighted variance < DEGENERATE_VAR) falls back to a tiny bandwidth and
    sets the ``degenerate`` flag instead of raising.
    """
    y = np.asarray(y, dtype=np.float64)
    m = np.asarray(m, dtype=np.float64)
    if y.shape != m.shape:
        raise DimensionMismatch(f"y and m shapes differ: {y.shape} vs {m.shape}")
    total = float(m.sum())
    if total <= 0:
        raise ZeroTotalWeight(f"total membership weight {total} is not positive")
    w = m / total
    n_eff = 1.0 / float(np.sum(w**2))
    mean = float(w @ y)
    # unbiased weighted variance (aweights convention)
    denom = 1.0 - float(np.sum(w**2))
    var_raw = float(w @ (y - mean) ** 2)
    var = var_raw / denom if denom > 0 else var_raw
    if var < DEGENERATE_VAR:
        bandwidth = 1e-6 * (1.0 + abs(mean))
        degenerate = True
        std = float(np.sqrt(max(var, 0.0)))
    else:
        std = float(np.sqrt(var))
        bandwidth = std * n_eff ** (-0.2)
        degenerate = False
    return WeightedKDE(
        centers=y.copy(),
        weights=w,
        bandwidth=float(bandwidth),
        n_eff=float(n_eff),
        mean=mean,
        std=std,
        total_weight=total,
        degenerate=degenerate,
    )


Estimator = Union[WeightedEmpiricalPMF, WeightedKDE]


MASS_FLOOR = 1e-8


@dataclass(frozen=True)
class JsResult:
    """Sample-approximated Jensen-Shannon divergence with gradient info.

    ``value`` is clamped at 0 (the sample approximation can dip negative);
    ``raw`` keeps the unclamped estimate for diagnostics. ``coeff0/coeff1``
    hold d(raw)/d(m_i) for each sample of the respective group, evaluated at
    the memberships passed to :func:`js_divergence`. ``lr0/lr1`` are the raw
    per-sample log-ratios log(p_a(y_i)/mix(y_i)); they depend only on the
    fitted densities, so callers can re-evaluate the divergence at updated
    memberships without refitting.
    """

    value: float
    raw: float
    coeff0: np.ndarray
    coeff1: np.ndarray
    lr0: np.ndarray
    lr1: np.ndarray


def _check_fitted(p0, p1):
    if p0 is None or p1 is None:
        raise UnfittedEstimator("both group estimators must be fitted")
    if isinstance(p0, WeightedEmpiricalPMF) != isinstance(p1, WeightedEmpiricalPMF):
        raise UnfittedEstimator(
            f"estimator kinds differ: {type(p0).__name__} vs {type(p1).__name__}"
        )


def js_divergence(
    p0: Estimator,
    p1: Estimator,
    y0, m0, y1, m1,
) -> JsResult:
    """Weighted-sample JS divergence between two fitted group estimators.

    y0/m0 are the target values and membership weights of group 0 rows (same
    for group 1). Density values are floored at DENSITY_FLOOR before logs.
    """
    _check_fitted(p0, p1)
    y0 = np.asarray(y0, dtype=np.float64)
    y1 = np.asarray(y1, dtype=np.float64)
    m0 = np.asarray(m0, dtype=np.float64)
    m1 = np.asarray(m1, dtype=np.float64)
    n0, n1 = y0.shape[0], y1.shape[0]
    if m0.shape != y0.shape or m1.shape != y1.shape:
        raise DimensionMismatch("membership vectors must match their group samples")

    def log_ratio(y, own, other):
        d_own = np.maximum(own.density(y), DENSITY_FLOOR)
        d_other = np.maximum(other.density(y), DENSITY_FLOOR)
        mix = 0.5 * (d_own + d_other)
        return np.log(d_own) - np.log(np.maximum(mix, DENSITY_FLOOR))

    lr0 = log_ratio(y0, p0, p1)
    lr1 = log_ratio(y1, p1, p0)
    s0 = max(float(np.sum(m0)), MASS_FLOOR)
    s1 = max(float(np.sum(m1)), MASS_FLOOR)
    kl0 = float(m0 @ lr0) / s0 if n0 else 0.0
    kl1 = float(m1 @ lr1) / s1 if n1 else 0.0
    raw = 0.5 * (kl0 + kl1)
    coeff0 = (lr0 - kl0) / (2.0 * s0)
    coeff1 = (lr1 - kl1) / (2.0 * s1)
    return JsResult(
        value=max(0.0, raw), raw=raw, coeff0=coeff0, coeff1=coeff1, lr0=lr0, lr1=lr1
    )
