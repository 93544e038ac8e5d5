"""Soft and hard conjunctive box rules.

A rule keeps, per feature, an interval (a_j, b_j) and a weight parameter
rho_j. The effective weight is w_j = max(0, rho_j); features with w_j = 0 are
excluded from the conjunction exactly. Soft membership of a point is the
weighted harmonic mean of per-feature soft interval predicates

    pi_t(x; a, b) = 1 / (1 + exp(-(x - a)/t) + exp(-(b - x)/t)),

which approaches the indicator of a < x < b as the temperature t goes to 0.
The harmonic mean makes one near-zero predicate veto membership, matching the
semantics of a conjunction while staying differentiable.

Inside a rule the temperature is expressed in per-feature standard-deviation
units: the predicate for feature j runs at t_j = t * t_scale_j where t_scale_j
is the feature's observed standard deviation. This keeps one temperature
schedule meaningful across features of different dispersion and makes the
boundary softness a fixed fraction of each feature's spread rather than of
its range.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .data import Dataset, decode_interval, to_original_units
from .errors import (
    AllWeightsZero,
    DimensionMismatch,
    NonPositiveTemperature,
)

# exp arguments are clamped here so predicates never under/overflow; the
# clamped region contributes zero gradient, consistent with the clamp.
LOGIT_CLAMP = 30.0

# hardening defaults: drop conditions with tiny weight or near-vacuous interval
WEIGHT_EPS = 1e-3
VACUOUS_MARGIN = 0.01


def _check_temperature(t: float):
    if not (t > 0):
        raise NonPositiveTemperature(f"temperature must be > 0, got {t}")


def soft_predicate(x, a, b, t: float):
    """Soft indicator of a < x < b at temperature t. Broadcasts over x."""
    _check_temperature(t)
    x = np.asarray(x, dtype=np.float64)
    z1 = np.clip(-(x - a) / t, -LOGIT_CLAMP, LOGIT_CLAMP)
    z2 = np.clip(-(b - x) / t, -LOGIT_CLAMP, LOGIT_CLAMP)
    return 1.0 / (1.0 + np.exp(z1) + np.exp(z2))


@dataclass
class SoftRule:
    """Differentiable box rule state: intervals, weight parameters, temperature.

    ``t_scale`` holds the per-feature temperature multipliers (std units);
    omitted it defaults to ones, i.e. a plain shared temperature.
    """

    a: np.ndarray
    b: np.ndarray
    rho: np.ndarray
    t: float
    t_scale: Optional[np.ndarray] = None

    def __post_init__(self):
        self.a = np.asarray(self.a, dtype=np.float64).copy()
        self.b = np.asarray(self.b, dtype=np.float64).copy()
        self.rho = np.asarray(self.rho, dtype=np.float64).copy()
        if not (self.a.ndim == self.b.ndim == self.rho.ndim == 1):
            raise DimensionMismatch("rule parameters must be 1-d vectors")
        if not (self.a.shape == self.b.shape == self.rho.shape):
            raise DimensionMismatch(
                f"rule parameter shapes differ: {self.a.shape}, "
                f"{self.b.shape}, {self.rho.shape}"
            )
        if self.t_scale is None:
            self.t_scale = np.ones_like(self.a)
        else:
            self.t_scale = np.asarray(self.t_scale, dtype=np.float64).copy()
            if self.t_scale.shape != self.a.shape:
                raise DimensionMismatch(
                    f"t_scale has shape {self.t_scale.shape}, expected {self.a.shape}"
                )
            if not np.all(self.t_scale > 0):
                raise NonPositiveTemperature("t_scale entries must be > 0")
        _check_temperature(self.t)

    @property
    def d(self) -> int:
        return self.a.shape[0]

    @property
    def weights(self) -> np.ndarray:
        """Effective non-negative feature weights, w = max(0, rho)."""
        return np.maximum(self.rho, 0.0)

    def copy(self) -> "SoftRule":
        return SoftRule(
            self.a.copy(), self.b.copy(), self.rho.copy(), self.t,
            t_scale=self.t_scale.copy(),
        )


@dataclass
class MembershipBatch:
    """Soft memberships for a batch plus Jacobians w.r.t. rule parameters."""

    m: np.ndarray        # (n,)
    dm_da: np.ndarray    # (n, d)
    dm_db: np.ndarray    # (n, d)
    dm_drho: np.ndarray  # (n, d)


def soft_membership(rule: SoftRule, x) -> float:
    """Soft membership of a single point under the rule."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (rule.d,):
        raise DimensionMismatch(f"point has shape {x.shape}, rule has d={rule.d}")
    return float(membership_batch(rule, x[None, :]).m[0])


def membership_batch(rule: SoftRule, X) -> MembershipBatch:
    """Memberships and analytic Jacobians for every row of X.

    The weighted harmonic mean s = W / sum_j w_j / pi_j is evaluated over the
    active features (w_j > 0) only. Jacobian columns for inactive features are
    zero, as is dm/drho_j wherever rho_j <= 0 (projection w = max(0, rho)).
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise DimensionMismatch("X must be a 2-d matrix")
    n, d = X.shape
    if d != rule.d:
        raise DimensionMismatch(f"X has {d} features, rule has {rule.d}")
    w = rule.weights
    active = w > 0
    if not np.any(active):
        raise AllWeightsZero("all feature weights are zero; rule selects nothing")
    _check_temperature(rule.t)
    t_eff = rule.t * rule.t_scale  # per-feature temperature, (d,)

    z1 = -(X - rule.a) / t_eff
    z2 = -(rule.b - X) / t_eff
    in1 = np.abs(z1) < LOGIT_CLAMP  # where the clamp is inactive
    in2 = np.abs(z2) < LOGIT_CLAMP
    u = np.exp(np.clip(z1, -LOGIT_CLAMP, LOGIT_CLAMP))
    v = np.exp(np.clip(z2, -LOGIT_CLAMP, LOGIT_CLAMP))
    pi = 1.0 / (1.0 + u + v)

    wa = w[active]
    W = wa.sum()
    r = 1.0 / pi[:, active]           # (n, d_active)
    H = r @ wa                        # (n,)
    m = W / H

    dm_da = np.zeros((n, d))
    dm_db = np.zeros((n, d))
    dm_drho = np.zeros((n, d))

    # ds/dpi_j = W w_j r_j^2 / H^2; dpi/da = -pi^2 u / t_j; dpi/db = pi^2 v / t_j
    coeff = (W / H**2)[:, None] * wa[None, :] * r**2
    ta = t_eff[active][None, :]
    dpi_da = -(pi[:, active] ** 2) * u[:, active] * in1[:, active] / ta
    dpi_db = (pi[:, active] ** 2) * v[:, active] * in2[:, active] / ta
    dm_da[:, active] = coeff * dpi_da
    dm_db[:, active] = coeff * dpi_db

    # ds/dw_j = (H - W r_j) / H^2 for active j; drho passes through only if rho > 0
    dm_dw = (H[:, None] - W * r) / H[:, None] ** 2
    grad_gate = rule.rho[active] > 0
    dm_drho[:, active] = dm_dw * grad_gate[None, :]

    return MembershipBatch(m=m, dm_da=dm_da, dm_db=dm_db, dm_drho=dm_drho)


@dataclass(frozen=True)
class Condition:
    """One kept conjunct: feature index and open interval in scaled units."""

    feature: int
    lo: float
    hi: float

    def __post_init__(self):
        if not self.lo < self.hi:
            raise ValueError(
                f"condition on feature {self.feature} needs lo < hi, "
                f"got ({self.lo}, {self.hi})"
            )


@dataclass(frozen=True)
class HardRule:
    """Extracted conjunction of strict interval conditions.

    An empty condition list is the vacuous rule covering the whole population.
    """

    conditions: tuple = ()

    def membership(self, X) -> np.ndarray:
        """Hard 0/1 membership for every row of X (scaled units)."""
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2:
            raise DimensionMismatch("X must be a 2-d matrix")
        out = np.ones(X.shape[0], dtype=np.int8)
        for c in self.conditions:
            if c.feature >= X.shape[1]:
                raise DimensionMismatch(
                    f"condition on feature {c.feature} but X has {X.shape[1]} columns"
                )
            col = X[:, c.feature]
            out &= ((col > c.lo) & (col < c.hi)).astype(np.int8)
        return out

    def describe(self, ds: Dataset) -> str:
        """Human-readable conjunction in original units."""
        if not self.conditions:
            return "(whole population)"
        parts = [decode_interval(ds, c.feature, c.lo, c.hi) for c in self.conditions]
        return " & ".join(parts)

    def to_json(self, ds: Optional[Dataset] = None) -> dict:
        """JSON-ready dict; with a dataset, bounds are in original units."""
        conds = []
        for c in self.conditions:
            if ds is None:
                lo, hi = c.lo, c.hi
                name = str(c.feature)
            else:
                lo, hi = to_original_units(ds, c.feature, c.lo, c.hi)
                name = ds.feature_names[c.feature]
            conds.append({"feature": name, "lo": lo, "hi": hi})
        out = {"conditions": conds}
        if ds is not None:
            out["text"] = self.describe(ds)
        return out


def harden(
    rule: SoftRule,
    ds: Dataset,
    weight_eps: float = WEIGHT_EPS,
    vacuous_margin: float = VACUOUS_MARGIN,
) -> HardRule:
    """Extract the hard conjunction from a trained soft rule.

    A condition on feature j is kept when its weight exceeds ``weight_eps``
    and the interval actually excludes at least a ``vacuous_margin`` fraction
    of that feature's observed values. Kept intervals are clipped to the
    observed range. Conditions whose interval is inverted or entirely outside
    the data are unrepresentable as boxes and are dropped.
    """
    if ds.d != rule.d:
        raise DimensionMismatch(f"dataset has {ds.d} features, rule has {rule.d}")
    w = rule.weights
    conds: List[Condition] = []
    for j in range(rule.d):
        if w[j] <= weight_eps:
            continue
        col = ds.features[:, j]
        lo, hi = float(rule.a[j]), float(rule.b[j])
        excluded = np.mean(~((col > lo) & (col < hi)))
        if excluded < vacuous_margin:
            continue
        c_lo = max(lo, float(col.min()))
        c_hi = min(hi, float(col.max()))
        if not c_lo < c_hi:
            continue
        conds.append(Condition(feature=j, lo=c_lo, hi=c_hi))
    return HardRule(conditions=tuple(conds))


def init_rule(ds: Dataset, t: float, rng: np.random.Generator) -> SoftRule:
    """Starting rule: wide per-feature intervals with a little jitter.

    Intervals start at the 15th/85th percentiles of each feature (so every
    gradient sees both sides of the boundary), jittered by up to 2% of the
    observed range; all weight parameters start at 0.5. The temperature scale
    is each feature's standard deviation (constant features fall back to 1).
    """
    X = ds.features
    a = np.percentile(X, 15, axis=0)
    b = np.percentile(X, 85, axis=0)
    span = X.max(axis=0) - X.min(axis=0)
    span = np.where(span > 0, span, 1.0)
    a = a + rng.uniform(-0.02, 0.02, ds.d) * span
    b = b + rng.uniform(-0.02, 0.02, ds.d) * span
    rho = np.full(ds.d, 0.5)
    std = X.std(axis=0)
    t_scale = np.where(std > 1e-12, std, 1.0)
    return SoftRule(a=a, b=b, rho=rho, t=t, t_scale=t_scale)
