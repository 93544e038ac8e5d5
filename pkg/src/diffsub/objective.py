"""Differentiable discovery objective: generality x divergence - penalty.

The scalar objective maximized by the trainer is

    L = G^gamma-weighted generality * E - lambda * C

where E is the (clamped) sample-approximated JS divergence between the two
groups' subgroup target distributions, G = (mean_0(m) * mean_1(m))^(gamma/2)
rewards covering both groups, and C penalizes subgroups whose target
distribution is already explained by covariates (forest-based local
divergences). For divergence-minimizing discovery the E term enters with a
flipped sign; G and C are unchanged.

E is normalized per unit of soft subgroup mass (the mass-weighted mean
log-ratio per group). C defaults to the population average of the per-row
penalties, whose gradient c_i / n repels every covariate-explained row in
proportion to its own penalty. The within-subgroup mean is available as
``covariate_norm="mass"``, but note its gradient (c_i - C) / S attracts any
row whose penalty sits below the current subgroup average, which can drag
rules toward low-predictability regions when the confound is global; the
unnormalized sum ("raw") is also provided.

E additionally carries ``prior_mass`` phantom rows per group at log-ratio
zero, discounting the divergence by S/(S + prior_mass). A handful of samples
always looks well-separated under a fitted density pair; the phantom mass
prices that in, so subgroups whose divergence rests on a few rows score near
zero while ordinarily sized subgroups are left essentially untouched.

Densities, per-sample log-ratios, and per-sample penalty values are frozen
between refits (the stop-gradient contract): gradients flow only through the
membership vector, never into estimator internals. The divergence itself is
re-evaluated every step from the frozen log-ratios at the current
memberships, because its weight normalization (by soft subgroup mass) makes
it nonlinear in m.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .data import Dataset, group_slices
from .densities import (
    MASS_FLOOR,
    JsResult,
    fit_discrete,
    fit_kde,
    js_divergence,
)
from .errors import StaleDensities
from .forest import (
    ForestModel,
    local_divergence_continuous,
    local_divergence_discrete,
)
from .rules import MembershipBatch

MEAN_FLOOR = 1e-8  # floor on group mean membership inside the generality gradient


@dataclass(frozen=True)
class ObjectiveConfig:
    """Knobs of the scalar objective."""

    gamma: float = 0.1
    lam: float = 0.5
    direction: str = "maximize"  # "maximize" | "minimize" divergence
    covariate_norm: str = "population"  # "population" | "mass" | "raw"
    prior_mass: float = 10.0  # phantom null mass added to each group's divergence

    def __post_init__(self):
        if self.direction not in ("maximize", "minimize"):
            raise ValueError(f"direction must be maximize|minimize, got {self.direction!r}")
        if self.covariate_norm not in ("mass", "population", "raw"):
            raise ValueError(
                f"covariate_norm must be mass|population|raw, got {self.covariate_norm!r}"
            )
        if self.gamma < 0:
            raise ValueError(f"gamma must be >= 0, got {self.gamma}")
        if self.lam < 0:
            raise ValueError(f"lambda must be >= 0, got {self.lam}")
        if self.prior_mass < 0:
            raise ValueError(f"prior_mass must be >= 0, got {self.prior_mass}")


def generality(m: np.ndarray, attribute: np.ndarray, gamma: float):
    """Generality G = (mean_0(m) * mean_1(m))^(gamma/2) and its gradient.

    Returns (G, g) with g_i = dG/dm_i = (gamma/2) * G / (mean_a * n_a) for
    i in group a; the group mean is floored at MEAN_FLOOR for stability.
    gamma = 0 gives G = 1 with zero gradient.
    """
    m = np.asarray(m, dtype=np.float64)
    is1 = attribute == 1
    n0 = int(np.sum(~is1))
    n1 = int(np.sum(is1))
    mean0 = float(np.sum(m[~is1])) / n0
    mean1 = float(np.sum(m[is1])) / n1
    value = (mean0 * mean1) ** (gamma / 2.0)
    grad = np.zeros_like(m)
    if gamma > 0:
        grad[~is1] = (gamma / 2.0) * value / (max(mean0, MEAN_FLOOR) * n0)
        grad[is1] = (gamma / 2.0) * value / (max(mean1, MEAN_FLOOR) * n1)
    return float(value), grad


@dataclass
class FrozenContext:
    """Everything the loss treats as constant between density refits."""

    epoch: int                 # epoch the context was fitted at
    max_age: int               # refit cadence; older contexts are stale
    lr: np.ndarray             # (n,) log(p_a(y_i)/mix(y_i)), dataset order
    c: np.ndarray              # (n,) per-row covariate-dependence values
    p0: object                 # fitted group-0 estimator (PMF or KDE)
    p1: object                 # fitted group-1 estimator
    js_at_fit: Optional[JsResult] = None
    subgroup_stats: dict = field(default_factory=dict)


def refresh_context(
    ds: Dataset,
    m: np.ndarray,
    forest: Optional[ForestModel],
    epoch: int,
    max_age: int,
) -> FrozenContext:
    """Refit subgroup densities (and penalty values) to current memberships.

    The forest itself is never refit here, only its fixed local predictions
    are compared against the refreshed subgroup PMFs/means.
    """
    idx0, idx1 = group_slices(ds)
    y0, y1 = ds.target[idx0], ds.target[idx1]
    m0, m1 = m[idx0], m[idx1]

    if ds.target_kind == "target-discrete":
        p0 = fit_discrete(y0, m0, ds.n_classes)
        p1 = fit_discrete(y1, m1, ds.n_classes)
        stats = {"group0": p0.summary(), "group1": p1.summary()}
        c = (
            local_divergence_discrete(forest, ds, p0, p1)
            if forest is not None
            else np.zeros(ds.n)
        )
    else:
        p0 = fit_kde(y0, m0)
        p1 = fit_kde(y1, m1)
        stats = {"group0": p0.summary(), "group1": p1.summary()}
        if forest is not None:
            c = local_divergence_continuous(forest, ds, p0.mean, p1.mean)
        else:
            c = np.zeros(ds.n)

    js = js_divergence(p0, p1, y0, m0, y1, m1)
    lr = np.zeros(ds.n)
    lr[idx0] = js.lr0
    lr[idx1] = js.lr1
    return FrozenContext(
        epoch=epoch,
        max_age=max_age,
        lr=lr,
        c=np.asarray(c, dtype=np.float64),
        p0=p0,
        p1=p1,
        js_at_fit=js,
        subgroup_stats=stats,
    )


@dataclass(frozen=True)
class ObjectiveState:
    """One evaluation of the objective: values plus parameter gradients."""

    generality: float
    exceptionality: float      # clamped at 0; sign flip applied in the loss only
    exceptionality_raw: float
    covariate_dep: float
    loss: float
    grad_a: np.ndarray
    grad_b: np.ndarray
    grad_rho: np.ndarray

    def trace_row(self, epoch: int, t: float) -> dict:
        return {
            "epoch": epoch,
            "t": t,
            "G": self.generality,
            "E": self.exceptionality,
            "C": self.covariate_dep,
            "loss": self.loss,
        }


def loss_and_grad(
    mb: MembershipBatch,
    ds: Dataset,
    cfg: ObjectiveConfig,
    ctx: FrozenContext,
    epoch: Optional[int] = None,
) -> ObjectiveState:
    """Evaluate the objective and its gradients at the given memberships.

    Raises StaleDensities when the context is older than its refit cadence
    allows (pass the current epoch to enable the check).
    """
    if epoch is not None and epoch - ctx.epoch > ctx.max_age:
        raise StaleDensities(
            f"context fitted at epoch {ctx.epoch} used at epoch {epoch} "
            f"(cadence {ctx.max_age})"
        )
    m = mb.m
    n = ds.n

    g_value, g_grad = generality(m, ds.attribute, cfg.gamma)

    # Divergence at current memberships from frozen log-ratios: each group's
    # KL term is the mass-weighted mean of its log-ratios over the real mass
    # plus cfg.prior_mass of phantom mass at log-ratio zero. The phantom mass
    # discounts divergence claims backed by only a handful of rows (a few
    # samples always separate by chance) and fades once the subgroup carries
    # real weight.
    is1 = ds.attribute == 1
    s0 = max(float(np.sum(m[~is1])), MASS_FLOOR) + cfg.prior_mass
    s1 = max(float(np.sum(m[is1])), MASS_FLOOR) + cfg.prior_mass
    kl0 = float(m[~is1] @ ctx.lr[~is1]) / s0
    kl1 = float(m[is1] @ ctx.lr[is1]) / s1
    e_raw = 0.5 * (kl0 + kl1)
    e_value = max(0.0, e_raw)
    e_coeff = np.where(
        is1, (ctx.lr - kl1) / (2.0 * s1), (ctx.lr - kl0) / (2.0 * s0)
    )
    sign = 1.0 if cfg.direction == "maximize" else -1.0
    if cfg.covariate_norm == "mass":
        s_all = max(float(np.sum(m)), MASS_FLOOR)
        c_value = float(m @ ctx.c) / s_all
        dc_dm = (ctx.c - c_value) / s_all
    elif cfg.covariate_norm == "population":
        c_value = float(m @ ctx.c) / n
        dc_dm = ctx.c / n
    else:
        c_value = float(m @ ctx.c)
        dc_dm = ctx.c
    loss = g_value * sign * e_value - cfg.lam * c_value

    dl_dm = sign * (g_grad * e_value) - cfg.lam * dc_dm
    if e_raw > 0.0:
        dl_dm = dl_dm + sign * g_value * e_coeff

    return ObjectiveState(
        generality=g_value,
        exceptionality=e_value,
        exceptionality_raw=e_raw,
        covariate_dep=c_value,
        loss=float(loss),
        grad_a=dl_dm @ mb.dm_da,
        grad_b=dl_dm @ mb.dm_db,
        grad_rho=dl_dm @ mb.dm_drho,
    )
