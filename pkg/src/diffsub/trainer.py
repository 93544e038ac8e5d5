"""Gradient-based rule discovery loop.

Each run anneals the rule temperature linearly from ``temp_start`` to
``temp_end`` over ``epochs`` steps while ascending the objective with Adam.
Subgroup densities (and the per-row penalty values) are refit every
``refit_every`` epochs; between refits they are frozen constants. The
reported rule is the best iterate: among all states evaluated at freshly
refit densities (every refit epoch plus the final state), the one with the
highest objective wins, so the best iterate is never worse than the final
one.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import List, Optional

import numpy as np

from .data import Dataset, group_slices
from .errors import EmptySubgroupInGroup, NonFiniteLoss
from .forest import fit_forest
from .objective import (
    FrozenContext,
    ObjectiveConfig,
    ObjectiveState,
    loss_and_grad,
    refresh_context,
)
from .rules import (
    HardRule,
    SoftRule,
    WEIGHT_EPS,
    VACUOUS_MARGIN,
    harden,
    init_rule,
    membership_batch,
)

log = logging.getLogger("diffsub")

MIN_ROWS_FOR_DISCOVERY = 50


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters of one discovery run."""

    epochs: int = 500
    lr: float = 0.005
    temp_start: float = 0.2
    temp_end: float = 0.02
    refit_every: int = 10
    restarts: int = 1
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    weight_eps: float = WEIGHT_EPS
    vacuous_margin: float = VACUOUS_MARGIN
    objective: ObjectiveConfig = field(default_factory=ObjectiveConfig)

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if not (0 < self.temp_end <= self.temp_start):
            raise ValueError(
                f"need 0 < temp_end <= temp_start, got "
                f"({self.temp_start}, {self.temp_end})"
            )
        if self.refit_every < 1:
            raise ValueError(f"refit_every must be >= 1, got {self.refit_every}")
        if self.lr <= 0:
            raise ValueError(f"lr must be > 0, got {self.lr}")
        if self.restarts < 1:
            raise ValueError(f"restarts must be >= 1, got {self.restarts}")

    def to_json(self) -> dict:
        return {
            "epochs": self.epochs,
            "lr": self.lr,
            "temp_start": self.temp_start,
            "temp_end": self.temp_end,
            "refit_every": self.refit_every,
            "restarts": self.restarts,
            "seed": self.seed,
            "beta1": self.beta1,
            "beta2": self.beta2,
            "adam_eps": self.adam_eps,
            "weight_eps": self.weight_eps,
            "vacuous_margin": self.vacuous_margin,
            "gamma": self.objective.gamma,
            "lambda": self.objective.lam,
            "direction": self.objective.direction,
            "covariate_norm": self.objective.covariate_norm,
            "prior_mass": self.objective.prior_mass,
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "TrainConfig":
        """Build a config from a flat dict (the to_json format)."""
        obj = dict(obj)
        gamma = obj.pop("gamma", 0.1)
        lam = obj.pop("lambda", obj.pop("lam", 0.5))
        direction = obj.pop("direction", "maximize")
        covariate_norm = obj.pop("covariate_norm", "population")
        prior_mass = obj.pop("prior_mass", 10.0)
        fields_ok = {
            "epochs", "lr", "temp_start", "temp_end", "refit_every",
            "restarts", "seed", "beta1", "beta2", "adam_eps",
            "weight_eps", "vacuous_margin",
        }
        extra = set(obj) - fields_ok
        if extra:
            raise ValueError(f"unknown training config keys: {sorted(extra)}")
        objective = ObjectiveConfig(
            gamma=float(gamma), lam=float(lam),
            direction=direction, covariate_norm=str(covariate_norm),
            prior_mass=float(prior_mass),
        )
        ints = {"epochs", "refit_every", "restarts", "seed"}
        kwargs = {
            k: (int(v) if k in ints else float(v)) for k, v in obj.items()
        }
        return cls(objective=objective, **kwargs)


class Adam:
    """Adam with bias correction, stepping in the ascent direction."""

    def __init__(self, lr: float, beta1: float = 0.9, beta2: float = 0.999,
                 eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self._m = {}
        self._v = {}

    def step(self, params: dict, grads: dict) -> dict:
        """Return updated copies of params, ascending along grads."""
        self.t += 1
        out = {}
        for key, p in params.items():
            g = grads[key]
            m = self._m.get(key, np.zeros_like(p))
            v = self._v.get(key, np.zeros_like(p))
            m = self.beta1 * m + (1 - self.beta1) * g
            v = self.beta2 * v + (1 - self.beta2) * g**2
            self._m[key] = m
            self._v[key] = v
            m_hat = m / (1 - self.beta1**self.t)
            v_hat = v / (1 - self.beta2**self.t)
            out[key] = p + self.lr * m_hat / (np.sqrt(v_hat) + self.eps)
        return out


@dataclass
class DiscoveryReport:
    """Everything one discovery run produces."""

    seed: int
    config: dict
    rule: HardRule
    rule_json: dict
    soft_rule: dict
    best_epoch: int
    loss: float
    generality: float
    exceptionality: float
    exceptionality_raw: float
    covariate_dep: float
    coverage0: float
    coverage1: float
    n_selected0: int
    n_selected1: int
    tau_hat: Optional[float]
    subgroup_stats: dict
    trace: List[dict]
    warnings: List[str] = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "seed": self.seed,
            "config": self.config,
            "rule": self.rule_json,
            "soft_rule": self.soft_rule,
            "best_epoch": self.best_epoch,
            "loss": self.loss,
            "generality": self.generality,
            "exceptionality": self.exceptionality,
            "exceptionality_raw": self.exceptionality_raw,
            "covariate_dep": self.covariate_dep,
            "coverage": {"group0": self.coverage0, "group1": self.coverage1},
            "n_selected": {"group0": self.n_selected0, "group1": self.n_selected1},
            "tau_hat": self.tau_hat,
            "subgroup_stats": self.subgroup_stats,
            "warnings": self.warnings,
            "trace": self.trace,
        }


def subgroup_effect(ds: Dataset, rule: HardRule):
    """In-subgroup group contrast: mean(Y | A=1, s=1) - mean(Y | A=0, s=1).

    Returns (tau_hat, n_in_group0, n_in_group1). Raises EmptySubgroupInGroup
    when the hard rule selects nobody in one of the groups.
    """
    member = rule.membership(ds.features).astype(bool)
    idx0, idx1 = group_slices(ds)
    in0 = member[idx0]
    in1 = member[idx1]
    n_in0, n_in1 = int(in0.sum()), int(in1.sum())
    if n_in0 == 0 or n_in1 == 0:
        raise EmptySubgroupInGroup(
            f"subgroup has {n_in0} members in group 0 and {n_in1} in group 1"
        )
    mu0 = float(ds.target[idx0][in0].mean())
    mu1 = float(ds.target[idx1][in1].mean())
    return mu1 - mu0, n_in0, n_in1


def _temperature(cfg: TrainConfig, epoch: int) -> float:
    """Linear anneal: epoch e of K uses temp_start - e * (span / K)."""
    step = (cfg.temp_start - cfg.temp_end) / cfg.epochs
    return cfg.temp_start - epoch * step


def train_once(ds: Dataset, cfg: TrainConfig) -> DiscoveryReport:
    """Run one seeded discovery and return its report.

    Raises NonFiniteLoss (with the trace so far attached) if the objective
    stops being finite.
    """
    rng = np.random.default_rng(cfg.seed)
    rule = init_rule(ds, cfg.temp_start, rng)
    forest = None
    if cfg.objective.lam > 0:
        forest = fit_forest(ds, seed=cfg.seed)

    adam = Adam(cfg.lr, cfg.beta1, cfg.beta2, cfg.adam_eps)
    trace: List[dict] = []
    ctx: Optional[FrozenContext] = None
    best_state: Optional[ObjectiveState] = None
    best_rule: Optional[SoftRule] = None
    best_epoch = -1
    best_stats: dict = {}

    for epoch in range(cfg.epochs):
        rule.t = _temperature(cfg, epoch)
        mb = membership_batch(rule, ds.features)
        fresh = epoch % cfg.refit_every == 0
        if fresh:
            ctx = refresh_context(ds, mb.m, forest, epoch, cfg.refit_every)
        state = loss_and_grad(mb, ds, cfg.objective, ctx, epoch)
        if not np.isfinite(state.loss):
            raise NonFiniteLoss(
                f"non-finite loss at epoch {epoch}", trace=trace
            )
        trace.append(state.trace_row(epoch, rule.t))
        if fresh and (best_state is None or state.loss > best_state.loss):
            best_state = state
            best_rule = rule.copy()
            best_epoch = epoch
            best_stats = ctx.subgroup_stats
        new = adam.step(
            {"a": rule.a, "b": rule.b, "rho": rule.rho},
            {"a": state.grad_a, "b": state.grad_b, "rho": state.grad_rho},
        )
        rule.a, rule.b, rule.rho = new["a"], new["b"], new["rho"]

    # final state, evaluated like any other fresh candidate
    rule.t = cfg.temp_end
    mb = membership_batch(rule, ds.features)
    ctx = refresh_context(ds, mb.m, forest, cfg.epochs, cfg.refit_every)
    state = loss_and_grad(mb, ds, cfg.objective, ctx, cfg.epochs)
    if not np.isfinite(state.loss):
        raise NonFiniteLoss("non-finite loss at final evaluation", trace=trace)
    trace.append(state.trace_row(cfg.epochs, rule.t))
    if best_state is None or state.loss > best_state.loss:
        best_state = state
        best_rule = rule.copy()
        best_epoch = cfg.epochs
        best_stats = ctx.subgroup_stats

    hard = harden(best_rule, ds, cfg.weight_eps, cfg.vacuous_margin)
    member = hard.membership(ds.features).astype(bool)
    idx0, idx1 = group_slices(ds)
    cov0 = float(member[idx0].mean())
    cov1 = float(member[idx1].mean())
    warnings: List[str] = []
    tau_hat: Optional[float] = None
    try:
        tau_hat, _, _ = subgroup_effect(ds, hard)
    except EmptySubgroupInGroup as exc:
        warnings.append(f"no group contrast: {exc}")

    return DiscoveryReport(
        seed=cfg.seed,
        config=cfg.to_json(),
        rule=hard,
        rule_json=hard.to_json(ds),
        soft_rule={
            "a": best_rule.a.tolist(),
            "b": best_rule.b.tolist(),
            "rho": best_rule.rho.tolist(),
            "t": best_rule.t,
            "t_scale": best_rule.t_scale.tolist(),
        },
        best_epoch=best_epoch,
        loss=best_state.loss,
        generality=best_state.generality,
        exceptionality=best_state.exceptionality,
        exceptionality_raw=best_state.exceptionality_raw,
        covariate_dep=best_state.covariate_dep,
        coverage0=cov0,
        coverage1=cov1,
        n_selected0=int(member[idx0].sum()),
        n_selected1=int(member[idx1].sum()),
        tau_hat=tau_hat,
        subgroup_stats=best_stats,
        trace=trace,
        warnings=warnings,
    )


def train_restarts(ds: Dataset, cfg: TrainConfig) -> DiscoveryReport:
    """Run ``cfg.restarts`` seeded runs (seed, seed+1, ...) and keep the best.

    Ties keep the earliest restart, so the outcome is order-independent.
    """
    best: Optional[DiscoveryReport] = None
    for r in range(cfg.restarts):
        run_cfg = replace(cfg, seed=cfg.seed + r)
        report = train_once(ds, run_cfg)
        if best is None or report.loss > best.loss:
            best = report
    return best


def discover_multiple(ds: Dataset, cfg: TrainConfig, count: int) -> List[DiscoveryReport]:
    """Discover up to ``count`` subgroups, removing found members in between.

    Stops early (with a warning on the last report) when either group runs
    out of rows or fewer than MIN_ROWS_FOR_DISCOVERY rows remain.
    """
    reports: List[DiscoveryReport] = []
    current = ds
    for k in range(count):
        if current.n < MIN_ROWS_FOR_DISCOVERY:
            msg = (
                f"stopped before subgroup {k}: {current.n} rows remain "
                f"(minimum {MIN_ROWS_FOR_DISCOVERY})"
            )
            log.warning(msg)
            if reports:
                reports[-1].warnings.append(msg)
            break
        if current.n0 == 0 or current.n1 == 0:
            msg = f"stopped before subgroup {k}: a group is empty"
            log.warning(msg)
            if reports:
                reports[-1].warnings.append(msg)
            break
        report = train_restarts(current, cfg)
        reports.append(report)
        if k + 1 < count:
            member = report.rule.membership(current.features).astype(bool)
            keep = ~member
            if keep.sum() == 0 or keep.sum() == current.n:
                msg = (
                    "stopped after subgroup "
                    f"{k}: rule removed {'all' if keep.sum() == 0 else 'no'} rows"
                )
                log.warning(msg)
                report.warnings.append(msg)
                break
            try:
                current = current.subset(keep)
            except Exception as exc:  # EmptyGroup after removal
                msg = f"stopped after subgroup {k}: {exc}"
                log.warning(msg)
                report.warnings.append(msg)
                break
    return reports
