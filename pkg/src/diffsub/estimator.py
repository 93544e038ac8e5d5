"""Scikit-learn style front end for rule discovery.

``DifferentialSubgroupDiscovery`` wraps the training loop behind the familiar
fit/predict surface: ``fit(X, a, y)`` learns the box rule on arrays,
``predict(X)`` returns hard 0/1 membership, and ``get_params``/``set_params``
come from ``BaseEstimator`` so the class composes with the usual tooling.
"""

from __future__ import annotations

from typing import Optional

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .data import from_arrays
from .errors import DimensionMismatch
from .objective import ObjectiveConfig
from .rules import SoftRule, membership_batch
from .trainer import TrainConfig, train_restarts


class DifferentialSubgroupDiscovery(BaseEstimator):
    """Learn one interpretable box rule where two groups diverge in a target.

    Parameters mirror the training configuration; ``direction="minimize"``
    searches for agreement instead of divergence. ``target`` is "auto",
    "discrete", or "continuous".
    """

    def __init__(
        self,
        gamma: float = 0.1,
        lam: float = 0.5,
        epochs: int = 500,
        lr: float = 0.005,
        temp_start: float = 0.2,
        temp_end: float = 0.02,
        refit_every: int = 10,
        restarts: int = 1,
        direction: str = "maximize",
        covariate_norm: str = "population",
        prior_mass: float = 10.0,
        target: str = "auto",
        scale: bool = True,
        seed: int = 0,
    ):
        self.gamma = gamma
        self.lam = lam
        self.epochs = epochs
        self.lr = lr
        self.temp_start = temp_start
        self.temp_end = temp_end
        self.refit_every = refit_every
        self.restarts = restarts
        self.direction = direction
        self.covariate_norm = covariate_norm
        self.prior_mass = prior_mass
        self.target = target
        self.scale = scale
        self.seed = seed

    def _config(self) -> TrainConfig:
        return TrainConfig(
            epochs=self.epochs,
            lr=self.lr,
            temp_start=self.temp_start,
            temp_end=self.temp_end,
            refit_every=self.refit_every,
            restarts=self.restarts,
            seed=self.seed,
            objective=ObjectiveConfig(
                gamma=self.gamma,
                lam=self.lam,
                direction=self.direction,
                covariate_norm=self.covariate_norm,
                prior_mass=self.prior_mass,
            ),
        )

    def fit(self, X, a, y, feature_names=None):
        """Learn the rule from features X, group attribute a, and target y."""
        ds = from_arrays(
            X, a, y,
            feature_names=feature_names,
            target_kind=self.target,
            scale=self.scale,
        )
        report = train_restarts(ds, self._config())
        self.dataset_ = ds
        self.report_ = report
        self.rule_ = report.rule
        self.soft_rule_ = SoftRule(
            a=np.array(report.soft_rule["a"]),
            b=np.array(report.soft_rule["b"]),
            rho=np.array(report.soft_rule["rho"]),
            t=report.soft_rule["t"],
            t_scale=np.array(report.soft_rule["t_scale"]),
        )
        self.feature_names_ = ds.feature_names
        self.n_features_in_ = ds.d
        return self

    def _check_fitted(self):
        if not hasattr(self, "rule_"):
            raise NotFittedError(
                "this DifferentialSubgroupDiscovery instance is not fitted yet"
            )

    def _transform(self, X) -> np.ndarray:
        """Validate new data and map it into the fitted (scaled) space."""
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2:
            raise DimensionMismatch("X must be a 2-d matrix")
        if X.shape[1] != self.n_features_in_:
            raise DimensionMismatch(
                f"X has {X.shape[1]} features, expected {self.n_features_in_}"
            )
        if not np.all(np.isfinite(X)):
            raise DimensionMismatch("X contains missing or non-finite values")
        out = np.empty_like(X)
        for j, (lo, hi) in enumerate(self.dataset_.scale_params):
            span = hi - lo
            out[:, j] = (X[:, j] - lo) / span if span > 0 else X[:, j] - lo
        return out

    def predict(self, X) -> np.ndarray:
        """Hard 0/1 subgroup membership for each row of X (original units)."""
        self._check_fitted()
        return self.rule_.membership(self._transform(X))

    def membership(self, X) -> np.ndarray:
        """Soft membership of the learned rule at its final temperature."""
        self._check_fitted()
        return membership_batch(self.soft_rule_, self._transform(X)).m

    def describe(self) -> str:
        """Human-readable conjunction of the learned rule, original units."""
        self._check_fitted()
        return self.rule_.describe(self.dataset_)

    @property
    def tau_hat_(self) -> Optional[float]:
        self._check_fitted()
        return self.report_.tau_hat
