"""Random-forest reference model for the covariate-dependence penalty.

A forest is fit once per discovery run on (X, A) -> Y with the group
attribute A appended as an ordinary feature column, then queried for local
predictions: full class-probability vectors for classification, point
predictions for regression. The penalty compares those local predictions with
the current subgroup-level distribution (PMF or mean); a subgroup whose
target distribution is explained by covariates alone gets a high penalty.

On its own training rows the forest answers with out-of-bag predictions.
In-sample predictions of an unrestricted-depth forest largely memorize the
target, so their deviation from the subgroup mean would include the
irreducible noise and turn the penalty into a blanket tax on coverage; the
out-of-bag aggregate estimates E[Y | x, a] without that self-fit. Rows that
never land out of bag (vanishingly rare with 100 trees) fall back to the
in-sample prediction.

Forest settings: 100 trees, unrestricted depth, minimum leaf size 1,
bootstrap resamples of size n, and per-split feature subsampling of
ceil(sqrt(d+1)) features for classification or ceil((d+1)/3) for regression.
Given identical data and seed, the fitted forest and every divergence it
produces are bitwise reproducible.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.special import xlogy
from sklearn.ensemble import RandomForestClassifier, RandomForestRegressor

from .data import Dataset
from .densities import WeightedEmpiricalPMF
from .errors import InsufficientData, TaskMismatch

N_TREES = 100


@dataclass
class ForestModel:
    """Fitted forest plus metadata; predictions on the training set cached."""

    task: str  # "classify" | "regress"
    seed: int
    model: object
    n_features: int
    oob: Optional[np.ndarray] = field(default=None, repr=False)
    train_key: Optional[int] = field(default=None, repr=False)
    _cache: Optional[np.ndarray] = field(default=None, repr=False)
    _cache_key: Optional[int] = field(default=None, repr=False)

    @property
    def n_trees(self) -> int:
        return len(self.model.estimators_)

    @property
    def trees(self):
        return self.model.estimators_

    def _design(self, ds: Dataset) -> np.ndarray:
        if ds.d + 1 != self.n_features:
            raise TaskMismatch(
                f"forest was fit on {self.n_features} columns, "
                f"dataset provides {ds.d + 1}"
            )
        return np.column_stack([ds.features, ds.attribute.astype(np.float64)])

    def predict_local(self, ds: Dataset) -> np.ndarray:
        """Local forest output per row: class-prob matrix or value vector.

        Training rows get the out-of-bag aggregate; other data the ordinary
        forest prediction.
        """
        key = id(ds)
        if key == self.train_key and self.oob is not None:
            return self.oob
        if self._cache_key == key and self._cache is not None:
            return self._cache
        Z = self._design(ds)
        if self.task == "classify":
            out = self.model.predict_proba(Z)
        else:
            out = self.model.predict(Z)
        self._cache = out
        self._cache_key = key
        return out

    def feature_importances(self, ds: Dataset) -> dict:
        names = list(ds.feature_names) + ["<attribute>"]
        return {n: float(v) for n, v in zip(names, self.model.feature_importances_)}


def fit_forest(ds: Dataset, task: Optional[str] = None, seed: int = 0) -> ForestModel:
    """Fit the reference forest on (features, attribute) -> target.

    ``task`` defaults to the dataset's target kind. Raises TaskMismatch when
    the requested task contradicts the target kind and InsufficientData for
    fewer than 2 rows.
    """
    inferred = "classify" if ds.target_kind == "target-discrete" else "regress"
    if task is None:
        task = inferred
    if task not in ("classify", "regress"):
        raise TaskMismatch(f"unknown task {task!r}")
    if task != inferred:
        raise TaskMismatch(
            f"task {task!r} contradicts target kind {ds.target_kind!r}"
        )
    if ds.n < 2:
        raise InsufficientData(f"need at least 2 rows to fit a forest, got {ds.n}")

    Z = np.column_stack([ds.features, ds.attribute.astype(np.float64)])
    p = Z.shape[1]
    with warnings.catch_warnings():
        # tiny datasets can leave a few rows with no out-of-bag trees; we
        # backfill those below, so the sklearn warning is expected noise
        warnings.filterwarnings("ignore", message="Some inputs do not have OOB")
        if task == "classify":
            model = RandomForestClassifier(
                n_estimators=N_TREES,
                criterion="gini",
                max_depth=None,
                min_samples_leaf=1,
                max_features=int(np.ceil(np.sqrt(p))),
                bootstrap=True,
                oob_score=True,
                random_state=seed,
                n_jobs=1,
            )
            model.fit(Z, ds.target.astype(np.int64))
            oob = np.asarray(model.oob_decision_function_, dtype=np.float64)
            bad = ~np.all(np.isfinite(oob), axis=1) | (oob.sum(axis=1) <= 0)
            if np.any(bad):
                oob[bad] = model.predict_proba(Z[bad])
        else:
            model = RandomForestRegressor(
                n_estimators=N_TREES,
                criterion="squared_error",
                max_depth=None,
                min_samples_leaf=1,
                max_features=int(np.ceil(p / 3.0)),
                bootstrap=True,
                oob_score=True,
                random_state=seed,
                n_jobs=1,
            )
            model.fit(Z, ds.target)
            oob = np.asarray(model.oob_prediction_, dtype=np.float64)
            bad = ~np.isfinite(oob)
            if np.any(bad):
                oob[bad] = model.predict(Z[bad])
    return ForestModel(
        task=task, seed=seed, model=model, n_features=p, oob=oob, train_key=id(ds)
    )


def local_divergence_discrete(
    model: ForestModel,
    ds: Dataset,
    pmf0: WeightedEmpiricalPMF,
    pmf1: WeightedEmpiricalPMF,
    local_probs: Optional[np.ndarray] = None,
) -> np.ndarray:
    """Per-row KL(local class distribution || own group's subgroup PMF).

    ``local_probs`` may pass cached model.predict_local output.
    """
    if model.task != "classify":
        raise TaskMismatch("discrete divergence needs a classification forest")
    probs = model.predict_local(ds) if local_probs is None else local_probs
    classes = np.asarray(model.model.classes_, dtype=np.int64)
    ref = np.empty((ds.n, classes.shape[0]))
    p0 = pmf0.probs[classes]
    p1 = pmf1.probs[classes]
    is1 = ds.attribute == 1
    ref[~is1] = p0
    ref[is1] = p1
    c = np.sum(xlogy(probs, probs) - xlogy(probs, ref), axis=1)
    return np.maximum(c, 0.0)


def local_divergence_continuous(
    model: ForestModel,
    ds: Dataset,
    mu0: float,
    mu1: float,
    local_pred: Optional[np.ndarray] = None,
) -> np.ndarray:
    """Per-row squared deviation of the local prediction from the own-group
    subgroup mean: c_i = (f(x_i, a_i) - mu_{a_i})^2."""
    if model.task != "regress":
        raise TaskMismatch("continuous divergence needs a regression forest")
    pred = model.predict_local(ds) if local_pred is None else local_pred
    mu = np.where(ds.attribute == 1, mu1, mu0)
    return (pred - mu) ** 2
