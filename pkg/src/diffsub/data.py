"""Tabular data loading, encoding, and scaling.

A dataset couples a feature matrix with a binary group attribute and a target
variable. Categorical features are one-hot encoded, numeric features are
min-max scaled to [0, 1] by default (rule bounds are reported back in original
units via :func:`decode_interval`). Rows with missing values are rejected.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import (
    EmptyGroup,
    IndexOutOfRange,
    ParseError,
    SchemaMismatch,
)

FEATURE_KINDS = ("numeric", "categorical")
TARGET_KINDS = ("target-discrete", "target-continuous")
COLUMN_KINDS = FEATURE_KINDS + TARGET_KINDS + (
    "binary-attribute",
    "truth-membership",
    "truth-effect",
)


@dataclass(frozen=True)
class ColumnSchema:
    """Declared name and kind of one CSV column."""

    name: str
    kind: str
    categories: tuple = ()

    def __post_init__(self):
        if self.kind not in COLUMN_KINDS:
            raise SchemaMismatch(
                f"column {self.name!r}: unknown kind {self.kind!r}; "
                f"expected one of {COLUMN_KINDS}"
            )
        if self.kind == "categorical":
            if len(self.categories) == 0:
                raise SchemaMismatch(
                    f"categorical column {self.name!r} declares no categories"
                )
            if len(set(self.categories)) != len(self.categories):
                raise SchemaMismatch(
                    f"categorical column {self.name!r} has duplicate categories"
                )
        elif self.categories:
            raise SchemaMismatch(
                f"column {self.name!r}: categories only apply to categorical kind"
            )


def schema_from_json(obj) -> list:
    """Build a schema list from parsed JSON (a list of column dicts)."""
    if isinstance(obj, (str, bytes)):
        obj = json.loads(obj)
    if not isinstance(obj, list):
        raise SchemaMismatch("schema JSON must be a list of column objects")
    out = []
    for entry in obj:
        if not isinstance(entry, dict) or "name" not in entry or "kind" not in entry:
            raise SchemaMismatch(f"schema entry {entry!r} needs 'name' and 'kind'")
        out.append(
            ColumnSchema(
                name=str(entry["name"]),
                kind=str(entry["kind"]),
                categories=tuple(entry.get("categories", ())),
            )
        )
    return out


def schema_to_json(schema: Sequence[ColumnSchema]) -> list:
    out = []
    for col in schema:
        entry = {"name": col.name, "kind": col.kind}
        if col.categories:
            entry["categories"] = list(col.categories)
        out.append(entry)
    return out


@dataclass(frozen=True)
class Dataset:
    """Immutable encoded dataset.

    ``features`` holds the encoded (and, by default, min-max scaled) matrix the
    learner sees; ``features_raw`` the same matrix in original units so that
    rule bounds reported in original units can be re-applied exactly.
    """

    features: np.ndarray
    features_raw: np.ndarray
    attribute: np.ndarray
    target: np.ndarray
    target_kind: str
    feature_names: tuple
    scale_params: tuple  # per feature column: (lo, hi) of the original units
    onehot_origin: dict = field(default_factory=dict)  # col index -> (orig name, level)
    n_classes: int = 0
    truth_membership: Optional[np.ndarray] = None
    truth_effect: Optional[np.ndarray] = None

    def __post_init__(self):
        for arr in (self.features, self.features_raw, self.attribute, self.target,
                    self.truth_membership, self.truth_effect):
            if arr is not None:
                arr.setflags(write=False)

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]

    @property
    def n0(self) -> int:
        return int(np.sum(self.attribute == 0))

    @property
    def n1(self) -> int:
        return int(np.sum(self.attribute == 1))

    def subset(self, rows) -> "Dataset":
        """Return a new dataset restricted to the given row indices.

        Scale parameters and encodings are inherited unchanged so decoded
        bounds stay comparable with the parent dataset.
        """
        rows = np.asarray(rows)
        if rows.dtype == bool:
            if rows.shape[0] != self.n:
                raise IndexOutOfRange(
                    f"boolean row mask has length {rows.shape[0]}, dataset has {self.n}"
                )
            rows = np.flatnonzero(rows)
        else:
            rows = rows.astype(np.int64)
            if rows.size and (rows.min() < 0 or rows.max() >= self.n):
                raise IndexOutOfRange(
                    f"row indices out of range for dataset of {self.n} rows"
                )
        sub = Dataset(
            features=self.features[rows].copy(),
            features_raw=self.features_raw[rows].copy(),
            attribute=self.attribute[rows].copy(),
            target=self.target[rows].copy(),
            target_kind=self.target_kind,
            feature_names=self.feature_names,
            scale_params=self.scale_params,
            onehot_origin=self.onehot_origin,
            n_classes=self.n_classes,
            truth_membership=None if self.truth_membership is None
            else self.truth_membership[rows].copy(),
            truth_effect=None if self.truth_effect is None
            else self.truth_effect[rows].copy(),
        )
        _check_groups(sub.attribute)
        return sub


def group_slices(ds: Dataset):
    """Indices of group 0 and group 1 rows, in dataset order."""
    a = ds.attribute
    return np.flatnonzero(a == 0), np.flatnonzero(a == 1)


def _check_groups(attribute: np.ndarray):
    if np.sum(attribute == 0) == 0 or np.sum(attribute == 1) == 0:
        raise EmptyGroup("both attribute groups must be non-empty")


def _infer_target_kind(y: np.ndarray) -> str:
    if np.allclose(y, np.round(y)) and np.unique(y).size <= max(20, int(np.sqrt(y.size))):
        return "target-discrete"
    return "target-continuous"


def _validate_discrete_target(y: np.ndarray, name: str = "target") -> int:
    labels = np.round(y)
    if not np.allclose(y, labels):
        raise ParseError(f"{name}: discrete target has non-integer values")
    if labels.min() < 0:
        raise ParseError(f"{name}: discrete labels must be non-negative")
    return int(labels.max()) + 1


def from_arrays(
    X,
    a,
    y,
    feature_names=None,
    target_kind: str = "auto",
    scale: bool = True,
    truth_membership=None,
    truth_effect=None,
) -> Dataset:
    """Build a validated dataset from numeric arrays.

    ``target_kind`` is "discrete", "continuous", or "auto" (inferred from the
    target values). Raises on missing values, non-binary attributes, or an
    empty group.
    """
    X = np.asarray(X, dtype=np.float64)
    a = np.asarray(a)
    y = np.asarray(y, dtype=np.float64)
    if X.ndim != 2:
        raise SchemaMismatch("feature matrix must be 2-dimensional")
    n, d = X.shape
    if a.shape != (n,) or y.shape != (n,):
        raise SchemaMismatch(
            f"attribute/target lengths {a.shape}/{y.shape} do not match {n} rows"
        )
    if not np.all(np.isfinite(X)):
        i, j = np.argwhere(~np.isfinite(X))[0]
        raise ParseError("missing or non-finite feature value", row=int(i), column=int(j))
    if not np.all(np.isfinite(y)):
        raise ParseError("missing or non-finite target value",
                         row=int(np.flatnonzero(~np.isfinite(y))[0]))
    a_f = np.asarray(a, dtype=np.float64)
    if not np.all(np.isin(a_f, (0.0, 1.0))):
        raise ParseError("attribute values must be 0 or 1")
    a_i = a_f.astype(np.int8)
    _check_groups(a_i)

    if feature_names is None:
        feature_names = tuple(f"x{j}" for j in range(d))
    else:
        feature_names = tuple(str(s) for s in feature_names)
        if len(feature_names) != d:
            raise SchemaMismatch("feature_names length does not match feature count")

    if target_kind in ("auto", None):
        target_kind = _infer_target_kind(y)
    elif target_kind in ("discrete", "target-discrete"):
        target_kind = "target-discrete"
    elif target_kind in ("continuous", "target-continuous"):
        target_kind = "target-continuous"
    else:
        raise SchemaMismatch(f"unknown target kind {target_kind!r}")
    n_classes = _validate_discrete_target(y) if target_kind == "target-discrete" else 0

    raw = X.copy()
    if scale:
        scaled, params = _minmax_scale(raw)
    else:
        scaled = raw.copy()
        params = tuple((0.0, 1.0) for _ in range(d))

    tm = None
    if truth_membership is not None:
        tm = np.asarray(truth_membership, dtype=np.float64)
        if tm.shape != (n,) or not np.all(np.isin(tm, (0.0, 1.0))):
            raise SchemaMismatch("truth membership must be a 0/1 vector of length n")
        tm = tm.astype(np.int8)
    te = None
    if truth_effect is not None:
        te = np.asarray(truth_effect, dtype=np.float64)
        if te.shape != (n,) or not np.all(np.isfinite(te)):
            raise SchemaMismatch("truth effect must be a finite vector of length n")

    return Dataset(
        features=scaled,
        features_raw=raw,
        attribute=a_i,
        target=y.copy(),
        target_kind=target_kind,
        feature_names=feature_names,
        scale_params=params,
        n_classes=n_classes,
        truth_membership=tm,
        truth_effect=te,
    )


def _minmax_scale(raw: np.ndarray):
    """Scale each column to [0, 1]; constant columns map to 0."""
    lo = raw.min(axis=0)
    hi = raw.max(axis=0)
    span = hi - lo
    scaled = np.zeros_like(raw)
    nz = span > 0
    scaled[:, nz] = (raw[:, nz] - lo[nz]) / span[nz]
    params = tuple((float(l), float(h)) for l, h in zip(lo, hi))
    return scaled, params


def load_csv(path, schema: Sequence[ColumnSchema], scale: bool = True) -> Dataset:
    """Load a CSV file against a declared schema.

    The header must contain exactly the schema's column names (any order).
    Exactly one binary-attribute and one target column are required. Raises
    SchemaMismatch / ParseError (with row and column detail) / EmptyGroup.
    """
    schema = list(schema)
    names = [c.name for c in schema]
    if len(set(names)) != len(names):
        raise SchemaMismatch("schema declares duplicate column names")
    by_name = {c.name: c for c in schema}
    n_attr = sum(1 for c in schema if c.kind == "binary-attribute")
    n_targ = sum(1 for c in schema if c.kind in TARGET_KINDS)
    if n_attr != 1:
        raise SchemaMismatch(f"schema must declare exactly one binary-attribute, got {n_attr}")
    if n_targ != 1:
        raise SchemaMismatch(f"schema must declare exactly one target column, got {n_targ}")

    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaMismatch(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        missing = sorted(set(names) - set(header))
        extra = sorted(set(header) - set(names))
        if missing or extra:
            raise SchemaMismatch(
                f"{path}: header does not match schema "
                f"(missing {missing or 'none'}, extra {extra or 'none'})"
            )
        if len(set(header)) != len(header):
            raise SchemaMismatch(f"{path}: duplicate header columns")
        rows = []
        for r, row in enumerate(reader):
            if len(row) != len(header):
                raise ParseError(
                    f"{path}: row {r} has {len(row)} fields, expected {len(header)}",
                    row=r,
                )
            rows.append(row)
    if not rows:
        raise SchemaMismatch(f"{path}: no data rows")

    col_text = {h: [row[i] for row in rows] for i, h in enumerate(header)}
    n = len(rows)

    def parse_numeric(name, kind_label):
        out = np.empty(n, dtype=np.float64)
        for r, text in enumerate(col_text[name]):
            text = text.strip()
            if text == "":
                raise ParseError(
                    f"{path}: missing value at row {r}, column {name!r}",
                    row=r, column=name,
                )
            try:
                val = float(text)
            except ValueError:
                raise ParseError(
                    f"{path}: cannot parse {text!r} as {kind_label} "
                    f"at row {r}, column {name!r}",
                    row=r, column=name,
                ) from None
            if not np.isfinite(val):
                raise ParseError(
                    f"{path}: non-finite value at row {r}, column {name!r}",
                    row=r, column=name,
                )
            out[r] = val
        return out

    feat_cols = []   # (encoded name, raw values, is_onehot, origin)
    attribute = target = None
    target_kind = None
    tm = te = None
    for col in schema:
        if col.kind == "numeric":
            feat_cols.append((col.name, parse_numeric(col.name, "numeric"), False, None))
        elif col.kind == "categorical":
            levels = {str(v): k for k, v in enumerate(col.categories)}
            codes = np.empty(n, dtype=np.int64)
            for r, text in enumerate(col_text[col.name]):
                text = text.strip()
                if text == "":
                    raise ParseError(
                        f"{path}: missing value at row {r}, column {col.name!r}",
                        row=r, column=col.name,
                    )
                if text not in levels:
                    raise ParseError(
                        f"{path}: unknown category {text!r} at row {r}, "
                        f"column {col.name!r} (declared: {list(col.categories)})",
                        row=r, column=col.name,
                    )
                codes[r] = levels[text]
            for k, level in enumerate(col.categories):
                onehot = (codes == k).astype(np.float64)
                feat_cols.append(
                    (f"{col.name}={level}", onehot, True, (col.name, str(level)))
                )
        elif col.kind == "binary-attribute":
            vals = parse_numeric(col.name, "binary attribute")
            if not np.all(np.isin(vals, (0.0, 1.0))):
                bad = int(np.flatnonzero(~np.isin(vals, (0.0, 1.0)))[0])
                raise ParseError(
                    f"{path}: attribute value must be 0 or 1 at row {bad}, "
                    f"column {col.name!r}",
                    row=bad, column=col.name,
                )
            attribute = vals.astype(np.int8)
        elif col.kind in TARGET_KINDS:
            target = parse_numeric(col.name, col.kind)
            target_kind = col.kind
        elif col.kind == "truth-membership":
            vals = parse_numeric(col.name, "truth membership")
            if not np.all(np.isin(vals, (0.0, 1.0))):
                raise ParseError(f"{path}: column {col.name!r} must be 0/1",
                                 column=col.name)
            tm = vals.astype(np.int8)
        elif col.kind == "truth-effect":
            te = parse_numeric(col.name, "truth effect")

    _check_groups(attribute)
    n_classes = 0
    if target_kind == "target-discrete":
        n_classes = _validate_discrete_target(target)

    raw = np.column_stack([c[1] for c in feat_cols]) if feat_cols else np.empty((n, 0))
    names_enc = tuple(c[0] for c in feat_cols)
    onehot_origin = {j: c[3] for j, c in enumerate(feat_cols) if c[2]}

    if scale:
        scaled = raw.copy()
        params = []
        for j in range(raw.shape[1]):
            if j in onehot_origin:
                params.append((0.0, 1.0))  # one-hot columns are already 0/1
            else:
                lo, hi = raw[:, j].min(), raw[:, j].max()
                params.append((float(lo), float(hi)))
                scaled[:, j] = (raw[:, j] - lo) / (hi - lo) if hi > lo else 0.0
        params = tuple(params)
    else:
        scaled = raw.copy()
        params = tuple((0.0, 1.0) for _ in range(raw.shape[1]))

    return Dataset(
        features=scaled,
        features_raw=raw,
        attribute=attribute,
        target=target,
        target_kind=target_kind,
        feature_names=names_enc,
        scale_params=params,
        onehot_origin=onehot_origin,
        n_classes=n_classes,
        truth_membership=tm,
        truth_effect=te,
    )


def to_original_units(ds: Dataset, j: int, lo: float, hi: float):
    """Map a scaled-space interval on feature j back to original units."""
    if not 0 <= j < ds.d:
        raise IndexOutOfRange(f"feature index {j} out of range for d={ds.d}")
    p_lo, p_hi = ds.scale_params[j]
    span = p_hi - p_lo
    if span <= 0:  # constant column or identity params
        if (p_lo, p_hi) == (0.0, 1.0):
            return lo, hi
        return p_lo, p_lo
    return lo * span + p_lo, hi * span + p_lo


def decode_interval(ds: Dataset, j: int, lo: float, hi: float) -> str:
    """Render a scaled-space interval on feature j as a readable condition.

    Numeric bounds are mapped back to original units. One-hot columns render
    as equality/inequality on the original categorical. Intervals spanning
    the full observed range are marked vacuous.
    """
    if not 0 <= j < ds.d:
        raise IndexOutOfRange(f"feature index {j} out of range for d={ds.d}")
    name = ds.feature_names[j]
    if j in ds.onehot_origin:
        orig, level = ds.onehot_origin[j]
        keeps_one = lo < 1.0 < hi
        keeps_zero = lo < 0.0 < hi
        if keeps_one and keeps_zero:
            return f"{orig}: any (vacuous)"
        if keeps_one:
            return f"{orig} = {level}"
        if keeps_zero:
            return f"{orig} != {level}"
        return f"{orig}: empty"
    col = ds.features[:, j]
    if lo <= col.min() and hi >= col.max():
        return f"{name}: any (vacuous)"
    o_lo, o_hi = to_original_units(ds, j, lo, hi)
    return f"{name} ∈ ({o_lo:.6g}, {o_hi:.6g})"
