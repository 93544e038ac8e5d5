"""Synthetic benchmark data with a planted differential subgroup.

Features are uniform on [0, 1]^d. The group attribute A is assigned either
by a logistic model on the features (observational), a fair coin
(randomized), or a fair coin followed by a group-dependent feature shift
(demographic). The target is

    y = beta_y . x + s*(x) * (tau/2) * sign(A) + (1 - s*(x)) * (eta/2) * sign(A) + noise

with sign(A) = +1 for A=1 and -1 for A=0, so the group contrast is tau inside
the planted subgroup s* and eta outside. Two control settings exist:
full-mediation-control drops the direct effect entirely (group differences
arise only through the demographic feature shift) and null-effect-control
forces tau = eta (no differential signal). All settings consume the random
stream in the same order, so datasets generated with the same seed are
matched draw-for-draw across settings.

The planted subgroup is a box on two randomly chosen features; each interval
has length sqrt(target_coverage) and is placed uniformly in [0, 1], redrawn
until the empirical coverage is within tolerance of the target.

By default every feature carries a nonzero target coefficient. Setting
``n_relevant`` keeps only the first ``n_relevant`` features active (nonzero
beta_y, beta_a, mu entries; subgroup box placed among them) and turns the
rest into irrelevant noise columns, which is how robustness-to-noise sweeps
grow d without changing the signal geometry of the base problem.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np
from scipy.special import expit

from .data import ColumnSchema, Dataset, from_arrays, schema_to_json
from .errors import CoverageCalibrationFailure, SchemaMismatch

SETTINGS = (
    "observational",
    "randomized",
    "demographic",
    "full-mediation-control",
    "null-effect-control",
)

MAX_PLACEMENT_ATTEMPTS = 100


@dataclass(frozen=True)
class SynthConfig:
    """Generator parameters."""

    setting: str = "randomized"
    n: int = 2000
    d: int = 5
    tau: float = 2.0
    eta: float = 1.0
    sigma2: float = 0.5
    target_coverage: float = 0.3
    coverage_tol: float = 0.05
    seed: int = 0
    n_relevant: Optional[int] = None
    scale: bool = True

    def __post_init__(self):
        if self.setting not in SETTINGS:
            raise SchemaMismatch(
                f"unknown setting {self.setting!r}; expected one of {SETTINGS}"
            )
        if self.n < 10:
            raise SchemaMismatch(f"n must be >= 10, got {self.n}")
        if self.d < 2:
            raise SchemaMismatch(f"d must be >= 2, got {self.d}")
        if not 0 < self.target_coverage < 1:
            raise SchemaMismatch(
                f"target_coverage must be in (0, 1), got {self.target_coverage}"
            )
        if self.sigma2 < 0:
            raise SchemaMismatch(f"sigma2 must be >= 0, got {self.sigma2}")
        if self.n_relevant is not None and not 2 <= self.n_relevant <= self.d:
            raise SchemaMismatch(
                f"n_relevant must be in [2, d={self.d}], got {self.n_relevant}"
            )

    def to_json(self) -> dict:
        return {
            "setting": self.setting,
            "n": self.n,
            "d": self.d,
            "tau": self.tau,
            "eta": self.eta,
            "sigma2": self.sigma2,
            "target_coverage": self.target_coverage,
            "coverage_tol": self.coverage_tol,
            "seed": self.seed,
            "n_relevant": self.n_relevant,
            "scale": self.scale,
        }


@dataclass
class SynthTruth:
    """Ground truth of one generated dataset."""

    setting: str
    subgroup_features: Tuple[int, int]
    bounds: Tuple[Tuple[float, float], Tuple[float, float]]  # original units
    coverage: float
    effect_inside: float
    effect_outside: float
    beta_y: np.ndarray
    beta_a: np.ndarray
    mu: np.ndarray
    membership: np.ndarray
    config: SynthConfig = field(repr=False, default=None)

    def to_json(self) -> dict:
        return {
            "setting": self.setting,
            "subgroup_features": list(self.subgroup_features),
            "bounds": [list(b) for b in self.bounds],
            "coverage": self.coverage,
            "effect_inside": self.effect_inside,
            "effect_outside": self.effect_outside,
            "beta_y": self.beta_y.tolist(),
            "beta_a": self.beta_a.tolist(),
            "mu": self.mu.tolist(),
            "membership": self.membership.astype(int).tolist(),
            "config": self.config.to_json() if self.config else None,
        }


def generate(cfg: SynthConfig) -> Tuple[Dataset, SynthTruth]:
    """Generate one dataset plus its ground truth.

    Raises CoverageCalibrationFailure if no box placement reaches the target
    coverage within tolerance after MAX_PLACEMENT_ATTEMPTS tries.
    """
    rng = np.random.default_rng(cfg.seed)
    n, d = cfg.n, cfg.d
    beta_y = rng.uniform(-1.0, 1.0, d)
    beta_a = rng.uniform(-1.0, 1.0, d)
    mu = rng.uniform(-0.3, 0.3, d)
    if cfg.n_relevant is not None:
        # Tail features become pure noise: no target or attribute loading,
        # no demographic shift. The full-length draws above keep the random
        # stream identical to the all-relevant configuration.
        beta_y[cfg.n_relevant:] = 0.0
        beta_a[cfg.n_relevant:] = 0.0
        mu[cfg.n_relevant:] = 0.0
    X = rng.uniform(0.0, 1.0, (n, d))

    if cfg.setting == "observational":
        p1 = expit(X @ beta_a)
    else:
        p1 = np.full(n, 0.5)
    A = (rng.random(n) < p1).astype(np.int8)

    shifted = cfg.setting in ("demographic", "full-mediation-control")
    if shifted:
        X = X + A[:, None] * mu[None, :]

    length = float(np.sqrt(cfg.target_coverage))
    n_placeable = d if cfg.n_relevant is None else cfg.n_relevant
    s = None
    feats = bounds = None
    for _ in range(MAX_PLACEMENT_ATTEMPTS):
        cand_feats = rng.choice(n_placeable, size=2, replace=False)
        lo = rng.uniform(0.0, 1.0 - length, size=2)
        hi = lo + length
        cand = np.ones(n, dtype=bool)
        for k in range(2):
            col = X[:, cand_feats[k]]
            cand &= (col > lo[k]) & (col < hi[k])
        cov = float(cand.mean())
        if abs(cov - cfg.target_coverage) <= cfg.coverage_tol:
            s = cand
            feats = (int(cand_feats[0]), int(cand_feats[1]))
            bounds = ((float(lo[0]), float(hi[0])), (float(lo[1]), float(hi[1])))
            break
    if s is None:
        raise CoverageCalibrationFailure(
            f"no subgroup placement reached coverage "
            f"{cfg.target_coverage} +/- {cfg.coverage_tol} in "
            f"{MAX_PLACEMENT_ATTEMPTS} attempts"
        )

    if cfg.setting == "full-mediation-control":
        effect_in, effect_out = 0.0, 0.0
    elif cfg.setting == "null-effect-control":
        effect_in, effect_out = cfg.eta, cfg.eta
    else:
        effect_in, effect_out = cfg.tau, cfg.eta
    true_effect = np.where(s, effect_in, effect_out)
    sign = np.where(A == 1, 0.5, -0.5)
    noise = rng.normal(0.0, np.sqrt(cfg.sigma2), n)
    y = X @ beta_y + sign * true_effect + noise

    ds = from_arrays(
        X,
        A,
        y,
        target_kind="continuous",
        scale=cfg.scale,
        truth_membership=s.astype(np.int8),
        truth_effect=true_effect,
    )
    truth = SynthTruth(
        setting=cfg.setting,
        subgroup_features=feats,
        bounds=bounds,
        coverage=float(s.mean()),
        effect_inside=effect_in,
        effect_outside=effect_out,
        beta_y=beta_y,
        beta_a=beta_a,
        mu=mu,
        membership=s.astype(np.int8),
        config=cfg,
    )
    return ds, truth


def generate_full_mediation(cfg: SynthConfig) -> Tuple[Dataset, SynthTruth]:
    """Mediation-only control: same draws as ``demographic``, no direct effect."""
    from dataclasses import replace

    return generate(replace(cfg, setting="full-mediation-control"))


def dataset_schema(d: int) -> list:
    """Schema of the CSV emitted by write_outputs."""
    cols = [ColumnSchema(f"x{j}", "numeric") for j in range(d)]
    cols.append(ColumnSchema("a", "binary-attribute"))
    cols.append(ColumnSchema("y", "target-continuous"))
    cols.append(ColumnSchema("truth_membership", "truth-membership"))
    cols.append(ColumnSchema("truth_effect", "truth-effect"))
    return cols


def write_outputs(ds: Dataset, truth: SynthTruth, outdir) -> dict:
    """Write data.csv, schema.json, and truth.json into outdir.

    The CSV holds original-unit features plus the reserved truth columns, in
    the same format load_csv reads back. Returns the written paths.
    """
    import json
    import os

    os.makedirs(outdir, exist_ok=True)
    d = ds.d
    csv_path = os.path.join(outdir, "data.csv")
    with open(csv_path, "w") as fh:
        header = [f"x{j}" for j in range(d)] + [
            "a", "y", "truth_membership", "truth_effect",
        ]
        fh.write(",".join(header) + "\n")
        for i in range(ds.n):
            row = [repr(float(v)) for v in ds.features_raw[i]]
            row.append(str(int(ds.attribute[i])))
            row.append(repr(float(ds.target[i])))
            row.append(str(int(ds.truth_membership[i])))
            row.append(repr(float(ds.truth_effect[i])))
            fh.write(",".join(row) + "\n")

    schema_path = os.path.join(outdir, "schema.json")
    with open(schema_path, "w") as fh:
        json.dump(schema_to_json(dataset_schema(d)), fh, indent=2, sort_keys=True)
        fh.write("\n")

    truth_path = os.path.join(outdir, "truth.json")
    with open(truth_path, "w") as fh:
        json.dump(truth.to_json(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    return {"data": csv_path, "schema": schema_path, "truth": truth_path}
