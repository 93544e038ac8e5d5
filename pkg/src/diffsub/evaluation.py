"""Recovery and effect-estimation metrics, plus the benchmark grid runner.

Recovery compares predicted subgroup membership against planted truth with
F1/accuracy/precision/recall. Effect metrics report the in-subgroup group
contrast tau_hat and its in-subgroup PEHE, sqrt(mean (tau_hat - true_effect_i)^2)
over the selected rows. The benchmark runner crosses settings x effect sizes
x replicates, each cell fully determined by its derived seed, and writes one
CSV row per cell.
"""

from __future__ import annotations

import csv
import json
import logging
import signal
import time
from dataclasses import dataclass, field, replace
from typing import List, Optional, Sequence

import numpy as np

from .data import Dataset
from .errors import (
    EmptySubgroupInGroup,
    LengthMismatch,
    MissingTruth,
    SchemaMismatch,
)
from .synthgen import SETTINGS, SynthConfig, generate
from .trainer import TrainConfig, train_restarts

log = logging.getLogger("diffsub")

CSV_COLUMNS = (
    "setting", "tau", "replicate",
    "f1", "accuracy", "precision", "recall",
    "tau_hat", "pehe", "runtime_s",
)

DEFAULT_CELL_TIMEOUT = 600.0


@dataclass(frozen=True)
class RecoveryMetrics:
    """Confusion counts and derived scores for membership recovery.

    Scores with a zero denominator are reported as 0 and flagged in
    ``undefined`` (e.g. precision when nothing was selected).
    """

    tp: int
    fp: int
    tn: int
    fn: int
    f1: float
    accuracy: float
    precision: float
    recall: float
    undefined: tuple = ()

    def to_json(self) -> dict:
        return {
            "tp": self.tp, "fp": self.fp, "tn": self.tn, "fn": self.fn,
            "f1": self.f1, "accuracy": self.accuracy,
            "precision": self.precision, "recall": self.recall,
            "undefined": list(self.undefined),
        }


def recovery(pred, truth) -> RecoveryMetrics:
    """Score predicted 0/1 membership against true 0/1 membership."""
    pred = np.asarray(pred)
    truth = np.asarray(truth)
    if pred.shape != truth.shape or pred.ndim != 1:
        raise LengthMismatch(
            f"membership vectors must be 1-d and equal length, "
            f"got {pred.shape} vs {truth.shape}"
        )
    p = pred.astype(bool)
    t = truth.astype(bool)
    tp = int(np.sum(p & t))
    fp = int(np.sum(p & ~t))
    tn = int(np.sum(~p & ~t))
    fn = int(np.sum(~p & t))
    undefined = []

    def ratio(num, den, name):
        if den == 0:
            undefined.append(name)
            return 0.0
        return num / den

    f1 = ratio(2 * tp, 2 * tp + fp + fn, "f1")
    accuracy = ratio(tp + tn, tp + fp + tn + fn, "accuracy")
    precision = ratio(tp, tp + fp, "precision")
    rec = ratio(tp, tp + fn, "recall")
    return RecoveryMetrics(
        tp=tp, fp=fp, tn=tn, fn=fn,
        f1=f1, accuracy=accuracy, precision=precision, recall=rec,
        undefined=tuple(undefined),
    )


@dataclass(frozen=True)
class EffectMetrics:
    """In-subgroup group contrast and its error against planted effects."""

    tau_hat: float
    pehe: float
    n_in0: int
    n_in1: int

    def to_json(self) -> dict:
        return {
            "tau_hat": self.tau_hat, "pehe": self.pehe,
            "n_in0": self.n_in0, "n_in1": self.n_in1,
        }


def effect_metrics(ds: Dataset, membership) -> EffectMetrics:
    """Effect metrics for the rows selected by a 0/1 membership vector.

    tau_hat is the difference of in-subgroup group means of the target; PEHE
    is sqrt(mean over selected rows of (tau_hat - true_effect_i)^2) against
    the dataset's planted per-row effects. Raises MissingTruth without a
    truth-effect column and EmptySubgroupInGroup when a group has no
    selected rows.
    """
    member = np.asarray(membership)
    if member.shape != (ds.n,):
        raise LengthMismatch(
            f"membership length {member.shape} does not match {ds.n} rows"
        )
    if ds.truth_effect is None:
        raise MissingTruth("dataset has no truth-effect column")
    member = member.astype(bool)
    is1 = ds.attribute == 1
    in0 = member & ~is1
    in1 = member & is1
    n_in0, n_in1 = int(in0.sum()), int(in1.sum())
    if n_in0 == 0 or n_in1 == 0:
        raise EmptySubgroupInGroup(
            f"subgroup has {n_in0} members in group 0 and {n_in1} in group 1"
        )
    tau_hat = float(ds.target[in1].mean() - ds.target[in0].mean())
    err = tau_hat - ds.truth_effect[member]
    pehe = float(np.sqrt(np.mean(err**2)))
    return EffectMetrics(tau_hat=tau_hat, pehe=pehe, n_in0=n_in0, n_in1=n_in1)


@dataclass(frozen=True)
class BenchmarkGrid:
    """Grid definition: settings x effect sizes x replicates."""

    settings: Sequence[str] = ("randomized",)
    taus: Sequence[float] = (1.5, 2.0, 2.5, 3.0, 3.5, 4.0)
    replicates: int = 10
    n: int = 2000
    d: int = 5
    eta: float = 1.0
    sigma2: float = 0.5
    target_coverage: float = 0.3
    coverage_tol: float = 0.05
    seed: int = 0
    cell_timeout: float = DEFAULT_CELL_TIMEOUT
    train: TrainConfig = field(default_factory=TrainConfig)

    def __post_init__(self):
        for s in self.settings:
            if s not in SETTINGS:
                raise SchemaMismatch(f"unknown setting {s!r} in benchmark grid")
        if self.replicates < 1:
            raise SchemaMismatch("replicates must be >= 1")

    @classmethod
    def from_json(cls, obj) -> "BenchmarkGrid":
        if isinstance(obj, (str, bytes)):
            obj = json.loads(obj)
        if not isinstance(obj, dict):
            raise SchemaMismatch("benchmark grid JSON must be an object")
        obj = dict(obj)
        train = TrainConfig.from_dict(obj.pop("train", {}))
        known = {
            "settings", "taus", "replicates", "n", "d", "eta", "sigma2",
            "target_coverage", "coverage_tol", "seed", "cell_timeout",
        }
        extra = set(obj) - known
        if extra:
            raise SchemaMismatch(f"unknown benchmark grid keys: {sorted(extra)}")
        kwargs = {k: obj[k] for k in known if k in obj}
        if "settings" in kwargs:
            kwargs["settings"] = tuple(kwargs["settings"])
        if "taus" in kwargs:
            kwargs["taus"] = tuple(float(t) for t in kwargs["taus"])
        return cls(train=train, **kwargs)

    def to_json(self) -> dict:
        return {
            "settings": list(self.settings),
            "taus": list(self.taus),
            "replicates": self.replicates,
            "n": self.n,
            "d": self.d,
            "eta": self.eta,
            "sigma2": self.sigma2,
            "target_coverage": self.target_coverage,
            "coverage_tol": self.coverage_tol,
            "seed": self.seed,
            "cell_timeout": self.cell_timeout,
            "train": self.train.to_json(),
        }

    def cells(self) -> List[dict]:
        out = []
        n_taus = len(self.taus)
        for si, setting in enumerate(self.settings):
            for ti, tau in enumerate(self.taus):
                for rep in range(self.replicates):
                    seed = self.seed + rep + self.replicates * (ti + n_taus * si)
                    out.append({
                        "setting": setting, "tau": float(tau),
                        "replicate": rep, "seed": seed,
                    })
        return out


def run_cell(grid: BenchmarkGrid, cell: dict) -> dict:
    """Run one benchmark cell; returns a CSV-ready row dict."""
    start = time.perf_counter()
    synth = SynthConfig(
        setting=cell["setting"],
        n=grid.n,
        d=grid.d,
        tau=cell["tau"],
        eta=grid.eta,
        sigma2=grid.sigma2,
        target_coverage=grid.target_coverage,
        coverage_tol=grid.coverage_tol,
        seed=cell["seed"],
    )
    ds, truth = generate(synth)
    cfg = replace(grid.train, seed=cell["seed"])
    report = train_restarts(ds, cfg)
    pred = report.rule.membership(ds.features)
    rec = recovery(pred, ds.truth_membership)
    row = {
        "setting": cell["setting"],
        "tau": cell["tau"],
        "replicate": cell["replicate"],
        "f1": rec.f1,
        "accuracy": rec.accuracy,
        "precision": rec.precision,
        "recall": rec.recall,
        "tau_hat": "",
        "pehe": "",
        "runtime_s": 0.0,
    }
    try:
        eff = effect_metrics(ds, pred)
        row["tau_hat"] = eff.tau_hat
        row["pehe"] = eff.pehe
    except EmptySubgroupInGroup:
        pass
    row["runtime_s"] = time.perf_counter() - start
    return row


class _CellTimeout(Exception):
    pass


def _run_with_alarm(fn, timeout: float):
    """Run fn() with a SIGALRM deadline (sequential mode only)."""

    def handler(signum, frame):
        raise _CellTimeout()

    old = signal.signal(signal.SIGALRM, handler)
    signal.setitimer(signal.ITIMER_REAL, timeout)
    try:
        return fn()
    finally:
        signal.setitimer(signal.ITIMER_REAL, 0.0)
        signal.signal(signal.SIGALRM, old)


def benchmark(grid: BenchmarkGrid, out_csv, workers: int = 1):
    """Run the whole grid and write one row per cell to out_csv.

    Cells are independent and fully seeded, so results are identical whether
    run sequentially or across worker processes. Failed or timed-out cells
    keep their identity columns, leave metric fields empty, and are reported
    in the returned failures list (also written next to the CSV).
    """
    cells = grid.cells()
    rows: List[Optional[dict]] = [None] * len(cells)
    failures: List[dict] = []

    def failure_row(cell, reason):
        failures.append({
            "setting": cell["setting"], "tau": cell["tau"],
            "replicate": cell["replicate"], "reason": reason,
        })
        return {
            "setting": cell["setting"], "tau": cell["tau"],
            "replicate": cell["replicate"],
            "f1": "", "accuracy": "", "precision": "", "recall": "",
            "tau_hat": "", "pehe": "", "runtime_s": "",
        }

    if workers <= 1:
        for i, cell in enumerate(cells):
            try:
                rows[i] = _run_with_alarm(
                    lambda c=cell: run_cell(grid, c), grid.cell_timeout
                )
            except _CellTimeout:
                log.warning("cell %s timed out after %.0fs", cell, grid.cell_timeout)
                rows[i] = failure_row(cell, f"timeout after {grid.cell_timeout}s")
            except Exception as exc:
                log.warning("cell %s failed: %s", cell, exc)
                rows[i] = failure_row(cell, f"{type(exc).__name__}: {exc}")
    else:
        from concurrent.futures import ProcessPoolExecutor, TimeoutError as FutTimeout

        waves = int(np.ceil(len(cells) / workers))
        with ProcessPoolExecutor(max_workers=workers) as ex:
            futs = {i: ex.submit(run_cell, grid, cell) for i, cell in enumerate(cells)}
            for i, cell in enumerate(cells):
                try:
                    # generous bound: a queued cell waits for earlier waves
                    rows[i] = futs[i].result(timeout=grid.cell_timeout * waves)
                except FutTimeout:
                    rows[i] = failure_row(cell, f"timeout after {grid.cell_timeout}s")
                except Exception as exc:
                    rows[i] = failure_row(cell, f"{type(exc).__name__}: {exc}")

    with open(out_csv, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(CSV_COLUMNS))
        writer.writeheader()
        for row in rows:
            writer.writerow(row)
    if failures:
        fail_path = str(out_csv) + ".failures.json"
        with open(fail_path, "w") as fh:
            json.dump(failures, fh, indent=2, sort_keys=True)
            fh.write("\n")
    return rows, failures


def summarize(rows: List[dict]) -> List[dict]:
    """Mean and standard error of each metric per (setting, tau) cell group."""
    groups = {}
    for row in rows:
        key = (row["setting"], row["tau"])
        groups.setdefault(key, []).append(row)
    out = []
    for (setting, tau), grp in sorted(groups.items()):
        entry = {"setting": setting, "tau": tau, "replicates": len(grp)}
        for metric in ("f1", "accuracy", "precision", "recall", "tau_hat", "pehe"):
            vals = np.array([
                float(r[metric]) for r in grp
                if r[metric] != "" and r[metric] is not None
            ])
            if vals.size:
                entry[f"{metric}_mean"] = float(vals.mean())
                entry[f"{metric}_se"] = (
                    float(vals.std(ddof=1) / np.sqrt(vals.size)) if vals.size > 1 else 0.0
                )
            else:
                entry[f"{metric}_mean"] = None
                entry[f"{metric}_se"] = None
        out.append(entry)
    return out
