"""Correlation dynamics of the mean representation across training snapshots."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import DomainError, InsufficientDataError
from .representation import as_matrix
from .vae import extract_representations, load_model

DEGENERATE_VARIANCE = 1e-12
DEFAULT_THRESHOLD = 0.2


def correlation_matrix(matrix) -> np.ndarray:
    """Pearson correlations between columns.

    Columns with variance below 1e-12 correlate 0 with everything else; the
    diagonal is always 1.
    """
    matrix = as_matrix(matrix)
    if matrix.shape[0] < 3:
        raise InsufficientDataError("correlation needs at least 3 rows")
    centered = matrix - matrix.mean(axis=0)
    var = np.einsum("ij,ij->j", centered, centered) / (matrix.shape[0] - 1)
    ok = var >= DEGENERATE_VARIANCE
    sd = np.where(ok, np.sqrt(np.where(ok, var, 1.0)), 1.0)
    z = centered / sd
    corr = z.T @ z / (matrix.shape[0] - 1)
    corr = (corr + corr.T) / 2
    corr[~ok, :] = 0.0
    corr[:, ~ok] = 0.0
    np.clip(corr, -1.0, 1.0, out=corr)
    np.fill_diagonal(corr, 1.0)
    return corr


def degenerate_columns(matrix) -> list:
    matrix = as_matrix(matrix)
    return [int(j) for j in np.flatnonzero(matrix.var(axis=0, ddof=1) < DEGENERATE_VARIANCE)]


@dataclass(frozen=True)
class CorrelationSeries:
    steps: tuple
    matrices: tuple
    threshold: float = DEFAULT_THRESHOLD

    def __post_init__(self):
        steps = tuple(int(s) for s in self.steps)
        mats = tuple(np.asarray(m, dtype=np.float64) for m in self.matrices)
        if len(steps) != len(mats):
            raise DomainError("one correlation matrix per step is required")
        if any(b <= a for a, b in zip(steps, steps[1:])):
            raise DomainError("steps must be strictly increasing")
        if len({m.shape for m in mats}) > 1:
            raise DomainError("all correlation matrices must share a shape")
        object.__setattr__(self, "steps", steps)
        object.__setattr__(self, "matrices", mats)

    @property
    def dims(self) -> int:
        return self.matrices[0].shape[0] if self.matrices else 0

    @classmethod
    def from_representations(cls, steps, reps, threshold: float = DEFAULT_THRESHOLD) -> "CorrelationSeries":
        return cls(tuple(steps), tuple(correlation_matrix(r.mean) for r in reps), threshold)

    def to_csv(self) -> str:
        """Long format: one row per (step, i, j)."""
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["step", "i", "j", "corr"])
        for step, m in zip(self.steps, self.matrices):
            for i in range(m.shape[0]):
                for j in range(m.shape[1]):
                    writer.writerow([step, i, j, f"{m[i, j]:.17g}"])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, threshold: float = DEFAULT_THRESHOLD) -> "CorrelationSeries":
        rows = list(csv.DictReader(io.StringIO(text)))
        steps = sorted({int(r["step"]) for r in rows})
        d = max(int(r["i"]) for r in rows) + 1
        pos = {s: k for k, s in enumerate(steps)}
        mats = np.zeros((len(steps), d, d))
        for r in rows:
            mats[pos[int(r["step"])], int(r["i"]), int(r["j"])] = float(r["corr"])
        return cls(tuple(steps), tuple(mats), threshold)


def count_exceedances(series: CorrelationSeries, threshold: Optional[float] = None) -> np.ndarray:
    """Per dimension, the number of snapshots where its largest off-diagonal
    |correlation| is strictly above ``threshold``."""
    threshold = series.threshold if threshold is None else threshold
    if not (0.0 < threshold < 1.0):
        raise DomainError("threshold must lie in (0, 1)")
    counts = np.zeros(series.dims, dtype=np.int64)
    for m in series.matrices:
        off = np.abs(m).copy()
        np.fill_diagonal(off, 0.0)
        counts += off.max(axis=1) > threshold
    return counts


def correlation_timeseries(series: CorrelationSeries, dim: int) -> np.ndarray:
    """Rows ordered by step; row k holds corr(dim, other) for every other dimension."""
    if not (0 <= dim < series.dims):
        raise IndexError(f"dimension {dim} out of range for {series.dims} dims")
    keep = [j for j in range(series.dims) if j != dim]
    return np.array([m[dim, keep] for m in series.matrices])


def exceedance_json(series: CorrelationSeries, counts: np.ndarray, types=None) -> str:
    payload = {
        "format_version": 1,
        "threshold": series.threshold,
        "n_snapshots": len(series.steps),
        "counts": [int(c) for c in counts],
    }
    if types is not None:
        payload["types"] = [getattr(t, "value", t) for t in types]
    return json.dumps(payload, sort_keys=True, indent=2)


@dataclass(frozen=True)
class SnapshotSeries:
    steps: tuple
    reps: tuple

    def __post_init__(self):
        if len(self.steps) != len(self.reps):
            raise DomainError("one representation set per step is required")
        if any(b <= a for a, b in zip(self.steps, self.steps[1:])):
            raise DomainError("steps must be strictly increasing")
        if len({(r.n_examples, r.dims) for r in self.reps}) > 1:
            raise DomainError("all snapshots must share (rows, cols)")

    def correlations(self, threshold: float = DEFAULT_THRESHOLD) -> CorrelationSeries:
        return CorrelationSeries.from_representations(self.steps, self.reps, threshold)


def snapshot_series(model_paths, dataset, eval_seed: int, n_examples: Optional[int] = None) -> SnapshotSeries:
    """Load snapshots in step order and extract representations with one fixed
    evaluation batch and one fixed noise draw."""
    models = sorted((load_model(p) for p in model_paths), key=lambda m: m.step)
    return SnapshotSeries(
        steps=tuple(m.step for m in models),
        reps=tuple(extract_representations(m, dataset, n_examples, eval_seed) for m in models),
    )


def load_snapshot_paths(directory) -> list:
    return sorted(Path(directory).glob("*.vaes"))
