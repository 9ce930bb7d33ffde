"""Multinomial logistic-regression probes over variable subsets.

The probe is a softmax regression with an L2 penalty, fitted by full-batch
gradient descent. The penalty strength is picked by stratified k-fold
cross-validation and the per-fold held-out accuracies at the chosen strength
are reported.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np
from scipy.special import log_softmax, softmax

from .classifier import SUBSETS, VariableAssignment, select_subset
from .errors import DegenerateLabelsError, DimensionError, EmptySubsetError, PolarisError
from .representation import RepresentationKind, RepresentationSet, as_matrix


def _default_grid():
    return tuple(float(v) for v in np.logspace(-4, 2, 10))


@dataclass(frozen=True)
class ProbeConfig:
    max_iter: int = 500
    l2_grid: tuple = field(default_factory=_default_grid)
    folds: int = 5
    seed: int = 0
    tol: float = 1e-6

    def __post_init__(self):
        object.__setattr__(self, "l2_grid", tuple(float(v) for v in self.l2_grid))
        if self.folds < 2:
            raise ValueError("folds must be >= 2")
        if not self.l2_grid:
            raise ValueError("l2_grid must not be empty")
        if any(v < 0 for v in self.l2_grid):
            raise ValueError("regularisation strengths must be >= 0")


@dataclass(frozen=True)
class ProbeResult:
    subset: str
    accuracy: float
    fold_accuracies: tuple
    l2: float
    baseline: float
    iterations: int
    n_examples: int
    dims: int

    def to_dict(self) -> dict:
        d = asdict(self)
        d["fold_accuracies"] = list(self.fold_accuracies)
        return d


def random_baseline(labels) -> float:
    """Accuracy of a classifier picking uniformly among the observed labels."""
    classes = np.unique(np.asarray(labels))
    if classes.size < 1:
        raise DegenerateLabelsError("no labels")
    return 1.0 / classes.size


def stratified_folds(labels: np.ndarray, folds: int, seed: int) -> np.ndarray:
    """Fold id per example; each class is shuffled and dealt round-robin."""
    rng = np.random.default_rng(seed)
    fold = np.empty(labels.size, dtype=np.intp)
    offset = 0
    for c in np.unique(labels):
        idx = np.flatnonzero(labels == c)
        idx = idx[rng.permutation(idx.size)]
        fold[idx] = (np.arange(idx.size) + offset) % folds
        offset += idx.size
    return fold


def fit_softmax(X: np.ndarray, y: np.ndarray, n_classes: int, l2: float, max_iter: int, tol: float, W0=None):
    """Gradient descent on mean cross-entropy + l2/2 * ||W||^2 (bias unpenalised).

    The fixed step is the inverse of a Lipschitz bound on the gradient.
    Returns (weights with bias row appended, iterations used).
    """
    n, d = X.shape
    Xb = np.hstack([X, np.ones((n, 1))])
    Y = np.zeros((n, n_classes))
    Y[np.arange(n), y] = 1.0
    lipschitz = 0.5 * np.linalg.norm(Xb, 2) ** 2 / n + l2
    step = 1.0 / lipschitz
    W = np.zeros((d + 1, n_classes)) if W0 is None else W0.copy()
    penalty = np.ones((d + 1, 1))
    penalty[-1] = 0.0
    it = 0
    for it in range(1, max_iter + 1):
        P = softmax(Xb @ W, axis=1)
        grad = Xb.T @ (P - Y) / n + l2 * penalty * W
        if np.linalg.norm(grad) < tol:
            break
        W -= step * grad
    return W, it


def _predict(W: np.ndarray, X: np.ndarray) -> np.ndarray:
    return np.argmax(np.hstack([X, np.ones((X.shape[0], 1))]) @ W, axis=1)


def _standardise(train: np.ndarray, test: np.ndarray):
    mu = train.mean(axis=0)
    sd = train.std(axis=0)
    sd[sd == 0] = 1.0
    return (train - mu) / sd, (test - mu) / sd


def train_probe(features, labels, config: ProbeConfig = ProbeConfig(), subset: str = "custom") -> ProbeResult:
    if np.asarray(features).ndim == 2 and np.asarray(features).shape[1] == 0:
        raise EmptySubsetError("probe features have no columns")
    features = as_matrix(features, "features")
    labels = np.asarray(labels).ravel()
    if labels.size != features.shape[0]:
        raise DimensionError(f"{features.shape[0]} feature rows but {labels.size} labels")
    classes, y = np.unique(labels, return_inverse=True)
    if classes.size < 2:
        raise DegenerateLabelsError("probe needs at least 2 classes")
    fold = stratified_folds(y, config.folds, config.seed)
    # accuracy[g, f]: l2 grid point g, fold f; grid swept from strongest penalty down with warm starts
    order = np.argsort(config.l2_grid)[::-1]
    acc = np.zeros((len(config.l2_grid), config.folds))
    iters = np.zeros_like(acc, dtype=int)
    for f in range(config.folds):
        train_idx, test_idx = fold != f, fold == f
        Xtr, Xte = _standardise(features[train_idx], features[test_idx])
        W = None
        for g in order:
            W, it = fit_softmax(Xtr, y[train_idx], classes.size, config.l2_grid[g], config.max_iter, config.tol, W)
            acc[g, f] = np.mean(_predict(W, Xte) == y[test_idx])
            iters[g, f] = it
    mean_acc = acc.mean(axis=1)
    best = max(mean_acc)
    # ties go to the smallest penalty
    g = min((i for i in range(len(mean_acc)) if mean_acc[i] == best), key=lambda i: config.l2_grid[i])
    return ProbeResult(
        subset=subset,
        accuracy=float(mean_acc[g]),
        fold_accuracies=tuple(float(a) for a in acc[g]),
        l2=config.l2_grid[g],
        baseline=1.0 / classes.size,
        iterations=int(iters[g].max()),
        n_examples=int(features.shape[0]),
        dims=int(features.shape[1]),
    )


@dataclass(frozen=True)
class ProbeSweep:
    results: list
    skipped: dict

    def to_dict(self) -> dict:
        return {"format_version": 1, "results": [r.to_dict() for r in self.results], "skipped": dict(self.skipped)}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)

    def to_csv(self, vae_strength: Optional[float] = None) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["subset", "regularisation_strength_of_vae", "accuracy", "baseline"])
        strength = "" if vae_strength is None else f"{vae_strength:.17g}"
        for r in self.results:
            writer.writerow([r.subset, strength, f"{r.accuracy:.17g}", f"{r.baseline:.17g}"])
        return buf.getvalue()


def probe_all_subsets(
    rep: RepresentationSet,
    assignment: VariableAssignment,
    kind,
    labels,
    config: ProbeConfig = ProbeConfig(),
) -> ProbeSweep:
    """Probe every combination of variable types; empty or failing subsets are skipped with a reason."""
    matrix_kind = RepresentationKind(kind)
    results, skipped = [], {}
    for label, types in SUBSETS.items():
        try:
            features = select_subset(rep, assignment, types).matrix(matrix_kind)
            results.append(train_probe(features, labels, config, subset=label))
        except EmptySubsetError as exc:
            skipped[label] = f"empty subset: {exc}"
        except PolarisError as exc:
            skipped[label] = str(exc)
    return ProbeSweep(results=results, skipped=skipped)
