"""Gaussian total correlation, discretised mutual information and effective rank.

All information quantities are in nats.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Iterable, Optional

import numpy as np

from .classifier import VariableAssignment, select_subset, subset_label
from .errors import (
    DimensionError,
    DomainError,
    InsufficientDataError,
    SingularCovarianceError,
    UndefinedMetricError,
)
from .representation import RepresentationKind, RepresentationSet, as_matrix

DEFAULT_BINS = 20
JITTER_SCALE = 1e-10


def sample_covariance(matrix) -> np.ndarray:
    """Unbiased covariance of the columns, symmetrised."""
    matrix = as_matrix(matrix)
    if matrix.shape[0] < 2:
        raise InsufficientDataError("covariance needs at least 2 rows")
    centered = matrix - matrix.mean(axis=0)
    cov = centered.T @ centered / (matrix.shape[0] - 1)
    return (cov + cov.T) / 2


def _check_cov(cov) -> np.ndarray:
    cov = np.asarray(cov, dtype=np.float64)
    if cov.ndim != 2 or cov.shape[0] != cov.shape[1] or cov.shape[0] < 1:
        raise DimensionError(f"covariance must be square, got shape {cov.shape}")
    if not np.all(np.isfinite(cov)):
        raise DomainError("covariance contains non-finite values")
    if not np.allclose(cov, cov.T, rtol=1e-12, atol=0.0):
        raise DomainError("covariance is not symmetric")
    if np.any(np.diag(cov) <= 0):
        raise SingularCovarianceError("covariance has a non-positive diagonal entry")
    return cov


def _pd_logdet(cov: np.ndarray) -> tuple[np.ndarray, float]:
    """Cholesky log-determinant, jittering the diagonal once if needed.

    Returns the (possibly jittered) matrix and its log-determinant.
    """
    try:
        chol = np.linalg.cholesky(cov)
        return cov, 2.0 * float(np.sum(np.log(np.diag(chol))))
    except np.linalg.LinAlgError:
        pass
    jittered = cov + JITTER_SCALE * np.mean(np.diag(cov)) * np.eye(cov.shape[0])
    try:
        chol = np.linalg.cholesky(jittered)
    except np.linalg.LinAlgError:
        raise SingularCovarianceError("covariance is not positive definite") from None
    return jittered, 2.0 * float(np.sum(np.log(np.diag(chol))))


def gaussian_tc(cov) -> float:
    """Total correlation of a zero-mean Gaussian: half the gap between the
    log-product of the variances and the log-determinant."""
    cov, logdet = _pd_logdet(_check_cov(cov))
    return 0.5 * (float(np.sum(np.log(np.diag(cov)))) - logdet)


def gaussian_tc_raw(cov) -> float:
    """Same quantity through the full KL(N(0, cov) || N(0, diag(cov))) expression."""
    cov, logdet = _pd_logdet(_check_cov(cov))
    diag = np.diag(np.diag(cov))
    _, logdet_diag = np.linalg.slogdet(diag)
    trace = float(np.trace(np.linalg.solve(diag, cov)))
    return 0.5 * ((logdet_diag - logdet) + trace - cov.shape[0])


def discretise(column, bins: int = DEFAULT_BINS) -> np.ndarray:
    """Equal-width bin indices over ``[min, max]``; the maximum lands in the last bin."""
    if bins < 2:
        raise DomainError("need at least 2 bins")
    column = np.asarray(column, dtype=np.float64).ravel()
    if not np.all(np.isfinite(column)):
        raise DomainError("column contains non-finite values")
    lo, hi = column.min(), column.max()
    if hi == lo:
        return np.zeros(column.shape, dtype=np.intp)
    idx = np.floor((column - lo) / ((hi - lo) / bins)).astype(np.intp)
    return np.clip(idx, 0, bins - 1)


def pairwise_mi(x, y) -> float:
    """Plug-in mutual information of two discretised columns."""
    x = np.asarray(x, dtype=np.intp).ravel()
    y = np.asarray(y, dtype=np.intp).ravel()
    if x.shape != y.shape:
        raise DimensionError(f"length mismatch: {x.size} vs {y.size}")
    n = x.size
    if n < 1:
        raise DimensionError("need at least one sample")
    _, xi = np.unique(x, return_inverse=True)
    _, yi = np.unique(y, return_inverse=True)
    nx, ny = xi.max() + 1, yi.max() + 1
    joint = np.bincount(xi * ny + yi, minlength=nx * ny).reshape(nx, ny).astype(np.float64)
    rows = joint.sum(axis=1)
    cols = joint.sum(axis=0)
    i, j = np.nonzero(joint)
    nij = joint[i, j]
    terms = nij / n * np.log(n * nij / (rows[i] * cols[j]))
    # fsum is exactly rounded, so MI(x, y) == MI(y, x) bit for bit.
    return max(math.fsum(terms), 0.0)


def averaged_mi(matrix, bins: int = DEFAULT_BINS) -> float:
    """Mean pairwise MI over all ordered pairs of distinct columns."""
    matrix = as_matrix(matrix)
    k = matrix.shape[1]
    if k < 2:
        raise DomainError("averaged MI needs at least 2 columns")
    binned = [discretise(matrix[:, j], bins) for j in range(k)]
    total = 0.0
    for i in range(k):
        for j in range(i + 1, k):
            total += pairwise_mi(binned[i], binned[j])
    return 2.0 * total / (k * k - k)


def effective_rank(matrix) -> float:
    """exp of the entropy of the normalised singular values of the column-centred data."""
    matrix = as_matrix(matrix)
    if matrix.shape[0] < 2:
        raise InsufficientDataError("effective rank needs at least 2 rows")
    centered = matrix - matrix.mean(axis=0)
    try:
        s = np.linalg.svd(centered, compute_uv=False)
    except np.linalg.LinAlgError as exc:
        raise ArithmeticError(f"SVD failed: {exc}") from exc
    total = s.sum()
    if total <= 0:
        return 1.0
    p = s / total
    p = p[p > 0]
    erank = math.exp(-float(np.sum(p * np.log(p))))
    return min(max(erank, 1.0), float(min(matrix.shape)))


@dataclass(frozen=True)
class MetricReport:
    kind: str
    subset: str
    tc: Optional[float]
    mi_avg: Optional[float]
    erank: Optional[float]
    n_examples: int
    dims: int
    bins: int
    assignment_digest: str

    def to_dict(self) -> dict:
        d = asdict(self)
        d["tc_nats"] = d.pop("tc")
        d["mi_avg_nats"] = d.pop("mi_avg")
        return d


def metric_report(
    rep: RepresentationSet,
    assignment: VariableAssignment,
    kind,
    subset: Iterable,
    bins: int = DEFAULT_BINS,
) -> MetricReport:
    """TC, averaged MI and (for the full subset only) effective rank of one
    representation kind restricted to the variables of the given types."""
    kind = RepresentationKind(kind)
    if kind is RepresentationKind.VARIANCE:
        raise DomainError("metrics are defined on mean and sampled representations only")
    subset = frozenset(subset)
    label = subset_label(subset)
    data = select_subset(rep, assignment, subset).matrix(kind)
    n, dims = data.shape
    erank = effective_rank(data) if label == "full" else None
    base = dict(
        kind=kind.value, subset=label, erank=erank, n_examples=n, dims=dims, bins=bins,
        assignment_digest=assignment.digest(),
    )
    if dims < 2:
        raise UndefinedMetricError(
            f"TC and MI need at least 2 dimensions, subset {label!r} has {dims}",
            partial=MetricReport(tc=None, mi_avg=None, **base),
        )
    return MetricReport(tc=gaussian_tc(sample_covariance(data)), mi_avg=averaged_mi(data, bins), **base)
