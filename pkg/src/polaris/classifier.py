"""Active / passive / mixed typing of latent dimensions from the variance representation."""

from __future__ import annotations

import enum
import hashlib
import json
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .errors import DomainError, EmptySubsetError
from .representation import RepresentationSet, as_matrix, column_stats


class VariableType(str, enum.Enum):
    ACTIVE = "active"
    PASSIVE = "passive"
    MIXED = "mixed"


ALL_TYPES = frozenset(VariableType)

# Subset labels used in reports, in the order they are swept.
SUBSETS = {
    "full": frozenset(VariableType),
    "active": frozenset({VariableType.ACTIVE}),
    "mixed": frozenset({VariableType.MIXED}),
    "passive": frozenset({VariableType.PASSIVE}),
    "active+mixed": frozenset({VariableType.ACTIVE, VariableType.MIXED}),
    "active+passive": frozenset({VariableType.ACTIVE, VariableType.PASSIVE}),
    "mixed+passive": frozenset({VariableType.MIXED, VariableType.PASSIVE}),
}


def subset_types(label: str) -> frozenset:
    try:
        return SUBSETS[label]
    except KeyError:
        raise DomainError(f"unknown subset {label!r}; expected one of {list(SUBSETS)}") from None


def subset_label(types: Iterable) -> str:
    types = frozenset(VariableType(t) for t in types)
    for label, members in SUBSETS.items():
        if members == types:
            return label
    return "custom"


@dataclass(frozen=True)
class ClassifierConfig:
    alpha: float = 0.1

    def __post_init__(self):
        if not (0.0 <= self.alpha < 0.5):
            raise DomainError(f"alpha must lie in [0, 0.5), got {self.alpha}")


@dataclass(frozen=True)
class DimRecord:
    index: int
    type: VariableType
    sigma_mean: float
    sigma_var: float


def _type_for(sigma_mean: float, sigma_var: float, alpha: float) -> VariableType:
    if sigma_var <= alpha:
        if abs(sigma_mean - 1.0) <= alpha:
            return VariableType.PASSIVE
        if abs(sigma_mean) <= alpha:
            return VariableType.ACTIVE
    return VariableType.MIXED


@dataclass(frozen=True)
class VariableAssignment:
    dims: tuple
    alpha: float

    def __post_init__(self):
        if len(self.dims) == 0:
            raise DomainError("an assignment needs at least one dimension")
        if [d.index for d in self.dims] != list(range(len(self.dims))):
            raise DomainError("dimension records must be indexed 0..d-1 in order")
        for d in self.dims:
            if _type_for(d.sigma_mean, d.sigma_var, self.alpha) is not d.type:
                raise DomainError(f"dimension {d.index} type {d.type.value} contradicts its statistics")

    def __len__(self):
        return len(self.dims)

    @property
    def types(self) -> list:
        return [d.type for d in self.dims]

    def indices(self, types: Iterable) -> list:
        wanted = {VariableType(t) for t in types}
        return [d.index for d in self.dims if d.type in wanted]

    def to_dict(self) -> dict:
        return {
            "alpha": self.alpha,
            "dims": [
                {"index": d.index, "type": d.type.value, "sigma_mean": d.sigma_mean, "sigma_var": d.sigma_var}
                for d in self.dims
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, data: dict) -> "VariableAssignment":
        dims = tuple(
            DimRecord(int(d["index"]), VariableType(d["type"]), float(d["sigma_mean"]), float(d["sigma_var"]))
            for d in data["dims"]
        )
        return cls(dims=dims, alpha=float(data["alpha"]))

    def digest(self) -> str:
        """SHA-256 of the canonical JSON form; reports cite it."""
        return hashlib.sha256(self.to_json().encode()).hexdigest()


def classify_variables(variance, config: ClassifierConfig = ClassifierConfig()) -> VariableAssignment:
    """Type each column of a variance representation.

    A column is passive when its mean is within ``alpha`` of 1, active when
    within ``alpha`` of 0, in both cases also requiring a variance of at most
    ``alpha``; everything else is mixed. Bands are closed.
    """
    variance = as_matrix(variance, "variance")
    if np.any(variance <= 0):
        raise DomainError("variance entries must be > 0")
    means, variances = column_stats(variance)
    dims = tuple(
        DimRecord(j, _type_for(float(m), float(v), config.alpha), float(m), float(v))
        for j, (m, v) in enumerate(zip(means, variances))
    )
    return VariableAssignment(dims=dims, alpha=config.alpha)


def select_subset(rep: RepresentationSet, assignment: VariableAssignment, types: Iterable) -> RepresentationSet:
    """Keep only the columns whose type is in ``types``, in their original order."""
    if len(assignment) != rep.dims:
        raise DomainError(f"assignment covers {len(assignment)} dims, representation has {rep.dims}")
    index = assignment.indices(types)
    if not index:
        raise EmptySubsetError(f"no dimensions of type {sorted(VariableType(t).value for t in types)}")
    return rep.columns(index)


def summarise_assignment(assignment: VariableAssignment) -> tuple[int, int, int]:
    """Counts of (active, passive, mixed) dimensions."""
    types = assignment.types
    return (
        types.count(VariableType.ACTIVE),
        types.count(VariableType.PASSIVE),
        types.count(VariableType.MIXED),
    )
