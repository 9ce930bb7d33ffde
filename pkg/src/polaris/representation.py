"""Representation matrices, their on-disk formats, and the reparameterisation identity.

Matrices are plain 2-D ``float64`` numpy arrays. Everything that accepts a
matrix runs it through :func:`as_matrix`, which enforces the shape and
finiteness contract.
"""

from __future__ import annotations

import csv
import enum
import io
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import DimensionError, DomainError, InsufficientDataError, ParseError

BINARY_MAGIC = b"RPRM"
BINARY_VERSION = 1
_HEADER = struct.Struct("<4sHII")


class RepresentationKind(str, enum.Enum):
    MEAN = "mean"
    SAMPLED = "sampled"
    VARIANCE = "variance"


def as_matrix(data, name: str = "matrix") -> np.ndarray:
    """Return ``data`` as a read-only, finite, non-empty 2-D float64 array."""
    arr = np.array(data, dtype=np.float64)
    if arr.ndim != 2:
        raise DimensionError(f"{name} must be 2-D, got shape {arr.shape}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise DimensionError(f"{name} must have at least one row and one column")
    if not np.all(np.isfinite(arr)):
        raise DomainError(f"{name} contains non-finite values")
    arr.flags.writeable = False
    return arr


def reparameterise(mean, variance, noise) -> np.ndarray:
    """Sampled representation ``mean + sqrt(variance) * noise``, elementwise."""
    mean = as_matrix(mean, "mean")
    variance = as_matrix(variance, "variance")
    noise = as_matrix(noise, "noise")
    if not (mean.shape == variance.shape == noise.shape):
        raise DimensionError(
            f"shape mismatch: mean {mean.shape}, variance {variance.shape}, noise {noise.shape}"
        )
    if np.any(variance <= 0):
        raise DomainError("variance entries must be > 0")
    out = mean + np.sqrt(variance) * noise
    out.flags.writeable = False
    return out


@dataclass(frozen=True)
class RepresentationSet:
    """Aligned mean, variance and sampled representations over a batch of examples.

    When ``noise`` is given, ``sampled`` must equal ``mean + noise * sqrt(variance)``
    bit for bit; this is checked on construction.
    """

    mean: np.ndarray
    variance: np.ndarray
    sampled: np.ndarray
    noise: Optional[np.ndarray] = None

    def __post_init__(self):
        for field in ("mean", "variance", "sampled", "noise"):
            value = getattr(self, field)
            if value is not None:
                object.__setattr__(self, field, as_matrix(value, field))
        shapes = {m.shape for m in self._matrices()}
        if len(shapes) != 1:
            raise DimensionError(f"representation matrices disagree in shape: {sorted(shapes)}")
        if np.any(self.variance <= 0):
            raise DomainError("variance entries must be > 0")
        if self.noise is not None:
            expected = self.mean + self.noise * np.sqrt(self.variance)
            if not np.array_equal(expected, self.sampled):
                raise DomainError("sampled != mean + noise * sqrt(variance)")

    def _matrices(self):
        return [m for m in (self.mean, self.variance, self.sampled, self.noise) if m is not None]

    @classmethod
    def from_noise(cls, mean, variance, noise) -> "RepresentationSet":
        return cls(mean=mean, variance=variance, sampled=reparameterise(mean, variance, noise), noise=noise)

    @property
    def n_examples(self) -> int:
        return self.mean.shape[0]

    @property
    def dims(self) -> int:
        return self.mean.shape[1]

    def matrix(self, kind) -> np.ndarray:
        return getattr(self, RepresentationKind(kind).value)

    def columns(self, index) -> "RepresentationSet":
        """Slice every matrix to the given column indices, keeping their order."""
        index = np.asarray(index, dtype=np.intp)

        def cut(m):
            return None if m is None else m[:, index]

        return RepresentationSet(cut(self.mean), cut(self.variance), cut(self.sampled), cut(self.noise))


def column_stats(matrix) -> tuple[np.ndarray, np.ndarray]:
    """Per-column mean and unbiased (n-1) variance."""
    matrix = as_matrix(matrix)
    if matrix.shape[0] < 2:
        raise InsufficientDataError("column statistics need at least 2 rows")
    return matrix.mean(axis=0), matrix.var(axis=0, ddof=1)


# -- matrix files -----------------------------------------------------------


def _format_from_path(path: Path, fmt: Optional[str]) -> str:
    if fmt is not None:
        if fmt not in ("csv", "binary"):
            raise ValueError(f"unknown matrix format {fmt!r}")
        return fmt
    return "csv" if path.suffix.lower() == ".csv" else "binary"


def save_matrix(matrix, path, fmt: Optional[str] = None) -> None:
    """Write a matrix as CSV (17 significant digits) or the ``RPRM`` binary format."""
    matrix = as_matrix(matrix)
    path = Path(path)
    fmt = _format_from_path(path, fmt)
    rows, cols = matrix.shape
    if fmt == "binary":
        payload = _HEADER.pack(BINARY_MAGIC, BINARY_VERSION, rows, cols)
        payload += np.ascontiguousarray(matrix, dtype="<f8").tobytes()
        path.write_bytes(payload)
        return
    buf = io.StringIO()
    buf.write(",".join(f"z{j}" for j in range(cols)) + "\n")
    for row in matrix:
        buf.write(",".join(f"{v:.17g}" for v in row) + "\n")
    with open(path, "w", newline="\n") as fh:
        fh.write(buf.getvalue())


def load_matrix(path, fmt: Optional[str] = None) -> np.ndarray:
    path = Path(path)
    fmt = _format_from_path(path, fmt)
    if fmt == "binary":
        return _load_binary(path.read_bytes())
    return _load_csv(path.read_text())


def _load_binary(raw: bytes) -> np.ndarray:
    if len(raw) < _HEADER.size:
        raise ParseError("binary matrix file is truncated")
    magic, version, rows, cols = _HEADER.unpack_from(raw)
    if magic != BINARY_MAGIC:
        raise ParseError(f"bad magic bytes {magic!r}")
    if version != BINARY_VERSION:
        raise ParseError(f"unsupported format version {version}")
    if rows < 1 or cols < 1:
        raise ParseError(f"degenerate matrix shape {rows}x{cols}")
    expected = _HEADER.size + 8 * rows * cols
    if len(raw) != expected:
        raise ParseError(f"payload length {len(raw)} does not match header ({expected})")
    data = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size).reshape(rows, cols)
    bad = np.argwhere(~np.isfinite(data))
    if len(bad):
        r, c = bad[0]
        raise ParseError("non-finite value", row=int(r), col=int(c))
    out = data.astype(np.float64)
    out.flags.writeable = False
    return out


def _load_csv(text: str) -> np.ndarray:
    lines = list(csv.reader(io.StringIO(text)))
    lines = [line for line in lines if line]
    if not lines:
        raise ParseError("empty CSV file")
    header, body = lines[0], lines[1:]
    if not body:
        raise ParseError("CSV file has a header but no rows")
    cols = len(header)
    data = np.empty((len(body), cols))
    for r, line in enumerate(body):
        if len(line) != cols:
            raise ParseError(f"expected {cols} cells, found {len(line)}", row=r)
        for c, cell in enumerate(line):
            try:
                value = float(cell)
            except ValueError:
                raise ParseError(f"non-numeric cell {cell!r}", row=r, col=c) from None
            if not np.isfinite(value):
                raise ParseError(f"non-finite cell {cell!r}", row=r, col=c)
            data[r, c] = value
    data.flags.writeable = False
    return data
