"""Plain-SGD training loop, training logs, and representation extraction."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from ..errors import DomainError, TrainingDivergedError
from ..representation import RepresentationSet
from .model import VaeModel, encode, save_model
from .objectives import ObjectiveConfig, gradients
from .toy import ToyDataset

LOG_HEADER = ("step", "total", "recon", "reg", "capacity")


@dataclass(frozen=True)
class LogRecord:
    step: int
    total: float
    recon: float
    reg: float
    capacity: float


@dataclass
class TrainLog:
    records: list = field(default_factory=list)
    snapshots: list = field(default_factory=list)

    def totals(self) -> np.ndarray:
        return np.array([r.total for r in self.records])

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(LOG_HEADER)
        for r in self.records:
            writer.writerow([r.step] + [f"{v:.17g}" for v in (r.total, r.recon, r.reg, r.capacity)])
        return buf.getvalue()


def _batches(rng, n: int, batch_size: int):
    """Endless stream of index batches; reshuffles every epoch, drops the tail."""
    while True:
        order = rng.permutation(n)
        for start in range(0, n - batch_size + 1, batch_size):
            yield order[start:start + batch_size]


def train(
    model: VaeModel,
    dataset: ToyDataset,
    config: ObjectiveConfig,
    steps: int,
    batch_size: int = 64,
    learning_rate: float = 1e-3,
    snapshot_every: Optional[int] = None,
    seed: int = 0,
    snapshot_dir=None,
    on_snapshot: Optional[Callable[[int, VaeModel], None]] = None,
    header: Optional[dict] = None,
) -> tuple[VaeModel, TrainLog]:
    """Run ``steps`` SGD updates on a copy of ``model``.

    Every ``snapshot_every`` steps the current parameters are written to
    ``snapshot_dir`` (when given) and passed to ``on_snapshot``. ``header``
    is merged into the JSON header of every snapshot file.
    """
    if batch_size < 1 or batch_size > dataset.n:
        raise DomainError(f"batch_size must lie in [1, {dataset.n}]")
    if steps < 0:
        raise DomainError("steps must be >= 0")
    if config.kind == "btc" and config.dataset_size is None:
        config = ObjectiveConfig(**{**config.to_dict(), "dataset_size": dataset.n})
    model = model.copy()
    model.meta["config"] = {"objective": config.to_dict(), **(header or {})}
    log = TrainLog()
    rng = np.random.default_rng(seed)
    batches = _batches(rng, dataset.n, batch_size)
    if snapshot_dir is not None:
        Path(snapshot_dir).mkdir(parents=True, exist_ok=True)
    start = model.step
    for step in range(start + 1, start + steps + 1):
        idx = next(batches)
        noise = rng.standard_normal((batch_size, model.arch.latent_dim))
        with np.errstate(over="ignore", invalid="ignore"):
            parts, grads = gradients(model, dataset.images[idx], config, step - 1, noise)
        if not np.isfinite(parts.total) or not all(np.all(np.isfinite(g)) for g in grads.values()):
            raise TrainingDivergedError(step)
        for name, g in grads.items():
            model.params[name] -= learning_rate * g
        model.step = step
        log.records.append(LogRecord(step, parts.total, parts.recon, parts.reg, parts.capacity))
        if snapshot_every and (step - start) % snapshot_every == 0:
            log.snapshots.append(step)
            if snapshot_dir is not None:
                save_model(model, Path(snapshot_dir) / snapshot_name(step))
            if on_snapshot is not None:
                on_snapshot(step, model)
    return model, log


def snapshot_name(step: int) -> str:
    return f"step_{step:08d}.vaes"


def extraction_indices(n_dataset: int, n_examples: int, seed: int) -> np.ndarray:
    """Example indices for extraction: a permutation prefix, or draws with
    replacement when more examples are requested than exist."""
    rng = np.random.default_rng(seed)
    if n_examples <= n_dataset:
        return rng.permutation(n_dataset)[:n_examples]
    return rng.integers(0, n_dataset, size=n_examples)


def extract_representations(
    model: VaeModel, dataset: ToyDataset, n_examples: Optional[int] = None, seed: int = 0, draws: int = 1
) -> RepresentationSet:
    """Encode ``n_examples`` dataset examples and draw ``draws`` noise vectors per example.

    With ``draws > 1`` each example's rows are repeated consecutively.
    """
    n_examples = dataset.n if n_examples is None else n_examples
    if n_examples < 1:
        raise DomainError("n_examples must be positive")
    if draws < 1:
        raise DomainError("draws must be positive")
    idx = extraction_indices(dataset.n, n_examples, seed)
    mean, variance = encode(model, dataset.images[idx])
    if draws > 1:
        mean, variance = np.repeat(mean, draws, axis=0), np.repeat(variance, draws, axis=0)
    noise = np.random.default_rng([seed, 1]).standard_normal(mean.shape)
    return RepresentationSet.from_noise(mean, variance, noise)
