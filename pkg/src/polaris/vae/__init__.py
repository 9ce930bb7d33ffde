"""Desk-scale dense VAE: toy data, model, objectives, training."""

from .model import Architecture, VaeModel, decode, encode, init_model, load_model, save_model, zero_model
from .objectives import (
    OBJECTIVES,
    LossParts,
    ObjectiveConfig,
    gaussian_kl,
    gradients,
    mws_total_correlation,
    objective_loss,
    reconstruction_loss,
)
from .toy import ToyDataset, make_toy_dataset
from .train import TrainLog, extract_representations, extraction_indices, snapshot_name, train

__all__ = [
    "Architecture", "VaeModel", "decode", "encode", "init_model", "load_model", "save_model", "zero_model",
    "OBJECTIVES", "LossParts", "ObjectiveConfig", "gaussian_kl", "gradients", "mws_total_correlation",
    "objective_loss", "reconstruction_loss", "ToyDataset", "make_toy_dataset", "TrainLog",
    "extract_representations", "extraction_indices", "snapshot_name", "train",
]
