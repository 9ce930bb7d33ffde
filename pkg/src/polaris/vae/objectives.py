"""Training objectives and their exact reverse-mode gradients.

Losses are minimised and averaged over the batch. The noise draw is an
explicit argument, so the loss is a deterministic function of the parameters
and can be checked against finite differences.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np
from scipy.special import logsumexp, softmax

from ..errors import DimensionError, DomainError
from ..representation import as_matrix
from .model import LOGVAR_CLAMP, VaeModel, _check_batch, activate_grad, decoder_forward, encoder_forward

BCE_EPS = 1e-7
OBJECTIVES = ("elbo", "beta", "annealed", "dip2", "btc")
_LOG_2PI = float(np.log(2.0 * np.pi))


@dataclass(frozen=True)
class ObjectiveConfig:
    kind: str = "beta"
    beta: float = 1.0
    gamma: float = 1.0
    c_max: float = 0.0
    anneal_steps: int = 1
    lambda_od: float = 0.0
    lambda_d: float = 0.0
    dataset_size: Optional[int] = None

    def __post_init__(self):
        if self.kind not in OBJECTIVES:
            raise DomainError(f"unknown objective {self.kind!r}")
        if self.beta < 1:
            raise DomainError(f"beta must be >= 1, got {self.beta}")
        if self.gamma < 0 or self.c_max < 0 or self.lambda_od < 0 or self.lambda_d < 0:
            raise DomainError("gamma, c_max and the DIP lambdas must be >= 0")
        if self.anneal_steps < 1:
            raise DomainError("anneal_steps must be >= 1")
        if self.dataset_size is not None and self.dataset_size < 1:
            raise DomainError("dataset_size must be positive")

    def capacity(self, step: int) -> float:
        """Annealed channel capacity: linear from 0 to c_max over anneal_steps."""
        return self.c_max * min(1.0, step / self.anneal_steps)

    def to_dict(self) -> dict:
        return asdict(self)


def gaussian_kl(mean, variance) -> np.ndarray:
    """Per-example KL(N(mean, diag(variance)) || N(0, I))."""
    mean = as_matrix(mean, "mean")
    variance = as_matrix(variance, "variance")
    if mean.shape != variance.shape:
        raise DimensionError(f"shape mismatch: {mean.shape} vs {variance.shape}")
    if np.any(variance <= 0):
        raise DomainError("variance entries must be > 0")
    return 0.5 * np.sum(mean**2 + variance - 1.0 - np.log(variance), axis=1)


def reconstruction_loss(decoded, batch) -> np.ndarray:
    """Per-example Bernoulli negative log-likelihood, probabilities clamped to [eps, 1-eps]."""
    decoded = as_matrix(decoded, "decoded")
    batch = as_matrix(batch, "batch")
    if decoded.shape != batch.shape:
        raise DimensionError(f"shape mismatch: {decoded.shape} vs {batch.shape}")
    p = np.clip(decoded, BCE_EPS, 1.0 - BCE_EPS)
    return -np.sum(batch * np.log(p) + (1.0 - batch) * np.log1p(-p), axis=1)


@dataclass(frozen=True)
class LossParts:
    total: float
    recon: float
    kl: float
    reg: float
    capacity: float


def _mws_log_densities(z, mean, logvar):
    """log q(z_i,j | x_k) for every (i, k, j), shape (m, m, d)."""
    diff = z[:, None, :] - mean[None, :, :]
    var = np.exp(logvar)[None, :, :]
    return -0.5 * (_LOG_2PI + logvar[None, :, :] + diff**2 / var), diff, var


def mws_total_correlation(z, mean, logvar, dataset_size: int) -> float:
    """Mini-batch weighted-sampling estimate of TC(q(z)) over one batch."""
    m = z.shape[0]
    logq, _, _ = _mws_log_densities(z, mean, logvar)
    log_nm = np.log(dataset_size * m)
    log_qz = logsumexp(logq.sum(axis=2), axis=1) - log_nm
    log_prod = np.sum(logsumexp(logq, axis=1) - log_nm, axis=1)
    return float(np.mean(log_qz - log_prod))


def _dip2_cov(mean, variance):
    centered = mean - mean.mean(axis=0)
    m = mean.shape[0]
    return centered, centered.T @ centered / m + np.diag(variance.mean(axis=0))


def _forward(model: VaeModel, batch, config: ObjectiveConfig, step: int, noise):
    batch = _check_batch(model, batch)
    noise = as_matrix(noise, "noise")
    m = batch.shape[0]
    if noise.shape != (m, model.arch.latent_dim):
        raise DimensionError(f"noise must be {(m, model.arch.latent_dim)}, got {noise.shape}")
    if config.kind in ("dip2", "btc") and m < 2:
        raise DomainError(f"objective {config.kind} needs a batch of at least 2 rows")
    enc_cache, mean, raw_lv, logvar = encoder_forward(model, batch)
    variance = np.exp(logvar)
    std = np.exp(0.5 * logvar)
    z = mean + std * noise
    dec_cache, logits, probs = decoder_forward(model, z)

    recon = float(np.mean(reconstruction_loss(probs, batch)))
    kl = float(np.mean(0.5 * np.sum(mean**2 + variance - 1.0 - logvar, axis=1)))
    capacity = 0.0
    extra = 0.0
    if config.kind == "elbo":
        reg = kl
    elif config.kind == "beta":
        reg = config.beta * kl
    elif config.kind == "annealed":
        capacity = config.capacity(step)
        reg = config.gamma * abs(kl - capacity)
    elif config.kind == "dip2":
        _, cov = _dip2_cov(mean, variance)
        off = cov - np.diag(np.diag(cov))
        extra = config.lambda_od * float(np.sum(off**2)) + config.lambda_d * float(np.sum((np.diag(cov) - 1.0) ** 2))
        reg = kl + extra
    else:
        n = config.dataset_size if config.dataset_size is not None else m
        extra = (config.beta - 1.0) * mws_total_correlation(z, mean, logvar, n)
        reg = kl + extra
    state = dict(
        batch=batch, noise=noise, enc_cache=enc_cache, mean=mean, raw_lv=raw_lv, logvar=logvar,
        variance=variance, std=std, z=z, dec_cache=dec_cache, logits=logits, probs=probs, kl=kl, capacity=capacity,
    )
    return LossParts(total=recon + reg, recon=recon, kl=kl, reg=reg, capacity=capacity), state


def objective_loss(model: VaeModel, batch, config: ObjectiveConfig, step: int, noise) -> LossParts:
    return _forward(model, batch, config, step, noise)[0]


def _regulariser_grads(config: ObjectiveConfig, s: dict, m: int):
    """Gradients of the regulariser w.r.t. (mean, logvar, z)."""
    mean, variance, logvar = s["mean"], s["variance"], s["logvar"]
    if config.kind == "beta":
        w = config.beta
    elif config.kind == "annealed":
        w = config.gamma * float(np.sign(s["kl"] - s["capacity"]))
    else:
        w = 1.0
    d_mean = w * mean / m
    d_logvar = w * 0.5 * (variance - 1.0) / m
    d_z = np.zeros_like(mean)

    if config.kind == "dip2":
        centered, cov = _dip2_cov(mean, variance)
        G = 2.0 * config.lambda_od * (cov - np.diag(np.diag(cov)))
        G[np.diag_indices_from(G)] = 2.0 * config.lambda_d * (np.diag(cov) - 1.0)
        d_mean = d_mean + 2.0 * centered @ G / m
        d_logvar = d_logvar + np.diag(G)[None, :] * variance / m
    elif config.kind == "btc" and config.beta != 1.0:
        scale = (config.beta - 1.0) / m
        logq, diff, var = _mws_log_densities(s["z"], mean, logvar)
        A = softmax(logq.sum(axis=2), axis=1)[:, :, None]
        B = softmax(logq, axis=1)
        D = scale * (A - B)
        r = diff / var
        d_z = -np.sum(D * r, axis=1)
        d_mean = d_mean + np.sum(D * r, axis=0)
        d_logvar = d_logvar + np.sum(D * (-0.5 + 0.5 * diff * r), axis=0)
    return d_mean, d_logvar, d_z


def gradients(model: VaeModel, batch, config: ObjectiveConfig, step: int, noise):
    """Exact gradients of :func:`objective_loss` with the noise held fixed.

    Returns ``(parts, grads)`` where ``grads`` mirrors ``model.params``.
    """
    parts, s = _forward(model, batch, config, step, noise)
    p, act = model.params, model.arch.activation
    batch = s["batch"]
    m = batch.shape[0]
    grads = {}

    # reconstruction through the decoder
    probs = s["probs"]
    clamped = (probs < BCE_EPS) | (probs > 1.0 - BCE_EPS)
    g = np.where(clamped, 0.0, probs - batch) / m
    n_hidden = len(model.arch.hidden)
    h = s["dec_cache"][-1]
    grads[f"dec{n_hidden}.W"] = h.T @ g
    grads[f"dec{n_hidden}.b"] = g.sum(axis=0)
    g = g @ p[f"dec{n_hidden}.W"].T
    for i in reversed(range(n_hidden)):
        h_in, a, out = s["dec_cache"][i]
        g = g * activate_grad(a, out, act)
        grads[f"dec{i}.W"] = h_in.T @ g
        grads[f"dec{i}.b"] = g.sum(axis=0)
        g = g @ p[f"dec{i}.W"].T
    d_z = g

    d_mean, d_logvar, d_z_reg = _regulariser_grads(config, s, m)
    d_z = d_z + d_z_reg
    # z = mean + exp(logvar / 2) * noise
    d_mean = d_mean + d_z
    d_logvar = d_logvar + d_z * 0.5 * s["std"] * s["noise"]
    raw = s["raw_lv"]
    d_raw = d_logvar * ((raw > -LOGVAR_CLAMP) & (raw < LOGVAR_CLAMP))

    h = s["enc_cache"][-1]
    grads["mean.W"] = h.T @ d_mean
    grads["mean.b"] = d_mean.sum(axis=0)
    grads["logvar.W"] = h.T @ d_raw
    grads["logvar.b"] = d_raw.sum(axis=0)
    g = d_mean @ p["mean.W"].T + d_raw @ p["logvar.W"].T
    for i in reversed(range(n_hidden)):
        h_in, a, out = s["enc_cache"][i]
        g = g * activate_grad(a, out, act)
        grads[f"enc{i}.W"] = h_in.T @ g
        grads[f"enc{i}.b"] = g.sum(axis=0)
        if i > 0:
            g = g @ p[f"enc{i}.W"].T
    return parts, {k: grads[k] for k in model.names}
