"""Independent reference computations shared by the unit and acceptance tests."""

import numpy as np

from polaris.vae import Architecture, ObjectiveConfig, gradients, init_model, objective_loss

FIVE_OBJECTIVES = (
    ObjectiveConfig("elbo"),
    ObjectiveConfig("beta", beta=4.0),
    ObjectiveConfig("annealed", gamma=3.0, c_max=0.5, anneal_steps=10),
    ObjectiveConfig("dip2", lambda_od=2.0, lambda_d=5.0),
    ObjectiveConfig("btc", beta=6.0, dataset_size=100),
)


def small_problem(seed: int, activation: str = "tanh", hidden=(2,), input_dim: int = 6, latent_dim: int = 3, m: int = 5):
    """A tiny model with non-zero biases, a batch and a noise draw."""
    rng = np.random.default_rng(seed)
    model = init_model(Architecture(input_dim=input_dim, hidden=hidden, latent_dim=latent_dim, activation=activation), seed)
    for k in model.params:
        if k.endswith(".b"):
            # positive shift keeps ReLU units away from their kink
            model.params[k] = rng.normal(0, 0.3, model.params[k].shape) + (0.5 if activation == "relu" else 0.0)
    batch = rng.uniform(0.05, 0.95, (m, input_dim))
    noise = rng.standard_normal((m, latent_dim))
    return model, batch, noise


def fd_worst_relative_error(model, batch, config, step, noise, h=1e-4) -> float:
    """max over parameters of |analytic - central FD| / (|FD| + 1e-8)."""
    _, grads = gradients(model, batch, config, step, noise)
    worst = 0.0
    for name, value in model.params.items():
        for idx in np.ndindex(value.shape):
            old = value[idx]
            value[idx] = old + h
            plus = objective_loss(model, batch, config, step, noise).total
            value[idx] = old - h
            minus = objective_loss(model, batch, config, step, noise).total
            value[idx] = old
            fd = (plus - minus) / (2 * h)
            worst = max(worst, abs(grads[name][idx] - fd) / (abs(fd) + 1e-8))
    return worst


def brute_force_mws_tc(z, mean, logvar, n):
    """MWS total correlation with explicit loops and scipy normal densities."""
    from scipy.special import logsumexp
    from scipy.stats import norm

    m, d = z.shape
    sd = np.exp(0.5 * logvar)
    joint, prod = [], []
    for i in range(m):
        per_dim = np.array([[norm.logpdf(z[i, j], mean[k, j], sd[k, j]) for j in range(d)] for k in range(m)])
        joint.append(logsumexp(per_dim.sum(axis=1)) - np.log(n * m))
        prod.append(sum(logsumexp(per_dim[:, j]) - np.log(n * m) for j in range(d)))
    return float(np.mean(np.array(joint) - np.array(prod)))
