"""Active, passive and mixed latent variables in VAE mean and sampled representations."""

__version__ = "0.1.0"
