"""Sphere-latent Wasserstein autoencoder on numpy, with numba-compiled convolution kernels."""

__version__ = "0.1.0"
