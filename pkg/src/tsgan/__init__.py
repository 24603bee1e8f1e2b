"""Transformer conditional GAN for time-series augmentation with Wasserstein-Fourier evaluation."""

__version__ = "0.1.0"
