"""BADM dance - bidirectional autoregressive diffusion for music-to-dance generation."""

__version__ = "0.1.0"
