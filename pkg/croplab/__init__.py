"""Desk-scale latent-diffusion laboratory for object completeness."""

__version__ = "0.1.0"
