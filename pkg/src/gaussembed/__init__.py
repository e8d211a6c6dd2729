"""Unsupervised Gaussian node embeddings learned from hop-ranked triplets."""

__version__ = "0.1.0"
