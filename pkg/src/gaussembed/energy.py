"""Diagonal Gaussian embeddings and the asymmetric KL energy between them.

The energy of the ordered pair ``(i, j)`` is ``KL(N_j || N_i)``: node i's
Gaussian is the *reference* distribution.  All functions broadcast over
leading axes and reduce over the last (embedding) axis.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np


@dataclass(frozen=True)
class GaussianEmbedding:
    """Means and diagonal variances, shape ``(..., L_half)``."""

    mu: np.ndarray
    var: np.ndarray

    def __post_init__(self):
        if np.shape(self.mu) != np.shape(self.var):
            raise ValueError(f"mu shape {np.shape(self.mu)} != var shape {np.shape(self.var)}")

    def __getitem__(self, idx) -> "GaussianEmbedding":
        return GaussianEmbedding(self.mu[idx], self.var[idx])

    def __len__(self) -> int:
        return len(self.mu)

    @property
    def dim(self) -> int:
        return np.shape(self.mu)[-1]


def _check(hi: GaussianEmbedding, hj: GaussianEmbedding) -> None:
    if hi.dim != hj.dim:
        raise ValueError(f"dimension mismatch: {hi.dim} vs {hj.dim}")
    if np.any(hi.var <= 0) or np.any(hj.var <= 0):
        raise ValueError("variances must be strictly positive")


def energy_terms(mu_i, var_i, mu_j, var_j) -> np.ndarray:
    """Per-dimension KL contributions (unchecked, no reduction)."""
    diff = mu_i - mu_j
    return 0.5 * (var_j / var_i + diff * diff / var_i - 1.0 + np.log(var_i) - np.log(var_j))


def kl_energy(hi: GaussianEmbedding, hj: GaussianEmbedding):
    """``E_ij = KL(N_j || N_i)``; non-negative, zero iff the Gaussians match."""
    _check(hi, hj)
    return energy_terms(hi.mu, hi.var, hj.mu, hj.var).sum(axis=-1)


def kl_energy_grad(hi: GaussianEmbedding, hj: GaussianEmbedding):
    """Partials of ``kl_energy`` w.r.t. ``(mu_i, var_i, mu_j, var_j)``."""
    _check(hi, hj)
    return energy_grad_terms(hi.mu, hi.var, hj.mu, hj.var)


def energy_grad_terms(mu_i, var_i, mu_j, var_j):
    diff = mu_i - mu_j
    inv_i = 1.0 / var_i
    d_mu_i = diff * inv_i
    d_var_i = 0.5 * (inv_i - var_j * inv_i * inv_i - diff * diff * inv_i * inv_i)
    d_var_j = 0.5 * (inv_i - 1.0 / var_j)
    return d_mu_i, d_var_i, -d_mu_i, d_var_j


def kl_energy_restricted(hi: GaussianEmbedding, hj: GaussianEmbedding, kept_dims: Iterable[int]):
    """``kl_energy`` summed over ``kept_dims`` only."""
    dims = np.unique(np.fromiter(kept_dims, dtype=np.int64))
    if dims.size == 0:
        raise ValueError("kept_dims must be non-empty")
    if dims[0] < 0 or dims[-1] >= hi.dim:
        raise IndexError(f"kept dimension out of range for L_half={hi.dim}")
    _check(hi, hj)
    return energy_terms(hi.mu, hi.var, hj.mu, hj.var)[..., dims].sum(axis=-1)


def pair_energies(emb: GaussianEmbedding, src: np.ndarray, dst: np.ndarray) -> np.ndarray:
    """Energies ``E[src[p], dst[p]]`` for index arrays over a batch of embeddings."""
    return energy_terms(emb.mu[src], emb.var[src], emb.mu[dst], emb.var[dst]).sum(axis=-1)
