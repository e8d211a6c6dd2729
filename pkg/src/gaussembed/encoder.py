"""Feed-forward encoder mapping attribute rows to Gaussian embeddings.

Architecture: ``h = relu(x W + b)`` for each hidden layer, then two linear
heads, ``mu = h W_mu + b_mu`` and ``var = elu(h W_var + b_var) + 1``.
Inputs may be dense arrays or scipy CSR matrices; the sparse path is what
makes one-hot (identity) features cheap.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .energy import GaussianEmbedding

_TINY = np.finfo(np.float64).tiny


@dataclass
class EncoderParameters:
    hidden: list[tuple[np.ndarray, np.ndarray]]
    mu_w: np.ndarray
    mu_b: np.ndarray
    var_w: np.ndarray
    var_b: np.ndarray

    activation = "relu"
    var_activation = "elu_plus_one"

    @property
    def input_dim(self) -> int:
        return (self.hidden[0][0] if self.hidden else self.mu_w).shape[0]

    @property
    def hidden_sizes(self) -> list[int]:
        return [w.shape[1] for w, _ in self.hidden]

    @property
    def half_dim(self) -> int:
        return self.mu_w.shape[1]

    def arrays(self) -> list[np.ndarray]:
        """All tensors in checkpoint order: hidden W/b pairs, mu head, var head."""
        out = []
        for w, b in self.hidden:
            out += [w, b]
        return out + [self.mu_w, self.mu_b, self.var_w, self.var_b]

    def names(self) -> list[str]:
        out = []
        for i in range(len(self.hidden)):
            out += [f"hidden{i}.w", f"hidden{i}.b"]
        return out + ["mu.w", "mu.b", "var.w", "var.b"]

    @classmethod
    def from_arrays(cls, arrays: list[np.ndarray]) -> "EncoderParameters":
        *hid, mu_w, mu_b, var_w, var_b = arrays
        pairs = [(hid[i], hid[i + 1]) for i in range(0, len(hid), 2)]
        return cls(pairs, mu_w, mu_b, var_w, var_b)

    def copy(self) -> "EncoderParameters":
        return EncoderParameters.from_arrays([a.copy() for a in self.arrays()])

    def shapes(self) -> list[tuple[int, ...]]:
        return [a.shape for a in self.arrays()]


def layer_shapes(input_dim: int, hidden_sizes, half_dim: int) -> list[tuple[int, ...]]:
    sizes = [input_dim, *hidden_sizes]
    shapes: list[tuple[int, ...]] = []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        shapes += [(fan_in, fan_out), (fan_out,)]
    last = sizes[-1]
    return shapes + [(last, half_dim), (half_dim,), (last, half_dim), (half_dim,)]


def init_xavier(input_dim: int, hidden_sizes=(512,), half_dim: int = 64, seed=None) -> EncoderParameters:
    """Glorot-uniform weights, zero biases."""
    if input_dim < 1 or half_dim < 1 or any(s < 1 for s in hidden_sizes):
        raise ValueError("all layer sizes must be >= 1")
    rng = np.random.default_rng(seed)
    arrays = []
    for shape in layer_shapes(input_dim, list(hidden_sizes), half_dim):
        if len(shape) == 1:
            arrays.append(np.zeros(shape))
        else:
            bound = np.sqrt(6.0 / (shape[0] + shape[1]))
            arrays.append(rng.uniform(-bound, bound, size=shape))
    return EncoderParameters.from_arrays(arrays)


@dataclass
class ForwardCache:
    inputs: np.ndarray | sp.csr_matrix
    pre: list[np.ndarray]  # hidden pre-activations
    acts: list[np.ndarray]  # hidden activations (acts[-1] feeds the heads)
    var_pre: np.ndarray
    var: np.ndarray


def _as_input(attrs):
    if sp.issparse(attrs):
        x = sp.csr_matrix(attrs, dtype=np.float64)
        vals = x.data
    else:
        x = np.asarray(attrs, dtype=np.float64)
        if x.ndim == 1:
            x = x[None, :]
        vals = x
    if not np.all(np.isfinite(vals)):
        raise ValueError("non-finite attribute value")
    return x


def elu_plus_one(z: np.ndarray) -> np.ndarray:
    # elu(z)+1 == exp(z) for z < 0; floor keeps the result positive after underflow
    return np.where(z >= 0, z + 1.0, np.maximum(np.exp(np.minimum(z, 0.0)), _TINY))


def forward_batch(params: EncoderParameters, attrs) -> tuple[GaussianEmbedding, ForwardCache]:
    x = _as_input(attrs)
    if x.shape[1] != params.input_dim:
        raise ValueError(f"attribute dimension {x.shape[1]} != encoder input {params.input_dim}")
    pre, acts = [], []
    h = x
    for w, b in params.hidden:
        z = np.asarray(h @ w) + b
        h = np.maximum(z, 0.0)
        pre.append(z)
        acts.append(h)
    mu = np.asarray(h @ params.mu_w) + params.mu_b
    var_pre = np.asarray(h @ params.var_w) + params.var_b
    var = elu_plus_one(var_pre)
    return GaussianEmbedding(mu, var), ForwardCache(x, pre, acts, var_pre, var)


def forward(params: EncoderParameters, attrs_row) -> tuple[GaussianEmbedding, ForwardCache]:
    """Embed a single attribute row."""
    emb, cache = forward_batch(params, attrs_row)
    return emb[0], cache


def embed(params: EncoderParameters, attrs) -> GaussianEmbedding:
    return forward_batch(params, attrs)[0]


def backward(
    params: EncoderParameters, cache: ForwardCache, grad_mu: np.ndarray, grad_var: np.ndarray
) -> tuple[list[np.ndarray], np.ndarray | sp.csr_matrix]:
    """Gradients of a scalar loss given its partials w.r.t. ``mu`` and ``var``.

    Returns parameter gradients in :meth:`EncoderParameters.arrays` order and
    the gradient w.r.t. the input rows.
    """
    grad_mu = np.asarray(grad_mu, dtype=np.float64).reshape(cache.var.shape)
    grad_var = np.asarray(grad_var, dtype=np.float64).reshape(cache.var.shape)
    if cache.inputs.shape[0] != cache.var.shape[0]:
        raise ValueError("cache does not match a forward pass")
    # d var / d var_pre is 1 on the linear branch and exp(z) == var below zero
    d_var_pre = grad_var * np.where(cache.var_pre >= 0, 1.0, cache.var)
    h = cache.acts[-1] if cache.acts else cache.inputs
    grads_tail = [
        np.asarray(h.T @ grad_mu),
        grad_mu.sum(axis=0),
        np.asarray(h.T @ d_var_pre),
        d_var_pre.sum(axis=0),
    ]
    dh = grad_mu @ params.mu_w.T + d_var_pre @ params.var_w.T
    grads_hidden: list[np.ndarray] = []
    for layer in range(len(params.hidden) - 1, -1, -1):
        w, _ = params.hidden[layer]
        dz = dh * (cache.pre[layer] > 0)
        below = cache.acts[layer - 1] if layer > 0 else cache.inputs
        grads_hidden = [np.asarray(below.T @ dz), dz.sum(axis=0)] + grads_hidden
        dh = dz @ w.T
    return grads_hidden + grads_tail, dh
