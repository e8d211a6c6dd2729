"""Personalized ranking loss over hop-ordered triplets.

A triplet ``(i, j_k, j_l)`` says node ``j_k`` (``k`` hops from ``i``) should
have lower energy w.r.t. ``i`` than ``j_l`` (``l > k`` hops away).  Each
triplet costs ``E[i, j_k]**2 + exp(-E[i, j_l])``.

Every loss here reduces to a weighted sum over ordered node pairs,

    sum_p  sq_w[p] * E[src_p, dst_p]**2  +  exp_w[p] * exp(-E[src_p, dst_p])

which is what :func:`pair_loss_and_grads` evaluates: the exact loss (pair
weights from hop-set sizes), node-anchored samples and naive samples only
differ in how the pairs and weights are produced.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .encoder import EncoderParameters, backward, forward_batch
from .energy import GaussianEmbedding, energy_grad_terms, energy_terms
from .graph import HopIndex, HopNeighborhoods


class Triplet(NamedTuple):
    anchor: int
    pos: int
    neg: int
    k: int
    l: int


@dataclass
class TripletBatch:
    """Weighted triplets; ``source[t]`` is the draw/row that produced triplet ``t``."""

    anchor: np.ndarray
    pos: np.ndarray
    neg: np.ndarray
    weight: np.ndarray
    source: np.ndarray

    def __len__(self) -> int:
        return len(self.anchor)

    @classmethod
    def empty(cls) -> "TripletBatch":
        z = np.zeros(0, dtype=np.int64)
        return cls(z, z, z, np.zeros(0), z)

    @classmethod
    def from_triplets(cls, triplets: Sequence[Triplet], weight: float = 1.0) -> "TripletBatch":
        if not len(triplets):
            return cls.empty()
        arr = np.asarray([t[:3] for t in triplets], dtype=np.int64)
        return cls(arr[:, 0], arr[:, 1], arr[:, 2], np.full(len(arr), float(weight)), np.arange(len(arr)))

    @classmethod
    def from_samples(cls, samples: Sequence["AnchoredSample"]) -> "TripletBatch":
        rows = []
        for s_idx, s in enumerate(samples):
            for (k, l), w in s.weights.items():
                rows.append((s.anchor, s.chosen[k], s.chosen[l], w, s_idx))
        if not rows:
            return cls.empty()
        a, p, n, w, src = (np.asarray(c) for c in zip(*rows))
        return cls(a.astype(np.int64), p.astype(np.int64), n.astype(np.int64), w.astype(np.float64), src.astype(np.int64))

    def as_pairs(self):
        zeros = np.zeros_like(self.weight)
        src = np.concatenate([self.anchor, self.anchor])
        dst = np.concatenate([self.pos, self.neg])
        return src, dst, np.concatenate([self.weight, zeros]), np.concatenate([zeros, self.weight])


class TooManyTripletsError(RuntimeError):
    pass


# --------------------------------------------------------------------------
# exhaustive loss
# --------------------------------------------------------------------------


def _as_hop_list(hop_sets) -> list[HopNeighborhoods]:
    if isinstance(hop_sets, HopIndex):
        return [hop_sets.hop_sets(i) for i in range(hop_sets.num_nodes)]
    return list(hop_sets)


def enumerate_triplets(hop_sets, cap: int = 10**7) -> list[Triplet]:
    """Every valid triplet, anchor by anchor (desk-scale graphs only)."""
    if isinstance(hop_sets, HopIndex):
        total = int(hop_sets.triplet_counts().sum())
    else:
        total = sum(
            len(h.sets[k]) * len(h.sets[l])
            for h in hop_sets
            for k in range(h.max_hop)
            for l in range(k + 1, h.max_hop)
        )
    if total > cap:
        raise TooManyTripletsError(f"{total} triplets exceed the cap of {cap}")
    out = []
    for h in _as_hop_list(hop_sets):
        for k in range(h.max_hop):
            for l in range(k + 1, h.max_hop):
                for j in h.sets[k].tolist():
                    for jj in h.sets[l].tolist():
                        out.append(Triplet(h.anchor, j, jj, k + 1, l + 1))
    return out


def full_loss(emb: GaussianEmbedding, triplets) -> float:
    """Plain sum of ``E_pos**2 + exp(-E_neg)`` over the given triplets."""
    batch = triplets if isinstance(triplets, TripletBatch) else TripletBatch.from_triplets(triplets)
    if not len(batch):
        return 0.0
    e_pos = energy_terms(emb.mu[batch.anchor], emb.var[batch.anchor], emb.mu[batch.pos], emb.var[batch.pos]).sum(-1)
    e_neg = energy_terms(emb.mu[batch.anchor], emb.var[batch.anchor], emb.mu[batch.neg], emb.var[batch.neg]).sum(-1)
    return float(np.sum(batch.weight * (e_pos**2 + np.exp(-e_neg))))


def exact_pair_weights(hops: HopIndex):
    """Pair form of the exhaustive loss.

    A node ``j`` in hop ``k`` of anchor ``i`` is the positive of every
    triplet whose negative lies in a farther hop and the negative of every
    triplet whose positive lies in a closer hop, so
    ``sq_w = sum_{l>k} |N_il|`` and ``exp_w = sum_{l<k} |N_il|``.
    """
    hop = hops.hop_matrix()
    counts = hops.counts.astype(np.float64)
    n, K = counts.shape
    closer = np.concatenate([np.zeros((n, 1)), np.cumsum(counts, axis=1)[:, :-1]], axis=1)
    farther = counts.sum(axis=1, keepdims=True) - np.cumsum(counts, axis=1)
    src, dst = np.nonzero(hop)
    k = hop[src, dst] - 1
    sq_w = farther[src, k]
    exp_w = closer[src, k]
    keep = (sq_w > 0) | (exp_w > 0)
    return src[keep], dst[keep], sq_w[keep], exp_w[keep]


# --------------------------------------------------------------------------
# samplers
# --------------------------------------------------------------------------


@dataclass
class AnchoredSample:
    anchor: int
    chosen: dict[int, int] = field(default_factory=dict)
    weights: dict[tuple[int, int], int] = field(default_factory=dict)


def sample_node_anchored(hop_sets: HopNeighborhoods, rng) -> AnchoredSample:
    """One uniform draw per non-empty hop set, weighted by set-size products."""
    rng = np.random.default_rng(rng)
    chosen = {}
    sizes = {}
    for k, s in enumerate(hop_sets.sets, start=1):
        if len(s):
            chosen[k] = int(s[rng.integers(len(s))])
            sizes[k] = len(s)
    hops = sorted(chosen)
    weights = {(k, l): sizes[k] * sizes[l] for i, k in enumerate(hops) for l in hops[i + 1 :]}
    return AnchoredSample(hop_sets.anchor, chosen, weights)


def _draw_from_hop(hops: HopIndex, anchors: np.ndarray, k: int, rng, max_rounds: int = 64) -> np.ndarray:
    """Uniform member of ``N_{a,k}`` for each anchor (sets assumed non-empty)."""
    if k < hops.K:
        m = hops.near[k - 1]
        c = hops.counts[anchors, k - 1]
        offs = np.floor(rng.random(len(anchors)) * c).astype(np.int64)
        return m.indices[m.indptr[anchors] + offs]
    n = hops.num_nodes
    out = np.empty(len(anchors), dtype=np.int64)
    pending = np.arange(len(anchors))
    for _ in range(max_rounds):
        if not len(pending):
            return out
        a = anchors[pending]
        r = rng.integers(0, n - 1, size=len(pending))
        j = r + (r >= a)
        ok = ~hops.in_near(a, j)
        out[pending[ok]] = j[ok]
        pending = pending[~ok]
    for p in pending.tolist():
        far = hops.hop_sets(int(anchors[p])).sets[-1]
        out[p] = far[rng.integers(len(far))]
    return out


def sample_anchored(hops: HopIndex, anchors, rng) -> TripletBatch:
    """Vectorized node-anchored sampling for a batch of anchors."""
    rng = np.random.default_rng(rng)
    anchors = np.asarray(anchors, dtype=np.int64)
    counts = hops.counts[anchors]
    chosen = np.full((len(anchors), hops.K), -1, dtype=np.int64)
    for k in range(1, hops.K + 1):
        has = np.flatnonzero(counts[:, k - 1] > 0)
        if len(has):
            chosen[has, k - 1] = _draw_from_hop(hops, anchors[has], k, rng)
    parts = []
    for k in range(hops.K):
        for l in range(k + 1, hops.K):
            rows = np.flatnonzero((chosen[:, k] >= 0) & (chosen[:, l] >= 0))
            w = (counts[rows, k] * counts[rows, l]).astype(np.float64)
            parts.append((anchors[rows], chosen[rows, k], chosen[rows, l], w, rows))
    if not parts:
        return TripletBatch.empty()
    cols = [np.concatenate(c) for c in zip(*parts)]
    return TripletBatch(*cols)


def sample_naive(source, batch_size: int, rng) -> TripletBatch:
    """I.i.d. uniform triplets with the ``|D_t| / batch_size`` reweighting.

    ``source`` is either an explicit triplet list or a :class:`HopIndex`, in
    which case the uniform distribution over all triplets is sampled without
    enumerating it: anchor proportional to its triplet count, hop pair
    proportional to ``|N_ik| |N_il|``, then one uniform node per hop.
    """
    rng = np.random.default_rng(rng)
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    if not isinstance(source, HopIndex):
        triplets = list(source)
        if not triplets:
            raise ValueError("cannot sample from an empty triplet set")
        idx = rng.integers(0, len(triplets), size=batch_size)
        batch = TripletBatch.from_triplets([triplets[i] for i in idx.tolist()])
        batch.weight[:] = len(triplets) / batch_size
        return batch
    hops = source
    per_anchor = hops.triplet_counts().astype(np.float64)
    total = per_anchor.sum()
    if total == 0:
        raise ValueError("cannot sample from an empty triplet set")
    anchors = rng.choice(hops.num_nodes, size=batch_size, p=per_anchor / total)
    counts = hops.counts[anchors].astype(np.float64)
    pairs = [(k, l) for k in range(hops.K) for l in range(k + 1, hops.K)]
    pw = np.stack([counts[:, k] * counts[:, l] for k, l in pairs], axis=1)
    cum = np.cumsum(pw, axis=1)
    u = rng.random(batch_size) * cum[:, -1]
    which = np.minimum((cum <= u[:, None]).sum(axis=1), len(pairs) - 1)
    pos = np.empty(batch_size, dtype=np.int64)
    neg = np.empty(batch_size, dtype=np.int64)
    for p_idx, (k, l) in enumerate(pairs):
        rows = np.flatnonzero(which == p_idx)
        if len(rows):
            pos[rows] = _draw_from_hop(hops, anchors[rows], k + 1, rng)
            neg[rows] = _draw_from_hop(hops, anchors[rows], l + 1, rng)
    weight = np.full(batch_size, total / batch_size)
    return TripletBatch(anchors.astype(np.int64), pos, neg, weight, np.arange(batch_size))


# --------------------------------------------------------------------------
# loss + gradients
# --------------------------------------------------------------------------


def pair_loss_from_energies(energy, sq_w, exp_w) -> float:
    return float(np.sum(sq_w * energy**2 + exp_w * np.exp(-energy)))


def pair_loss_and_grads(
    params: EncoderParameters, attrs, src, dst, sq_w, exp_w, with_grads: bool = True
):
    """Weighted pair loss and its gradient w.r.t. every encoder tensor.

    Only the rows of ``attrs`` referenced by some pair are pushed through the
    encoder.
    """
    src = np.asarray(src, dtype=np.int64)
    dst = np.asarray(dst, dtype=np.int64)
    if not len(src):
        return 0.0, [np.zeros_like(a) for a in params.arrays()]
    uniq, inv = np.unique(np.concatenate([src, dst]), return_inverse=True)
    si, di = inv[: len(src)], inv[len(src) :]
    emb, cache = forward_batch(params, attrs[uniq])
    mu_i, var_i, mu_j, var_j = emb.mu[si], emb.var[si], emb.mu[di], emb.var[di]
    energy = energy_terms(mu_i, var_i, mu_j, var_j).sum(axis=-1)
    decay = np.exp(-energy)
    loss = float(np.sum(sq_w * energy**2 + exp_w * decay))
    if not with_grads:
        return loss, None
    d_energy = (2.0 * sq_w * energy - exp_w * decay)[:, None]
    g_mu_i, g_var_i, g_mu_j, g_var_j = energy_grad_terms(mu_i, var_i, mu_j, var_j)
    grad_mu = np.zeros_like(emb.mu)
    grad_var = np.zeros_like(emb.var)
    np.add.at(grad_mu, si, d_energy * g_mu_i)
    np.add.at(grad_mu, di, d_energy * g_mu_j)
    np.add.at(grad_var, si, d_energy * g_var_i)
    np.add.at(grad_var, di, d_energy * g_var_j)
    grads, _ = backward(params, cache, grad_mu, grad_var)
    return loss, grads


def stochastic_loss_and_grads(params: EncoderParameters, attrs, samples, with_grads: bool = True):
    """Loss estimate and gradients for sampled triplets.

    ``samples`` is a :class:`TripletBatch` or a list of :class:`AnchoredSample`.
    """
    batch = samples if isinstance(samples, TripletBatch) else TripletBatch.from_samples(samples)
    return pair_loss_and_grads(params, attrs, *batch.as_pairs(), with_grads=with_grads)


def exact_loss_and_grads(params: EncoderParameters, attrs, hops: HopIndex, with_grads: bool = True):
    return pair_loss_and_grads(params, attrs, *exact_pair_weights(hops), with_grads=with_grads)


def matched_naive_batch(hops: HopIndex) -> int:
    """Triplets one all-anchor node-anchored step evaluates (pairs of non-empty hops)."""
    m = (hops.counts > 0).sum(axis=1)
    return int((m * (m - 1) // 2).sum())


def estimate_grad_variance(
    params: EncoderParameters,
    attrs,
    hops: HopIndex,
    strategy: str,
    n_repeats: int,
    rng=None,
    batch_size: int | None = None,
) -> dict[str, float]:
    """Mean per-coordinate variance of the stochastic gradient, per tensor and overall.

    Node-anchored draws use every node as anchor; naive draws default to the
    same expected number of triplets.
    """
    if n_repeats < 2:
        raise ValueError("n_repeats must be >= 2")
    rng = np.random.default_rng(rng)
    anchors = np.arange(hops.num_nodes)
    if batch_size is None:
        batch_size = matched_naive_batch(hops)
    draws = []
    for _ in range(n_repeats):
        if strategy == "node_anchored":
            batch = sample_anchored(hops, anchors, rng)
        elif strategy == "naive":
            batch = sample_naive(hops, batch_size, rng)
        else:
            raise ValueError(f"unknown strategy {strategy!r}")
        _, grads = stochastic_loss_and_grads(params, attrs, batch)
        draws.append(grads)
    out = {}
    flat = []
    for name, block in zip(params.names(), zip(*draws)):
        stacked = np.stack(block)
        # shifting by one draw keeps identical draws at exactly zero variance
        var = np.var(stacked - stacked[0], axis=0, ddof=1)
        out[name] = float(var.mean())
        flat.append(var.ravel())
    out["mean"] = float(np.concatenate(flat).mean())
    return out
