"""Adam training loop with validation-AUC early stopping."""

from __future__ import annotations

import sys
from dataclasses import asdict, dataclass, field

import numpy as np

from .encoder import EncoderParameters, embed, init_xavier
from .energy import GaussianEmbedding
from .graph import AttributedGraph, DataSplit, build_hop_index
from .metrics import auc, score_link_pairs
from .ranking import (
    exact_pair_weights,
    matched_naive_batch,
    pair_loss_and_grads,
    sample_anchored,
    sample_naive,
    stochastic_loss_and_grads,
)
from .seeding import derive_rng, derive_seed

SAMPLERS = ("node_anchored", "naive", "full")


@dataclass
class TrainConfig:
    K: int = 2
    half_dim: int = 32
    hidden_sizes: tuple[int, ...] = (512,)
    learning_rate: float = 1e-3
    max_epochs: int = 2000
    eval_every: int = 5
    patience: int = 10
    anchor_batch: int | None = None  # None: all nodes up to 10000, else 512
    sampler: str = "node_anchored"
    naive_batch: int | None = None  # None: matched to node-anchored triplet count
    seed: int = 0
    one_hot: bool = False
    undirected_hops: bool = False
    early_stopping: bool = True
    overfit_epochs: int = 0  # keep recording this many epochs past the best one
    verbose: bool = False

    def __post_init__(self):
        self.hidden_sizes = tuple(int(s) for s in self.hidden_sizes)
        if self.sampler not in SAMPLERS:
            raise ValueError(f"sampler must be one of {SAMPLERS}")
        if self.K < 1 or self.half_dim < 1 or self.eval_every < 1 or self.patience < 1:
            raise ValueError("K, half_dim, eval_every and patience must be >= 1")
        if self.max_epochs < 0 or self.overfit_epochs < 0:
            raise ValueError("epoch counts must be >= 0")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["hidden_sizes"] = list(self.hidden_sizes)
        return d


@dataclass
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    step: int = 0

    @classmethod
    def zeros_like(cls, params: EncoderParameters) -> "AdamState":
        return cls([np.zeros_like(a) for a in params.arrays()], [np.zeros_like(a) for a in params.arrays()])


def adam_step(
    params: EncoderParameters,
    grads,
    state: AdamState,
    lr: float = 1e-3,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> tuple[EncoderParameters, AdamState]:
    """Bias-corrected Adam update, applied in place."""
    arrays = params.arrays()
    if len(grads) != len(arrays) or any(g.shape != a.shape for g, a in zip(grads, arrays)):
        raise ValueError("gradient shapes do not match parameters")
    state.step += 1
    c1 = 1.0 - beta1**state.step
    c2 = 1.0 - beta2**state.step
    for a, g, m, v in zip(arrays, grads, state.m, state.v):
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        a -= lr * (m / c1) / (np.sqrt(v / c2) + eps)
    return params, state


@dataclass
class TrainingTrace:
    loss: list[float] = field(default_factory=list)
    val_auc: list[float | None] = field(default_factory=list)
    var_mean: list[list[float]] = field(default_factory=list)
    triplets_seen: list[int] = field(default_factory=list)
    best_epoch: int = 0  # 1-based; 0 means the initial parameters
    stopped_epoch: int | None = None

    @property
    def epochs(self) -> int:
        return len(self.loss)

    @property
    def best_val_auc(self) -> float | None:
        vals = [a for a in self.val_auc if a is not None]
        if not vals:
            return None
        return self.val_auc[self.best_epoch - 1] if self.best_epoch else max(vals)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainingTrace":
        return cls(**d)


def variance_row(emb: GaussianEmbedding) -> np.ndarray:
    """Per-dimension variance averaged over nodes."""
    return emb.var.mean(axis=0)


def record_variance_trace(embeddings_per_epoch, trace: TrainingTrace | None = None) -> TrainingTrace:
    trace = trace if trace is not None else TrainingTrace()
    for emb in embeddings_per_epoch:
        trace.var_mean.append(variance_row(emb).tolist())
    return trace


def _val_auc(emb, split: DataSplit, directed: bool) -> float:
    return auc(score_link_pairs(emb, split.val_edges, split.val_non_edges, directed))


def train(
    graph: AttributedGraph,
    config: TrainConfig,
    split: DataSplit | None = None,
    init: EncoderParameters | None = None,
) -> tuple[EncoderParameters, TrainingTrace, GaussianEmbedding]:
    """Fit the encoder on ``split.train_edges`` (or the whole graph).

    Returns the best-validation parameters (the last ones without early
    stopping), the per-epoch trace and the returned parameters' embeddings of
    every node.
    """
    early = config.early_stopping and split is not None
    if config.early_stopping and split is not None and not split.val_edges:
        raise ValueError("early stopping requested but the split has no validation edges")
    train_graph = split.train_graph(graph) if split is not None else graph
    attrs = train_graph.feature_matrix(config.one_hot)
    n = train_graph.num_nodes
    hops = build_hop_index(train_graph, config.K, config.undirected_hops)
    params = init.copy() if init is not None else init_xavier(
        attrs.shape[1], config.hidden_sizes, config.half_dim, seed=derive_seed(config.seed, "init")
    )
    rng = derive_rng(config.seed, "sampling")
    state = AdamState.zeros_like(params)
    trace = TrainingTrace()
    best = params.copy()
    best_auc = -np.inf
    checks_since_best = 0
    batch = config.anchor_batch or (n if n <= 10000 else 512)
    if config.sampler == "full":
        full_pairs = exact_pair_weights(hops)
        full_count = int(hops.triplet_counts().sum())
    seen = 0
    last_epoch = config.max_epochs
    for epoch in range(1, config.max_epochs + 1):
        epoch_loss = 0.0
        if config.sampler == "full":
            loss, grads = pair_loss_and_grads(params, attrs, *full_pairs)
            adam_step(params, grads, state, config.learning_rate)
            epoch_loss, seen = loss, seen + full_count
        else:
            order = rng.permutation(n) if batch < n else np.arange(n)
            for start in range(0, n, batch):
                anchors = order[start : start + batch]
                if config.sampler == "node_anchored":
                    sample = sample_anchored(hops, anchors, rng)
                else:
                    size = config.naive_batch or max(1, matched_naive_batch(hops) * len(anchors) // n)
                    sample = sample_naive(hops, size, rng)
                loss, grads = stochastic_loss_and_grads(params, attrs, sample)
                adam_step(params, grads, state, config.learning_rate)
                epoch_loss += loss
                seen += len(sample)
        if not np.isfinite(epoch_loss):
            raise FloatingPointError(f"non-finite loss at epoch {epoch}")
        emb = embed(params, attrs)
        trace.loss.append(epoch_loss)
        trace.var_mean.append(variance_row(emb).tolist())
        trace.triplets_seen.append(seen)
        val = None
        if split is not None and split.val_edges and epoch % config.eval_every == 0:
            val = _val_auc(emb, split, train_graph.directed)
            if trace.stopped_epoch is None:
                if val > best_auc:
                    best_auc, best, trace.best_epoch = val, params.copy(), epoch
                    checks_since_best = 0
                else:
                    checks_since_best += 1
                if early and checks_since_best >= config.patience:
                    trace.stopped_epoch = epoch
        trace.val_auc.append(val)
        if config.verbose:
            shown = "" if val is None else f"{val:.6f}"
            print(f"{epoch}\t{epoch_loss:.6g}\t{shown}", file=sys.stderr)
        if trace.stopped_epoch is not None and epoch >= trace.best_epoch + config.overfit_epochs:
            last_epoch = epoch
            break
    if not early:
        best = params
        trace.best_epoch = last_epoch if config.max_epochs else 0
    return best, trace, embed(best, attrs)
