"""Ranking metrics and link scoring from Gaussian embeddings."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata

from .energy import GaussianEmbedding, pair_energies


class UndefinedMetricError(ValueError):
    pass


@dataclass
class ScoredPairSet:
    pairs: list[tuple[int, int]]
    scores: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        self.scores = np.asarray(self.scores, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if not (len(self.pairs) == len(self.scores) == len(self.labels)):
            raise ValueError("pairs, scores and labels must have equal length")


def _unpack(scored, labels=None):
    if isinstance(scored, ScoredPairSet):
        return scored.scores, scored.labels
    return np.asarray(scored, dtype=np.float64), np.asarray(labels, dtype=np.int64)


def auc(scored, labels=None) -> float:
    """Mann-Whitney AUC: P(score_pos > score_neg), ties counted one half."""
    scores, labels = _unpack(scored, labels)
    pos = labels == 1
    n_pos, n_neg = int(pos.sum()), int((~pos).sum())
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError("AUC needs at least one positive and one negative")
    ranks = rankdata(scores)  # average ranks: ties share credit
    u = ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def average_precision(scored, labels=None) -> float:
    """Mean of precision@rank over positives, ranked by descending score.

    Tied scores keep their input order (stable sort).
    """
    scores, labels = _unpack(scored, labels)
    if not np.any(labels == 1):
        raise UndefinedMetricError("average precision needs at least one positive")
    order = np.argsort(-scores, kind="stable")
    hits = labels[order] == 1
    ranks = np.flatnonzero(hits) + 1
    precision = np.arange(1, len(ranks) + 1) / ranks
    return float(precision.mean())


def link_scores(emb: GaussianEmbedding, pairs, directed: bool) -> np.ndarray:
    """Negative energy; undirected pairs average both directions."""
    arr = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    fwd = pair_energies(emb, arr[:, 0], arr[:, 1])
    if directed:
        return -fwd
    back = pair_energies(emb, arr[:, 1], arr[:, 0])
    return -(fwd + back) / 2.0


def score_link_pairs(emb: GaussianEmbedding, edges, non_edges, directed: bool) -> ScoredPairSet:
    pairs = [tuple(e) for e in edges] + [tuple(e) for e in non_edges]
    labels = np.r_[np.ones(len(edges), dtype=np.int64), np.zeros(len(non_edges), dtype=np.int64)]
    return ScoredPairSet(pairs, link_scores(emb, pairs, directed), labels)
