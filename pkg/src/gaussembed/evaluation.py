"""Evaluation protocols: link prediction, classification, uncertainty, inductive."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.optimize
import scipy.special
from scipy.stats import spearmanr

from .encoder import EncoderParameters, embed
from .energy import GaussianEmbedding, energy_terms
from .graph import AttributedGraph, DataSplit, HopIndex, build_hop_index, hide_nodes, split_edges
from .metrics import ScoredPairSet, auc, average_precision, score_link_pairs
from .seeding import derive_rng, derive_seed
from .trainer import TrainConfig, TrainingTrace, train


@dataclass
class EvaluationReport:
    protocol: str
    metrics: dict[str, float] = field(default_factory=dict)
    config: dict = field(default_factory=dict)
    stats: dict[str, float] = field(default_factory=dict)  # values not confined to [0, 1]
    tables: dict[str, list] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, default=_json_default)

    def write_csv(self, name: str, path, header: list[str]) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(",".join(header) + "\n")
            for row in self.tables[name]:
                fh.write(",".join(repr(x) for x in row) + "\n")


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(type(o))


# --------------------------------------------------------------------------
# link prediction
# --------------------------------------------------------------------------


def _held_out(split: DataSplit, which: str):
    if which == "val":
        return split.val_edges, split.val_non_edges
    if which == "test":
        return split.test_edges, split.test_non_edges
    raise ValueError("which must be 'val' or 'test'")


def eval_link_prediction(
    params: EncoderParameters, graph: AttributedGraph, split: DataSplit, which: str = "test", one_hot: bool = False
) -> EvaluationReport:
    emb = embed(params, graph.feature_matrix(one_hot))
    edges, non_edges = _held_out(split, which)
    scored = score_link_pairs(emb, edges, non_edges, graph.directed)
    return EvaluationReport(
        "link",
        {"auc": auc(scored), "ap": average_precision(scored)},
        {"which": which, "edges": len(edges), "non_edges": len(non_edges)},
    )


def ranking_fraction(emb: GaussianEmbedding, graph: AttributedGraph, depth: int = 3) -> float:
    """Share of nodes whose mean energy grows with hop distance.

    Buckets are exact distances ``1 .. depth-1`` plus ``>= depth`` (including
    unreachable nodes).  A node passes when the means of its non-empty
    buckets increase strictly; nodes without out-neighbours are skipped.
    """
    hops = build_hop_index(graph, depth)
    energy = energy_terms(emb.mu[:, None], emb.var[:, None], emb.mu[None], emb.var[None]).sum(-1)
    hop = hops.hop_matrix()
    passed = total = 0
    for i in range(graph.num_nodes):
        means = [energy[i, hop[i] == k].mean() for k in range(1, depth + 1) if np.any(hop[i] == k)]
        if hops.counts[i, 0] == 0:
            continue
        total += 1
        passed += all(a < b for a, b in zip(means[:-1], means[1:]))
    return passed / total if total else 0.0


# --------------------------------------------------------------------------
# logistic regression
# --------------------------------------------------------------------------


@dataclass
class LogisticRegression:
    weights: np.ndarray  # (features, classes)
    bias: np.ndarray
    classes: np.ndarray
    l2_strength: float

    def predict_proba(self, features) -> np.ndarray:
        return scipy.special.softmax(np.asarray(features) @ self.weights + self.bias, axis=1)

    def predict(self, features) -> np.ndarray:
        return self.classes[np.argmax(self.predict_proba(features), axis=1)]


L2_GRID = tuple(10.0**p for p in range(-4, 3))


def _fit_fixed(x, y_idx, n_classes, l2, max_iters):
    n, d = x.shape
    onehot = np.eye(n_classes)[y_idx]

    def objective(theta):
        w = theta[: d * n_classes].reshape(d, n_classes)
        b = theta[d * n_classes :]
        logits = x @ w + b
        logp = logits - scipy.special.logsumexp(logits, axis=1, keepdims=True)
        loss = -np.sum(onehot * logp) / n + 0.5 * l2 * np.sum(w * w)
        resid = (np.exp(logp) - onehot) / n
        grad = np.concatenate([(x.T @ resid + l2 * w).ravel(), resid.sum(axis=0)])
        return loss, grad

    theta0 = np.zeros(d * n_classes + n_classes)
    res = scipy.optimize.minimize(
        objective, theta0, jac=True, method="L-BFGS-B",
        options={"maxiter": max_iters, "gtol": 1e-5, "ftol": 0.0},
    )
    return res.x[: d * n_classes].reshape(d, n_classes), res.x[d * n_classes :]


def fit_logistic_regression(
    features,
    labels,
    l2_strength: float | None = 1e-2,
    max_iters: int = 1000,
    seed=None,
    grid=L2_GRID,
    folds: int = 3,
) -> LogisticRegression:
    """Multinomial L2-regularised logistic regression.

    ``l2_strength=None`` selects the strength from ``grid`` by ``folds``-fold
    cross-validated accuracy; ties go to the lower held-out log-loss.
    """
    x = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels)
    classes, y_idx = np.unique(y, return_inverse=True)
    if len(classes) < 2:
        raise ValueError("logistic regression needs at least two classes")
    if l2_strength is None:
        rng = np.random.default_rng(seed)
        fold_of = rng.permutation(len(y)) % folds
        best, best_score = grid[-1], (-1.0, -np.inf)
        for lam in sorted(grid, reverse=True):
            accs, nll = [], []
            for f in range(folds):
                tr, te = fold_of != f, fold_of == f
                if len(np.unique(y_idx[tr])) < 2 or not te.any():
                    continue
                w, b = _fit_fixed(x[tr], y_idx[tr], len(classes), lam, max_iters)
                logits = x[te] @ w + b
                logp = logits - scipy.special.logsumexp(logits, axis=1, keepdims=True)
                accs.append(np.mean(np.argmax(logits, axis=1) == y_idx[te]))
                nll.append(-np.mean(logp[np.arange(te.sum()), y_idx[te]]))
            score = (float(np.mean(accs)), -float(np.mean(nll))) if accs else (-1.0, -np.inf)
            if score > best_score:
                best, best_score = lam, score
        l2_strength = best
    w, b = _fit_fixed(x, y_idx, len(classes), l2_strength, max_iters)
    return LogisticRegression(w, b, classes, l2_strength)


def macro_f1(y_true, y_pred, classes) -> float:
    scores = []
    for c in classes:
        tp = np.sum((y_pred == c) & (y_true == c))
        fp = np.sum((y_pred == c) & (y_true != c))
        fn = np.sum((y_pred != c) & (y_true == c))
        denom = 2 * tp + fp + fn
        scores.append(2 * tp / denom if denom else 0.0)
    return float(np.mean(scores))


def node_features(emb: GaussianEmbedding, with_log_var: bool = False) -> np.ndarray:
    return np.hstack([emb.mu, np.log(emb.var)]) if with_log_var else emb.mu


def eval_classification(
    params: EncoderParameters,
    graph: AttributedGraph,
    train_fractions=(0.1,),
    n_trials: int = 10,
    seed: int = 0,
    with_log_var: bool = False,
    one_hot: bool = False,
    cross_validate: bool = True,
    max_retries: int = 100,
) -> EvaluationReport:
    if graph.labels is None:
        raise ValueError("labels required for classification")
    feats = node_features(embed(params, graph.feature_matrix(one_hot)), with_log_var)
    return classify_features(feats, graph.labels, train_fractions, n_trials, seed, cross_validate, max_retries)


def classify_features(feats, labels, train_fractions=(0.1,), n_trials=10, seed=0, cross_validate=True, max_retries=100):
    labeled = np.flatnonzero(labels >= 0)
    y_all = labels[labeled]
    classes = np.unique(y_all)
    report = EvaluationReport(
        "classify", config={"train_fractions": list(train_fractions), "n_trials": n_trials, "seed": seed}
    )
    rows = []
    for f in train_fractions:
        n_train = int(round(f * len(labeled)))
        if n_train >= len(labeled):
            raise ValueError(f"train fraction {f} leaves no labeled nodes for evaluation")
        if n_train < len(classes):
            raise ValueError(f"train fraction {f} gives fewer training nodes than classes")
        accs, f1s = [], []
        for trial in range(n_trials):
            rng = derive_rng(seed, f"classify/{f}", trial)
            for _ in range(max_retries):
                perm = rng.permutation(len(labeled))
                tr, te = perm[:n_train], perm[n_train:]
                if len(np.unique(y_all[tr])) == len(classes):
                    break
            else:
                raise ValueError(f"could not draw a training sample covering all classes at f={f}")
            model = fit_logistic_regression(
                feats[labeled[tr]], y_all[tr], None if cross_validate else 1e-2, seed=rng
            )
            pred = model.predict(feats[labeled[te]])
            accs.append(float(np.mean(pred == y_all[te])))
            f1s.append(macro_f1(y_all[te], pred, classes))
        report.metrics[f"accuracy@{f}"] = float(np.mean(accs))
        report.metrics[f"f1_macro@{f}"] = float(np.mean(f1s))
        rows.append([f, float(np.mean(accs)), float(np.std(accs)), float(np.mean(f1s)), float(np.std(f1s))])
    report.tables["by_fraction"] = rows
    return report


# --------------------------------------------------------------------------
# uncertainty
# --------------------------------------------------------------------------


def neighborhood_diversity(graph: AttributedGraph, p: int = 3, hops: HopIndex | None = None) -> np.ndarray:
    """Number of distinct neighbour classes within ``p`` hops (unlabeled ignored)."""
    if graph.labels is None:
        raise ValueError("labels required for diversity")
    if hops is None or hops.K < p + 1:
        hops = build_hop_index(graph, p + 1)
    ball = hops.near[0]
    for m in hops.near[1:p]:
        ball = ball + m
    ball = ball.tocsr()
    out = np.zeros(graph.num_nodes, dtype=np.int64)
    for i in range(graph.num_nodes):
        lab = graph.labels[ball.indices[ball.indptr[i] : ball.indptr[i + 1]]]
        out[i] = len(np.unique(lab[lab >= 0]))
    return out


def diversity_variance_report(emb: GaussianEmbedding, diversities, mask=None) -> EvaluationReport:
    """Mean per-node variance grouped by diversity, plus their Spearman correlation."""
    avg_var = emb.var.mean(axis=1)
    div = np.asarray(diversities)
    if mask is not None:
        avg_var, div = avg_var[mask], div[mask]
    table = [[int(d), int(np.sum(div == d)), float(avg_var[div == d].mean())] for d in np.unique(div)]
    if np.ptp(avg_var) == 0 or np.ptp(div) == 0:
        rho = 0.0
    else:
        rho = float(spearmanr(div, avg_var).statistic)
    return EvaluationReport("diversity", stats={"spearman": rho}, tables={"by_diversity": table})


class TraceTooShortError(ValueError):
    pass


def detect_latent_dimensions(trace: TrainingTrace, window: int = 200, slope_threshold: float = 1e-3):
    """Split dimensions into (kept, flagged) by the trend of their mean variance.

    The least-squares slope of each dimension's mean variance over the last
    ``window`` epochs is divided by that dimension's window mean; dimensions
    whose normalised slope exceeds ``slope_threshold`` keep inflating while
    the model overfits and are flagged.
    """
    if trace.epochs - trace.best_epoch < window or window < 2:
        raise TraceTooShortError(
            f"trace too short: need {window} epochs past best epoch {trace.best_epoch}, have {trace.epochs}"
        )
    rows = np.asarray(trace.var_mean[-window:], dtype=np.float64)
    t = np.arange(window, dtype=np.float64)
    t -= t.mean()
    slope = (t @ (rows - rows.mean(axis=0))) / (t @ t)
    normalized = slope / rows.mean(axis=0)
    flagged = np.flatnonzero(normalized > slope_threshold)
    kept = np.flatnonzero(normalized <= slope_threshold)
    return kept.tolist(), flagged.tolist()


def _restricted_link_scores(per_dim_fwd, per_dim_back, kept, directed):
    fwd = per_dim_fwd[:, kept].sum(axis=1)
    if directed:
        return -fwd
    return -(fwd + per_dim_back[:, kept].sum(axis=1)) / 2.0


def pruning_curve(
    params: EncoderParameters,
    graph: AttributedGraph,
    split: DataSplit,
    which: str = "test",
    one_hot: bool = False,
) -> EvaluationReport:
    """Link-prediction AUC as dimensions are removed, most uncertain first."""
    emb = embed(params, graph.feature_matrix(one_hot))
    edges, non_edges = _held_out(split, which)
    pairs = np.asarray(list(edges) + list(non_edges), dtype=np.int64).reshape(-1, 2)
    labels = np.r_[np.ones(len(edges)), np.zeros(len(non_edges))]
    u, v = pairs[:, 0], pairs[:, 1]
    fwd = energy_terms(emb.mu[u], emb.var[u], emb.mu[v], emb.var[v])
    back = energy_terms(emb.mu[v], emb.var[v], emb.mu[u], emb.var[u])
    order = np.argsort(-emb.var.mean(axis=0), kind="stable")
    rows = []
    for r in range(emb.dim):
        kept = order[r:]
        rows.append([r, auc(_restricted_link_scores(fwd, back, kept, graph.directed), labels)])
    return EvaluationReport(
        "pruning",
        {"auc_full": rows[0][1]},
        {"which": which, "removal_order": order.tolist()},
        tables={"auc_by_removed": rows},
    )


# --------------------------------------------------------------------------
# inductive
# --------------------------------------------------------------------------


def sample_hidden_non_edges(graph: AttributedGraph, hidden, count: int, rng) -> list[tuple[int, int]]:
    """Uniform non-edges with at least one endpoint in ``hidden``."""
    n = graph.num_nodes
    is_hidden = np.zeros(n, dtype=bool)
    is_hidden[np.asarray(hidden, dtype=np.int64)] = True
    edges = set(graph.edge_keys().tolist())
    n_hid = int(is_hidden.sum())
    n_vis = n - n_hid
    pool = n * (n - 1) - n_vis * (n_vis - 1)  # ordered pairs touching a hidden node
    if not graph.directed:
        pool //= 2
    touching = sum(1 for u, v in graph.edge_list() if is_hidden[u] or is_hidden[v])
    if count > pool - touching:
        raise ValueError("not enough candidate non-edges touching hidden nodes")
    out, seen = [], set()
    while len(out) < count:
        a = rng.integers(0, n, size=4 * (count - len(out)) + 16)
        b = rng.integers(0, n, size=len(a))
        for x, y in zip(a.tolist(), b.tolist()):
            if x == y or not (is_hidden[x] or is_hidden[y]):
                continue
            if not graph.directed and x > y:
                x, y = y, x
            key = x * n + y
            if key in seen or key in edges:
                continue
            seen.add(key)
            out.append((x, y))
            if len(out) == count:
                break
    return out


def eval_inductive(
    graph: AttributedGraph, fraction: float, config: TrainConfig, val_frac: float = 0.05
) -> EvaluationReport:
    """Hide nodes, train on the rest, embed the hidden ones from attributes only."""
    if config.one_hot:
        raise ValueError("inductive evaluation needs node attributes")
    seed = config.seed
    hidden = hide_nodes(graph, fraction, seed=derive_seed(seed, "hide"))
    inner = split_edges(hidden.graph, val_frac, 0.0, seed=derive_seed(seed, "inductive-split"))
    params, trace, _ = train(hidden.graph, config, inner)
    emb = embed(params, graph.feature_matrix())
    rng = derive_rng(seed, "inductive-negatives")
    negatives = sample_hidden_non_edges(graph, hidden.hidden, len(hidden.held_out), rng)
    scored = score_link_pairs(emb, hidden.held_out, negatives, graph.directed)
    return EvaluationReport(
        "inductive",
        {"auc": auc(scored), "ap": average_precision(scored)},
        {
            "fraction": fraction,
            "hidden_nodes": len(hidden.hidden),
            "held_out_edges": len(hidden.held_out),
            "epochs": trace.epochs,
            "best_epoch": trace.best_epoch,
        },
    )
