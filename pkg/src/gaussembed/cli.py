"""Command-line interface: ``train``, ``embed``, ``eval`` and ``synth``.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

import numpy as np
import scipy.sparse as sp

from .checkpoint import CheckpointError, read_checkpoint, save_model
from .encoder import embed
from .evaluation import (
    TraceTooShortError,
    detect_latent_dimensions,
    diversity_variance_report,
    eval_classification,
    eval_inductive,
    eval_link_prediction,
    neighborhood_diversity,
    pruning_curve,
)
from .graph import (
    AttributedGraph,
    DataSplit,
    GraphFormatError,
    InfeasibleSplitError,
    generate_sbm,
    load_attributes,
    load_edge_list,
    load_labels,
    plant_bridges,
    split_edges,
)
from .seeding import derive_seed
from .trainer import SAMPLERS, TrainConfig, TrainingTrace, train

log = logging.getLogger("gaussembed")

EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"expected a boolean, got {text!r}")


def _int_list(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(t) for t in text.split(",") if t.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _float_list(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(t) for t in text.split(",") if t.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _add_graph_args(p, required=True):
    p.add_argument("--graph", required=required, help="edge list, one 'src<TAB>dst' per line")
    feats = p.add_mutually_exclusive_group()
    feats.add_argument("--attrs", help="attribute file with a '%%%%g2g-attrs N D' header")
    feats.add_argument("--one-hot", action="store_true", help="use identity features (no attributes)")
    p.add_argument("--labels", help="node labels, 'node<TAB>label' per line")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="gaussembed", description="Gaussian node embeddings from attributed graphs")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    t = sub.add_parser("train", help="fit an encoder and write a checkpoint")
    _add_graph_args(t)
    direction = t.add_mutually_exclusive_group()
    direction.add_argument("--directed", dest="directed", action="store_true", default=False)
    direction.add_argument("--undirected", dest="directed", action="store_false")
    t.add_argument("--dim", type=int, default=64, help="embedding budget L; each node gets L/2 means and L/2 variances")
    t.add_argument("--k", type=int, default=2, help="hop cap K")
    t.add_argument("--hidden", type=_int_list, default=(512,), help="hidden layer sizes, comma-separated")
    t.add_argument("--epochs", type=int, default=2000)
    t.add_argument("--lr", type=float, default=1e-3)
    t.add_argument("--val-frac", type=float, default=0.05)
    t.add_argument("--test-frac", type=float, default=0.10)
    t.add_argument("--edge-cover", type=_bool, default=False)
    t.add_argument("--sampler", choices=SAMPLERS, default="node_anchored")
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--eval-every", type=int, default=5)
    t.add_argument("--patience", type=int, default=10)
    t.add_argument("--anchor-batch", type=int, default=None)
    t.add_argument("--overfit-epochs", type=int, default=0, help="keep training this many epochs past the best one")
    t.add_argument("--hops-undirected", action="store_true", help="ignore edge direction when building hop sets")
    t.add_argument("--no-early-stopping", action="store_true")
    t.add_argument("--out", required=True, help="checkpoint path; trace and split go next to it")

    e = sub.add_parser("embed", help="write embeddings for every row of an attribute file")
    e.add_argument("--model", required=True)
    feats = e.add_mutually_exclusive_group(required=True)
    feats.add_argument("--attrs")
    feats.add_argument("--one-hot", action="store_true")
    e.add_argument("--out", required=True)

    v = sub.add_parser("eval", help="run an evaluation protocol")
    v.add_argument("--model", required=True)
    _add_graph_args(v)
    v.add_argument("--split-manifest", help="defaults to <model>.split.json")
    v.add_argument("--trace", help="defaults to <model>.trace.json")
    v.add_argument("--protocol", required=True, choices=("link", "classify", "inductive", "uncertainty"))
    v.add_argument("--which", choices=("val", "test"), default="test")
    v.add_argument("--train-fractions", type=_float_list, default=(0.1,))
    v.add_argument("--trials", type=int, default=10)
    v.add_argument("--with-log-var", action="store_true")
    v.add_argument("--hidden-fraction", type=float, default=0.10)
    v.add_argument("--window", type=int, default=200)
    v.add_argument("--slope-threshold", type=float, default=1e-3)
    v.add_argument("--seed", type=int, default=None, help="defaults to the training seed")
    v.add_argument("--out", help="write the JSON report here instead of stdout")

    s = sub.add_parser("synth", help="generate a stochastic block model dataset")
    s.add_argument("--n", type=int, default=300)
    s.add_argument("--blocks", type=int, default=3)
    s.add_argument("--p-in", type=float, default=0.1)
    s.add_argument("--p-out", type=float, default=0.01)
    s.add_argument("--attr-dim", type=int, default=32)
    s.add_argument("--attr-noise", type=float, default=0.1)
    s.add_argument("--bridges", type=int, default=0)
    s.add_argument("--links-per-block", type=int, default=3)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out-prefix", required=True)
    return parser


# --------------------------------------------------------------------------
# data loading
# --------------------------------------------------------------------------


def _load_graph(args, directed: bool) -> AttributedGraph:
    attrs = load_attributes(args.attrs) if args.attrs else None
    hint = attrs.shape[0] if attrs is not None else None
    graph = load_edge_list(args.graph, directed=directed, num_nodes_hint=hint)
    if attrs is not None:
        graph = graph.replace(attributes=attrs)
    elif not args.one_hot:
        raise UsageError("either --attrs or --one-hot is required")
    if args.labels:
        graph = load_labels(args.labels, graph)
    return graph


def _sidecar(model_path: str, kind: str) -> str:
    return f"{model_path}.{kind}.json"


def _write_json(path, obj) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=1, sort_keys=True)
        fh.write("\n")


def _read_json(path):
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


# --------------------------------------------------------------------------
# commands
# --------------------------------------------------------------------------


def cmd_train(args) -> int:
    if args.dim < 2 or args.dim % 2:
        raise UsageError(f"--dim must be an even number >= 2, got {args.dim}")
    graph = _load_graph(args, args.directed)
    config = TrainConfig(
        K=args.k,
        half_dim=args.dim // 2,
        hidden_sizes=args.hidden,
        learning_rate=args.lr,
        max_epochs=args.epochs,
        eval_every=args.eval_every,
        patience=args.patience,
        anchor_batch=args.anchor_batch,
        sampler=args.sampler,
        seed=args.seed,
        one_hot=args.one_hot,
        undirected_hops=args.hops_undirected,
        early_stopping=not args.no_early_stopping and args.val_frac > 0,
        overfit_epochs=args.overfit_epochs,
        verbose=args.verbose,
    )
    split = split_edges(graph, args.val_frac, args.test_frac, args.edge_cover, seed=derive_seed(args.seed, "split"))
    params, trace, _ = train(graph, config, split)
    meta = {
        "K": config.K,
        "directed": graph.directed,
        "seed": config.seed,
        "one_hot": config.one_hot,
        "config": config.to_dict(),
    }
    save_model(params, args.out, meta)
    _write_json(_sidecar(args.out, "trace"), trace.to_dict())
    manifest = {
        "num_nodes": graph.num_nodes,
        "directed": graph.directed,
        "val_frac": args.val_frac,
        "test_frac": args.test_frac,
        "edge_cover": args.edge_cover,
        "seed": args.seed,
        "split": split.to_dict(),
    }
    _write_json(_sidecar(args.out, "split"), manifest)
    summary = {"epochs": trace.epochs, "best_epoch": trace.best_epoch, "best_val_auc": trace.best_val_auc}
    if split.test_edges:
        summary.update({f"test_{k}": v for k, v in eval_link_prediction(params, graph, split, "test", config.one_hot).metrics.items()})
    print(json.dumps(summary, sort_keys=True))
    return 0


def _format_row(node: int, mu: np.ndarray, var: np.ndarray) -> str:
    return "\t".join([str(node)] + [format(float(x), ".17g") for x in mu] + [format(float(x), ".17g") for x in var])


def cmd_embed(args) -> int:
    params, meta = read_checkpoint(args.model)
    if args.one_hot:
        attrs = sp.identity(params.input_dim, format="csr")
    else:
        attrs = load_attributes(args.attrs)
        if attrs.shape[1] != params.input_dim:
            raise GraphFormatError(
                f"attribute dimension D'={attrs.shape[1]} does not match the model's D={params.input_dim}"
            )
    emb = embed(params, attrs)
    with open(args.out, "w", encoding="utf-8") as fh:
        for i in range(len(emb)):
            fh.write(_format_row(i, emb.mu[i], emb.var[i]) + "\n")
    return 0


def cmd_eval(args) -> int:
    params, meta = read_checkpoint(args.model)
    one_hot = bool(meta.get("one_hot", False))
    if (one_hot and args.attrs) or (not one_hot and args.one_hot):
        raise UsageError("feature mode (--attrs/--one-hot) must match the trained model")
    args.one_hot = one_hot
    graph = _load_graph(args, bool(meta["directed"]))
    seed = meta.get("seed", 0) if args.seed is None else args.seed
    if args.protocol in ("link", "uncertainty"):
        manifest = _read_json(args.split_manifest or _sidecar(args.model, "split"))
        split = DataSplit.from_dict(manifest["split"])
    if args.protocol == "link":
        report = eval_link_prediction(params, graph, split, args.which, one_hot)
    elif args.protocol == "classify":
        if graph.labels is None:
            raise GraphFormatError("labels required for the classify protocol (pass --labels)")
        report = eval_classification(
            params, graph, args.train_fractions, args.trials, seed, args.with_log_var, one_hot
        )
    elif args.protocol == "inductive":
        config = TrainConfig(**{**meta["config"], "seed": seed, "verbose": args.verbose})
        report = eval_inductive(graph, args.hidden_fraction, config)
    else:
        trace = TrainingTrace.from_dict(_read_json(args.trace or _sidecar(args.model, "trace")))
        kept, flagged = detect_latent_dimensions(trace, args.window, args.slope_threshold)
        report = pruning_curve(params, graph, split, args.which, one_hot)
        report.protocol = "uncertainty"
        rows = report.tables["auc_by_removed"]
        drop_at = min(len(flagged), len(rows) - 1)
        report.metrics["auc_pruned_flagged"] = rows[drop_at][1]
        report.stats.update(latent_dimensions=len(kept), auc_drop_flagged=rows[0][1] - rows[drop_at][1])
        report.config.update(kept=kept, flagged=flagged, window=args.window, slope_threshold=args.slope_threshold)
        if graph.labels is not None:
            emb = embed(params, graph.feature_matrix(one_hot))
            div = diversity_variance_report(emb, neighborhood_diversity(graph, 3))
            report.stats.update(div.stats)
            report.tables.update(div.tables)
    text = report.to_json()
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    else:
        print(text)
    return 0


def cmd_synth(args) -> int:
    graph = generate_sbm(
        args.n, args.blocks, args.p_in, args.p_out, args.attr_dim, args.attr_noise, seed=derive_seed(args.seed, "sbm")
    )
    if args.bridges:
        graph, _ = plant_bridges(graph, args.bridges, args.links_per_block, seed=derive_seed(args.seed, "bridges"))
    prefix = args.out_prefix
    with open(f"{prefix}.edges.tsv", "w", encoding="utf-8") as fh:
        for u, v in graph.edge_list():
            fh.write(f"{u}\t{v}\n")
    x = graph.attributes
    with open(f"{prefix}.attrs.tsv", "w", encoding="utf-8") as fh:
        fh.write(f"%%g2g-attrs {x.shape[0]} {x.shape[1]}\n")
        for i, j in zip(*np.nonzero(x)):
            fh.write(f"{i}\t{j}\t{format(float(x[i, j]), '.17g')}\n")
    with open(f"{prefix}.labels.tsv", "w", encoding="utf-8") as fh:
        for i, lab in enumerate(graph.labels.tolist()):
            fh.write(f"{i}\tblock{lab}\n")
    return 0


COMMANDS = {"train": cmd_train, "embed": cmd_embed, "eval": cmd_eval, "synth": cmd_synth}


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except FloatingPointError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (OSError, GraphFormatError, InfeasibleSplitError, CheckpointError, TraceTooShortError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
