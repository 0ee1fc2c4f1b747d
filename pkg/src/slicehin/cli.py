"""Stage-oriented command line front end.

Every stage reads a flat YAML config (plus ``--set key=value`` overrides),
writes its artifacts under ``out_dir`` and a manifest describing the
effective configuration. Exit codes: 0 ok, 2 config error, 3 missing
prerequisite, 4 numeric failure.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import os
import platform
import sys
from importlib import resources

import numpy as np
import scipy
import yaml

from . import __version__, kernels
from .context import (STRATEGIES, dump_contexts, load_contexts, pair_context,
                      sample_pretraining_contexts)
from .evaluate import (PredictionRecord, auroc, choose_threshold, export_score_distributions,
                       extract_association, micro_f1, mine_metapaths, score_pairs,
                       write_metapaths, write_predictions)
from .features import generate_walks, load_embeddings, save_embeddings, train_skipgram
from .graph import (EdgeSplit, GraphFormatError, NegativeSamplingError, load_edgelist, load_graph,
                    read_split, save_graph, split_edges, write_split)
from .model import SliceModel, similarity
from .train import NumericalError, SamplerConfig, TrainConfig, run_finetuning, run_pretraining

log = logging.getLogger("slicehin")

EXIT_OK, EXIT_CONFIG, EXIT_MISSING, EXIT_NUMERIC = 0, 2, 3, 4

DEFAULTS = {
    "seed": 0,
    "out_dir": "slice_run",
    "graph": None,
    "node_types": None,
    "splits_dir": None,
    "embeddings": None,
    "train_frac": 0.6,
    "dev_frac": 0.1,
    "type_constrained_negatives": False,
    "dim": 128,
    "num_layers": 4,
    "num_heads": 4,
    "max_ctx": 6,
    "contexts_per_node": 1,
    "n_eval_contexts": 10,
    "negative_ratio": 2,
    "strategy": "random_walk",
    "walks_per_node": 10,
    "walk_length": 80,
    "window": 10,
    "sg_negatives": 5,
    "sg_epochs": 1,
    "sg_lr": 0.025,
    "pretrain_epochs": 10,
    "pretrain_lr": 1e-4,
    "finetune_epochs": 10,
    "finetune_lr": 1e-3,
    "batch_size": 16,
    "objective": "similarity",
    "freeze_pretrained": False,
    "patience": None,
    "histogram_bins": 20,
    "explain_relation": None,
    "explain_contexts": 200,
    "explain_dump": 20,
    "top_k": 10,
    "threads": 1,
}
_NULLABLE_PATHS = {"graph", "node_types", "splits_dir", "embeddings", "explain_relation"}

STAGES = ("ingest", "features", "pretrain", "finetune", "evaluate", "explain")


class ConfigError(Exception):
    pass


class MissingPrerequisite(Exception):
    def __init__(self, stage, needed, path):
        super().__init__(f"stage cmd_{stage} is missing {path}; "
                         f"run cmd_{needed} ('slicehin {needed}') first")


# -- configuration -------------------------------------------------------------

def _coerce(key, value):
    default = DEFAULTS[key]
    if value is None:
        if key in _NULLABLE_PATHS or key == "patience":
            return None
        raise ConfigError(f"{key}: must not be null")
    if isinstance(default, bool):
        if isinstance(value, str):
            if value.lower() in ("true", "1", "yes"):
                return True
            if value.lower() in ("false", "0", "no"):
                return False
        if isinstance(value, bool):
            return value
        raise ConfigError(f"{key}: expected a boolean, got {value!r}")
    target = type(default) if default is not None else (int if key == "patience" else str)
    try:
        if target is int and isinstance(value, float) and not value.is_integer():
            raise ValueError
        return target(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{key}: expected {target.__name__}, got {value!r}") from None


def load_config(path=None, overrides=()):
    raw = {}
    if path is not None:
        try:
            with open(path, encoding="utf-8") as fh:
                raw = yaml.safe_load(fh) or {}
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from None
        except yaml.YAMLError as exc:
            raise ConfigError(f"invalid YAML in {path}: {exc}") from None
        if not isinstance(raw, dict):
            raise ConfigError("config must be a flat mapping")
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not key=value")
        key, value = item.split("=", 1)
        raw[key.strip()] = yaml.safe_load(value)
    unknown = sorted(set(raw) - set(DEFAULTS))
    cfg = dict(DEFAULTS)
    errors = []
    for key, value in raw.items():
        if key in DEFAULTS:
            try:
                cfg[key] = _coerce(key, value)
            except ConfigError as exc:
                errors.append(str(exc))
    if not errors:
        if cfg["dim"] % cfg["num_heads"]:
            errors.append(f"dim={cfg['dim']} must be divisible by num_heads={cfg['num_heads']}")
        if cfg["strategy"] not in STRATEGIES[:2]:
            errors.append(f"strategy must be one of {STRATEGIES[:2]}")
        if cfg["objective"] not in ("similarity", "link_head"):
            errors.append("objective must be 'similarity' or 'link_head'")
        if cfg["max_ctx"] < 2:
            errors.append("max_ctx must be >= 2")
        if cfg["negative_ratio"] < 1:
            errors.append("negative_ratio must be >= 1")
        for key in ("pretrain_lr", "finetune_lr", "sg_lr"):
            if cfg[key] <= 0:
                errors.append(f"{key} must be positive")
    errors = [f"unknown field: {k}" for k in unknown] + errors
    if errors:
        raise ConfigError("invalid config:\n  " + "\n  ".join(errors))
    if cfg["graph"] == "@toy":
        cfg["graph"] = _toy_path("toy_edges.tsv")
        cfg["node_types"] = cfg["node_types"] or _toy_path("toy_types.tsv")
    return cfg


def _toy_path(name):
    return str(resources.files("slicehin") / "data" / name)


def config_hash(cfg):
    return hashlib.sha256(json.dumps(cfg, sort_keys=True).encode()).hexdigest()


# -- artifact layout -------------------------------------------------------------

def _p(cfg, *parts):
    return os.path.join(cfg["out_dir"], *parts)


def _need(stage, needed, path):
    if not os.path.exists(path):
        raise MissingPrerequisite(stage, needed, path)


def _require_input(key, path):
    if not os.path.exists(path):
        raise ConfigError(f"invalid config:\n  {key}: path does not exist: {path}")


def _stage_rng(cfg, stage):
    return np.random.default_rng([cfg["seed"], STAGES.index(stage)])


def _write_manifest(cfg, stage, extra=None):
    os.makedirs(_p(cfg, "manifests"), exist_ok=True)
    doc = {"stage": stage, "seed": cfg["seed"], "config_hash": config_hash(cfg), "config": cfg,
           "versions": {"slicehin": __version__, "python": platform.python_version(),
                        "numpy": np.__version__, "scipy": scipy.__version__,
                        "kernels": kernels.BACKEND}}
    if extra:
        doc.update(extra)
    with open(_p(cfg, "manifests", f"{stage}.json"), "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _write_curve(path, rows):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["epoch", "split", "metric", "value"])
        for epoch, split, metric, value in rows:
            w.writerow([epoch, split, metric, repr(float(value))])


def _load_state(cfg):
    g = load_graph(_p(cfg, "graph"))
    split = EdgeSplit(*(read_split(_p(cfg, "splits", f"{name}.tsv"), g)
                        for name in ("train", "dev", "test")))
    return g, split


def _sampler(cfg):
    return SamplerConfig(strategy=cfg["strategy"], max_size=cfg["max_ctx"],
                         negative_ratio=cfg["negative_ratio"],
                         n_eval_contexts=cfg["n_eval_contexts"],
                         type_constrained=cfg["type_constrained_negatives"])


# -- stages ---------------------------------------------------------------------

def cmd_ingest(cfg):
    if not cfg["graph"]:
        raise ConfigError("invalid config:\n  graph: an edge-list path is required for ingest")
    _require_input("graph", cfg["graph"])
    if cfg["node_types"]:
        _require_input("node_types", cfg["node_types"])
    if cfg["splits_dir"]:
        _require_input("splits_dir", cfg["splits_dir"])
    g = load_edgelist(cfg["graph"], cfg["node_types"])
    save_graph(g, _p(cfg, "graph"))
    os.makedirs(_p(cfg, "splits"), exist_ok=True)
    if cfg["splits_dir"]:
        rows = {name: read_split(os.path.join(cfg["splits_dir"], f"{name}.tsv"), g)
                for name in ("train", "dev", "test")}
        split = EdgeSplit(rows["train"], rows["dev"], rows["test"])
        if not split.check_disjoint():
            raise ConfigError("invalid config:\n  splits_dir: train/dev/test overlap on node pairs")
    else:
        split = split_edges(g, cfg["train_frac"], cfg["dev_frac"], _stage_rng(cfg, "ingest"),
                            type_constrained=cfg["type_constrained_negatives"])
    for name, rows in (("train", split.train_pos), ("dev", split.dev), ("test", split.test)):
        write_split(_p(cfg, "splits", f"{name}.tsv"), g, rows)
    log.info("ingested %d nodes, %d edges, %d relations", g.num_nodes, g.num_edges, g.num_relations)
    _write_manifest(cfg, "ingest", {"num_nodes": g.num_nodes, "num_edges": g.num_edges,
                                    "num_relations": g.num_relations})


def cmd_features(cfg):
    _need("features", "ingest", _p(cfg, "graph", "edges.tsv"))
    g, split = _load_state(cfg)
    os.makedirs(_p(cfg, "features"), exist_ok=True)
    if cfg["embeddings"]:
        _require_input("embeddings", cfg["embeddings"])
        table = load_embeddings(cfg["embeddings"], g.node_names)
        if table.dim != cfg["dim"]:
            raise ConfigError(f"invalid config:\n  embeddings: width {table.dim} != dim {cfg['dim']}")
        history = []
    else:
        rng = _stage_rng(cfg, "features")
        train_graph = g.subgraph_with_edges(split.train_pos)
        corpus = generate_walks(train_graph, cfg["walks_per_node"], cfg["walk_length"], rng)
        corpus.window = cfg["window"]
        corpus.negatives_per_target = cfg["sg_negatives"]
        table = train_skipgram(corpus, g.num_nodes, cfg["dim"], cfg["sg_epochs"], cfg["sg_lr"], rng)
        history = table.loss_history
    save_embeddings(_p(cfg, "features", "embeddings.tsv"), table, g.node_names)
    _write_manifest(cfg, "features", {"skipgram_loss": history})


def cmd_pretrain(cfg):
    emb_path = _p(cfg, "features", "embeddings.tsv")
    _need("pretrain", "features", emb_path)
    g, split = _load_state(cfg)
    rng = _stage_rng(cfg, "pretrain")
    table = load_embeddings(emb_path, g.node_names)
    model = SliceModel(g.num_nodes, cfg["dim"], cfg["num_layers"], cfg["num_heads"],
                       embeddings=table, rng=rng)
    train_graph = g.subgraph_with_edges(split.train_pos)
    contexts = sample_pretraining_contexts(train_graph, cfg["contexts_per_node"], cfg["max_ctx"], rng)
    os.makedirs(_p(cfg, "contexts"), exist_ok=True)
    dump_contexts(_p(cfg, "contexts", "pretrain.jsonl"), contexts)
    tcfg = TrainConfig(epochs=cfg["pretrain_epochs"], lr=cfg["pretrain_lr"],
                       batch_size=cfg["batch_size"], seed=cfg["seed"])
    result = run_pretraining(model, load_contexts(_p(cfg, "contexts", "pretrain.jsonl")), tcfg, rng)
    os.makedirs(_p(cfg, "checkpoints"), exist_ok=True)
    os.makedirs(_p(cfg, "metrics"), exist_ok=True)
    result.model.save(_p(cfg, "checkpoints", "pretrained.json"))
    _write_curve(_p(cfg, "metrics", "pretrain_curve.csv"),
                 [(i + 1, "train", "loss", v) for i, v in enumerate(result.losses)])
    _write_manifest(cfg, "pretrain", {"num_contexts": len(contexts)})


def cmd_finetune(cfg):
    ckpt = _p(cfg, "checkpoints", "pretrained.json")
    _need("finetune", "pretrain", ckpt)
    g, split = _load_state(cfg)
    model = SliceModel.load(ckpt)
    tcfg = TrainConfig(epochs=cfg["finetune_epochs"], lr=cfg["finetune_lr"],
                       batch_size=cfg["batch_size"], patience=cfg["patience"],
                       freeze_pretrained=cfg["freeze_pretrained"], objective=cfg["objective"],
                       seed=cfg["seed"])
    result = run_finetuning(model, g, split, tcfg, _sampler(cfg), _stage_rng(cfg, "finetune"),
                            eval_seed=cfg["seed"], threads=cfg["threads"])
    result.model.save(_p(cfg, "checkpoints", "finetuned.json"))
    os.makedirs(_p(cfg, "metrics"), exist_ok=True)
    _write_curve(_p(cfg, "metrics", "finetune_curve.csv"), result.curve)
    _write_manifest(cfg, "finetune", {"dev_threshold": result.threshold})


def _metrics_rows(name, records, threshold):
    rows = [(name, "micro_f1", micro_f1(records, threshold))]
    if len({r.label for r in records}) == 2:
        rows.append((name, "auroc", auroc(records)))
        pos = [r.score for r in records if r.label == 1]
        neg = [r.score for r in records if r.label == 0]
        rows.append((name, "mean_score_gap", float(np.mean(pos) - np.mean(neg))))
    return rows


def cmd_evaluate(cfg):
    ckpt = _p(cfg, "checkpoints", "finetuned.json")
    _need("evaluate", "finetune", ckpt)
    g, split = _load_state(cfg)
    model = SliceModel.load(ckpt)
    train_graph = g.subgraph_with_edges(split.train_pos)
    args = dict(n_contexts=cfg["n_eval_contexts"], strategy=cfg["strategy"],
                max_size=cfg["max_ctx"], threads=cfg["threads"])
    dev = score_pairs(model, train_graph, split.dev, seed=cfg["seed"], **args) if split.dev else []
    test = score_pairs(model, train_graph, split.test, seed=cfg["seed"] + 1, **args)
    if not test:
        raise ConfigError("invalid config:\n  test split is empty")
    threshold = choose_threshold(dev) if dev else 0.5

    emb = load_embeddings(_p(cfg, "features", "embeddings.tsv"), g.node_names).matrix
    base = lambda rows: [PredictionRecord(u, v, lab, similarity(emb[u], emb[v]))  # noqa: E731
                         for u, _, v, lab in rows]
    base_dev, base_test = base(split.dev), base(split.test)
    base_thr = choose_threshold(base_dev) if base_dev else 0.5

    os.makedirs(_p(cfg, "metrics"), exist_ok=True)
    rows = [("dev", "threshold", threshold)]
    if dev:
        rows += _metrics_rows("dev", dev, threshold)
    rows += _metrics_rows("test", test, threshold)
    rows += _metrics_rows("test_global_embedding", base_test, base_thr)
    with open(_p(cfg, "metrics", "metrics.csv"), "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["split", "metric", "value"])
        for split_name, metric, value in rows:
            w.writerow([split_name, metric, repr(float(value))])
    write_predictions(_p(cfg, "metrics", "predictions.csv"), test, threshold)
    export_score_distributions(test, _p(cfg, "metrics", "score_hist.csv"), cfg["histogram_bins"])
    export_score_distributions(base_test, _p(cfg, "metrics", "score_hist_global.csv"),
                               cfg["histogram_bins"])
    for split_name, metric, value in rows:
        log.info("%s %s %.4f", split_name, metric, value)
    _write_manifest(cfg, "evaluate")


def cmd_explain(cfg):
    ckpt = _p(cfg, "checkpoints", "finetuned.json")
    _need("explain", "finetune", ckpt)
    g, split = _load_state(cfg)
    model = SliceModel.load(ckpt)
    train_graph = g.subgraph_with_edges(split.train_pos)
    if cfg["explain_relation"] is None:
        counts = np.bincount([r for _, r, _, *_ in split.train_pos], minlength=g.num_relations)
        relation = int(np.argmax(counts))
    elif cfg["explain_relation"] in g.relation_names:
        relation = g.relation_names.index(cfg["explain_relation"])
    else:
        raise ConfigError(f"invalid config:\n  explain_relation: unknown relation "
                          f"{cfg['explain_relation']!r}")
    pairs = [(u, v) for u, r, v, *_ in split.train_pos if r == relation]
    # Mined paths must explain the relation through other edge types.
    train_graph = train_graph.subgraph_with_edges(
        [e for e in split.train_pos if e[1] != relation])
    rng = _stage_rng(cfg, "explain")
    contexts = []
    if pairs:
        for i in range(cfg["explain_contexts"]):
            u, v = pairs[i % len(pairs)] if i < len(pairs) else pairs[int(rng.integers(len(pairs)))]
            contexts.append(pair_context(train_graph, u, v, cfg["strategy"], cfg["max_ctx"], rng,
                                         skip_direct=True))
    os.makedirs(_p(cfg, "explain"), exist_ok=True)
    with open(_p(cfg, "explain", "associations.jsonl"), "w", encoding="utf-8") as fh:
        for ctx in contexts[:cfg["explain_dump"]]:
            mats = extract_association(model, ctx)
            fh.write(json.dumps({"nodes": [g.node_names[n] for n in ctx.nodes],
                                 "types": [g.type_name(n) for n in ctx.nodes],
                                 "anchor": [g.node_names[n] for n in ctx.anchor],
                                 "layers": {str(k + 1): np.round(m, 6).tolist()
                                            for k, m in enumerate(mats)}},
                                sort_keys=True) + "\n")
    metapaths, skipped = mine_metapaths(model, train_graph, relation, contexts, cfg["top_k"])
    write_metapaths(_p(cfg, "explain", "metapaths.csv"), metapaths)
    _write_manifest(cfg, "explain", {"relation": g.relation_names[relation],
                                     "contexts": len(contexts), "skipped_contexts": skipped})


COMMANDS = {"ingest": cmd_ingest, "features": cmd_features, "pretrain": cmd_pretrain,
            "finetune": cmd_finetune, "evaluate": cmd_evaluate, "explain": cmd_explain}


def build_parser():
    parser = argparse.ArgumentParser(prog="slicehin", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in (*STAGES, "run"):
        p = sub.add_parser(name, help="run every stage in order" if name == "run" else f"{name} stage")
        p.add_argument("-c", "--config", help="YAML config file")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override a config field (repeatable)")
        p.add_argument("--out", help="shortcut for --set out_dir=...")
        p.add_argument("--seed", type=int, help="shortcut for --set seed=...")
        p.add_argument("--threads", type=int, help="worker threads for pair scoring")
    p = sub.add_parser("show-config", help="print the effective configuration as YAML")
    p.add_argument("-c", "--config")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    overrides = list(args.set)
    for flag, key in (("out", "out_dir"), ("seed", "seed"), ("threads", "threads")):
        if getattr(args, flag, None) is not None:
            overrides.append(f"{key}={getattr(args, flag)}")
    try:
        cfg = load_config(args.config, overrides)
        if args.command == "show-config":
            sys.stdout.write(yaml.safe_dump(cfg, sort_keys=True))
            return EXIT_OK
        stages = STAGES if args.command == "run" else (args.command,)
        for stage in stages:
            log.info("stage %s", stage)
            COMMANDS[stage](cfg)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (GraphFormatError, NegativeSamplingError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except MissingPrerequisite as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MISSING
    except (NumericalError, FloatingPointError) as exc:
        print(f"error: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
