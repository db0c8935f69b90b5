"""Command-line entry point: ``indlp <command> [options]``.

Every command accepts ``--config FILE`` (JSON). Top-level keys override
defaults, the optional sections ``walk``, ``model``, ``train`` and ``gen``
feed the matching config objects, and explicit flags override both. Logs
are JSON lines on stderr; results go to stdout and to the output files.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import kernels
from .datasetgen import GenConfig, GenerationError, generate, kcore, skewed_relations
from .evaluator import brute_force_oracle, evaluate
from .features import (EntityInputs, FeatureError, FeatureMatrix, TokenVocabulary,
                       assemble_relation_inputs, build_bow_features, load_feature_file,
                       one_hot_features)
from .gradcheck import run_grid
from .kg import (KnowledgeGraph, SplitDataset, TripleFormatError, build_graph, classify_setting,
                 load_split_dir, load_text_records, load_triples, write_text_records,
                 write_triples)
from .model import DimensionError, load_checkpoint, save_checkpoint
from .relwalk import WalkConfig, embed_relations
from .trainer import ModelConfig, TrainConfig, history_to_json, prepare_split_graph_features, train
from .vectors import VectorFormatError, write_vectors
from .weidner import NetworkFormatError, build_network, read_network, write_network

logger = logging.getLogger("indlp")

GRADCHECK_TOLERANCE = 1e-4

# flag dest -> (config section, field); flags not listed here are top-level
SECTION_FLAGS = {
    "walk_dim": ("walk", "dim"), "walk_epochs": ("walk", "epochs"),
    "num_walks": ("walk", "num_walks_per_node"), "walk_length": ("walk", "walk_length"),
    "window": ("walk", "window_size"), "p": ("walk", "p"), "q": ("walk", "q"),
    "dim": ("model", "dim"), "scorer": ("model", "scorer"), "sharing": ("model", "sharing"),
    "epochs": ("train", "epochs"), "batch_size": ("train", "batch_size"),
    "lr": ("train", "learning_rate"), "loss": ("train", "loss"), "margin": ("train", "margin"),
    "l2": ("train", "l2_coeff"), "negatives": ("train", "negatives_per_positive"),
    "eval_every": ("train", "eval_every"),
    "min_triples": ("gen", "min_triples"), "k": ("gen", "k"), "ratios": ("gen", "ratios"),
    "skew_threshold": ("gen", "skew_threshold"), "inverse_threshold": ("gen", "inverse_threshold"),
}
SECTIONS = {"walk": WalkConfig, "model": ModelConfig, "train": TrainConfig, "gen": GenConfig}
GLOBAL_KEYS = {"command", "config", "log_level", "func"}


class ConfigError(ValueError):
    pass


class JsonLogFormatter(logging.Formatter):
    def format(self, record: logging.LogRecord) -> str:
        doc = {"level": record.levelname.lower(), "logger": record.name, "msg": record.getMessage()}
        extra = getattr(record, "data", None)
        if extra:
            doc.update(extra)
        return json.dumps(doc, sort_keys=True, default=str)


def _setup_logging(level: str) -> None:
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(JsonLogFormatter())
    root = logging.getLogger("indlp")
    root.handlers[:] = [handler]
    root.setLevel(level.upper())
    root.propagate = False


def _log(msg: str, **data) -> None:
    logger.info(msg, extra={"data": data})


# -- configuration -----------------------------------------------------------

def resolve_config(args: argparse.Namespace) -> dict:
    """Merge defaults, the JSON config file and explicit flags (flags win)."""
    cfg: dict = {name: {} for name in SECTIONS}
    if args.config:
        path = Path(args.config)
        if not path.is_file():
            raise ConfigError(f"config file not found: {path}")
        try:
            loaded = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from None
        if not isinstance(loaded, dict):
            raise ConfigError(f"{path}: top level must be an object")
        for key, value in loaded.items():
            if key in SECTIONS:
                if not isinstance(value, dict):
                    raise ConfigError(f"config section {key!r} must be an object")
                cfg[key].update(value)
            else:
                cfg[key] = value
    for dest, value in vars(args).items():
        if dest in GLOBAL_KEYS or value is None:
            continue
        if dest in SECTION_FLAGS:
            section, key = SECTION_FLAGS[dest]
            cfg[section][key] = value
        else:
            cfg[dest] = value
    cfg.setdefault("seed", 0)
    cfg.setdefault("threads", 1)
    if cfg.get("deterministic"):
        cfg["threads"] = 1
    for name in ("walk", "train", "gen"):
        cfg[name].setdefault("seed", cfg["seed"])
    return cfg


def _section(cfg: dict, name: str):
    cls = SECTIONS[name]
    try:
        return cls(**cfg[name])
    except TypeError as exc:
        raise ConfigError(f"bad {name} config: {exc}") from None
    except ValueError as exc:
        raise ConfigError(f"invalid {name} config: {exc}") from None


def _require(cfg: dict, *keys: str) -> None:
    missing = [k for k in keys if not cfg.get(k)]
    if missing:
        raise ConfigError(f"missing required settings: {', '.join('--' + k.replace('_', '-') for k in missing)}")


def _existing(cfg: dict, *keys: str) -> None:
    for key in keys:
        value = cfg.get(key)
        if value and value != "onehot" and not Path(value).exists():
            raise ConfigError(f"{key.replace('_', '-')}: path not found: {value}")


def _emit(doc: dict) -> None:
    print(json.dumps(doc, indent=2, sort_keys=True, default=str))


# -- feature loading -----------------------------------------------------------

def _entity_inputs(cfg: dict, splits: SplitDataset) -> EntityInputs:
    src = cfg["entity_features"]
    if src == "onehot":
        return EntityInputs(one_hot_features(splits.entities.names))
    return EntityInputs(load_feature_file(src, source="pretrained_file"))


def _relation_inputs(cfg: dict, splits: SplitDataset, graph: FeatureMatrix | None):
    mode = cfg.get("relation_mode", "text_only")
    text = None
    src = cfg.get("relation_text_features")
    if src == "onehot":
        text = one_hot_features(splits.relations.names)
    elif src:
        text = load_feature_file(src)
    if graph is None and cfg.get("relation_graph_features"):
        graph = load_feature_file(cfg["relation_graph_features"], source="graph")
    return assemble_relation_inputs(text, graph, mode)


# -- commands ----------------------------------------------------------------

def cmd_weidner(cfg: dict) -> int:
    _require(cfg, "triples", "out")
    _existing(cfg, "triples")
    graph = build_graph(load_triples(cfg["triples"]))
    net = build_network(graph)
    write_network(net, cfg["out"])
    _emit({"nodes": net.n_nodes, "edges": net.n_edges, "isolated": len(net.isolated()),
           "out": cfg["out"]})
    return 0


def _network_from(cfg: dict):
    if cfg.get("network"):
        return read_network(cfg["network"])
    return build_network(build_graph(load_triples(cfg["triples"])))


def cmd_embed_relations(cfg: dict) -> int:
    _require(cfg, "out")
    if not cfg.get("network") and not cfg.get("triples"):
        raise ConfigError("one of --network or --triples is required")
    _existing(cfg, "network", "triples")
    walk = _section(cfg, "walk")
    net = _network_from(cfg)
    emb = embed_relations(net, walk, threads=cfg["threads"])
    if emb.fallback:
        _log("isolated relations get zero vectors", relations=emb.fallback)
    write_vectors(cfg["out"], emb.names, emb.vectors)
    _emit({"relations": len(emb.names), "dim": emb.dim, "fallback": emb.fallback,
           "implementation": kernels.IMPLEMENTATION, "out": cfg["out"]})
    return 0


def cmd_features_bow(cfg: dict) -> int:
    _require(cfg, "records", "vocab", "out")
    _existing(cfg, "records", "vocab")
    records = list(load_text_records(cfg["records"]).values())
    vocab = TokenVocabulary.load(cfg["vocab"])
    feats = build_bow_features(records, vocab, use_description=not cfg.get("label_only"))
    feats.write(cfg["out"])
    _emit({"records": len(feats), "dim": feats.dim, "out": cfg["out"]})
    return 0


def _make_train_log():
    def log(event: dict) -> None:
        if "valid" in event:
            _log("validation", **event)
    return log


def cmd_train(cfg: dict) -> int:
    _require(cfg, "data", "entity_features", "out_dir")
    _existing(cfg, "data", "entity_features", "relation_text_features", "relation_graph_features")
    model_cfg = _section(cfg, "model")
    train_cfg = _section(cfg, "train")
    walk_cfg = _section(cfg, "walk")
    mode = cfg.get("relation_mode", "text_only")
    if mode not in ("text_only", "graph_only", "concat"):
        raise ConfigError(f"unknown relation mode {mode!r}")
    if mode != "graph_only" and not cfg.get("relation_text_features"):
        raise ConfigError(f"relation mode {mode} needs --relation-text-features")

    splits = load_split_dir(cfg["data"])
    setting = classify_setting(splits)
    _log("loaded splits", setting=setting.value, train=len(splits.train),
         valid=len(splits.valid), test=len(splits.test))
    entities = _entity_inputs(cfg, splits)
    graph = None
    if mode != "text_only" and not cfg.get("relation_graph_features"):
        gf = prepare_split_graph_features(splits, walk_cfg, setting, threads=cfg["threads"])
        for name, net in gf.networks.items():
            _log("relation network", split=name, nodes=net.n_nodes, edges=net.n_edges,
                 triples=gf.source_triples[name])
        graph = gf.features
    relations = _relation_inputs(cfg, splits, graph)

    params, history = train(splits, entities, relations, model_cfg, train_cfg,
                            log=_make_train_log(),
                            candidate_policy=cfg.get("candidates", "all"))
    # nothing is written unless training went through
    out = Path(cfg["out_dir"])
    out.mkdir(parents=True, exist_ok=True)
    if graph is not None:
        graph.write(out / "relation_graph_features.vec")
    params.meta.update({"setting": setting.value, "relation_mode": mode})
    save_checkpoint(params, out / "checkpoint.txt")
    (out / "history.json").write_text(history_to_json(history) + "\n", encoding="utf-8")
    _emit({"checkpoint": str(out / "checkpoint.txt"), "epochs": len(history.epoch_loss),
           "final_loss": history.epoch_loss[-1] if history.epoch_loss else None,
           "best_epoch": history.best_epoch, "best_valid_mrr": history.best_mrr})
    return 0


def _check_dims(params, entities: EntityInputs, relations) -> None:
    dims = params.input_dims()
    have = {"entity": entities.dim}
    if relations.text is not None:
        have["text"] = relations.text.dim
    if relations.graph is not None:
        have["graph"] = relations.graph.dim
    if params.relation_mode.value != relations.mode.value:
        raise DimensionError(f"checkpoint relation mode {params.relation_mode.value} "
                             f"does not match {relations.mode.value}")
    for src, f in dims.items():
        if have.get(src) != f:
            raise DimensionError(f"checkpoint expects {src} features of dim {f}, got {have.get(src)}")


def cmd_eval(cfg: dict) -> int:
    _require(cfg, "checkpoint", "data", "entity_features")
    _existing(cfg, "checkpoint", "data", "entity_features", "relation_text_features",
              "relation_graph_features")
    params = load_checkpoint(cfg["checkpoint"])
    cfg.setdefault("relation_mode", params.relation_mode.value)
    splits = load_split_dir(cfg["data"])
    entities = _entity_inputs(cfg, splits)
    relations = _relation_inputs(cfg, splits, None)
    _check_dims(params, entities, relations)
    policy = cfg.get("candidates", "all")
    split = cfg.get("split", "test")
    report = evaluate(params, splits, entities, relations, policy, split=split)
    doc = report.to_dict(per_relation=bool(cfg.get("per_relation")))
    doc["expected_random_mrr"] = report.expected_random_mrr()
    if cfg.get("check_oracle"):
        oracle = brute_force_oracle(params, splits, entities, relations, policy, split=split)
        same = bool(np.array_equal(oracle.ranks, report.ranks))
        doc["oracle_equal"] = same
        if not same:
            _emit(doc)
            logger.error("batched ranks differ from the brute-force oracle")
            return 1
    if cfg.get("out"):
        Path(cfg["out"]).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    _emit(doc)
    return 0


def _load_type_map(path) -> dict[str, str]:
    out = {}
    with open(path, encoding="utf-8") as fh:
        for n, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise ConfigError(f"{path}:{n}: expected relation<TAB>type")
            out[parts[0]] = parts[1]
    return out


def cmd_dataset_gen(cfg: dict) -> int:
    _require(cfg, "raw", "entity_text", "relation_text", "out_dir")
    _existing(cfg, "raw", "types", "entity_text", "relation_text")
    gen_cfg = _section(cfg, "gen")
    raw = load_triples(cfg["raw"])
    types = _load_type_map(cfg["types"]) if cfg.get("types") else {}
    ent_text = load_text_records(cfg["entity_text"])
    rel_text = load_text_records(cfg["relation_text"])
    result = generate(raw, types, ent_text, rel_text, gen_cfg)
    out = Path(cfg["out_dir"])
    out.mkdir(parents=True, exist_ok=True)
    for name, trs in result.parts.items():
        write_triples(trs, out / f"{name}.tsv")
    write_text_records([result.splits.entity_text[e] for e in sorted(result.splits.entity_text)],
                       out / "entity_text.tsv")
    write_text_records([result.splits.relation_text[r] for r in sorted(result.splits.relation_text)],
                       out / "relation_text.tsv")
    (out / "stats.json").write_text(result.statistics_json() + "\n", encoding="utf-8")
    _emit(result.statistics()["final"])
    return 0


def cmd_dataset_check(cfg: dict) -> int:
    """Report split statistics and verify relation-disjointness, k-core and skew."""
    _require(cfg, "data")
    _existing(cfg, "data")
    splits = load_split_dir(cfg["data"])
    parts = {name: splits.split(name).string_triples() for name in ("train", "valid", "test")}
    rels = {name: {r for _, r, _ in trs} for name, trs in parts.items()}
    problems = []
    doc = {"setting": classify_setting(splits).value,
           "counts": {n: {"triples": len(t), "relations": len(rels[n])} for n, t in parts.items()}}
    if cfg.get("require_disjoint", True):
        for a, b in (("train", "valid"), ("train", "test"), ("valid", "test")):
            shared = rels[a] & rels[b]
            if shared:
                problems.append(f"{a} and {b} share relations {sorted(shared)[:5]}")
    if cfg["gen"].get("k") is not None:
        for name, k in zip(parts, GenConfig(k=cfg["gen"]["k"]).k):
            if len(kcore(parts[name], k)) != len(parts[name]):
                problems.append(f"{name} is not a {k}-core")
    if cfg["gen"].get("skew_threshold") is not None:
        for name, trs in parts.items():
            bad = skewed_relations(trs, cfg["gen"]["skew_threshold"])
            if bad:
                problems.append(f"{name} has skewed relations {sorted(bad)[:5]}")
    doc["problems"] = problems
    doc["ok"] = not problems
    _emit(doc)
    return 0 if not problems else 1


def cmd_gradcheck(cfg: dict) -> int:
    grid = run_grid(int(cfg.get("configs", 100)), int(cfg["seed"]), corrupt=bool(cfg.get("corrupt")))
    worst = max(grid.values())
    tol = float(cfg.get("tolerance", GRADCHECK_TOLERANCE))
    _emit({"cells": {f"{s}/{l}": err for (s, l), err in grid.items()},
           "max_relative_error": worst, "tolerance": tol, "passed": worst < tol})
    return 0 if worst < tol else 1


COMMANDS = {
    "weidner": cmd_weidner, "embed-relations": cmd_embed_relations,
    "features-bow": cmd_features_bow, "train": cmd_train, "eval": cmd_eval,
    "dataset-gen": cmd_dataset_gen, "dataset-check": cmd_dataset_check,
    "gradcheck": cmd_gradcheck,
}


def _floats(text: str) -> list[float]:
    return [float(x) for x in text.split(",")]


def _ints(text: str) -> list[int]:
    return [int(x) for x in text.split(",")]


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file; flags override its values")
    common.add_argument("--seed", type=int)
    common.add_argument("--threads", type=int, help="cap on worker threads")
    common.add_argument("--deterministic", action="store_true", default=None,
                        help="force single-threaded stochastic components")
    common.add_argument("--log-level", default="info")

    walk = argparse.ArgumentParser(add_help=False)
    walk.add_argument("--walk-dim", type=int)
    walk.add_argument("--walk-epochs", type=int)
    walk.add_argument("--num-walks", type=int)
    walk.add_argument("--walk-length", type=int)
    walk.add_argument("--window", type=int)
    walk.add_argument("-p", type=float)
    walk.add_argument("-q", type=float)

    feats = argparse.ArgumentParser(add_help=False)
    feats.add_argument("--data", help="directory with train/valid/test.tsv")
    feats.add_argument("--entity-features", help="vector file, or 'onehot'")
    feats.add_argument("--relation-text-features", help="vector file, or 'onehot'")
    feats.add_argument("--relation-graph-features", help="precomputed graph feature vector file")
    feats.add_argument("--relation-mode", choices=["text_only", "graph_only", "concat"])
    feats.add_argument("--candidates", choices=["all", "test"])

    parser = argparse.ArgumentParser(prog="indlp", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("weidner", parents=[common], help="build the relation network")
    p.add_argument("--triples")
    p.add_argument("--out")

    p = sub.add_parser("embed-relations", parents=[common, walk], help="walk + skip-gram relation vectors")
    p.add_argument("--network", help="edge-list file from the weidner command")
    p.add_argument("--triples", help="triples to build the network from")
    p.add_argument("--out")

    p = sub.add_parser("features-bow", parents=[common], help="bag-of-words text features")
    p.add_argument("--records", help="id<TAB>label<TAB>description file")
    p.add_argument("--vocab", help="word vector file")
    p.add_argument("--label-only", action="store_true", default=None)
    p.add_argument("--out")

    p = sub.add_parser("train", parents=[common, walk, feats], help="train a link predictor")
    p.add_argument("--out-dir")
    p.add_argument("--dim", type=int)
    p.add_argument("--scorer", choices=["transe_l1", "transe_l2", "complex"])
    p.add_argument("--sharing", choices=["shared", "separate"])
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--loss", choices=["margin", "nll"])
    p.add_argument("--margin", type=float)
    p.add_argument("--l2", type=float)
    p.add_argument("--negatives", type=int)
    p.add_argument("--eval-every", type=int)

    p = sub.add_parser("eval", parents=[common, feats], help="filtered ranking metrics")
    p.add_argument("--checkpoint")
    p.add_argument("--split", choices=["valid", "test"])
    p.add_argument("--out")
    p.add_argument("--per-relation", action="store_true", default=None)
    p.add_argument("--check-oracle", action="store_true", default=None,
                   help="also rank with the brute-force oracle and require equality")

    p = sub.add_parser("dataset-gen", parents=[common], help="relation-disjoint dataset pipeline")
    p.add_argument("--raw")
    p.add_argument("--types", help="relation<TAB>type file")
    p.add_argument("--entity-text")
    p.add_argument("--relation-text")
    p.add_argument("--out-dir")
    p.add_argument("--min-triples", type=int)
    p.add_argument("--k", type=_ints, help="three comma-separated k values")
    p.add_argument("--ratios", type=_floats, help="three comma-separated ratios")
    p.add_argument("--skew-threshold", type=float)
    p.add_argument("--inverse-threshold", type=float)

    p = sub.add_parser("dataset-check", parents=[common], help="verify split invariants")
    p.add_argument("--data")
    p.add_argument("--k", type=_ints)
    p.add_argument("--skew-threshold", type=float)

    p = sub.add_parser("gradcheck", parents=[common], help="finite-difference gradient check")
    p.add_argument("--configs", type=int, help="random configs per scorer/loss cell")
    p.add_argument("--corrupt", action="store_true", default=None,
                   help="perturb the analytic gradient (negative control)")
    p.add_argument("--tolerance", type=float)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    _setup_logging(args.log_level)
    try:
        cfg = resolve_config(args)
        return COMMANDS[args.command](cfg)
    except (ConfigError, FileNotFoundError, TripleFormatError, VectorFormatError, NetworkFormatError,
            FeatureError, DimensionError, GenerationError, FloatingPointError, ValueError) as exc:
        logger.error("%s: %s", type(exc).__name__, exc)
        return 2


if __name__ == "__main__":
    sys.exit(main())
