"""Negative-sampling training with Adam and a linear warmup/decay schedule."""

from __future__ import annotations

import dataclasses
import json
import logging
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .evaluator import FilterIndex, evaluate
from .features import EntityInputs, FeatureMatrix, RelationInputs
from .kg import InductiveSetting, KnowledgeGraph, SplitDataset, build_graph, classify_setting
from .model import Batch, ModelParams, backward, init_params
from .relwalk import NodeEmbeddings, WalkConfig, embed_relations
from .seeding import stream
from .weidner import RelationNetwork, build_network

logger = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    epochs: int = 40
    batch_size: int = 64
    learning_rate: float = 2e-5
    warmup_fraction: float = 0.2
    loss: str = "margin"
    margin: float = 1.0
    l2_coeff: float = 0.0
    negatives_per_positive: int = 64
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    eval_every: int = 1

    def __post_init__(self):
        if not 0 <= self.warmup_fraction < 1:
            raise ValueError("warmup_fraction must be in [0, 1)")
        if self.negatives_per_positive < 1:
            raise ValueError("negatives_per_positive must be >= 1")
        if self.batch_size < 1 or self.epochs < 0:
            raise ValueError("batch_size must be >= 1 and epochs >= 0")
        if self.loss not in ("margin", "nll"):
            raise ValueError(f"unknown loss {self.loss!r}")


@dataclass
class ModelConfig:
    dim: int = 128
    scorer: str = "transe_l1"
    sharing: str = "separate"


@dataclass
class TrainHistory:
    epoch_loss: list[float] = field(default_factory=list)
    lr: list[float] = field(default_factory=list)
    validation: list[dict] = field(default_factory=list)
    best_epoch: int | None = None
    best_mrr: float | None = None


def lr_at(step: int, total_steps: int, config: TrainConfig) -> float:
    """Linear ramp to ``learning_rate`` over the warmup steps, then linear decay to 0."""
    if total_steps <= 0:
        return 0.0
    warm = config.warmup_fraction * total_steps
    if step < warm:
        return config.learning_rate * step / warm
    return config.learning_rate * max(total_steps - step, 0) / (total_steps - warm)


def sample_negatives_batch(positives: np.ndarray, count: int, entity_pool: np.ndarray,
                           rng: np.random.Generator) -> np.ndarray:
    """``(B, count, 3)`` corruptions of ``(B, 3)`` positives.

    Each negative independently replaces the head or the tail (fair coin) by
    a uniform draw from ``entity_pool``; a corruption equal to its positive is
    redrawn once and then kept whatever it is.
    """
    pool = np.asarray(entity_pool, dtype=np.int64)
    if len(pool) == 0:
        raise ValueError("entity pool is empty")
    positives = np.asarray(positives, dtype=np.int64).reshape(-1, 3)
    B = len(positives)
    neg = np.repeat(positives[:, None, :], count, axis=1)
    head_side = rng.random((B, count)) < 0.5
    repl = pool[rng.integers(0, len(pool), size=(B, count))]
    neg[..., 0] = np.where(head_side, repl, neg[..., 0])
    neg[..., 2] = np.where(head_side, neg[..., 2], repl)
    same = np.all(neg == positives[:, None, :], axis=-1)
    if same.any():
        redraw = pool[rng.integers(0, len(pool), size=int(same.sum()))]
        side = head_side[same]
        rows = neg[same]
        rows[:, 0] = np.where(side, redraw, rows[:, 0])
        rows[:, 2] = np.where(side, rows[:, 2], redraw)
        neg[same] = rows
    return neg


def sample_negatives(positive, count: int, entity_pool, rng: np.random.Generator) -> np.ndarray:
    return sample_negatives_batch(np.asarray(positive)[None, :], count, entity_pool, rng)[0]


# -- graph features per split ----------------------------------------------

@dataclass
class GraphFeatures:
    features: FeatureMatrix
    networks: dict[str, RelationNetwork]
    embeddings: dict[str, NodeEmbeddings]
    provenance: dict[str, str]
    source_triples: dict[str, int]


def _local_graph(graph: KnowledgeGraph) -> KnowledgeGraph:
    return build_graph(graph.string_triples())


def prepare_split_graph_features(splits: SplitDataset, walk_config: WalkConfig,
                                 setting: InductiveSetting | None = None,
                                 threads: int = 1) -> GraphFeatures:
    """Relation graph features, built without leaking unseen triples.

    Truly inductive: one network per split, each from that split's triples
    only; a relation takes the features of the first split (train, valid,
    test) it occurs in. Otherwise a single network from the training triples
    serves every relation.
    """
    setting = classify_setting(splits) if setting is None else InductiveSetting(setting)
    parts = ["train", "valid", "test"] if setting is InductiveSetting.TRULY_INDUCTIVE else ["train"]
    networks, embeddings, provenance, sizes = {}, {}, {}, {}
    blocks = []
    for name in parts:
        graph = splits.split(name)
        if len(graph) == 0:
            continue
        local = _local_graph(graph)
        net = build_network(local)
        logger.info("built relation network for %s: %d nodes, %d edges from %d triples",
                    name, net.n_nodes, net.n_edges, len(local))
        emb = embed_relations(net, walk_config, threads=threads)
        networks[name], embeddings[name], sizes[name] = net, emb, len(local)
        keep = [i for i, rel in enumerate(emb.names) if rel not in provenance]
        for i in keep:
            provenance[emb.names[i]] = name
        blocks.append(FeatureMatrix([emb.names[i] for i in keep], emb.vectors[keep], source="graph"))
    merged = FeatureMatrix.merge(blocks, source="graph")
    return GraphFeatures(merged, networks, embeddings, provenance, sizes)


# -- optimisation -----------------------------------------------------------

class Adam:
    def __init__(self, params: dict[str, np.ndarray], beta1=0.9, beta2=0.999, eps=1e-8):
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray], lr: float):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1 ** self.t
        c2 = 1.0 - b2 ** self.t
        for k, g in grads.items():
            m, v = self.m[k], self.v[k]
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            params[k] -= lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def _make_batch(pos: np.ndarray, neg: np.ndarray, entities: EntityInputs,
                relations: RelationInputs, ent_names, rel_names, params: ModelParams) -> Batch:
    ids = np.concatenate([pos[:, 0], pos[:, 2], neg[..., 0].ravel(), neg[..., 2].ravel()])
    uniq, inv = np.unique(ids, return_inverse=True)
    B, K = neg.shape[:2]
    inv = inv.ravel()
    heads, tails = inv[:B], inv[B:2 * B]
    nh = inv[2 * B:2 * B + B * K].reshape(B, K)
    nt = inv[2 * B + B * K:].reshape(B, K)
    names = [ent_names[i] for i in uniq.tolist()]
    rels = [rel_names[i] for i in pos[:, 1].tolist()]
    rel_rows = {}
    for src in params.relation_sources():
        mat = relations.text if src == "text" else relations.graph
        rel_rows[src] = mat.rows(rels)
    tokens = entities.token_rows(names) if params.token_table is not None else None
    rows = entities.features.rows(names) if tokens is None else None
    return Batch(rows, heads, tails, nh, nt, rel_rows, tokens)


def init_model(entities: EntityInputs, relations: RelationInputs, model_config: ModelConfig,
               seed: int, token_table=None) -> ModelParams:
    text_dim = relations.text.dim if relations.text is not None else None
    graph_dim = relations.graph.dim if relations.graph is not None else None
    return init_params(model_config.dim, model_config.scorer, relations.mode, entities.dim,
                       text_dim, graph_dim, model_config.sharing, rng=stream(seed, "init"),
                       token_table=token_table)


def train(splits: SplitDataset, entities: EntityInputs, relations: RelationInputs,
          model_config: ModelConfig, config: TrainConfig, token_table=None,
          log: Callable[[dict], None] | None = None, candidate_policy: str = "all",
          params: ModelParams | None = None) -> tuple[ModelParams, TrainHistory]:
    """Fit projections on the training triples.

    Returns the parameters with the best validation MRR (or the final ones
    when validation is disabled or empty) and the history.
    """
    train_graph = splits.train
    ent_names = splits.entities.names
    rel_names = splits.relations.names
    train_ents = sorted(SplitDataset.entity_set(train_graph))
    missing = [ent_names[i] for i in train_ents if ent_names[i] not in entities.features]
    if missing:
        raise ValueError(f"no entity features for training ids {missing[:5]}")
    missing = relations.covers([rel_names[r] for r in SplitDataset.relation_set(train_graph)])
    if missing:
        raise ValueError(f"no relation features for training ids {missing[:5]}")

    if params is None:
        params = init_model(entities, relations, model_config, config.seed, token_table)
    history = TrainHistory()
    triples = train_graph.triples
    n = len(triples)
    steps_per_epoch = math.ceil(n / config.batch_size) if n else 0
    total = config.epochs * steps_per_epoch
    if total == 0:
        return params, history

    pool = np.array(train_ents, dtype=np.int64)
    opt = Adam(params.trainable(), config.beta1, config.beta2, config.eps)
    batch_rng = stream(config.seed, "batches")
    neg_rng = stream(config.seed, "negatives")
    filt = FilterIndex.from_splits(splits)
    do_valid = config.eval_every > 0 and len(splits.valid) > 0
    best = None
    step = 0
    for epoch in range(config.epochs):
        order = batch_rng.permutation(n)
        total_loss = 0.0
        for lo in range(0, n, config.batch_size):
            pos = triples[order[lo:lo + config.batch_size]]
            neg = sample_negatives_batch(pos, config.negatives_per_positive, pool, neg_rng)
            batch = _make_batch(pos, neg, entities, relations, ent_names, rel_names, params)
            loss, grads = backward(params, batch, config.loss, config.margin, config.l2_coeff)
            if not math.isfinite(loss):
                raise FloatingPointError(
                    f"non-finite loss at epoch {epoch} step {step}; "
                    f"max |W| = {max(float(np.abs(w).max()) for w in params.weights.values()):.3g}")
            lr = lr_at(step, total, config)
            opt.step(params.trainable(), grads, lr)
            history.lr.append(lr)
            total_loss += loss * len(pos)
            if log is not None:
                log({"epoch": epoch, "step": step, "loss": loss, "lr": lr})
            step += 1
        history.epoch_loss.append(total_loss / n)
        if do_valid and ((epoch + 1) % config.eval_every == 0 or epoch + 1 == config.epochs):
            report = evaluate(params, splits, entities, relations, candidate_policy,
                              split="valid", filter_index=filt)
            snap = {"epoch": epoch, "mrr": report.mrr, **{f"hits{k}": report.hits(k) for k in (1, 3, 10)}}
            history.validation.append(snap)
            if log is not None:
                log({"epoch": epoch, "valid": snap})
            if best is None or report.mrr > history.best_mrr:
                history.best_mrr, history.best_epoch = report.mrr, epoch
                best = params.copy()
    return (best if best is not None else params), history


def history_to_json(history: TrainHistory) -> str:
    return json.dumps(dataclasses.asdict(history), indent=2)
