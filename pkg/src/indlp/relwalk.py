"""Relation embeddings from biased second-order walks and skip-gram training.

Walks follow the return/in-out biased transition model over the directed
relation network; the walk corpus is then fed to skip-gram with negative
sampling. The two inner loops live in :mod:`indlp.kernels`.
"""

from __future__ import annotations

import dataclasses
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .features import FeatureMatrix
from .seeding import stream
from .weidner import RelationNetwork

logger = logging.getLogger(__name__)

# walks per skip-gram kernel call; bounds the size of pre-drawn negatives
_CHUNK_WALKS = 4096


@dataclass
class WalkConfig:
    num_walks_per_node: int = 10
    walk_length: int = 10
    window_size: int = 10
    p: float = 1.0
    q: float = 1.0
    epochs: int = 100
    dim: int = 768
    negatives_per_positive: int = 5
    learning_rate: float = 0.025
    seed: int = 0

    def __post_init__(self):
        if self.p <= 0 or self.q <= 0:
            raise ValueError("p and q must be positive")
        if self.walk_length < 2:
            raise ValueError("walk_length must be at least 2")
        if self.dim < 1:
            raise ValueError("dim must be at least 1")
        if self.num_walks_per_node < 0 or self.epochs < 0 or self.window_size < 1:
            raise ValueError("num_walks_per_node/epochs must be >= 0 and window_size >= 1")
        if self.negatives_per_positive < 0 or self.learning_rate <= 0:
            raise ValueError("invalid negatives_per_positive or learning_rate")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


@dataclass
class WalkCorpus:
    """Walks stored flat: walk ``i`` is ``flat[offsets[i]:offsets[i + 1]]``."""

    flat: np.ndarray
    offsets: np.ndarray
    n_nodes: int
    isolated: list[int] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.offsets) - 1

    @property
    def walks(self) -> list[np.ndarray]:
        return [self.flat[a:b] for a, b in zip(self.offsets[:-1], self.offsets[1:])]

    def node_counts(self) -> np.ndarray:
        return np.bincount(self.flat, minlength=self.n_nodes)


@dataclass
class NodeEmbeddings:
    names: list[str]
    vectors: np.ndarray
    config: dict
    network_hash: str = ""
    fallback: list[str] = field(default_factory=list)
    epoch_losses: list[float] = field(default_factory=list)

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def to_features(self) -> FeatureMatrix:
        return FeatureMatrix(self.names, self.vectors, source="graph")


def transition_distribution(network: RelationNetwork, prev: int | None, current: int,
                            p: float = 1.0, q: float = 1.0) -> tuple[np.ndarray, np.ndarray]:
    """Next-hop distribution from ``current`` having arrived from ``prev``.

    Each out-neighbour ``u`` gets mass proportional to its edge weight times
    ``1/p`` if ``u == prev``, ``1`` if ``prev -> u`` is an edge, else ``1/q``.
    Without ``prev`` the mass is proportional to the weight alone.

    Returns ``(neighbours, probabilities)``.
    """
    targets, weights = network.out_edges(current)
    if len(targets) == 0:
        raise ValueError(f"node {current} has no out-edges")
    mass = weights.astype(np.float64)
    if prev is not None:
        alpha = np.array([1.0 / p if u == prev else (1.0 if network.has_edge(prev, u) else 1.0 / q)
                          for u in targets.tolist()])
        mass = mass * alpha
    return targets.copy(), mass / mass.sum()


def generate_walks(network: RelationNetwork, config: WalkConfig, threads: int = 1) -> WalkCorpus:
    """``num_walks_per_node`` truncated biased walks from every node with out-edges.

    Each start node draws its uniforms from its own seeded stream, so the
    corpus does not depend on ``threads``.
    """
    n = network.n_nodes
    degree = network.out_degree()
    starts_nodes = np.flatnonzero(degree > 0)
    isolated = np.flatnonzero(degree == 0).tolist()
    k = config.num_walks_per_node
    steps = config.walk_length - 1
    if len(starts_nodes) == 0 or k == 0:
        return WalkCorpus(np.zeros(0, np.int64), np.zeros(1, np.int64), n, isolated)

    # round-major order: round r visits the start nodes in a per-round shuffle
    order_rng = stream(config.seed, "walk-order")
    starts = np.concatenate([order_rng.permutation(starts_nodes) for _ in range(k)])
    uniforms = np.empty((len(starts), steps), dtype=np.float64)
    per_node = {int(v): stream(config.seed, "walks", int(v)).random((k, steps))
                for v in starts_nodes}
    seen = {}
    for i, v in enumerate(starts.tolist()):
        j = seen.get(v, 0)
        uniforms[i] = per_node[v][j]
        seen[v] = j + 1

    out = np.full((len(starts), config.walk_length), -1, dtype=np.int64)
    weights = network.weights.astype(np.float64)
    args = (network.indptr, network.targets, weights)

    def run(lo, hi):
        return kernels.walk_kernel(*args, starts[lo:hi], uniforms[lo:hi], config.walk_length,
                                   float(config.p), float(config.q), out[lo:hi])

    if threads > 1:
        bounds = np.linspace(0, len(starts), threads + 1).astype(int)
        with ThreadPoolExecutor(threads) as pool:
            parts = list(pool.map(lambda b: run(*b), zip(bounds[:-1], bounds[1:])))
        lengths = np.concatenate(parts)
    else:
        lengths = run(0, len(starts))

    mask = np.arange(config.walk_length)[None, :] < lengths[:, None]
    flat = out[mask]
    offsets = np.concatenate([[0], np.cumsum(lengths)]).astype(np.int64)
    return WalkCorpus(flat, offsets, n, isolated)


def _pairs_per_walk(lengths: np.ndarray, window: int) -> np.ndarray:
    # each position pairs with min(i, w) earlier and min(L-1-i, w) later nodes;
    # both sums equal sum_{i<L} min(i, w)
    L = lengths.astype(np.int64)
    w = int(window)
    short = L * (L - 1) // 2
    long = w * (w + 1) // 2 + w * (L - 1 - w)
    return 2 * np.where(L <= w + 1, short, long)


def init_center_vectors(n_nodes: int, dim: int, seed: int) -> np.ndarray:
    rng = stream(seed, "init")
    return rng.uniform(-0.5 / dim, 0.5 / dim, size=(n_nodes, dim))


def train_skipgram(corpus: WalkCorpus, config: WalkConfig, threads: int = 1) -> NodeEmbeddings:
    """Skip-gram with negative sampling over the walk corpus.

    Step size decays linearly from ``learning_rate`` to ``1e-4 * learning_rate``
    over all epochs. With ``threads > 1`` the kernel runs lock-free on shared
    tables (asynchronous SGD); results are then not bit-reproducible.
    """
    if len(corpus) == 0:
        raise ValueError("cannot train on an empty walk corpus")
    dim = config.dim
    center = init_center_vectors(corpus.n_nodes, dim, config.seed)
    context = np.zeros((corpus.n_nodes, dim))
    n_neg = config.negatives_per_positive

    counts = corpus.node_counts().astype(np.float64)
    noise = counts ** 0.75
    noise /= noise.sum()
    cdf = np.cumsum(noise)
    cdf[-1] = 1.0

    lengths = np.diff(corpus.offsets)
    pairs = _pairs_per_walk(lengths, config.window_size)
    n_walks = len(corpus)
    total_walks = max(config.epochs * n_walks, 1)
    losses = []
    for epoch in range(config.epochs):
        progress = (epoch * n_walks + np.arange(n_walks)) / total_walks
        lrs = config.learning_rate * np.maximum(1e-4, 1.0 - progress)
        ep_loss = 0.0
        ep_pairs = 0
        neg_start = np.zeros(n_walks, dtype=np.int64)
        for chunk, lo in enumerate(range(0, n_walks, _CHUNK_WALKS)):
            hi = min(lo + _CHUNK_WALKS, n_walks)
            need = pairs[lo:hi] * n_neg
            neg_start[lo:hi] = np.concatenate([[0], np.cumsum(need)[:-1]])
            rng = stream(config.seed, "negatives", epoch, chunk)
            negatives = np.searchsorted(cdf, rng.random(int(need.sum())), side="right")
            negatives = np.minimum(negatives, corpus.n_nodes - 1).astype(np.int64)
            if threads > 1 and hi - lo > 1:
                bounds = np.linspace(lo, hi, threads + 1).astype(int)
                with ThreadPoolExecutor(threads) as pool:
                    results = list(pool.map(
                        lambda b: kernels.sgns_kernel(
                            corpus.flat, corpus.offsets, int(b[0]), int(b[1]),
                            config.window_size, center, context, negatives, neg_start,
                            n_neg, lrs),
                        zip(bounds[:-1], bounds[1:])))
            else:
                results = [kernels.sgns_kernel(corpus.flat, corpus.offsets, lo, hi,
                                               config.window_size, center, context, negatives,
                                               neg_start, n_neg, lrs)]
            for loss, npairs in results:
                ep_loss += loss
                ep_pairs += npairs
        losses.append(ep_loss / max(ep_pairs, 1))
        if not np.all(np.isfinite(center)):
            raise FloatingPointError(f"skip-gram diverged in epoch {epoch}")
    return NodeEmbeddings([str(i) for i in range(corpus.n_nodes)], center,
                          config.to_dict(), epoch_losses=losses)


def embed_relations(network: RelationNetwork, config: WalkConfig,
                    threads: int = 1) -> NodeEmbeddings:
    """Walks plus skip-gram for every node; nodes never visited get zero vectors."""
    corpus = generate_walks(network, config, threads=threads)
    if len(corpus) == 0:
        logger.warning("relation network has no edges; all %d relations get zero vectors",
                       network.n_nodes)
        vectors = np.zeros((network.n_nodes, config.dim))
        return NodeEmbeddings(network.names, vectors, config.to_dict(),
                              network.fingerprint(), fallback=list(network.names))
    emb = train_skipgram(corpus, config, threads=threads)
    unseen = np.flatnonzero(corpus.node_counts() == 0)
    vectors = emb.vectors
    if len(unseen):
        vectors[unseen] = 0.0
        logger.warning("%d isolated relations get zero vectors: %s", len(unseen),
                       [network.names[i] for i in unseen[:10]])
    return NodeEmbeddings(network.names, vectors, config.to_dict(), network.fingerprint(),
                          fallback=[network.names[i] for i in unseen],
                          epoch_losses=emb.epoch_losses)
