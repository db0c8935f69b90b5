"""Weighted, directed relation-relation network built from entity co-occurrence.

For two relations ``a`` and ``b`` the weight of ``a -> b`` counts ordered pairs
of triples ``(x, a, y)``, ``(u, b, v)`` that either chain (``y == u``) or share
an entity in the same position (``x == u`` or ``y == v``). Self-loops use the
stricter guards that stop a triple from matching itself.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .kg import KnowledgeGraph


class NetworkFormatError(ValueError):
    pass


@dataclass
class RelationNetwork:
    """Directed weighted graph over relation handles.

    ``names[i]`` is the string id of node ``i``. Edge arrays are sorted by
    ``(source, target)``; ``indptr`` gives CSR offsets per source.
    """

    names: list[str]
    sources: np.ndarray
    targets: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        self.sources = np.asarray(self.sources, dtype=np.int64)
        self.targets = np.asarray(self.targets, dtype=np.int64)
        self.weights = np.asarray(self.weights, dtype=np.uint64)
        if not (len(self.sources) == len(self.targets) == len(self.weights)):
            raise ValueError("edge arrays differ in length")
        if len(self.weights) and self.weights.min() < 1:
            raise ValueError("edge weights must be >= 1")
        order = np.lexsort((self.targets, self.sources))
        self.sources = self.sources[order]
        self.targets = self.targets[order]
        self.weights = self.weights[order]
        self.indptr = np.searchsorted(self.sources, np.arange(self.n_nodes + 1)).astype(np.int64)

    @property
    def n_nodes(self) -> int:
        return len(self.names)

    @property
    def n_edges(self) -> int:
        return len(self.weights)

    def out_edges(self, node: int) -> tuple[np.ndarray, np.ndarray]:
        lo, hi = self.indptr[node], self.indptr[node + 1]
        return self.targets[lo:hi], self.weights[lo:hi]

    def out_degree(self) -> np.ndarray:
        return np.diff(self.indptr)

    def has_edge(self, src: int, dst: int) -> bool:
        targets, _ = self.out_edges(src)
        i = np.searchsorted(targets, dst)
        return bool(i < len(targets) and targets[i] == dst)

    def edge_dict(self) -> dict[tuple[str, str], int]:
        """Edges keyed by string ids, handy for comparisons."""
        return {(self.names[s], self.names[t]): int(w)
                for s, t, w in zip(self.sources.tolist(), self.targets.tolist(),
                                   self.weights.tolist())}

    def isolated(self) -> list[int]:
        return np.flatnonzero(self.out_degree() == 0).tolist()

    def fingerprint(self) -> str:
        import hashlib
        h = hashlib.sha256()
        h.update("\n".join(self.names).encode())
        for arr in (self.sources, self.targets, self.weights):
            h.update(np.ascontiguousarray(arr).tobytes())
        return h.hexdigest()[:16]

    def __eq__(self, other):
        if not isinstance(other, RelationNetwork):
            return NotImplemented
        return set(self.names) == set(other.names) and self.edge_dict() == other.edge_dict()


def _position_matrices(graph: KnowledgeGraph):
    n_rel, n_ent = graph.n_relations, graph.n_entities
    h, r, t = graph.triples[:, 0], graph.triples[:, 1], graph.triples[:, 2]
    ones = np.ones(len(r), dtype=np.int64)
    heads = sp.csr_matrix((ones, (r, h)), shape=(n_rel, n_ent))
    tails = sp.csr_matrix((ones, (r, t)), shape=(n_rel, n_ent))
    # (head, tail) pair incidence; triples are deduplicated so entries are 0/1
    pair_key = h * max(n_ent, 1) + t
    uniq, pair_idx = np.unique(pair_key, return_inverse=True)
    pairs = sp.csr_matrix((ones, (r, pair_idx.ravel())), shape=(n_rel, len(uniq)))
    return heads, tails, pairs


def build_network(graph: KnowledgeGraph) -> RelationNetwork:
    """Build the relation network from per-(relation, entity) position counts.

    Avoids the quadratic pair enumeration: chained pairs are ``T @ H.T``,
    same-position pairs are ``H @ H.T + T @ T.T`` minus pairs that share both
    endpoints (counted once by the disjunction). The diagonal drops pairs of a
    triple with itself as the self-relation guards demand.
    """
    n_rel = graph.n_relations
    if len(graph) == 0:
        return RelationNetwork(graph.relations.names, [], [], [])
    heads, tails, pairs = _position_matrices(graph)
    direct = (tails @ heads.T).toarray()
    indirect = (heads @ heads.T + tails @ tails.T - pairs @ pairs.T).toarray()

    sizes = np.bincount(graph.triples[:, 1], minlength=n_rel)
    loops = graph.triples[:, 0] == graph.triples[:, 2]
    self_loops = np.bincount(graph.triples[loops, 1], minlength=n_rel)
    diag = np.arange(n_rel)
    # pair (x,a,x),(x,a,x) is the only chained self-pair failing the guard
    direct[diag, diag] -= self_loops
    # h1=h2 and t1=t2 together means the same triple; subtract it from each side
    hh = np.asarray(heads.multiply(heads).sum(axis=1)).ravel()
    tt = np.asarray(tails.multiply(tails).sum(axis=1)).ravel()
    indirect[diag, diag] = (hh - sizes) + (tt - sizes)

    weight = direct + indirect
    src, dst = np.nonzero(weight > 0)
    return RelationNetwork(graph.relations.names, src, dst, weight[src, dst].astype(np.uint64))


def naive_network_oracle(graph: KnowledgeGraph) -> RelationNetwork:
    """Literal pairwise transcription of the counting rules, O(|T|^2)."""
    n_rel = graph.n_relations
    per_rel = [graph.relation_triples(r)[:, [0, 2]].tolist() for r in range(n_rel)]
    src, dst, wts = [], [], []
    for a in range(n_rel):
        for b in range(a, n_rel):
            ta, tb = per_rel[a], per_rel[b]
            if a != b:
                direct_ab = direct_ba = indirect = 0
                for h1, t1 in ta:
                    for h2, t2 in tb:
                        if t1 == h2:
                            direct_ab += 1
                        if h1 == t2:
                            direct_ba += 1
                        if h1 == h2 or t1 == t2:
                            indirect += 1
                for s, d, w in ((a, b, direct_ab + indirect), (b, a, direct_ba + indirect)):
                    if w > 0:
                        src.append(s)
                        dst.append(d)
                        wts.append(w)
            else:
                direct = indirect = 0
                for h1, t1 in ta:
                    for h2, t2 in tb:
                        if t1 == h2 and (h1 != t1 or h1 != t2):
                            direct += 1
                        if (h1 == h2 and t1 != t2) or (t1 == t2 and h1 != h2):
                            indirect += 1
                if direct + indirect > 0:
                    src.append(a)
                    dst.append(a)
                    wts.append(direct + indirect)
    return RelationNetwork(graph.relations.names, src, dst, wts)


def write_network(network: RelationNetwork, path) -> None:
    lines = [f"{network.names[s]}\t{network.names[t]}\t{int(w)}"
             for s, t, w in zip(network.sources.tolist(), network.targets.tolist(),
                                network.weights.tolist())]
    lines.sort()
    text = "".join(line + "\n" for line in lines)
    Path(path).write_text(text, encoding="utf-8")


def read_network(path, nodes: list[str] | None = None) -> RelationNetwork:
    """Parse an edge-list file.

    Isolated relations have no line in the file; pass ``nodes`` to restore
    them (and to fix the node order). Otherwise nodes appear in first-seen
    order.
    """
    path = Path(path)
    names: list[str] = list(nodes) if nodes is not None else []
    index = {n: i for i, n in enumerate(names)}
    src, dst, wts = [], [], []
    seen = set()
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise NetworkFormatError(f"{path}:{lineno}: expected source, target, weight")
            try:
                w = int(parts[2])
            except ValueError:
                raise NetworkFormatError(f"{path}:{lineno}: weight is not an integer") from None
            if w < 1:
                raise NetworkFormatError(f"{path}:{lineno}: weight must be positive")
            ids = []
            for name in parts[:2]:
                if name not in index:
                    if nodes is not None:
                        raise NetworkFormatError(f"{path}:{lineno}: unknown relation {name!r}")
                    index[name] = len(names)
                    names.append(name)
                ids.append(index[name])
            if tuple(ids) in seen:
                raise NetworkFormatError(f"{path}:{lineno}: repeated edge")
            seen.add(tuple(ids))
            src.append(ids[0])
            dst.append(ids[1])
            wts.append(w)
    return RelationNetwork(names, src, dst, wts)
