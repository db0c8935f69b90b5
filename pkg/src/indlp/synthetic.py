"""Synthetic datasets with known structure for sanity experiments."""

from __future__ import annotations

import numpy as np

from .features import TokenVocabulary
from .kg import SplitDataset, TextRecord, build_splits
from .seeding import stream


def transe_realizable(n_entities=60, n_relations=5, dim=16, keep=600, holdout=0.1,
                      seed=0) -> SplitDataset:
    """Best-scoring triples under random ground-truth TransE embeddings.

    All ``n_entities * n_relations * n_entities`` triples are scored by
    ``-||h + r - t||_2``; the ``keep`` best are kept and a random ``holdout``
    fraction becomes the test split. The validation split is empty.
    Self-loops are scored like any other triple: excluding them would leave
    high-scoring ``(h, r, h)`` candidates unfiltered at ranking time, and the
    generating model itself would then rank poorly.
    """
    rng = stream(seed, "synthetic-transe")
    E = rng.normal(size=(n_entities, dim))
    R = rng.normal(size=(n_relations, dim))
    h, r, t = np.meshgrid(np.arange(n_entities), np.arange(n_relations), np.arange(n_entities),
                          indexing="ij")
    h, r, t = h.ravel(), r.ravel(), t.ravel()
    s = -np.linalg.norm(E[h] + R[r] - E[t], axis=1)
    best = np.argsort(-s, kind="stable")[:keep]
    triples = [(f"e{h[i]}", f"r{r[i]}", f"e{t[i]}") for i in best]
    perm = rng.permutation(len(triples))
    n_test = int(round(holdout * len(triples)))
    test = [triples[i] for i in perm[:n_test]]
    train = [triples[i] for i in perm[n_test:]]
    return build_splits(train, [], test)


def relation_disjoint(n_clusters=4, entities_per_cluster=15, relations_per_split=(6, 3, 3),
                      triples_per_relation=40, seed=0):
    """Truly inductive splits over clustered entities.

    Every triple links two entities of the same cluster. Train, valid and
    test use disjoint relation sets over a shared entity pool. Entity labels
    carry the cluster word, so a bag-of-words feature identifies the cluster.
    Returns ``(splits, entity_records, token_vocabulary)``.
    """
    rng = stream(seed, "synthetic-disjoint")
    cluster_words = [f"kind{c}" for c in range(n_clusters)]
    names = [f"ent{c}_{i}" for c in range(n_clusters) for i in range(entities_per_cluster)]
    cluster_of = {n: c for c in range(n_clusters) for n in names[c * entities_per_cluster:(c + 1) * entities_per_cluster]}
    parts = []
    rel_counter = 0
    for n_rel in relations_per_split:
        triples = set()
        for _ in range(n_rel):
            rel = f"rel{rel_counter}"
            rel_counter += 1
            while sum(1 for x in triples if x[1] == rel) < triples_per_relation:
                c = int(rng.integers(n_clusters))
                members = names[c * entities_per_cluster:(c + 1) * entities_per_cluster]
                a, b = rng.choice(len(members), size=2, replace=False)
                triples.add((members[a], rel, members[b]))
        parts.append(sorted(triples))
    records = {n: TextRecord(n, f"{cluster_words[cluster_of[n]]} item {n.split('_')[1]}")
               for n in names}
    tokens = cluster_words + ["item"] + [str(i) for i in range(entities_per_cluster)]
    vectors = rng.normal(size=(len(tokens), 16))
    vocab = TokenVocabulary(tokens, vectors)
    return build_splits(*parts, entity_text=records), records, vocab


def raw_corpus(n_triples=10_000, n_entities=1500, n_relations=40, n_types=12, seed=0):
    """Raw triples, relation types and labels shaped for the dataset pipeline.

    Includes planted inverse and duplicate relations, rare relations, skewed
    relations, and a few unlabeled entities.
    """
    rng = stream(seed, "synthetic-raw")
    ents = [f"Q{i}" for i in range(n_entities)]
    rels = [f"P{i}" for i in range(n_relations)]
    # Zipf-like entity popularity yields a non-trivial k-core
    pop = 1.0 / np.arange(1, n_entities + 1) ** 0.8
    pop /= pop.sum()
    triples: set[tuple[str, str, str]] = set()

    def fill(rel, count):
        got = 0
        while got < count:
            h, t = rng.choice(n_entities, size=2, replace=False, p=pop)
            key = (ents[h], rel, ents[t])
            if key not in triples:
                triples.add(key)
                got += 1

    base = rels[: n_relations - 8]
    for rel in base:
        fill(rel, n_triples // max(len(base), 1))
    planted = rels[n_relations - 8:]
    first = [x for x in triples if x[1] == base[0]]
    second = [x for x in triples if x[1] == base[1]]
    triples.update((t, planted[0], h) for h, _r, t in first)     # inverse of base[0]
    triples.update((h, planted[1], t) for h, _r, t in second)    # duplicate of base[1]
    triples.update((ents[0], planted[2], ents[int(i)]) for i in rng.choice(np.arange(2, n_entities), 60))
    triples.update((ents[int(i)], planted[3], ents[1]) for i in rng.choice(np.arange(2, n_entities), 60))
    triples.update([(ents[5], planted[4], ents[6]), (ents[7], planted[4], ents[8])])  # rare
    for rel in planted[5:]:
        fill(rel, 80)
    triples = sorted(triples)
    types = {rel: f"T{i % n_types}" for i, rel in enumerate(rels)}
    unlabeled = set(ents[-3:])
    ent_text = {e: TextRecord(e, f"entity {e}") for e in ents if e not in unlabeled}
    rel_text = {r: TextRecord(r, f"relation {r}") for r in rels}
    return triples, types, ent_text, rel_text
