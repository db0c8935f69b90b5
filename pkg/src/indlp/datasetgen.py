"""Relation-disjoint (truly inductive) dataset generation from raw triples.

Steps, in order: drop rare relations; drop inverse and duplicate relations
and anything without a label; split the relations into three type-coherent
parts; take an entity k-core of each part; drop skewed relations per part.
"""

from __future__ import annotations

import json
import logging
from collections import Counter, defaultdict
from dataclasses import asdict, dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .kg import SplitDataset, TextRecord, build_splits
from .seeding import stream

logger = logging.getLogger(__name__)

Triple = tuple[str, str, str]
PARTS = ("train", "valid", "test")


class GenerationError(ValueError):
    pass


@dataclass
class GenConfig:
    min_triples: int = 3
    k: tuple[int, int, int] = (10, 6, 5)
    ratios: tuple[float, float, float] = (0.5, 0.25, 0.25)
    skew_threshold: float = 0.5
    inverse_threshold: float = 0.9
    seed: int = 0

    def __post_init__(self):
        self.k = tuple(int(x) for x in self.k)
        self.ratios = tuple(float(x) for x in self.ratios)
        if self.min_triples < 1:
            raise ValueError("min_triples must be >= 1")
        if len(self.k) != 3 or min(self.k) < 1:
            raise ValueError("k needs three values >= 1")
        if len(self.ratios) != 3 or min(self.ratios) < 0 or abs(sum(self.ratios) - 1) > 1e-9:
            raise ValueError("ratios need three non-negative values summing to 1")
        if not 0 < self.skew_threshold <= 1:
            raise ValueError("skew_threshold must be in (0, 1]")
        if not 0.5 < self.inverse_threshold <= 1:
            raise ValueError("inverse_threshold must be in (0.5, 1]")


def _by_relation(triples: Iterable[Triple]) -> dict[str, list[Triple]]:
    out: dict[str, list[Triple]] = defaultdict(list)
    for tr in triples:
        out[tr[1]].append(tr)
    return out


def filter_rare_relations(triples: Sequence[Triple], min_triples: int) -> list[Triple]:
    counts = Counter(r for _, r, _ in triples)
    return [tr for tr in triples if counts[tr[1]] >= min_triples]


def detect_inverse_and_duplicates(triples: Sequence[Triple], theta: float = 0.9) -> set[str]:
    """Relations to drop because another relation mirrors or repeats them.

    ``b`` is an inverse of ``a`` when at least ``theta`` of ``b``'s pairs
    ``(h, t)`` appear reversed among ``a``'s pairs, and a duplicate when they
    appear as is. Of each detected pair the relation with fewer triples is
    dropped; on equal counts the lexicographically larger id goes.
    """
    if not 0.5 < theta <= 1:
        raise ValueError("theta must be in (0.5, 1]")
    pairs = {r: {(h, t) for h, _, t in trs} for r, trs in _by_relation(triples).items()}
    # candidate partners share at least one pair (either orientation)
    owners: dict[tuple[str, str], set[str]] = defaultdict(set)
    for r, ps in pairs.items():
        for p in ps:
            owners[p].add(r)
    drop = set()
    for b, ps in pairs.items():
        same, rev = Counter(), Counter()
        for h, t in ps:
            for a in owners.get((h, t), ()):
                same[a] += 1
            for a in owners.get((t, h), ()):
                rev[a] += 1
        for a in set(same) | set(rev):
            if a == b:
                continue
            size_a, size_b = len(pairs[a]), len(pairs[b])
            if size_a < size_b or (size_a == size_b and b < a):
                continue  # b is not the relation to drop for this pair
            if max(same[a], rev[a]) >= theta * size_b:
                drop.add(b)
    return drop


def remove_unlabeled(triples: Sequence[Triple], entity_text: Mapping[str, TextRecord],
                     relation_text: Mapping[str, TextRecord]) -> list[Triple]:
    def labeled(table, x):
        rec = table.get(x)
        return rec is not None and bool(rec.label.strip())
    return [tr for tr in triples
            if labeled(entity_text, tr[0]) and labeled(entity_text, tr[2]) and labeled(relation_text, tr[1])]


def split_relations(relations: Iterable[str], type_map: Mapping[str, str],
                    ratios=(0.5, 0.25, 0.25), seed: int = 0) -> tuple[list[str], list[str], list[str]]:
    """Partition relations into three parts, keeping each type whole.

    Types are visited largest first (a seeded shuffle orders equal sizes) and
    each goes to the part furthest below its target size. Relations missing
    from ``type_map`` form singleton types.
    """
    groups: dict[str, list[str]] = defaultdict(list)
    for rel in sorted(set(relations)):
        groups[type_map.get(rel, f"\x00untyped:{rel}")].append(rel)
    keys = sorted(groups)
    rng = stream(seed, "splits")
    keys = [keys[i] for i in rng.permutation(len(keys))]
    keys.sort(key=lambda k: -len(groups[k]))
    total = sum(len(v) for v in groups.values())
    targets = [r * total for r in ratios]
    parts: tuple[list[str], list[str], list[str]] = ([], [], [])
    for key in keys:
        deficit = [targets[i] - len(parts[i]) for i in range(3)]
        parts[int(np.argmax(deficit))].extend(groups[key])
    return tuple(sorted(p) for p in parts)


def kcore(triples: Sequence[Triple], k: int) -> list[Triple]:
    """Largest subset in which every entity occurs in at least ``k`` triples.

    An entity occurs once per triple it is head or tail of (twice for a
    self-loop). Pruning repeats until nothing changes.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    alive = list(triples)
    while True:
        counts = Counter()
        for h, _, t in alive:
            counts[h] += 1
            counts[t] += 1
        weak = {e for e, c in counts.items() if c < k}
        if not weak:
            return alive
        alive = [tr for tr in alive if tr[0] not in weak and tr[2] not in weak]


def skewed_relations(triples: Sequence[Triple], threshold: float = 0.5) -> set[str]:
    """Relations where one entity fills the head or the tail slot in ``>= threshold`` of triples."""
    if not 0 < threshold <= 1:
        raise ValueError("threshold must be in (0, 1]")
    out = set()
    for r, trs in _by_relation(triples).items():
        n = len(trs)
        top_head = Counter(h for h, _, _ in trs).most_common(1)[0][1]
        top_tail = Counter(t for _, _, t in trs).most_common(1)[0][1]
        if max(top_head, top_tail) >= threshold * n:
            out.add(r)
    return out


def skew_filter(triples: Sequence[Triple], threshold: float = 0.5) -> list[Triple]:
    bad = skewed_relations(triples, threshold)
    return [tr for tr in triples if tr[1] not in bad]


def _stats(triples: Sequence[Triple]) -> dict:
    ents = {h for h, _, _ in triples} | {t for _, _, t in triples}
    return {"triples": len(triples), "relations": len({r for _, r, _ in triples}),
            "entities": len(ents)}


@dataclass
class GenResult:
    splits: SplitDataset
    parts: dict[str, list[Triple]]
    after_kcore: dict[str, list[Triple]]
    dropped_inverse_or_duplicate: list[str]
    dropped_skewed: dict[str, list[str]]
    steps: list[dict] = field(default_factory=list)

    def statistics(self) -> dict:
        return {"steps": self.steps,
                "dropped_inverse_or_duplicate": self.dropped_inverse_or_duplicate,
                "dropped_skewed": self.dropped_skewed,
                "final": {name: _stats(trs) for name, trs in self.parts.items()}}

    def statistics_json(self) -> str:
        return json.dumps(self.statistics(), indent=2, sort_keys=True)


def generate(raw: Iterable[Triple], type_map: Mapping[str, str],
             entity_text: Mapping[str, TextRecord], relation_text: Mapping[str, TextRecord],
             config: GenConfig = GenConfig()) -> GenResult:
    """Run the full pipeline and return relation-disjoint train/valid/test splits.

    Raises
    ------
    GenerationError
        If any part is empty after processing.
    """
    triples = sorted(set(tuple(tr) for tr in raw))
    steps = [{"step": "input", **_stats(triples)}]

    triples = filter_rare_relations(triples, config.min_triples)
    steps.append({"step": "rare_relations", **_stats(triples)})

    inverse = detect_inverse_and_duplicates(triples, config.inverse_threshold)
    triples = [tr for tr in triples if tr[1] not in inverse]
    steps.append({"step": "inverse_and_duplicates", **_stats(triples)})
    triples = remove_unlabeled(triples, entity_text, relation_text)
    steps.append({"step": "unlabeled", **_stats(triples)})

    rel_parts = split_relations({r for _, r, _ in triples}, type_map, config.ratios, config.seed)
    by_rel = _by_relation(triples)
    parts = {name: [tr for r in rels for tr in by_rel[r]] for name, rels in zip(PARTS, rel_parts)}
    steps.append({"step": "split_relations", **{n: _stats(p) for n, p in parts.items()}})

    cores = {name: kcore(parts[name], k) for name, k in zip(PARTS, config.k)}
    steps.append({"step": "kcore", **{n: _stats(p) for n, p in cores.items()}})

    skewed = {name: sorted(skewed_relations(cores[name], config.skew_threshold)) for name in PARTS}
    final = {name: [tr for tr in cores[name] if tr[1] not in set(skewed[name])] for name in PARTS}
    steps.append({"step": "skew", **{n: _stats(p) for n, p in final.items()}})

    empty = [name for name in PARTS if not final[name]]
    if empty:
        raise GenerationError(f"parts left empty after processing: {empty}")
    for rec in steps:
        logger.info("dataset step %s", rec)

    entities = {e for trs in final.values() for h, _, t in trs for e in (h, t)}
    relations = {r for trs in final.values() for _, r, _ in trs}
    splits = build_splits(final["train"], final["valid"], final["test"],
                          entity_text={e: entity_text[e] for e in sorted(entities)},
                          relation_text={r: relation_text[r] for r in sorted(relations)})
    return GenResult(splits, final, cores, sorted(inverse), skewed, steps)


def config_to_dict(config: GenConfig) -> dict:
    return asdict(config)
