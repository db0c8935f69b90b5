"""Filtered ranking evaluation: MRR and Hits@{1,3,10} over head and tail queries."""

from __future__ import annotations

import json
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .features import EntityInputs, RelationInputs
from .kg import SplitDataset, classify_setting
from .model import ModelParams, encode_entity, encode_relation, score

HITS_AT = (1, 3, 10)


class FilterIndex:
    """Known true tails per ``(relation, head)`` and heads per ``(relation, tail)``."""

    def __init__(self, triples: np.ndarray):
        self.tails: dict[tuple[int, int], set[int]] = defaultdict(set)
        self.heads: dict[tuple[int, int], set[int]] = defaultdict(set)
        for h, r, t in np.asarray(triples).reshape(-1, 3).tolist():
            self.tails[(r, h)].add(t)
            self.heads[(r, t)].add(h)

    @classmethod
    def from_splits(cls, splits: SplitDataset) -> "FilterIndex":
        return cls(splits.all_triples())

    def known(self, h: int, r: int, t: int, direction: str) -> set[int]:
        if direction == "tail":
            return self.tails.get((r, h), set())
        return self.heads.get((r, t), set())


@dataclass
class RankingReport:
    ranks: np.ndarray
    candidate_counts: np.ndarray
    directions: list[str]
    relations: np.ndarray
    candidate_policy: str
    setting: str = ""
    relation_names: list[str] = field(default_factory=list)

    @property
    def n_queries(self) -> int:
        return len(self.ranks)

    @property
    def mrr(self) -> float:
        return float(np.mean(1.0 / self.ranks)) if len(self.ranks) else float("nan")

    def hits(self, k: int) -> float:
        return float(np.mean(self.ranks <= k)) if len(self.ranks) else float("nan")

    def expected_random_mrr(self) -> float:
        """Expected MRR of a scorer drawing i.i.d. continuous scores.

        A query with ``C`` unfiltered candidates (target included) has a
        uniform rank on ``1..C``, so ``E[1/rank] = H_C / C``.
        """
        c = self.candidate_counts.astype(np.int64)
        harmonic = np.cumsum(1.0 / np.arange(1, max(int(c.max(initial=1)), 1) + 1))
        return float(np.mean(harmonic[c - 1] / c))

    def per_relation(self) -> dict[str, dict]:
        out = {}
        for r in np.unique(self.relations).tolist():
            sel = self.relations == r
            ranks = self.ranks[sel]
            name = self.relation_names[r] if self.relation_names else str(r)
            out[name] = {"n_queries": int(sel.sum()), "mrr": float(np.mean(1.0 / ranks)),
                         **{f"hits{k}": float(np.mean(ranks <= k)) for k in HITS_AT}}
        return out

    def to_dict(self, per_relation: bool = False) -> dict:
        doc = {"setting": self.setting, "candidate_policy": self.candidate_policy,
               "n_queries": self.n_queries, "mrr": self.mrr,
               **{f"hits{k}": self.hits(k) for k in HITS_AT}}
        if per_relation:
            doc["per_relation"] = self.per_relation()
        return doc

    def to_json(self, per_relation: bool = False) -> str:
        return json.dumps(self.to_dict(per_relation), indent=2, sort_keys=True)


def rank_from_scores(scores: np.ndarray, target: int, excluded=()) -> float:
    """Average-tie rank of ``scores[target]`` after dropping ``excluded`` positions."""
    scores = np.asarray(scores, dtype=np.float64)
    keep = np.ones(len(scores), dtype=bool)
    for i in excluded:
        if i != target:
            keep[i] = False
    s_t = scores[target]
    others = np.delete(np.arange(len(scores)), target)
    others = others[keep[others]]
    greater = np.count_nonzero(scores[others] > s_t)
    ties = np.count_nonzero(scores[others] == s_t)
    return 1.0 + greater + ties / 2.0


def candidate_ids(splits: SplitDataset, policy: str = "all", split: str = "test") -> np.ndarray:
    if policy == "all":
        return np.array(sorted(set().union(*(SplitDataset.entity_set(g) for g in
                                             (splits.train, splits.valid, splits.test)))),
                        dtype=np.int64)
    if policy in ("test", "split"):
        return np.array(sorted(SplitDataset.entity_set(splits.split(split))), dtype=np.int64)
    raise ValueError(f"unknown candidate policy {policy!r}")


def encode_tables(params: ModelParams, entities: EntityInputs, relations: RelationInputs,
                  entity_names: Sequence[str], relation_names: Sequence[str]):
    """Encoded vectors for the given entity and relation ids (row-aligned)."""
    F = entities.rows(entity_names, params.token_table)
    W = params.W("entity")
    E = F @ W.T
    if params.concat:
        E = np.concatenate([E, E], axis=1)
    parts = []
    for src in params.relation_sources():
        mat = relations.text if src == "text" else relations.graph
        parts.append(mat.rows(relation_names) @ params.W(src).T)
    R = np.concatenate(parts, axis=1)
    return E, R


def rank_query(params: ModelParams, entities: EntityInputs, relations: RelationInputs,
               query: tuple[str, str, str], direction: str, candidates: Sequence[str],
               filter_known: set[str] = frozenset()) -> float:
    """Rank of the true entity of ``query`` among string-id ``candidates``."""
    h, r, t = query
    target = h if direction == "head" else t
    candidates = list(candidates)
    if target not in candidates:
        raise ValueError(f"target {target!r} is not among the candidates")
    E, R = encode_tables(params, entities, relations, candidates + [h, t], [r])
    C = E[:len(candidates)]
    if direction == "tail":
        s = score(params, E[len(candidates)][None, :], R[0][None, :], C)
    else:
        s = score(params, C, R[0][None, :], E[len(candidates) + 1][None, :])
    excluded = [i for i, c in enumerate(candidates) if c in filter_known]
    return rank_from_scores(s, candidates.index(target), excluded)


def evaluate(params: ModelParams, splits: SplitDataset, entities: EntityInputs,
             relations: RelationInputs, candidate_policy: str = "all", split: str = "test",
             filter_index: FilterIndex | None = None, filtered: bool = True,
             chunk: int | None = None) -> RankingReport:
    """Head and tail ranking for every triple of ``split``.

    Queries are scored in blocks against the whole candidate table; the block
    size defaults to keeping the broadcast score tensor near 2e7 entries.
    """
    graph = splits.split(split)
    if len(graph) == 0:
        raise ValueError(f"{split} split is empty")
    names_e = splits.entities.names
    names_r = splits.relations.names
    cands = candidate_ids(splits, candidate_policy, split)
    pos = np.full(len(names_e), -1, dtype=np.int64)
    pos[cands] = np.arange(len(cands))
    E, R = encode_tables(params, entities, relations, [names_e[i] for i in cands], names_r)
    if filtered and filter_index is None:
        filter_index = FilterIndex.from_splits(splits)
    if chunk is None:
        chunk = max(1, int(2e7 // max(len(cands) * E.shape[1], 1)))

    ranks, counts, dirs, rels = [], [], [], []
    triples = graph.triples
    for direction in ("tail", "head"):
        for lo in range(0, len(triples), chunk):
            block = triples[lo:lo + chunk]
            h, r, t = block[:, 0], block[:, 1], block[:, 2]
            target = t if direction == "tail" else h
            if np.any(pos[target] < 0):
                raise ValueError("a target entity is outside the candidate set")
            anchor = pos[h] if direction == "tail" else pos[t]
            if np.any(anchor < 0):
                # anchor outside the candidate pool still needs its vector
                extra = encode_tables(params, entities, relations,
                                      [names_e[i] for i in (h if direction == "tail" else t)],
                                      names_r[:1])[0]
            else:
                extra = E[anchor]
            if direction == "tail":
                S = score(params, extra[:, None, :], R[r][:, None, :], E[None, :, :])
            else:
                S = score(params, E[None, :, :], R[r][:, None, :], extra[:, None, :])
            tgt = pos[target]
            s_t = S[np.arange(len(block)), tgt]
            drop = np.zeros_like(S, dtype=bool)
            if filtered:
                for i, (hh, rr, tt) in enumerate(block.tolist()):
                    known = filter_index.known(hh, rr, tt, direction)
                    idx = pos[list(known)] if known else np.zeros(0, np.int64)
                    drop[i, idx[idx >= 0]] = True
            drop[np.arange(len(block)), tgt] = True
            valid = ~drop
            greater = np.count_nonzero((S > s_t[:, None]) & valid, axis=1)
            ties = np.count_nonzero((S == s_t[:, None]) & valid, axis=1)
            ranks.append(1.0 + greater + ties / 2.0)
            counts.append(valid.sum(axis=1) + 1)
            dirs.extend([direction] * len(block))
            rels.append(r)
    return RankingReport(np.concatenate(ranks), np.concatenate(counts), dirs,
                         np.concatenate(rels), candidate_policy,
                         classify_setting(splits).value, names_r)


def brute_force_oracle(params: ModelParams, splits: SplitDataset, entities: EntityInputs,
                       relations: RelationInputs, candidate_policy: str = "all",
                       split: str = "test", filtered: bool = True) -> RankingReport:
    """Per-query, per-candidate recomputation with no batching or shared tables."""
    graph = splits.split(split)
    if len(graph) == 0:
        raise ValueError(f"{split} split is empty")
    names_e = splits.entities.names
    names_r = splits.relations.names
    cands = [names_e[i] for i in candidate_ids(splits, candidate_policy, split)]
    truth = set(map(tuple, splits.all_triples().tolist()))

    def ent(name):
        if params.token_table is not None and entities.tokens is not None:
            row = entities.rows([name], params.token_table)[0]
        else:
            row = entities.features.row(name)
        return encode_entity(params, row)

    def rel(name):
        text = relations.text.row(name) if relations.text is not None else None
        graph_row = relations.graph.row(name) if relations.graph is not None else None
        return encode_relation(params, text, graph_row)

    ranks, counts, dirs, rels = [], [], [], []
    for direction in ("tail", "head"):
        for h, r, t in graph.triples.tolist():
            hv, rv, tv = ent(names_e[h]), rel(names_r[r]), ent(names_e[t])
            target_score = float(score(params, hv, rv, tv))
            greater = ties = 0
            n_valid = 1
            for c in cands:
                ci = splits.entities[c]
                cand_triple = (h, r, ci) if direction == "tail" else (ci, r, t)
                if cand_triple == (h, r, t):
                    continue
                if filtered and cand_triple in truth:
                    continue
                cv = ent(c)
                s = float(score(params, hv, rv, cv) if direction == "tail"
                          else score(params, cv, rv, tv))
                n_valid += 1
                if s > target_score:
                    greater += 1
                elif s == target_score:
                    ties += 1
            ranks.append(1.0 + greater + ties / 2.0)
            counts.append(n_valid)
            dirs.append(direction)
            rels.append(r)
    return RankingReport(np.array(ranks), np.array(counts), dirs, np.array(rels, dtype=np.int64),
                         candidate_policy, classify_setting(splits).value, names_r)
