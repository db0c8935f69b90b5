from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from indlp.datasetgen import (GenConfig, GenerationError, detect_inverse_and_duplicates,
                              filter_rare_relations, generate, kcore, remove_unlabeled,
                              skew_filter, skewed_relations, split_relations)
from indlp.kg import InductiveSetting, TextRecord, classify_setting
from indlp.synthetic import raw_corpus


def test_rare_relations():
    triples = [("a", "r1", "b"), ("b", "r1", "c"), ("a", "r2", "b"), ("b", "r2", "c"), ("c", "r2", "a")]
    assert filter_rare_relations(triples, 3) == triples[2:]
    assert filter_rare_relations(triples, 1) == triples
    assert filter_rare_relations(triples, 2) == triples
    assert filter_rare_relations(triples, 4) == []


def test_perfect_inverse_dropped():
    r1 = [(f"e{i}", "r1", f"e{i + 1}") for i in range(10)]
    r2 = [(t, "r2", h) for h, _, t in r1]
    assert detect_inverse_and_duplicates(r1 + r2, 0.9) == {"r2"}


def test_duplicate_dropped_smaller():
    r1 = [(f"e{i}", "r1", f"e{i + 1}") for i in range(10)]
    r2 = [(h, "r2", t) for h, _, t in r1[:8]]
    assert detect_inverse_and_duplicates(r1 + r2, 0.9) == {"r2"}


def test_unrelated_kept():
    r1 = [(f"e{i}", "r1", f"e{i + 1}") for i in range(10)]
    r2 = [(f"f{i}", "r2", f"f{i + 1}") for i in range(10)]
    assert detect_inverse_and_duplicates(r1 + r2) == set()


def test_threshold_boundary():
    r1 = [(f"e{i}", "r1", f"e{i + 1}") for i in range(10)]
    r2 = [(t, "r2", h) for h, _, t in r1[:8]] + [("x", "r2", "y"), ("y", "r2", "z")]
    triples = r1 + r2
    assert detect_inverse_and_duplicates(triples, 0.9) == set()
    # equal sizes, so the lexicographically larger id goes
    assert detect_inverse_and_duplicates(triples, 0.8) == {"r2"}


def test_tie_drops_larger_id():
    a = [(f"e{i}", "rb", f"e{i + 1}") for i in range(5)]
    b = [(h, "ra", t) for h, _, t in a]
    assert detect_inverse_and_duplicates(a + b) == {"rb"}


def test_theta_validation():
    with pytest.raises(ValueError):
        detect_inverse_and_duplicates([], 0.5)


def test_remove_unlabeled():
    ents = {"a": TextRecord("a", "A"), "b": TextRecord("b", "  ")}
    rels = {"r": TextRecord("r", "R")}
    triples = [("a", "r", "a"), ("a", "r", "b"), ("a", "s", "a"), ("a", "r", "c")]
    assert remove_unlabeled(triples, ents, rels) == [("a", "r", "a")]


def test_split_singletons():
    rels = [f"r{i}" for i in range(9)]
    parts = split_relations(rels, {}, (1 / 3, 1 / 3, 1 / 3))
    assert [len(p) for p in parts] == [3, 3, 3]
    assert sorted(sum(parts, [])) == sorted(rels)


def test_split_one_type():
    rels = [f"r{i}" for i in range(9)]
    parts = split_relations(rels, {r: "T" for r in rels}, (1 / 3, 1 / 3, 1 / 3))
    assert sorted(len(p) for p in parts) == [0, 0, 9]


def test_split_keeps_types_whole_and_deterministic():
    rels = [f"r{i}" for i in range(30)]
    types = {r: f"T{i % 7}" for i, r in enumerate(rels)}
    a = split_relations(rels, types, (0.5, 0.25, 0.25), seed=4)
    assert a == split_relations(rels, types, (0.5, 0.25, 0.25), seed=4)
    part_of = {r: i for i, p in enumerate(a) for r in p}
    for t in set(types.values()):
        assert len({part_of[r] for r in rels if types[r] == t}) == 1


def kcore_oracle(triples, k):
    alive = set(triples)
    changed = True
    while changed:
        changed = False
        occ = Counter()
        for h, _, t in alive:
            occ[h] += 1
            occ[t] += 1
        for tr in list(alive):
            if occ[tr[0]] < k or occ[tr[2]] < k:
                alive.discard(tr)
                changed = True
    return alive


def test_kcore_examples():
    chain = [("a", "r", "b"), ("b", "r", "c")]
    assert kcore(chain, 2) == []
    clique = [(x, "r", y) for x in "abc" for y in "abc" if x != y]
    assert kcore(clique, 4) == clique
    assert kcore(chain, 1) == chain
    with pytest.raises(ValueError):
        kcore(chain, 0)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 9), st.integers(0, 2), st.integers(0, 9)), max_size=60),
       st.integers(1, 5))
def test_kcore_matches_oracle(raw, k):
    triples = sorted({(f"e{h}", f"r{r}", f"e{t}") for h, r, t in raw})
    out = kcore(triples, k)
    assert set(out) == kcore_oracle(triples, k)
    occ = Counter(e for h, _, t in out for e in (h, t))
    assert all(c >= k for c in occ.values())


def test_skew_examples():
    same_head = [("a", "r", f"e{i}") for i in range(6)]
    assert skew_filter(same_head, 0.5) == []
    distinct = [(f"h{i}", "r", f"t{i}") for i in range(6)]
    assert skew_filter(distinct, 0.5) == distinct
    boundary = [(f"h{i}", "r", "x" if i < 5 else f"t{i}") for i in range(10)]
    assert skewed_relations(boundary, 0.5) == {"r"}
    below = [(f"h{i}", "r", "x" if i < 4 else f"t{i}") for i in range(10)]
    assert skewed_relations(below, 0.5) == set()
    with pytest.raises(ValueError):
        skewed_relations(distinct, 0)


@pytest.mark.parametrize("kwargs", [dict(min_triples=0), dict(k=(1, 0, 1)), dict(k=(1, 1)),
                                    dict(ratios=(0.5, 0.5, 0.5)), dict(ratios=(1.2, -0.1, -0.1)),
                                    dict(skew_threshold=0.0), dict(inverse_threshold=0.5)])
def test_config_validation(kwargs):
    with pytest.raises(ValueError):
        GenConfig(**kwargs)


def toy_raw(seed=0, n=200):
    rng = np.random.default_rng(seed)
    ents = [f"Q{i}" for i in range(25)]
    rels = [f"P{i}" for i in range(12)]
    triples = set()
    while len(triples) < n:
        h, t = rng.choice(len(ents), 2, replace=False)
        triples.add((ents[h], rels[int(rng.integers(len(rels)))], ents[t]))
    types = {r: f"T{i % 5}" for i, r in enumerate(rels)}
    et = {e: TextRecord(e, e.lower()) for e in ents}
    rt = {r: TextRecord(r, r.lower()) for r in rels}
    return sorted(triples), types, et, rt


def check_invariants(raw, types, et, rt, config, result):
    names = ("train", "valid", "test")
    rels = [{r for _, r, _ in result.parts[n]} for n in names]
    assert not (rels[0] & rels[1]) and not (rels[0] & rels[2]) and not (rels[1] & rels[2])
    for name, k in zip(names, config.k):
        occ = Counter(e for h, _, t in result.after_kcore[name] for e in (h, t))
        assert all(c >= k for c in occ.values())
        assert not skewed_relations(result.parts[name], config.skew_threshold) if result.parts[name] else True
        assert set(result.parts[name]) <= set(result.after_kcore[name])
    assert set().union(*map(set, result.after_kcore.values())) <= set(raw)
    assert classify_setting(result.splits) is InductiveSetting.TRULY_INDUCTIVE


def test_toy_pipeline_invariants():
    raw, types, et, rt = toy_raw()
    config = GenConfig(k=(3, 2, 2), ratios=(0.5, 0.25, 0.25))
    result = generate(raw, types, et, rt, config)
    check_invariants(raw, types, et, rt, config, result)
    steps = [s["step"] for s in result.steps]
    assert steps == ["input", "rare_relations", "inverse_and_duplicates", "unlabeled",
                     "split_relations", "kcore", "skew"]
    counts = [s["triples"] for s in result.steps[:4]]
    assert counts == sorted(counts, reverse=True)


def test_pipeline_deterministic():
    raw, types, et, rt = toy_raw(1)
    config = GenConfig(k=(3, 2, 2), seed=5)
    a = generate(raw, types, et, rt, config)
    b = generate(list(reversed(raw)), types, et, rt, config)
    assert a.parts == b.parts
    assert a.statistics_json() == b.statistics_json()


def test_empty_part_raises():
    raw, types, et, rt = toy_raw()
    with pytest.raises(GenerationError):
        generate(raw, types, et, rt, GenConfig(k=(50, 50, 50)))


def test_raw_corpus_pipeline():
    raw, types, et, rt = raw_corpus()
    config = GenConfig()
    result = generate(raw, types, et, rt, config)
    check_invariants(raw, types, et, rt, config, result)
    assert {"P32", "P33"} <= set(result.dropped_inverse_or_duplicate)
    dropped = set().union(*map(set, result.dropped_skewed.values()))
    assert dropped == {"P34", "P35"}
    assert "P36" not in {r for trs in result.parts.values() for _, r, _ in trs}  # rare
    unlabeled = {"Q1497", "Q1498", "Q1499"}
    assert not any(h in unlabeled or t in unlabeled for trs in result.parts.values() for h, _, t in trs)
