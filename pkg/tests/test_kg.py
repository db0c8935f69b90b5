import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from indlp.kg import (InductiveSetting, SplitDataset, TripleFormatError, build_graph, build_splits,
                      classify_setting, load_split_dir, load_text_records, load_triples,
                      write_text_records, write_triples, TextRecord)

from conftest import FIVE_TRIPLES

triple_lists = st.lists(st.tuples(st.sampled_from("abcdef"), st.sampled_from(["p", "q", "s"]),
                                  st.sampled_from("abcdef")), max_size=40)


def test_load_single_line(tmp_path):
    path = tmp_path / "t.tsv"
    path.write_text("Q1\tP10\tQ2\n")
    assert load_triples(path) == [("Q1", "P10", "Q2")]


def test_load_empty_file(tmp_path):
    path = tmp_path / "t.tsv"
    path.write_text("")
    assert load_triples(path) == []


def test_load_reports_duplicates(tmp_path):
    path = tmp_path / "t.tsv"
    path.write_text("a\tr\tb\nb\tr\tc\na\tr\tb\n")
    report = []
    triples = load_triples(path, report)
    assert len(triples) == 3
    assert report[0].duplicates == 1 and report[0].lines == 3


def test_load_missing_file(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_triples(tmp_path / "nope.tsv")


def test_load_malformed_line_number(tmp_path):
    path = tmp_path / "t.tsv"
    path.write_text("a\tr\tb\na\tr\n")
    with pytest.raises(TripleFormatError, match=":2:"):
        load_triples(path)


def test_build_graph_single():
    g = build_graph([("a", "r", "b")])
    assert (g.n_entities, g.n_relations, len(g)) == (2, 1, 1)


def test_build_graph_five_triple():
    g = build_graph(FIVE_TRIPLES)
    assert (g.n_entities, g.n_relations, len(g)) == (4, 4, 5)


def test_build_graph_dedup():
    g = build_graph([("a", "r", "b"), ("a", "r", "b"), ("b", "r", "a")])
    assert len(g) == 2
    assert g.duplicates == 1


def test_first_appearance_order():
    g = build_graph([("z", "r2", "y"), ("y", "r1", "x")])
    assert g.entities.names == ["z", "y", "x"]
    assert g.relations.names == ["r2", "r1"]


def test_triples_read_only():
    g = build_graph(FIVE_TRIPLES)
    with pytest.raises(ValueError):
        g.triples[0, 0] = 3


@settings(max_examples=60, deadline=None)
@given(triple_lists)
def test_round_trip_as_set(triples):
    assert set(build_graph(triples).string_triples()) == set(triples)


@settings(max_examples=60, deadline=None)
@given(triple_lists)
def test_position_counts_sum_to_relation_size(triples):
    g = build_graph(triples)
    for r in range(g.n_relations):
        n = len(g.relation_triples(r))
        assert sum(g.head_counts[r].values()) == n == sum(g.tail_counts[r].values())


def test_write_load_round_trip(tmp_path):
    write_triples(FIVE_TRIPLES, tmp_path / "x.tsv")
    assert load_triples(tmp_path / "x.tsv") == FIVE_TRIPLES


def test_text_records_round_trip(tmp_path):
    recs = [TextRecord("Q1", "Paris", "capital of France"), TextRecord("P1", "located in", "")]
    write_text_records(recs, tmp_path / "t.tsv")
    back = load_text_records(tmp_path / "t.tsv")
    assert back["Q1"].description == "capital of France"
    assert back["P1"].text == "located in"


def test_split_vocab_is_shared():
    s = build_splits([("a", "r", "b")], [("b", "s", "c")], [("c", "r", "a")])
    assert s.entities.names == ["a", "b", "c"]
    assert SplitDataset.relation_set(s.valid) == {s.relations["s"]}
    assert SplitDataset.entity_set(s.test) == {s.entities["c"], s.entities["a"]}


def test_classify_truly():
    s = build_splits([("a", "r", "b")], [], [("a", "s", "b")])
    assert classify_setting(s) is InductiveSetting.TRULY_INDUCTIVE


def test_classify_transductive():
    s = build_splits([("a", "r", "b"), ("b", "r", "c")], [], [("a", "r", "c")])
    assert classify_setting(s) is InductiveSetting.TRANSDUCTIVE


def test_classify_fully():
    s = build_splits([("a", "r", "b")], [], [("x", "r", "y"), ("y", "r", "z")])
    assert classify_setting(s) is InductiveSetting.FULLY_INDUCTIVE


def test_classify_semi():
    s = build_splits([("a", "r", "b")], [], [("a", "r", "y")])
    assert classify_setting(s) is InductiveSetting.SEMI_INDUCTIVE


def test_classify_relation_priority():
    # new relation and new entities together still count as truly inductive
    s = build_splits([("a", "r", "b")], [], [("x", "s", "y")])
    assert classify_setting(s) is InductiveSetting.TRULY_INDUCTIVE


def test_classify_empty_test():
    s = build_splits([("a", "r", "b")], [], [])
    with pytest.raises(ValueError):
        classify_setting(s)


def test_classify_order_independent():
    rng = np.random.default_rng(3)
    train = [("a", "r", "b"), ("b", "r", "c"), ("c", "s", "a")]
    test = [("a", "r", "d"), ("c", "s", "b")]
    base = classify_setting(build_splits(train, [], test))
    for _ in range(5):
        tr = [train[i] for i in rng.permutation(len(train))]
        te = [test[i] for i in rng.permutation(len(test))]
        assert classify_setting(build_splits(tr, [], te)) is base


def test_load_split_dir(tmp_path):
    write_triples([("a", "r", "b")], tmp_path / "train.tsv")
    write_triples([], tmp_path / "valid.tsv")
    write_triples([("a", "s", "b")], tmp_path / "test.tsv")
    write_text_records([TextRecord("a", "alpha", "")], tmp_path / "entity_text.tsv")
    s = load_split_dir(tmp_path)
    assert len(s.train) == 1 and len(s.valid) == 0
    assert s.entity_text["a"].label == "alpha"
