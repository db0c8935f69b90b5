import numpy as np
import pytest

from indlp.features import EntityInputs, FeatureMatrix, assemble_relation_inputs, one_hot_features
from indlp.kg import InductiveSetting, build_splits
from indlp.relwalk import WalkConfig
from indlp.trainer import (Adam, ModelConfig, TrainConfig, history_to_json, init_model, lr_at,
                           prepare_split_graph_features, sample_negatives, sample_negatives_batch,
                           train)
from indlp.synthetic import relation_disjoint


def test_lr_schedule_examples():
    cfg = TrainConfig(learning_rate=1e-3, warmup_fraction=0.2)
    assert lr_at(0, 100, cfg) == 0
    assert lr_at(20, 100, cfg) == pytest.approx(1e-3)
    assert lr_at(10, 100, cfg) == pytest.approx(5e-4)
    assert lr_at(60, 100, cfg) == pytest.approx(5e-4)
    assert lr_at(100, 100, cfg) == 0
    assert lr_at(5, 0, cfg) == 0


def test_lr_schedule_no_warmup():
    cfg = TrainConfig(learning_rate=1.0, warmup_fraction=0.0)
    assert lr_at(0, 10, cfg) == 1.0
    assert lr_at(5, 10, cfg) == 0.5


def test_lr_schedule_peak_and_shape():
    cfg = TrainConfig(learning_rate=2e-5)
    lrs = [lr_at(s, 500, cfg) for s in range(500)]
    assert max(lrs) == pytest.approx(2e-5)
    assert int(np.argmax(lrs)) == 100
    assert all(b >= a for a, b in zip(lrs[:100], lrs[1:101]))
    assert all(b <= a for a, b in zip(lrs[100:], lrs[101:]))


@pytest.mark.parametrize("kwargs", [dict(warmup_fraction=1.0), dict(negatives_per_positive=0),
                                    dict(batch_size=0), dict(epochs=-1), dict(loss="hinge")])
def test_train_config_validation(kwargs):
    with pytest.raises(ValueError):
        TrainConfig(**kwargs)


def test_negatives_count_and_corruption():
    rng = np.random.default_rng(0)
    pos = np.array([1, 0, 2])
    neg = sample_negatives(pos, 64, np.arange(100), rng)
    assert neg.shape == (64, 3)
    assert np.all(neg[:, 1] == 0)
    # exactly one side changes (or neither, after a failed redraw)
    assert np.all((neg[:, 0] == 1) | (neg[:, 2] == 2))
    assert not np.all(neg == pos)


def test_negatives_degenerate_pool():
    neg = sample_negatives(np.array([1, 0, 1]), 5, np.array([1]), np.random.default_rng(0))
    assert np.all(neg == [1, 0, 1])


def test_negatives_deterministic():
    a = sample_negatives_batch(np.array([[0, 0, 1], [2, 1, 3]]), 8, np.arange(10), np.random.default_rng(3))
    b = sample_negatives_batch(np.array([[0, 0, 1], [2, 1, 3]]), 8, np.arange(10), np.random.default_rng(3))
    np.testing.assert_array_equal(a, b)
    with pytest.raises(ValueError):
        sample_negatives_batch(np.array([[0, 0, 1]]), 1, np.array([], dtype=int), np.random.default_rng(0))


def test_adam_first_step_is_sign_times_lr():
    p = {"w": np.array([1.0, -2.0])}
    opt = Adam(p)
    opt.step(p, {"w": np.array([0.5, -3.0])}, lr=0.1)
    np.testing.assert_allclose(p["w"], [0.9, -1.9], rtol=1e-6)


def small_problem(n_entities=12):
    ents = [f"e{i}" for i in range(n_entities)]
    train_t = [(ents[i], "r", ents[(i + 1) % n_entities]) for i in range(n_entities)]
    splits = build_splits(train_t, [], [])
    ent = EntityInputs(one_hot_features(splits.entities.names))
    rel = assemble_relation_inputs(one_hot_features(["r"]), None, "text_only")
    return splits, ent, rel


def test_zero_epochs_returns_init():
    splits, ent, rel = small_problem()
    mc = ModelConfig(dim=4, scorer="transe_l1")
    params, hist = train(splits, ent, rel, mc, TrainConfig(epochs=0, seed=3))
    ref = init_model(ent, rel, mc, 3)
    for k in ref.weights:
        np.testing.assert_array_equal(params.weights[k], ref.weights[k])
    assert hist.epoch_loss == []


def test_single_triple_loss_decreases():
    splits = build_splits([("a", "r", "b")], [], [])
    ent = EntityInputs(FeatureMatrix(["a", "b"], [[1.0, 0.0], [0.0, 1.0]]))
    rel = assemble_relation_inputs(FeatureMatrix(["r"], [[1.0]]), None, "text_only")
    for seed in range(3):
        cfg = TrainConfig(epochs=200, batch_size=1, learning_rate=0.01, seed=seed)
        _, hist = train(splits, ent, rel, ModelConfig(dim=4, scorer="transe_l2"), cfg)
        assert len(hist.lr) == 200
        assert hist.epoch_loss[-1] < hist.epoch_loss[0]


def separable_pairs(n=16):
    # disjoint pairs over one-hot entities: a two-entity pool would leave a quarter
    # of the negatives equal to the positive and the loss floor pure noise
    tr = [(f"x{i}", "r", f"y{i}") for i in range(n)]
    splits = build_splits(tr, [], [])
    ent = EntityInputs(one_hot_features(splits.entities.names))
    rel = assemble_relation_inputs(FeatureMatrix(["r"], [[1.0]]), None, "text_only")
    return splits, ent, rel


@pytest.mark.parametrize("seed", range(5))
def test_separable_loss_monotone_after_first_epoch(seed):
    splits, ent, rel = separable_pairs()
    cfg = TrainConfig(epochs=15, batch_size=16, learning_rate=0.02, negatives_per_positive=256, seed=seed)
    _, hist = train(splits, ent, rel, ModelConfig(dim=8, scorer="transe_l2"), cfg)
    losses = hist.epoch_loss[1:]
    assert sum(b > a for a, b in zip(losses, losses[1:])) <= 1
    assert hist.epoch_loss[-1] < hist.epoch_loss[0]


def test_cycle_loss_decreases():
    splits, ent, rel = small_problem()
    cfg = TrainConfig(epochs=30, batch_size=4, learning_rate=0.02, negatives_per_positive=8)
    _, hist = train(splits, ent, rel, ModelConfig(dim=8, scorer="transe_l1"), cfg)
    assert hist.epoch_loss[-1] < 0.5 * hist.epoch_loss[0]
    assert len(hist.lr) == 30 * 3


def test_bit_reproducible():
    splits, ent, rel = small_problem()
    cfg = TrainConfig(epochs=5, batch_size=5, learning_rate=0.01, negatives_per_positive=4, seed=11)
    a, ha = train(splits, ent, rel, ModelConfig(dim=6, scorer="complex"), cfg)
    b, hb = train(splits, ent, rel, ModelConfig(dim=6, scorer="complex"), cfg)
    for k in a.weights:
        np.testing.assert_array_equal(a.weights[k], b.weights[k])
    assert ha.epoch_loss == hb.epoch_loss
    assert history_to_json(ha) == history_to_json(hb)


def test_missing_entity_feature():
    splits, _, rel = small_problem()
    partial = EntityInputs(one_hot_features(splits.entities.names[:-1]))
    with pytest.raises(ValueError, match="entity features"):
        train(splits, partial, rel, ModelConfig(dim=4), TrainConfig(epochs=1))


def test_missing_relation_feature():
    splits, ent, _ = small_problem()
    rel = assemble_relation_inputs(one_hot_features(["other"]), None, "text_only")
    with pytest.raises(ValueError, match="relation features"):
        train(splits, ent, rel, ModelConfig(dim=4), TrainConfig(epochs=1))


def test_best_checkpoint_tracks_validation():
    splits, records, vocab = relation_disjoint()
    from indlp.features import build_bow_features
    ent = EntityInputs(build_bow_features(list(records.values()), vocab))
    rel = assemble_relation_inputs(one_hot_features(splits.relations.names), None, "text_only")
    cfg = TrainConfig(epochs=4, learning_rate=0.01, negatives_per_positive=4, eval_every=1)
    params, hist = train(splits, ent, rel, ModelConfig(dim=8, scorer="transe_l1"), cfg)
    assert len(hist.validation) == 4
    mrrs = [v["mrr"] for v in hist.validation]
    assert hist.best_mrr == max(mrrs)
    assert hist.best_epoch == int(np.argmax(mrrs))


def test_truly_inductive_networks_per_split():
    splits, _, _ = relation_disjoint()
    gf = prepare_split_graph_features(splits, WalkConfig(dim=8, epochs=2, num_walks_per_node=2, walk_length=5))
    assert set(gf.networks) == {"train", "valid", "test"}
    assert set(gf.features.ids) == set(splits.relations.names)
    for rel, part in gf.provenance.items():
        assert rel in gf.networks[part].names


def test_semi_inductive_single_network():
    tr = [("a", "r1", "b"), ("b", "r2", "c"), ("c", "r1", "a")]
    splits = build_splits(tr, [("d", "r1", "a")], [("e", "r2", "b")])
    gf = prepare_split_graph_features(splits, WalkConfig(dim=4, epochs=1, num_walks_per_node=2, walk_length=4))
    assert list(gf.networks) == ["train"]
    assert gf.source_triples == {"train": 3}
    gf2 = prepare_split_graph_features(splits, WalkConfig(dim=4, epochs=1), setting=InductiveSetting.TRULY_INDUCTIVE)
    assert set(gf2.networks) == {"train", "valid", "test"}


def test_no_leakage_into_train_features():
    splits, _, _ = relation_disjoint()
    cfg = WalkConfig(dim=8, epochs=2, num_walks_per_node=2, walk_length=5)
    a = prepare_split_graph_features(splits, cfg)
    # rewire valid and test completely; train relation features must not move
    valid = [(t, r, h) for h, r, t in splits.valid.string_triples()]
    test = splits.test.string_triples()[::2]
    other = build_splits(splits.train.string_triples(), valid, test)
    b = prepare_split_graph_features(other, cfg)
    train_rels = sorted(a.networks["train"].names)
    np.testing.assert_array_equal(a.features.rows(train_rels), b.features.rows(train_rels))
    assert a.networks["train"] == b.networks["train"]
