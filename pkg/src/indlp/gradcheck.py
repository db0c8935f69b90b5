"""Finite-difference verification of :func:`indlp.model.backward`."""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .features import RelationFeatureMode
from .model import Batch, LossKind, ModelParams, Scorer, backward, forward, init_params

KINK_GUARD = 1e-3
ABS_FLOOR = 1e-6
# configs whose whole gradient is below this carry no signal (e.g. negatives equal to the positive)
MIN_SIGNAL = 1e-4


@dataclass
class GradCase:
    params: ModelParams
    batch: Batch
    loss: LossKind
    margin: float
    l2: float


def _near_kink(case: GradCase) -> bool:
    fwd = forward(case.params, case.batch, case.loss, case.margin, case.l2)
    if case.loss is LossKind.MARGIN:
        if np.min(np.abs(case.margin - fwd.s_pos[:, None] + fwd.s_neg)) < KINK_GUARD:
            return True
    c = fwd.cache
    if case.params.scorer is not Scorer.COMPLEX:
        xs = [c["H"] + c["R"] - c["T"], c["Hn"] + c["R"][:, None, :] - c["Tn"]]
        if case.params.scorer is Scorer.TRANSE_L1:
            return any(np.min(np.abs(x)) < KINK_GUARD for x in xs)
        return any(np.min(np.linalg.norm(x, axis=-1)) < KINK_GUARD for x in xs)
    return False


def random_case(rng: np.random.Generator, scorer, loss) -> GradCase:
    """Small random model and batch.

    Resampled until every hinge/abs argument is ``KINK_GUARD`` away from its
    kink and the gradient is not identically (near) zero.
    """
    scorer, loss = Scorer(scorer), LossKind(loss)
    while True:
        mode = RelationFeatureMode(rng.choice([m.value for m in RelationFeatureMode]))
        dim = int(rng.integers(1, 17))
        if scorer is Scorer.COMPLEX and mode is not RelationFeatureMode.CONCAT and dim % 2:
            dim = dim + 1 if dim < 16 else dim - 1
        shared = bool(rng.random() < 0.3)
        if shared:
            f = int(rng.integers(1, 9))
            fe = ft = fg = f
        else:
            fe, ft, fg = (int(x) for x in rng.integers(1, 9, size=3))
        use_tokens = bool(rng.random() < 0.3)
        table = rng.normal(size=(5, fe)) if use_tokens else None
        params = init_params(dim, scorer, mode, fe, ft, fg,
                             sharing="shared" if shared else "separate", rng=rng,
                             token_table=table)
        for W in params.weights.values():
            W *= rng.uniform(0.5, 2.0)
        U = int(rng.integers(2, 7))
        B = int(rng.integers(1, 5))
        K = int(rng.integers(1, 5))
        tokens = None
        if use_tokens:
            tokens = sp.csr_matrix(rng.random((U, 5)) * (rng.random((U, 5)) < 0.6))
        rel_rows = {"text": rng.normal(size=(B, ft)), "graph": rng.normal(size=(B, fg))}
        batch = Batch(
            entity_rows=rng.normal(size=(U, fe)),
            heads=rng.integers(0, U, size=B), tails=rng.integers(0, U, size=B),
            neg_heads=rng.integers(0, U, size=(B, K)), neg_tails=rng.integers(0, U, size=(B, K)),
            relation_rows={s: rel_rows[s] for s in params.relation_sources()},
            entity_tokens=tokens,
        )
        case = GradCase(params, batch, loss, float(rng.uniform(0.5, 3.0)),
                        float(rng.choice([0.0, 1e-2, 1e-3])))
        if _near_kink(case):
            continue
        _, grads = backward(params, batch, case.loss, case.margin, case.l2)
        if max(float(np.max(np.abs(g))) for g in grads.values()) >= MIN_SIGNAL:
            return case


def numeric_grads(case: GradCase, step: float = 1e-5) -> dict[str, np.ndarray]:
    out = {}
    for name, tensor in case.params.trainable().items():
        g = np.zeros_like(tensor)
        for idx in np.ndindex(tensor.shape):
            orig = tensor[idx]
            tensor[idx] = orig + step
            up = forward(case.params, case.batch, case.loss, case.margin, case.l2).loss
            tensor[idx] = orig - step
            down = forward(case.params, case.batch, case.loss, case.margin, case.l2).loss
            tensor[idx] = orig
            g[idx] = (up - down) / (2 * step)
        out[name] = g
    return out


def relative_error(analytic: dict, numeric: dict) -> float:
    """Largest entrywise discrepancy over the largest gradient entry.

    Both are taken over the full parameter vector (all tensors), so a tensor
    whose true gradient is exactly zero is judged against the model's
    gradient scale rather than its own round-off. The scale is floored at
    ``ABS_FLOOR``.
    """
    diff = max(float(np.max(np.abs(analytic[k] - numeric[k]), initial=0.0)) for k in numeric)
    scale = max(max(float(np.max(np.abs(analytic[k]), initial=0.0)),
                    float(np.max(np.abs(numeric[k]), initial=0.0))) for k in numeric)
    return diff / max(scale, ABS_FLOOR)


def check_case(case: GradCase, step: float = 1e-5, corrupt: bool = False) -> float:
    _, grads = backward(case.params, case.batch, case.loss, case.margin, case.l2)
    if corrupt:
        grads = {k: v * 1.01 + 1e-3 for k, v in grads.items()}
    return relative_error(grads, numeric_grads(case, step))


def run_grid(n_configs: int = 100, seed: int = 0, corrupt: bool = False,
             scorers=tuple(Scorer), losses=tuple(LossKind)) -> dict[tuple[str, str], float]:
    """Max relative error per (scorer, loss) cell."""
    report = {}
    for s, l in itertools.product(scorers, losses):
        rng = np.random.default_rng([seed, list(Scorer).index(Scorer(s)), list(LossKind).index(LossKind(l))])
        worst = 0.0
        for _ in range(n_configs):
            worst = max(worst, check_case(random_case(rng, s, l), corrupt=corrupt))
        report[(Scorer(s).value, LossKind(l).value)] = worst
    return report
