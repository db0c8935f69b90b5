"""Linear feature encoders, TransE/ComplEx scorers, losses and analytic gradients.

Entities and relations are encoded as ``W @ feature``. In ``concat`` mode a
relation is ``[W_text f_text ; W_graph f_graph]`` and entity vectors are
duplicated to ``[e ; e]`` to match. ComplEx vectors store all real parts
first, then all imaginary parts.
"""

from __future__ import annotations

import enum
import io
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .features import RelationFeatureMode
from .vectors import VectorFormatError, format_vectors, parse_vectors

CHECKPOINT_MAGIC = "# indlp-checkpoint v1"


class Scorer(str, enum.Enum):
    TRANSE_L1 = "transe_l1"
    TRANSE_L2 = "transe_l2"
    COMPLEX = "complex"


class Sharing(str, enum.Enum):
    SHARED = "shared"
    SEPARATE = "separate"


class LossKind(str, enum.Enum):
    MARGIN = "margin"
    NLL = "nll"


class DimensionError(ValueError):
    pass


@dataclass
class ModelParams:
    """Projection matrices and bookkeeping.

    ``weights`` maps a matrix name to a ``(dim, F)`` array. Under
    ``Sharing.SHARED`` every source uses the single ``"shared"`` matrix;
    otherwise the names are ``"entity"``, ``"text"`` and ``"graph"``.
    ``token_table`` (optional) is a trainable word-vector table from which
    entity features are re-derived on every forward pass.
    """

    dim: int
    scorer: Scorer
    relation_mode: RelationFeatureMode
    sharing: Sharing
    weights: dict[str, np.ndarray]
    token_table: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.scorer = Scorer(self.scorer)
        self.relation_mode = RelationFeatureMode(self.relation_mode)
        self.sharing = Sharing(self.sharing)
        if self.dim < 1:
            raise DimensionError("embedding dim must be >= 1")
        if self.scorer is Scorer.COMPLEX and self.out_dim % 2:
            raise DimensionError(f"complex scorer needs an even vector dim, got {self.out_dim}")

    @property
    def concat(self) -> bool:
        return self.relation_mode is RelationFeatureMode.CONCAT

    @property
    def out_dim(self) -> int:
        return 2 * self.dim if self.concat else self.dim

    def key(self, source: str) -> str:
        return "shared" if self.sharing is Sharing.SHARED else source

    def W(self, source: str) -> np.ndarray:
        return self.weights[self.key(source)]

    def relation_sources(self) -> list[str]:
        return {RelationFeatureMode.TEXT_ONLY: ["text"],
                RelationFeatureMode.GRAPH_ONLY: ["graph"],
                RelationFeatureMode.CONCAT: ["text", "graph"]}[self.relation_mode]

    def input_dims(self) -> dict[str, int]:
        return {src: self.W(src).shape[1] for src in ["entity", *self.relation_sources()]}

    def trainable(self) -> dict[str, np.ndarray]:
        out = dict(self.weights)
        if self.token_table is not None:
            out["tokens"] = self.token_table
        return out

    def copy(self) -> "ModelParams":
        return ModelParams(self.dim, self.scorer, self.relation_mode, self.sharing,
                           {k: v.copy() for k, v in self.weights.items()},
                           None if self.token_table is None else self.token_table.copy(),
                           dict(self.meta))


def init_params(dim: int, scorer, relation_mode, entity_dim: int, text_dim: int | None = None,
                graph_dim: int | None = None, sharing=Sharing.SEPARATE,
                rng: np.random.Generator | None = None, token_table=None) -> ModelParams:
    """Xavier-uniform projections for the sources the relation mode needs."""
    rng = np.random.default_rng(0) if rng is None else rng
    relation_mode = RelationFeatureMode(relation_mode)
    sharing = Sharing(sharing)
    dims = {"entity": entity_dim}
    if relation_mode in (RelationFeatureMode.TEXT_ONLY, RelationFeatureMode.CONCAT):
        if text_dim is None:
            raise DimensionError("text_dim required for this relation mode")
        dims["text"] = text_dim
    if relation_mode in (RelationFeatureMode.GRAPH_ONLY, RelationFeatureMode.CONCAT):
        if graph_dim is None:
            raise DimensionError("graph_dim required for this relation mode")
        dims["graph"] = graph_dim

    def xavier(f):
        limit = np.sqrt(6.0 / (dim + f))
        return rng.uniform(-limit, limit, size=(dim, f))

    if sharing is Sharing.SHARED:
        if len(set(dims.values())) != 1:
            raise DimensionError(f"shared projection needs equal input dims, got {dims}")
        weights = {"shared": xavier(entity_dim)}
    else:
        weights = {name: xavier(f) for name, f in dims.items()}
    table = None if token_table is None else np.array(token_table, dtype=np.float64)
    return ModelParams(dim, Scorer(scorer), relation_mode, sharing, weights, table)


def _check_row(W, row):
    row = np.asarray(row, dtype=np.float64)
    if row.shape[-1] != W.shape[1]:
        raise DimensionError(f"feature dim {row.shape[-1]} != projection input {W.shape[1]}")
    return row


def encode_entity(params: ModelParams, features_row) -> np.ndarray:
    W = params.W("entity")
    e = W @ _check_row(W, features_row)
    return np.concatenate([e, e]) if params.concat else e


def encode_relation(params: ModelParams, text_row=None, graph_row=None) -> np.ndarray:
    parts = []
    for src, row in (("text", text_row), ("graph", graph_row)):
        if src not in params.relation_sources():
            continue
        if row is None:
            raise ValueError(f"relation mode {params.relation_mode.value} needs a {src} row")
        W = params.W(src)
        parts.append(W @ _check_row(W, row))
    return np.concatenate(parts)


# -- scoring --------------------------------------------------------------

def _same_dims(*arrays):
    dims = {a.shape[-1] for a in arrays}
    if len(dims) != 1:
        raise DimensionError(f"vector dims differ: {sorted(dims)}")


def score_transe(h, r, t, norm="L1"):
    """``-||h + r - t||`` along the last axis; broadcasts over leading axes."""
    h, r, t = (np.asarray(a, dtype=np.float64) for a in (h, r, t))
    _same_dims(h, r, t)
    x = h + r - t
    if norm.upper() == "L1":
        return -np.abs(x).sum(axis=-1)
    if norm.upper() == "L2":
        return -np.sqrt((x * x).sum(axis=-1))
    raise ValueError(f"unknown norm {norm!r}")


def score_complex(h, r, t):
    """``Re(sum_i h_i r_i conj(t_i))`` with vectors stored as [real | imag]."""
    h, r, t = (np.asarray(a, dtype=np.float64) for a in (h, r, t))
    _same_dims(h, r, t)
    n2 = h.shape[-1]
    if n2 % 2:
        raise DimensionError(f"complex vectors need an even dim, got {n2}")
    n = n2 // 2
    a, b = h[..., :n], h[..., n:]
    c, d = r[..., :n], r[..., n:]
    e, f = t[..., :n], t[..., n:]
    return ((a * c - b * d) * e + (a * d + b * c) * f).sum(axis=-1)


def score(params_or_scorer, h, r, t):
    scorer = params_or_scorer.scorer if isinstance(params_or_scorer, ModelParams) else Scorer(params_or_scorer)
    if scorer is Scorer.TRANSE_L1:
        return score_transe(h, r, t, "L1")
    if scorer is Scorer.TRANSE_L2:
        return score_transe(h, r, t, "L2")
    return score_complex(h, r, t)


def score_grads(scorer, h, r, t, g):
    """Gradients of ``sum(g * score(h, r, t))`` w.r.t. broadcast ``h, r, t``.

    Returned arrays have the broadcast shape; callers reduce as needed.
    """
    scorer = Scorer(scorer)
    g = np.asarray(g, dtype=np.float64)[..., None]
    if scorer is Scorer.COMPLEX:
        n = h.shape[-1] // 2
        a, b = h[..., :n], h[..., n:]
        c, d = r[..., :n], r[..., n:]
        e, f = t[..., :n], t[..., n:]
        dh = np.concatenate([c * e + d * f, c * f - d * e], axis=-1)
        dr = np.concatenate([a * e + b * f, a * f - b * e], axis=-1)
        dt = np.concatenate([a * c - b * d, a * d + b * c], axis=-1)
        return g * dh, g * dr, g * dt
    x = h + r - t
    if scorer is Scorer.TRANSE_L1:
        ds = -np.sign(x)
    else:
        norm = np.sqrt((x * x).sum(axis=-1, keepdims=True))
        ds = -np.divide(x, norm, out=np.zeros_like(x), where=norm > 0)
    ds = g * ds
    return ds, ds, -ds


# -- losses ---------------------------------------------------------------

def softplus(x):
    x = np.asarray(x, dtype=np.float64)
    return np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))


def sigmoid(x):
    x = np.asarray(x, dtype=np.float64)
    e = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def margin_loss(s_pos, s_neg, margin: float = 1.0):
    if margin <= 0:
        raise ValueError("margin must be positive")
    return np.maximum(0.0, margin - np.asarray(s_pos) + np.asarray(s_neg))


def nll_loss(s_pos, s_neg):
    """``-log sigmoid(s_pos) - log sigmoid(-s_neg)`` in softplus form."""
    return softplus(-np.asarray(s_pos, dtype=np.float64)) + softplus(np.asarray(s_neg, dtype=np.float64))


# -- batched forward / backward ---------------------------------------------

@dataclass
class Batch:
    """Feature rows and index layout for one optimisation step.

    ``entity_rows`` holds one row per distinct entity in the batch; triples
    index into it. Negatives share the relation of their positive.
    ``entity_tokens`` (optional, sparse ``(U, vocab)``) re-derives entity
    rows from the trainable token table.
    """

    entity_rows: np.ndarray
    heads: np.ndarray
    tails: np.ndarray
    neg_heads: np.ndarray
    neg_tails: np.ndarray
    relation_rows: dict[str, np.ndarray]
    entity_tokens: sp.csr_matrix | None = None


@dataclass
class Forward:
    loss: float
    s_pos: np.ndarray
    s_neg: np.ndarray
    pair_losses: np.ndarray
    cache: dict


def _entity_features(params, batch):
    if batch.entity_tokens is not None and params.token_table is not None:
        return np.asarray(batch.entity_tokens @ params.token_table)
    return batch.entity_rows


def forward(params: ModelParams, batch: Batch, loss_kind="margin", margin: float = 1.0,
            l2_coeff: float = 0.0) -> Forward:
    loss_kind = LossKind(loss_kind)
    F_ent = _entity_features(params, batch)
    W_ent = params.W("entity")
    E = _check_row(W_ent, F_ent) @ W_ent.T
    if params.concat:
        E = np.concatenate([E, E], axis=1)
    rel_parts = []
    for src in params.relation_sources():
        rows = batch.relation_rows.get(src)
        if rows is None:
            raise ValueError(f"batch lacks {src} relation rows")
        W = params.W(src)
        rel_parts.append(_check_row(W, rows) @ W.T)
    R = np.concatenate(rel_parts, axis=1)

    H, T = E[batch.heads], E[batch.tails]
    Hn, Tn = E[batch.neg_heads], E[batch.neg_tails]
    s_pos = score(params, H, R, T)
    s_neg = score(params, Hn, R[:, None, :], Tn)
    if loss_kind is LossKind.MARGIN:
        pair = margin_loss(s_pos[:, None], s_neg, margin)
    else:
        pair = nll_loss(s_pos[:, None], s_neg)
    loss = float(pair.mean())
    if l2_coeff:
        loss += l2_coeff * sum(float((W * W).sum()) for W in params.weights.values())
    cache = dict(F_ent=F_ent, E=E, R=R, H=H, T=T, Hn=Hn, Tn=Tn)
    return Forward(loss, s_pos, s_neg, pair, cache)


def backward(params: ModelParams, batch: Batch, loss_kind="margin", margin: float = 1.0,
             l2_coeff: float = 0.0, fwd: Forward | None = None) -> tuple[float, dict[str, np.ndarray]]:
    """Loss and gradients of the mean pair loss for every trainable tensor.

    Subgradients at kinks (``|x|`` at 0, hinge at 0) are taken as 0.
    """
    loss_kind = LossKind(loss_kind)
    if fwd is None:
        fwd = forward(params, batch, loss_kind, margin, l2_coeff)
    c = fwd.cache
    B, K = fwd.s_neg.shape
    n_pairs = B * K
    if loss_kind is LossKind.MARGIN:
        active = (margin - fwd.s_pos[:, None] + fwd.s_neg) > 0
        g_neg = active / n_pairs
        g_pos = -g_neg.sum(axis=1)
    else:
        g_neg = sigmoid(fwd.s_neg) / n_pairs
        g_pos = -(sigmoid(-fwd.s_pos) * K) / n_pairs

    dH, dRp, dT = score_grads(params.scorer, c["H"], c["R"], c["T"], g_pos)
    dHn, dRn, dTn = score_grads(params.scorer, c["Hn"], np.broadcast_to(c["R"][:, None, :], c["Hn"].shape),
                                c["Tn"], g_neg)
    dR = dRp + dRn.sum(axis=1)
    dE = np.zeros_like(c["E"])
    np.add.at(dE, batch.heads, dH)
    np.add.at(dE, batch.tails, dT)
    np.add.at(dE, batch.neg_heads.ravel(), dHn.reshape(-1, dE.shape[1]))
    np.add.at(dE, batch.neg_tails.ravel(), dTn.reshape(-1, dE.shape[1]))
    d = params.dim
    if params.concat:
        dE = dE[:, :d] + dE[:, d:]

    grads = {k: np.zeros_like(v) for k, v in params.weights.items()}
    grads[params.key("entity")] += dE.T @ c["F_ent"]
    for i, src in enumerate(params.relation_sources()):
        part = dR[:, i * d:(i + 1) * d]
        grads[params.key(src)] += part.T @ batch.relation_rows[src]
    if l2_coeff:
        for k, W in params.weights.items():
            grads[k] += 2.0 * l2_coeff * W
    if params.token_table is not None and batch.entity_tokens is not None:
        dF = dE @ params.W("entity")
        grads["tokens"] = np.asarray(batch.entity_tokens.T @ dF)
    return fwd.loss, grads


# -- checkpoints ------------------------------------------------------------

def save_checkpoint(params: ModelParams, path) -> None:
    header = {
        "scorer": params.scorer.value,
        "dim": params.dim,
        "sharing": params.sharing.value,
        "relation_mode": params.relation_mode.value,
        "input_dims": params.input_dims(),
        "sections": sorted(params.weights) + (["tokens"] if params.token_table is not None else []),
        "meta": params.meta,
    }
    buf = io.StringIO()
    buf.write(CHECKPOINT_MAGIC + "\n")
    buf.write(json.dumps(header, sort_keys=True) + "\n")
    for name in header["sections"]:
        arr = params.token_table if name == "tokens" else params.weights[name]
        ids = params.meta.get("tokens") if name == "tokens" else None
        ids = ids or [str(i) for i in range(arr.shape[0])]
        buf.write(f"[section {name}]\n")
        buf.write(format_vectors(ids, arr))
    Path(path).write_text(buf.getvalue(), encoding="utf-8")


def load_checkpoint(path) -> ModelParams:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines or lines[0] != CHECKPOINT_MAGIC:
        raise VectorFormatError(f"{path}: not a checkpoint file")
    header = json.loads(lines[1])
    sections: dict[str, list[str]] = {}
    current = None
    for line in lines[2:]:
        if line.startswith("[section ") and line.endswith("]"):
            current = line[len("[section "):-1]
            sections[current] = []
        elif current is not None:
            sections[current].append(line)
    missing = set(header["sections"]) - set(sections)
    if missing:
        raise VectorFormatError(f"{path}: missing sections {sorted(missing)}")
    weights = {}
    table = None
    for name in header["sections"]:
        _, arr = parse_vectors(sections[name], f"{path}[{name}]")
        if name == "tokens":
            table = arr
        else:
            weights[name] = arr
    params = ModelParams(header["dim"], header["scorer"], header["relation_mode"],
                         header["sharing"], weights, table, header.get("meta", {}))
    for src, f in header["input_dims"].items():
        if params.W(src).shape != (params.dim, f):
            raise DimensionError(f"{path}: section for {src} has shape {params.W(src).shape}")
    return params
