"""Input features for entities and relations.

Text features are bags of pretrained word vectors; any externally computed
encoding can be loaded from a vector file instead. Graph features for
relations come from :mod:`indlp.relwalk`.
"""

from __future__ import annotations

import enum
import logging
import re
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp

from .kg import TextRecord
from .vectors import read_vectors, write_vectors

logger = logging.getLogger(__name__)

SOURCES = ("bow", "pretrained_file", "graph", "onehot")


class FeatureError(ValueError):
    pass


class FeatureMatrix:
    """Ordered ids with one real-valued row each."""

    def __init__(self, ids: Sequence[str], matrix, source: str = "pretrained_file",
                 trainable: bool = False):
        matrix = np.array(matrix, dtype=np.float64, copy=True)
        if matrix.ndim != 2:
            raise FeatureError("feature matrix must be 2-D")
        if matrix.shape[0] != len(ids):
            raise FeatureError(f"{matrix.shape[0]} rows for {len(ids)} ids")
        if not np.all(np.isfinite(matrix)):
            raise FeatureError("feature matrix contains non-finite values")
        if source not in SOURCES:
            raise FeatureError(f"unknown feature source {source!r}")
        self.ids = list(ids)
        self.index = {name: i for i, name in enumerate(self.ids)}
        if len(self.index) != len(self.ids):
            raise FeatureError("duplicate ids in feature matrix")
        self.matrix = matrix
        self.source = source
        self.trainable = trainable

    @property
    def dim(self) -> int:
        return self.matrix.shape[1]

    def __len__(self) -> int:
        return len(self.ids)

    def __contains__(self, name) -> bool:
        return name in self.index

    def row(self, name: str) -> np.ndarray:
        try:
            return self.matrix[self.index[name]]
        except KeyError:
            raise FeatureError(f"no feature row for {name!r}") from None

    def rows(self, names: Iterable[str]) -> np.ndarray:
        missing = [n for n in names if n not in self.index]
        if missing:
            raise FeatureError(f"no feature rows for {missing[:5]}{'...' if len(missing) > 5 else ''}")
        return self.matrix[[self.index[n] for n in names]]

    def aligned(self, names: Sequence[str]) -> "FeatureMatrix":
        """Copy reordered to ``names`` (every name must be present)."""
        return FeatureMatrix(names, self.rows(names), self.source, self.trainable)

    def write(self, path) -> None:
        write_vectors(path, self.ids, self.matrix)

    @staticmethod
    def merge(parts: Sequence["FeatureMatrix"], source: str | None = None) -> "FeatureMatrix":
        """Stack matrices with disjoint id sets and a common dimension."""
        if not parts:
            raise FeatureError("nothing to merge")
        dims = {p.dim for p in parts}
        if len(dims) != 1:
            raise FeatureError(f"cannot merge dims {sorted(dims)}")
        ids = [i for p in parts for i in p.ids]
        return FeatureMatrix(ids, np.vstack([p.matrix for p in parts]),
                             source or parts[0].source)


def one_hot_features(ids: Sequence[str]) -> FeatureMatrix:
    return FeatureMatrix(ids, np.eye(len(ids)), source="onehot")


def load_feature_file(path, source: str = "pretrained_file") -> FeatureMatrix:
    ids, matrix = read_vectors(path)
    return FeatureMatrix(ids, matrix, source=source)


_SPLIT = re.compile(r"[\W_]+")


def tokenize(text: str) -> list[str]:
    return [tok for tok in _SPLIT.split(text.lower()) if tok]


class TokenVocabulary:
    """Pretrained word vectors. Out-of-vocabulary tokens are skipped."""

    oov_policy = "skip"

    def __init__(self, tokens: Sequence[str], vectors):
        vectors = np.asarray(vectors, dtype=np.float64)
        if len(tokens) == 0:
            raise FeatureError("token vocabulary is empty")
        if vectors.shape[0] != len(tokens) or vectors.ndim != 2:
            raise FeatureError("token vectors do not match token list")
        self.tokens = list(tokens)
        self.index = {t: i for i, t in enumerate(self.tokens)}
        self.vectors = vectors

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def __len__(self) -> int:
        return len(self.tokens)

    @classmethod
    def load(cls, path) -> "TokenVocabulary":
        tokens, vectors = read_vectors(path)
        return cls(tokens, vectors)


@dataclass
class BowReport:
    empty: list[str] = field(default_factory=list)


def bow_averaging_matrix(records: Sequence[TextRecord], vocab: TokenVocabulary,
                         use_description: bool = True) -> tuple[sp.csr_matrix, list[str]]:
    """Sparse ``(records, tokens)`` matrix whose rows average token vectors.

    Returns the matrix and the ids of records without any known token.
    """
    rows, cols, vals = [], [], []
    empty = []
    for i, rec in enumerate(records):
        text = rec.text if use_description else rec.label
        idx = [vocab.index[t] for t in tokenize(text) if t in vocab.index]
        if not idx:
            empty.append(rec.id)
            continue
        weight = 1.0 / len(idx)
        for j in idx:
            rows.append(i)
            cols.append(j)
            vals.append(weight)
    # duplicate (i, j) entries are summed, so repeated tokens count twice
    mat = sp.csr_matrix((vals, (rows, cols)), shape=(len(records), len(vocab)))
    return mat, empty


def build_bow_features(records: Sequence[TextRecord], vocab: TokenVocabulary,
                       use_description: bool = True, report: BowReport | None = None,
                       trainable: bool = False) -> FeatureMatrix:
    """Mean of pretrained vectors over the in-vocabulary tokens of each record."""
    if not records:
        raise FeatureError("no text records")
    avg, empty = bow_averaging_matrix(records, vocab, use_description)
    if empty:
        logger.warning("%d records have no in-vocabulary tokens; using zero rows", len(empty))
    if report is not None:
        report.empty.extend(empty)
    matrix = np.asarray(avg @ vocab.vectors)
    return FeatureMatrix([r.id for r in records], matrix, source="bow", trainable=trainable)


class RelationFeatureMode(str, enum.Enum):
    TEXT_ONLY = "text_only"
    GRAPH_ONLY = "graph_only"
    CONCAT = "concat"


@dataclass
class RelationInputs:
    mode: RelationFeatureMode
    text: FeatureMatrix | None
    graph: FeatureMatrix | None

    @property
    def sources(self) -> list[str]:
        return {RelationFeatureMode.TEXT_ONLY: ["text"],
                RelationFeatureMode.GRAPH_ONLY: ["graph"],
                RelationFeatureMode.CONCAT: ["text", "graph"]}[self.mode]

    @property
    def duplicate_entities(self) -> bool:
        return self.mode is RelationFeatureMode.CONCAT

    def matrices(self) -> list[FeatureMatrix]:
        return [self.text if s == "text" else self.graph for s in self.sources]

    def covers(self, relation_ids: Iterable[str]) -> list[str]:
        """Relation ids lacking a row in some required source."""
        missing = []
        for rid in relation_ids:
            if any(rid not in m for m in self.matrices()):
                missing.append(rid)
        return missing


def assemble_relation_inputs(text: FeatureMatrix | None, graph: FeatureMatrix | None,
                             mode) -> RelationInputs:
    mode = RelationFeatureMode(mode)
    if text is None and graph is None:
        raise FeatureError("at least one relation feature matrix is required")
    if mode in (RelationFeatureMode.TEXT_ONLY, RelationFeatureMode.CONCAT) and text is None:
        raise FeatureError(f"mode {mode.value} needs text features")
    if mode in (RelationFeatureMode.GRAPH_ONLY, RelationFeatureMode.CONCAT) and graph is None:
        raise FeatureError(f"mode {mode.value} needs graph features")
    if mode is RelationFeatureMode.CONCAT and set(text.ids) != set(graph.ids):
        raise FeatureError("text and graph relation features cover different relation ids")
    return RelationInputs(mode,
                          text if mode is not RelationFeatureMode.GRAPH_ONLY else None,
                          graph if mode is not RelationFeatureMode.TEXT_ONLY else None)


@dataclass
class EntityInputs:
    """Entity feature rows plus, optionally, the sparse token-averaging matrix.

    When ``tokens`` is set (rows aligned with ``features.ids``) and the model
    carries a trainable token table, entity rows are recomputed from it.
    """

    features: FeatureMatrix
    tokens: sp.csr_matrix | None = None

    @property
    def dim(self) -> int:
        return self.features.dim

    def rows(self, names: Sequence[str], token_table=None) -> np.ndarray:
        if self.tokens is not None and token_table is not None:
            idx = [self.features.index[n] for n in names]
            return np.asarray(self.tokens[idx] @ token_table)
        return self.features.rows(names)

    def token_rows(self, names: Sequence[str]):
        if self.tokens is None:
            return None
        return self.tokens[[self.features.index[n] for n in names]]
