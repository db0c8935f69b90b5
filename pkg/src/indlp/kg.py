"""Triple datasets: ingestion, vocabularies, indexes and setting classification."""

from __future__ import annotations

import enum
import logging
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

logger = logging.getLogger(__name__)

StrTriple = tuple[str, str, str]


class TripleFormatError(ValueError):
    """Raised for malformed triple or text files."""


class Vocabulary:
    """Bijective map between string identifiers and dense integer handles."""

    def __init__(self, names: Iterable[str] = ()):
        self._names: list[str] = []
        self._index: dict[str, int] = {}
        for name in names:
            self.add(name)

    def add(self, name: str) -> int:
        idx = self._index.get(name)
        if idx is None:
            idx = len(self._names)
            self._index[name] = idx
            self._names.append(name)
        return idx

    def __getitem__(self, name: str) -> int:
        return self._index[name]

    def __contains__(self, name: object) -> bool:
        return name in self._index

    def __len__(self) -> int:
        return len(self._names)

    def __iter__(self):
        return iter(self._names)

    def name(self, idx: int) -> str:
        return self._names[idx]

    @property
    def names(self) -> list[str]:
        return list(self._names)

    def get(self, name: str, default=None):
        return self._index.get(name, default)


@dataclass
class LoadReport:
    path: str
    lines: int
    duplicates: int


def load_triples(path, report: list | None = None) -> list[StrTriple]:
    """Read a tab-separated ``head<TAB>relation<TAB>tail`` file.

    Triples come back in file order, duplicates included. When ``report`` is a
    list, a :class:`LoadReport` with line and duplicate counts is appended.
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"triple file not found: {path}")
    triples: list[StrTriple] = []
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n").rstrip("\r")
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 3 or not all(p.strip() for p in parts):
                raise TripleFormatError(
                    f"{path}:{lineno}: expected 3 tab-separated fields, got {len(parts)}"
                )
            triples.append((parts[0].strip(), parts[1].strip(), parts[2].strip()))
    dups = len(triples) - len(set(triples))
    if dups:
        logger.warning("%s: %d duplicate triples", path, dups)
    if report is not None:
        report.append(LoadReport(str(path), len(triples), dups))
    return triples


def write_triples(triples: Iterable[StrTriple], path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for h, r, t in triples:
            fh.write(f"{h}\t{r}\t{t}\n")


class KnowledgeGraph:
    """Interned, deduplicated triple set with per-relation position counts.

    Attributes
    ----------
    entities, relations : Vocabulary
        Interned in first-appearance order.
    triples : np.ndarray, shape (n, 3), int64
        Rows are ``(head, relation, tail)`` handles.
    head_counts, tail_counts : list of dict
        ``head_counts[r][e]`` is the number of triples of relation ``r`` with
        ``e`` as head (likewise for tails).
    """

    def __init__(self, entities: Vocabulary, relations: Vocabulary, triples: np.ndarray,
                 duplicates: int = 0):
        self.entities = entities
        self.relations = relations
        self.triples = np.asarray(triples, dtype=np.int64).reshape(-1, 3)
        self.triples.setflags(write=False)
        self.duplicates = duplicates
        self.by_relation: list[np.ndarray] = []
        self.head_counts: list[dict[int, int]] = []
        self.tail_counts: list[dict[int, int]] = []
        self._build_indexes()

    def _build_indexes(self):
        n_rel = len(self.relations)
        order = np.argsort(self.triples[:, 1], kind="stable")
        bounds = np.searchsorted(self.triples[order, 1], np.arange(n_rel + 1))
        for r in range(n_rel):
            rows = order[bounds[r]:bounds[r + 1]]
            self.by_relation.append(rows)
            self.head_counts.append(dict(Counter(self.triples[rows, 0].tolist())))
            self.tail_counts.append(dict(Counter(self.triples[rows, 2].tolist())))

    @property
    def n_entities(self) -> int:
        return len(self.entities)

    @property
    def n_relations(self) -> int:
        return len(self.relations)

    def __len__(self) -> int:
        return len(self.triples)

    def string_triples(self) -> list[StrTriple]:
        en, rn = self.entities.name, self.relations.name
        return [(en(h), rn(r), en(t)) for h, r, t in self.triples.tolist()]

    def relation_triples(self, r: int) -> np.ndarray:
        return self.triples[self.by_relation[r]]


def build_graph(triples: Sequence[StrTriple], entities: Vocabulary | None = None,
                relations: Vocabulary | None = None) -> KnowledgeGraph:
    """Intern string triples into a :class:`KnowledgeGraph`, dropping repeats.

    Pre-populated vocabularies may be passed to share a handle space; only ids
    that occur in ``triples`` are then added.
    """
    ents = Vocabulary() if entities is None else entities
    rels = Vocabulary() if relations is None else relations
    seen = set()
    rows = []
    for h, r, t in triples:
        key = (h, r, t)
        if key in seen:
            continue
        seen.add(key)
        hi = ents.add(h)
        ri = rels.add(r)
        ti = ents.add(t)
        rows.append((hi, ri, ti))
    dups = len(triples) - len(rows)
    if dups:
        logger.warning("dropped %d duplicate triples", dups)
    arr = np.array(rows, dtype=np.int64).reshape(-1, 3)
    return KnowledgeGraph(ents, rels, arr, duplicates=dups)


class InductiveSetting(str, enum.Enum):
    TRANSDUCTIVE = "transductive"
    SEMI_INDUCTIVE = "semi_inductive"
    FULLY_INDUCTIVE = "fully_inductive"
    TRULY_INDUCTIVE = "truly_inductive"


@dataclass
class TextRecord:
    id: str
    label: str
    description: str = ""

    @property
    def text(self) -> str:
        return f"{self.label} {self.description}".strip()


@dataclass
class SplitDataset:
    """Train/valid/test graphs sharing global entity and relation vocabularies.

    Each split keeps its own ``entity_set``/``relation_set`` (the handles
    occurring in its triples), so unseen-ness is a set difference.
    """

    train: KnowledgeGraph
    valid: KnowledgeGraph
    test: KnowledgeGraph
    entity_text: dict[str, TextRecord] = field(default_factory=dict)
    relation_text: dict[str, TextRecord] = field(default_factory=dict)

    @property
    def entities(self) -> Vocabulary:
        return self.train.entities

    @property
    def relations(self) -> Vocabulary:
        return self.train.relations

    def split(self, name: str) -> KnowledgeGraph:
        return {"train": self.train, "valid": self.valid, "test": self.test}[name]

    @staticmethod
    def entity_set(graph: KnowledgeGraph) -> set[int]:
        if len(graph) == 0:
            return set()
        return set(graph.triples[:, 0].tolist()) | set(graph.triples[:, 2].tolist())

    @staticmethod
    def relation_set(graph: KnowledgeGraph) -> set[int]:
        return set(graph.triples[:, 1].tolist())

    def all_triples(self) -> np.ndarray:
        return np.concatenate([self.train.triples, self.valid.triples, self.test.triples])


def build_splits(train: Sequence[StrTriple], valid: Sequence[StrTriple],
                 test: Sequence[StrTriple], entity_text=None, relation_text=None) -> SplitDataset:
    ents, rels = Vocabulary(), Vocabulary()
    graphs = [build_graph(part, ents, rels) for part in (train, valid, test)]
    return SplitDataset(*graphs, entity_text=dict(entity_text or {}),
                        relation_text=dict(relation_text or {}))


def load_text_records(path) -> dict[str, TextRecord]:
    """Read ``id<TAB>label<TAB>description`` rows; description may be missing."""
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"text file not found: {path}")
    records = {}
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n").rstrip("\r")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) < 2 or len(parts) > 3:
                raise TripleFormatError(f"{path}:{lineno}: expected id, label[, description]")
            desc = parts[2] if len(parts) == 3 else ""
            records[parts[0]] = TextRecord(parts[0], parts[1], desc)
    return records


def write_text_records(records: Iterable[TextRecord], path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(f"{rec.id}\t{rec.label}\t{rec.description}\n")


def load_split_dir(directory) -> SplitDataset:
    """Load ``train.tsv``/``valid.tsv``/``test.tsv`` plus optional text files."""
    d = Path(directory)
    parts = [load_triples(d / f"{name}.tsv") for name in ("train", "valid", "test")]
    ent_text = load_text_records(d / "entity_text.tsv") if (d / "entity_text.tsv").exists() else {}
    rel_text = load_text_records(d / "relation_text.tsv") if (d / "relation_text.tsv").exists() else {}
    return build_splits(*parts, entity_text=ent_text, relation_text=rel_text)


def classify_setting(splits: SplitDataset) -> InductiveSetting:
    """Classify a split by what evaluation triples hide from training.

    Relation unseen-ness takes priority: any valid/test relation outside the
    training relations makes the dataset truly inductive.
    """
    if len(splits.test) == 0:
        raise ValueError("cannot classify a dataset with an empty test split")
    train_ents = SplitDataset.entity_set(splits.train)
    train_rels = SplitDataset.relation_set(splits.train)
    eval_triples = np.concatenate([splits.valid.triples, splits.test.triples])

    if not set(eval_triples[:, 1].tolist()) <= train_rels:
        return InductiveSetting.TRULY_INDUCTIVE
    head_new = np.array([h not in train_ents for h in eval_triples[:, 0].tolist()], dtype=bool)
    tail_new = np.array([t not in train_ents for t in eval_triples[:, 2].tolist()], dtype=bool)
    if np.all(head_new & tail_new):
        return InductiveSetting.FULLY_INDUCTIVE
    if np.any(head_new | tail_new):
        return InductiveSetting.SEMI_INDUCTIVE
    return InductiveSetting.TRANSDUCTIVE
