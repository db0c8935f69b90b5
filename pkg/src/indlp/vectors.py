"""Reader/writer for the ``<count> <dim>`` + ``id v1 ... vdim`` vector format.

Used for relation embeddings, feature matrices, pretrained word vectors and
the tensor sections of model checkpoints.
"""

from __future__ import annotations

import io
from pathlib import Path
from typing import Sequence

import numpy as np


class VectorFormatError(ValueError):
    pass


def format_vectors(ids: Sequence[str], matrix: np.ndarray) -> str:
    matrix = np.asarray(matrix, dtype=np.float64)
    if matrix.ndim != 2 or matrix.shape[0] != len(ids):
        raise VectorFormatError(f"matrix shape {matrix.shape} does not match {len(ids)} ids")
    buf = io.StringIO()
    buf.write(f"{len(ids)} {matrix.shape[1]}\n")
    for name, row in zip(ids, matrix):
        if any(c.isspace() for c in name):
            raise VectorFormatError(f"id contains whitespace: {name!r}")
        # repr of a float64 round-trips exactly
        buf.write(name)
        for v in row.tolist():
            buf.write(" ")
            buf.write(repr(v))
        buf.write("\n")
    return buf.getvalue()


def write_vectors(path, ids: Sequence[str], matrix: np.ndarray) -> None:
    Path(path).write_text(format_vectors(ids, matrix), encoding="utf-8")


def parse_vectors(lines, source: str = "<string>") -> tuple[list[str], np.ndarray]:
    it = iter(lines)
    try:
        header = next(it)
    except StopIteration:
        raise VectorFormatError(f"{source}: empty vector file") from None
    parts = header.split()
    if len(parts) != 2:
        raise VectorFormatError(f"{source}: header must be '<count> <dim>'")
    try:
        count, dim = int(parts[0]), int(parts[1])
    except ValueError:
        raise VectorFormatError(f"{source}: non-integer header {header.strip()!r}") from None
    if count < 0 or dim < 0:
        raise VectorFormatError(f"{source}: negative header value")
    ids: list[str] = []
    seen = set()
    matrix = np.zeros((count, dim), dtype=np.float64)
    n = 0
    for lineno, line in enumerate(it, start=2):
        fields = line.split()
        if not fields:
            continue
        if n >= count:
            raise VectorFormatError(f"{source}: more rows than header count {count}")
        if len(fields) != dim + 1:
            raise VectorFormatError(
                f"{source}:{lineno}: expected {dim} values, got {len(fields) - 1}")
        name = fields[0]
        if name in seen:
            raise VectorFormatError(f"{source}:{lineno}: duplicate id {name!r}")
        try:
            row = np.array([float(x) for x in fields[1:]], dtype=np.float64)
        except ValueError:
            raise VectorFormatError(f"{source}:{lineno}: unparsable value") from None
        if not np.all(np.isfinite(row)):
            raise VectorFormatError(f"{source}:{lineno}: non-finite value")
        seen.add(name)
        ids.append(name)
        matrix[n] = row
        n += 1
    if n != count:
        raise VectorFormatError(f"{source}: header says {count} rows, found {n}")
    return ids, matrix


def read_vectors(path) -> tuple[list[str], np.ndarray]:
    path = Path(path)
    with path.open(encoding="utf-8") as fh:
        return parse_vectors(fh, str(path))
