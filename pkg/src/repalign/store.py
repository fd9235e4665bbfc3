"""Embedding matrices, labeled datasets, and LLM-table statistics.

A matrix is a plain 2-D float64 numpy array (rows = samples, columns =
embedding coordinates). Two on-disk formats:

* ``bin`` — magic ``ICRLEMB1``, two little-endian uint64 dims (n_rows, dim),
  then row-major little-endian float64 payload. Lossless.
* ``csv`` — no header, ``,`` separator, ``.`` decimal, 17 significant
  digits per value (enough to round-trip float64).

Loaders reject non-finite entries and ragged rows, naming the offending
row. All returned objects are immutable by convention and safe to share
across threads.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

MAGIC = b"ICRLEMB1"
FORMATS = ("csv", "bin")


def as_matrix(values, name: str = "matrix") -> np.ndarray:
    """Validate and return ``values`` as a C-contiguous (n, d) float64 array."""
    m = np.ascontiguousarray(values, dtype=np.float64)
    if m.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {m.shape}")
    if m.size and not np.isfinite(m).all():
        bad = int(np.flatnonzero(~np.isfinite(m).all(axis=1))[0])
        raise ValueError(f"{name} has a non-finite entry at row {bad}")
    return m


def _check_format(fmt: str) -> None:
    if fmt not in FORMATS:
        raise ValueError(f"unknown matrix format {fmt!r}; expected one of {FORMATS}")


def load_matrix(path, fmt: str) -> np.ndarray:
    """Read a matrix from ``path`` in the named format."""
    _check_format(fmt)
    path = Path(path)
    if fmt == "bin":
        raw = path.read_bytes()
        if len(raw) < 24 or raw[:8] != MAGIC:
            raise ValueError(f"{path}: not a {MAGIC.decode()} matrix file")
        n_rows, dim = struct.unpack("<QQ", raw[8:24])
        expect = 24 + 8 * n_rows * dim
        if len(raw) != expect:
            raise ValueError(
                f"{path}: payload is {len(raw)} bytes, expected {expect} "
                f"for a {n_rows}x{dim} matrix"
            )
        m = np.frombuffer(raw[24:], dtype="<f8").astype(np.float64)
        m = m.reshape(n_rows, dim)
        return as_matrix(m, name=str(path))

    rows: list[list[float]] = []
    width = None
    with open(path, "r", encoding="utf-8") as fh:
        for i, line in enumerate(fh):
            line = line.strip()
            if not line:
                continue
            try:
                vals = [float(c) for c in line.split(",")]
            except ValueError as exc:
                raise ValueError(f"{path}: row {i}: {exc}") from None
            if width is None:
                width = len(vals)
            elif len(vals) != width:
                raise ValueError(
                    f"{path}: row {i} has {len(vals)} values, expected {width}"
                )
            if not all(math.isfinite(v) for v in vals):
                raise ValueError(f"{path}: row {i} has a non-finite entry")
            rows.append(vals)
    if not rows:
        return np.empty((0, 0))
    return as_matrix(np.array(rows))


def save_matrix(m: np.ndarray, path, fmt: str) -> None:
    """Write ``m`` to ``path``; bin round-trips bit-exactly."""
    _check_format(fmt)
    m = as_matrix(m)
    path = Path(path)
    if fmt == "bin":
        with open(path, "wb") as fh:
            fh.write(MAGIC)
            fh.write(struct.pack("<QQ", m.shape[0], m.shape[1]))
            fh.write(np.ascontiguousarray(m, dtype="<f8").tobytes())
        return
    with open(path, "w", encoding="utf-8") as fh:
        for row in m:
            fh.write(",".join(f"{v:.17g}" for v in row))
            fh.write("\n")


@dataclass(frozen=True)
class NormalizationParams:
    """Row-statistics target: mean and (non-negative) population variance."""

    target_mean: float
    target_var: float

    def __post_init__(self):
        if not (math.isfinite(self.target_mean) and math.isfinite(self.target_var)):
            raise ValueError("normalization targets must be finite")
        if self.target_var < 0:
            raise ValueError("target_var must be >= 0")


def fit_normalization(llm_table: np.ndarray) -> NormalizationParams:
    """Average per-row mean and population variance of the non-zero rows.

    Rows whose entries are all exactly zero (padding rows in real embedding
    tables) are excluded; every entry of an included row participates.
    Exact summation makes the result independent of row order and of row
    duplication.
    """
    m = as_matrix(llm_table, name="llm_table")
    if m.shape[1] == 0:
        raise ValueError("no non-zero embeddings")
    keep = np.any(m != 0.0, axis=1)
    if not keep.any():
        raise ValueError("no non-zero embeddings")
    rows = m[keep]
    row_means = rows.mean(axis=1)
    row_vars = rows.var(axis=1)  # population variance (divide by dim)
    k = rows.shape[0]
    return NormalizationParams(
        target_mean=math.fsum(row_means) / k,
        target_var=math.fsum(row_vars) / k,
    )


@dataclass(frozen=True, eq=False)
class LabeledDataset:
    """(id, optional raw text, embedding row, float label) per sample."""

    ids: tuple[str, ...]
    embeddings: np.ndarray
    labels: np.ndarray
    raw_texts: tuple[str, ...] | None = None

    def __post_init__(self):
        emb = as_matrix(self.embeddings, name="embeddings")
        object.__setattr__(self, "embeddings", emb)
        labels = np.asarray(self.labels, dtype=np.float64)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "ids", tuple(self.ids))
        if self.raw_texts is not None:
            object.__setattr__(self, "raw_texts", tuple(self.raw_texts))
        n = emb.shape[0]
        if len(self.ids) != n or len(labels) != n:
            raise ValueError(
                f"ids ({len(self.ids)}), labels ({len(labels)}) and embedding "
                f"rows ({n}) must all have the same length"
            )
        if self.raw_texts is not None and len(self.raw_texts) != n:
            raise ValueError(f"raw_texts ({len(self.raw_texts)}) must have length {n}")
        if len(set(self.ids)) != n:
            raise ValueError("ids must be unique within a dataset")

    def __len__(self) -> int:
        return self.embeddings.shape[0]


def save_dataset(ds: LabeledDataset, dirpath) -> None:
    """Write ``embeddings.bin`` and ``records.jsonl`` under ``dirpath``."""
    dirpath = Path(dirpath)
    dirpath.mkdir(parents=True, exist_ok=True)
    save_matrix(ds.embeddings, dirpath / "embeddings.bin", "bin")
    with open(dirpath / "records.jsonl", "w", encoding="utf-8") as fh:
        for i, sample_id in enumerate(ds.ids):
            rec = {"id": sample_id, "label": float(ds.labels[i])}
            if ds.raw_texts is not None:
                rec["text"] = ds.raw_texts[i]
            fh.write(json.dumps(rec, sort_keys=True))
            fh.write("\n")


def load_dataset(dirpath) -> LabeledDataset:
    dirpath = Path(dirpath)
    emb = load_matrix(dirpath / "embeddings.bin", "bin")
    ids: list[str] = []
    labels: list[float] = []
    texts: list[str] = []
    have_text = 0
    with open(dirpath / "records.jsonl", "r", encoding="utf-8") as fh:
        for i, line in enumerate(fh):
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            ids.append(str(rec["id"]))
            labels.append(float(rec["label"]))
            if "text" in rec:
                texts.append(rec["text"])
                have_text += 1
    if have_text and have_text != len(ids):
        raise ValueError(f"{dirpath}: some records have 'text' and some do not")
    return LabeledDataset(
        ids=tuple(ids),
        embeddings=emb,
        labels=np.array(labels),
        raw_texts=tuple(texts) if have_text else None,
    )
