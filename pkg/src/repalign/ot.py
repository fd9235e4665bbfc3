"""Per-dimension moment alignment of projected representations.

The transport map is affine per output dimension: shift by the difference
of means, rescale by the ratio of population standard deviations. Two
compositions are provided:

* ``moment_matched`` (default) — scale around the source mean, then move to
  the target mean: ``scale*(h - src_mean) + src_mean + shift``. Applied to
  the fit-time source this reproduces the target's per-dimension mean and
  std exactly (up to rounding).
* ``literal`` — ``scale*h + shift``. This is the shift-after-scale
  composition as commonly written; it reproduces the target mean only when
  the source mean is zero or the scale is one. Kept for faithfulness
  studies; the worked difference is documented in the tests.

``normalize_rows`` is the separate per-row statistics adjustment used when
feeding padded/projected rows whose scale is otherwise arbitrary; it is
off by default in the pipelines.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from ._bits import fnv1a64, mix
from ._kernels import normal_block
from .pca import PcaModel, apply_pca, stringify
from .store import LabeledDataset, NormalizationParams, as_matrix, load_matrix, save_matrix

OT_MODES = ("embed", "pca")
OT_FORMULAS = ("moment_matched", "literal")

_STD_FLOOR = 1e-12

TextEmbedder = Callable[[str], np.ndarray]


@dataclass(frozen=True, eq=False)
class OtParams:
    """Per-dimension shift/scale plus the source moments recorded at fit."""

    shift: np.ndarray
    scale: np.ndarray
    source_mean: np.ndarray
    source_std: np.ndarray
    mode: str
    formula: str = "moment_matched"

    def __post_init__(self):
        for name in ("shift", "scale", "source_mean", "source_std"):
            v = np.ascontiguousarray(getattr(self, name), dtype=np.float64)
            object.__setattr__(self, name, v)
            if v.ndim != 1 or not np.isfinite(v).all():
                raise ValueError(f"{name} must be a finite 1-D vector")
        d = self.shift.shape[0]
        for name in ("scale", "source_mean", "source_std"):
            if getattr(self, name).shape[0] != d:
                raise ValueError("shift/scale/source_mean/source_std lengths differ")
        if np.any(self.scale <= 0):
            raise ValueError("scale entries must be strictly positive")
        if self.mode not in OT_MODES:
            raise ValueError(f"unknown mode {self.mode!r}; expected one of {OT_MODES}")
        if self.formula not in OT_FORMULAS:
            raise ValueError(f"unknown formula {self.formula!r}; expected one of {OT_FORMULAS}")

    @property
    def dim(self) -> int:
        return self.shift.shape[0]


def fit_ot(h_proj: np.ndarray, h_tar: np.ndarray, mode: str = "embed",
           formula: str = "moment_matched") -> OtParams:
    """Per dimension: shift = target mean - source mean, scale = std ratio.

    Population standard deviations throughout. A source dimension with
    std below 1e-12 gets scale 1 (the shift still aligns the means); the
    same guard applies to a degenerate target dimension, which would
    otherwise force a non-positive scale.
    """
    src = as_matrix(h_proj, name="h_proj")
    tar = as_matrix(h_tar, name="h_tar")
    if src.shape[1] != tar.shape[1]:
        raise ValueError(f"source dim {src.shape[1]} does not match target dim {tar.shape[1]}")
    if src.shape[0] < 2 or tar.shape[0] < 2:
        raise ValueError("fit needs at least 2 rows on each side")
    src_mean = src.mean(axis=0)
    tar_mean = tar.mean(axis=0)
    src_std = src.std(axis=0)
    tar_std = tar.std(axis=0)
    scale = np.ones(src.shape[1])
    ok = (src_std >= _STD_FLOOR) & (tar_std >= _STD_FLOOR)
    scale[ok] = tar_std[ok] / src_std[ok]
    return OtParams(
        shift=tar_mean - src_mean,
        scale=scale,
        source_mean=src_mean,
        source_std=src_std,
        mode=mode,
        formula=formula,
    )


def apply_ot(params: OtParams, h: np.ndarray) -> np.ndarray:
    h = as_matrix(h, name="input")
    if h.shape[1] != params.dim:
        raise ValueError(f"input dim {h.shape[1]} does not match params dim {params.dim}")
    if params.formula == "literal":
        return params.scale * h + params.shift
    return params.scale * (h - params.source_mean) + params.source_mean + params.shift


def hash_text_embedder(dim: int, seed: int = 0) -> TextEmbedder:
    """Deterministic mock token embedder: one Gaussian row per whitespace
    token, seeded by mix(seed, fnv1a64(token)). Empty input embeds the
    empty string as a single token so the result always has >= 1 row."""
    if int(dim) < 1:
        raise ValueError(f"dim must be >= 1, got {dim}")

    def embed(text: str) -> np.ndarray:
        tokens = text.split() or [""]
        out = np.empty((len(tokens), int(dim)))
        for i, tok in enumerate(tokens):
            out[i] = normal_block(mix(seed, fnv1a64(tok)), int(dim))
        return out

    return embed


def build_ot_target(mode: str, dataset: LabeledDataset, text_embedder: TextEmbedder,
                    pca_model: PcaModel | None = None, precision: int = 2) -> np.ndarray:
    """Target matrix for the alignment fit: one mean token embedding per sample.

    mode "embed" embeds each sample's raw text; mode "pca" embeds the
    stringified PCA reduction of the sample's representation.
    """
    if mode not in OT_MODES:
        raise ValueError(f"unknown mode {mode!r}; expected one of {OT_MODES}")
    if mode == "embed":
        if dataset.raw_texts is None:
            raise ValueError("mode 'embed' needs raw_texts on the dataset")
        texts = list(dataset.raw_texts)
    else:
        if pca_model is None:
            raise ValueError("mode 'pca' needs a fitted pca_model")
        texts = stringify(apply_pca(pca_model, dataset.embeddings), precision)

    rows = []
    for i, text in enumerate(texts):
        try:
            tok = as_matrix(text_embedder(text), name="token embeddings")
        except Exception as exc:
            raise RuntimeError(f"text embedder failed for id {dataset.ids[i]!r}: {exc}") from exc
        if tok.shape[0] < 1:
            raise RuntimeError(f"text embedder returned no rows for id {dataset.ids[i]!r}")
        rows.append(tok.mean(axis=0))
    return np.vstack(rows)


def normalize_rows(h: np.ndarray, p: NormalizationParams) -> np.ndarray:
    """Shift/rescale each row to the target mean and population variance."""
    m = as_matrix(h, name="input")
    means = m.mean(axis=1, keepdims=True)
    stds = m.std(axis=1, keepdims=True)
    if p.target_var == 0.0:
        return np.full_like(m, p.target_mean)
    bad = np.flatnonzero(stds[:, 0] <= _STD_FLOOR)
    if bad.size:
        raise ValueError(
            f"row {int(bad[0])} has (near-)zero variance; cannot normalize to "
            f"target_var={p.target_var}"
        )
    return (m - means) / stds * math.sqrt(p.target_var) + p.target_mean


def save_ot(params: OtParams, dirpath) -> None:
    """Four vectors in bin format plus a mode/formula header."""
    dirpath = Path(dirpath)
    dirpath.mkdir(parents=True, exist_ok=True)
    for name in ("shift", "scale", "source_mean", "source_std"):
        save_matrix(getattr(params, name).reshape(1, -1), dirpath / f"{name}.bin", "bin")
    (dirpath / "meta.txt").write_text(
        f"mode={params.mode}\nformula={params.formula}\n", encoding="utf-8"
    )


def load_ot(dirpath) -> OtParams:
    dirpath = Path(dirpath)
    meta = {}
    for line in (dirpath / "meta.txt").read_text(encoding="utf-8").splitlines():
        line = line.strip()
        if line:
            key, _, value = line.partition("=")
            meta[key] = value
    vecs = {
        name: load_matrix(dirpath / f"{name}.bin", "bin")[0]
        for name in ("shift", "scale", "source_mean", "source_std")
    }
    return OtParams(mode=meta["mode"], formula=meta["formula"], **vecs)
