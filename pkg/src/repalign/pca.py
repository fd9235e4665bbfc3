"""PCA reduction of training representations and prompt-string rendering.

The fit is an eigendecomposition of the population covariance matrix
(centering included); component sign is pinned by making the largest-
magnitude entry of each component positive, so repeated fits and other
implementations of the same convention agree exactly.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .store import as_matrix, load_matrix, save_matrix


@dataclass(frozen=True, eq=False)
class PcaModel:
    """Mean vector, orthonormal components (columns), explained variances."""

    mean: np.ndarray
    components: np.ndarray
    explained_variance: np.ndarray

    def __post_init__(self):
        mean = np.ascontiguousarray(self.mean, dtype=np.float64)
        comps = as_matrix(self.components, name="components")
        ev = np.ascontiguousarray(self.explained_variance, dtype=np.float64)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "components", comps)
        object.__setattr__(self, "explained_variance", ev)
        d, k = comps.shape
        if mean.shape != (d,):
            raise ValueError(f"mean length {mean.shape} does not match components rows {d}")
        if ev.shape != (k,):
            raise ValueError(f"explained_variance length {ev.shape} does not match components cols {k}")
        gram = comps.T @ comps
        if not np.allclose(gram, np.eye(k), atol=1e-10):
            raise ValueError("components are not orthonormal (1e-10)")
        if np.any(ev < 0) or np.any(np.diff(ev) > 1e-12):
            raise ValueError("explained_variance must be non-negative and non-increasing")

    @property
    def d_in(self) -> int:
        return self.components.shape[0]

    @property
    def d_reduced(self) -> int:
        return self.components.shape[1]


def _pin_signs(components: np.ndarray) -> np.ndarray:
    out = components.copy()
    for j in range(out.shape[1]):
        i = int(np.argmax(np.abs(out[:, j])))
        if out[i, j] < 0:
            out[:, j] = -out[:, j]
    return out


def fit_pca(h_train: np.ndarray, d_reduced: int) -> PcaModel:
    """Top-``d_reduced`` eigenvectors of the population covariance.

    If the data are rank-deficient, trailing components come from the
    orthogonal complement returned by the symmetric eigensolver (zero
    eigenvalues), kept in a deterministic order: eigenvalues are sorted
    descending with a stable sort, so exact ties keep the solver's order.
    """
    h = as_matrix(h_train, name="h_train")
    n, d = h.shape
    if n < 2:
        raise ValueError(f"need at least 2 rows to fit, got {n}")
    if not (1 <= d_reduced <= min(n, d)):
        raise ValueError(f"d_reduced={d_reduced} out of range [1, {min(n, d)}]")
    mean = h.mean(axis=0)
    centered = h - mean
    cov = (centered.T @ centered) / n
    evals, evecs = np.linalg.eigh(cov)
    order = np.argsort(-evals, kind="stable")
    evals = np.maximum(evals[order], 0.0)
    comps = _pin_signs(evecs[:, order[:d_reduced]])
    return PcaModel(mean=mean, components=comps, explained_variance=evals[:d_reduced])


def apply_pca(model: PcaModel, h: np.ndarray) -> np.ndarray:
    """Center by the fitted mean and project onto the components."""
    h = as_matrix(h, name="input")
    if h.shape[1] != model.d_in:
        raise ValueError(f"input dim {h.shape[1]} does not match model dim {model.d_in}")
    return (h - model.mean) @ model.components


def stringify(h_pca: np.ndarray, precision: int = 2) -> list[str]:
    """Render each row as "[v1, v2, ...]" in fixed-point notation.

    No exponent notation, '-' sign, ", " separator; negative zero is
    normalized to a plain zero so output is a pure function of the rounded
    value.
    """
    if not (0 <= int(precision) <= 10):
        raise ValueError(f"precision must be in [0, 10], got {precision}")
    h = as_matrix(h_pca, name="h_pca")
    precision = int(precision)
    out = []
    for row in h:
        cells = []
        for v in row:
            s = f"{v:.{precision}f}"
            if s.startswith("-") and float(s) == 0.0:
                s = s[1:]
            cells.append(s)
        out.append("[" + ", ".join(cells) + "]")
    return out


def parse_vector_string(s: str) -> np.ndarray:
    """Inverse of :func:`stringify` for a single row."""
    body = s.strip()
    if not (body.startswith("[") and body.endswith("]")):
        raise ValueError(f"not a vector string: {s!r}")
    body = body[1:-1].strip()
    if not body:
        return np.empty(0)
    return np.array([float(c) for c in body.split(",")])


def save_pca(model: PcaModel, dirpath) -> None:
    """Three matrices in bin format under one directory."""
    dirpath = Path(dirpath)
    dirpath.mkdir(parents=True, exist_ok=True)
    save_matrix(model.mean.reshape(1, -1), dirpath / "mean.bin", "bin")
    save_matrix(model.components, dirpath / "components.bin", "bin")
    save_matrix(model.explained_variance.reshape(1, -1), dirpath / "explained_variance.bin", "bin")


def load_pca(dirpath) -> PcaModel:
    dirpath = Path(dirpath)
    return PcaModel(
        mean=load_matrix(dirpath / "mean.bin", "bin")[0],
        components=load_matrix(dirpath / "components.bin", "bin"),
        explained_variance=load_matrix(dirpath / "explained_variance.bin", "bin")[0],
    )
