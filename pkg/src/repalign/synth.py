"""Synthetic regression datasets with a known low-dimensional latent.

The latent is a 2-D point on a radius-jittered unit circle (radius uniform
in [0.9, 1.1]); labels are a fixed linear function of the latent plus
Gaussian noise. The latent plane is embedded into the requested ambient
dimension through a fixed pair of orthonormal directions, so cosine
geometry in the ambient space mirrors the latent angles. Useful as a
mechanism check: informative representations should predict labels, while
per-sample random noise should not.
"""

from __future__ import annotations

import numpy as np

from ._bits import mix
from ._kernels import _words_np, normal_block
from .store import LabeledDataset

_LABEL_SCALE = 2.0
_R_LOW, _R_HIGH = 0.9, 1.1


def make_linear_latent_dataset(n: int, d_fm: int, seed: int,
                               noise: float = 0.1) -> LabeledDataset:
    """``n`` samples in ``d_fm`` dimensions with labels linear in a 2-D latent.

    Deterministic given ``seed``; two datasets that must share the latent
    embedding (train/test) should be generated with one call and sliced.
    """
    if n < 1 or d_fm < 2:
        raise ValueError("need n >= 1 and d_fm >= 2")
    raw = normal_block(mix(seed, 1), 2 * n).reshape(n, 2)
    norms = np.linalg.norm(raw, axis=1, keepdims=True)
    norms[norms == 0.0] = 1.0
    radii = _R_LOW + (_R_HIGH - _R_LOW) * (
        (_words_np(mix(seed, 2), n) >> np.uint64(11)).astype(np.float64) * 2.0**-53
    )
    latent = raw / norms * radii[:, None]

    basis = normal_block(mix(seed, 3), 2 * d_fm).reshape(2, d_fm)
    q, _ = np.linalg.qr(basis.T)
    embed = q.T  # (2, d_fm), orthonormal rows

    beta = normal_block(mix(seed, 4), 2)
    beta = beta / np.linalg.norm(beta) * _LABEL_SCALE
    labels = latent @ beta + noise * normal_block(mix(seed, 5), n)

    ids = tuple(f"s{i:05d}" for i in range(n))
    return LabeledDataset(
        ids=ids,
        embeddings=latent @ embed,
        labels=labels,
        raw_texts=ids,
    )
