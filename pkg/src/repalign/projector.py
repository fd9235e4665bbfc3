"""Untrained affine maps into the LLM embedding space, plus baselines.

The default projector is a single linear layer with zero bias whose entries
are drawn once from a seeded Gaussian stream; multi-layer variants are
composed into one effective weight matrix. Activations are ablation-only
and are applied once to the final affine output. ``zero_pad`` and
``random_noise`` are the two non-projection baselines.

All operations are pure; specs are immutable and cheap to share.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ._bits import fnv1a64, mix
from ._kernels import ACT_GELU, ACT_NONE, ACT_RELU, ACT_SIGMOID, _apply_act_np, normal_block
from .store import as_matrix, load_matrix, save_matrix

SCHEMES = ("normal", "glorot", "he", "dirac")
ACTIVATIONS = ("none", "relu", "gelu", "sigmoid")

_ACT_IDS = {"relu": ACT_RELU, "sigmoid": ACT_SIGMOID, "gelu": ACT_GELU, "none": ACT_NONE}


def apply_activation(x: np.ndarray, activation: str) -> np.ndarray:
    if activation not in _ACT_IDS:
        raise ValueError(f"unknown activation {activation!r}; expected one of {ACTIVATIONS}")
    return _apply_act_np(np.asarray(x, dtype=np.float64), _ACT_IDS[activation])


@dataclass(frozen=True, eq=False)
class ProjectorSpec:
    """An untrained affine map d_in -> d_out with its provenance.

    ``weight`` is the effective (d_in, d_out) matrix — for multi-layer
    variants it is the product of the per-layer matrices. ``activation``
    other than "none" marks an ablation configuration.
    """

    d_in: int
    d_out: int
    weight: np.ndarray
    bias: np.ndarray
    init_scheme: str
    seed: int
    activation: str = "none"
    layer_sizes: tuple[int, ...] | None = None

    def __post_init__(self):
        w = as_matrix(self.weight, name="weight")
        object.__setattr__(self, "weight", w)
        b = np.ascontiguousarray(self.bias, dtype=np.float64)
        object.__setattr__(self, "bias", b)
        if self.layer_sizes is not None:
            object.__setattr__(self, "layer_sizes", tuple(int(s) for s in self.layer_sizes))
        if w.shape != (self.d_in, self.d_out):
            raise ValueError(f"weight shape {w.shape} does not match ({self.d_in}, {self.d_out})")
        if b.shape != (self.d_out,):
            raise ValueError(f"bias length {b.shape} does not match d_out={self.d_out}")
        if self.init_scheme not in SCHEMES:
            raise ValueError(f"unknown init scheme {self.init_scheme!r}; expected one of {SCHEMES}")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}; expected one of {ACTIVATIONS}")


def _layer_matrix(fan_in: int, fan_out: int, scheme: str, seed: int) -> np.ndarray:
    if scheme == "dirac":
        w = np.zeros((fan_in, fan_out))
        np.fill_diagonal(w, 1.0)
        return w
    if scheme == "normal":
        var = 1.0 / fan_in
    elif scheme == "glorot":
        var = 2.0 / (fan_in + fan_out)
    elif scheme == "he":
        var = 2.0 / fan_in
    else:
        raise ValueError(f"unknown init scheme {scheme!r}; expected one of {SCHEMES}")
    g = normal_block(seed, fan_in * fan_out)
    return math.sqrt(var) * g.reshape(fan_in, fan_out)


def init_projector(d_in: int, d_out: int, scheme: str = "normal", seed: int = 0,
                   layer_sizes=None, activation: str = "none") -> ProjectorSpec:
    """Build a deterministic untrained projector.

    Gaussian schemes draw i.i.d. entries with variance 1/fan_in (normal),
    2/(fan_in+fan_out) (glorot) or 2/fan_in (he); dirac puts ones on the
    truncated diagonal. Layer ``i`` uses the sub-stream mix(seed, i), so the
    same (dims, scheme, seed) always yields bit-identical weights. Bias is
    zero.
    """
    if d_in < 1 or d_out < 1:
        raise ValueError(f"projector dimensions must be >= 1, got ({d_in}, {d_out})")
    sizes = [int(d_in)]
    if layer_sizes:
        for s in layer_sizes:
            if int(s) < 1:
                raise ValueError(f"hidden layer width must be >= 1, got {s}")
            sizes.append(int(s))
    sizes.append(int(d_out))
    weight = _layer_matrix(sizes[0], sizes[1], scheme, mix(seed, 0))
    for i in range(1, len(sizes) - 1):
        weight = weight @ _layer_matrix(sizes[i], sizes[i + 1], scheme, mix(seed, i))
    return ProjectorSpec(
        d_in=int(d_in),
        d_out=int(d_out),
        weight=weight,
        bias=np.zeros(int(d_out)),
        init_scheme=scheme,
        seed=int(seed),
        activation=activation,
        layer_sizes=tuple(int(s) for s in layer_sizes) if layer_sizes else None,
    )


def project(spec: ProjectorSpec, h: np.ndarray) -> np.ndarray:
    """Row-wise ``activation(h @ weight + bias)``."""
    h = as_matrix(h, name="input")
    if h.shape[1] != spec.d_in:
        raise ValueError(f"input dim {h.shape[1]} does not match projector d_in {spec.d_in}")
    out = h @ spec.weight + spec.bias
    if spec.activation != "none":
        out = apply_activation(out, spec.activation)
    return out


def zero_pad(h: np.ndarray, d_out: int) -> np.ndarray:
    """Copy rows into the first ``h.dim`` coordinates, zero the rest."""
    h = as_matrix(h, name="input")
    pad = int(d_out) - h.shape[1]
    if pad < 0:
        raise ValueError(f"pad_size negative: d_out={d_out} < input dim {h.shape[1]}")
    if pad == 0:
        return h.copy()
    out = np.zeros((h.shape[0], int(d_out)))
    out[:, : h.shape[1]] = h
    return out


def random_noise(ids: list[str], d_out: int, global_seed: int) -> np.ndarray:
    """One standard-normal row per id, seeded by mix(global_seed, fnv1a64(id)).

    The same id yields the same row across calls and processes; distinct ids
    give independent streams except on 64-bit hash collision.
    """
    if not ids:
        raise ValueError("ids must be non-empty")
    if int(d_out) < 1:
        raise ValueError(f"d_out must be >= 1, got {d_out}")
    out = np.empty((len(ids), int(d_out)))
    for i, sample_id in enumerate(ids):
        out[i] = normal_block(mix(global_seed, fnv1a64(sample_id)), int(d_out))
    return out


def save_projector(spec: ProjectorSpec, dirpath) -> None:
    """Weight/bias in bin format plus a small key=value sidecar header."""
    dirpath = Path(dirpath)
    dirpath.mkdir(parents=True, exist_ok=True)
    save_matrix(spec.weight, dirpath / "weight.bin", "bin")
    save_matrix(spec.bias.reshape(1, -1), dirpath / "bias.bin", "bin")
    layers = ",".join(str(s) for s in spec.layer_sizes) if spec.layer_sizes else ""
    lines = [
        f"d_in={spec.d_in}",
        f"d_out={spec.d_out}",
        f"scheme={spec.init_scheme}",
        f"seed={spec.seed}",
        f"activation={spec.activation}",
        f"ablation={'true' if spec.activation != 'none' else 'false'}",
        f"layer_sizes={layers}",
    ]
    (dirpath / "meta.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_projector(dirpath) -> ProjectorSpec:
    dirpath = Path(dirpath)
    meta = {}
    for line in (dirpath / "meta.txt").read_text(encoding="utf-8").splitlines():
        line = line.strip()
        if line:
            key, _, value = line.partition("=")
            meta[key] = value
    layers = tuple(int(s) for s in meta["layer_sizes"].split(",") if s) or None
    return ProjectorSpec(
        d_in=int(meta["d_in"]),
        d_out=int(meta["d_out"]),
        weight=load_matrix(dirpath / "weight.bin", "bin"),
        bias=load_matrix(dirpath / "bias.bin", "bin")[0],
        init_scheme=meta["scheme"],
        seed=int(meta["seed"]),
        activation=meta["activation"],
        layer_sizes=layers,
    )
