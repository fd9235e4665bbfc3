"""Few-shot demonstration assembly and the prompt intermediate representation.

A prompt is an instruction plus an ordered list of segments, each either a
text span or a reference to a row of an attached vector matrix. Vector
segments are what an embedding-level driver would splice into the model's
input embedding stream; :func:`render_text` substitutes a placeholder for
inspection dumps.

Demonstration template (fixed):
    "Input: " <per-mode content> " Answer: " <label to 3 decimals> "\\n"
Query template:
    "Input: " <per-mode content> " Answer:"

``knn_predict`` is a deliberately simple stand-in scorer (cosine k-nearest
demonstrations, mean label) so full pipelines can run and be tested without
any language model.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ._bits import mix
from ._kernels import _words_np
from .store import LabeledDataset, as_matrix, load_matrix, save_matrix

INJECTION_MODES = ("pca_string", "embedding", "raw_text_plus_embedding", "raw_text_only")

DEFAULT_INSTRUCTION = (
    "You are a drug expert. The answer should be different from the examples; "
    "DO NOT COPY ANY FLOAT VALUE"
)


@dataclass(frozen=True)
class Text:
    """A literal text span."""

    value: str


@dataclass(frozen=True)
class VectorRef:
    """Reference to a row of the prompt's attached vector matrix."""

    row: int


Segment = Text | VectorRef


@dataclass(frozen=True, eq=False)
class PromptIR:
    """Serializable prompt: instruction, segments, attached vectors, labels.

    ``demo_segment_count`` marks where the demonstration region ends and
    queries begin; ``query_count`` is 0 until queries are appended (the
    demonstrations-only value is a partial prompt).
    """

    instruction: str
    segments: tuple[Segment, ...]
    attached_vectors: np.ndarray
    demo_labels: np.ndarray
    query_count: int
    demo_segment_count: int

    def __post_init__(self):
        object.__setattr__(self, "segments", tuple(self.segments))
        vecs = as_matrix(self.attached_vectors, name="attached_vectors")
        object.__setattr__(self, "attached_vectors", vecs)
        labels = np.asarray(self.demo_labels, dtype=np.float64)
        object.__setattr__(self, "demo_labels", labels)
        if not (0 <= self.demo_segment_count <= len(self.segments)):
            raise ValueError("demo_segment_count out of range")
        if self.query_count < 0:
            raise ValueError("query_count must be >= 0")
        for seg in self.segments:
            if isinstance(seg, VectorRef):
                if not (0 <= seg.row < vecs.shape[0]):
                    raise ValueError(
                        f"vector segment row {seg.row} out of range for "
                        f"{vecs.shape[0]} attached rows"
                    )
            elif not isinstance(seg, Text):
                raise ValueError(f"unknown segment type {type(seg).__name__}")

    def demo_vector_rows(self) -> list[int]:
        return [
            seg.row
            for seg in self.segments[: self.demo_segment_count]
            if isinstance(seg, VectorRef)
        ]


def stratified_sample(labels, k: int, seed: int, pool_cap: int = 1000) -> list[int]:
    """Pick ``k`` indices covering the label range: sort the candidate pool
    by label, cut it into ``k`` contiguous bins (sizes differ by at most
    one, larger bins first) and draw one index uniformly per bin.

    Pools larger than ``pool_cap`` are first uniformly downsampled to
    ``pool_cap`` candidates (indices with the smallest keyed hashes — a
    uniform subset). Fully deterministic given ``seed``; duplicate labels
    are ordered by original index before binning. The result is sorted by
    (label, index) ascending.
    """
    labels = np.asarray(labels, dtype=np.float64)
    n = labels.shape[0]
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    pool = list(range(n))
    if n > pool_cap:
        keys = [mix(mix(seed, 1), i) for i in range(n)]
        pool = sorted(range(n), key=lambda i: keys[i])[:pool_cap]
    if k > len(pool):
        raise ValueError(f"k={k} exceeds candidate pool size {len(pool)}")
    pool.sort(key=lambda i: (labels[i], i))
    base, rem = divmod(len(pool), k)
    draws = _words_np(mix(seed, 2), k)
    picked: list[int] = []
    start = 0
    for b in range(k):
        size = base + (1 if b < rem else 0)
        picked.append(pool[start + int(draws[b] % np.uint64(size))])
        start += size
    picked.sort(key=lambda i: (labels[i], i))
    return picked


def _mode_segments(mode: str, dataset: LabeledDataset, ordinal: int, dataset_index: int,
                   vector_row: int | None, pca_strings) -> list[Segment]:
    if mode == "pca_string":
        return [Text(pca_strings[ordinal])]
    if mode == "embedding":
        return [VectorRef(vector_row)]
    if mode == "raw_text_plus_embedding":
        return [Text(dataset.raw_texts[dataset_index]), Text(" "), VectorRef(vector_row)]
    return [Text(dataset.raw_texts[dataset_index])]


def _check_mode_inputs(mode: str, dataset: LabeledDataset, count: int, injected, pca_strings):
    if mode not in INJECTION_MODES:
        raise ValueError(f"unknown injection mode {mode!r}; expected one of {INJECTION_MODES}")
    if mode in ("embedding", "raw_text_plus_embedding"):
        if injected is None:
            raise ValueError(f"mode {mode!r} needs injected vectors")
        injected = as_matrix(injected, name="injected")
        if injected.shape[0] != count:
            raise ValueError(
                f"injected has {injected.shape[0]} rows, expected one per example ({count})"
            )
    if mode == "pca_string":
        if pca_strings is None:
            raise ValueError("mode 'pca_string' needs pca_strings")
        if len(pca_strings) != count:
            raise ValueError(
                f"pca_strings has {len(pca_strings)} entries, expected one per example ({count})"
            )
    if mode in ("raw_text_plus_embedding", "raw_text_only") and dataset.raw_texts is None:
        raise ValueError(f"mode {mode!r} needs raw_texts on the dataset")
    return injected


def build_demonstrations(mode: str, dataset: LabeledDataset, selected, injected=None,
                         pca_strings=None, instruction: str = DEFAULT_INSTRUCTION) -> PromptIR:
    """Assemble the demonstration region of a prompt (queries not yet added).

    ``selected`` are dataset indices in presentation order; for embedding
    modes ``injected`` holds one vector row per selected example (same
    order) and becomes the prompt's attached matrix.
    """
    selected = [int(i) for i in selected]
    for i in selected:
        if not (0 <= i < len(dataset)):
            raise ValueError(f"selected index {i} out of range for dataset of {len(dataset)}")
    injected = _check_mode_inputs(mode, dataset, len(selected), injected, pca_strings)
    segments: list[Segment] = []
    for ordinal, ds_index in enumerate(selected):
        segments.append(Text("Input: "))
        segments.extend(_mode_segments(mode, dataset, ordinal, ds_index, ordinal, pca_strings))
        segments.append(Text(" Answer: "))
        segments.append(Text(f"{dataset.labels[ds_index]:.3f}"))
        segments.append(Text("\n"))
    vectors = injected if injected is not None else np.empty((0, 0))
    return PromptIR(
        instruction=instruction,
        segments=tuple(segments),
        attached_vectors=vectors,
        demo_labels=dataset.labels[selected],
        query_count=0,
        demo_segment_count=len(segments),
    )


def append_queries(ir: PromptIR, mode: str, dataset: LabeledDataset, query_indices,
                   injected=None, pca_strings=None) -> PromptIR:
    """Append a batch of unanswered queries; each ends with " Answer:"."""
    query_indices = [int(i) for i in query_indices]
    if len(query_indices) < 1:
        raise ValueError("need at least one query index")
    for i in query_indices:
        if not (0 <= i < len(dataset)):
            raise ValueError(f"query index {i} out of range for dataset of {len(dataset)}")
    injected = _check_mode_inputs(mode, dataset, len(query_indices), injected, pca_strings)
    offset = ir.attached_vectors.shape[0]
    segments = list(ir.segments)
    for ordinal, ds_index in enumerate(query_indices):
        segments.append(Text("Input: "))
        segments.extend(
            _mode_segments(mode, dataset, ordinal, ds_index, offset + ordinal, pca_strings)
        )
        segments.append(Text(" Answer:"))
    if injected is not None:
        if ir.attached_vectors.size:
            if ir.attached_vectors.shape[1] != injected.shape[1]:
                raise ValueError(
                    f"query vector dim {injected.shape[1]} does not match attached "
                    f"dim {ir.attached_vectors.shape[1]}"
                )
            vectors = np.vstack([ir.attached_vectors, injected])
        else:
            vectors = injected
    else:
        vectors = ir.attached_vectors
    return PromptIR(
        instruction=ir.instruction,
        segments=tuple(segments),
        attached_vectors=vectors,
        demo_labels=ir.demo_labels,
        query_count=ir.query_count + len(query_indices),
        demo_segment_count=ir.demo_segment_count,
    )


def render_text(ir: PromptIR, vector_placeholder: str = "<REP>") -> str:
    """Concatenated text with each vector segment replaced by a placeholder."""
    parts = []
    for seg in ir.segments:
        parts.append(seg.value if isinstance(seg, Text) else vector_placeholder)
    return "".join(parts)


def knn_predict(ir: PromptIR, k_neighbors: int, query_vectors) -> list[float]:
    """Mean label of the k demonstrations most cosine-similar to each query.

    Ties are broken toward the lower demonstration index. Zero-norm vectors
    contribute cosine 0. Requires vector-bearing demonstrations.
    """
    demo_rows = ir.demo_vector_rows()
    if not demo_rows:
        raise ValueError("surrogate requires embedding-level injection")
    if len(demo_rows) != len(ir.demo_labels):
        raise ValueError(
            f"{len(demo_rows)} vector demonstrations vs {len(ir.demo_labels)} labels"
        )
    if not (1 <= k_neighbors <= len(demo_rows)):
        raise ValueError(f"k_neighbors={k_neighbors} out of range [1, {len(demo_rows)}]")
    q = as_matrix(query_vectors, name="query_vectors")
    demos = ir.attached_vectors[demo_rows]
    if q.shape[1] != demos.shape[1]:
        raise ValueError(f"query dim {q.shape[1]} does not match demo dim {demos.shape[1]}")

    def unit(m):
        norms = np.linalg.norm(m, axis=1, keepdims=True)
        safe = np.where(norms == 0.0, 1.0, norms)
        return m / safe

    sims = unit(q) @ unit(demos).T
    preds = []
    for row in sims:
        top = np.argsort(-row, kind="stable")[:k_neighbors]
        preds.append(float(ir.demo_labels[top].mean()))
    return preds


def _vectors_path(path: Path) -> Path:
    return path.with_name(path.stem + ".vectors.bin")


def save_prompt(ir: PromptIR, path) -> None:
    """Line-delimited records: instruction, one per segment, labels/counts.

    Attached vectors go to a sibling ``<name>.vectors.bin``. Only complete
    prompts (at least one query) are serializable.
    """
    if ir.query_count < 1:
        raise ValueError("prompt has no queries; append a batch before saving")
    path = Path(path)
    save_matrix(ir.attached_vectors, _vectors_path(path), "bin")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps({"instruction": ir.instruction}) + "\n")
        for seg in ir.segments:
            if isinstance(seg, Text):
                fh.write(json.dumps({"t": seg.value}) + "\n")
            else:
                fh.write(json.dumps({"v": seg.row}) + "\n")
        fh.write(
            json.dumps(
                {
                    "labels": [float(v) for v in ir.demo_labels],
                    "query_count": ir.query_count,
                    "demo_segments": ir.demo_segment_count,
                }
            )
            + "\n"
        )


def load_prompt(path) -> PromptIR:
    path = Path(path)
    with open(path, "r", encoding="utf-8") as fh:
        lines = [json.loads(line) for line in fh if line.strip()]
    if len(lines) < 2 or "instruction" not in lines[0]:
        raise ValueError(f"{path}: not a prompt file")
    tail = lines[-1]
    segments: list[Segment] = []
    for rec in lines[1:-1]:
        if "t" in rec:
            segments.append(Text(rec["t"]))
        elif "v" in rec:
            segments.append(VectorRef(int(rec["v"])))
        else:
            raise ValueError(f"{path}: bad segment record {rec}")
    return PromptIR(
        instruction=lines[0]["instruction"],
        segments=tuple(segments),
        attached_vectors=load_matrix(_vectors_path(path), "bin"),
        demo_labels=np.array(tail["labels"], dtype=np.float64),
        query_count=int(tail["query_count"]),
        demo_segment_count=int(tail["demo_segments"]),
    )
