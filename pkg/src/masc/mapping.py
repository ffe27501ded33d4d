"""Cutting a merge trace into k branches and the resulting fine-to-coarse map."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.spatial.distance import cdist

from .codebook import Codebook
from .errors import FormatError, ValidationError
from .tree import MergeTrace


@dataclass(frozen=True, eq=False)
class ClusterMapping:
    """Total, surjective map from token index to coarse cluster index."""

    n: int
    k: int
    assign: np.ndarray

    def __post_init__(self) -> None:
        a = np.asarray(self.assign)
        if a.ndim != 1 or a.shape[0] != self.n:
            raise ValidationError(f"assignment has shape {a.shape}, expected ({self.n},)")
        if a.size and not np.issubdtype(a.dtype, np.integer):
            if not np.all(a == np.round(a)):
                raise ValidationError("cluster indices must be integers")
        a = a.astype(np.int64)
        if not 1 <= self.k <= self.n:
            raise ValidationError(f"k={self.k} outside [1, n={self.n}]")
        bad = np.flatnonzero((a < 0) | (a >= self.k))
        if bad.size:
            i = int(bad[0])
            raise ValidationError(f"token {i} assigned to cluster {int(a[i])}, outside [0, {self.k})")
        counts = np.bincount(a, minlength=self.k)
        if (counts == 0).any():
            raise ValidationError(f"cluster {int(np.flatnonzero(counts == 0)[0])} has no members")
        a.setflags(write=False)
        object.__setattr__(self, "assign", a)

    @classmethod
    def from_labels(cls, labels) -> "ClusterMapping":
        """Canonical mapping for any labelling: clusters numbered by smallest member."""
        labels = np.asarray(labels)
        _, first, inverse = np.unique(labels, return_index=True, return_inverse=True)
        rank = np.empty(first.size, dtype=np.int64)
        rank[np.argsort(first, kind="stable")] = np.arange(first.size)
        return cls(labels.size, int(first.size), rank[inverse.ravel()])

    @property
    def sizes(self) -> np.ndarray:
        return np.bincount(self.assign, minlength=self.k)

    @property
    def members(self) -> list[np.ndarray]:
        order = np.argsort(self.assign, kind="stable")
        return np.split(order, np.cumsum(self.sizes)[:-1])

    def member_table(self) -> tuple[np.ndarray, np.ndarray]:
        """Members flattened cluster by cluster (ascending), plus each cluster's offset."""
        order = np.argsort(self.assign, kind="stable")
        offsets = np.concatenate([[0], np.cumsum(self.sizes)[:-1]])
        return order, offsets

    def partition(self) -> frozenset[frozenset[int]]:
        return frozenset(frozenset(m.tolist()) for m in self.members)

    def refines(self, coarser: "ClusterMapping") -> bool:
        """True when every cluster of ``self`` lies inside a single cluster of ``coarser``."""
        if coarser.n != self.n:
            return False
        pairs = np.unique(np.stack([self.assign, coarser.assign]), axis=1)
        return pairs.shape[1] == self.k

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, ClusterMapping):
            return NotImplemented
        return self.n == other.n and self.k == other.k and np.array_equal(self.assign, other.assign)

    def to_dict(self) -> dict:
        return {"n": self.n, "k": self.k, "assign": self.assign.tolist()}


def cut(t: MergeTrace, k: int) -> ClusterMapping:
    """Undo the last merges of ``t`` until exactly ``k`` groups remain."""
    if not 1 <= k <= t.n:
        raise ValidationError(f"k={k} outside [1, {t.n}]")
    if t.stop_at > k:
        raise ValidationError(f"trace stops at {t.stop_at} clusters; cannot cut at k={k}")
    parent = np.arange(t.n)

    def find(i: int) -> int:
        root = i
        while parent[root] != root:
            root = parent[root]
        while parent[i] != root:
            parent[i], i = root, parent[i]
        return root

    for r in t.records[: t.n - k]:
        parent[find(r.right)] = find(r.left)
    roots = np.array([find(i) for i in range(t.n)])
    # roots are the smallest member of each group, so ranking them orders
    # clusters by smallest member token
    _, assign = np.unique(roots, return_inverse=True)
    return ClusterMapping(t.n, k, assign.ravel())


# --- file formats ---------------------------------------------------------


def _mapping_from_rows(n: int, k: int | None, assign) -> ClusterMapping:
    assign = np.asarray(assign, dtype=np.int64)
    if k is None:
        k = int(assign.max()) + 1 if assign.size else 0
    return ClusterMapping(n, k, assign)


def mapping_to_csv(m: ClusterMapping) -> str:
    buf = io.StringIO()
    buf.write("token_index,cluster_index\n")
    for i, c in enumerate(m.assign.tolist()):
        buf.write(f"{i},{c}\n")
    return buf.getvalue()


def mapping_from_csv(text: str) -> ClusterMapping:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or [h.strip() for h in rows[0]] != ["token_index", "cluster_index"]:
        raise FormatError("mapping CSV must start with header 'token_index,cluster_index'")
    assign = []
    for line, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        try:
            tok, cl = (int(v) for v in row)
        except ValueError:
            raise FormatError(f"mapping CSV line {line}: expected two integers, got {row!r}") from None
        if tok != len(assign):
            raise ValidationError(f"mapping CSV line {line}: token {tok} out of order, expected {len(assign)}")
        assign.append(cl)
    return _mapping_from_rows(len(assign), None, assign)


def mapping_from_dict(doc: dict) -> ClusterMapping:
    try:
        n, k, assign = int(doc["n"]), int(doc["k"]), doc["assign"]
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"mapping JSON missing or invalid field: {exc}") from None
    if not isinstance(assign, list) or len(assign) != n:
        raise ValidationError(f"mapping JSON: assign must list exactly n={n} cluster indices")
    return _mapping_from_rows(n, k, assign)


def save_mapping(m: ClusterMapping, path: str | Path, fmt: str | None = None) -> None:
    path = Path(path)
    fmt = fmt or ("csv" if path.suffix.lower() == ".csv" else "json")
    if fmt == "csv":
        path.write_text(mapping_to_csv(m), encoding="utf-8")
    elif fmt == "json":
        path.write_text(json.dumps(m.to_dict(), separators=(",", ":")) + "\n", encoding="utf-8")
    else:
        raise ValidationError(f"unknown mapping format {fmt!r}")


def load_mapping(path: str | Path) -> ClusterMapping:
    text = Path(path).read_text(encoding="utf-8")
    if text.lstrip().startswith("{"):
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise FormatError(f"{path}: invalid mapping JSON ({exc.msg})") from None
        return mapping_from_dict(doc)
    return mapping_from_csv(text)


# --- statistics -----------------------------------------------------------


def _pair_sums(m: ClusterMapping, cb: Codebook, block_rows: int = 512) -> tuple[np.ndarray, float]:
    """Per-cluster sum of ordered intra-cluster pair distances, and the total over all ordered pairs."""
    x = cb.data
    intra = np.zeros(m.k)
    total = 0.0
    for r0 in range(0, cb.n, block_rows):
        rows = slice(r0, min(r0 + block_rows, cb.n))
        dist = cdist(x[rows], x)
        same = m.assign[rows, None] == m.assign[None, :]
        intra += np.bincount(m.assign[rows], weights=np.where(same, dist, 0.0).sum(axis=1), minlength=m.k)
        total += float(dist.sum())
    return intra, total


def mapping_stats(m: ClusterMapping, cb: Codebook) -> dict:
    """Cluster-size histogram and intra/inter-cluster mean distances.

    Singleton clusters have intra-cluster distance 0 by definition. The
    global intra figure is the mean over all within-cluster token pairs.
    """
    if m.n != cb.n:
        raise ValidationError(f"mapping covers {m.n} tokens, codebook has {cb.n}")
    sizes = m.sizes
    intra_sum, total = _pair_sums(m, cb)
    ordered_pairs = sizes.astype(np.float64) * (sizes - 1)
    intra_mean = np.divide(intra_sum, ordered_pairs, out=np.zeros(m.k), where=ordered_pairs > 0)
    n_intra = float(ordered_pairs.sum())
    n_inter = float(cb.n) * (cb.n - 1) - n_intra
    hist_sizes, hist_counts = np.unique(sizes, return_counts=True)
    return {
        "n": m.n,
        "k": m.k,
        "sizes": sizes.tolist(),
        "size_histogram": {str(s): int(c) for s, c in zip(hist_sizes.tolist(), hist_counts.tolist())},
        "min_size": int(sizes.min()),
        "max_size": int(sizes.max()),
        "intra_mean_per_cluster": intra_mean.tolist(),
        "intra_mean": float(intra_sum.sum() / n_intra) if n_intra else 0.0,
        "inter_mean": float((total - intra_sum.sum()) / n_inter) if n_inter else 0.0,
    }
