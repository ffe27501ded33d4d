"""Brute-force reference implementations.

Nothing here shares code with the optimised paths beyond the data types:
cluster distances are recomputed from raw point distances at every merge
step (no incremental updates), quantization is a plain loop, and the
k-partition optimum is found by exhaustive enumeration.
"""

from __future__ import annotations

import math

import numpy as np

from .codebook import Codebook
from .errors import ValidationError
from .linkage import LinkageKind
from .tree import MergeRecord, MergeTrace

BUILD_CAP = 1024
ENUMERATE_CAP = 12


def _point_distances(x: np.ndarray) -> np.ndarray:
    diff = x[:, None, :] - x[None, :, :]
    return np.sqrt((diff * diff).sum(axis=2))


def oracle_build(cb: Codebook, k: int = 1, kind=LinkageKind.AVERAGE, n_cap: int = BUILD_CAP) -> MergeTrace:
    kind = LinkageKind.parse(kind)
    n = cb.n
    if n > min(n_cap, BUILD_CAP):
        raise ValidationError(f"oracle_build is capped at n <= {min(n_cap, BUILD_CAP)}, got {n}")
    if not 1 <= k <= n:
        raise ValidationError(f"k={k} outside [1, {n}]")
    pts = _point_distances(cb.data)
    reduce = {
        LinkageKind.AVERAGE: np.add.reduceat,
        LinkageKind.SINGLE: np.minimum.reduceat,
        LinkageKind.COMPLETE: np.maximum.reduceat,
    }[kind]

    # a cluster is named by its smallest member
    owner = np.arange(n)
    records = []
    for step in range(1, n - k + 1):
        order = np.argsort(owner, kind="stable")
        ids, starts = np.unique(owner[order], return_index=True)
        block = pts[np.ix_(order, order)]
        agg = reduce(reduce(block, starts, axis=0), starts, axis=1)
        if kind is LinkageKind.AVERAGE:
            sizes = np.diff(np.append(starts, n)).astype(np.float64)
            agg = agg / np.outer(sizes, sizes)
        iu, ju = np.triu_indices(len(ids), 1)
        best = int(np.argmin(agg[iu, ju]))  # row-major first minimum = smallest (left, right)
        a, b = int(ids[iu[best]]), int(ids[ju[best]])
        records.append(MergeRecord(step, a, b, a, float(agg[iu[best], ju[best]])))
        owner[owner == b] = a
    return MergeTrace(n, kind, records, [int(i) for i in np.unique(owner)])


def oracle_quantize(z, cb: Codebook) -> int:
    z = [float(v) for v in np.asarray(z, dtype=np.float64).ravel()]
    if len(z) != cb.d:
        raise ValidationError(f"feature vector has length {len(z)}, codebook dimension is {cb.d}")
    best, best_i = math.inf, -1
    for i, row in enumerate(cb.data.tolist()):
        total = 0.0
        for a, b in zip(z, row):
            total += (a - b) * (a - b)
        if total < best:
            best, best_i = total, i
    return best_i


def _growth_strings(n: int, k: int):
    """All labelings of n items into exactly k non-empty blocks, in first-appearance form."""
    labels = [0] * n

    def rec(i: int, used: int):
        if n - i < k - used:
            return
        if i == n:
            if used == k:
                yield list(labels)
            return
        for c in range(used):
            labels[i] = c
            yield from rec(i + 1, used)
        if used < k:
            labels[i] = used
            yield from rec(i + 1, used + 1)

    if n >= 1:
        labels[0] = 0
        yield from rec(1, 1)


def oracle_partition_enumerate(cb: Codebook, k: int) -> tuple[np.ndarray, float]:
    """Minimum within-cluster sum of squares over every partition into k blocks."""
    n = cb.n
    if n > ENUMERATE_CAP:
        raise ValidationError(f"enumeration is capped at n <= {ENUMERATE_CAP}, got {n}")
    if not 1 <= k <= n:
        raise ValidationError(f"k={k} outside [1, {n}]")
    x = cb.data
    labels = np.array(list(_growth_strings(n, k)), dtype=np.int64)
    onehot = (labels[:, :, None] == np.arange(k)[None, None, :]).astype(np.float64)
    counts = onehot.sum(axis=1)
    means = np.einsum("pnc,nd->pcd", onehot, x) / counts[:, :, None]
    dev = x[None, :, :] - np.take_along_axis(means, labels[:, :, None], axis=1)
    sse = (dev * dev).sum(axis=(1, 2))
    best = int(np.argmin(sse))
    return labels[best], float(sse[best])
