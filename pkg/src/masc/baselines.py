"""k-means (Lloyd) and k-means++ seeding, used as comparison priors."""

from __future__ import annotations

from dataclasses import dataclass, field
from math import comb

import numba as nb
import numpy as np

from .codebook import Codebook
from .errors import ValidationError
from .mapping import ClusterMapping

INIT_CHOICES = ("random", "k-means++")


@dataclass(frozen=True)
class KMeansConfig:
    k: int
    init: str = "random"
    restarts: int = 10
    max_iter: int = 300
    tol: float = 1e-4
    seed: int = 0

    def __post_init__(self) -> None:
        init = {"pp": "k-means++", "kmeans++": "k-means++", "plusplus": "k-means++"}.get(self.init, self.init)
        if init not in INIT_CHOICES:
            raise ValidationError(f"init must be one of {INIT_CHOICES}, got {self.init!r}")
        object.__setattr__(self, "init", init)
        if self.k < 1 or self.restarts < 1 or self.max_iter < 1:
            raise ValidationError("k, restarts and max_iter must be positive")
        if self.tol < 0:
            raise ValidationError("tol must be non-negative")


@dataclass
class KMeansResult:
    mapping: ClusterMapping
    centroids: np.ndarray
    inertia: float
    iterations_run: int
    restart_index: int
    inertia_history: list[float] = field(default_factory=list, repr=False)
    restart_inertias: list[float] = field(default_factory=list, repr=False)


@nb.njit(cache=True)
def _assign(x, c, labels, dmin):
    n, d = x.shape
    k = c.shape[0]
    for i in range(n):
        best = np.inf
        bj = 0
        for j in range(k):
            acc = 0.0
            for t in range(d):
                diff = x[i, t] - c[j, t]
                acc += diff * diff
            if acc < best:
                best = acc
                bj = j
        labels[i] = bj
        dmin[i] = best


def _sq_to(x: np.ndarray, point: np.ndarray) -> np.ndarray:
    diff = x - point
    return (diff * diff).sum(axis=1)


def kmeanspp_seed(cb: Codebook, k: int, seed) -> list[int]:
    """D^2-weighted seeding. Falls back to uniform distinct picks once all remaining mass is zero."""
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    n = cb.n
    if not 1 <= k <= n:
        raise ValidationError(f"k={k} outside [1, {n}]")
    x = cb.data
    chosen = [int(rng.integers(n))]
    d2 = _sq_to(x, x[chosen[0]])
    while len(chosen) < k:
        total = float(d2.sum())
        if total <= 0.0:
            rest = np.setdiff1d(np.arange(n), chosen)
            chosen.extend(int(i) for i in rng.choice(rest, size=k - len(chosen), replace=False))
            break
        cum = np.cumsum(d2)
        idx = int(np.searchsorted(cum, rng.random() * cum[-1], side="right"))
        idx = min(idx, n - 1)
        while d2[idx] == 0.0:  # rounding can land on a zero-mass point
            idx = (idx + 1) % n
        chosen.append(idx)
        d2 = np.minimum(d2, _sq_to(x, x[idx]))
    return chosen


def _repair_empty(x, centroids, labels, dmin, k) -> None:
    """Move each empty cluster's centroid onto the point farthest from its own centroid."""
    counts = np.bincount(labels, minlength=k)
    empty = np.flatnonzero(counts == 0)
    if empty.size == 0:
        return
    for c in empty:
        movable = counts[labels] > 1
        far = np.where(movable, dmin, -1.0)
        p = int(np.argmax(far))
        counts[labels[p]] -= 1
        counts[c] += 1
        labels[p] = c
        dmin[p] = 0.0
        centroids[c] = x[p]


def _lloyd(x: np.ndarray, init: np.ndarray, max_iter: int, tol: float):
    n = x.shape[0]
    k = init.shape[0]
    centroids = init.copy()
    labels = np.empty(n, dtype=np.int64)
    dmin = np.empty(n, dtype=np.float64)
    history = []
    it = 0
    for it in range(1, max_iter + 1):
        _assign(x, centroids, labels, dmin)
        _repair_empty(x, centroids, labels, dmin, k)
        history.append(float(dmin.sum()))
        counts = np.bincount(labels, minlength=k).astype(np.float64)
        new = np.zeros_like(centroids)
        np.add.at(new, labels, x)
        new /= counts[:, None]
        shift = float(np.linalg.norm(new - centroids))
        centroids = new
        if shift < tol:
            break
    _assign(x, centroids, labels, dmin)
    _repair_empty(x, centroids, labels, dmin, k)
    inertia = float(dmin.sum())
    history.append(inertia)
    return labels, centroids, inertia, it, history


def kmeans(cb: Codebook, cfg: KMeansConfig) -> KMeansResult:
    """Best-of-``restarts`` Lloyd k-means; restart r draws from seed + r."""
    if cfg.k > cb.n:
        raise ValidationError(f"k={cfg.k} exceeds the number of points {cb.n}")
    x = np.ascontiguousarray(cb.data)
    best = None
    inertias = []
    for r in range(cfg.restarts):
        rng = np.random.default_rng(cfg.seed + r)
        if cfg.init == "k-means++":
            idx = kmeanspp_seed(cb, cfg.k, rng)
        else:
            idx = rng.choice(cb.n, size=cfg.k, replace=False)
        labels, cents, inertia, iters, hist = _lloyd(x, x[np.asarray(idx)], cfg.max_iter, cfg.tol)
        inertias.append(inertia)
        # strict < keeps the lowest restart index among equal inertias
        if best is None or inertia < best[2]:
            best = (labels, cents, inertia, iters, r, hist)
    labels, cents, inertia, iters, r, hist = best
    mapping = ClusterMapping.from_labels(labels)
    # reorder centroids to the canonical cluster numbering
    order = np.empty(cfg.k, dtype=np.int64)
    order[mapping.assign] = labels
    return KMeansResult(mapping, cents[order], inertia, iters, r, hist, inertias)


def partition_ari(a, b) -> float:
    """Adjusted Rand Index from the pair-counting contingency table."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape or a.ndim != 1:
        raise ValidationError(f"label arrays differ in shape: {a.shape} vs {b.shape}")
    n = a.size
    _, ai = np.unique(a, return_inverse=True)
    _, bi = np.unique(b, return_inverse=True)
    table = np.zeros((ai.max() + 1 if n else 0, bi.max() + 1 if n else 0), dtype=np.int64)
    np.add.at(table, (ai.ravel(), bi.ravel()), 1)
    index = sum(comb(int(v), 2) for v in table.ravel())
    rows = sum(comb(int(v), 2) for v in table.sum(axis=1))
    cols = sum(comb(int(v), 2) for v in table.sum(axis=0))
    total = comb(n, 2)
    expected = rows * cols / total if total else 0.0
    maximum = (rows + cols) / 2
    if maximum == expected:
        return 1.0
    return float((index - expected) / (maximum - expected))
