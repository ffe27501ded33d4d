"""Bottom-up agglomerative construction of the semantic tree.

At every step the active pair with the smallest linkage distance is merged,
ties going to the lexicographically smallest ``(left, right)`` id pair. The
merged cluster keeps the smaller id, so a cluster id is always the smallest
token index it contains.

The production path keeps, for each active cluster ``i``, a cached lower
bound on ``(distance, j)`` over active partners ``j > i`` in an indexed
binary heap. A popped entry whose cached pair is still live is provably the
global lexicographic minimum; stale entries are rescanned in O(N). The
distance values and merge order are therefore bit-identical to a naive full
rescan of the matrix after every merge.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numba as nb
import numpy as np

from .codebook import Codebook
from .errors import FormatError, ValidationError
from .linkage import LinkageKind, _lw_average, condensed_index, pairwise_matrix


@dataclass(frozen=True)
class MergeRecord:
    step: int
    left: int
    right: int
    new: int
    height: float


@dataclass
class MergeTrace:
    n: int
    linkage: LinkageKind
    records: list[MergeRecord]
    final_active: list[int]
    stats: dict = field(default_factory=dict, compare=False, repr=False)

    @property
    def stop_at(self) -> int:
        return len(self.final_active)

    def heights(self) -> np.ndarray:
        return np.array([r.height for r in self.records], dtype=np.float64)

    def pairs(self) -> list[tuple[int, int]]:
        return [(r.left, r.right) for r in self.records]

    def monotonicity_violations(self) -> list[int]:
        """Steps whose height is strictly below the previous step's height."""
        h = self.heights()
        return [self.records[i].step for i in np.flatnonzero(h[1:] < h[:-1]) + 1]

    def structural_issues(self) -> list[str]:
        issues: list[str] = []
        if len(self.records) != self.n - len(self.final_active):
            issues.append(
                f"{len(self.records)} records but n - |final_active| = {self.n - len(self.final_active)}"
            )
        alive = np.ones(self.n, dtype=bool)
        for idx, r in enumerate(self.records):
            if r.step != idx + 1:
                issues.append(f"record {idx}: step {r.step}, expected {idx + 1}")
            if not (0 <= r.left < r.right < self.n):
                issues.append(f"record {idx}: ids ({r.left}, {r.right}) not ordered or out of range")
                continue
            if r.new != r.left:
                issues.append(f"record {idx}: new id {r.new} differs from left id {r.left}")
            if not (alive[r.left] and alive[r.right]):
                issues.append(f"record {idx}: merges an inactive cluster")
            if not (r.height >= 0 and math.isfinite(r.height)):
                issues.append(f"record {idx}: invalid height {r.height!r}")
            alive[r.right] = False
        if sorted(self.final_active) != list(np.flatnonzero(alive)):
            issues.append("final_active does not match the clusters left alive by the records")
        return issues

    def validate(self) -> dict:
        return {
            "structural": self.structural_issues(),
            "monotonicity_violations": self.monotonicity_violations(),
        }

    def prefix(self, k: int) -> "MergeTrace":
        """The trace of the same build stopped at ``k`` active clusters."""
        if not self.stop_at <= k <= self.n:
            raise ValidationError(f"k={k} outside [{self.stop_at}, {self.n}] covered by this trace")
        recs = self.records[: self.n - k]
        alive = np.ones(self.n, dtype=bool)
        for r in recs:
            alive[r.right] = False
        return MergeTrace(self.n, self.linkage, list(recs), [int(i) for i in np.flatnonzero(alive)])

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "linkage": self.linkage.label,
            "records": [
                {"step": r.step, "left": r.left, "right": r.right, "new": r.new, "height": r.height}
                for r in self.records
            ],
            "final_active": list(self.final_active),
        }

    @classmethod
    def from_arrays(cls, n, kind, left, right, height) -> "MergeTrace":
        recs = [
            MergeRecord(i + 1, int(a), int(b), int(a), float(h))
            for i, (a, b, h) in enumerate(zip(left.tolist(), right.tolist(), height.tolist()))
        ]
        alive = np.ones(n, dtype=bool)
        alive[np.asarray(right, dtype=np.int64)] = False
        return cls(n, LinkageKind.parse(kind), recs, [int(i) for i in np.flatnonzero(alive)])


# --- indexed binary heap over cluster ids, ordered by (mind[id], id) -------


@nb.njit(cache=True, inline="always")
def _less(mind, a, b):
    return mind[a] < mind[b] or (mind[a] == mind[b] and a < b)


@nb.njit(cache=True)
def _sift_up(heap, pos, mind, p):
    node = heap[p]
    while p > 0:
        parent = (p - 1) >> 1
        if _less(mind, node, heap[parent]):
            heap[p] = heap[parent]
            pos[heap[p]] = p
            p = parent
        else:
            break
    heap[p] = node
    pos[node] = p


@nb.njit(cache=True)
def _sift_down(heap, pos, mind, p, size):
    node = heap[p]
    while True:
        c = 2 * p + 1
        if c >= size:
            break
        if c + 1 < size and _less(mind, heap[c + 1], heap[c]):
            c += 1
        if _less(mind, heap[c], node):
            heap[p] = heap[c]
            pos[heap[p]] = p
            p = c
        else:
            break
    heap[p] = node
    pos[node] = p


@nb.njit(cache=True)
def _heap_remove(heap, pos, mind, node, size):
    p = pos[node]
    size -= 1
    pos[node] = -1
    if p != size:
        moved = heap[size]
        heap[p] = moved
        pos[moved] = p
        _sift_up(heap, pos, mind, p)
        _sift_down(heap, pos, mind, pos[moved], size)
    return size


@nb.njit(cache=True)
def _heap_fix(heap, pos, mind, node, size):
    p = pos[node]
    _sift_up(heap, pos, mind, p)
    _sift_down(heap, pos, mind, pos[node], size)


@nb.njit(cache=True)
def _scan_row(dist, n, nxt, i):
    best = np.inf
    bj = -1
    j = nxt[i]
    base = condensed_index(n, i, i + 1) - i - 1
    while j < n:
        v = dist[base + j]
        if v < best:
            best = v
            bj = j
        j = nxt[j]
    return best, bj


@nb.njit(cache=True)
def _agglomerate(dist, n, n_merges, kind, out_left, out_right, out_height):
    nxt = np.arange(1, n + 1)
    prv = np.arange(-1, n - 1)
    active = np.ones(n, dtype=np.bool_)
    size = np.ones(n, dtype=np.float64)
    nn = np.full(n, -1, dtype=np.int64)
    mind = np.full(n, np.inf)
    heap = np.empty(n, dtype=np.int64)
    pos = np.full(n, -1, dtype=np.int64)

    hsize = 0
    for i in range(n - 1):
        best, bj = _scan_row(dist, n, nxt, i)
        nn[i] = bj
        mind[i] = best
        heap[hsize] = i
        pos[i] = hsize
        hsize += 1
    for p in range(hsize // 2 - 1, -1, -1):
        _sift_down(heap, pos, mind, p, hsize)

    rescans = 0
    for step in range(n_merges):
        # pop until the top entry's cached partner is live and exact
        while True:
            s = heap[0]
            t = nn[s]
            if t >= 0 and active[t] and dist[condensed_index(n, s, t)] == mind[s]:
                break
            rescans += 1
            best, bj = _scan_row(dist, n, nxt, s)
            if bj < 0:
                hsize = _heap_remove(heap, pos, mind, s, hsize)
                continue
            mind[s] = best
            nn[s] = bj
            _heap_fix(heap, pos, mind, s, hsize)

        out_left[step] = s
        out_right[step] = t
        out_height[step] = mind[s]

        size_s = size[s]
        size_t = size[t]
        u = 0
        while u < n:
            if u != s and u != t:
                if u < s:
                    i_su = condensed_index(n, u, s)
                else:
                    i_su = condensed_index(n, s, u)
                if u < t:
                    d_tu = dist[condensed_index(n, u, t)]
                else:
                    d_tu = dist[condensed_index(n, t, u)]
                d_su = dist[i_su]
                if kind == 0:
                    new = _lw_average(d_su, d_tu, size_s, size_t)
                elif kind == 1:
                    new = d_su if d_su <= d_tu else d_tu
                else:
                    new = d_su if d_su >= d_tu else d_tu
                dist[i_su] = new
                if u < s and (new < mind[u] or (new == mind[u] and s < nn[u])):
                    mind[u] = new
                    nn[u] = s
                    _heap_fix(heap, pos, mind, u, hsize)
            u = nxt[u]

        # deactivate t
        active[t] = False
        size[s] = size_s + size_t
        nxt[prv[t]] = nxt[t]
        if nxt[t] < n:
            prv[nxt[t]] = prv[t]
        if pos[t] >= 0:
            hsize = _heap_remove(heap, pos, mind, t, hsize)

        best, bj = _scan_row(dist, n, nxt, s)
        if bj < 0:
            if pos[s] >= 0:
                hsize = _heap_remove(heap, pos, mind, s, hsize)
        else:
            mind[s] = best
            nn[s] = bj
            _heap_fix(heap, pos, mind, s, hsize)
    return rescans


def build(cb: Codebook, stop_at: int = 1, kind=LinkageKind.AVERAGE, threads: int = 1) -> MergeTrace:
    """Agglomerate ``cb`` until ``stop_at`` clusters remain."""
    kind = LinkageKind.parse(kind)
    n = cb.n
    if not 1 <= stop_at <= n:
        raise ValidationError(f"stop_at={stop_at} outside [1, {n}]")
    t0 = time.perf_counter()
    dist = pairwise_matrix(cb, threads=threads)
    t1 = time.perf_counter()
    n_merges = n - stop_at
    left = np.empty(n_merges, dtype=np.int64)
    right = np.empty(n_merges, dtype=np.int64)
    height = np.empty(n_merges, dtype=np.float64)
    rescans = _agglomerate(dist, n, n_merges, int(kind), left, right, height)
    t2 = time.perf_counter()
    del dist

    trace = MergeTrace.from_arrays(n, kind, left, right, height)
    if n_merges > 1:
        drops = np.flatnonzero(height[1:] < height[:-1])
        # reducible linkages never decrease; rounding in the weighted mean can
        # only produce last-ulp dips between tied heights
        for i in drops:
            if height[i] - height[i + 1] > 1e-12 * max(height[i], 1e-300):
                raise AssertionError(f"merge height decreased at step {i + 2}: {height[i]!r} -> {height[i + 1]!r}")
    trace.stats = {
        "distance_seconds": t1 - t0,
        "merge_seconds": t2 - t1,
        "rescans": int(rescans),
        "distance_store_bytes": 8 * (n * (n - 1) // 2),
    }
    return trace


def save_trace(t: MergeTrace, path: str | Path) -> None:
    Path(path).write_text(json.dumps(t.to_dict(), separators=(",", ":")) + "\n", encoding="utf-8")


def _req(obj: dict, key: str, where: str):
    if not isinstance(obj, dict) or key not in obj:
        raise FormatError(f"{where}: missing field {key!r}")
    return obj[key]


def trace_from_dict(doc: dict) -> MergeTrace:
    n = _req(doc, "n", "trace")
    if not isinstance(n, int) or n < 1:
        raise FormatError(f"trace: invalid n {n!r}")
    try:
        kind = LinkageKind.parse(_req(doc, "linkage", "trace"))
    except ValidationError as exc:
        raise FormatError(f"trace: {exc}") from None
    raw = _req(doc, "records", "trace")
    if not isinstance(raw, list):
        raise FormatError("trace: records must be a list")
    records = []
    for idx, r in enumerate(raw):
        where = f"trace record {idx}"
        vals = [_req(r, key, where) for key in ("step", "left", "right", "new")]
        h = _req(r, "height", where)
        if not all(isinstance(v, int) and not isinstance(v, bool) for v in vals):
            raise FormatError(f"{where}: ids must be integers")
        if not isinstance(h, (int, float)) or isinstance(h, bool):
            raise FormatError(f"{where}: height must be a number")
        records.append(MergeRecord(vals[0], vals[1], vals[2], vals[3], float(h)))
    final = _req(doc, "final_active", "trace")
    if not isinstance(final, list) or not all(isinstance(v, int) for v in final):
        raise FormatError("trace: final_active must be a list of integers")
    t = MergeTrace(n, kind, records, list(final))
    issues = t.structural_issues()
    if issues:
        raise FormatError(f"trace is malformed: {issues[0]}")
    return t


def load_trace(path: str | Path) -> MergeTrace:
    text = Path(path).read_text(encoding="utf-8")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: not valid trace JSON ({exc.msg} at char {exc.pos})") from None
    return trace_from_dict(doc)
