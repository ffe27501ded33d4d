from __future__ import annotations

import numpy as np
import pytest

from masc.codebook import Codebook
from masc.linkage import LinkageKind

ACCEPTANCE_LINES: list[str] = []


def random_codebook(seed: int, n: int, d: int) -> Codebook:
    return Codebook(np.random.default_rng(seed).standard_normal((n, d)))


def naive_lw_build(cb: Codebook, k: int, kind) -> tuple[list[tuple[int, int]], list[float]]:
    """Full-matrix rescan after every merge, incremental updates, same tie rule.

    Serves as the bit-exact reference for the cached-minimum search in the
    production builder: same update arithmetic, no caching.
    """
    kind = LinkageKind.parse(kind)
    x = cb.data
    n = cb.n
    dist = [[0.0] * n for _ in range(n)]
    for i in range(n):
        for j in range(i + 1, n):
            acc = 0.0
            for a, b in zip(x[i].tolist(), x[j].tolist()):
                acc += (a - b) * (a - b)
            dist[i][j] = dist[j][i] = float(np.sqrt(acc))
    size = [1.0] * n
    active = list(range(n))
    pairs, heights = [], []
    for _ in range(n - k):
        best = None
        for ai, s in enumerate(active):
            for t in active[ai + 1:]:
                v = dist[s][t]
                if best is None or v < best[0]:
                    best = (v, s, t)
        v, s, t = best
        pairs.append((s, t))
        heights.append(v)
        for u in active:
            if u in (s, t):
                continue
            if kind is LinkageKind.AVERAGE:
                new = (size[s] * dist[s][u] + size[t] * dist[t][u]) / (size[s] + size[t])
            elif kind is LinkageKind.SINGLE:
                new = min(dist[s][u], dist[t][u])
            else:
                new = max(dist[s][u], dist[t][u])
            dist[s][u] = dist[u][s] = new
        size[s] += size[t]
        active.remove(t)
    return pairs, heights


@pytest.fixture
def three_points() -> Codebook:
    return Codebook(np.array([[0.0], [1.0], [10.0]]))


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
