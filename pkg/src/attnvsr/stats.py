"""Mann-Whitney U rank test for two independent samples."""

from __future__ import annotations

import math
from collections import defaultdict
from typing import Sequence

EXACT_MAX_TOTAL = 20


def rankdata(values: Sequence[float]) -> list[float]:
    """1-based ranks, ties get the mean of the ranks they span."""
    order = sorted(range(len(values)), key=lambda k: values[k])
    ranks = [0.0] * len(values)
    i = 0
    while i < len(order):
        j = i
        while j + 1 < len(order) and values[order[j + 1]] == values[order[i]]:
            j += 1
        mid = (i + j) / 2.0 + 1.0
        for k in range(i, j + 1):
            ranks[order[k]] = mid
        i = j + 1
    return ranks


def _exact_two_sided(doubled_ranks: list[int], n1: int, observed_doubled_sum: int) -> float:
    """P(|R - E R| >= |r_obs - E R|) by counting rank subsets of size n1.

    Ranks are doubled so tied midranks stay integral.
    """
    # ways[k][s]: number of k-subsets whose doubled rank sum is s
    ways = [defaultdict(int) for _ in range(n1 + 1)]
    ways[0][0] = 1
    for r in doubled_ranks:
        for k in range(min(n1, len(doubled_ranks)) - 1, -1, -1):
            for s, c in list(ways[k].items()):
                ways[k + 1][s + r] += c
    total = math.comb(len(doubled_ranks), n1)
    mean2 = n1 * sum(doubled_ranks)  # n * E[doubled sum], kept integral
    n = len(doubled_ranks)
    obs_dev = abs(n * observed_doubled_sum - mean2)
    hits = sum(c for s, c in ways[n1].items() if abs(n * s - mean2) >= obs_dev)
    return min(1.0, hits / total)


def mann_whitney_u(sample_a: Sequence[float], sample_b: Sequence[float]) -> tuple[float, float]:
    """U statistic of ``sample_a`` and the two-sided p-value.

    Exact (tie-aware) when the combined size is at most 20, otherwise the
    tie-corrected normal approximation with continuity correction.
    """
    a = [float(x) for x in sample_a]
    b = [float(x) for x in sample_b]
    if not a or not b:
        raise ValueError("both samples must be non-empty")
    n1, n2 = len(a), len(b)
    ranks = rankdata(a + b)
    r1 = sum(ranks[:n1])
    u1 = r1 - n1 * (n1 + 1) / 2.0
    if n1 + n2 <= EXACT_MAX_TOTAL:
        doubled = [int(round(2 * r)) for r in ranks]
        return u1, _exact_two_sided(doubled, n1, sum(doubled[:n1]))

    n = n1 + n2
    counts = defaultdict(int)
    for r in ranks:
        counts[r] += 1
    tie_term = sum(t**3 - t for t in counts.values())
    var = n1 * n2 / 12.0 * ((n + 1) - tie_term / (n * (n - 1)))
    if var <= 0:
        return u1, 1.0
    mean = n1 * n2 / 2.0
    z = (abs(u1 - mean) - 0.5) / math.sqrt(var)
    if z <= 0:
        return u1, 1.0
    return u1, min(1.0, math.erfc(z / math.sqrt(2.0)))
