"""Independent reference computations used only by the tests.

Each oracle takes a different route from the package code: exact rationals,
closed-form sums, brute-force state enumeration, or exact integration.
"""
from __future__ import annotations

import itertools
import math
from fractions import Fraction


def recurrence_direct(capacity: int, a: Fraction) -> list[Fraction]:
    """Unnormalized P_k = (a/3)(P_{k-1} + P_{k-2} + P_{k-3}) with P_0 = 1, in exact rationals, then normalized."""
    p = [Fraction(1)]
    for k in range(1, capacity + 1):
        p.append(a / 3 * sum(p[k - j] for j in (1, 2, 3) if k - j >= 0))
    total = sum(p)
    return [x / total for x in p]


def erlang_b_closed(servers: int, load: float) -> float:
    """(A^c / c!) / sum_k A^k / k!, summed in log space for stability."""
    if load == 0:
        return 0.0
    logs = [k * math.log(load) - math.lgamma(k + 1) for k in range(servers + 1)]
    m = max(logs)
    return math.exp(logs[-1] - m) / sum(math.exp(x - m) for x in logs)


def multirate_bruteforce(capacity: int, loads, demands) -> list[float]:
    """Complete-sharing blocking by enumerating every feasible occupancy vector of the product-form chain."""
    ranges = [range(capacity // b + 1) for b in demands]
    weight = {}
    for n in itertools.product(*ranges):
        used = sum(ni * b for ni, b in zip(n, demands))
        if used > capacity:
            continue
        w = 1.0
        for ni, rho in zip(n, loads):
            w *= rho**ni / math.factorial(ni)
        weight[n] = (w, used)
    total = sum(w for w, _ in weight.values())
    return [sum(w for w, used in weight.values() if capacity - used < b) / total for b in demands]


def _tri(x, left, peak, right):
    if x <= left or x >= right:
        return 0.0
    return (x - left) / (peak - left) if x <= peak else (right - x) / (right - peak)


def mamdani_centroid_exact(activations, output_sets, lo=0.0, hi=1.0) -> float:
    """Continuous centroid of max_r min(w_r, tri_r(y)) on [lo, hi].

    The aggregate is piecewise linear, so after collecting every breakpoint
    (vertices, clip levels and pairwise crossings) each piece is integrated
    exactly with Simpson's rule.
    """
    lines = []  # linear pieces (slope, intercept, x0, x1) of every clipped set
    points = {lo, hi}
    for w, (left, peak, right) in zip(activations, output_sets):
        if w <= 0:
            continue
        points.update((left, peak, right))
        points.add(left + w * (peak - left))
        points.add(right - w * (right - peak))
        up = 1.0 / (peak - left)
        down = -1.0 / (right - peak)
        lines += [(up, -left * up, left, peak), (down, -right * down, peak, right), (0.0, w, left, right)]
    for (s1, c1, a1, b1), (s2, c2, a2, b2) in itertools.combinations(lines, 2):
        if s1 != s2:
            x = (c2 - c1) / (s1 - s2)
            if max(a1, a2) <= x <= min(b1, b2):
                points.add(x)
    xs = sorted(p for p in points if lo <= p <= hi)

    def agg(y):
        return max((min(w, _tri(y, *s)) for w, s in zip(activations, output_sets) if w > 0), default=0.0)

    num = den = 0.0
    for x0, x1 in zip(xs, xs[1:]):
        xm = 0.5 * (x0 + x1)
        f0, fm, f1 = agg(x0), agg(xm), agg(x1)
        h = (x1 - x0) / 6.0
        den += h * (f0 + 4 * fm + f1)
        num += h * (x0 * f0 + 4 * xm * fm + x1 * f1)
    return num / den


def sigmoid(z: float) -> float:
    return 1.0 / (1.0 + math.exp(-z))
