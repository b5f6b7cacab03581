"""Steady-state blocking for the three-class loss cell.

Two families live here. The recurrence model P_k = (a/3)(P_{k-1} + P_{k-2} +
P_{k-3}) with its per-class and aggregate read-outs, and exact oracles
(Erlang-B, Kaufman-Roberts) used to validate the simulator and to measure how
far the recurrence model is from the true complete-sharing system.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .traffic import TrafficClass

PAPER = "paper"
CUMULATIVE = "cumulative"
EXACT = "exact"
MODES = (PAPER, CUMULATIVE)

CSV_HEADER = ("utilization", "mode", "b_type1", "b_type2", "b_type3", "aggregate")

# rescale threshold for unnormalized recurrences; far below float64 overflow
_RESCALE_AT = 1e200


class AnalyticError(ValueError):
    pass


@dataclass(frozen=True)
class StateDistribution:
    probs: np.ndarray
    capacity: int
    utilization: float

    def __post_init__(self):
        if self.probs.shape != (self.capacity + 1,):
            raise AnalyticError("probs must have length capacity + 1")


@dataclass(frozen=True)
class BlockingReport:
    per_class: tuple[float, ...]
    aggregate: float
    mode: str
    utilization: float = float("nan")


def solve_recurrence(capacity: int, a: float) -> StateDistribution:
    """Occupancy distribution of the three-term recurrence, normalized to 1.

    P_0 is seeded with 1 and P_k = 0 for k < 0; the unnormalized values are
    divided by their sum once at the end.
    """
    if int(capacity) != capacity or capacity < 3:
        raise AnalyticError(f"capacity N must be >= 3 for the recurrence, got {capacity!r}")
    if not np.isfinite(a) or a < 0:
        raise AnalyticError(f"utilization a must be >= 0, got {a!r}")
    n = int(capacity)
    p = np.zeros(n + 1)
    p[0] = 1.0
    c = a / 3.0
    for k in range(1, n + 1):
        s = p[k - 1]
        if k >= 2:
            s += p[k - 2]
        if k >= 3:
            s += p[k - 3]
        p[k] = c * s
        if p[k] > _RESCALE_AT:
            p[: k + 1] /= p[k]
    return StateDistribution(probs=p / p.sum(), capacity=n, utilization=float(a))


def class_blocking(dist: StateDistribution, mode: str = PAPER, demands: Sequence[int] = (1, 2, 3)) -> BlockingReport:
    """Per-class blocking read off the top occupancy states.

    ``paper`` takes single states (type1 = P_N, type2 = P_{N-1}, type3 =
    P_{N-2}) and the aggregate from the three-term formula. ``cumulative``
    sums every state with fewer than b_i free channels and averages the
    classes (equal arrival rates).
    """
    n = dist.capacity
    if n < 3:
        raise AnalyticError("capacity N must be >= 3")
    p = dist.probs
    if mode == PAPER:
        per = (float(p[n]), float(p[n - 1]), float(p[n - 2]))
        agg = aggregate_blocking(dist, dist.utilization)
    elif mode == CUMULATIVE:
        per = tuple(float(p[n - b + 1 :].sum()) for b in demands)
        agg = float(np.mean(per))
    else:
        raise AnalyticError(f"unknown mode {mode!r}; expected one of {MODES}")
    return BlockingReport(per_class=per, aggregate=agg, mode=mode, utilization=dist.utilization)


def aggregate_blocking(dist: StateDistribution, a: float) -> float:
    if a < 0:
        raise AnalyticError(f"utilization a must be >= 0, got {a!r}")
    n = dist.capacity
    p = dist.probs
    return float(a / 3.0 * (p[n] + p[n - 1] + p[n - 2]))


def erlang_b(servers: int, offered_load: float) -> float:
    """Erlang-B blocking by E(k) = a E(k-1) / (k + a E(k-1)), E(0) = 1."""
    if servers < 1:
        raise AnalyticError("servers must be >= 1")
    if offered_load < 0:
        raise AnalyticError("offered_load must be >= 0")
    e = 1.0
    for k in range(1, int(servers) + 1):
        e = offered_load * e / (k + offered_load * e)
    return e


def kaufman_roberts(capacity: int, loads: Sequence[float], demands: Sequence[int]) -> np.ndarray:
    """Normalized occupancy distribution q(0..C) of a complete-sharing multirate loss system."""
    c = int(capacity)
    q = np.zeros(c + 1)
    q[0] = 1.0
    for k in range(1, c + 1):
        s = 0.0
        for rho, b in zip(loads, demands):
            if k >= b:
                s += rho * b * q[k - b]
        q[k] = s / k
        if q[k] > _RESCALE_AT:
            q[: k + 1] /= q[k]
    return q / q.sum()


def multirate_exact(capacity: int, classes: Sequence[TrafficClass]) -> BlockingReport:
    """Exact per-class blocking under capacity-only admission."""
    demands = [c.channel_demand for c in classes]
    if capacity < max(demands):
        raise AnalyticError(f"capacity {capacity} < largest demand {max(demands)}")
    loads = [c.arrival_rate / c.service_rate for c in classes]
    q = kaufman_roberts(capacity, loads, demands)
    per = tuple(float(q[capacity - b + 1 :].sum()) for b in demands)
    rates = np.array([c.arrival_rate for c in classes])
    agg = float(np.dot(rates, per) / rates.sum()) if rates.sum() > 0 else 0.0
    return BlockingReport(per_class=per, aggregate=agg, mode=EXACT)


def sweep_analytic(grid: Iterable[float], capacity: int, mode: str = PAPER) -> list[BlockingReport]:
    return [class_blocking(solve_recurrence(capacity, a), mode) for a in grid]


def sweep_to_csv(reports: Sequence[BlockingReport]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for r in reports:
        w.writerow([repr(float(r.utilization)), r.mode, *(repr(x) for x in r.per_class), repr(r.aggregate)])
    return buf.getvalue()
