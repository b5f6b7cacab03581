"""Seeded discrete-event simulation of the multi-class loss cell."""
from __future__ import annotations

import heapq
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import _kernels
from .analytic import multirate_exact
from .policies import ConventionalPolicy, SystemState
from .traffic import ARRIVAL_STREAM, HOLDING_STREAM, Scenario, sample_holding, sample_interarrival, substream

log = logging.getLogger(__name__)

Z_95 = 1.959963984540054
VALIDATION_SLACK = 0.005
TRACE_HEADER = "time,kind,class,free_before,decision"


class SimulationError(RuntimeError):
    pass


@dataclass(frozen=True)
class SimConfig:
    total_arrivals: int = 100_000
    warmup_arrivals: int | None = None  # default: 10% of total_arrivals
    seed: int = 0
    replications: int = 1

    def __post_init__(self):
        if self.warmup_arrivals is None:
            object.__setattr__(self, "warmup_arrivals", self.total_arrivals // 10)
        if self.total_arrivals < 1:
            raise ValueError("total_arrivals must be >= 1")
        if not 0 <= self.warmup_arrivals < self.total_arrivals:
            raise ValueError("warmup_arrivals must satisfy 0 <= warmup < total")
        if self.replications < 1:
            raise ValueError("replications must be >= 1")


@dataclass
class Trace:
    time: np.ndarray
    kind: np.ndarray
    cls: np.ndarray
    free_before: np.ndarray
    decision: np.ndarray

    def write(self, path: str | Path) -> None:
        kinds = ("arrival", "departure")
        decisions = {1: "admit", 0: "reject", -1: ""}
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(TRACE_HEADER + "\n")
            for t, k, c, f, d in zip(self.time, self.kind, self.cls, self.free_before, self.decision):
                fh.write(f"{float(t)!r},{kinds[int(k)]},type{int(c) + 1},{int(f)},{decisions[int(d)]}\n")


@dataclass
class Metrics:
    offered: np.ndarray
    blocked: np.ndarray
    blocking: np.ndarray
    aggregate: float
    half_widths: np.ndarray
    aggregate_half_width: float
    replications: int = 1
    warning: str | None = None
    trace: Trace | None = field(default=None, repr=False)

    def interval(self, k: int | None = None) -> tuple[float, float]:
        """95% interval for class ``k``, or the aggregate when ``k`` is None, clipped to [0, 1]."""
        mean, hw = (self.aggregate, self.aggregate_half_width) if k is None else (self.blocking[k], self.half_widths[k])
        return max(0.0, mean - hw), min(1.0, mean + hw)


def _blocking(offered: np.ndarray, blocked: np.ndarray) -> np.ndarray:
    return np.divide(blocked, offered, out=np.zeros(offered.shape), where=offered > 0)


def draw_variates(scenario: Scenario, seed: int, replication: int, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Interarrival and holding samples, one private stream per (replication, kind, class)."""
    k = len(scenario.classes)
    inter = np.empty((k, n))
    hold = np.empty((k, n))
    for i, cls in enumerate(scenario.classes):
        inter[i] = sample_interarrival(cls, substream(seed, replication, ARRIVAL_STREAM, i), size=n)
        hold[i] = sample_holding(cls, substream(seed, replication, HOLDING_STREAM, i), size=n)
    return inter, hold


def _kernel_args(policy, scenario: Scenario):
    n_classes = len(scenario.classes)
    dummy_f = np.zeros(1)
    if hasattr(policy, "admit_table"):
        table = np.ascontiguousarray(policy.admit_table(scenario.capacity, scenario.classes), dtype=np.bool_)
        return (
            _kernels.POLICY_TABLE, table, np.zeros(0), dummy_f, dummy_f, np.zeros(0, dtype=np.int64), dummy_f, 0.0,
            dummy_f, dummy_f, np.ones(1, dtype=np.int64), dummy_f, 1.0, 0.0, 0.5,
        )
    if hasattr(policy, "kernel_arrays"):
        ka = policy.kernel_arrays(scenario)
        return (
            _kernels.POLICY_RRBFN, np.zeros((1, n_classes), dtype=np.bool_), ka["recurrent"], ka["centers_flat"],
            ka["widths_flat"], ka["layer_sizes"], ka["out_w"], ka["out_b"], ka["in_offset"], ka["in_gain"],
            ka["rat_caps"], ka["rat_costs"], ka["cost_norm"], ka["utilization"], ka["score_threshold"],
        )
    raise TypeError(f"{type(policy).__name__} exposes neither admit_table nor kernel_arrays; use run_reference")


def _run_once(scenario: Scenario, policy, config: SimConfig, replication: int, trace: bool = False):
    inter, hold = draw_variates(scenario, config.seed, replication, config.total_arrivals)
    if hasattr(policy, "reset"):
        policy.reset()
    out = _kernels.simulate(
        inter, hold, scenario.demands, int(scenario.capacity), int(config.total_arrivals),
        int(config.warmup_arrivals), *_kernel_args(policy, scenario), bool(trace),
    )
    offered, blocked = out[0], out[1]
    tr = Trace(*out[2:]) if trace else None
    return offered, blocked, tr


def run(scenario: Scenario, policy, config: SimConfig, trace: bool = False) -> Metrics:
    """Single replication (replication index 0 of ``config.seed``)."""
    offered, blocked, tr = _run_once(scenario, policy, config, 0, trace)
    total = offered.sum()
    agg = float(blocked.sum() / total) if total else 0.0
    k = len(scenario.classes)
    return Metrics(offered, blocked, _blocking(offered, blocked), agg, np.zeros(k), 0.0, 1, None, tr)


def replicate(scenario: Scenario, policy, config: SimConfig) -> Metrics:
    """Independent replications; means with 95% normal-approximation half-widths."""
    k = len(scenario.classes)
    reps = config.replications
    per = np.empty((reps, k))
    agg = np.empty(reps)
    offered = np.zeros(k, dtype=np.int64)
    blocked = np.zeros(k, dtype=np.int64)
    for r in range(reps):
        o, b, _ = _run_once(scenario, policy, config, r)
        offered += o
        blocked += b
        per[r] = _blocking(o, b)
        agg[r] = b.sum() / o.sum() if o.sum() else 0.0
    if reps > 1:
        hw = Z_95 * per.std(axis=0, ddof=1) / np.sqrt(reps)
        agg_hw = float(Z_95 * agg.std(ddof=1) / np.sqrt(reps))
        warning = None
    else:
        hw = np.zeros(k)
        agg_hw = 0.0
        warning = "single replication: confidence half-widths are not estimable and reported as 0"
    return Metrics(offered, blocked, per.mean(axis=0), float(agg.mean()), hw, agg_hw, reps, warning)


def run_reference(scenario: Scenario, policy, config: SimConfig, replication: int = 0) -> Metrics:
    """Plain-Python event loop calling ``policy.decide``; slow, for cross-checks and custom policies."""
    inter, hold = draw_variates(scenario, config.seed, replication, config.total_arrivals)
    if hasattr(policy, "reset"):
        policy.reset()
    classes = scenario.classes
    demands = tuple(int(c.channel_demand) for c in classes)
    k = len(classes)
    active = [0] * k
    idx = [0] * k
    next_t = [float(inter[i, 0]) for i in range(k)]
    deps: list[tuple[float, int, int]] = []
    offered = np.zeros(k, dtype=np.int64)
    blocked = np.zeros(k, dtype=np.int64)
    seq = 0
    arrivals = 0
    while arrivals < config.total_arrivals:
        i = min(range(k), key=lambda j: (next_t[j], j))
        t = next_t[i]
        if not np.isfinite(t):
            break
        if deps and deps[0][0] <= t:
            _, _, c = heapq.heappop(deps)
            active[c] -= 1
            continue
        state = SystemState(scenario.capacity, tuple(active), demands)
        admitted = policy.decide(state, classes[i]).admitted
        if admitted and state.free_channels < demands[i]:
            raise SimulationError(f"policy {policy!r} admitted beyond capacity")
        if arrivals >= config.warmup_arrivals:
            offered[i] += 1
            blocked[i] += not admitted
        if admitted:
            active[i] += 1
            heapq.heappush(deps, (t + float(hold[i, idx[i]]), seq, i))
            seq += 1
        idx[i] += 1
        next_t[i] = t + float(inter[i, idx[i]]) if idx[i] < inter.shape[1] else np.inf
        arrivals += 1
    total = offered.sum()
    agg = float(blocked.sum() / total) if total else 0.0
    return Metrics(offered, blocked, _blocking(offered, blocked), agg, np.zeros(k), 0.0)


@dataclass
class ValidationRow:
    class_index: int
    simulated: float
    half_width: float
    exact: float

    @property
    def gap(self) -> float:
        return abs(self.simulated - self.exact)

    @property
    def within(self) -> bool:
        return self.gap <= self.half_width + VALIDATION_SLACK


def validate_against_exact(scenario: Scenario, config: SimConfig, policy=None) -> list[ValidationRow]:
    """Compare simulated complete-sharing blocking with the Kaufman-Roberts oracle, per class."""
    policy = policy if policy is not None else ConventionalPolicy()
    if not isinstance(policy, ConventionalPolicy):
        raise SimulationError("the exact oracle models complete sharing; only the conventional policy can be validated")
    sim = replicate(scenario, policy, config)
    exact = multirate_exact(scenario.capacity, scenario.classes)
    return [ValidationRow(i, float(sim.blocking[i]), float(sim.half_widths[i]), exact.per_class[i]) for i in range(len(scenario.classes))]
