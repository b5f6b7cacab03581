"""Admission policies: complete sharing, free-channel thresholds, and a Mamdani fuzzy controller.

Every policy here decides from the number of free channels and the demand of
the arriving class only, so besides ``decide`` each one can render itself as
an ``(N + 1, K)`` admit table indexed by free channels, which is what the
simulation kernel consumes.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .traffic import TrafficClass

ADMIT = "admit"
REJECT = "reject"

REASON_CAPACITY = "capacity"
REASON_THRESHOLD = "threshold-region"
REASON_SCORE = "policy-score"

SCORE_THRESHOLD = 0.5


class PolicyError(ValueError):
    pass


@dataclass(frozen=True)
class SystemState:
    capacity: int
    occupied_per_class: tuple[int, ...]
    demands: tuple[int, ...] = (1, 2, 3)

    def __post_init__(self):
        object.__setattr__(self, "occupied_per_class", tuple(int(n) for n in self.occupied_per_class))
        object.__setattr__(self, "demands", tuple(int(b) for b in self.demands))
        if len(self.occupied_per_class) != len(self.demands):
            raise PolicyError("occupied_per_class and demands must have the same length")
        if any(n < 0 for n in self.occupied_per_class):
            raise PolicyError("occupied counts must be nonnegative")
        if not 0 <= self.free_channels <= self.capacity:
            raise PolicyError(f"occupancy {self.occupied_channels} exceeds capacity {self.capacity}")

    @property
    def occupied_channels(self) -> int:
        return sum(n * b for n, b in zip(self.occupied_per_class, self.demands))

    @property
    def free_channels(self) -> int:
        return self.capacity - self.occupied_channels

    @property
    def occupancy_ratio(self) -> float:
        return self.occupied_channels / self.capacity


@dataclass(frozen=True)
class AdmissionDecision:
    verdict: str
    reason: str | None = None

    def __post_init__(self):
        if self.verdict not in (ADMIT, REJECT):
            raise PolicyError(f"bad verdict {self.verdict!r}")
        if self.verdict == REJECT and not self.reason:
            raise PolicyError("a rejection must carry a reason")

    @property
    def admitted(self) -> bool:
        return self.verdict == ADMIT


_ADMIT = AdmissionDecision(ADMIT)


def _reject(reason: str) -> AdmissionDecision:
    return AdmissionDecision(REJECT, reason)


@dataclass(frozen=True)
class ThresholdSet:
    """Free-channel triggers: class k (1-based) is eligible only while free >= A_k."""

    A1: int
    A2: int
    A3: int

    def __post_init__(self):
        if not 0 < self.A1 < self.A2 < self.A3:
            raise PolicyError(f"thresholds must satisfy 0 < A1 < A2 < A3, got {self.as_tuple()}")

    def as_tuple(self) -> tuple[int, int, int]:
        return (self.A1, self.A2, self.A3)

    def check_capacity(self, capacity: int) -> None:
        if self.A3 > capacity:
            raise PolicyError(f"A3={self.A3} exceeds capacity {capacity}")

    def eligible(self, free: int, class_id: int) -> bool:
        return free >= self.as_tuple()[class_id - 1]

    @classmethod
    def parse(cls, text: str) -> "ThresholdSet":
        try:
            a1, a2, a3 = (int(x) for x in text.split(","))
        except ValueError as exc:
            raise PolicyError(f"thresholds must look like 'A1,A2,A3', got {text!r}") from exc
        return cls(a1, a2, a3)


def decide_conventional(state: SystemState, cls: TrafficClass) -> AdmissionDecision:
    if state.free_channels >= cls.channel_demand:
        return _ADMIT
    return _reject(REASON_CAPACITY)


def decide_threshold(state: SystemState, cls: TrafficClass, t: ThresholdSet) -> AdmissionDecision:
    f = state.free_channels
    if not t.eligible(f, cls.id):
        return _reject(REASON_THRESHOLD)
    if f < cls.channel_demand:
        return _reject(REASON_CAPACITY)
    return _ADMIT


# -- fuzzy controller --------------------------------------------------------


def triangular(x, left: float, peak: float, right: float):
    """Triangular membership; vectorized over ``x``."""
    x = np.asarray(x, dtype=np.float64)
    up = (x - left) / (peak - left)
    down = (right - x) / (right - peak)
    return np.clip(np.minimum(up, down), 0.0, 1.0)


DEFAULT_OCCUPANCY_SETS = {
    "Low": (-0.5, 0.0, 0.5),
    "Medium": (0.0, 0.5, 1.0),
    "High": (0.5, 1.0, 1.5),
}
DEFAULT_DEMAND_SETS = {
    "Light": (0.0, 1.0, 2.0),
    "Medium": (1.0, 2.0, 3.0),
    "Heavy": (2.0, 3.0, 4.0),
}
DEFAULT_OUTPUT_SETS = {
    "Reject": (-0.15, 0.1, 0.35),
    "Weak": (0.2, 0.5, 0.8),
    "StronglyAdmit": (0.5, 0.9, 1.3),
}
# (occupancy, demand) -> output; the rule base is hand-designed, not published
DEFAULT_RULES = (
    ("Low", "Light", "StronglyAdmit"),
    ("Medium", "Light", "StronglyAdmit"),
    ("High", "Light", "Weak"),
    ("Low", "Medium", "StronglyAdmit"),
    ("Medium", "Medium", "StronglyAdmit"),
    ("High", "Medium", "Weak"),
    ("Low", "Heavy", "StronglyAdmit"),
    ("Medium", "Heavy", "StronglyAdmit"),
    ("High", "Heavy", "Reject"),
)


@dataclass(frozen=True)
class FuzzySystem:
    occupancy_sets: Mapping[str, tuple[float, float, float]] = field(default_factory=lambda: dict(DEFAULT_OCCUPANCY_SETS))
    demand_sets: Mapping[str, tuple[float, float, float]] = field(default_factory=lambda: dict(DEFAULT_DEMAND_SETS))
    output_sets: Mapping[str, tuple[float, float, float]] = field(default_factory=lambda: dict(DEFAULT_OUTPUT_SETS))
    rules: tuple[tuple[str, str, str], ...] = DEFAULT_RULES
    grid_points: int = 1001

    def __post_init__(self):
        object.__setattr__(self, "rules", tuple(tuple(r) for r in self.rules))
        if not self.rules:
            raise PolicyError("fuzzy rule base is empty")
        for occ, dem, out in self.rules:
            if occ not in self.occupancy_sets or dem not in self.demand_sets or out not in self.output_sets:
                raise PolicyError(f"rule ({occ}, {dem}, {out}) references an undefined fuzzy set")
        covered = {(o, d) for o, d, _ in self.rules}
        missing = [(o, d) for o in self.occupancy_sets for d in self.demand_sets if (o, d) not in covered]
        if missing:
            raise PolicyError(f"rule base is not total over the input partition; missing {missing}")
        probe = np.linspace(0.0, 1.0, 101)
        if np.any(np.max([triangular(probe, *s) for s in self.occupancy_sets.values()], axis=0) <= 0):
            raise PolicyError("occupancy sets do not cover [0, 1]")
        for d in (1, 2, 3):
            if max(float(triangular(d, *s)) for s in self.demand_sets.values()) <= 0:
                raise PolicyError(f"demand {d} is not covered by any demand set")

    @property
    def grid(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, self.grid_points)

    def to_dict(self) -> dict:
        return {
            "occupancy_sets": {k: list(v) for k, v in self.occupancy_sets.items()},
            "demand_sets": {k: list(v) for k, v in self.demand_sets.items()},
            "output_sets": {k: list(v) for k, v in self.output_sets.items()},
            "rules": [list(r) for r in self.rules],
            "grid_points": self.grid_points,
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "FuzzySystem":
        kw = {}
        for key in ("occupancy_sets", "demand_sets", "output_sets"):
            if key in data:
                kw[key] = {k: tuple(float(x) for x in v) for k, v in data[key].items()}
        if "rules" in data:
            kw["rules"] = tuple(tuple(r) for r in data["rules"])
        if "grid_points" in data:
            kw["grid_points"] = int(data["grid_points"])
        return cls(**kw)


def fuzzy_infer(sys: FuzzySystem, occupancy_ratio: float, demand: int) -> float:
    """Admit score in [0, 1]: min activation, max aggregation, centroid on a fixed grid."""
    if not 0.0 <= occupancy_ratio <= 1.0:
        raise PolicyError(f"occupancy_ratio must lie in [0, 1], got {occupancy_ratio!r}")
    if demand not in (1, 2, 3):
        raise PolicyError(f"demand must be 1, 2 or 3, got {demand!r}")
    g = sys.grid
    agg = np.zeros_like(g)
    for occ, dem, out in sys.rules:
        w = min(float(triangular(occupancy_ratio, *sys.occupancy_sets[occ])), float(triangular(demand, *sys.demand_sets[dem])))
        if w > 0.0:
            np.maximum(agg, np.minimum(w, triangular(g, *sys.output_sets[out])), out=agg)
    # trapezoid weights: the aggregate need not vanish at the ends of the universe
    wts = np.full_like(g, g[1] - g[0])
    wts[[0, -1]] *= 0.5
    total = np.dot(wts, agg)
    if total <= 0.0:
        raise PolicyError("no rule fired; the rule base does not cover this input")
    return float(np.dot(wts * g, agg) / total)


def decide_fuzzy(state: SystemState, cls: TrafficClass, sys: FuzzySystem) -> AdmissionDecision:
    if state.free_channels < cls.channel_demand:
        return _reject(REASON_CAPACITY)
    if fuzzy_infer(sys, state.occupancy_ratio, cls.channel_demand) >= SCORE_THRESHOLD:
        return _ADMIT
    return _reject(REASON_SCORE)


def fuzzy_rule_table(sys: FuzzySystem) -> str:
    """Human-readable dump of memberships and rules."""
    lines = ["input: occupancy ratio"]
    lines += [f"  {k:<14} tri{v}" for k, v in sys.occupancy_sets.items()]
    lines.append("input: channel demand")
    lines += [f"  {k:<14} tri{v}" for k, v in sys.demand_sets.items()]
    lines.append("output: admit score")
    lines += [f"  {k:<14} tri{v}" for k, v in sys.output_sets.items()]
    occ = list(sys.occupancy_sets)
    lookup = {(o, d): out for o, d, out in sys.rules}
    lines.append("rules (rows: demand, columns: occupancy)")
    lines.append("  " + " " * 8 + "".join(f"{o:<15}" for o in occ))
    for d in sys.demand_sets:
        lines.append(f"  {d:<8}" + "".join(f"{lookup[(o, d)]:<15}" for o in occ))
    return "\n".join(lines)


# -- policy objects used by the simulator --------------------------------------


class ConventionalPolicy:
    name = "conventional"

    def decide(self, state: SystemState, cls: TrafficClass) -> AdmissionDecision:
        return decide_conventional(state, cls)

    def admit_table(self, capacity: int, classes: Sequence[TrafficClass]) -> np.ndarray:
        free = np.arange(capacity + 1)[:, None]
        return free >= np.array([c.channel_demand for c in classes])[None, :]


class ThresholdPolicy:
    name = "threshold"

    def __init__(self, thresholds: ThresholdSet):
        self.thresholds = thresholds

    def decide(self, state: SystemState, cls: TrafficClass) -> AdmissionDecision:
        return decide_threshold(state, cls, self.thresholds)

    def admit_table(self, capacity: int, classes: Sequence[TrafficClass]) -> np.ndarray:
        self.thresholds.check_capacity(capacity)
        table = np.zeros((capacity + 1, len(classes)), dtype=bool)
        for k, cls in enumerate(classes):
            for f in range(capacity + 1):
                table[f, k] = self.thresholds.eligible(f, cls.id) and f >= cls.channel_demand
        return table

    def __repr__(self):
        return f"ThresholdPolicy{self.thresholds.as_tuple()}"


class FuzzyPolicy:
    name = "fuzzy"

    def __init__(self, system: FuzzySystem | None = None):
        self.system = system or FuzzySystem()

    def decide(self, state: SystemState, cls: TrafficClass) -> AdmissionDecision:
        return decide_fuzzy(state, cls, self.system)

    def admit_table(self, capacity: int, classes: Sequence[TrafficClass]) -> np.ndarray:
        table = np.zeros((capacity + 1, len(classes)), dtype=bool)
        for k, cls in enumerate(classes):
            b = cls.channel_demand
            for f in range(b, capacity + 1):
                table[f, k] = fuzzy_infer(self.system, (capacity - f) / capacity, b) >= SCORE_THRESHOLD
        return table
