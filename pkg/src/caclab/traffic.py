"""Traffic classes, scenarios and the random streams that drive them."""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

CLASS_NAMES = ("conversational", "interactive", "background")

# default stream ids; each class i additionally owns streams (ARRIVAL, i) and (HOLDING, i)
ARRIVAL_STREAM = 0
HOLDING_STREAM = 1


class ScenarioError(ValueError):
    pass


@dataclass(frozen=True)
class TrafficClass:
    id: int
    name: str
    channel_demand: int
    arrival_rate: float
    service_rate: float

    def __post_init__(self):
        if int(self.channel_demand) != self.channel_demand or self.channel_demand < 1:
            raise ScenarioError(f"channel_demand must be a positive integer, got {self.channel_demand!r}")
        # a zero arrival rate is allowed so that an idle class can be swept through a=0
        if not np.isfinite(self.arrival_rate) or self.arrival_rate < 0:
            raise ScenarioError(f"arrival_rate must be finite and >= 0, got {self.arrival_rate!r}")
        if not np.isfinite(self.service_rate) or self.service_rate <= 0:
            raise ScenarioError(f"service_rate must be finite and > 0, got {self.service_rate!r}")

    @property
    def utilization(self) -> float:
        return utilization(self)


@dataclass(frozen=True)
class Scenario:
    classes: tuple[TrafficClass, ...]
    capacity: int
    aggregate_utilization: float = field(default=float("nan"))

    def __post_init__(self):
        object.__setattr__(self, "classes", tuple(self.classes))
        if not self.classes:
            raise ScenarioError("scenario needs at least one traffic class")
        if self.capacity < max(c.channel_demand for c in self.classes):
            raise ScenarioError(
                f"capacity {self.capacity} is smaller than the largest channel demand "
                f"{max(c.channel_demand for c in self.classes)}"
            )
        if np.isnan(self.aggregate_utilization):
            mean = float(np.mean([utilization(c) for c in self.classes]))
            object.__setattr__(self, "aggregate_utilization", mean)

    @property
    def demands(self) -> np.ndarray:
        return np.array([c.channel_demand for c in self.classes], dtype=np.int64)

    @property
    def arrival_rates(self) -> np.ndarray:
        return np.array([c.arrival_rate for c in self.classes], dtype=np.float64)

    @property
    def service_rates(self) -> np.ndarray:
        return np.array([c.service_rate for c in self.classes], dtype=np.float64)

    @property
    def offered_loads(self) -> np.ndarray:
        return self.arrival_rates / self.service_rates

    def to_dict(self) -> dict:
        return {
            "capacity": int(self.capacity),
            "aggregate_utilization": float(self.aggregate_utilization),
            "classes": [
                {
                    "id": c.id,
                    "name": c.name,
                    "demand": int(c.channel_demand),
                    "arrival_rate": float(c.arrival_rate),
                    "service_rate": float(c.service_rate),
                }
                for c in self.classes
            ],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Scenario":
        try:
            classes = tuple(
                TrafficClass(
                    id=int(c["id"]),
                    name=str(c["name"]),
                    channel_demand=int(c["demand"]),
                    arrival_rate=float(c["arrival_rate"]),
                    service_rate=float(c["service_rate"]),
                )
                for c in data["classes"]
            )
            return cls(
                classes=classes,
                capacity=int(data["capacity"]),
                aggregate_utilization=float(data.get("aggregate_utilization", float("nan"))),
            )
        except (KeyError, TypeError) as exc:
            raise ScenarioError(f"malformed scenario config: {exc}") from exc


def utilization(cls: TrafficClass) -> float:
    """Offered load of one class, lambda / mu."""
    return cls.arrival_rate / cls.service_rate


def substream(seed: int, *stream_id: int) -> np.random.Generator:
    """Independent generator for ``(seed, *stream_id)``.

    Streams with different ids never overlap; the same id always replays the
    same sequence.
    """
    seq = np.random.SeedSequence(int(seed), spawn_key=tuple(int(s) for s in stream_id))
    return np.random.Generator(np.random.PCG64(seq))


def sample_interarrival(cls: TrafficClass, rng: np.random.Generator, size=None):
    if cls.arrival_rate == 0:
        return np.inf if size is None else np.full(size, np.inf)
    return rng.exponential(1.0 / cls.arrival_rate, size=size)


def sample_holding(cls: TrafficClass, rng: np.random.Generator, size=None):
    return rng.exponential(1.0 / cls.service_rate, size=size)


def build_equal_rate_scenario(a: float, capacity: int, service_rate: float = 1.0) -> Scenario:
    """Three classes with demands 1, 2, 3 and lambda_i = a * mu for every class."""
    if not np.isfinite(a) or a < 0:
        raise ScenarioError(f"utilization a must be >= 0, got {a!r}")
    if int(capacity) != capacity or capacity < 3:
        raise ScenarioError(f"capacity must be an integer >= 3, got {capacity!r}")
    classes = tuple(
        TrafficClass(
            id=i + 1,
            name=CLASS_NAMES[i],
            channel_demand=i + 1,
            arrival_rate=a * service_rate,
            service_rate=service_rate,
        )
        for i in range(3)
    )
    return Scenario(classes=classes, capacity=int(capacity), aggregate_utilization=float(a))


def per_class_load(u: float, capacity: int, n_classes: int = 3) -> float:
    """Per-class offered load that makes the cell's aggregate utilization ``u``.

    Aggregate utilization is the total offered call load normalised by the
    channel count, sum_i(lambda_i / mu) / N, so ``u = 1`` offers one call per
    channel.
    """
    return u * capacity / n_classes


def build_normalized_scenario(u: float, capacity: int) -> Scenario:
    """Equal-rate scenario whose aggregate utilization (calls per channel) is ``u``."""
    if not np.isfinite(u) or u < 0:
        raise ScenarioError(f"aggregate utilization must be >= 0, got {u!r}")
    base = build_equal_rate_scenario(per_class_load(u, capacity), capacity)
    return Scenario(base.classes, base.capacity, aggregate_utilization=float(u))


def single_class_scenario(capacity: int, load: float, demand: int = 1) -> Scenario:
    cls = TrafficClass(id=1, name=CLASS_NAMES[0], channel_demand=demand, arrival_rate=load, service_rate=1.0)
    return Scenario(classes=(cls,), capacity=capacity)


def load_scenario(path: str | Path) -> Scenario:
    with open(path, encoding="utf-8") as fh:
        data = yaml.safe_load(fh)
    if not isinstance(data, dict):
        raise ScenarioError(f"{path}: expected a mapping at top level")
    if "scenario" in data:
        data = data["scenario"]
    return Scenario.from_dict(data)


def save_scenario(scenario: Scenario, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        yaml.safe_dump({"scenario": scenario.to_dict()}, fh, sort_keys=False)

