"""Fuzzy-neural admission control on top of the recurrent RBF network.

The controller reads the heterogeneous network state (per-RAT occupancy),
the request (class one-hot), the offered utilization and a cost bias, and
scores the request with an :class:`~caclab.rrbfn.RrbfnModel`. It is trained
to imitate a load-adaptive threshold oracle whose free-channel thresholds are
found by exhaustive simulated search.
"""
from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import _kernels, rrbfn
from .policies import (
    ADMIT,
    REASON_CAPACITY,
    REASON_SCORE,
    SCORE_THRESHOLD,
    AdmissionDecision,
    SystemState,
    ThresholdPolicy,
    ThresholdSet,
    decide_threshold,
)
from .simulator import SimConfig, replicate, _run_once
from .traffic import Scenario, TrafficClass, build_normalized_scenario

log = logging.getLogger(__name__)

DEFAULT_GRID = tuple(round(0.1 * i, 10) for i in range(1, 10))
DEFAULT_RAT_COSTS = (1.0, 0.8, 0.6)
RAT_NAMES = ("WCDMA", "Wi-Fi", "Wi-Max")
CLASS_ORDER = ("type1", "type2", "type3")
MAX_THRESHOLD = 8


class EnvironmentError_(ValueError):
    pass


@dataclass(frozen=True)
class RatDescriptor:
    id: int
    capacity: int
    current_load: int = 0
    cost_per_channel: float = 1.0

    def __post_init__(self):
        if self.capacity < 1 or not 0 <= self.current_load <= self.capacity:
            raise EnvironmentError_(f"RAT {self.id}: need 0 <= load <= capacity, got {self.current_load}/{self.capacity}")
        if self.cost_per_channel < 0:
            raise EnvironmentError_("cost_per_channel must be >= 0")

    @property
    def occupancy(self) -> float:
        return self.current_load / self.capacity


@dataclass(frozen=True)
class NetworkEnvironment:
    rats: tuple[RatDescriptor, ...]

    def __post_init__(self):
        object.__setattr__(self, "rats", tuple(self.rats))
        if not self.rats:
            raise EnvironmentError_("network environment needs at least one RAT")

    @property
    def capacity(self) -> int:
        return sum(r.capacity for r in self.rats)

    @property
    def max_cost(self) -> float:
        return max(r.cost_per_channel for r in self.rats)


def split_capacity(capacity: int, n_rats: int = 3) -> tuple[int, ...]:
    base, extra = divmod(capacity, n_rats)
    return tuple(base + (1 if i < extra else 0) for i in range(n_rats))


def environment_from_occupancy(occupied: int, rat_caps: Sequence[int], rat_costs: Sequence[float] = DEFAULT_RAT_COSTS) -> NetworkEnvironment:
    """Lay ``occupied`` channels onto the RATs in order, filling each before the next."""
    rats = []
    remaining = occupied
    for i, (cap, cost) in enumerate(zip(rat_caps, rat_costs)):
        load = min(remaining, cap)
        remaining -= load
        rats.append(RatDescriptor(i + 1, int(cap), int(load), float(cost)))
    if remaining:
        raise EnvironmentError_(f"{occupied} occupied channels exceed total RAT capacity {sum(rat_caps)}")
    return NetworkEnvironment(tuple(rats))


def feature_arity(n_rats: int) -> int:
    return n_rats + 5


def extract_features(env: NetworkEnvironment, cls: TrafficClass, a: float, max_demand: int = 3) -> np.ndarray:
    if not env.rats:
        raise EnvironmentError_("empty environment")
    occ = [r.occupancy for r in env.rats]
    least = int(np.argmin(occ))
    onehot = [1.0 if cls.id == k + 1 else 0.0 for k in range(3)]
    cost = cls.channel_demand * env.rats[least].cost_per_channel / (max_demand * env.max_cost)
    return np.array(occ + onehot + [float(a), cost])


# -- oracle --------------------------------------------------------------------


@dataclass(frozen=True)
class ThresholdSchedule:
    """Load-adaptive oracle: the best threshold set at each searched utilization."""

    utilizations: tuple[float, ...]
    thresholds: tuple[ThresholdSet, ...]

    def for_load(self, u: float) -> ThresholdSet:
        i = int(np.argmin(np.abs(np.asarray(self.utilizations) - u)))
        return self.thresholds[i]

    def encode(self) -> str:
        return ";".join(f"{u!r}:{t.A1},{t.A2},{t.A3}" for u, t in zip(self.utilizations, self.thresholds))

    @classmethod
    def decode(cls, text: str) -> "ThresholdSchedule":
        us, ts = [], []
        for item in text.split(";"):
            u, t = item.split(":")
            us.append(float(u))
            ts.append(ThresholdSet.parse(t))
        return cls(tuple(us), tuple(ts))


def candidate_thresholds(max_threshold: int = MAX_THRESHOLD) -> list[ThresholdSet]:
    return [ThresholdSet(*c) for c in itertools.combinations(range(1, max_threshold + 1), 3)]


def search_thresholds(u: float, capacity: int, config: SimConfig, max_threshold: int = MAX_THRESHOLD) -> tuple[ThresholdSet, float]:
    """Exhaustive search over A1 < A2 < A3 <= max_threshold for the lowest simulated aggregate blocking.

    All candidates see the same random numbers; ties go to the earliest candidate.
    """
    scenario = build_normalized_scenario(u, capacity)
    best, best_b = None, np.inf
    for t in candidate_thresholds(max_threshold):
        b = replicate(scenario, ThresholdPolicy(t), config).aggregate
        if b < best_b:
            best, best_b = t, b
    return best, float(best_b)


def search_schedule(grid: Sequence[float], capacity: int, config: SimConfig, max_threshold: int = MAX_THRESHOLD) -> ThresholdSchedule:
    found = [search_thresholds(u, capacity, config, max_threshold)[0] for u in grid]
    return ThresholdSchedule(tuple(float(u) for u in grid), tuple(found))


# -- training data --------------------------------------------------------------


@dataclass
class FeatureMap:
    """Everything needed to turn a cell state into network inputs."""

    capacity: int
    rat_caps: tuple[int, ...]
    rat_costs: tuple[float, ...] = DEFAULT_RAT_COSTS
    offset: np.ndarray | None = None
    gain: np.ndarray | None = None

    def __post_init__(self):
        self.rat_caps = tuple(int(c) for c in self.rat_caps)
        self.rat_costs = tuple(float(c) for c in self.rat_costs)
        if sum(self.rat_caps) != self.capacity:
            raise EnvironmentError_("RAT capacities must add up to the cell capacity")
        n = feature_arity(len(self.rat_caps))
        self.offset = np.zeros(n) if self.offset is None else np.asarray(self.offset, dtype=np.float64)
        self.gain = np.ones(n) if self.gain is None else np.asarray(self.gain, dtype=np.float64)

    @classmethod
    def default(cls, capacity: int) -> "FeatureMap":
        return cls(capacity, split_capacity(capacity, len(DEFAULT_RAT_COSTS)))

    @property
    def arity(self) -> int:
        return feature_arity(len(self.rat_caps))

    @property
    def cost_norm(self) -> float:
        return 3 * max(self.rat_costs)

    def raw(self, occupied: int, cls: TrafficClass, u: float) -> np.ndarray:
        env = environment_from_occupancy(occupied, self.rat_caps, self.rat_costs)
        return extract_features(env, cls, u)

    def scaled(self, raw: np.ndarray) -> np.ndarray:
        return (raw - self.offset) * self.gain

    def fit_scaling(self, raw: np.ndarray) -> None:
        """Standardize each feature over ``raw`` (any leading shape)."""
        flat = raw.reshape(-1, self.arity)
        self.offset = flat.mean(axis=0)
        std = flat.std(axis=0)
        self.gain = 1.0 / np.where(std > 1e-6, std, 1.0)

    def meta(self) -> dict:
        return {
            "feature_arity": self.arity,
            "capacity": self.capacity,
            "rat_count": len(self.rat_caps),
            "rat_capacities": ",".join(str(c) for c in self.rat_caps),
            "rat_costs": ",".join(repr(c) for c in self.rat_costs),
            "cost_normalizer": repr(self.cost_norm),
            "class_order": ",".join(CLASS_ORDER),
            "feature_offset": ",".join(repr(float(v)) for v in self.offset),
            "feature_gain": ",".join(repr(float(v)) for v in self.gain),
        }

    @classmethod
    def from_meta(cls, meta: dict) -> "FeatureMap":
        def floats(key):
            return np.array([float(v) for v in meta[key].split(",")])

        return cls(
            capacity=int(meta["capacity"]),
            rat_caps=tuple(int(v) for v in meta["rat_capacities"].split(",")),
            rat_costs=tuple(floats("rat_costs")),
            offset=floats("feature_offset"),
            gain=floats("feature_gain"),
        )


@dataclass
class FncacDataset:
    """Labeled windows of consecutive arrivals; the label belongs to the last arrival."""

    raw: np.ndarray  # (S, L, F) unscaled features
    labels: np.ndarray  # (S,) 1.0 admit / 0.0 reject
    states: list[SystemState]
    class_ids: np.ndarray  # (S,) 1-based id of the last arrival
    utilizations: np.ndarray  # (S,)

    def __len__(self):
        return self.labels.shape[0]

    def subset(self, idx) -> "FncacDataset":
        idx = np.asarray(idx)
        return FncacDataset(self.raw[idx], self.labels[idx], [self.states[i] for i in idx], self.class_ids[idx], self.utilizations[idx])

    @property
    def admit_fraction(self) -> float:
        return float(self.labels.mean())


def _arrival_states(trace, n_classes: int) -> tuple[np.ndarray, np.ndarray]:
    """Per-arrival (class index, active counts before the decision) replayed from an event trace."""
    delta = np.zeros((trace.kind.size, n_classes), dtype=np.int64)
    rows = np.arange(trace.kind.size)
    admitted = (trace.kind == _kernels.KIND_ARRIVAL) & (trace.decision == 1)
    departed = trace.kind == _kernels.KIND_DEPARTURE
    delta[rows[admitted], trace.cls[admitted]] = 1
    delta[rows[departed], trace.cls[departed]] = -1
    before = np.cumsum(delta, axis=0) - delta
    is_arr = trace.kind == _kernels.KIND_ARRIVAL
    return trace.cls[is_arr], before[is_arr]


def generate_training_set(
    schedule: ThresholdSchedule,
    feature_map: FeatureMap,
    size: int,
    seed: int,
    seq_len: int = 4,
    arrivals_per_load: int = 20_000,
) -> FncacDataset:
    """Sample ``size`` labeled arrival windows from oracle-driven runs across the schedule's loads."""
    if size < 1:
        raise ValueError("size must be >= 1")
    capacity = feature_map.capacity
    rng = np.random.default_rng([seed, 0xFEA7])
    runs = []
    for i, u in enumerate(schedule.utilizations):
        scenario = build_normalized_scenario(u, capacity)
        t = schedule.thresholds[i]
        cfg = SimConfig(arrivals_per_load, seed=seed, replications=1)
        _, _, trace = _run_once(scenario, ThresholdPolicy(t), cfg, replication=1000 + i, trace=True)
        cls_idx, active = _arrival_states(trace, len(scenario.classes))
        runs.append((u, scenario, t, cls_idx, active, trace.decision[trace.kind == _kernels.KIND_ARRIVAL]))

    demands = (1, 2, 3)
    which = rng.integers(len(runs), size=size)
    raw = np.empty((size, seq_len, feature_map.arity))
    labels = np.empty(size)
    states, class_ids, utils = [], np.empty(size, dtype=np.int64), np.empty(size)
    for s in range(size):
        u, scenario, t, cls_idx, active, dec = runs[which[s]]
        warm = arrivals_per_load // 10
        j = int(rng.integers(max(warm, seq_len - 1), cls_idx.size))
        for pos, a in enumerate(range(j - seq_len + 1, j + 1)):
            occ = int(np.dot(active[a], demands))
            raw[s, pos] = feature_map.raw(occ, scenario.classes[cls_idx[a]], u)
        state = SystemState(capacity, tuple(int(n) for n in active[j]), demands)
        cls = scenario.classes[cls_idx[j]]
        labels[s] = float(dec[j] == 1)
        states.append(state)
        class_ids[s] = cls.id
        utils[s] = u
    return FncacDataset(raw, labels, states, class_ids, utils)


def oracle_label(schedule: ThresholdSchedule, state: SystemState, cls: TrafficClass, u: float) -> float:
    return float(decide_threshold(state, cls, schedule.for_load(u)).verdict == ADMIT)


# -- training and decisions -------------------------------------------------------


@dataclass(frozen=True)
class FncacConfig:
    hidden_sizes: tuple[int, ...] = (16, 16)
    epochs: int = 3000
    step_size: float = 0.5
    seq_len: int = 4
    samples: int = 1000
    test_fraction: float = 0.2
    width_scale: float = 0.3
    search_arrivals: int = 40_000
    search_replications: int = 2
    arrivals_per_load: int = 20_000
    grid: tuple[float, ...] = DEFAULT_GRID


DESK_FNCAC = FncacConfig()
# full-size network: 200 Gaussian units per hidden layer
LARGE_FNCAC = FncacConfig(hidden_sizes=(200, 200))


@dataclass
class FncacTrainReport:
    losses: list[float]
    initial_loss: float
    final_loss: float
    train_size: int
    test_size: int
    heldout_accuracy: float
    samples: int
    seed: int


@dataclass
class FncacController:
    model: rrbfn.RrbfnModel
    feature_map: FeatureMap
    schedule: ThresholdSchedule | None = None
    seq_len: int = 4
    meta: dict = field(default_factory=dict)

    def scores(self, raw: np.ndarray) -> np.ndarray:
        """Batch scores for (S, L, F) windows, each from a reset recurrent state."""
        return rrbfn.predict(self.model, self.feature_map.scaled(raw))

    def decisions(self, data: FncacDataset) -> np.ndarray:
        free = np.array([s.free_channels for s in data.states])
        return ((self.scores(data.raw) >= SCORE_THRESHOLD) & (free >= data.class_ids)).astype(float)

    def accuracy(self, data: FncacDataset) -> float:
        return float(np.mean(self.decisions(data) == data.labels))

    def policy(self, u: float) -> "FncacPolicy":
        return FncacPolicy(self, u)

    def save(self, path: str | Path) -> None:
        meta = dict(self.feature_map.meta())
        meta["seq_len"] = self.seq_len
        if self.schedule is not None:
            meta["oracle_schedule"] = self.schedule.encode()
        meta.update(self.meta)
        rrbfn.save_model(self.model, path, meta)

    @classmethod
    def load(cls, path: str | Path) -> "FncacController":
        model, meta = rrbfn.load_model(path)
        if "feature_arity" not in meta:
            raise rrbfn.ModelFormatError(f"{path}: not an FNCAC model (no feature-map header)")
        fmap = FeatureMap.from_meta(meta)
        if fmap.arity != model.input_size:
            raise rrbfn.ModelFormatError("feature arity does not match the network input size")
        schedule = ThresholdSchedule.decode(meta["oracle_schedule"]) if "oracle_schedule" in meta else None
        known = set(fmap.meta()) | {"seq_len", "oracle_schedule"}
        extra = {k: v for k, v in meta.items() if k not in known}
        return cls(model, fmap, schedule, int(meta.get("seq_len", 4)), extra)


def split_indices(n: int, test_fraction: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    perm = np.random.default_rng([seed, 0x5B1]).permutation(n)
    n_test = int(round(n * test_fraction))
    return np.sort(perm[n_test:]), np.sort(perm[:n_test])


def train_fncac(data: FncacDataset, feature_map: FeatureMap, config: FncacConfig, seed: int) -> tuple[FncacController, FncacTrainReport]:
    """Train on a seeded 80/20 split and report held-out decision accuracy."""
    if len(data) == 0:
        raise ValueError("empty training data")
    train_idx, test_idx = split_indices(len(data), config.test_fraction, seed)
    train, test = data.subset(train_idx), data.subset(test_idx)
    fmap = FeatureMap(feature_map.capacity, feature_map.rat_caps, feature_map.rat_costs)
    fmap.fit_scaling(train.raw)
    rcfg = rrbfn.RrbfnConfig(input_size=fmap.arity, hidden_sizes=config.hidden_sizes, width_scale=config.width_scale)
    model = rrbfn.init_model(rcfg, seed)
    tset = rrbfn.TrainingSet(fmap.scaled(train.raw), train.labels)
    initial = rrbfn.mse(model, tset)
    report = rrbfn.train_gradient_descent(model, tset, config.epochs, config.step_size)
    controller = FncacController(model, fmap, seq_len=config.seq_len)
    acc = controller.accuracy(test) if len(test) else float("nan")
    final = rrbfn.mse(model, tset)
    return controller, FncacTrainReport(report.losses, initial, final, len(train), len(test), acc, len(data), seed)


def build_fncac(capacity: int, seed: int, config: FncacConfig = DESK_FNCAC) -> tuple[FncacController, FncacTrainReport, FncacDataset]:
    """Search the oracle schedule, generate labeled data, and train, all from one seed."""
    search_cfg = SimConfig(config.search_arrivals, seed=seed, replications=config.search_replications)
    schedule = search_schedule(config.grid, capacity, search_cfg)
    log.info("oracle schedule: %s", schedule.encode())
    fmap = FeatureMap.default(capacity)
    data = generate_training_set(schedule, fmap, config.samples, seed, config.seq_len, config.arrivals_per_load)
    controller, report = train_fncac(data, fmap, config, seed)
    controller.schedule = schedule
    return controller, report, data


def decide_fncac(controller: FncacController, env: NetworkEnvironment, state: SystemState, cls: TrafficClass, a: float) -> AdmissionDecision:
    """One streaming decision; advances the controller's recurrent state."""
    raw = extract_features(env, cls, a)
    score = rrbfn.rrbfn_step(controller.model, controller.feature_map.scaled(raw))
    if state.free_channels < cls.channel_demand:
        return AdmissionDecision("reject", REASON_CAPACITY)
    if score >= SCORE_THRESHOLD:
        return AdmissionDecision(ADMIT)
    return AdmissionDecision("reject", REASON_SCORE)


class FncacPolicy:
    """Simulator-facing wrapper; the recurrent state persists across arrivals within one run."""

    name = "fncac"

    def __init__(self, controller: FncacController, utilization: float):
        self.controller = controller
        self.utilization = float(utilization)

    def reset(self) -> None:
        rrbfn.reset_state(self.controller.model)

    def decide(self, state: SystemState, cls: TrafficClass) -> AdmissionDecision:
        fmap = self.controller.feature_map
        env = environment_from_occupancy(state.occupied_channels, fmap.rat_caps, fmap.rat_costs)
        return decide_fncac(self.controller, env, state, cls, self.utilization)

    def kernel_arrays(self, scenario: Scenario) -> dict:
        fmap = self.controller.feature_map
        if scenario.capacity != fmap.capacity:
            raise EnvironmentError_(f"model was built for N={fmap.capacity}, scenario has N={scenario.capacity}")
        m = self.controller.model
        return {
            "recurrent": m.recurrent_weights,
            "centers_flat": np.concatenate([c.ravel() for c in m.centers]),
            "widths_flat": np.concatenate(m.widths),
            "layer_sizes": np.array(m.hidden_sizes, dtype=np.int64),
            "out_w": m.output_weights,
            "out_b": float(m.output_bias),
            "in_offset": fmap.offset,
            "in_gain": fmap.gain,
            "rat_caps": np.array(fmap.rat_caps, dtype=np.int64),
            "rat_costs": np.array(fmap.rat_costs),
            "cost_norm": fmap.cost_norm,
            "utilization": self.utilization,
            "score_threshold": SCORE_THRESHOLD,
        }
