import numpy as np
import pytest

from caclab import _accel, _kernels, fncac, rrbfn
from caclab.fncac import (
    EnvironmentError_,
    FeatureMap,
    FncacConfig,
    FncacController,
    NetworkEnvironment,
    RatDescriptor,
    ThresholdSchedule,
    build_fncac,
    decide_fncac,
    environment_from_occupancy,
    extract_features,
    feature_arity,
    generate_training_set,
    oracle_label,
    search_thresholds,
    split_capacity,
    train_fncac,
)
from caclab.policies import REASON_CAPACITY, SystemState, ThresholdPolicy, ThresholdSet
from caclab.simulator import SimConfig, replicate, run, run_reference
from caclab.traffic import build_normalized_scenario

N = 30
CLASSES = build_normalized_scenario(0.5, N).classes
SMALL = FncacConfig(hidden_sizes=(6, 6), epochs=300, samples=200, search_arrivals=4_000, search_replications=1, arrivals_per_load=4_000, grid=(0.3, 0.6, 0.9))


@pytest.fixture(scope="module")
def built():
    return build_fncac(N, seed=3, config=SMALL)


def env_of(loads, caps=(10, 10, 10), costs=(1.0, 0.8, 0.6)):
    return NetworkEnvironment(tuple(RatDescriptor(i + 1, c, l, k) for i, (c, l, k) in enumerate(zip(caps, loads, costs))))


def test_feature_examples():
    idle = extract_features(env_of((0, 0, 0)), CLASSES[1], 0.4)
    full = extract_features(env_of((10, 10, 10)), CLASSES[0], 0.4)
    assert idle.shape == (feature_arity(3),) == (8,)
    assert np.all(idle[:3] == 0) and np.all(full[:3] == 1)
    assert tuple(idle[3:6]) == (0.0, 1.0, 0.0)
    assert idle[6] == 0.4
    # least-loaded RAT is the first one (ties go to the lowest index): 2 * 1.0 / (3 * 1.0)
    assert idle[7] == pytest.approx(2 / 3)
    assert extract_features(env_of((10, 10, 0)), CLASSES[2], 0.4)[7] == pytest.approx(3 * 0.6 / 3)


def test_environment_validation():
    with pytest.raises(EnvironmentError_):
        NetworkEnvironment(())
    with pytest.raises(EnvironmentError_):
        RatDescriptor(1, 5, 6)
    with pytest.raises(EnvironmentError_):
        environment_from_occupancy(31, (10, 10, 10))
    assert split_capacity(50) == (17, 17, 16)


def test_fill_first_layout():
    env = environment_from_occupancy(14, (10, 10, 10))
    assert [r.current_load for r in env.rats] == [10, 4, 0]


def test_kernel_features_match_python():
    fmap = FeatureMap.default(N)
    out = np.empty(fmap.arity)
    caps = np.array(fmap.rat_caps, dtype=np.int64)
    costs = np.array(fmap.rat_costs)
    for occ in range(N + 1):
        for k, cls in enumerate(CLASSES):
            _kernels.fncac_features(occ, N, k, 3, 0.7, caps, costs, fmap.cost_norm, cls.channel_demand, out)
            assert np.array_equal(out, fmap.raw(occ, cls, 0.7))


def test_schedule_codec_and_lookup():
    s = ThresholdSchedule((0.1, 0.5, 0.9), (ThresholdSet(1, 2, 3), ThresholdSet(1, 2, 5), ThresholdSet(1, 3, 8)))
    assert ThresholdSchedule.decode(s.encode()) == s
    assert s.for_load(0.62).as_tuple() == (1, 2, 5)
    assert s.for_load(0.75).as_tuple() == (1, 3, 8)


def test_search_is_exhaustive_minimum():
    cfg = SimConfig(4_000, seed=1, replications=1)
    best, value = search_thresholds(0.8, N, cfg, max_threshold=5)
    s = build_normalized_scenario(0.8, N)
    scores = {t: replicate(s, ThresholdPolicy(ThresholdSet(*t)), cfg).aggregate for t in [(1, 2, 3), (1, 2, 4), (1, 2, 5), (1, 3, 4), (1, 3, 5), (1, 4, 5), (2, 3, 4), (2, 3, 5), (2, 4, 5), (3, 4, 5)]}
    assert value == min(scores.values())
    assert scores[best.as_tuple()] == value


def test_training_set_size_labels_and_determinism(built):
    controller, _, _ = built
    fmap = FeatureMap.default(N)
    data = generate_training_set(controller.schedule, fmap, 150, seed=5, seq_len=3, arrivals_per_load=3_000)
    assert len(data) == 150 and data.raw.shape == (150, 3, 8)
    for i in range(len(data)):
        cls = CLASSES[data.class_ids[i] - 1]
        assert data.labels[i] == oracle_label(controller.schedule, data.states[i], cls, data.utilizations[i])
        # the last window step describes the labeled arrival
        assert np.array_equal(data.raw[i, -1], fmap.raw(data.states[i].occupied_channels, cls, data.utilizations[i]))
    again = generate_training_set(controller.schedule, fmap, 150, seed=5, seq_len=3, arrivals_per_load=3_000)
    assert np.array_equal(again.raw, data.raw) and np.array_equal(again.labels, data.labels)


def test_training_reduces_loss_and_is_deterministic(built):
    controller, report, data = built
    assert report.final_loss < report.initial_loss
    assert report.train_size + report.test_size == len(data) == SMALL.samples
    assert 0.0 <= report.heldout_accuracy <= 1.0
    again, report2 = train_fncac(data, FeatureMap.default(N), SMALL, seed=3)
    assert np.array_equal(again.model.get_flat(), controller.model.get_flat())
    assert report2.final_loss == report.final_loss


def test_controller_round_trip(built, tmp_path):
    controller, _, _ = built
    path = tmp_path / "m.txt"
    controller.save(path)
    back = FncacController.load(path)
    assert np.array_equal(back.model.get_flat(), controller.model.get_flat())
    assert np.array_equal(back.feature_map.offset, controller.feature_map.offset)
    assert np.array_equal(back.feature_map.gain, controller.feature_map.gain)
    assert back.schedule == controller.schedule and back.seq_len == controller.seq_len
    plain = tmp_path / "plain.txt"
    rrbfn.save_model(controller.model, plain)
    with pytest.raises(rrbfn.ModelFormatError):
        FncacController.load(plain)


@pytest.mark.parametrize("u", [0.4, 0.9])
def test_policy_kernel_matches_reference(built, u):
    controller, _, _ = built
    s = build_normalized_scenario(u, N)
    cfg = SimConfig(3_000, seed=4)
    fast = run(s, controller.policy(u), cfg)
    slow = run_reference(s, controller.policy(u), cfg)
    assert np.array_equal(fast.offered, slow.offered) and np.array_equal(fast.blocked, slow.blocked)


def test_policy_capacity_mismatch(built):
    controller, _, _ = built
    with pytest.raises(EnvironmentError_):
        run(build_normalized_scenario(0.5, N + 3), controller.policy(0.5), SimConfig(100))


@pytest.mark.parametrize("score,free,admit", [(0.9, 10, True), (0.5, 10, True), (0.2, 10, False), (0.9, 2, False)])
def test_decision_rule(built, monkeypatch, score, free, admit):
    controller, _, _ = built
    monkeypatch.setattr(fncac.rrbfn, "rrbfn_step", lambda *a: score)
    state = SystemState(N, (N - free, 0, 0))
    env = environment_from_occupancy(state.occupied_channels, controller.feature_map.rat_caps)
    d = decide_fncac(controller, env, state, CLASSES[2], 0.5)
    assert d.admitted is admit
    if free < 3:
        assert d.reason == REASON_CAPACITY


def test_numba_flag_reported():
    assert isinstance(_accel.NUMBA_ENABLED, bool)
