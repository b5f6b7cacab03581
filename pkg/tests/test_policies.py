import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from caclab import policies
from caclab.policies import (
    REASON_CAPACITY,
    REASON_SCORE,
    REASON_THRESHOLD,
    ConventionalPolicy,
    FuzzyPolicy,
    FuzzySystem,
    PolicyError,
    SystemState,
    ThresholdPolicy,
    ThresholdSet,
    decide_conventional,
    decide_fuzzy,
    decide_threshold,
    fuzzy_infer,
    fuzzy_rule_table,
)
from caclab.traffic import TrafficClass, build_equal_rate_scenario
from oracles import mamdani_centroid_exact

CLASSES = build_equal_rate_scenario(1.0, 50).classes
SYS = FuzzySystem()


def state_with_free(free, capacity=10):
    return SystemState(capacity, (capacity - free, 0, 0))


@given(st.integers(3, 60), st.data())
def test_state_accounting(n, data):
    counts = data.draw(st.tuples(*(st.integers(0, n // b) for b in (1, 2, 3))).filter(lambda c: c[0] + 2 * c[1] + 3 * c[2] <= n))
    s = SystemState(n, counts)
    assert s.occupied_channels + s.free_channels == n
    assert 0 <= s.occupancy_ratio <= 1


def test_state_rejects_oversubscription():
    with pytest.raises(PolicyError):
        SystemState(5, (0, 0, 2))


@pytest.mark.parametrize("free,k,admit", [(0, 0, False), (0, 2, False), (3, 2, True), (2, 2, False)])
def test_conventional_examples(free, k, admit):
    d = decide_conventional(state_with_free(free), CLASSES[k])
    assert d.admitted is admit
    if not admit:
        assert d.reason == REASON_CAPACITY


@pytest.mark.parametrize(
    "free,k,admit,reason",
    [(5, 2, True, None), (2, 2, False, REASON_THRESHOLD), (1, 1, False, REASON_THRESHOLD), (0, 0, False, REASON_THRESHOLD), (1, 0, True, None)],
)
def test_threshold_examples(free, k, admit, reason):
    d = decide_threshold(state_with_free(free), CLASSES[k], ThresholdSet(1, 2, 3))
    assert d.admitted is admit and d.reason == reason



def test_threshold_eligible_but_short_is_capacity():
    # a class-3 call that needs five channels: inside its region at f=4 but does not fit
    big = TrafficClass(3, "wide", 5, 1.0, 1.0)
    d = decide_threshold(state_with_free(4), big, ThresholdSet(1, 2, 3))
    assert not d.admitted and d.reason == REASON_CAPACITY


@pytest.mark.parametrize("bad", [(0, 1, 2), (2, 2, 3), (3, 2, 1)])
def test_threshold_ordering(bad):
    with pytest.raises(PolicyError):
        ThresholdSet(*bad)


def test_threshold_parse_and_capacity():
    assert ThresholdSet.parse("1,2,7").as_tuple() == (1, 2, 7)
    with pytest.raises(PolicyError):
        ThresholdSet.parse("1,2")
    with pytest.raises(PolicyError):
        ThresholdSet(1, 2, 11).check_capacity(10)


THRESHOLDS = st.tuples(st.integers(1, 12), st.integers(1, 12), st.integers(1, 12)).filter(lambda t: t[0] < t[1] < t[2]).map(lambda t: ThresholdSet(*t))


@given(THRESHOLDS, st.integers(0, 30), st.integers(0, 2))
def test_threshold_monotone_and_safe(t, free, k):
    cls = CLASSES[k]
    now = decide_threshold(state_with_free(free, 31), cls, t).admitted
    more = decide_threshold(state_with_free(free + 1, 31), cls, t).admitted
    assert not now or more
    assert not now or free >= cls.channel_demand
    eligible = [t.eligible(free, c) for c in (1, 2, 3)]
    assert eligible == sorted(eligible, reverse=True)  # nested regions: type1 first


@given(st.integers(3, 40), st.integers(0, 40), st.integers(0, 2))
def test_no_policy_oversubscribes(n, free, k):
    free = min(free, n)
    s = state_with_free(free, n)
    for pol in (ConventionalPolicy(), FuzzyPolicy(), ThresholdPolicy(ThresholdSet(1, 2, 3))):
        if pol.decide(s, CLASSES[k]).admitted:
            assert free >= CLASSES[k].channel_demand


def test_fuzzy_examples():
    assert fuzzy_infer(SYS, 0.05, 1) >= 0.8
    assert fuzzy_infer(SYS, 0.98, 3) <= 0.2


def test_fuzzy_centroid_against_exact_integration():
    # occupancy 0.5 / demand 2 fires only Medium & Medium -> StronglyAdmit at full strength;
    # hand value over [0, 1]: 0.23625 / 0.2875
    assert fuzzy_infer(SYS, 0.5, 2) == pytest.approx(0.23625 / 0.2875, abs=1e-5)


@given(st.floats(0.0, 1.0), st.sampled_from([1, 2, 3]))
def test_fuzzy_matches_exact_centroid(occ, demand):
    outs = SYS.output_sets
    strength = {}
    for o, d, out in SYS.rules:
        w = min(float(policies.triangular(occ, *SYS.occupancy_sets[o])), float(policies.triangular(demand, *SYS.demand_sets[d])))
        strength[out] = max(strength.get(out, 0.0), w)
    names = list(strength)
    exact = mamdani_centroid_exact([strength[k] for k in names], [outs[k] for k in names])
    assert fuzzy_infer(SYS, occ, demand) == pytest.approx(exact, abs=1e-4)


@given(st.floats(0.0, 0.999), st.sampled_from([1, 2, 3]))
def test_fuzzy_bounded_and_continuous(occ, demand):
    s0 = fuzzy_infer(SYS, occ, demand)
    s1 = fuzzy_infer(SYS, occ + 0.001, demand)
    assert 0.0 <= s0 <= 1.0
    assert abs(s1 - s0) < 0.05


@pytest.mark.parametrize("occ,demand", [(-0.1, 1), (1.1, 1), (0.5, 0), (0.5, 4)])
def test_fuzzy_domain(occ, demand):
    with pytest.raises(PolicyError):
        fuzzy_infer(SYS, occ, demand)


@pytest.mark.parametrize("score,free,admit,reason", [(0.7, 5, True, None), (0.5, 5, True, None), (0.3, 5, False, REASON_SCORE), (0.9, 2, False, REASON_CAPACITY)])
def test_fuzzy_decision_rule(monkeypatch, score, free, admit, reason):
    monkeypatch.setattr(policies, "fuzzy_infer", lambda *a: score)
    d = decide_fuzzy(state_with_free(free), CLASSES[2], SYS)
    assert d.admitted is admit and d.reason == reason


def test_fuzzy_system_validation():
    with pytest.raises(PolicyError):
        FuzzySystem(rules=SYS.rules[:-1])
    with pytest.raises(PolicyError):
        FuzzySystem(rules=(("Low", "Light", "Nope"),) + SYS.rules[1:])
    assert FuzzySystem.from_dict(SYS.to_dict()) == SYS


def test_rule_table_lists_every_rule():
    text = fuzzy_rule_table(SYS)
    assert "StronglyAdmit" in text and "Reject" in text and "Heavy" in text


@pytest.mark.parametrize("pol", [ConventionalPolicy(), ThresholdPolicy(ThresholdSet(1, 3, 8)), FuzzyPolicy()])
def test_admit_table_agrees_with_decide(pol):
    n = 20
    table = pol.admit_table(n, CLASSES)
    assert table.shape == (n + 1, 3)
    for f in range(n + 1):
        for k, cls in enumerate(CLASSES):
            assert table[f, k] == pol.decide(state_with_free(f, n), cls).admitted


def test_fuzzy_reserves_channels_for_heavy_calls():
    table = FuzzyPolicy().admit_table(50, CLASSES)
    blocked_free = np.flatnonzero(~table[:, 2])
    assert blocked_free.max() > 3  # type3 is turned away while it would still fit
    assert table[50].all()
