import itertools

import pytest
from hypothesis import given, strategies as st

from cv2x_mcsr.model import (ALL_STREAMS, CsrPlan, GenerationParams, GroupingOption, PacketClass,
                             PRIORITY_ORDER, ScenarioConfig, StreamSet, Weights, priority_rank,
                             stream_set_params)

H, D, C, M = PRIORITY_ORDER


def test_priority_rank_values():
    assert priority_rank(H) == 0
    assert priority_rank(M) == 3
    assert priority_rank(D) < priority_rank(C)
    assert [priority_rank(c) for c in PRIORITY_ORDER] == [0, 1, 2, 3]


def test_priority_is_total_order():
    for a, b in itertools.permutations(PacketClass, 2):
        assert (a < b) != (b < a)


@given(st.sets(st.sampled_from(list(PacketClass)), min_size=1))
def test_stream_set_sorted_by_rank(members):
    s = StreamSet(list(members))
    ranks = [priority_rank(c) for c in s]
    assert ranks == sorted(ranks)
    assert len(s) == len(members)


def test_stream_set_rejects_empty_and_duplicates():
    with pytest.raises(ValueError):
        StreamSet([])
    with pytest.raises(ValueError):
        StreamSet([H, H])


def test_stream_set_parse_and_label():
    assert StreamSet.parse("MH").label == "HM"
    assert StreamSet.parse("H,D") == StreamSet([D, H])
    assert repr(StreamSet.parse("CH")) == "{H,C}"


def test_stream_set_params_examples():
    gen = GenerationParams(lambda_H=2.0, lambda_D=3.0, lambda_M=4.0, T_C=0.2)
    assert stream_set_params(StreamSet("HC"), gen) == {"lambda_H": 2.0, "T_C": 0.2}
    assert stream_set_params(ALL_STREAMS, gen) == {
        "lambda_H": 2.0, "lambda_D": 3.0, "T_C": 0.2, "lambda_M": 4.0}
    assert stream_set_params(StreamSet("M"), gen) == {"lambda_M": 4.0}
    with pytest.raises(ValueError):
        stream_set_params(None, gen)


@pytest.mark.parametrize("kw", [
    {"lambda_H": -1.0}, {"T_C": 0.05}, {"T_C": 1.5}, {"rep_H": 0}, {"rep_D": 0},
    {"rep_interval": 0.0}, {"lambda_M": float("inf")},
])
def test_generation_params_validation(kw):
    with pytest.raises(ValueError):
        GenerationParams(**kw)


def test_generation_params_effective_rate_and_mask():
    gen = GenerationParams()
    assert gen.effective_rate(H) == 8.0
    assert gen.effective_rate(D) == 5.0
    assert gen.effective_rate(C) == pytest.approx(10.0)
    m = gen.masked([H, C])
    assert m.lambda_D == 0 and m.lambda_M == 0 and m.T_C == 0.1 and m.lambda_H == 1.0
    assert not gen.masked([C]).masked([H]).has_traffic


def test_grouping_option_must_partition():
    GroupingOption(6, (StreamSet("HC"), StreamSet("DM")))
    with pytest.raises(ValueError):
        GroupingOption(6, (StreamSet("HC"), StreamSet("CM")))
    with pytest.raises(ValueError):
        GroupingOption(6, (StreamSet("HC"), StreamSet("D")))
    with pytest.raises(ValueError):
        GroupingOption(16, (ALL_STREAMS,))


def test_csr_plan_validation():
    CsrPlan(4, 100)
    with pytest.raises(ValueError):
        CsrPlan(5, 20)
    with pytest.raises(ValueError):
        CsrPlan(0, 20)
    with pytest.raises(ValueError):
        CsrPlan(1, 30)


def test_weights():
    w = Weights()
    assert w[H] == 0.4 and w[M] == 0.1
    assert sum(w.as_dict().values()) == pytest.approx(1.0, abs=1e-12)
    with pytest.raises(ValueError):
        Weights(0.3, 0.4, 0.2, 0.1)
    with pytest.raises(ValueError):
        Weights(0.5, 0.3, 0.2, 0.1)


def test_scenario_config_validation():
    with pytest.raises(ValueError):
        ScenarioConfig(N=0)
    with pytest.raises(ValueError):
        ScenarioConfig(N=1, sim_duration=1.0, warmup=1.0)
    with pytest.raises(ValueError):
        ScenarioConfig(N=1, queue_capacity=0)
    assert ScenarioConfig(N=1).warmup_for(50) == pytest.approx(0.5)
