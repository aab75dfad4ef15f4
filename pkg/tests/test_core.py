"""Unit tests for the timing arithmetic and config model.

The delay-compensation cases here are the contract the whole benchmark rests
on, so they are written as literal worked examples first and properties
second.
"""

from __future__ import annotations

import json
from random import Random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dualplc.core import (
    DEFAULT_TICK_US,
    ConfigError,
    DurationDistribution,
    NetCpuModel,
    Overrun,
    PhaseBudget,
    SimConfig,
    TrafficProfile,
    VirtualClock,
    compute_delay,
    default_budget,
    default_config,
    load_config,
    quantize_timeout,
    rng_stream,
)

# ---------------------------------------------------------------------------
# Delay compensation
# ---------------------------------------------------------------------------


def test_delay_pads_phases_up_to_target():
    # 1000 - (100 + 500 + 50 + 50) = 300
    assert compute_delay(1000, 100, 500, 50, 50) == 300


def test_delay_with_zero_cost_phases_is_the_whole_target():
    assert compute_delay(1000, 0, 0, 0, 0) == 1000


def test_delay_overrun_carries_the_overshoot():
    # phases sum to 1030 against a 1000 target -> 30 over
    with pytest.raises(Overrun) as exc:
        compute_delay(1000, 400, 500, 80, 50)
    assert exc.value.overshoot_us == 30


@given(
    target=st.integers(min_value=1, max_value=10_000_000),
    data=st.data(),
)
def test_delay_plus_phases_always_equals_target(target, data):
    """Whenever the phases fit, delay restores the sum to the target exactly."""
    read = data.draw(st.integers(min_value=0, max_value=target))
    comm = data.draw(st.integers(min_value=0, max_value=target - read))
    calc = data.draw(st.integers(min_value=0, max_value=target - read - comm))
    write = data.draw(
        st.integers(min_value=0, max_value=target - read - comm - calc))
    delay = compute_delay(target, read, comm, calc, write)
    assert read + comm + calc + write + delay == target


@given(
    target=st.integers(min_value=0, max_value=1_000_000),
    phases=st.tuples(*[st.integers(min_value=0, max_value=500_000)] * 4),
)
def test_delay_never_returns_negative(target, phases):
    try:
        delay = compute_delay(target, *phases)
    except Overrun as exc:
        assert exc.overshoot_us == sum(phases) - target
        assert exc.overshoot_us > 0
    else:
        assert delay >= 0


# ---------------------------------------------------------------------------
# Timeout quantization (tick-counting hardware can only time whole ticks)
# ---------------------------------------------------------------------------


def test_quantize_exact_multiple_is_unchanged():
    assert quantize_timeout(500, 100) == 500


def test_quantize_rounds_up_to_next_tick():
    assert quantize_timeout(450, 100) == 500


def test_quantize_zero_stays_zero():
    assert quantize_timeout(0, 100) == 0


@given(
    timeout=st.integers(min_value=0, max_value=10_000_000),
    tick=st.integers(min_value=1, max_value=10_000),
)
def test_quantize_properties(timeout, tick):
    q = quantize_timeout(timeout, tick)
    assert q >= timeout
    assert q % tick == 0
    assert q - timeout < tick


def test_clock_quantize_uses_its_own_tick():
    clock = VirtualClock(tick_us=250)
    assert clock.quantize_timeout(500) == 500
    assert clock.quantize_timeout(501) == 750


def test_clock_only_moves_forward():
    clock = VirtualClock()
    clock.advance(10)
    with pytest.raises(ValueError):
        clock.advance(5)
    assert clock.now_us == 10


# ---------------------------------------------------------------------------
# Duration distributions
# ---------------------------------------------------------------------------


def test_constant_distribution_always_returns_its_value():
    dist = DurationDistribution.constant(50)
    rng = Random(1)
    assert all(dist.sample(rng) == 50 for _ in range(100))


@given(seed=st.integers(min_value=0, max_value=2**32))
@settings(max_examples=25)
def test_uniform_samples_stay_in_bounds(seed):
    dist = DurationDistribution.uniform(40, 60)
    rng = Random(seed)
    for _ in range(200):
        assert 40 <= dist.sample(rng) <= 60


def test_triangular_mean_matches_closed_form():
    """Mean of triangular(40, 50, 60) is (40+50+60)/3 = 50.

    A million draws put the sample mean within 0.1 of that with enormous
    margin (the standard error is ~0.004), so a failure here means the
    sampler, not the luck, is wrong.
    """
    dist = DurationDistribution.triangular(40, 50, 60)
    rng = Random(987654321)
    n = 1_000_000
    total = sum(dist.sample(rng) for _ in range(n))
    mean = total / n
    assert abs(mean - 50.0) < 0.1


def test_triangular_samples_stay_in_bounds():
    dist = DurationDistribution.triangular(10, 11, 30)
    rng = Random(7)
    for _ in range(1000):
        assert 10 <= dist.sample(rng) <= 30


def test_distribution_json_round_trip():
    for dist in (
        DurationDistribution.constant(100),
        DurationDistribution.uniform(20, 80),
        DurationDistribution.triangular(40, 50, 60),
    ):
        assert DurationDistribution.from_json(dist.to_json()) == dist


def test_distribution_rejects_malformed_json():
    with pytest.raises(ConfigError):
        DurationDistribution.from_json({"kind": "uniform", "min": 10})
    with pytest.raises(ConfigError):
        DurationDistribution.from_json(
            {"kind": "uniform", "min": 10, "max": 20, "mode": 15})
    with pytest.raises(ConfigError):
        DurationDistribution.from_json(
            {"kind": "gaussian", "min": 10, "max": 20})
    with pytest.raises(ConfigError):
        DurationDistribution.from_json(
            {"kind": "constant", "min": 10, "max": 20})


def test_distribution_rejects_bool_durations():
    # JSON true/false satisfy isinstance(int) in Python; keep them out.
    with pytest.raises(ConfigError):
        DurationDistribution.from_json({"kind": "constant", "min": True, "max": 1})


# ---------------------------------------------------------------------------
# Seeded stream separation
# ---------------------------------------------------------------------------


def test_rng_streams_are_reproducible():
    a = [rng_stream(42, "io").random() for _ in range(5)]
    b = [rng_stream(42, "io").random() for _ in range(5)]
    assert a == b


def test_rng_streams_with_different_names_differ():
    io = rng_stream(42, "io")
    traffic = rng_stream(42, "traffic")
    assert [io.random() for _ in range(8)] != [traffic.random() for _ in range(8)]


def test_rng_streams_with_different_seeds_differ():
    assert rng_stream(1, "io").random() != rng_stream(2, "io").random()


# ---------------------------------------------------------------------------
# Phase budgets
# ---------------------------------------------------------------------------


def test_default_budget_is_feasible():
    default_budget().validate()  # must not raise


def test_budget_feasibility_rejects_worst_case_overrun():
    budget = PhaseBudget(
        read_in=DurationDistribution.constant(400),
        comm_timeout=500,
        calc=DurationDistribution.uniform(20, 80),
        write_out=DurationDistribution.constant(50),
        target_cycle=1000,
    )
    # worst case 400 + 500 + 80 + 50 = 1030 > 1000
    with pytest.raises(ConfigError):
        budget.validate()
    budget.validate(enforce_feasibility=False)  # still structurally sound


def test_budget_feasibility_uses_quantized_timeout():
    # 460 quantizes up to 500; worst case is then 100 + 500 + 80 + 50 = 730.
    budget = PhaseBudget(
        read_in=DurationDistribution.constant(100),
        comm_timeout=460,
        calc=DurationDistribution.uniform(20, 80),
        write_out=DurationDistribution.constant(50),
        target_cycle=730,
    )
    budget.validate(tick_us=DEFAULT_TICK_US)
    with pytest.raises(ConfigError):
        PhaseBudget(
            read_in=budget.read_in,
            comm_timeout=460,
            calc=budget.calc,
            write_out=budget.write_out,
            target_cycle=729,
        ).validate(tick_us=DEFAULT_TICK_US)


def test_budget_json_round_trip():
    budget = default_budget()
    assert PhaseBudget.from_json(budget.to_json()) == budget


def test_budget_rejects_unknown_keys():
    doc = default_budget().to_json()
    doc["extra"] = 1
    with pytest.raises(ConfigError) as exc:
        PhaseBudget.from_json(doc)
    assert "extra" in str(exc.value)


# ---------------------------------------------------------------------------
# Traffic profiles
# ---------------------------------------------------------------------------


def test_default_traffic_shape():
    profile = default_config().traffic
    labels = [seg.label for seg in profile.segments]
    assert labels == ["pre_idle", "attack", "post_idle"]
    assert profile.total_duration_us == 180 * 1_000_000


def test_traffic_boundaries_are_segment_starts():
    profile = default_config().traffic
    bounds = profile.boundaries()
    assert bounds == [
        (0, "pre_idle"),
        (60 * 1_000_000, "attack"),
        (120 * 1_000_000, "post_idle"),
    ]


def test_traffic_json_round_trip():
    profile = default_config().traffic
    assert TrafficProfile.from_json(profile.to_json()) == profile


def test_traffic_rejects_unknown_arrival_kind():
    doc = default_config().traffic.to_json()
    doc["segments"][0]["arrival"]["kind"] = "bursty"
    with pytest.raises(ConfigError):
        TrafficProfile.from_json(doc)


# ---------------------------------------------------------------------------
# Whole-config plumbing
# ---------------------------------------------------------------------------


def test_config_json_round_trip():
    cfg = default_config()
    assert SimConfig.from_json(cfg.to_json()) == cfg


def test_config_hash_is_stable_and_seed_sensitive():
    cfg = default_config()
    assert cfg.config_hash() == cfg.config_hash()
    assert cfg.config_hash() != cfg.with_seed(43).config_hash()


def test_load_config_round_trips_through_a_file(tmp_path):
    cfg = default_config()
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg.to_json()), encoding="utf-8")
    assert load_config(str(path)) == cfg


def test_config_rejects_unknown_mode():
    doc = default_config().to_json()
    doc["mode"] = "hybrid"
    with pytest.raises(ConfigError):
        SimConfig.from_json(doc)


def test_config_rejects_unknown_top_level_key():
    doc = default_config().to_json()
    doc["surprise"] = {}
    with pytest.raises(ConfigError):
        SimConfig.from_json(doc)


def test_baseline_mode_skips_dual_feasibility():
    # A budget whose worst case exceeds the target is fine for the
    # free-running single-controller mode; only the guarded mode needs the
    # feasibility guarantee.
    doc = default_config(mode="baseline").to_json()
    doc["budget"]["calc"] = {"kind": "uniform", "min": 700, "max": 1700}
    cfg = SimConfig.from_json(doc)
    assert cfg.mode == "baseline"
    doc["mode"] = "dual"
    with pytest.raises(ConfigError):
        SimConfig.from_json(doc)


def test_net_cpu_model_round_trip_and_validation():
    model = NetCpuModel()
    assert NetCpuModel.from_json(model.to_json()) == model
    with pytest.raises(ConfigError):
        NetCpuModel.from_json({**model.to_json(), "per_packet_cost": 0})
    with pytest.raises(ConfigError):
        NetCpuModel.from_json({**model.to_json(), "drop_policy": "front_drop"})
