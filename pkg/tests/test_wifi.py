"""Wireless capacity estimation from block-ACK streams."""

import random

import pytest

from accelbrake.wifi import (
    AmpduAckEvent,
    CapacityFilter,
    LinkProfile,
    OverheadModel,
    WifiReplayView,
    backlogged_projection,
    estimate_capacity,
    estimate_capacity_per_user,
    generate_mac_trace,
    instantaneous_rate,
    merge_user_streams,
    read_mac_trace,
    write_estimates,
    write_mac_trace,
)


def _event(t=0, b=4, s=12_000, r=24e6, m=8, gap=3_000.0, user=0):
    return AmpduAckEvent(t, b, s, r, m, gap, user)


# -------------------------------------------------------------- projections

def test_instantaneous_rate():
    assert instantaneous_rate(_event()) == pytest.approx(16e6)
    with pytest.raises(ValueError):
        instantaneous_rate(_event(gap=0))


def test_backlogged_projection_pads_to_full_batch():
    # 4 missing frames at 24 Mbit/s add 2000 us of virtual airtime.
    assert backlogged_projection(_event()) == pytest.approx(19.2e6)


def test_projection_recovers_capacity_from_partial_batch():
    # A half-full batch whose gap is its own airtime plus overhead projects
    # to exactly the backlogged throughput of the link.
    profile = LinkProfile(24e6, 8, 12_000, OverheadModel(1_000, 0, 200))
    airtime = 4 * 12_000 * 1e6 / 24e6 + 1_000
    ev = _event(b=4, gap=airtime)
    assert backlogged_projection(ev) == pytest.approx(profile.true_capacity())


def test_projection_validates_batch_size():
    with pytest.raises(ValueError):
        backlogged_projection(_event(b=0))
    with pytest.raises(ValueError):
        backlogged_projection(_event(b=9))  # exceeds the max batch of 8


# ------------------------------------------------------------------- filter

def test_filter_empty_returns_none():
    assert CapacityFilter(40_000).value(0) is None


def test_filter_rejects_bad_window():
    with pytest.raises(ValueError):
        CapacityFilter(0)


def test_filter_halves_weight_per_half_window():
    f = CapacityFilter(40_000)
    f.add(0, 10.0)
    f.add(20_000, 20.0)
    # The older sample is one half-life old: weight 0.5 against 1.0.
    assert f.value(20_000) == pytest.approx((0.5 * 10 + 20) / 1.5)


def test_filter_drops_samples_outside_window():
    f = CapacityFilter(40_000)
    f.add(0, 10.0)
    f.add(20_000, 20.0)
    assert f.value(40_001) == pytest.approx(20.0)
    assert f.value(60_001) is None


# ---------------------------------------------------------------- estimator

def test_saturated_stream_estimates_its_own_rate():
    events = [_event(t=5_000 * (i + 1), b=8, gap=5_000.0) for i in range(10)]
    points = estimate_capacity(events)
    assert len(points) == 10
    for p in points:
        assert p.raw_bps == pytest.approx(19.2e6)
        assert p.capped_bps == pytest.approx(19.2e6)


def test_idle_stream_is_capped_at_twice_delivered():
    # Lone frames on an idle link: the projection says 11.3 Mbit/s but the
    # estimator may only publish twice what the link actually carried.
    events = [_event(t=5_000 * (i + 1), b=1, gap=5_000.0) for i in range(10)]
    points = estimate_capacity(events, cap_factor=2.0)
    for p in points:
        assert p.current_bps == pytest.approx(2.4e6)
        assert p.raw_bps > 2 * p.current_bps
        assert p.capped_bps == pytest.approx(4.8e6)


def test_per_user_estimates_use_own_gaps():
    # Two stations alternating on the medium, 10 ms between a station's
    # own ACKs; each sees its contended share, not the raw medium rate.
    events = []
    for i in range(6):
        events.append(_event(t=5_000 * i + 1, b=8, gap=5_000.0, user=i % 2))
    per_user = estimate_capacity_per_user(events)
    assert set(per_user) == {0, 1}
    for stream in per_user.values():
        assert len(stream) == 2  # first event only seeds the clock
        for p in stream:
            assert p.capped_bps == pytest.approx(9.6e6)


def test_merge_recomputes_shared_gaps():
    a = [_event(t=1_000, user=0, gap=999.0), _event(t=3_000, user=0, gap=999.0)]
    b = [_event(t=2_000, user=1, gap=999.0)]
    merged = merge_user_streams(a, b)
    assert [ev.time_us for ev in merged] == [1_000, 2_000, 3_000]
    assert [ev.user for ev in merged] == [0, 1, 0]
    assert [ev.inter_ack_us for ev in merged] == [1_000, 1_000, 1_000]


# ---------------------------------------------------------- synthetic traces

def test_overhead_model_statistics():
    m = OverheadModel(mean_us=1_000, std_us=300, floor_us=200)
    rng = random.Random(0)
    samples = [m.sample(rng) for _ in range(20_000)]
    assert min(samples) >= 200
    assert sum(samples) / len(samples) == pytest.approx(1_000, rel=0.02)


def test_overhead_model_degenerate_and_invalid():
    assert OverheadModel(std_us=0).sample(random.Random(1)) == 1000.0
    with pytest.raises(ValueError):
        OverheadModel(mean_us=100, floor_us=200).validate()
    with pytest.raises(ValueError):
        OverheadModel(std_us=-1).validate()


def test_profile_capacity_accounts_for_overhead():
    p = LinkProfile(72e6, 16, 12_000, OverheadModel(1_000, 200, 200))
    batch_bits = 16 * 12_000
    want = batch_bits * 1e6 / (batch_bits * 1e6 / 72e6 + 1_000)
    assert p.true_capacity() == pytest.approx(want)
    assert p.true_capacity(36e6) < want


def test_profile_validation():
    with pytest.raises(ValueError):
        LinkProfile(phy_rate_bps=0)
    with pytest.raises(ValueError):
        LinkProfile(max_batch=0)


def test_generator_input_validation():
    p = LinkProfile(24e6, 8, 12_000, OverheadModel(1_000, 0, 200))
    with pytest.raises(ValueError):
        generate_mac_trace(p, 0, 1.0)
    with pytest.raises(ValueError):
        generate_mac_trace(p, 1e6, 0)
    with pytest.raises(ValueError):
        generate_mac_trace(p, 3.0 * p.true_capacity(), 1.0)
    with pytest.raises(ValueError):
        generate_mac_trace(p, 1e6, 1.0, rate_schedule=[(0.5, 24e6)])


def test_overloaded_link_fills_batches():
    p = LinkProfile(24e6, 8, 12_000, OverheadModel(1_000, 200, 200))
    events = generate_mac_trace(p, 1.5 * p.true_capacity(), 5.0, seed=3)
    tail = events[len(events) // 2:]
    assert sum(ev.batch_frames for ev in tail) / len(tail) > 0.9 * 8


def test_light_load_sends_small_batches():
    p = LinkProfile(24e6, 8, 12_000, OverheadModel(1_000, 200, 200))
    events = generate_mac_trace(p, 0.25 * p.true_capacity(), 5.0, seed=3)
    assert sum(ev.batch_frames for ev in events) / len(events) < 4


def test_trace_gaps_match_timestamps():
    p = LinkProfile(24e6, 8, 12_000, OverheadModel(1_000, 200, 200))
    events = generate_mac_trace(p, 10e6, 2.0, seed=1)
    for prev, ev in zip(events, events[1:]):
        assert ev.inter_ack_us == pytest.approx(ev.time_us - prev.time_us, abs=1.0)


def test_rate_schedule_switches_phy_rate():
    p = LinkProfile(72e6, 8, 12_000, OverheadModel(1_000, 200, 200))
    events = generate_mac_trace(p, 10e6, 4.0, seed=2,
                                rate_schedule=[(0.0, 72e6), (2.0, 24e6)])
    rates = [ev.phy_rate_bps for ev in events]
    assert set(rates) == {72e6, 24e6}
    # Once the schedule steps down the rate never steps back.
    switched = False
    for r in rates:
        if r == 24e6:
            switched = True
        elif switched:
            pytest.fail("PHY rate went back up after the scheduled step-down")


# -------------------------------------------------------------------- files

def test_trace_file_roundtrip(tmp_path):
    events = [_event(t=1_000), _event(t=2_000, b=8, gap=1_000.0)]
    path = tmp_path / "trace.csv"
    write_mac_trace(events, str(path))
    back = read_mac_trace(str(path))
    assert back == events


def test_multiuser_trace_keeps_user_column(tmp_path):
    events = [_event(t=1_000, user=0), _event(t=2_000, user=1)]
    path = tmp_path / "mu.csv"
    write_mac_trace(events, str(path))
    assert read_mac_trace(str(path)) == events


def test_trace_reader_rejects_garbage(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("nope\n1,2\n")
    with pytest.raises(ValueError, match="expected header"):
        read_mac_trace(str(path))
    path.write_text("time_us,b,S_bits,R_bps,M,T_IA_us\n1,2,three,4,5,6\n")
    with pytest.raises(ValueError, match=r"bad\.csv:2"):
        read_mac_trace(str(path))


def test_estimate_file_contains_published_column(tmp_path):
    events = [_event(t=5_000 * (i + 1), b=8, gap=5_000.0) for i in range(3)]
    path = tmp_path / "est.csv"
    write_estimates(estimate_capacity(events), str(path))
    lines = path.read_text().splitlines()
    assert lines[0] == "time_us,mu_hat_bps"
    assert len(lines) == 4
    assert float(lines[1].split(",")[1]) == pytest.approx(19.2e6)


# ------------------------------------------------------------------- replay

def test_replay_view_steps_through_estimates():
    view = WifiReplayView([(0, 10e6), (1_000, 20e6)])
    assert view.capacity(0) == 10e6
    assert view.capacity(999) == 10e6
    assert view.capacity(1_000) == 20e6
    assert view.capacity(50_000) == 20e6


def test_replay_view_validation():
    with pytest.raises(ValueError):
        WifiReplayView([])
    with pytest.raises(ValueError):
        WifiReplayView([(0, 1e6), (0, 2e6)])
