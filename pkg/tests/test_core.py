import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from mobsynth.core import (
    DEFAULT_CATEGORIES,
    LAST_SLOT,
    AgentState,
    ActivityPlan,
    GeoPoint,
    MEOTable,
    MemoryEvent,
    MemoryKind,
    PlannedActivity,
    RngStream,
    Trajectory,
    TransportMode,
    haversine_m,
    plan_problems,
    time_from_string,
    time_to_string,
    trajectory_problems,
)
from mobsynth.errors import ConfigError, TimeParseError

from helpers import record


def nearest_slot_oracle(minute: int) -> int:
    # nearest quarter hour by exhaustive comparison, ties can't happen on integer minutes
    best = min(range(97), key=lambda s: (abs(s * 15 - minute), -s))
    return min(best, LAST_SLOT)


def test_midnight_is_slot_zero():
    assert time_from_string("00:00") == 0


def test_every_minute_snaps_to_nearest_slot():
    for minute in range(1440):
        text = f"{minute // 60:02d}:{minute % 60:02d}"
        assert time_from_string(text) == nearest_slot_oracle(minute), text


def test_boundary_between_rounding_down_and_up():
    assert time_from_string("08:07") == 32
    assert time_from_string("08:08") == 33
    # 08:10 is two minutes from 08:15 and ten from 08:00
    assert time_from_string("08:10") == 33


def test_late_evening_clamps_to_last_slot():
    assert time_from_string("23:59") == LAST_SLOT
    assert time_from_string("23:52") == LAST_SLOT


@pytest.mark.parametrize("bad", ["24:00", "12:60", "8", "ab:cd", "12-30", "", "7:5"])
def test_malformed_time_names_token(bad):
    with pytest.raises(TimeParseError) as exc:
        time_from_string(bad)
    assert exc.value.token == bad


@given(st.integers(0, 1439))
def test_render_parse_round_trip_lands_on_nearest_slot(minute):
    text = f"{minute // 60:02d}:{minute % 60:02d}"
    slot = time_from_string(text)
    assert time_to_string(slot) == time_to_string(nearest_slot_oracle(minute))
    assert time_from_string(time_to_string(slot)) == slot


def spherical_law_of_cosines(a: GeoPoint, b: GeoPoint) -> float:
    p1, p2 = math.radians(a.lat), math.radians(b.lat)
    dl = math.radians(b.lon - a.lon)
    c = math.sin(p1) * math.sin(p2) + math.cos(p1) * math.cos(p2) * math.cos(dl)
    return 6_371_000.0 * math.acos(max(-1.0, min(1.0, c)))


def test_haversine_identity_and_one_degree():
    a = GeoPoint(0, 0)
    assert haversine_m(a, a) == 0.0
    assert haversine_m(a, GeoPoint(0, 1)) == pytest.approx(111_195, abs=1)


coords = st.builds(
    GeoPoint,
    st.floats(-89.9, 89.9, allow_nan=False),
    st.floats(-179.9, 179.9, allow_nan=False),
)


@given(coords, coords)
def test_haversine_symmetric_and_matches_law_of_cosines(a, b):
    d = haversine_m(a, b)
    assert d == pytest.approx(haversine_m(b, a), rel=1e-12, abs=1e-9)
    if d > 1000:  # the cosine form loses precision for short distances
        assert d == pytest.approx(spherical_law_of_cosines(a, b), rel=1e-6)


def test_geopoint_rejects_out_of_range():
    with pytest.raises(ValueError):
        GeoPoint(91, 0)
    with pytest.raises(ValueError):
        GeoPoint(0, -181)


def test_meo_defaults_reproduce_occupation_bands():
    meo = MEOTable()
    assert meo["Factory Worker"] == 0.30
    assert meo["University Lecturer"] == 0.50
    assert meo["Business Owner"] == 0.70
    assert meo["Retired"] == 0.20
    assert {v for _, v in meo.items()} == {0.20, 0.30, 0.50, 0.70}


def test_meo_unknown_occupation_and_range():
    with pytest.raises(ConfigError):
        MEOTable()["Astronaut"]
    with pytest.raises(ConfigError):
        MEOTable({"X": 1.5})


def test_transport_vocabulary_is_fixed():
    assert [m.value for m in TransportMode] == ["walk", "bike", "ebike", "car", "bus", "subway"]


def test_plan_invariants():
    ok = [PlannedActivity("sleep", 0), PlannedActivity("work_study", 32)]
    assert plan_problems(ok) == []
    assert plan_problems(ok[:1])  # fewer than two
    assert plan_problems([PlannedActivity("eating", 0), PlannedActivity("sleep", 4)])
    assert plan_problems([PlannedActivity("sleep", 0), PlannedActivity("eating", 40), PlannedActivity("leisure", 30)])
    with pytest.raises(ValueError):
        ActivityPlan((PlannedActivity("work_study", 0),))
    with pytest.raises(ValueError):
        PlannedActivity("sleep", 96)


def test_agent_memory_is_bounded_most_recent_first():
    state = AgentState(now=0, current_location="home", memory_cap=3)
    for i in range(5):
        state.remember(MemoryEvent(i, MemoryKind.EXECUTED, f"event {i}"))
    assert [e.summary for e in state.memory] == ["event 4", "event 3", "event 2"]


def test_trajectory_checker_accepts_valid_day():
    recs = [
        record("sleep", "home", 0, 0, 0, 32),
        record("work_study", "office", 0, 0.01, 32, 70, "bike", 33),
        record("sleep", "home", 0, 0, 70, LAST_SLOT, "bike", 71),
    ]
    assert trajectory_problems(recs) == []


def test_trip_arriving_at_midnight_round_trips():
    recs = (
        record("sleep", "home", 0, 0, 0, 90),
        record("leisure", "bar", 0, 0.01, 90, LAST_SLOT, "walk", LAST_SLOT + 1),
    )
    traj = Trajectory("a", 0, recs)
    assert trajectory_problems(recs) == []
    assert traj.to_dict()["records"][1]["arrival"] == "24:00"
    assert Trajectory.from_dict(traj.to_dict()) == traj


def test_trajectory_checker_rejects_overlap_gap_and_mode_mismatch():
    overlap = [record("sleep", "home", 0, 0, 0, 40), record("eating", "home", 0, 0, 32, LAST_SLOT)]
    assert any("overlaps" in p for p in trajectory_problems(overlap))
    gap = [record("sleep", "home", 0, 0, 0, 30), record("eating", "home", 0, 0, 32, LAST_SLOT)]
    assert trajectory_problems(gap)
    mode_no_move = [record("sleep", "home", 0, 0, 0, 32), record("eating", "home", 0, 0, 32, LAST_SLOT, "walk", 33)]
    assert any("mode but no location change" in p for p in trajectory_problems(mode_no_move))
    move_no_mode = [record("sleep", "home", 0, 0, 0, 32), record("eating", "cafe", 0, 0, 32, LAST_SLOT)]
    assert any("without a mode" in p for p in trajectory_problems(move_no_mode))
    late_start = [record("sleep", "home", 0, 0, 4, LAST_SLOT)]
    assert trajectory_problems(late_start)


@st.composite
def record_lists(draw):
    n = draw(st.integers(1, 6))
    cuts = sorted(draw(st.lists(st.integers(1, 94), min_size=n - 1, max_size=n - 1, unique=True)))
    starts = [0, *cuts]
    places = draw(st.lists(st.sampled_from(["home", "office", "cafe"]), min_size=n, max_size=n))
    recs = []
    for i, (s, p) in enumerate(zip(starts, places)):
        end = starts[i + 1] if i + 1 < n else LAST_SLOT
        moved = i > 0 and places[i - 1] != p
        recs.append(record("other", p, 0, 0, s, end, "walk" if moved else None, s if moved else None))
    return recs


@given(record_lists(), st.data())
def test_checker_flags_any_corruption(recs, data):
    assert trajectory_problems(recs) == []
    i = data.draw(st.integers(0, len(recs) - 1))
    r = recs[i]
    if i > 0 and data.draw(st.booleans()):
        # mode toggled on a record: either a phantom mode or a missing one
        flipped = record(r.intention, r.poi_id, 0, 0, r.start, r.end, None if r.mode else "walk", None if r.mode else r.start)
    else:
        flipped = record(r.intention, r.poi_id, 0, 0, r.start, r.end + 1 if r.end < LAST_SLOT else r.end - 1, r.mode, r.arrival)
    broken = recs[:i] + [flipped] + recs[i + 1 :]
    if i == 0 and flipped.end == r.end:
        return
    assert trajectory_problems(broken)


def test_rng_streams_are_keyed_and_reproducible():
    a = [RngStream(42, "agent-7", 0).random() for _ in range(3)]
    s1, s2 = RngStream(42, "agent-7", 0), RngStream(42, "agent-7", 0)
    assert [s1.random() for _ in range(50)] == [s2.random() for _ in range(50)]
    assert RngStream(42, "agent-7", 1).random() != a[0]
    assert RngStream(42, "agent-8", 0).random() != a[0]
    assert RngStream(43, "agent-7", 0).random() != a[0]


def test_rng_integers_inclusive_and_categorical():
    rng = RngStream(1, "x")
    seen = {rng.integers(3, 5) for _ in range(200)}
    assert seen == {3, 4, 5}
    assert all(rng.categorical([0, 1, 0]) == 1 for _ in range(100))


def test_default_vocabulary():
    assert DEFAULT_CATEGORIES[0] == "sleep"
    assert len(DEFAULT_CATEGORIES) == 10
