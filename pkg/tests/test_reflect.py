import pytest
from hypothesis import given
from hypothesis import strategies as st

from mobsynth.backend import GenerationParams, MockBackend, MockScript, load_templates
from mobsynth.core import DEFAULT_CATEGORIES, LAST_SLOT, AgentState, MEOTable, MemoryEvent, MemoryKind, PlannedActivity, RngStream
from mobsynth.errors import ConfigError
from mobsynth.reflect import (
    Action,
    RethinkDecision,
    apply_decision,
    memory_context,
    parse_decision,
    rethink,
    should_rethink,
    snap_duration,
)

from helpers import lecturer

CATS = list(DEFAULT_CATEGORIES)
TEMPLATE = load_templates()["rethink"]


def test_degenerate_probabilities_are_exact():
    rng = RngStream(0, "a")
    never = MEOTable({"X": 0.0})
    always = MEOTable({"X": 1.0})
    assert not any(should_rethink("X", never, rng) for _ in range(2000))
    assert all(should_rethink("X", always, rng) for _ in range(2000))


def test_factory_worker_frequency():
    rng = RngStream(2024, "factory")
    n = 100_000
    hits = sum(should_rethink("Factory Worker", MEOTable(), rng) for _ in range(n))
    assert abs(hits / n - 0.30) <= 0.005


def test_unknown_occupation_is_config_error():
    with pytest.raises(ConfigError):
        should_rethink("Astronaut", MEOTable(), RngStream(0, "a"))


def ask(reply, state=None, node=None):
    backend = MockBackend(MockScript(default=reply))
    state = state or AgentState(now=40, current_location="office")
    node = node or PlannedActivity("eating", 48, "restaurant", "lunch")
    return rethink(state, node, lecturer(), CATS, backend, GenerationParams(), TEMPLATE, 0.5)


def test_follow_reply():
    d = ask('{"action":"follow","reasoning":"on schedule"}')
    assert d.action is Action.FOLLOW and d.reasoning == "on schedule"


def test_change_reply():
    d = ask('{"action":"change","new_activity":"leisure","duration_minutes":90,"reasoning":"tired"}')
    assert (d.action, d.new_activity, d.duration_minutes) == (Action.CHANGE, "leisure", 90)


def test_out_of_vocabulary_activity_becomes_follow():
    d = ask('{"action":"change","new_activity":"skydiving","duration_minutes":60}')
    assert d.action is Action.FOLLOW
    assert d.status == "invalid-category"


def test_backend_failure_is_follow():
    backend = MockBackend(MockScript.from_json([{"error": "down"}]))
    d = rethink(AgentState(0, "h"), PlannedActivity("eating", 4), lecturer(), CATS, backend, GenerationParams(), TEMPLATE)
    assert d.action is Action.FOLLOW and d.status == "failed"


@pytest.mark.parametrize("reply", ["garbage", "[]", '{"action": "dance"}', '{"action": "change", "new_activity": "leisure", "duration_minutes": "soon"}', '{"action": "change", "new_activity": "leisure", "duration_minutes": -5}'])
def test_unusable_replies_follow(reply):
    assert parse_decision(reply, CATS).action is Action.FOLLOW


@pytest.mark.parametrize("minutes,expected", [(1, 15), (15, 15), (22, 15), (23, 30), (90, 90), (600, 480), (0.5, 15)])
def test_duration_snapping_and_bounds(minutes, expected):
    assert snap_duration(minutes) == expected


def test_change_requires_fields():
    with pytest.raises(ValueError):
        RethinkDecision(Action.CHANGE, new_activity="leisure")


def test_prompt_includes_time_memory_and_categories():
    seen = {}

    class Spy:
        def complete(self, system, user, params, template=None):
            seen["text"] = system + user
            return '{"action": "follow"}'

    state = AgentState(now=48, current_location="office")
    state.remember(MemoryEvent(32, MemoryKind.EXECUTED, "work_study at Faculty office"))
    rethink(state, PlannedActivity("eating", 48, "restaurant", "lunch"), lecturer(), CATS, Spy(), GenerationParams(), TEMPLATE, 0.5)
    assert "12:00" in seen["text"]
    assert "work_study at Faculty office" in seen["text"]
    assert "Next planned activity: eating at 12:00" in seen["text"]
    assert ", ".join(CATS) in seen["text"]


def test_memory_context_lists_most_recent_first():
    state = AgentState(now=10, current_location="h")
    state.remember(MemoryEvent(1, MemoryKind.EXECUTED, "event-a"))
    state.remember(MemoryEvent(2, MemoryKind.TRAVELED, "event-b"))
    text = memory_context(state, PlannedActivity("eating", 12))
    assert text.index("event-b") < text.index("event-a")


# --------------------------------------------------------------------------- apply_decision


def acts(*pairs):
    return [PlannedActivity(name, slot) for name, slot in pairs]


def test_follow_leaves_plan_unchanged():
    plan = acts(("sleep", 0), ("work_study", 32), ("eating", 48))
    assert apply_decision(plan, 1, RethinkDecision.follow()) == plan


def test_longer_change_delays_next_node():
    plan = acts(("sleep", 0), ("eating", 48), ("work_study", 52), ("leisure", 80))
    out = apply_decision(plan, 1, RethinkDecision(Action.CHANGE, "leisure", 90))
    assert out[1].intention == "leisure"
    assert out[2].start == 48 + 6  # 60 minute node stretched to 90, next node 30 minutes late
    # pushed nodes keep their length, so the delay carries through the gapless tail
    assert out[3].start == 82


def test_change_past_day_end_drops_tail():
    plan = acts(("sleep", 0), ("leisure", 88), ("sleep", 92))
    out = apply_decision(plan, 1, RethinkDecision(Action.CHANGE, "social", 480))
    assert [a.intention for a in out] == ["sleep", "social"]


def interval_oracle(starts, cursor, minutes):
    """Node-by-node replay: each pushed node keeps its original length."""
    lengths = [b - a for a, b in zip(starts, starts[1:])]
    out = starts[: cursor + 1]
    floor = starts[cursor] + minutes // 15
    for j in range(cursor + 1, len(starts)):
        s = max(starts[j], floor)
        if s > LAST_SLOT:
            break
        out.append(s)
        floor = s + lengths[j] if j < len(lengths) else floor
    return out


@given(
    st.lists(st.integers(1, LAST_SLOT), min_size=1, max_size=8),
    st.data(),
    st.integers(15, 480).map(lambda m: m // 15 * 15),
)
def test_apply_decision_matches_interval_oracle(extra, data, minutes):
    starts = [0, *sorted(extra)]
    plan = [PlannedActivity("sleep" if i == 0 else "other", s) for i, s in enumerate(starts)]
    cursor = data.draw(st.integers(1, len(plan) - 1))
    out = apply_decision(plan, cursor, RethinkDecision(Action.CHANGE, "leisure", minutes))
    assert [a.start for a in out] == interval_oracle(starts, cursor, minutes)
    assert all(b.start >= a.start for a, b in zip(out, out[1:]))
    assert all(a.start <= LAST_SLOT for a in out)
    if cursor + 1 < len(out):
        assert out[cursor + 1].start >= out[cursor].start + minutes // 15
