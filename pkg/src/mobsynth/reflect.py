"""Follow-or-change decisions taken when an activity node completes."""

from __future__ import annotations

import enum
import json
import logging
from dataclasses import dataclass, replace
from typing import Sequence

from .backend import Backend, GenerationParams, PromptTemplate, extract_json_block, render
from .core import (
    LAST_SLOT,
    SLOT_MINUTES,
    AgentState,
    MEOTable,
    PersonProfile,
    PlannedActivity,
    RngStream,
    time_to_string,
)
from .errors import MobsynthError

log = logging.getLogger(__name__)

MIN_CHANGE_MINUTES = 15
MAX_CHANGE_MINUTES = 480


class Action(str, enum.Enum):
    FOLLOW = "follow"
    CHANGE = "change"


@dataclass(frozen=True)
class RethinkDecision:
    action: Action
    new_activity: str | None = None
    duration_minutes: int | None = None
    reasoning: str = ""
    status: str = "ok"  # ok | invalid-category | invalid-reply | failed

    def __post_init__(self) -> None:
        if self.action is Action.CHANGE and (self.new_activity is None or self.duration_minutes is None):
            raise ValueError("a change decision needs new_activity and duration_minutes")

    @classmethod
    def follow(cls, reasoning: str = "", status: str = "ok") -> "RethinkDecision":
        return cls(Action.FOLLOW, reasoning=reasoning, status=status)


def snap_duration(minutes: float) -> int:
    """Round to the 15-minute grid and clamp to [15, 480]."""
    snapped = int(round(float(minutes) / SLOT_MINUTES)) * SLOT_MINUTES
    return min(max(snapped, MIN_CHANGE_MINUTES), MAX_CHANGE_MINUTES)


def should_rethink(occupation: str, meo: MEOTable, rng: RngStream) -> bool:
    return rng.bernoulli(meo[occupation])


def memory_context(state: AgentState, next_activity: PlannedActivity, meo_value: float | None = None) -> str:
    lines = []
    if state.last_activity is not None:
        lines.append(f"You just finished: {state.last_activity.intention} ({state.last_activity.description})")
    lines.append(
        f"Next planned activity: {next_activity.intention} at {time_to_string(next_activity.start)}"
        + (f" ({next_activity.description})" if next_activity.description else "")
    )
    if meo_value is not None:
        lines.append(f"Your occupation's schedule flexibility (MEO): {meo_value:.2f}")
    if state.memory:
        lines.append("Recent events (most recent first):")
        lines.extend(f"- {ev.render()}" for ev in state.memory)
    return "\n".join(lines)


def parse_decision(reply: str, categories: Sequence[str]) -> RethinkDecision:
    try:
        obj = json.loads(extract_json_block(reply))
    except (MobsynthError, json.JSONDecodeError) as exc:
        return RethinkDecision.follow(f"unusable reply: {exc}", status="invalid-reply")
    if not isinstance(obj, dict):
        return RethinkDecision.follow("reply is not an object", status="invalid-reply")
    action = str(obj.get("action", "")).strip().lower()
    reasoning = str(obj.get("reasoning", ""))
    if action == "follow":
        return RethinkDecision.follow(reasoning)
    if action != "change":
        return RethinkDecision.follow(f"unknown action {action!r}", status="invalid-reply")
    name = obj.get("new_activity")
    lookup = {c.lower(): c for c in categories}
    if not isinstance(name, str) or name.strip().lower() not in lookup:
        return RethinkDecision.follow("invalid-category", status="invalid-category")
    try:
        minutes = float(obj.get("duration_minutes"))
    except (TypeError, ValueError):
        return RethinkDecision.follow("invalid duration", status="invalid-reply")
    if not minutes > 0:
        return RethinkDecision.follow("invalid duration", status="invalid-reply")
    return RethinkDecision(Action.CHANGE, lookup[name.strip().lower()], snap_duration(minutes), reasoning)


def rethink(
    state: AgentState,
    next_activity: PlannedActivity,
    profile: PersonProfile,
    categories: Sequence[str],
    backend: Backend,
    params: GenerationParams,
    template: PromptTemplate,
    meo_value: float | None = None,
) -> RethinkDecision:
    """Ask the model whether to keep ``next_activity``. Failures mean follow."""
    system, user = render(
        template,
        {
            "character_profile": profile.describe(),
            "formatted_time": time_to_string(state.now),
            "memory_context": memory_context(state, next_activity, meo_value),
            "activity_categories": ", ".join(categories),
        },
    )
    try:
        reply = backend.complete(system, user, params, template=template.name)
    except MobsynthError as exc:
        log.info("rethink failed for %s: %s", profile.id, exc)
        return RethinkDecision.follow(f"rethought-failed: {exc}", status="failed")
    return parse_decision(reply, categories)


def shift_from(
    activities: list[PlannedActivity],
    index: int,
    earliest: int,
    durations: Sequence[int] | None = None,
) -> list[PlannedActivity]:
    """Push node ``index`` to start no earlier than ``earliest``, cascading.

    Each following node keeps its original duration while it is pushed, so a
    delay propagates until a gap in the schedule absorbs it. Nodes pushed past
    the last slot of the day are dropped.
    """
    if index >= len(activities):
        return list(activities)
    starts = [a.start for a in activities]
    if durations is None:
        durations = [starts[j + 1] - starts[j] for j in range(len(starts) - 1)]
    out = list(activities[:index])
    prev_floor = earliest
    for j in range(index, len(activities)):
        new_start = max(starts[j], prev_floor)
        if new_start > LAST_SLOT:
            break
        out.append(replace(activities[j], start=new_start))
        if j < len(durations):
            prev_floor = new_start + durations[j]
    return out


def apply_decision(
    activities: Sequence[PlannedActivity],
    cursor: int,
    decision: RethinkDecision,
    location_category: str | None = None,
) -> list[PlannedActivity]:
    """Apply a decision to the node at ``cursor`` and re-time what follows.

    A shorter replacement does not pull later nodes forward; the replacement
    simply runs until the next node starts.
    """
    acts = list(activities)
    if decision.action is Action.FOLLOW:
        return acts
    node = acts[cursor]
    acts[cursor] = replace(
        node,
        intention=decision.new_activity,
        location_category=location_category if location_category is not None else node.location_category,
        description=decision.reasoning or node.description,
    )
    if cursor + 1 >= len(acts):
        return acts
    starts = [a.start for a in acts]
    durations = [starts[j + 1] - starts[j] for j in range(len(starts) - 1)]
    change_end = node.start + decision.duration_minutes // SLOT_MINUTES
    return shift_from(acts, cursor + 1, change_end, durations)
