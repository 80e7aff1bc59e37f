"""Daily plan generation: profile -> diary narrative -> validated activity plan."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Mapping, Sequence

from .backend import Backend, GenerationParams, PromptTemplate, extract_json_block, render
from .backend.templates import DEFAULT_PLAN_EXAMPLE
from .core import (
    LAST_SLOT,
    NON_WORKING_OCCUPATIONS,
    ActivityPlan,
    PersonProfile,
    PlannedActivity,
    TimeOfDay,
    is_on_grid,
    minutes_from_string,
    plan_problems,
    snap_minutes,
    time_to_string,
)
from .errors import ExtractionError, MobsynthError, PlannerError, TimeParseError

log = logging.getLogger(__name__)

REPAIR_RESORTED = "re-sorted"
REPAIR_SNAPPED = "snapped-to-grid"
REPAIR_INJECTED_SLEEP = "injected-sleep"
REPAIR_COERCED = "category-coerced"

REPAIR_SUFFIX = (
    "\n\n**Your previous reply could not be used:** {error}\n"
    "Respond again with a single valid JSON object following the output format above."
)

# Intentions whose location is fixed by the profile rather than sampled.
DEFAULT_ACTIVITY_POI_MAP: dict[str, str] = {
    "sleep": "home",
    "household": "home",
    "work_study": "workplace",
    "shopping": "shop",
    "eating": "restaurant",
    "leisure": "park",
    "social": "entertainment",
    "errand": "service",
    "exercise": "sports",
    "other": "service",
}


class PlanValidationError(MobsynthError, ValueError):
    pass


@dataclass(frozen=True)
class Narrative:
    text: str
    profile_id: str
    backend: str = ""
    temperature: float | None = None
    generated_at: str = ""

    def __post_init__(self) -> None:
        if not self.text or not self.text.strip():
            raise PlannerError(f"empty narrative for profile {self.profile_id}")

    def to_dict(self) -> dict:
        return {
            "profile_id": self.profile_id,
            "text": self.text,
            "backend": self.backend,
            "temperature": self.temperature,
            "generated_at": self.generated_at,
        }


@dataclass
class PlanParseReport:
    plan: ActivityPlan | None
    repairs: list[str] = field(default_factory=list)
    rejected: bool = False
    reason: str = ""
    attempts: int = 0
    zero_length: list[int] = field(default_factory=list)

    def to_dict(self, profile_id: str = "") -> dict:
        return {
            "profile_id": profile_id,
            "rejected": self.rejected,
            "reason": self.reason,
            "repairs": list(self.repairs),
            "attempts": self.attempts,
            "zero_length": list(self.zero_length),
            "plan": plan_to_json(self.plan) if self.plan is not None else None,
        }


def plan_to_json(plan: ActivityPlan) -> list[dict]:
    return [
        {
            "activity": a.intention,
            "start_time": time_to_string(a.start),
            "description": a.description,
            "location_category": a.location_category,
        }
        for a in plan
    ]


def plan_from_json(items: Sequence[Mapping], poi_map: Mapping[str, str] | None = None) -> ActivityPlan:
    poi_map = DEFAULT_ACTIVITY_POI_MAP if poi_map is None else poi_map
    acts = []
    for it in items:
        minutes = minutes_from_string(it["start_time"])
        acts.append(
            PlannedActivity(
                intention=it["activity"],
                start=snap_minutes(minutes),
                location_category=it.get("location_category") or poi_map.get(it["activity"], ""),
                description=it.get("description", ""),
            )
        )
    return ActivityPlan(tuple(acts))


# --------------------------------------------------------------------------- narrative


def generate_narrative(
    profile: PersonProfile,
    backend: Backend,
    params: GenerationParams,
    template: PromptTemplate,
) -> Narrative:
    system, user = render(template, {"character_profile": profile.describe()})
    try:
        text = backend.complete(system, user, params, template=template.name)
    except MobsynthError as exc:
        raise PlannerError(f"narrative generation failed for {profile.id}: {exc}") from exc
    return Narrative(
        text=text,
        profile_id=profile.id,
        backend=getattr(backend, "name", type(backend).__name__),
        temperature=params.temperature,
        generated_at=datetime.now(timezone.utc).isoformat(timespec="seconds"),
    )


# --------------------------------------------------------------------------- parsing


def _coerce_category(name, categories: Sequence[str]) -> tuple[str, bool]:
    if not isinstance(name, str):
        raise PlanValidationError(f"activity {name!r} is not a string")
    if name in categories:
        return name, False
    folded = name.strip().lower()
    for cat in categories:
        if cat.lower() == folded:
            return cat, True
    raise PlanValidationError(f"activity {name!r} is not one of the categories: {', '.join(categories)}")


def validate_plan_reply(
    reply: str,
    categories: Sequence[str],
    poi_map: Mapping[str, str] | None = None,
) -> tuple[ActivityPlan, list[str]]:
    """Turn a raw model reply into a plan plus the list of repairs applied."""
    poi_map = DEFAULT_ACTIVITY_POI_MAP if poi_map is None else poi_map
    try:
        obj = json.loads(extract_json_block(reply))
    except ExtractionError as exc:
        raise PlanValidationError(str(exc)) from exc
    except json.JSONDecodeError as exc:
        raise PlanValidationError(f"reply is not valid JSON ({exc.msg} at char {exc.pos})") from exc
    if not isinstance(obj, dict) or "plan" not in obj:
        raise PlanValidationError('reply must be a JSON object with a key "plan"')
    items = obj["plan"]
    if not isinstance(items, list) or not items:
        raise PlanValidationError('"plan" must be a non-empty array')

    repairs: list[str] = []

    def note(r: str) -> None:
        if r not in repairs:
            repairs.append(r)

    acts: list[PlannedActivity] = []
    for i, item in enumerate(items):
        if not isinstance(item, dict):
            raise PlanValidationError(f"plan entry {i} is not an object")
        if "activity" not in item or "start_time" not in item:
            raise PlanValidationError(f'plan entry {i} needs "activity" and "start_time"')
        intention, coerced = _coerce_category(item["activity"], categories)
        if coerced:
            note(REPAIR_COERCED)
        try:
            minutes = minutes_from_string(item["start_time"])
        except TimeParseError as exc:
            raise PlanValidationError(f"plan entry {i}: {exc}") from exc
        if not is_on_grid(minutes):
            note(REPAIR_SNAPPED)
        desc = item.get("description", "")
        acts.append(
            PlannedActivity(
                intention=intention,
                start=snap_minutes(minutes),
                location_category=poi_map.get(intention, ""),
                description=desc if isinstance(desc, str) else str(desc),
            )
        )

    if any(b.start < a.start for a, b in zip(acts, acts[1:])):
        acts.sort(key=lambda a: a.start)  # stable
        note(REPAIR_RESORTED)
    if acts[0].intention != "sleep" or acts[0].start != 0:
        acts.insert(0, PlannedActivity("sleep", 0, poi_map.get("sleep", ""), "sleeping"))
        note(REPAIR_INJECTED_SLEEP)
    problems = plan_problems(acts)
    if problems:
        raise PlanValidationError("; ".join(problems))
    return ActivityPlan(tuple(acts)), repairs


def parse_plan(
    narrative: Narrative,
    categories: Sequence[str],
    backend: Backend,
    params: GenerationParams,
    template: PromptTemplate,
    poi_map: Mapping[str, str] | None = None,
    example_json: str = DEFAULT_PLAN_EXAMPLE,
) -> PlanParseReport:
    """Ask the extraction prompt for a JSON plan and validate it.

    One repair round-trip is allowed: the validator's message is appended to
    the prompt and the model is asked again. Extraction always runs at
    temperature 0.
    """
    return _extract_plan(
        template,
        {
            "activity_categories": ", ".join(categories),
            "narrative": narrative.text,
            "example_json": example_json,
        },
        categories,
        backend,
        params,
        poi_map,
    )


def _extract_plan(template, bindings, categories, backend, params, poi_map) -> PlanParseReport:
    system, user = render(template, bindings)
    strict = params.with_temperature(0.0)
    error = ""
    for attempt in (1, 2):
        prompt = user if attempt == 1 else user + REPAIR_SUFFIX.format(error=error)
        try:
            reply = backend.complete(system, prompt, strict, template=template.name)
        except MobsynthError as exc:
            return PlanParseReport(None, rejected=True, reason=f"backend failure: {exc}", attempts=attempt)
        try:
            plan, repairs = validate_plan_reply(reply, categories, poi_map)
        except PlanValidationError as exc:
            error = str(exc)
            log.info("plan reply rejected (attempt %d): %s", attempt, error)
            continue
        return PlanParseReport(plan, repairs, attempts=attempt, zero_length=zero_length_nodes(plan))
    return PlanParseReport(None, rejected=True, reason=error, attempts=2)


def direct_plan(
    profile: PersonProfile,
    categories: Sequence[str],
    backend: Backend,
    params: GenerationParams,
    template: PromptTemplate,
    poi_map: Mapping[str, str] | None = None,
    example_json: str = DEFAULT_PLAN_EXAMPLE,
) -> PlanParseReport:
    """Single-stage baseline: ask for the JSON plan straight from the profile."""
    return _extract_plan(
        template,
        {
            "character_profile": profile.describe(),
            "activity_categories": ", ".join(categories),
            "example_json": example_json,
        },
        categories,
        backend,
        params,
        poi_map,
    )


# --------------------------------------------------------------------------- intervals


def plan_durations(plan: ActivityPlan, day_end: TimeOfDay = LAST_SLOT) -> list[tuple[PlannedActivity, TimeOfDay]]:
    """Pair each activity with its end slot (the next start; ``day_end`` for the last)."""
    acts = list(plan)
    out = []
    for i, act in enumerate(acts):
        end = acts[i + 1].start if i + 1 < len(acts) else max(day_end, act.start)
        out.append((act, end))
    flagged = zero_length_nodes(plan)
    if flagged:
        log.debug("plan has zero-length activities at %s", flagged)
    return out


def zero_length_nodes(plan: ActivityPlan) -> list[int]:
    acts = list(plan)
    return [i for i in range(len(acts) - 1) if acts[i].start == acts[i + 1].start]


def fallback_plan(profile: PersonProfile, poi_map: Mapping[str, str] | None = None) -> ActivityPlan:
    """Occupation-based default day used when planning fails."""
    poi_map = DEFAULT_ACTIVITY_POI_MAP if poi_map is None else poi_map
    main = "leisure" if profile.occupation in NON_WORKING_OCCUPATIONS else "work_study"
    day = [
        ("sleep", "00:00", "sleeping"),
        (main, "08:30", "morning routine away from home"),
        ("eating", "12:00", "lunch"),
        (main, "13:00", "afternoon"),
        ("leisure", "18:30", "evening leisure"),
        ("sleep", "22:30", "going to bed"),
    ]
    return ActivityPlan(
        tuple(
            PlannedActivity(name, snap_minutes(minutes_from_string(t)), poi_map.get(name, ""), desc)
            for name, t, desc in day
        )
    )
