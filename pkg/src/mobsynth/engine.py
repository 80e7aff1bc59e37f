"""Per-agent day simulation and population orchestration."""

from __future__ import annotations

import hashlib
import json
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from .backend import Backend, GenerationParams, PromptTemplate
from .config import SimulationConfig
from .core import (
    LAST_SLOT,
    POI,
    SLOT_MINUTES,
    SLOTS_PER_DAY,
    ActivityPlan,
    AgentState,
    MemoryEvent,
    MemoryKind,
    PersonProfile,
    PlannedActivity,
    RngStream,
    Trajectory,
    TrajectoryRecord,
    TransportMode,
    haversine_m,
    time_to_string,
    trajectory_problems,
)
from .errors import ConfigError, GroundingError, MobsynthError, PlannerError
from .planner import (
    Narrative,
    PlanParseReport,
    direct_plan,
    fallback_plan,
    generate_narrative,
    parse_plan,
)
from .reflect import Action, apply_decision, rethink, shift_from, should_rethink
from .spatial import (
    POIDatabase,
    available_modes,
    candidate_pois,
    choose_mode,
    gravity_probabilities,
    prism_feasible,
    random_mode,
    sample_destination,
    trip_options,
)

log = logging.getLogger(__name__)

ANCHOR_HOME = frozenset({"sleep", "household"})
ANCHOR_WORK = "work_study"


@dataclass
class Environment:
    """Everything an agent needs that is shared (read-only) across agents."""

    db: POIDatabase
    config: SimulationConfig
    backend: Backend
    templates: dict[str, PromptTemplate]

    def __post_init__(self) -> None:
        self.meo = self.config.meo()
        self.gravity = self.config.gravity_params()
        self.speeds = self.config.speeds()
        b = self.config.backend
        self.params = GenerationParams(b.temperature, b.max_tokens, b.timeout, b.max_retries)
        self.poi_map = dict(self.config.activity_poi_map)
        self.categories = list(self.config.categories)


@dataclass
class AgentDay:
    trajectory: Trajectory
    plan: ActivityPlan
    narrative: Narrative | None = None
    plan_report: PlanParseReport | None = None
    fallback: str | None = None
    decisions: list[dict] = field(default_factory=list)
    events: list[dict] = field(default_factory=list)


# --------------------------------------------------------------------------- plans


def random_plan(rng: RngStream, vocabulary: Sequence[str], poi_map: dict[str, str] | None = None) -> ActivityPlan:
    """Sleep at midnight followed by 3-8 random activities at random slots."""
    poi_map = poi_map or {}
    n = rng.integers(3, 8)
    drawn = []
    for _ in range(n):
        name = vocabulary[rng.integers(0, len(vocabulary) - 1)]
        slot = rng.integers(1, LAST_SLOT)
        drawn.append(PlannedActivity(name, slot, poi_map.get(name, ""), "random activity"))
    drawn.sort(key=lambda a: a.start)
    return ActivityPlan((PlannedActivity("sleep", 0, poi_map.get("sleep", ""), "sleeping"), *drawn))


def obtain_plan(profile: PersonProfile, env: Environment, rng: RngStream):
    """Return ``(plan, narrative, report, fallback_reason)`` per the configured plan source."""
    cfg = env.config
    if cfg.plan_source == "random":
        return random_plan(rng, env.categories, env.poi_map), None, None, None
    if cfg.plan_source == "direct_llm":
        report = direct_plan(profile, env.categories, env.backend, env.params, env.templates["direct_plan"], env.poi_map)
        if report.rejected:
            return fallback_plan(profile, env.poi_map), None, report, f"direct plan rejected: {report.reason}"
        return report.plan, None, report, None
    try:
        narrative = generate_narrative(profile, env.backend, env.params, env.templates["narrative"])
    except PlannerError as exc:
        return fallback_plan(profile, env.poi_map), None, None, str(exc)
    report = parse_plan(
        narrative, env.categories, env.backend, env.params, env.templates["parse_plan"], env.poi_map
    )
    if report.rejected:
        return fallback_plan(profile, env.poi_map), narrative, report, f"plan rejected: {report.reason}"
    return report.plan, narrative, report, None


# --------------------------------------------------------------------------- grounding


def resolve_location(
    node: PlannedActivity,
    current: POI,
    deadline: int,
    profile: PersonProfile,
    env: Environment,
    rng: RngStream,
) -> POI:
    """Home/work anchors first; otherwise a gravity draw over the mapped category."""
    if node.intention in ANCHOR_HOME:
        return env.db[profile.home_poi]
    if node.intention == ANCHOR_WORK and profile.work_poi and profile.work_poi in env.db:
        return env.db[profile.work_poi]
    category = node.location_category or env.poi_map.get(node.intention, "")
    candidates = candidate_pois(env.db, category, current.location, env.gravity)
    modes = available_modes(profile)
    reachable = [
        c for c in candidates if prism_feasible(current.location, c[0].location, node.start, deadline, env.speeds, modes)
    ]
    if reachable:
        candidates = reachable
    probs = gravity_probabilities(candidates, env.gravity)
    return sample_destination(probs, candidates, rng)


# --------------------------------------------------------------------------- one agent-day


def run_agent_day(profile: PersonProfile, env: Environment, rng: RngStream, day_index: int = 0) -> AgentDay:
    cfg = env.config
    if profile.home_poi not in env.db:
        raise ConfigError(f"home POI {profile.home_poi!r} of {profile.id} not in the POI database")
    meo_value = env.meo[profile.occupation]
    plan, narrative, report, fallback = obtain_plan(profile, env, rng)

    acts = list(plan.activities)
    home = env.db[profile.home_poi]
    state = AgentState(now=0, current_location=home.id, memory_cap=cfg.memory_cap)
    decisions: list[dict] = []
    events: list[dict] = []
    raw: list[tuple[PlannedActivity, POI, TransportMode | None, int]] = []

    def event(kind: str, **info) -> None:
        events.append({"agent_id": profile.id, "day": day_index, "event": kind, **info})

    k = 0
    while k < len(acts):
        node = acts[k]
        state.now = node.start
        state.plan_cursor = k

        if k > 0 and cfg.rethinking_enabled and should_rethink(profile.occupation, env.meo, rng):
            decision = rethink(
                state, node, profile, env.categories, env.backend, env.params, env.templates["rethink"], meo_value
            )
            decisions.append(
                {
                    "agent_id": profile.id,
                    "day": day_index,
                    "time": time_to_string(node.start),
                    "planned": node.intention,
                    "action": decision.action.value,
                    "new_activity": decision.new_activity,
                    "duration_minutes": decision.duration_minutes,
                    "reasoning": decision.reasoning,
                    "status": decision.status,
                }
            )
            if decision.status == "failed":
                summary = f"rethought-failed before {node.intention}"
            elif decision.action is Action.CHANGE:
                summary = f"changed {node.intention} to {decision.new_activity} for {decision.duration_minutes} min"
            else:
                summary = f"kept {node.intention}"
            state.remember(MemoryEvent(node.start, MemoryKind.RETHOUGHT, summary))
            if decision.action is Action.CHANGE:
                acts = apply_decision(acts, k, decision, env.poi_map.get(decision.new_activity))
                node = acts[k]

        deadline = acts[k + 1].start if k + 1 < len(acts) else SLOTS_PER_DAY
        current = env.db[state.current_location]
        try:
            dest = resolve_location(node, current, deadline, profile, env, rng)
        except GroundingError as exc:
            event("grounding-failure", time=time_to_string(node.start), reason=str(exc))
            dest = current

        mode = None
        arrival = node.start
        if dest.id != current.id:
            distance = haversine_m(current.location, dest.location)
            budget = (deadline - node.start) * SLOT_MINUTES * 60
            options, fits = trip_options(profile, distance, budget, env.speeds)
            if cfg.mode_source == "random":
                mode = random_mode(options, rng)
            elif fits:
                choice = choose_mode(
                    current, dest, node.intention, profile, node.start, options,
                    env.backend, env.params, env.templates["mode_choice"], env.speeds,
                )
                mode = choice.mode
            else:
                mode = options[0]
            arrival = node.start + env.speeds.travel_slots(distance, mode)
            if arrival > SLOTS_PER_DAY:
                event("trip-past-midnight", time=time_to_string(node.start), destination=dest.id)
                dest, mode, arrival = current, None, node.start
            elif arrival > deadline:
                event(
                    "prism-stretch",
                    time=time_to_string(node.start),
                    destination=dest.id,
                    mode=mode.value,
                    arrival=time_to_string(min(arrival, LAST_SLOT)),
                )
                acts = shift_from(acts, k + 1, arrival)
            if mode is not None:
                state.remember(
                    MemoryEvent(node.start, MemoryKind.TRAVELED, f"went to {dest.name} by {mode.value}")
                )

        raw.append((node, dest, mode, arrival))
        state.remember(MemoryEvent(node.start, MemoryKind.EXECUTED, f"{node.intention} at {dest.name}"))
        state.current_location = dest.id
        state.last_activity = node
        k += 1

    records = []
    for i, (node, poi, mode, arrival) in enumerate(raw):
        end = raw[i + 1][0].start if i + 1 < len(raw) else LAST_SLOT
        records.append(
            TrajectoryRecord(
                intention=node.intention,
                poi_id=poi.id,
                lat=poi.location.lat,
                lon=poi.location.lon,
                start=node.start,
                end=end,
                mode=mode,
                arrival=arrival if mode is not None else None,
                description=node.description,
            )
        )
    trajectory = Trajectory(profile.id, day_index, tuple(records))
    problems = trajectory_problems(records)
    if problems:
        raise MobsynthError(f"internal: invalid trajectory for {profile.id}: {problems}")
    executed = ActivityPlan(tuple(node for node, *_ in raw))
    if fallback:
        event("fallback-plan", reason=fallback)
    return AgentDay(trajectory, executed, narrative, report, fallback, decisions, events)


def simulate_agent(profile: PersonProfile, env: Environment, rng: RngStream, day_index: int = 0) -> Trajectory:
    return run_agent_day(profile, env, rng, day_index).trajectory


# --------------------------------------------------------------------------- population


@dataclass
class RunArtifacts:
    trajectories: list[Trajectory]
    narratives: list[dict]
    plans: list[dict]
    decisions: list[dict]
    events: list[dict]
    manifest: dict


def _jsonl_digest(rows: Sequence[dict]) -> str:
    h = hashlib.sha256()
    for row in rows:
        h.update(json.dumps(row, sort_keys=True, separators=(",", ":")).encode("utf-8"))
        h.update(b"\n")
    return h.hexdigest()


def manifest_digest(manifest: dict) -> str:
    stable = {k: v for k, v in manifest.items() if k not in ("timings", "manifest_digest")}
    return hashlib.sha256(json.dumps(stable, sort_keys=True).encode("utf-8")).hexdigest()


def simulate_population(
    profiles: Sequence[PersonProfile],
    env: Environment,
    input_digests: dict[str, str] | None = None,
) -> RunArtifacts:
    """Simulate every profile for ``day_count`` days; failures never abort the run."""
    if not profiles:
        raise ConfigError("no profiles to simulate")
    cfg = env.config
    t0 = time.perf_counter()
    jobs = [(p, d) for p in profiles for d in range(cfg.day_count)]

    def run(job):
        profile, day = job
        try:
            return job, run_agent_day(profile, env, RngStream(cfg.seed, profile.id, day), day), None
        except Exception as exc:  # recorded in the manifest, the run continues
            log.warning("agent %s day %d failed: %s", profile.id, day, exc)
            return job, None, f"{type(exc).__name__}: {exc}"

    with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
        results = list(pool.map(run, jobs))
    results.sort(key=lambda r: (r[0][0].id, r[0][1]))

    trajectories, narratives, plans, decisions, events, failures, fallbacks = [], [], [], [], [], [], []
    for (profile, day), result, error in results:
        if result is None:
            failures.append({"agent_id": profile.id, "day": day, "error": error})
            continue
        trajectories.append(result.trajectory)
        if result.narrative is not None:
            narratives.append({"agent_id": profile.id, "day": day, **result.narrative.to_dict()})
        plan_row = {"agent_id": profile.id, "day": day, "fallback": result.fallback}
        if result.plan_report is not None:
            plan_row["parse"] = result.plan_report.to_dict(profile.id)
        plan_row["executed_plan"] = [
            {"activity": a.intention, "start_time": time_to_string(a.start), "description": a.description}
            for a in result.plan
        ]
        plans.append(plan_row)
        decisions.extend(result.decisions)
        events.extend(result.events)
        if result.fallback:
            fallbacks.append({"agent_id": profile.id, "day": day, "reason": result.fallback})

    traj_rows = [t.to_dict() for t in trajectories]
    manifest = {
        "config_digest": cfg.digest(),
        "seed": cfg.seed,
        "plan_source": cfg.plan_source,
        "mode_source": cfg.mode_source,
        "rethinking_enabled": cfg.rethinking_enabled,
        "backend": cfg.backend.kind,
        "inputs": dict(input_digests or {}),
        "counts": {
            "profiles": len(profiles),
            "agent_days": len(jobs),
            "trajectories": len(trajectories),
            "failures": len(failures),
            "fallback_plans": len(fallbacks),
            "rethink_decisions": len(decisions),
            "change_decisions": sum(1 for d in decisions if d["action"] == "change"),
            "trips": sum(1 for t in trajectories for r in t.records if r.mode is not None),
        },
        "failures": failures,
        "fallbacks": fallbacks,
        "trajectory_digest": _jsonl_digest(traj_rows),
        "timings": {"simulate_s": round(time.perf_counter() - t0, 4)},
    }
    manifest["manifest_digest"] = manifest_digest(manifest)
    return RunArtifacts(trajectories, narratives, plans, decisions, events, manifest)


def write_jsonl(path: Path, rows) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row, sort_keys=True, ensure_ascii=False) + "\n")


def read_trajectories(path: str | Path) -> list[Trajectory]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                out.append(Trajectory.from_dict(json.loads(line)))
    return out


def write_run(artifacts: RunArtifacts, out_dir: str | Path) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_jsonl(out / "trajectories.jsonl", (t.to_dict() for t in artifacts.trajectories))
    write_jsonl(out / "narratives.jsonl", artifacts.narratives)
    write_jsonl(out / "plans.jsonl", artifacts.plans)
    write_jsonl(out / "decisions.jsonl", artifacts.decisions)
    write_jsonl(out / "events.jsonl", artifacts.events)
    (out / "manifest.json").write_text(json.dumps(artifacts.manifest, indent=2, sort_keys=True) + "\n")
    return out
