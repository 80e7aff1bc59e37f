"""Destination choice, space-time feasibility and transport mode choice."""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .backend import Backend, GenerationParams, PromptTemplate, extract_json_block, render
from .core import (
    MODE_ORDER,
    POI,
    SLOT_MINUTES,
    GeoPoint,
    PersonProfile,
    RngStream,
    TimeOfDay,
    TransportMode,
    haversine_m,
    haversine_many,
    time_to_string,
)
from .errors import ConfigError, FeasibilityError, GroundingError, MobsynthError, NumericError

log = logging.getLogger(__name__)

MIN_DISTANCE_M = 10.0

DEFAULT_SPEEDS: dict[TransportMode, float] = {
    TransportMode.WALK: 1.4,
    TransportMode.BIKE: 4.0,
    TransportMode.EBIKE: 6.0,
    TransportMode.CAR: 8.3,
    TransportMode.BUS: 5.5,
    TransportMode.SUBWAY: 11.0,
}

# How options are shown to the model, and what we accept back.
MODE_LABELS: dict[TransportMode, str] = {
    TransportMode.WALK: "Walking",
    TransportMode.BIKE: "Cycling",
    TransportMode.EBIKE: "E-bike",
    TransportMode.CAR: "Driving",
    TransportMode.BUS: "Bus",
    TransportMode.SUBWAY: "Subway",
}
MODE_SYNONYMS: dict[str, TransportMode] = {
    "walk": TransportMode.WALK,
    "walking": TransportMode.WALK,
    "on foot": TransportMode.WALK,
    "bike": TransportMode.BIKE,
    "bicycle": TransportMode.BIKE,
    "cycling": TransportMode.BIKE,
    "cycle": TransportMode.BIKE,
    "ebike": TransportMode.EBIKE,
    "e-bike": TransportMode.EBIKE,
    "e bike": TransportMode.EBIKE,
    "e-biking": TransportMode.EBIKE,
    "electric bike": TransportMode.EBIKE,
    "car": TransportMode.CAR,
    "driving": TransportMode.CAR,
    "drive": TransportMode.CAR,
    "bus": TransportMode.BUS,
    "subway": TransportMode.SUBWAY,
    "metro": TransportMode.SUBWAY,
}


@dataclass(frozen=True)
class GravityParams:
    alpha: float = 1.0
    beta: float = -1.5
    candidate_cap: int = 50
    search_radius_m: float = 5000.0

    def __post_init__(self) -> None:
        if self.candidate_cap < 1:
            raise ConfigError("candidate_cap must be >= 1")
        if not self.search_radius_m > 0:
            raise ConfigError("search_radius_m must be > 0")


@dataclass(frozen=True)
class ModeSpeedTable:
    speeds: Mapping[TransportMode, float] = field(default_factory=lambda: dict(DEFAULT_SPEEDS))

    def __post_init__(self) -> None:
        for mode in MODE_ORDER:
            if not self.speeds.get(mode, 0) > 0:
                raise ConfigError(f"speed for {mode.value} must be > 0")

    def __getitem__(self, mode: TransportMode) -> float:
        return self.speeds[mode]

    def travel_seconds(self, distance_m: float, mode: TransportMode) -> float:
        return distance_m / self.speeds[mode]

    def travel_slots(self, distance_m: float, mode: TransportMode) -> int:
        """Travel time rounded up to whole 15-minute slots."""
        secs = self.travel_seconds(distance_m, mode)
        return max(1, math.ceil(secs / (SLOT_MINUTES * 60) - 1e-9)) if distance_m > 0 else 0


class POIDatabase:
    """Read-only POI collection with a per-category coordinate index."""

    def __init__(self, pois: Sequence[POI]):
        self.pois: dict[str, POI] = {}
        for p in pois:
            if p.id in self.pois:
                raise ConfigError(f"duplicate POI id {p.id!r}")
            self.pois[p.id] = p
        by_cat: dict[str, list[POI]] = {}
        for p in self.pois.values():
            by_cat.setdefault(p.category, []).append(p)
        self._index = {
            cat: (
                members,
                np.array([m.location.lat for m in members]),
                np.array([m.location.lon for m in members]),
            )
            for cat, members in by_cat.items()
        }

    def __len__(self) -> int:
        return len(self.pois)

    def __contains__(self, poi_id: object) -> bool:
        return poi_id in self.pois

    def __getitem__(self, poi_id: str) -> POI:
        return self.pois[poi_id]

    @property
    def categories(self) -> set[str]:
        return set(self._index)

    def category_members(self, category: str):
        return self._index.get(category)

    @classmethod
    def load(cls, path: str | Path) -> "POIDatabase":
        return cls(load_pois(path))


def load_pois(path: str | Path) -> list[POI]:
    """Read POIs from CSV or JSON/JSON-lines records."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read POI file {path}: {exc}") from exc
    if path.suffix.lower() in (".json", ".jsonl"):
        stripped = text.strip()
        if stripped.startswith("["):
            rows = json.loads(stripped)
        else:
            rows = [json.loads(line) for line in text.splitlines() if line.strip()]
    else:
        rows = list(csv.DictReader(text.splitlines()))
    pois = []
    for i, row in enumerate(rows):
        try:
            attr = row.get("attractiveness")
            pois.append(
                POI(
                    id=str(row["id"]),
                    name=str(row.get("name") or row["id"]),
                    category=str(row["category"]),
                    location=GeoPoint(float(row["lat"]), float(row["lon"])),
                    attractiveness=float(attr) if attr not in (None, "") else 1.0,
                )
            )
        except (KeyError, ValueError, TypeError) as exc:
            raise ConfigError(f"{path}: bad POI record {i}: {exc}") from exc
    if not pois:
        raise ConfigError(f"{path}: no POIs")
    return pois


# --------------------------------------------------------------------------- gravity


def candidate_pois(
    db: POIDatabase,
    category: str,
    origin: GeoPoint,
    params: GravityParams = GravityParams(),
) -> list[tuple[POI, float]]:
    """POIs of ``category`` near ``origin``, nearest first, with floored distances.

    The search radius doubles until at least one POI falls inside it.
    """
    entry = db.category_members(category)
    if entry is None or not entry[0]:
        raise GroundingError(f"no POI of category {category!r} in the city")
    members, lats, lons = entry
    dist = haversine_many(origin, lats, lons)
    radius = params.search_radius_m
    farthest = float(dist.max())
    while not (dist <= radius).any() and radius < farthest:
        radius *= 2
    inside = np.flatnonzero(dist <= radius)
    order = inside[np.lexsort((inside, dist[inside]))][: params.candidate_cap]
    return [(members[i], max(float(dist[i]), MIN_DISTANCE_M)) for i in order]


def gravity_probabilities(candidates: Sequence[tuple[POI, float]], params: GravityParams = GravityParams()) -> np.ndarray:
    """P_j proportional to D_j**beta * A_j**alpha, evaluated in log space."""
    if not candidates:
        raise NumericError("no candidates")
    logw = np.empty(len(candidates))
    for k, (poi, d) in enumerate(candidates):
        if not d > 0 or not poi.attractiveness > 0:
            raise NumericError(f"candidate {poi.id}: distance and attractiveness must be > 0")
        logw[k] = params.beta * math.log(d) + params.alpha * math.log(poi.attractiveness)
        if not math.isfinite(logw[k]):
            raise NumericError(f"candidate {poi.id}: non-finite gravity weight")
    w = np.exp(logw - logw.max())
    return w / w.sum()


def sample_destination(probabilities: Sequence[float], candidates: Sequence[tuple[POI, float]], rng: RngStream) -> POI:
    return candidates[rng.categorical(probabilities)][0]


# --------------------------------------------------------------------------- feasibility


def available_modes(profile: PersonProfile | None) -> list[TransportMode]:
    """Modes the person has access to; car and e-bike need ownership."""
    out = []
    for mode in MODE_ORDER:
        if mode is TransportMode.CAR and not (profile and profile.owns_car):
            continue
        if mode is TransportMode.EBIKE and not (profile and profile.owns_ebike):
            continue
        out.append(mode)
    return out


def trip_fits(distance_m: float, mode: TransportMode, budget_s: float, speeds: ModeSpeedTable) -> bool:
    return speeds.travel_seconds(distance_m, mode) <= budget_s + 1e-9


def prism_feasible(
    origin: GeoPoint,
    dest: GeoPoint,
    depart: TimeOfDay,
    deadline: TimeOfDay,
    speeds: ModeSpeedTable = ModeSpeedTable(),
    modes: Sequence[TransportMode] | None = None,
) -> bool:
    """Whether ``dest`` is reachable between the two slots with the fastest available mode."""
    if deadline < depart:
        raise ValueError("deadline precedes departure")
    distance = haversine_m(origin, dest)
    if distance == 0:
        return True
    modes = list(MODE_ORDER) if modes is None else list(modes)
    if not modes:
        return False
    fastest = max(speeds[m] for m in modes)
    return distance / fastest <= (deadline - depart) * SLOT_MINUTES * 60


def feasible_modes(
    distance_m: float, budget_s: float, modes: Sequence[TransportMode], speeds: ModeSpeedTable
) -> list[TransportMode]:
    return [m for m in modes if trip_fits(distance_m, m, budget_s, speeds)]


def fastest_mode(modes: Sequence[TransportMode], speeds: ModeSpeedTable) -> TransportMode:
    # ties broken by the fixed mode order
    return max(modes, key=lambda m: (speeds[m], -MODE_ORDER.index(m)))


# --------------------------------------------------------------------------- mode choice


@dataclass(frozen=True)
class ModeChoice:
    mode: TransportMode
    reasoning: str = ""
    fallback: bool = False


def interpret_mode(answer, options: Sequence[TransportMode]) -> TransportMode | None:
    if not isinstance(answer, str):
        return None
    key = answer.strip().lower()
    mode = MODE_SYNONYMS.get(key)
    if mode is None:
        for m, label in MODE_LABELS.items():
            if label.lower() == key:
                mode = m
    return mode if mode in options else None


def choose_mode(
    origin: POI,
    dest: POI,
    intention: str,
    profile: PersonProfile,
    now: TimeOfDay,
    options: Sequence[TransportMode],
    backend: Backend,
    params: GenerationParams,
    template: PromptTemplate,
    speeds: ModeSpeedTable = ModeSpeedTable(),
) -> ModeChoice:
    """Ask the model to pick one of ``options``; fall back to the fastest option.

    ``options`` must already be restricted to resource-permitted, feasible
    modes (see :func:`trip_options`).
    """
    if not options:
        raise FeasibilityError(f"no feasible mode from {origin.id} to {dest.id}")
    distance = haversine_m(origin.location, dest.location)
    system, user = render(
        template,
        {
            "character_profile": profile.describe(),
            "destination_poi_name": dest.name,
            "destination_poi_type": dest.category,
            "activity_type": intention,
            "distance": str(int(round(distance))),
            "formatted_time": time_to_string(now),
            "available_options": ", ".join(MODE_LABELS[m] for m in options),
        },
    )
    try:
        reply = backend.complete(system, user, params, template=template.name)
        obj = json.loads(extract_json_block(reply))
        mode = interpret_mode(obj.get("choice") if isinstance(obj, dict) else None, options)
        reasoning = str(obj.get("reasoning", "")) if isinstance(obj, dict) else ""
    except (MobsynthError, json.JSONDecodeError) as exc:
        log.info("mode choice reply unusable (%s); using fastest option", exc)
        mode, reasoning = None, ""
    if mode is None:
        return ModeChoice(fastest_mode(options, speeds), "fallback: fastest feasible mode", fallback=True)
    return ModeChoice(mode, reasoning)


def trip_options(
    profile: PersonProfile, distance_m: float, budget_s: float, speeds: ModeSpeedTable
) -> tuple[list[TransportMode], bool]:
    """Resource-permitted modes that fit the time budget.

    When none fits, returns the fastest permitted mode alone and ``False`` so
    the caller can stretch the schedule.
    """
    permitted = available_modes(profile)
    fitting = feasible_modes(distance_m, budget_s, permitted, speeds)
    if fitting:
        return fitting, True
    return [fastest_mode(permitted, speeds)], False


def random_mode(available: Sequence[TransportMode], rng: RngStream) -> TransportMode:
    if not available:
        raise FeasibilityError("no available mode")
    return available[rng.integers(0, len(available) - 1)]
