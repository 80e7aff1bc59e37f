"""Shared builders for the test suite."""

from __future__ import annotations

import json
import math
from pathlib import Path

from mobsynth.backend import MockBackend, MockScript, load_templates
from mobsynth.config import SimulationConfig
from mobsynth.core import POI, GeoPoint, PersonProfile, Trajectory, TrajectoryRecord, TransportMode
from mobsynth.engine import Environment
from mobsynth.spatial import POIDatabase

FIXTURES = Path(__file__).parent / "fixtures"
GOLDEN = Path(__file__).parent / "golden"

ORIGIN = GeoPoint(23.1200, 113.3500)


def fixture_text(name: str) -> str:
    return (FIXTURES / name).read_text(encoding="utf-8")


def fixture_json(name: str):
    return json.loads(fixture_text(name))


def offset(p: GeoPoint, east_m: float, north_m: float) -> GeoPoint:
    dlat = math.degrees(north_m / 6_371_000.0)
    dlon = math.degrees(east_m / (6_371_000.0 * math.cos(math.radians(p.lat))))
    return GeoPoint(p.lat + dlat, p.lon + dlon)


def campus_city() -> list[POI]:
    """Home about 5 km from campus; one cafeteria, one park, one of everything else."""
    office = offset(ORIGIN, 3500, 3500)
    return [
        POI("home", "Apartment", "home", ORIGIN),
        POI("office", "Faculty office", "workplace", office),
        POI("cafeteria", "Campus cafeteria", "restaurant", offset(office, 150, 100)),
        POI("park", "Riverside park", "park", offset(ORIGIN, 400, -300)),
        POI("club", "Staff club", "entertainment", offset(office, -200, 150)),
        POI("market", "Market", "shop", offset(ORIGIN, -600, 200)),
        POI("post", "Post office", "service", offset(ORIGIN, 300, 500)),
        POI("gym", "Gym", "sports", offset(ORIGIN, -400, -400)),
    ]


def lecturer(**overrides) -> PersonProfile:
    fields = dict(
        id="lecturer-b",
        age=41,
        gender="female",
        occupation="University Lecturer",
        home_poi="home",
        income_band="middle",
        education="postgraduate",
        owns_car=True,
        owns_ebike=False,
        work_poi="office",
    )
    fields.update(overrides)
    return PersonProfile(**fields)


def make_env(rules=None, default="", pois=None, **config) -> Environment:
    script = MockScript.from_json({"rules": list(rules or []), "default": default})
    cfg = SimulationConfig(**config)
    return Environment(POIDatabase(pois or campus_city()), cfg, MockBackend(script), load_templates())


class CountingBackend:
    """Wraps a backend and records the template name of every call."""

    def __init__(self, inner):
        self.inner = inner
        self.calls: list[str | None] = []
        self.name = getattr(inner, "name", "wrapped")

    def complete(self, system, user, params, template=None):
        self.calls.append(template)
        return self.inner.complete(system, user, params, template=template)


def record(intention, poi_id, lat, lon, start, end, mode=None, arrival=None) -> TrajectoryRecord:
    return TrajectoryRecord(
        intention, poi_id, lat, lon, start, end, TransportMode(mode) if mode else None, arrival
    )


def trajectory(records, agent_id="a", day=0) -> Trajectory:
    return Trajectory(agent_id, day, tuple(records))
