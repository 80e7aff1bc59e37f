"""Synthetic city, population and mock script for offline runs.

``write_demo`` lays out a directory that ``mobsynth simulate`` can run as-is
with the mock backend.
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

from .core import MEO_GROUPS, POI, GeoPoint, PersonProfile
from .ingest import profile_to_row

CITY_CENTER = GeoPoint(23.1300, 113.3800)

POI_COUNTS = {
    "workplace": 40,
    "shop": 30,
    "restaurant": 40,
    "park": 15,
    "entertainment": 15,
    "service": 20,
    "sports": 10,
}

OCCUPATIONS = [name for names in MEO_GROUPS.values() for name in names]

HOME_DAY_NARRATIVE = (
    "I got up a little after seven and made tea before anything else. Most of the morning "
    "went to chores: dishes around half past nine, then the laundry. I had a simple lunch "
    "at home at noon and read for a while in the afternoon. Around four I walked over to "
    "the park to sit in the shade, and I was back home by half past five to cook dinner. "
    "I watched television in the evening and went to bed around ten."
)

COMMUTER_NARRATIVE = (
    "My alarm went off at half past six. I showered, ate breakfast and left home at "
    "quarter past seven. I was at work by eight and spent the morning in meetings. "
    "At noon I grabbed lunch at a small place near the office, then worked through the "
    "afternoon. I left around six, stopped at the supermarket on the way back, and had "
    "dinner at home at seven. After dinner I read and was asleep by eleven."
)

HOME_DAY_PLAN = {
    "plan": [
        {"activity": "sleep", "start_time": "00:00", "description": "sleeping"},
        {"activity": "household", "start_time": "07:15", "description": "tea and getting up"},
        {"activity": "household", "start_time": "09:30", "description": "dishes and laundry"},
        {"activity": "eating", "start_time": "12:00", "description": "lunch at home"},
        {"activity": "leisure", "start_time": "16:00", "description": "sitting in the park"},
        {"activity": "household", "start_time": "17:30", "description": "cooking dinner"},
        {"activity": "leisure", "start_time": "19:30", "description": "television"},
        {"activity": "sleep", "start_time": "22:00", "description": "bed"},
    ]
}

COMMUTER_PLAN = {
    "plan": [
        {"activity": "sleep", "start_time": "00:00", "description": "sleeping"},
        {"activity": "household", "start_time": "06:30", "description": "shower and breakfast"},
        {"activity": "work_study", "start_time": "07:15", "description": "commute and start work"},
        {"activity": "eating", "start_time": "12:00", "description": "lunch near the office"},
        {"activity": "work_study", "start_time": "13:00", "description": "afternoon work"},
        {"activity": "shopping", "start_time": "18:00", "description": "supermarket"},
        {"activity": "eating", "start_time": "19:00", "description": "dinner at home"},
        {"activity": "leisure", "start_time": "20:00", "description": "reading"},
        {"activity": "sleep", "start_time": "23:00", "description": "asleep"},
    ]
}


def mock_script() -> dict:
    """Rules covering every prompt the pipeline sends."""
    fenced = lambda obj: "Here is the plan:\n```json\n" + json.dumps(obj, indent=2) + "\n```"  # noqa: E731
    rules = [
        {"template": "narrative", "match": "Work status: not working", "response": HOME_DAY_NARRATIVE},
        {"template": "narrative", "response": COMMUTER_NARRATIVE},
        {"template": "parse_plan", "match": "made tea before anything else", "response": fenced(HOME_DAY_PLAN)},
        {"template": "parse_plan", "response": fenced(COMMUTER_PLAN)},
        {"template": "direct_plan", "match": "Work status: not working", "response": json.dumps(HOME_DAY_PLAN)},
        {"template": "direct_plan", "response": json.dumps(COMMUTER_PLAN)},
        {
            "template": "rethink",
            "match": "Next planned activity: work_study",
            "response": '{"action": "follow", "reasoning": "Work cannot wait."}',
        },
        {
            "template": "rethink",
            "match": "Next planned activity: eating",
            "response": '{"action": "change", "new_activity": "social", "duration_minutes": 60, '
            '"reasoning": "A friend asked me to join them."}',
        },
        {
            "template": "rethink",
            "match": "Current time: 1",
            "response": '{"action": "change", "new_activity": "leisure", "duration_minutes": 90, '
            '"reasoning": "I feel like a break."}',
        },
        {"template": "rethink", "response": '{"action": "follow", "reasoning": "On schedule."}'},
        {
            "template": "mode_choice",
            "match": "Purpose of trip (your intention): work_study",
            "response": '{"reasoning": "It is quite far, driving is fastest.", "choice": "Driving"}',
        },
        {
            "template": "mode_choice",
            "match": "Purpose of trip (your intention): leisure",
            "response": '{"reasoning": "The distance is short, walking is nice.", "choice": "Walking"}',
        },
        {
            "template": "mode_choice",
            "match": "Purpose of trip (your intention): eating",
            "response": '{"reasoning": "Short hop.", "choice": "Cycling"}',
        },
        {"template": "mode_choice", "response": '{"reasoning": "The bus is cheap.", "choice": "Bus"}'},
    ]
    return {"rules": rules, "default": '{"action": "follow"}'}


def _offset(center: GeoPoint, east_m: float, north_m: float) -> GeoPoint:
    dlat = math.degrees(north_m / 6_371_000.0)
    dlon = math.degrees(east_m / (6_371_000.0 * math.cos(math.radians(center.lat))))
    return GeoPoint(round(center.lat + dlat, 6), round(center.lon + dlon, 6))


def make_city(n_homes: int, seed: int = 0, extent_m: float = 6000.0) -> list[POI]:
    rng = np.random.default_rng(seed)
    pois = []
    for i in range(n_homes):
        e, n = rng.uniform(-extent_m / 2, extent_m / 2, size=2)
        pois.append(POI(f"home-{i:04d}", f"Home {i}", "home", _offset(CITY_CENTER, e, n), 1.0))
    for cat, count in POI_COUNTS.items():
        for i in range(count):
            e, n = rng.normal(0, extent_m / 4, size=2)
            attr = float(np.round(rng.lognormal(0.0, 0.5), 3)) or 0.1
            pois.append(POI(f"{cat}-{i:03d}", f"{cat.title()} {i}", cat, _offset(CITY_CENTER, e, n), attr))
    return pois


def make_profiles(n: int, seed: int = 0) -> list[PersonProfile]:
    rng = np.random.default_rng(seed + 1)
    profiles = []
    for i in range(n):
        occupation = OCCUPATIONS[i % len(OCCUPATIONS)]
        working = occupation not in ("Retired", "Unemployed")
        age = int(rng.integers(62, 80)) if occupation == "Retired" else int(rng.integers(19, 60))
        profiles.append(
            PersonProfile(
                id=f"agent-{i:03d}",
                age=age,
                gender=("female", "male")[i % 2],
                occupation=occupation,
                home_poi=f"home-{i:04d}",
                income_band=("low", "middle", "high")[int(rng.integers(0, 3))],
                education=("secondary", "bachelor", "postgraduate")[int(rng.integers(0, 3))],
                owns_car=bool(rng.random() < 0.4),
                owns_ebike=bool(rng.random() < 0.3),
                work_poi=f"workplace-{int(rng.integers(0, POI_COUNTS['workplace'])):03d}" if working else None,
            )
        )
    return profiles


def write_demo(out_dir: str | Path, n_agents: int = 100, seed: int = 0) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    pois = make_city(n_agents, seed)
    with open(out / "pois.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["id", "name", "category", "lat", "lon", "attractiveness"])
        for p in pois:
            w.writerow([p.id, p.name, p.category, p.location.lat, p.location.lon, p.attractiveness])
    profiles = make_profiles(n_agents, seed)
    with open(out / "profiles.csv", "w", newline="", encoding="utf-8") as fh:
        rows = [profile_to_row(p) for p in profiles]
        w = csv.DictWriter(fh, fieldnames=list(rows[0]))
        w.writeheader()
        w.writerows(rows)
    (out / "mock_script.json").write_text(json.dumps(mock_script(), indent=2) + "\n", encoding="utf-8")
    config = {
        "seed": seed,
        "profiles_path": "profiles.csv",
        "pois_path": "pois.csv",
        "backend": {"kind": "mock", "script_path": "mock_script.json"},
    }
    (out / "config.json").write_text(json.dumps(config, indent=2) + "\n", encoding="utf-8")
    return out
