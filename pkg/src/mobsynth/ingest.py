"""Reading survey-style inputs: person profiles and ground-truth travel diaries."""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

from .core import (
    DEFAULT_CATEGORIES,
    LAST_SLOT,
    MEO_GROUPS,
    SLOT_MINUTES,
    UNCLASSIFIED_OCCUPATION,
    GeoPoint,
    PersonProfile,
    TimeOfDay,
    Trajectory,
    TrajectoryRecord,
    TransportMode,
    haversine_m,
    minutes_from_string,
    snap_minutes,
    time_to_string,
)
from .errors import ConfigError, TimeParseError
from .spatial import MODE_SYNONYMS, POIDatabase

log = logging.getLogger(__name__)

OUTLIER_SPEED_MPS = 40.0

REQUIRED_PROFILE_FIELDS = ("id", "age", "gender", "occupation", "home_poi")

OCCUPATION_SYNONYMS: dict[str, str] = {
    **{name.lower(): name for names in MEO_GROUPS.values() for name in names},
    "factory": "Factory Worker",
    "worker": "Factory Worker",
    "clerk": "Clerical Staff",
    "courier": "Delivery Worker",
    "delivery": "Delivery Worker",
    "lecturer": "University Lecturer",
    "professor": "University Lecturer",
    "teacher": "University Lecturer",
    "government employee": "Civil Servant",
    "programmer": "Engineer",
    "software engineer": "Engineer",
    "office staff": "Office Worker",
    "white collar": "Office Worker",
    "pupil": "Student",
    "shopkeeper": "Small Shopkeeper",
    "self-employed": "Business Owner",
    "entrepreneur": "Business Owner",
    "freelancer": "Business Owner",
    "executive": "Senior Manager",
    "jobless": "Unemployed",
    "retiree": "Retired",
    "pensioner": "Retired",
    "unclassified": UNCLASSIFIED_OCCUPATION,
}

# Free-text activity words commonly found in diaries.
DIARY_CATEGORY_SYNONYMS: dict[str, str] = {
    "home": "household",
    "work": "work_study",
    "study": "work_study",
    "school": "work_study",
    "shop": "shopping",
    "meal": "eating",
    "dining": "eating",
    "dine": "eating",
    "recreation": "leisure",
    "entertainment": "leisure",
    "visit": "social",
    "sport": "exercise",
    "sports": "exercise",
    "personal business": "errand",
}

_TRUE = {"1", "true", "yes", "y", "t"}


@dataclass
class IngestReport:
    accepted: int = 0
    rejected: int = 0
    reasons: list[dict] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)

    @property
    def total(self) -> int:
        return self.accepted + self.rejected

    def reject(self, record: str, reason: str, detail: str = "") -> None:
        self.rejected += 1
        self.reasons.append({"record": record, "reason": reason, "detail": detail})

    def to_dict(self) -> dict:
        return {
            "accepted": self.accepted,
            "rejected": self.rejected,
            "reasons": list(self.reasons),
            "warnings": list(self.warnings),
        }


def _read_records(path: str | Path) -> list[dict]:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    if not text.strip():
        raise ConfigError(f"{path} is empty")
    stripped = text.lstrip()
    try:
        if stripped.startswith("["):
            rows = json.loads(stripped)
        elif stripped.startswith("{"):
            rows = [json.loads(line) for line in text.splitlines() if line.strip()]
        else:
            rows = list(csv.DictReader(text.splitlines()))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    if not rows:
        raise ConfigError(f"{path} has no records")
    return rows


def normalize_occupation(raw: str) -> tuple[str, bool]:
    """Map free-text occupation onto the known vocabulary; ``False`` if unmapped."""
    key = " ".join(str(raw).strip().lower().replace("_", " ").split())
    if key in OCCUPATION_SYNONYMS:
        return OCCUPATION_SYNONYMS[key], True
    return UNCLASSIFIED_OCCUPATION, False


def _flag(value) -> bool:
    if isinstance(value, bool):
        return value
    return str(value).strip().lower() in _TRUE


def ingest_profiles(path: str | Path) -> tuple[list[PersonProfile], IngestReport]:
    rows = _read_records(path)
    present = set().union(*(r.keys() for r in rows))
    missing_cols = [c for c in REQUIRED_PROFILE_FIELDS if c not in present]
    if missing_cols:
        raise ConfigError(f"{path}: missing required columns {missing_cols}")
    report = IngestReport()
    profiles = []
    seen = set()
    for i, row in enumerate(rows):
        rid = str(row.get("id") or f"row{i}")
        empty = [c for c in REQUIRED_PROFILE_FIELDS if row.get(c) in (None, "")]
        if empty:
            report.reject(rid, "incomplete", f"missing {', '.join(empty)}")
            continue
        if rid in seen:
            report.reject(rid, "inconsistent", "duplicate id")
            continue
        occupation, known = normalize_occupation(row["occupation"])
        if not known:
            msg = f"{rid}: occupation {row['occupation']!r} unmapped, using {UNCLASSIFIED_OCCUPATION}"
            log.warning(msg)
            report.warnings.append(msg)
        try:
            profile = PersonProfile(
                id=rid,
                age=int(float(row["age"])),
                gender=str(row["gender"]),
                occupation=occupation,
                home_poi=str(row["home_poi"]),
                income_band=str(row.get("income_band") or "unknown"),
                education=str(row.get("education") or "unknown"),
                owns_car=_flag(row.get("owns_car", False)),
                owns_ebike=_flag(row.get("owns_ebike", False)),
                work_poi=str(row["work_poi"]) if row.get("work_poi") not in (None, "") else None,
            )
        except (ValueError, TypeError) as exc:
            report.reject(rid, "inconsistent", str(exc))
            continue
        seen.add(rid)
        profiles.append(profile)
        report.accepted += 1
    return profiles, report


def profile_to_row(p: PersonProfile) -> dict:
    return {
        "id": p.id,
        "age": p.age,
        "gender": p.gender,
        "occupation": p.occupation,
        "income_band": p.income_band,
        "education": p.education,
        "owns_car": p.owns_car,
        "owns_ebike": p.owns_ebike,
        "home_poi": p.home_poi,
        "work_poi": p.work_poi or "",
    }


# --------------------------------------------------------------------------- diaries


@dataclass(frozen=True)
class DiaryEntry:
    intention: str
    start: TimeOfDay
    poi_id: str
    lat: float
    lon: float
    mode: TransportMode | None = None

    def to_dict(self) -> dict:
        d = {
            "intention": self.intention,
            "start": time_to_string(self.start),
            "poi_id": self.poi_id,
            "lat": self.lat,
            "lon": self.lon,
        }
        if self.mode is not None:
            d["mode"] = self.mode.value
        return d


@dataclass(frozen=True)
class GroundTruthDiary:
    agent_id: str
    day: int
    entries: tuple[DiaryEntry, ...]

    def to_dict(self) -> dict:
        return {"agent_id": self.agent_id, "day": self.day, "entries": [e.to_dict() for e in self.entries]}

    def to_trajectory(self) -> Trajectory:
        """Render as a trajectory; a day not starting at midnight gets sleep prepended.

        Legs with no recorded mode stay mode-less and are left out of the mode
        distribution rather than guessed.
        """
        entries = list(self.entries)
        if entries[0].start != 0:
            first = entries[0]
            entries.insert(0, DiaryEntry("sleep", 0, first.poi_id, first.lat, first.lon))
        records = []
        for i, e in enumerate(entries):
            end = entries[i + 1].start if i + 1 < len(entries) else LAST_SLOT
            moved = i > 0 and entries[i - 1].poi_id != e.poi_id
            mode = e.mode if moved else None
            records.append(TrajectoryRecord(e.intention, e.poi_id, e.lat, e.lon, e.start, end, mode))
        return Trajectory(self.agent_id, self.day, tuple(records))


def coerce_category(raw, vocabulary: Sequence[str], synonyms: Mapping[str, str] = DIARY_CATEGORY_SYNONYMS) -> str | None:
    if not isinstance(raw, str):
        return None
    key = raw.strip().lower()
    for c in vocabulary:
        if c.lower() == key:
            return c
    mapped = synonyms.get(key)
    return mapped if mapped in vocabulary else None


def _parse_mode(raw) -> TransportMode | None:
    if raw in (None, ""):
        return None
    mode = MODE_SYNONYMS.get(str(raw).strip().lower())
    if mode is None:
        raise ValueError(f"unknown mode {raw!r}")
    return mode


def ingest_diaries(
    path: str | Path,
    vocabulary: Sequence[str] = DEFAULT_CATEGORIES,
    db: POIDatabase | None = None,
    max_speed_mps: float = OUTLIER_SPEED_MPS,
) -> tuple[list[GroundTruthDiary], IngestReport]:
    """Validate diaries: grid-snapped times, closed vocabulary, plausible travel speeds.

    Entries give a location as ``poi_id`` (resolved through ``db``) and/or
    ``lat``/``lon``. A diary is rejected whole when any entry is bad.
    """
    rows = _read_records(path)
    report = IngestReport()
    diaries = []
    for i, row in enumerate(rows):
        rid = f"{row.get('agent_id', f'row{i}')}/{row.get('day', 0)}"
        try:
            diary, reason, detail = _diary_from_row(row, vocabulary, db, max_speed_mps)
        except (KeyError, TypeError, ValueError) as exc:
            diary, reason, detail = None, "incomplete", str(exc)
        if diary is None:
            report.reject(rid, reason, detail)
            continue
        diaries.append(diary)
        report.accepted += 1
    return diaries, report


def _diary_from_row(row, vocabulary, db, max_speed):
    raw_entries = row.get("entries")
    if "agent_id" not in row or not isinstance(raw_entries, list) or not raw_entries:
        return None, "incomplete", "needs agent_id and a non-empty entries list"
    parsed = []
    for j, e in enumerate(raw_entries):
        intention = coerce_category(e.get("intention"), vocabulary)
        if intention is None:
            return None, "unknown-category", f"entry {j}: {e.get('intention')!r}"
        try:
            minutes = minutes_from_string(e["start"])
        except (KeyError, TimeParseError) as exc:
            return None, "incomplete", f"entry {j}: bad or missing start ({exc})"
        poi_id = e.get("poi_id")
        lat, lon = e.get("lat"), e.get("lon")
        if lat in (None, "") or lon in (None, ""):
            if poi_id is None or db is None or str(poi_id) not in db:
                return None, "inconsistent", f"entry {j}: location cannot be resolved"
            loc = db[str(poi_id)].location
            lat, lon = loc.lat, loc.lon
        point = GeoPoint(float(lat), float(lon))
        if poi_id in (None, ""):
            poi_id = f"{point.lat:.6f},{point.lon:.6f}"
        try:
            mode = _parse_mode(e.get("mode"))
        except ValueError as exc:
            return None, "inconsistent", f"entry {j}: {exc}"
        parsed.append((intention, minutes, str(poi_id), point, mode))

    for j in range(1, len(parsed)):
        if parsed[j][1] < parsed[j - 1][1]:
            return None, "inconsistent", f"entry {j} starts before entry {j - 1}"
    for j in range(1, len(parsed)):
        prev, cur = parsed[j - 1], parsed[j]
        if prev[2] == cur[2]:
            continue
        # speeds use grid times so re-ingesting snapped output gives the same verdict
        dist = haversine_m(prev[3], cur[3])
        slots = snap_minutes(cur[1]) - snap_minutes(prev[1])
        speed = dist / (max(slots, 1) * SLOT_MINUTES * 60)
        if speed > max_speed:
            return None, "outlier", f"leg {j} implies {speed:.1f} m/s"

    entries = tuple(
        DiaryEntry(intention, snap_minutes(minutes), poi_id, point.lat, point.lon, mode)
        for intention, minutes, poi_id, point, mode in parsed
    )
    return GroundTruthDiary(str(row["agent_id"]), int(row.get("day", 0)), entries), "", ""


def diaries_to_trajectories(diaries: Sequence[GroundTruthDiary]) -> list[Trajectory]:
    return [d.to_trajectory() for d in diaries]


def write_diaries(diaries: Sequence[GroundTruthDiary], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for d in diaries:
            fh.write(json.dumps(d.to_dict(), sort_keys=True) + "\n")
