"""Domain types, the 15-minute time grid, geometry and per-agent RNG streams."""

from __future__ import annotations

import enum
import hashlib
import math
import re
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import ConfigError, TimeParseError

SLOT_MINUTES = 15
SLOTS_PER_DAY = 96
LAST_SLOT = SLOTS_PER_DAY - 1
EARTH_RADIUS_M = 6_371_000.0

DEFAULT_CATEGORIES: tuple[str, ...] = (
    "sleep",
    "work_study",
    "shopping",
    "eating",
    "leisure",
    "household",
    "social",
    "errand",
    "exercise",
    "other",
)

# Occupation groups and their rethinking probability.
MEO_GROUPS: dict[float, tuple[str, ...]] = {
    0.30: ("Factory Worker", "Clerical Staff", "Delivery Worker", "Technician", "Low-income Worker"),
    0.50: ("University Lecturer", "Civil Servant", "Engineer", "Office Worker", "Student"),
    0.70: ("Small Shopkeeper", "Business Owner", "Manager", "Senior Manager", "Corporate Staff"),
    0.20: ("Unemployed", "Retired"),
}
UNCLASSIFIED_OCCUPATION = "Unclassified"
UNCLASSIFIED_MEO = 0.50

NON_WORKING_OCCUPATIONS = frozenset({"Unemployed", "Retired"})


# --------------------------------------------------------------------------- time grid

TimeOfDay = int  # slot index in [0, 95]

_TIME_RE = re.compile(r"^\s*(\d{1,2}):(\d{2})\s*$")


def time_from_string(text: str) -> TimeOfDay:
    """Parse ``HH:MM`` and snap it to the nearest 15-minute slot.

    Minutes 0-7 past a quarter round down, 8-14 round up. Times that would
    round to 24:00 clamp to the last slot (23:45).
    """
    if not isinstance(text, str):
        raise TimeParseError(repr(text))
    m = _TIME_RE.match(text)
    if not m:
        raise TimeParseError(text)
    hh, mm = int(m.group(1)), int(m.group(2))
    if hh > 23 or mm > 59:
        raise TimeParseError(text)
    return snap_minutes(hh * 60 + mm)


def minutes_from_string(text: str) -> int:
    """Parse ``HH:MM`` into minutes after midnight without snapping."""
    m = _TIME_RE.match(text) if isinstance(text, str) else None
    if not m or int(m.group(1)) > 23 or int(m.group(2)) > 59:
        raise TimeParseError(str(text))
    return int(m.group(1)) * 60 + int(m.group(2))


def snap_minutes(minutes: int) -> TimeOfDay:
    slot, rem = divmod(int(minutes), SLOT_MINUTES)
    if rem >= 8:
        slot += 1
    return min(max(slot, 0), LAST_SLOT)


def time_to_string(slot: TimeOfDay) -> str:
    if not 0 <= slot <= SLOTS_PER_DAY:
        raise ValueError(f"slot out of range: {slot}")
    hh, mm = divmod(slot * SLOT_MINUTES, 60)
    return f"{hh:02d}:{mm:02d}"


def is_on_grid(minutes: int) -> bool:
    return minutes % SLOT_MINUTES == 0


# --------------------------------------------------------------------------- geometry


@dataclass(frozen=True)
class GeoPoint:
    lat: float
    lon: float

    def __post_init__(self) -> None:
        if not (-90.0 <= self.lat <= 90.0) or not (-180.0 <= self.lon <= 180.0):
            raise ValueError(f"invalid coordinates ({self.lat}, {self.lon})")


def haversine_m(a: GeoPoint, b: GeoPoint) -> float:
    """Great-circle distance in meters."""
    phi1, phi2 = math.radians(a.lat), math.radians(b.lat)
    dphi = phi2 - phi1
    dlam = math.radians(b.lon - a.lon)
    h = math.sin(dphi / 2) ** 2 + math.cos(phi1) * math.cos(phi2) * math.sin(dlam / 2) ** 2
    return 2 * EARTH_RADIUS_M * math.asin(min(1.0, math.sqrt(h)))


def haversine_many(origin: GeoPoint, lats: np.ndarray, lons: np.ndarray) -> np.ndarray:
    phi1 = math.radians(origin.lat)
    phi2 = np.radians(lats)
    dphi = phi2 - phi1
    dlam = np.radians(lons - origin.lon)
    h = np.sin(dphi / 2) ** 2 + math.cos(phi1) * np.cos(phi2) * np.sin(dlam / 2) ** 2
    return 2 * EARTH_RADIUS_M * np.arcsin(np.minimum(1.0, np.sqrt(h)))


# --------------------------------------------------------------------------- domain types


class TransportMode(str, enum.Enum):
    WALK = "walk"
    BIKE = "bike"
    EBIKE = "ebike"
    CAR = "car"
    BUS = "bus"
    SUBWAY = "subway"


MODE_ORDER: tuple[TransportMode, ...] = tuple(TransportMode)


@dataclass(frozen=True)
class POI:
    id: str
    name: str
    category: str
    location: GeoPoint
    attractiveness: float = 1.0

    def __post_init__(self) -> None:
        if not self.attractiveness > 0:
            raise ValueError(f"POI {self.id}: attractiveness must be > 0")


@dataclass(frozen=True)
class PersonProfile:
    id: str
    age: int
    gender: str
    occupation: str
    home_poi: str
    income_band: str = "unknown"
    education: str = "unknown"
    owns_car: bool = False
    owns_ebike: bool = False
    work_poi: str | None = None

    def __post_init__(self) -> None:
        if self.age < 0:
            raise ValueError(f"profile {self.id}: negative age")

    @property
    def work_status(self) -> str:
        if self.occupation in NON_WORKING_OCCUPATIONS:
            return f"not working ({self.occupation.lower()})"
        if self.occupation == "Student":
            return "studying, attends classes most days"
        return "employed, travels to work on workdays"

    def describe(self) -> str:
        """Plain-text profile used as the ``{character_profile}`` binding."""
        yes_no = {True: "yes", False: "no"}
        return "\n".join(
            [
                "**Character Profile:**",
                f"- Age: {self.age}",
                f"- Gender: {self.gender}",
                f"- Occupation: {self.occupation}",
                f"- Income: {self.income_band}",
                f"- Education: {self.education}",
                f"- Owns a car: {yes_no[self.owns_car]}",
                f"- Owns an e-bike: {yes_no[self.owns_ebike]}",
                f"- Work status: {self.work_status}",
            ]
        )


class MEOTable:
    """Occupation -> probability of reconsidering the plan at each activity node."""

    def __init__(self, values: dict[str, float] | None = None):
        if values is None:
            values = default_meo_values()
        for name, v in values.items():
            if not 0.0 <= float(v) <= 1.0:
                raise ConfigError(f"MEO value for {name!r} outside [0, 1]: {v}")
        self._values = {k: float(v) for k, v in values.items()}

    def __getitem__(self, occupation: str) -> float:
        try:
            return self._values[occupation]
        except KeyError:
            raise ConfigError(f"occupation {occupation!r} has no MEO entry") from None

    def __contains__(self, occupation: object) -> bool:
        return occupation in self._values

    def items(self):
        return self._values.items()

    def as_dict(self) -> dict[str, float]:
        return dict(self._values)

    def with_all(self, value: float) -> "MEOTable":
        return MEOTable({k: value for k in self._values})


def default_meo_values() -> dict[str, float]:
    values = {name: meo for meo, names in MEO_GROUPS.items() for name in names}
    values[UNCLASSIFIED_OCCUPATION] = UNCLASSIFIED_MEO
    return values


@dataclass(frozen=True)
class PlannedActivity:
    intention: str
    start: TimeOfDay
    location_category: str = ""
    description: str = ""

    def __post_init__(self) -> None:
        if not 0 <= self.start <= LAST_SLOT:
            raise ValueError(f"activity start slot out of range: {self.start}")


@dataclass(frozen=True)
class ActivityPlan:
    activities: tuple[PlannedActivity, ...]

    def __post_init__(self) -> None:
        problems = plan_problems(self.activities, min_len=1)
        if problems:
            raise ValueError("; ".join(problems))

    def __len__(self) -> int:
        return len(self.activities)

    def __iter__(self):
        return iter(self.activities)

    def __getitem__(self, i):
        return self.activities[i]


def plan_problems(activities: Sequence[PlannedActivity], min_len: int = 2) -> list[str]:
    problems = []
    if len(activities) < min_len:
        problems.append(f"plan has {len(activities)} activities, need at least {min_len}")
    if activities:
        first = activities[0]
        if first.intention != "sleep" or first.start != 0:
            problems.append("first activity must be sleep at 00:00")
    for prev, cur in zip(activities, activities[1:]):
        if cur.start < prev.start:
            problems.append(f"start times decrease at {time_to_string(cur.start)}")
            break
    return problems


class MemoryKind(str, enum.Enum):
    EXECUTED = "executed"
    RETHOUGHT = "rethought"
    TRAVELED = "traveled"


@dataclass(frozen=True)
class MemoryEvent:
    time: TimeOfDay
    kind: MemoryKind
    summary: str

    def render(self) -> str:
        return f"{time_to_string(self.time)} [{self.kind.value}] {self.summary}"


@dataclass
class AgentState:
    now: TimeOfDay
    current_location: str
    memory_cap: int = 10
    memory: deque = field(default_factory=deque)
    plan_cursor: int = 0
    last_activity: PlannedActivity | None = None

    def __post_init__(self) -> None:
        self.memory = deque(self.memory, maxlen=self.memory_cap)

    def remember(self, event: MemoryEvent) -> None:
        # most recent first; the oldest event falls off the right end
        self.memory.appendleft(event)


@dataclass(frozen=True)
class TrajectoryRecord:
    """One executed activity.

    ``start`` is the departure slot when a trip precedes the activity and
    ``arrival`` the slot in which the agent reaches the destination. ``end``
    equals the next record's start; the final record ends at slot 95 and
    covers it.
    """

    intention: str
    poi_id: str
    lat: float
    lon: float
    start: TimeOfDay
    end: TimeOfDay
    mode: TransportMode | None = None
    arrival: TimeOfDay | None = None
    description: str = ""

    @property
    def arrival_slot(self) -> int:
        return self.start if self.arrival is None else self.arrival

    def to_dict(self) -> dict:
        d = {
            "intention": self.intention,
            "poi_id": self.poi_id,
            "lat": self.lat,
            "lon": self.lon,
            "start": time_to_string(self.start),
            "end": time_to_string(self.end),
        }
        if self.mode is not None:
            d["mode"] = self.mode.value
            d["arrival"] = time_to_string(self.arrival_slot)
        if self.description:
            d["description"] = self.description
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrajectoryRecord":
        mode = d.get("mode")
        arrival = d.get("arrival")
        return cls(
            intention=d["intention"],
            poi_id=str(d["poi_id"]),
            lat=float(d["lat"]),
            lon=float(d["lon"]),
            start=_slot_of(d["start"]),
            end=_slot_of(d["end"]),
            mode=TransportMode(mode) if mode else None,
            arrival=_slot_of(arrival) if arrival is not None else None,
            description=d.get("description", ""),
        )


def _slot_of(value) -> int:
    if isinstance(value, int):
        return value
    if value == "24:00":  # end-of-day marker written for a trip landing at midnight
        return SLOTS_PER_DAY
    minutes = minutes_from_string(value)
    return minutes // SLOT_MINUTES if is_on_grid(minutes) else snap_minutes(minutes)


@dataclass(frozen=True)
class Trajectory:
    agent_id: str
    day_index: int
    records: tuple[TrajectoryRecord, ...]

    def to_dict(self) -> dict:
        return {
            "agent_id": self.agent_id,
            "day": self.day_index,
            "records": [r.to_dict() for r in self.records],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Trajectory":
        return cls(
            agent_id=str(d["agent_id"]),
            day_index=int(d.get("day", 0)),
            records=tuple(TrajectoryRecord.from_dict(r) for r in d["records"]),
        )

    def slot_intentions(self) -> list[str]:
        """The intention active in each of the 96 slots."""
        out: list[str] = []
        for i, rec in enumerate(self.records):
            stop = self.records[i + 1].start if i + 1 < len(self.records) else SLOTS_PER_DAY
            out.extend([rec.intention] * (stop - rec.start))
        return out


def trajectory_problems(records: Sequence[TrajectoryRecord]) -> list[str]:
    """Structural checks: tiling of the day and mode presence iff a move."""
    problems: list[str] = []
    if not records:
        return ["trajectory has no records"]
    if records[0].start != 0:
        problems.append("first record does not start at 00:00")
    for i, rec in enumerate(records):
        if rec.end < rec.start:
            problems.append(f"record {i} ends before it starts")
        if not rec.start <= rec.arrival_slot <= max(rec.end, rec.start) + (1 if i == len(records) - 1 else 0):
            problems.append(f"record {i} arrival outside its interval")
    for i, (prev, cur) in enumerate(zip(records, records[1:]), start=1):
        if prev.end != cur.start:
            problems.append(f"record {i} overlaps or leaves a gap after record {i - 1}")
        moved = prev.poi_id != cur.poi_id
        if moved and cur.mode is None:
            problems.append(f"record {i} changes location without a mode")
        if not moved and cur.mode is not None:
            problems.append(f"record {i} has a mode but no location change")
    if records[0].mode is not None:
        problems.append("first record carries a mode")
    if records[-1].end != LAST_SLOT:
        problems.append("last record does not end at 23:45")
    return problems


# --------------------------------------------------------------------------- rng


def _key_words(agent_id: str) -> list[int]:
    digest = hashlib.blake2b(agent_id.encode("utf-8"), digest_size=16).digest()
    return [int.from_bytes(digest[i : i + 4], "little") for i in range(0, 16, 4)]


class RngStream:
    """Counter-based random stream keyed by ``(seed, agent_id, day_index)``.

    Each key gets its own Philox stream, so the order in which agents run has
    no effect on any agent's draws.
    """

    def __init__(self, seed: int, agent_id: str, day_index: int = 0):
        self.seed = int(seed)
        self.key = (agent_id, int(day_index))
        seq = np.random.SeedSequence([self.seed & 0xFFFFFFFFFFFFFFFF, *_key_words(agent_id), int(day_index)])
        self.generator = np.random.Generator(np.random.Philox(seq))

    def random(self) -> float:
        return float(self.generator.random())

    def bernoulli(self, p: float) -> bool:
        # one draw per call even for degenerate p keeps stream positions aligned
        u = self.random()
        return u < p

    def integers(self, low: int, high: int) -> int:
        """Uniform integer in ``[low, high]`` inclusive."""
        return int(self.generator.integers(low, high + 1))

    def categorical(self, probabilities: Iterable[float]) -> int:
        cdf = np.cumsum(np.asarray(list(probabilities), dtype=float))
        u = self.random() * cdf[-1]
        idx = int(np.searchsorted(cdf, u, side="right"))
        return min(idx, len(cdf) - 1)
