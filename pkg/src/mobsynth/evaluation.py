"""Fidelity metrics: Jensen-Shannon divergences between generated and reference populations."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .core import DEFAULT_CATEGORIES, EARTH_RADIUS_M, MODE_ORDER, SLOTS_PER_DAY, Trajectory
from .errors import MetricError

EPSILON = 1e-9
RADIUS_EDGES = tuple(float(x) for x in np.geomspace(10.0, 50_000.0, 41))
LOCATION_LABELS = tuple(str(i) for i in range(1, 21)) + ("21+",)
MODE_LABELS = tuple(m.value for m in MODE_ORDER)


@dataclass(frozen=True)
class Distribution:
    """Probabilities over a fixed support (category labels or bin edges)."""

    labels: tuple
    probs: np.ndarray

    def __post_init__(self) -> None:
        p = np.asarray(self.probs, dtype=float)
        if p.ndim != 1 or len(p) != len(self.labels):
            raise MetricError("probability vector does not match its labels")
        if (p < 0).any() or abs(p.sum() - 1.0) > 1e-9:
            raise MetricError("probabilities must be non-negative and sum to 1")
        object.__setattr__(self, "probs", p)

    @classmethod
    def from_counts(cls, labels: Sequence, counts, eps: float = EPSILON) -> "Distribution":
        c = np.asarray(counts, dtype=float) + eps
        return cls(tuple(labels), c / c.sum())

    def as_dict(self) -> dict:
        return {"labels": [str(x) for x in self.labels], "probs": self.probs.tolist()}


def jsd(p: Distribution, q: Distribution) -> float:
    """Jensen-Shannon divergence with base-2 logs, so the result lies in [0, 1]."""
    if p.labels != q.labels:
        raise MetricError("distributions have different supports")
    a, b = p.probs, q.probs
    m = 0.5 * (a + b)
    with np.errstate(divide="ignore", invalid="ignore"):
        ta = np.where(a > 0, a * np.log2(a / m), 0.0)
        tb = np.where(b > 0, b * np.log2(b / m), 0.0)
    value = 0.5 * ta.sum() + 0.5 * tb.sum()
    return float(min(max(value, 0.0), 1.0))


# --------------------------------------------------------------------------- per-trajectory features


def local_xy(lats: np.ndarray, lons: np.ndarray) -> np.ndarray:
    """Equirectangular projection in meters around the mean coordinate."""
    lat0 = math.radians(float(np.mean(lats)))
    lon0 = float(np.mean(lons))
    x = EARTH_RADIUS_M * np.radians(lons - lon0) * math.cos(lat0)
    y = EARTH_RADIUS_M * np.radians(lats - float(np.mean(lats)))
    return np.column_stack([x, y])


def radius_of_gyration(trajectory: Trajectory) -> float:
    """Root-mean-square distance of the record locations from their centroid.

    Every record counts once, so repeated visits weigh more.
    """
    if not trajectory.records:
        raise MetricError(f"trajectory {trajectory.agent_id} has no records")
    lats = np.array([r.lat for r in trajectory.records])
    lons = np.array([r.lon for r in trajectory.records])
    xy = local_xy(lats, lons)
    centered = xy - xy.mean(axis=0)
    return float(np.sqrt((centered**2).sum(axis=1).mean()))


def daily_unique_locations(trajectory: Trajectory) -> int:
    return len({r.poi_id for r in trajectory.records})


# --------------------------------------------------------------------------- population distributions


def mode_distribution(trajectories: Sequence[Trajectory], eps: float = EPSILON) -> Distribution:
    counts = np.zeros(len(MODE_LABELS))
    for t in trajectories:
        for r in t.records:
            if r.mode is not None:
                counts[MODE_ORDER.index(r.mode)] += 1
    return Distribution.from_counts(MODE_LABELS, counts, eps)


def intention_sequence_distribution(
    trajectories: Sequence[Trajectory],
    vocabulary: Sequence[str] = DEFAULT_CATEGORIES,
    eps: float = EPSILON,
) -> Distribution:
    """Joint (slot, intention) frequencies over the population, flattened slot-major."""
    index = {c: i for i, c in enumerate(vocabulary)}
    k = len(vocabulary)
    counts = np.zeros(SLOTS_PER_DAY * k)
    for t in trajectories:
        seq = t.slot_intentions()
        if len(seq) != SLOTS_PER_DAY:
            raise MetricError(f"trajectory {t.agent_id} does not tile the day")
        for slot, name in enumerate(seq):
            if name not in index:
                raise MetricError(f"unknown category {name!r} in trajectory {t.agent_id}")
            counts[slot * k + index[name]] += 1
    labels = tuple(f"{slot}:{c}" for slot in range(SLOTS_PER_DAY) for c in vocabulary)
    return Distribution.from_counts(labels, counts, eps)


def radius_bin(value: float, edges: Sequence[float] = RADIUS_EDGES) -> int:
    n_bins = len(edges) - 1
    idx = int(np.searchsorted(np.asarray(edges), value, side="right")) - 1
    return min(max(idx, 0), n_bins - 1)


def radius_distribution(
    trajectories: Sequence[Trajectory],
    edges: Sequence[float] = RADIUS_EDGES,
    eps: float = EPSILON,
) -> Distribution:
    """Histogram of per-trajectory radius of gyration over shared edges.

    Values below the first edge land in the first bin, values above the last
    edge in the last bin.
    """
    if not trajectories:
        raise MetricError("no trajectories")
    edges = tuple(float(e) for e in edges)
    counts = np.zeros(len(edges) - 1)
    for t in trajectories:
        counts[radius_bin(radius_of_gyration(t), edges)] += 1
    labels = tuple(zip(edges[:-1], edges[1:]))
    return Distribution.from_counts(labels, counts, eps)


def locations_distribution(trajectories: Sequence[Trajectory], eps: float = EPSILON) -> Distribution:
    """Daily unique-location counts in unit bins 1..20, with 21 and more pooled."""
    counts = np.zeros(len(LOCATION_LABELS))
    for t in trajectories:
        n = daily_unique_locations(t)
        counts[min(max(n, 1), 21) - 1] += 1
    return Distribution.from_counts(LOCATION_LABELS, counts, eps)


# --------------------------------------------------------------------------- score


def final_score(jsd_intention: float, jsd_locations: float, jsd_mode: float, jsd_radius: float) -> float:
    values = (jsd_intention, jsd_locations, jsd_mode, jsd_radius)
    for v in values:
        if not 0.0 <= v <= 1.0:
            raise MetricError(f"JSD value {v} outside [0, 1]")
    return sum(1.0 - v for v in values) / 4.0


@dataclass
class EvaluationReport:
    jsd_intention: float
    jsd_locations: float
    jsd_mode: float
    jsd_radius: float
    final_score: float
    distributions: dict[str, tuple[Distribution, Distribution]] = field(default_factory=dict, repr=False)
    counts: dict[str, int] = field(default_factory=dict)

    def to_dict(self, include_distributions: bool = True) -> dict:
        d = {
            "jsd_intention": self.jsd_intention,
            "jsd_locations": self.jsd_locations,
            "jsd_mode": self.jsd_mode,
            "jsd_radius": self.jsd_radius,
            "final_score": self.final_score,
            "counts": dict(self.counts),
        }
        if include_distributions:
            d["distributions"] = {
                name: {
                    "labels": g.as_dict()["labels"],
                    "generated": g.probs.tolist(),
                    "reference": r.probs.tolist(),
                }
                for name, (g, r) in self.distributions.items()
            }
        return d

    def write_csvs(self, out_dir: str | Path) -> list[Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        paths = []
        for name, (g, r) in self.distributions.items():
            path = out / f"distribution_{name}.csv"
            with open(path, "w", newline="", encoding="utf-8") as fh:
                w = csv.writer(fh)
                w.writerow(["label", "p_generated", "p_reference"])
                for label, pg, pr in zip(g.as_dict()["labels"], g.probs, r.probs):
                    w.writerow([label, repr(float(pg)), repr(float(pr))])
            paths.append(path)
        return paths


def evaluate(
    generated: Sequence[Trajectory],
    reference: Sequence[Trajectory],
    vocabulary: Sequence[str] = DEFAULT_CATEGORIES,
    radius_edges: Sequence[float] = RADIUS_EDGES,
    eps: float = EPSILON,
) -> EvaluationReport:
    if not generated or not reference:
        raise MetricError("both populations must be non-empty")
    dists = {
        "intention": (
            intention_sequence_distribution(generated, vocabulary, eps),
            intention_sequence_distribution(reference, vocabulary, eps),
        ),
        "locations": (locations_distribution(generated, eps), locations_distribution(reference, eps)),
        "mode": (mode_distribution(generated, eps), mode_distribution(reference, eps)),
        "radius": (
            radius_distribution(generated, radius_edges, eps),
            radius_distribution(reference, radius_edges, eps),
        ),
    }
    values = {name: jsd(g, r) for name, (g, r) in dists.items()}
    return EvaluationReport(
        jsd_intention=values["intention"],
        jsd_locations=values["locations"],
        jsd_mode=values["mode"],
        jsd_radius=values["radius"],
        final_score=final_score(values["intention"], values["locations"], values["mode"], values["radius"]),
        distributions=dists,
        counts={"generated": len(generated), "reference": len(reference)},
    )
