"""Run configuration (a single JSON file) and its validation."""

from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Literal

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .core import DEFAULT_CATEGORIES, MEOTable, TransportMode, default_meo_values
from .errors import ConfigError
from .planner import DEFAULT_ACTIVITY_POI_MAP
from .spatial import DEFAULT_SPEEDS, GravityParams, ModeSpeedTable

ABLATIONS = ("full", "random-plan", "direct-plan", "random-mode", "no-rethinking")


class GravitySection(BaseModel):
    model_config = ConfigDict(extra="forbid")

    alpha: float = 1.0
    beta: float = -1.5
    candidate_cap: int = Field(50, ge=1)
    search_radius_m: float = Field(5000.0, gt=0)


class BackendSection(BaseModel):
    model_config = ConfigDict(extra="forbid")

    kind: Literal["remote", "mock"] = "mock"
    endpoint_url: str = ""
    model_name: str = ""
    api_key_env: str | None = "LLM_API_KEY"
    script_path: str | None = None
    temperature: float = Field(1.0, ge=0)
    max_tokens: int = Field(1024, ge=1)
    timeout: float = Field(60.0, gt=0)
    max_retries: int = Field(3, ge=1)
    max_in_flight: int = Field(8, ge=1)
    template_dir: str | None = None


class SimulationConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    seed: int = 0
    day_count: int = Field(1, ge=1)
    profiles_path: str = "profiles.csv"
    pois_path: str = "pois.csv"
    meo_table: dict[str, float] = Field(default_factory=default_meo_values)
    gravity: GravitySection = Field(default_factory=GravitySection)
    mode_speeds: dict[TransportMode, float] = Field(default_factory=lambda: dict(DEFAULT_SPEEDS))
    categories: list[str] = Field(default_factory=lambda: list(DEFAULT_CATEGORIES))
    activity_poi_map: dict[str, str] = Field(default_factory=lambda: dict(DEFAULT_ACTIVITY_POI_MAP))
    backend: BackendSection = Field(default_factory=BackendSection)
    rethinking_enabled: bool = True
    plan_source: Literal["narrative_parsing", "direct_llm", "random"] = "narrative_parsing"
    mode_source: Literal["llm", "random"] = "llm"
    memory_cap: int = Field(10, ge=1)
    workers: int = Field(8, ge=1)

    @field_validator("categories")
    @classmethod
    def _vocabulary(cls, v: list[str]) -> list[str]:
        if not v:
            raise ValueError("category vocabulary must not be empty")
        if len(set(v)) != len(v):
            raise ValueError("category vocabulary has duplicates")
        if "sleep" not in v:
            raise ValueError("category vocabulary must contain 'sleep'")
        return v

    @field_validator("meo_table")
    @classmethod
    def _meo_range(cls, v: dict[str, float]) -> dict[str, float]:
        for name, p in v.items():
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"MEO for {name!r} must lie in [0, 1]")
        return v

    @model_validator(mode="after")
    def _coverage(self) -> "SimulationConfig":
        missing = [c for c in self.categories if c not in self.activity_poi_map]
        if missing:
            raise ValueError(f"activity_poi_map lacks categories {missing}")
        return self

    def with_ablation(self, ablation: str) -> "SimulationConfig":
        if ablation not in ABLATIONS:
            raise ConfigError(f"unknown ablation {ablation!r}")
        update = {
            "full": {},
            "random-plan": {"plan_source": "random"},
            "direct-plan": {"plan_source": "direct_llm"},
            "random-mode": {"mode_source": "random"},
            "no-rethinking": {"rethinking_enabled": False},
        }[ablation]
        return self.model_copy(update=update)

    # runtime views -----------------------------------------------------------

    def meo(self) -> MEOTable:
        return MEOTable(self.meo_table)

    def gravity_params(self) -> GravityParams:
        return GravityParams(**self.gravity.model_dump())

    def speeds(self) -> ModeSpeedTable:
        return ModeSpeedTable(dict(self.mode_speeds))

    def digest(self) -> str:
        canonical = json.dumps(self.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def load_config(path: str | Path) -> tuple[SimulationConfig, Path]:
    """Load a config; relative paths inside it resolve against its directory."""
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        cfg = SimulationConfig.model_validate(raw)
    except ValidationError as exc:
        raise ConfigError(f"invalid config {path}: {exc}") from exc
    return cfg, path.resolve().parent


def resolve(base: Path, p: str | None) -> Path | None:
    if p is None:
        return None
    q = Path(p)
    return q if q.is_absolute() else base / q
