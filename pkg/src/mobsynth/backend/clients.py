"""Text-generation backends: a chat-completions HTTP client and a scripted mock."""

from __future__ import annotations

import json
import logging
import os
import threading
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Protocol

import httpx

from ..errors import BackendUnavailable, ConfigError, ProtocolError

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class GenerationParams:
    temperature: float = 1.0
    max_tokens: int = 1024
    timeout: float = 60.0
    max_retries: int = 3

    def __post_init__(self) -> None:
        if self.temperature < 0:
            raise ConfigError("temperature must be >= 0")

    def with_temperature(self, temperature: float) -> "GenerationParams":
        return replace(self, temperature=temperature)


class Backend(Protocol):
    name: str

    def complete(self, system: str, user: str, params: GenerationParams, template: str | None = None) -> str: ...


# --------------------------------------------------------------------------- mock


@dataclass(frozen=True)
class MockRule:
    response: str = ""
    match: str | None = None
    template: str | None = None
    error: str | None = None  # raise BackendUnavailable instead of answering

    def matches(self, prompt: str, template: str | None) -> bool:
        if self.template is not None and self.template != template:
            return False
        if self.match is not None and self.match not in prompt:
            return False
        return True


@dataclass(frozen=True)
class MockScript:
    rules: tuple[MockRule, ...] = ()
    default: str = ""

    @classmethod
    def from_json(cls, data) -> "MockScript":
        """Accept a bare list of rules or ``{"rules": [...], "default": ...}``."""
        if isinstance(data, list):
            data = {"rules": data}
        if not isinstance(data, dict):
            raise ConfigError("mock script must be a JSON array or object")
        rules = []
        default = data.get("default", "")
        for i, r in enumerate(data.get("rules", [])):
            if not isinstance(r, dict):
                raise ConfigError(f"mock rule {i} is not an object")
            if r.get("default"):
                default = r.get("response", "")
                continue
            if "response" not in r and "error" not in r:
                raise ConfigError(f"mock rule {i} has no response")
            rules.append(
                MockRule(
                    response=r.get("response", ""),
                    match=r.get("match"),
                    template=r.get("template"),
                    error=r.get("error"),
                )
            )
        return cls(tuple(rules), default)

    @classmethod
    def load(cls, path: str | Path) -> "MockScript":
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read mock script {path}: {exc}") from exc
        return cls.from_json(data)


class MockBackend:
    """Deterministic backend: first rule whose matchers all hold wins."""

    name = "mock"

    def __init__(self, script: MockScript):
        self.script = script

    def complete(self, system: str, user: str, params: GenerationParams, template: str | None = None) -> str:
        prompt = f"{system}\n{user}"
        for rule in self.script.rules:
            if rule.matches(prompt, template):
                if rule.error is not None:
                    raise BackendUnavailable(rule.error)
                return rule.response
        return self.script.default


# --------------------------------------------------------------------------- remote


@dataclass
class RemoteBackend:
    """Client for an OpenAI-style ``/chat/completions`` endpoint."""

    endpoint_url: str
    model_name: str
    api_key_env: str | None = None
    max_in_flight: int = 8
    backoff_base: float = 1.0
    sleep: Callable[[float], None] = time.sleep
    transport: httpx.BaseTransport | None = None
    name: str = "remote"
    _slots: threading.BoundedSemaphore = field(init=False, repr=False)
    _client: httpx.Client | None = field(init=False, default=None, repr=False)

    def __post_init__(self) -> None:
        if not self.endpoint_url or not self.model_name:
            raise ConfigError("remote backend needs an endpoint URL and a model name")
        if self.max_in_flight < 1:
            raise ConfigError("max_in_flight must be >= 1")
        self._slots = threading.BoundedSemaphore(self.max_in_flight)
        self._lock = threading.Lock()

    def _http(self) -> httpx.Client:
        with self._lock:
            if self._client is None:
                self._client = httpx.Client(transport=self.transport)
            return self._client

    def _headers(self) -> dict[str, str]:
        headers = {"Content-Type": "application/json"}
        if self.api_key_env:
            key = os.environ.get(self.api_key_env)
            if key:
                headers["Authorization"] = f"Bearer {key}"
            else:
                log.warning("environment variable %s is not set; sending no API key", self.api_key_env)
        return headers

    def complete(self, system: str, user: str, params: GenerationParams, template: str | None = None) -> str:
        payload = {
            "model": self.model_name,
            "messages": [
                {"role": "system", "content": system},
                {"role": "user", "content": user},
            ],
            "temperature": params.temperature,
            "max_tokens": params.max_tokens,
        }
        attempts = max(1, params.max_retries)
        last_error = ""
        for attempt in range(attempts):
            if attempt:
                self.sleep(self.backoff_base * 2 ** (attempt - 1))
            try:
                with self._slots:
                    resp = self._http().post(
                        self.endpoint_url, json=payload, headers=self._headers(), timeout=params.timeout
                    )
            except httpx.TransportError as exc:
                last_error = f"transport error: {exc}"
                log.info("backend attempt %d failed: %s", attempt + 1, last_error)
                continue
            if resp.status_code >= 500:
                last_error = f"HTTP {resp.status_code}"
                log.info("backend attempt %d failed: %s", attempt + 1, last_error)
                continue
            if resp.status_code >= 400:
                raise ProtocolError(f"HTTP {resp.status_code} from backend", resp.text)
            return _assistant_text(resp.text)
        raise BackendUnavailable(f"backend unavailable after {attempts} attempts ({last_error})")

    def close(self) -> None:
        if self._client is not None:
            self._client.close()


def _assistant_text(body: str) -> str:
    try:
        data = json.loads(body)
        content = data["choices"][0]["message"]["content"]
    except (json.JSONDecodeError, KeyError, IndexError, TypeError):
        raise ProtocolError("unparseable chat-completions payload", body) from None
    if not isinstance(content, str):
        raise ProtocolError("assistant content is not text", body)
    return content


# --------------------------------------------------------------------------- construction


@dataclass(frozen=True)
class BackendKind:
    kind: str  # "remote" | "mock"
    endpoint_url: str = ""
    model_name: str = ""
    api_key_env: str | None = None
    script_path: str | None = None
    max_in_flight: int = 8

    def __post_init__(self) -> None:
        if self.kind not in ("remote", "mock"):
            raise ConfigError(f"unknown backend kind {self.kind!r}")
        if self.kind == "remote" and (not self.endpoint_url or not self.model_name):
            raise ConfigError("remote backend needs endpoint_url and model_name")


def make_backend(kind: BackendKind) -> Backend:
    if kind.kind == "mock":
        script = MockScript.load(kind.script_path) if kind.script_path else MockScript()
        return MockBackend(script)
    return RemoteBackend(kind.endpoint_url, kind.model_name, kind.api_key_env, max_in_flight=kind.max_in_flight)


def complete(backend: Backend, system: str, user: str, params: GenerationParams, template: str | None = None) -> str:
    return backend.complete(system, user, params, template=template)
