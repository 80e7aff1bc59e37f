"""Pull a JSON object out of chatty model output."""

from __future__ import annotations

import re

from ..errors import ExtractionError

_FENCE_RE = re.compile(r"```[A-Za-z0-9_-]*[ \t]*\n?(.*?)```", re.S)


def _scan_object(text: str, start: int) -> int | None:
    """Return the index just past the object opening at ``start``, or None."""
    depth = 0
    in_string = False
    escaped = False
    for i in range(start, len(text)):
        ch = text[i]
        if in_string:
            if escaped:
                escaped = False
            elif ch == "\\":
                escaped = True
            elif ch == '"':
                in_string = False
            continue
        if ch == '"':
            in_string = True
        elif ch == "{":
            depth += 1
        elif ch == "}":
            depth -= 1
            if depth == 0:
                return i + 1
    return None


def _first_object(text: str) -> str | None:
    pos = text.find("{")
    while pos != -1:
        end = _scan_object(text, pos)
        if end is not None:
            return text[pos:end]
        pos = text.find("{", pos + 1)
    return None


def extract_json_block(text: str) -> str:
    """Return the first balanced top-level ``{...}`` in ``text``.

    Bodies of code fences are searched first, then the raw text. The scan
    tracks brace depth and ignores braces inside double-quoted strings.
    """
    if not text:
        raise ExtractionError("no JSON object found", "")
    for body in _FENCE_RE.findall(text):
        found = _first_object(body)
        if found is not None:
            return found
    found = _first_object(text)
    if found is None:
        raise ExtractionError("no balanced JSON object found", text.strip()[:120])
    return found
