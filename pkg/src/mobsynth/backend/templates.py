"""Prompt templates and rendering.

Built-in templates live as text files next to this module, one pair
(``<name>.system.txt``/``<name>.user.txt``) per template. A template
directory can override any file; missing files fall back to the built-ins.
Literal braces are written ``{{``/``}}`` as in :meth:`str.format`.
"""

from __future__ import annotations

import logging
import string
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from ..errors import ConfigError, TemplateError

log = logging.getLogger(__name__)

TEMPLATE_NAMES = ("narrative", "parse_plan", "rethink", "mode_choice", "direct_plan")

# The plan-extraction example shown to the model in place of {example_json}.
DEFAULT_PLAN_EXAMPLE = """{
  "plan": [
    {"activity": "sleep", "start_time": "00:00", "description": "Sleeping at home"},
    {"activity": "eating", "start_time": "07:30", "description": "Breakfast at home"},
    {"activity": "work_study", "start_time": "08:30", "description": "Working at the office"},
    {"activity": "eating", "start_time": "12:00", "description": "Lunch near the office"},
    {"activity": "leisure", "start_time": "19:00", "description": "Evening walk in the park"},
    {"activity": "sleep", "start_time": "23:00", "description": "Going to bed"}
  ]
}"""


@dataclass(frozen=True)
class PromptTemplate:
    name: str
    system_text: str
    user_text: str

    @property
    def placeholders(self) -> set[str]:
        return placeholders_in(self.system_text) | placeholders_in(self.user_text)


def placeholders_in(text: str) -> set[str]:
    names = set()
    for _, field_name, _, _ in string.Formatter().parse(text):
        if field_name is not None:
            if not field_name.isidentifier():
                raise ConfigError(f"bad placeholder {{{field_name}}}")
            names.add(field_name)
    return names


def render(template: PromptTemplate, bindings: dict[str, str]) -> tuple[str, str]:
    """Substitute every ``{name}`` in both texts with its binding.

    A missing binding raises :class:`TemplateError`; extra bindings are
    logged and ignored.
    """
    needed = template.placeholders
    for name in sorted(needed):
        if name not in bindings:
            raise TemplateError(name, template.name)
    extra = set(bindings) - needed
    if extra:
        log.warning("template %s: ignoring unknown bindings %s", template.name, sorted(extra))
    values = {k: str(v) for k, v in bindings.items() if k in needed}
    return template.system_text.format_map(values), template.user_text.format_map(values)


def _builtin_text(filename: str) -> str:
    return resources.files(__package__).joinpath("templates", filename).read_text(encoding="utf-8")


def load_template(name: str, override_dir: str | Path | None = None) -> PromptTemplate:
    texts = {}
    for part in ("system", "user"):
        filename = f"{name}.{part}.txt"
        path = Path(override_dir) / filename if override_dir else None
        if path is not None and path.is_file():
            texts[part] = path.read_text(encoding="utf-8")
        else:
            try:
                texts[part] = _builtin_text(filename)
            except FileNotFoundError:
                raise ConfigError(f"no template file {filename}") from None
    template = PromptTemplate(name, texts["system"], texts["user"])
    template.placeholders  # validates placeholder syntax
    return template


def load_templates(override_dir: str | Path | None = None) -> dict[str, PromptTemplate]:
    return {name: load_template(name, override_dir) for name in TEMPLATE_NAMES}
