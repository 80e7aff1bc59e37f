from .clients import (
    Backend,
    BackendKind,
    GenerationParams,
    MockBackend,
    MockRule,
    MockScript,
    RemoteBackend,
    complete,
    make_backend,
)
from .jsonblock import extract_json_block
from .templates import PromptTemplate, load_template, load_templates, render

__all__ = [
    "Backend",
    "BackendKind",
    "GenerationParams",
    "MockBackend",
    "MockRule",
    "MockScript",
    "PromptTemplate",
    "RemoteBackend",
    "complete",
    "extract_json_block",
    "load_template",
    "load_templates",
    "make_backend",
    "render",
]
