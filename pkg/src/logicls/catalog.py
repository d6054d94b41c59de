"""Bundled scenario constraint files and the reference dataset manifest."""

from __future__ import annotations

import json
from importlib import resources
from pathlib import Path

from .lang.ast import ScenarioSpec
from .lang.parser import parse
from .manifest import DatasetManifest, manifest_from_dict


def _root(sub: str) -> Path:
    return Path(str(resources.files("logicls") / sub))


def scenario_names() -> list[str]:
    return sorted(p.stem for p in _root("scenarios").glob("*.lcs"))


def scenario_path(name: str) -> Path:
    path = _root("scenarios") / f"{name}.lcs"
    if not path.is_file():
        raise KeyError(f"no bundled scenario {name!r}; known: {', '.join(scenario_names())}")
    return path


def load_scenario(name: str) -> ScenarioSpec:
    return parse(scenario_path(name).read_text(encoding="utf-8"))


def load_all() -> dict[str, ScenarioSpec]:
    return {name: load_scenario(name) for name in scenario_names()}


def reference_manifest() -> DatasetManifest:
    """Per-scenario split counts of the reference benchmark, without file listings."""
    path = _root("data") / "table1_manifest.json"
    return manifest_from_dict(json.loads(path.read_text(encoding="utf-8")), root=_root("scenarios"))
