"""Dataset manifests: per-scenario split counts plus scene file listings."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .errors import SceneParseError, SceneValidationError
from .scene import NORMAL, atomic_write

SPLITS = ("train", "test")
COUNT_KEYS = ("normal", "single_anomaly", "multi_anomaly")


@dataclass(frozen=True)
class FileEntry:
    path: str
    labels: tuple[str, ...] | None = None

    @property
    def kind(self) -> str | None:
        """``normal``, ``single_anomaly`` or ``multi_anomaly``; None when unlabelled."""
        if self.labels is None:
            return None
        anomalies = [l for l in self.labels if l != NORMAL]
        if not anomalies:
            return "normal"
        return "single_anomaly" if len(anomalies) == 1 else "multi_anomaly"

    def to_dict(self) -> dict[str, Any]:
        data: dict[str, Any] = {"path": self.path}
        if self.labels is not None:
            data["labels"] = list(self.labels)
        return data


@dataclass
class ScenarioEntry:
    name: str
    counts: dict[str, dict[str, int]] = field(default_factory=dict)
    files: dict[str, list[FileEntry]] = field(default_factory=dict)
    spec: str | None = None

    def count(self, split: str, key: str) -> int:
        return self.counts.get(split, {}).get(key, 0)

    def to_dict(self) -> dict[str, Any]:
        data: dict[str, Any] = {split: dict(self.counts.get(split, {})) for split in SPLITS}
        data["files"] = {
            split: [f.to_dict() for f in self.files.get(split, [])] for split in SPLITS
        }
        if self.spec is not None:
            data["spec"] = self.spec
        return data


@dataclass
class DatasetManifest:
    scenarios: dict[str, ScenarioEntry] = field(default_factory=dict)
    root: Path = field(default_factory=Path)

    def resolve(self, entry: FileEntry) -> Path:
        p = Path(entry.path)
        return p if p.is_absolute() else self.root / p

    def to_dict(self) -> dict[str, Any]:
        return {"scenarios": {name: s.to_dict() for name, s in self.scenarios.items()}}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"


@dataclass(frozen=True)
class Violation:
    code: str
    scenario: str
    message: str

    def __str__(self) -> str:
        return f"[{self.code}] {self.scenario}: {self.message}"


@dataclass
class ValidationReport:
    violations: list[Violation] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def codes(self) -> set[str]:
        return {v.code for v in self.violations}

    def add(self, code: str, scenario: str, message: str) -> None:
        self.violations.append(Violation(code, scenario, message))


def manifest_from_dict(data: Any, root: str | os.PathLike[str] = ".") -> DatasetManifest:
    # Structural problems raise; invariant problems are left for validate_manifest.
    if not isinstance(data, dict) or not isinstance(data.get("scenarios"), dict):
        raise SceneValidationError("manifest must be an object with a 'scenarios' mapping")
    manifest = DatasetManifest(root=Path(root))
    for name, raw in data["scenarios"].items():
        if not isinstance(raw, dict):
            raise SceneValidationError(f"scenario {name!r} entry must be an object")
        counts: dict[str, dict[str, int]] = {}
        for split in SPLITS:
            block = raw.get(split, {})
            if not isinstance(block, dict):
                raise SceneValidationError(f"{name}.{split} must be an object of counts")
            counts[split] = dict(block)
        files: dict[str, list[FileEntry]] = {}
        for split, entries in (raw.get("files") or {}).items():
            if not isinstance(entries, list):
                raise SceneValidationError(f"{name}.files.{split} must be a list")
            parsed = []
            for e in entries:
                if isinstance(e, str):
                    parsed.append(FileEntry(e))
                elif isinstance(e, dict) and isinstance(e.get("path"), str):
                    labels = e.get("labels")
                    parsed.append(FileEntry(e["path"], tuple(labels) if labels is not None else None))
                else:
                    raise SceneValidationError(f"{name}.files.{split}: bad entry {e!r}")
            files[split] = parsed
        manifest.scenarios[name] = ScenarioEntry(name, counts, files, raw.get("spec"))
    return manifest


def load_manifest(path: str | os.PathLike[str]) -> DatasetManifest:
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise SceneParseError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
    return manifest_from_dict(data, root=path.parent)


def save_manifest(manifest: DatasetManifest, path: str | os.PathLike[str]) -> None:
    atomic_write(path, manifest.to_json())


def validate_manifest(manifest: DatasetManifest) -> ValidationReport:
    """Check every manifest invariant; problems become report entries, never exceptions."""
    report = ValidationReport()
    if not manifest.scenarios:
        report.add("empty", "*", "manifest declares no scenarios")
    for name, entry in manifest.scenarios.items():
        for split in SPLITS:
            for key, value in entry.counts.get(split, {}).items():
                if key not in COUNT_KEYS:
                    report.add("unknown_count", name, f"{split}.{key} is not a known count")
                    continue
                if isinstance(value, bool) or not isinstance(value, int) or value < 0:
                    report.add("negative_count", name, f"{split}.{key} = {value!r} is not a non-negative integer")
        train_multi = entry.counts.get("train", {}).get("multi_anomaly", 0)
        if isinstance(train_multi, int) and train_multi > 0:
            report.add(
                "multi_in_train", name,
                f"train split declares {train_multi} multi-anomaly scenes; they belong to test only",
            )
        for split, entries in entry.files.items():
            if split not in SPLITS:
                report.add("unknown_split", name, f"file listing for unknown split {split!r}")
                continue
            tally = {k: 0 for k in COUNT_KEYS}
            labelled = 0
            for fe in entries:
                kind = fe.kind
                if kind is None:
                    continue
                labelled += 1
                tally[kind] += 1
                if NORMAL in fe.labels and len(fe.labels) > 1:
                    report.add("bad_labels", name, f"{fe.path}: normal combined with anomalies")
                if split == "train" and kind == "multi_anomaly":
                    report.add("multi_in_train", name, f"{fe.path} carries multiple anomalies but is listed in train")
            if labelled and labelled == len(entries):
                for key in COUNT_KEYS:
                    declared = entry.count(split, key)
                    if isinstance(declared, int) and tally[key] != declared:
                        report.add(
                            "count_mismatch", name,
                            f"{split}.{key}: declared {declared}, listing has {tally[key]}",
                        )
    return report
