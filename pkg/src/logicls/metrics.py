"""Binary and macro F1 over label sets, and the per-scenario evaluation harness."""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping, Sequence

from .aggregator import UnanswerablePolicy, classify
from .answerer import GroundTruthProvider, Provider
from .errors import MetricsError
from .lang.ast import ScenarioSpec
from .manifest import DatasetManifest
from .scene import LabelSet, Scene, load_scene

Pair = tuple[LabelSet, LabelSet]


@dataclass(frozen=True)
class Confusion:
    tp: int = 0
    fp: int = 0
    fn: int = 0
    tn: int = 0

    @property
    def precision(self) -> float:
        d = self.tp + self.fp
        return self.tp / d if d else 0.0

    @property
    def recall(self) -> float:
        d = self.tp + self.fn
        return self.tp / d if d else 0.0

    @property
    def f1(self) -> float:
        d = 2 * self.tp + self.fp + self.fn
        return 2 * self.tp / d if d else 0.0

    def to_dict(self) -> dict[str, int]:
        return {"tp": self.tp, "fp": self.fp, "fn": self.fn, "tn": self.tn}


def _confusion(flags: Iterable[tuple[bool, bool]]) -> Confusion:
    tp = fp = fn = tn = 0
    for gold, pred in flags:
        if gold and pred:
            tp += 1
        elif pred:
            fp += 1
        elif gold:
            fn += 1
        else:
            tn += 1
    return Confusion(tp, fp, fn, tn)


def _check(pairs: Sequence[Pair]) -> None:
    if not pairs:
        raise MetricsError("no (gold, predicted) pairs to score")


def binary_confusion(pairs: Sequence[Pair]) -> Confusion:
    _check(pairs)
    return _confusion((not g.is_normal, not p.is_normal) for g, p in pairs)


def binary_f1(pairs: Sequence[Pair]) -> float:
    """F1 of "anomalous vs normal" with every anomaly category merged into one positive class."""
    return binary_confusion(pairs).f1


@dataclass(frozen=True)
class MacroDetail:
    per_class: dict[str, Confusion]
    excluded: tuple[str, ...]

    @property
    def scored(self) -> list[str]:
        return [c for c in self.per_class if c not in self.excluded]

    @property
    def value(self) -> float:
        scored = self.scored
        if not scored:
            raise MetricsError("every class was excluded: none occurs in gold or predictions")
        return sum(self.per_class[c].f1 for c in scored) / len(scored)


def macro_detail(pairs: Sequence[Pair], classes: Iterable[str]) -> MacroDetail:
    _check(pairs)
    classes = list(dict.fromkeys(classes))
    if not classes:
        raise MetricsError("macro F1 needs at least one class")
    per_class = {c: _confusion((c in g, c in p) for g, p in pairs) for c in classes}
    excluded = tuple(c for c, m in per_class.items() if m.tp + m.fp + m.fn == 0)
    return MacroDetail(per_class, excluded)


def macro_f1(pairs: Sequence[Pair], classes: Iterable[str]) -> float:
    """Unweighted mean of per-class presence F1. Classes that never appear in either
    gold or predictions are left out (see :func:`macro_detail` for which)."""
    return macro_detail(pairs, classes).value


@dataclass
class ScenarioResult:
    scenario: str
    n_scenes: int
    binary_f1: float
    macro_f1: float | None
    binary: Confusion
    per_class: dict[str, Confusion]
    excluded: tuple[str, ...]

    def to_dict(self) -> dict[str, Any]:
        return {
            "scenario": self.scenario,
            "n_scenes": self.n_scenes,
            "binary_f1": self.binary_f1,
            "macro_f1": self.macro_f1,
            "binary_confusion": self.binary.to_dict(),
            "per_class": {
                c: {"precision": m.precision, "recall": m.recall, "f1": m.f1, **m.to_dict()}
                for c, m in self.per_class.items()
            },
            "excluded": list(self.excluded),
        }


@dataclass
class EvalReport:
    scenarios: list[ScenarioResult] = field(default_factory=list)

    @property
    def average_binary_f1(self) -> float:
        return sum(r.binary_f1 for r in self.scenarios) / len(self.scenarios)

    @property
    def average_macro_f1(self) -> float | None:
        vals = [r.macro_f1 for r in self.scenarios if r.macro_f1 is not None]
        return sum(vals) / len(vals) if vals else None

    def result(self, name: str) -> ScenarioResult:
        for r in self.scenarios:
            if r.scenario == name:
                return r
        raise KeyError(name)

    def to_dict(self) -> dict[str, Any]:
        return {
            "scenarios": [r.to_dict() for r in self.scenarios],
            "average": {"binary_f1": self.average_binary_f1, "macro_f1": self.average_macro_f1},
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def table(self) -> str:
        """Scenarios as columns plus an Average column; one row per metric, scores in percent."""
        names = [r.scenario for r in self.scenarios] + ["Average"]
        width = max(12, *(len(n) for n in names))

        def cell(v: float | None) -> str:
            return "n/a" if v is None else f"{100 * v:.2f}"

        rows = [
            ["Metric"] + names,
            ["binary F1"] + [cell(r.binary_f1) for r in self.scenarios] + [cell(self.average_binary_f1)],
            ["macro F1"] + [cell(r.macro_f1) for r in self.scenarios] + [cell(self.average_macro_f1)],
            ["scenes"] + [str(r.n_scenes) for r in self.scenarios] + [str(sum(r.n_scenes for r in self.scenarios))],
        ]
        lines = ["  ".join(v.rjust(width) if i else v.ljust(10) for i, v in enumerate(row)) for row in rows]
        notes = [f"{r.scenario}: excluded {', '.join(r.excluded)}" for r in self.scenarios if r.excluded]
        return "\n".join(lines + notes) + "\n"


def score_scenario(name: str, pairs: Sequence[Pair], classes: Sequence[str]) -> ScenarioResult:
    detail = macro_detail(pairs, classes)
    macro = detail.value if detail.scored else None
    conf = binary_confusion(pairs)
    return ScenarioResult(name, len(pairs), conf.f1, macro, conf, detail.per_class, detail.excluded)


def _test_scenes(manifest: DatasetManifest, name: str) -> list[Scene]:
    entry = manifest.scenarios[name]
    scenes = []
    for f in entry.files.get("test", []):
        scene = load_scene(manifest.resolve(f))
        if scene.scenario != name:
            raise MetricsError(f"{f.path} belongs to scenario {scene.scenario!r}, listed under {name!r}")
        if f.labels is not None:
            scene = scene.with_labels(LabelSet(f.labels))
        if scene.gold_labels is None:
            raise MetricsError(f"test scene {f.path} has no gold labels")
        scenes.append(scene)
    return scenes


def evaluate_dataset(
    manifest: DatasetManifest,
    specs: Mapping[str, ScenarioSpec],
    provider: Provider | None = None,
    *,
    predictions: Mapping[str, LabelSet] | None = None,
    policy: UnanswerablePolicy | str = UnanswerablePolicy.STRICT,
    jobs: int = 1,
) -> EvalReport:
    """Classify and score every test-split scene of every scenario in the manifest.

    Predictions come either live from ``provider`` or from ``predictions``, a map
    of scene image reference to predicted labels (e.g. a loaded verdict file).
    """
    if predictions is None and provider is None:
        provider = GroundTruthProvider()
    report = EvalReport()
    for name in sorted(manifest.scenarios):
        if name not in specs:
            raise MetricsError(f"no constraint spec for scenario {name!r}")
        spec = specs[name]
        if spec.name != name:
            raise MetricsError(f"spec {spec.name!r} supplied for scenario {name!r}")
        scenes = _test_scenes(manifest, name)
        if not scenes:
            continue
        if predictions is not None:
            missing = [s.image_ref for s in scenes if s.image_ref not in predictions]
            if missing:
                raise MetricsError(f"no prediction for {len(missing)} scene(s), e.g. {missing[0]}")
            predicted = [predictions[s.image_ref] for s in scenes]
        else:
            def run(scene: Scene) -> LabelSet:
                return classify(scene, spec, provider, policy).labels

            with ThreadPoolExecutor(max_workers=max(1, jobs)) as pool:
                predicted = list(pool.map(run, scenes))
        pairs = [(s.gold_labels, p) for s, p in zip(scenes, predicted)]
        report.scenarios.append(score_scenario(name, pairs, spec.classes))
    if not report.scenarios:
        raise MetricsError("manifest lists no test scenes")
    return report
