import json
import random

import pytest
from hypothesis import given
from hypothesis import strategies as st

from logicls.errors import MetricsError
from logicls.generate import generate_scene, realizable_sets
from logicls.manifest import DatasetManifest, FileEntry, ScenarioEntry
from logicls.metrics import binary_f1, evaluate_dataset, macro_detail, macro_f1
from logicls.scene import LabelSet, save_scene

CLASSES = ("a", "b", "c", "d")


def brute_binary(pairs):
    tp = fp = fn = 0
    for gold, pred in pairs:
        g = sorted(gold.labels) != ["normal"]
        p = sorted(pred.labels) != ["normal"]
        tp += g and p
        fp += p and not g
        fn += g and not p
    return 0.0 if 2 * tp + fp + fn == 0 else 2 * tp / (2 * tp + fp + fn)


def brute_macro(pairs, classes):
    scores = []
    excluded = []
    for c in classes:
        tp = sum(1 for g, p in pairs if c in g.labels and c in p.labels)
        fp = sum(1 for g, p in pairs if c not in g.labels and c in p.labels)
        fn = sum(1 for g, p in pairs if c in g.labels and c not in p.labels)
        if tp + fp + fn == 0:
            excluded.append(c)
            continue
        scores.append(2 * tp / (2 * tp + fp + fn))
    return (sum(scores) / len(scores) if scores else None), excluded


def random_labels(rng):
    k = rng.randint(0, 3)
    return LabelSet.from_anomalies(rng.sample(CLASSES, k))


def random_corpus(rng):
    return [(random_labels(rng), random_labels(rng)) for _ in range(rng.randint(1, 50))]


def L(*names):
    return LabelSet(names) if names else LabelSet.normal()


class TestBinary:
    def test_perfect(self):
        pairs = [(L(), L()), (L("a"), L("a")), (L("a", "b"), L("a", "b"))]
        assert binary_f1(pairs) == 1.0

    def test_hand_counts(self):
        pairs = [(L("a"), L("a")), (L("b"), L("c")), (L(), L("a")), (L("a"), L())]
        assert binary_f1(pairs) == pytest.approx(2 * 2 / (2 * 2 + 1 + 1), abs=1e-9)

    def test_always_normal(self):
        assert binary_f1([(L("a"), L()), (L(), L())]) == 0.0

    def test_zero_denominator(self):
        assert binary_f1([(L(), L())]) == 0.0

    def test_empty(self):
        with pytest.raises(MetricsError):
            binary_f1([])


class TestMacro:
    def test_mean_of_two(self):
        # class a perfect; class b: tp=1, fn=2 -> 2/(2+2) = 0.5
        pairs = [(L("a", "b"), L("a", "b")), (L("b"), L()), (L("b"), L())]
        assert macro_f1(pairs, ["a", "b"]) == 0.75

    def test_perfect(self):
        pairs = [(L("a", "c"), L("a", "c")), (L(), L())]
        assert macro_f1(pairs, ["a", "c"]) == 1.0

    def test_exclusion_reported(self):
        pairs = [(L("a"), L("a")), (L(), L())]
        detail = macro_detail(pairs, ["a", "b"])
        assert detail.value == 1.0 and detail.excluded == ("b",)

    def test_all_excluded(self):
        with pytest.raises(MetricsError):
            macro_f1([(L(), L())], ["a"])

    def test_empty_inputs(self):
        with pytest.raises(MetricsError):
            macro_f1([], ["a"])
        with pytest.raises(MetricsError):
            macro_f1([(L(), L())], [])


def test_oracle_equivalence_100_corpora():
    rng = random.Random(1234)
    for _ in range(100):
        pairs = random_corpus(rng)
        assert binary_f1(pairs) == brute_binary(pairs)
        expected, excluded = brute_macro(pairs, CLASSES)
        if expected is None:
            with pytest.raises(MetricsError):
                macro_f1(pairs, CLASSES)
        else:
            assert macro_f1(pairs, CLASSES) == expected
            assert list(macro_detail(pairs, CLASSES).excluded) == excluded


@given(st.randoms(use_true_random=False))
def test_symmetry_and_bounds(rnd):
    pairs = random_corpus(rnd)
    shuffled = list(pairs)
    rnd.shuffle(shuffled)
    assert binary_f1(shuffled) == pytest.approx(binary_f1(pairs))
    assert 0.0 <= binary_f1(pairs) <= 1.0
    detail = macro_detail(pairs, CLASSES)
    if detail.scored:
        assert macro_f1(shuffled, CLASSES) == pytest.approx(detail.value)
        assert 0.0 <= detail.value <= 1.0


def build_manifest(tmp_path, spec, normal, single, multi, seed=0):
    sets = realizable_sets(spec)
    singles = [s for s in sets if len(s) == 1]
    multis = [s for s in sets if len(s) > 1]
    rng = random.Random(seed)
    plan = [frozenset()] * normal + [rng.choice(singles) for _ in range(single)] + [rng.choice(multis) for _ in range(multi)]
    entries = []
    for i, labels in enumerate(plan):
        rel = f"{spec.name}/test/{i:04d}.json"
        scene = generate_scene(spec, labels, seed=seed * 10_000 + i, image_ref=rel)
        save_scene(scene, tmp_path / rel)
        entries.append(FileEntry(rel, tuple(scene.gold_labels.to_list())))
    counts = {"test": {"normal": normal, "single_anomaly": single, "multi_anomaly": multi}}
    return ScenarioEntry(spec.name, counts, {"test": entries})


class TestEvaluateDataset:
    def test_closed_loop(self, tmp_path, specs):
        m = DatasetManifest(root=tmp_path)
        for name in ("breakfast_box", "screw_bag"):
            m.scenarios[name] = build_manifest(tmp_path, specs[name], 6, 4, 3 if name == "screw_bag" else 0)
        report = evaluate_dataset(m, specs)
        for r in report.scenarios:
            assert r.binary_f1 == 1.0 and r.macro_f1 == 1.0
        assert report.average_binary_f1 == 1.0
        assert "Average" in report.table()
        data = json.loads(report.to_json())
        assert data["average"] == {"binary_f1": 1.0, "macro_f1": 1.0}
        assert evaluate_dataset(m, specs, jobs=4).to_json() == report.to_json()

    def test_forced_normal(self, tmp_path, specs):
        m = DatasetManifest(root=tmp_path)
        m.scenarios["pushpins"] = build_manifest(tmp_path, specs["pushpins"], 3, 3, 0)
        preds = {f.path: LabelSet.normal() for f in m.scenarios["pushpins"].files["test"]}
        report = evaluate_dataset(m, specs, predictions=preds)
        assert report.result("pushpins").binary_f1 == 0.0

    def test_table_one_juice_counts(self, tmp_path, specs):
        m = DatasetManifest(root=tmp_path)
        m.scenarios["juice_bottle"] = build_manifest(tmp_path, specs["juice_bottle"], 94, 26, 12)
        r = evaluate_dataset(m, specs).result("juice_bottle")
        assert r.n_scenes == 132
        assert r.binary.tp + r.binary.tn == 132

    def test_normal_only_reports_na(self, tmp_path, specs):
        m = DatasetManifest(root=tmp_path)
        m.scenarios["pushpins"] = build_manifest(tmp_path, specs["pushpins"], 3, 0, 0)
        report = evaluate_dataset(m, specs)
        assert report.result("pushpins").macro_f1 is None
        assert "n/a" in report.table()

    def test_missing_gold(self, tmp_path, specs):
        spec = specs["pushpins"]
        scene = generate_scene(spec, (), 0, image_ref="x.json").with_labels(None)
        save_scene(scene, tmp_path / "x.json")
        m = DatasetManifest({"pushpins": ScenarioEntry("pushpins", {}, {"test": [FileEntry("x.json")]})}, tmp_path)
        with pytest.raises(MetricsError, match="gold"):
            evaluate_dataset(m, specs)

    def test_spec_mismatch(self, tmp_path, specs):
        m = DatasetManifest(root=tmp_path)
        m.scenarios["pushpins"] = build_manifest(tmp_path, specs["pushpins"], 1, 0, 0)
        with pytest.raises(MetricsError):
            evaluate_dataset(m, {"pushpins": specs["screw_bag"]})
        with pytest.raises(MetricsError):
            evaluate_dataset(m, {})
