import json

import pytest

from logicls.aggregator import truth_labels
from logicls.answerer import GroundTruthProvider
from logicls.augmentor import (
    AugmentConfig,
    TrainingSample,
    build_augmented_set,
    cot_samples,
    cut_paste,
    paraphrase_bank,
    paraphrase_expand,
    samples_to_jsonl,
)
from logicls.errors import AugmentError
from logicls.generate import generate_scene
from logicls.lang.compiler import compile_spec
from logicls.scene import BBox, LabelSet


@pytest.fixture(scope="module")
def pins(specs):
    return specs["pushpins"], generate_scene(specs["pushpins"], (), seed=3)


def pin_in_cell(scene, row, col):
    for o in scene.objects:
        cx, cy = o.center
        if col * 300 <= cx < (col + 1) * 300 and row * 300 <= cy < (row + 1) * 300:
            return o
    raise AssertionError("no pin in cell")


class TestCutPaste:
    def test_delete_only_pin(self, pins):
        spec, scene = pins
        assert scene.gold_labels == LabelSet.normal()
        pin = pin_in_cell(scene, 1, 2)
        edited = cut_paste(scene, pin.id, "delete", None, spec)
        assert edited.gold_labels == LabelSet.from_anomalies(["missing_pushpin"])
        assert len(edited.objects) == len(scene.objects) - 1
        assert scene.gold_labels == LabelSet.normal()   # source untouched

    def test_move_within_cell(self, pins):
        spec, scene = pins
        pin = pin_in_cell(scene, 0, 0)
        w, h = pin.bbox.width, pin.bbox.height
        target = BBox(150 - w / 2, 150 - h / 2, 150 + w / 2, 150 + h / 2)
        edited = cut_paste(scene, pin.id, "move", target, spec)
        assert edited.get(pin.id).bbox == target
        assert edited.gold_labels == LabelSet.normal()

    def test_move_to_other_cell(self, pins):
        spec, scene = pins
        pin = pin_in_cell(scene, 0, 0)
        other = pin_in_cell(scene, 2, 4)
        w, h = pin.bbox.width, pin.bbox.height
        # far corner of the occupied cell, clear of the pin already there
        x = 1500 - w if other.center[0] < 1350 else 1200
        y = 900 - h if other.center[1] < 750 else 600
        target = BBox(x, y, x + w, y + h)
        edited = cut_paste(scene, pin.id, "move", target, spec)
        assert edited.gold_labels == LabelSet.from_anomalies(["missing_pushpin"])

    def test_duplicate_onto_source(self, pins):
        spec, scene = pins
        pin = scene.objects[0]
        with pytest.raises(AugmentError, match="IoU"):
            cut_paste(scene, pin.id, "duplicate", pin.bbox, spec)

    def test_bad_targets(self, pins):
        spec, scene = pins
        pin = scene.objects[0]
        w, h = pin.bbox.width, pin.bbox.height
        with pytest.raises(AugmentError, match="canvas"):
            cut_paste(scene, pin.id, "move", BBox(1500 - w / 2, 0, 1500 + w / 2, h), spec)
        with pytest.raises(AugmentError, match="width"):
            cut_paste(scene, pin.id, "move", BBox(0, 0, w + 5, h), spec)
        with pytest.raises(AugmentError):
            cut_paste(scene, "nope", "delete", None, spec)
        with pytest.raises(AugmentError):
            cut_paste(scene, pin.id, "rotate", None, spec)

    def test_wrong_spec(self, pins, specs):
        _, scene = pins
        with pytest.raises(AugmentError):
            cut_paste(scene, scene.objects[0].id, "delete", None, specs["screw_bag"])

    def test_random_placement_deterministic(self, pins):
        spec, scene = pins
        a = cut_paste(scene, scene.objects[0].id, "duplicate", None, spec, seed=5)
        b = cut_paste(scene, scene.objects[0].id, "duplicate", None, spec, seed=5)
        assert a.to_json() == b.to_json()
        new = a.objects[-1]
        assert new.id.endswith("_dup1") and scene.canvas.contains(new.bbox)


class TestParaphrase:
    @pytest.mark.parametrize("name", ["breakfast_box", "juice_bottle", "pushpins", "screw_bag", "splicing_connectors"])
    def test_ten_distinct(self, specs, name):
        for q in compile_spec(specs[name]).subqueries:
            texts = paraphrase_expand(q, 10, seed=1)
            assert len(set(texts)) == 10
            assert q.question_text not in texts
            for t in texts:
                assert q.slot_map()["a"] in t

    def test_kinds_all_have_banks(self, kinds_spec):
        for q in compile_spec(kinds_spec).subqueries:
            assert len(paraphrase_bank(q)) >= 20
            assert len(paraphrase_expand(q, 20)) == 20

    def test_range(self, specs):
        q = compile_spec(specs["pushpins"]).subqueries[0]
        for n in (9, 21):
            with pytest.raises(AugmentError):
                paraphrase_expand(q, n)

    def test_deterministic(self, specs):
        q = compile_spec(specs["screw_bag"]).subqueries[0]
        assert paraphrase_expand(q, 12, seed=4) == paraphrase_expand(q, 12, seed=4)
        assert paraphrase_expand(q, 12, seed=4) != paraphrase_expand(q, 12, seed=5)


@pytest.fixture(scope="module")
def screw_base(specs):
    spec = specs["screw_bag"]
    scenes = [generate_scene(spec, labels, seed=i) for i, labels in enumerate([(), (), ("missing_screw",)])]
    return spec, cot_samples(scenes, spec)


class TestBuildSet:
    def test_paraphrase_only_size(self, screw_base):
        spec, base = screw_base
        out = build_augmented_set(base, spec, AugmentConfig(ops=("paraphrase",)))
        assert len(out) == len(base)
        for s in out:
            assert s.provenance == "augmented" and s.op == "paraphrase"

    def test_delete_changes_counts(self, specs):
        spec = specs["pushpins"]
        base = cot_samples([generate_scene(spec, (), seed=0)], spec)
        out = build_augmented_set(base, spec, AugmentConfig(ops=("cutpaste",), cut_modes=("delete",)))
        assert len(out) == len(base)
        for s in out:
            assert s.gold_answer.value == 0   # the only pin in the cell was removed
            assert s.scene.gold_labels == LabelSet.from_anomalies(["missing_pushpin"])

    def test_byte_identical(self, screw_base):
        spec, base = screw_base
        cfg = AugmentConfig(multiplicity=3)
        a = samples_to_jsonl(build_augmented_set(base, spec, cfg, seed=2))
        b = samples_to_jsonl(build_augmented_set(list(reversed(base)), spec, cfg, seed=2))
        assert a == b

    def test_labels_sound_and_geometry_safe(self, screw_base):
        spec, base = screw_base
        program = compile_spec(spec).by_id()
        cfg = AugmentConfig(multiplicity=4)
        out = build_augmented_set(base, spec, cfg, seed=9)
        assert out and any(s.op.startswith("cutpaste") for s in out)
        truth = GroundTruthProvider()
        by_id = {s.sample_id: s for s in base}
        for s in out:
            q = program[s.base_subquery_id]
            assert s.gold_answer == truth.answer(s.scene, q).value
            assert s.scene.gold_labels == truth_labels(s.scene, spec)
            for o in s.scene.objects:
                assert s.scene.canvas.contains(o.bbox)
            if s.op.startswith("cutpaste:") and not s.op.startswith("cutpaste:delete"):
                src = by_id[s.sample_id.rsplit("~", 1)[0]].scene
                before = {o.id: o.bbox for o in src.objects}
                for o in s.scene.objects:
                    if before.get(o.id) == o.bbox:
                        continue
                    for other in s.scene.objects:
                        if other.id != o.id and other.category == o.category:
                            assert other.bbox.iou(o.bbox) <= cfg.iou_cap

    def test_group_closure(self, screw_base):
        spec, base = screw_base
        ids = {q.id for q in compile_spec(spec).subqueries}
        base_ids = {s.sample_id for s in base}
        for s in build_augmented_set(base, spec, AugmentConfig(multiplicity=2)):
            assert s.base_subquery_id in ids
            assert s.sample_id.rsplit("~", 1)[0] in base_ids

    def test_jsonl_round_trip(self, screw_base):
        spec, base = screw_base
        out = build_augmented_set(base[:5], spec)
        for line, s in zip(samples_to_jsonl(out).splitlines(), out):
            assert TrainingSample.from_dict(json.loads(line)) == s

    def test_errors(self, screw_base, specs):
        spec, base = screw_base
        with pytest.raises(AugmentError):
            build_augmented_set([], spec)
        with pytest.raises(AugmentError):
            build_augmented_set(base, specs["pushpins"])
        with pytest.raises(AugmentError):
            AugmentConfig(ops=("flip",))
        with pytest.raises(AugmentError):
            AugmentConfig(multiplicity=0)
