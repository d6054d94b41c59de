import json

import pytest
from hypothesis import given
from hypothesis import strategies as st

from logicls.errors import SceneParseError, SceneValidationError
from logicls.generate import generate_scene
from logicls.scene import BBox, LabelSet, ObjectInstance, Scene, load_scene, save_scene, scene_from_dict


def box_strategy(limit=1000.0):
    coord = st.floats(0, limit, allow_nan=False, allow_infinity=False)
    return st.tuples(coord, coord, coord, coord).filter(lambda t: t[0] < t[2] and t[1] < t[3]).map(
        lambda t: BBox(*t)
    )


class TestBBox:
    def test_rejects_inverted(self):
        with pytest.raises(SceneValidationError):
            BBox(10, 0, 5, 10)

    def test_rejects_negative_and_nan(self):
        with pytest.raises(SceneValidationError):
            BBox(-1, 0, 5, 10)
        with pytest.raises(SceneValidationError):
            BBox(0, 0, float("nan"), 10)

    def test_center_area(self):
        b = BBox(0, 0, 100, 50)
        assert b.center == (50.0, 25.0)
        assert b.area == 5000.0

    def test_iou_of_identical_is_one(self):
        b = BBox(1, 2, 30, 40)
        assert b.iou(b) == pytest.approx(1.0)

    def test_disjoint(self):
        assert BBox(0, 0, 10, 10).intersection_area(BBox(20, 20, 30, 30)) == 0

    @given(box_strategy(), box_strategy())
    def test_iou_symmetric_and_bounded(self, a, b):
        assert a.iou(b) == pytest.approx(b.iou(a))
        assert 0.0 <= a.iou(b) <= 1.0 + 1e-12

    @given(box_strategy())
    def test_contains_self(self, a):
        assert a.contains(a)


class TestLabelSet:
    def test_normal_exclusive(self):
        with pytest.raises(SceneValidationError):
            LabelSet(["normal", "missing_pushpin"])

    def test_empty_rejected(self):
        with pytest.raises(SceneValidationError):
            LabelSet([])

    def test_from_no_anomalies_is_normal(self):
        assert LabelSet.from_anomalies([]).is_normal
        assert LabelSet.from_anomalies(["a", "b"]).anomalies == {"a", "b"}

    def test_outside_class_set(self):
        with pytest.raises(SceneValidationError):
            LabelSet(["nope"]).check_classes(["missing_pushpin"])


class TestScene:
    def test_duplicate_ids(self):
        o = ObjectInstance("a", "pushpin", BBox(0, 0, 1, 1))
        with pytest.raises(SceneValidationError):
            Scene("s", "r", 10, 10, (o, o))

    def test_object_outside_canvas(self):
        o = ObjectInstance("a", "pushpin", BBox(0, 0, 20, 1))
        with pytest.raises(SceneValidationError):
            Scene("s", "r", 10, 10, (o,))

    def test_pushpins_fixture_has_fifteen(self, specs):
        scene = generate_scene(specs["pushpins"], (), seed=3)
        assert len(scene.objects) == 15
        assert {o.category for o in scene.objects} == {"pushpin"}

    def test_json_roundtrip(self, specs, tmp_path):
        scene = generate_scene(specs["splicing_connectors"], {"wrong_color"}, seed=5)
        path = tmp_path / "s.json"
        save_scene(scene, path)
        back = load_scene(path)
        assert back == scene
        assert back.gold_labels == scene.gold_labels

    def test_bad_json_reports_position(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text('{"scenario": "x",\n  "objects": [}')
        with pytest.raises(SceneParseError, match=r":2:"):
            load_scene(path)

    def test_missing_field(self):
        with pytest.raises(SceneValidationError, match="width"):
            scene_from_dict({"scenario": "x", "image_ref": "r", "height": 1, "objects": []})

    def test_normal_plus_anomaly_file_rejected(self):
        data = {"scenario": "p", "image_ref": "r", "width": 10, "height": 10, "objects": [],
                "gold_labels": ["normal", "missing_pushpin"]}
        with pytest.raises(SceneValidationError):
            scene_from_dict(json.loads(json.dumps(data)))

    def test_attributes_are_read_only(self):
        o = ObjectInstance("a", "cable", BBox(0, 0, 1, 1), {"color": "red"})
        with pytest.raises(TypeError):
            o.attributes["color"] = "blue"
