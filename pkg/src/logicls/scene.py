"""Grounded scenes: objects with boxes and attributes, plus gold label sets.

Coordinates are pixels with the origin at the top-left corner, x growing
rightward and y growing downward.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Iterator, Mapping

from .errors import SceneParseError, SceneValidationError

NORMAL = "normal"


@dataclass(frozen=True)
class BBox:
    x1: float
    y1: float
    x2: float
    y2: float

    def __post_init__(self) -> None:
        coords = (self.x1, self.y1, self.x2, self.y2)
        try:
            finite = all(map(math.isfinite, coords))
        except TypeError:
            finite = False
        if not finite:
            raise SceneValidationError(f"bbox coordinates must be finite numbers: {coords}")
        if min(coords) < 0:
            raise SceneValidationError(f"bbox coordinates must be non-negative: {coords}")
        if not (self.x1 < self.x2 and self.y1 < self.y2):
            raise SceneValidationError(f"bbox must satisfy x1 < x2 and y1 < y2: {coords}")

    @property
    def width(self) -> float:
        return self.x2 - self.x1

    @property
    def height(self) -> float:
        return self.y2 - self.y1

    @property
    def area(self) -> float:
        return self.width * self.height

    @property
    def center(self) -> tuple[float, float]:
        return ((self.x1 + self.x2) / 2.0, (self.y1 + self.y2) / 2.0)

    def as_list(self) -> list[float]:
        return [self.x1, self.y1, self.x2, self.y2]

    def contains(self, other: "BBox") -> bool:
        return (
            self.x1 <= other.x1
            and self.y1 <= other.y1
            and other.x2 <= self.x2
            and other.y2 <= self.y2
        )

    def intersection_area(self, other: "BBox") -> float:
        w = min(self.x2, other.x2) - max(self.x1, other.x1)
        h = min(self.y2, other.y2) - max(self.y1, other.y1)
        if w <= 0 or h <= 0:
            return 0.0
        return w * h

    def iou(self, other: "BBox") -> float:
        inter = self.intersection_area(other)
        if inter == 0.0:
            return 0.0
        return inter / (self.area + other.area - inter)

    def translated(self, dx: float, dy: float) -> "BBox":
        return BBox(self.x1 + dx, self.y1 + dy, self.x2 + dx, self.y2 + dy)

    @classmethod
    def from_list(cls, values: Iterable[Any]) -> "BBox":
        values = list(values)
        if len(values) != 4:
            raise SceneValidationError(f"bbox needs 4 numbers, got {len(values)}")
        if any(isinstance(v, bool) or not isinstance(v, (int, float)) for v in values):
            raise SceneValidationError(f"bbox entries must be numbers: {values}")
        return cls(*values)


@dataclass(frozen=True)
class LabelSet:
    """Either exactly ``{normal}`` or a non-empty set of anomaly categories."""

    labels: frozenset[str]

    def __init__(self, labels: Iterable[str]):
        labels = frozenset(labels)
        if not labels:
            raise SceneValidationError("label set must not be empty")
        if NORMAL in labels and len(labels) > 1:
            raise SceneValidationError(
                f"'{NORMAL}' cannot be combined with anomaly labels: {sorted(labels)}"
            )
        for label in labels:
            if not isinstance(label, str) or not label:
                raise SceneValidationError(f"labels must be non-empty strings: {label!r}")
        object.__setattr__(self, "labels", labels)

    @classmethod
    def normal(cls) -> "LabelSet":
        return cls([NORMAL])

    @classmethod
    def from_anomalies(cls, categories: Iterable[str]) -> "LabelSet":
        categories = set(categories)
        return cls(categories) if categories else cls.normal()

    @property
    def is_normal(self) -> bool:
        return self.labels == {NORMAL}

    @property
    def anomalies(self) -> frozenset[str]:
        return frozenset() if self.is_normal else self.labels

    def check_classes(self, classes: Iterable[str]) -> None:
        unknown = self.anomalies - set(classes)
        if unknown:
            raise SceneValidationError(f"labels outside the scenario class set: {sorted(unknown)}")

    def __iter__(self) -> Iterator[str]:
        return iter(sorted(self.labels))

    def __len__(self) -> int:
        return len(self.labels)

    def __contains__(self, item: object) -> bool:
        return item in self.labels

    def to_list(self) -> list[str]:
        return sorted(self.labels)


@dataclass(frozen=True)
class ObjectInstance:
    id: str
    category: str
    bbox: BBox
    attributes: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not isinstance(self.id, str) or not self.id:
            raise SceneValidationError("object id must be a non-empty string")
        if not isinstance(self.category, str) or not self.category:
            raise SceneValidationError(f"object {self.id!r} has an empty category")
        attrs = dict(self.attributes)
        for k, v in attrs.items():
            if not isinstance(k, str) or not isinstance(v, str):
                raise SceneValidationError(f"object {self.id!r}: attributes must map str to str")
        # frozen mapping so instances stay hashable-free but effectively immutable
        object.__setattr__(self, "attributes", _FrozenDict(attrs))

    @property
    def center(self) -> tuple[float, float]:
        return self.bbox.center

    def to_dict(self) -> dict[str, Any]:
        return {
            "id": self.id,
            "category": self.category,
            "bbox": self.bbox.as_list(),
            "attributes": dict(sorted(self.attributes.items())),
        }


class _FrozenDict(dict):
    def _readonly(self, *args, **kwargs):
        raise TypeError("object attributes are immutable")

    __setitem__ = __delitem__ = clear = pop = popitem = setdefault = update = _readonly

    def __hash__(self) -> int:  # type: ignore[override]
        return hash(tuple(sorted(self.items())))


@dataclass(frozen=True)
class Scene:
    scenario: str
    image_ref: str
    width: float
    height: float
    objects: tuple[ObjectInstance, ...]
    gold_labels: LabelSet | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "objects", tuple(self.objects))
        for dim in (self.width, self.height):
            if isinstance(dim, bool) or not isinstance(dim, (int, float)) or not math.isfinite(dim) or dim <= 0:
                raise SceneValidationError(f"scene width/height must be positive, got {dim!r}")
        seen: set[str] = set()
        for obj in self.objects:
            if obj.id in seen:
                raise SceneValidationError(f"duplicate object id {obj.id!r}")
            seen.add(obj.id)
            b = obj.bbox
            if b.x2 > self.width or b.y2 > self.height:
                raise SceneValidationError(
                    f"object {obj.id!r} bbox {b.as_list()} lies outside the "
                    f"{self.width}x{self.height} canvas"
                )

    @property
    def canvas(self) -> BBox:
        return BBox(0.0, 0.0, float(self.width), float(self.height))

    def get(self, object_id: str) -> ObjectInstance:
        for obj in self.objects:
            if obj.id == object_id:
                return obj
        raise KeyError(object_id)

    def with_objects(self, objects: Iterable[ObjectInstance], gold_labels: LabelSet | None = None) -> "Scene":
        return Scene(self.scenario, self.image_ref, self.width, self.height, tuple(objects), gold_labels)

    def with_labels(self, gold_labels: LabelSet | None) -> "Scene":
        return Scene(self.scenario, self.image_ref, self.width, self.height, self.objects, gold_labels)

    def to_dict(self) -> dict[str, Any]:
        data: dict[str, Any] = {
            "scenario": self.scenario,
            "image_ref": self.image_ref,
            "width": self.width,
            "height": self.height,
            "objects": [obj.to_dict() for obj in self.objects],
        }
        if self.gold_labels is not None:
            data["gold_labels"] = self.gold_labels.to_list()
        return data

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"


def scene_from_dict(data: Any) -> Scene:
    if not isinstance(data, dict):
        raise SceneValidationError("scene document must be a JSON object")
    try:
        scenario = data["scenario"]
        image_ref = data["image_ref"]
        width = data["width"]
        height = data["height"]
        raw_objects = data["objects"]
    except KeyError as exc:
        raise SceneValidationError(f"scene is missing field {exc.args[0]!r}") from None
    if not isinstance(scenario, str) or not isinstance(image_ref, str):
        raise SceneValidationError("scenario and image_ref must be strings")
    if not isinstance(raw_objects, list):
        raise SceneValidationError("objects must be a list")
    objects = []
    for i, raw in enumerate(raw_objects):
        if not isinstance(raw, dict):
            raise SceneValidationError(f"object #{i} must be a JSON object")
        try:
            obj = ObjectInstance(
                id=raw["id"],
                category=raw["category"],
                bbox=BBox.from_list(raw["bbox"]),
                attributes=raw.get("attributes", {}) or {},
            )
        except KeyError as exc:
            raise SceneValidationError(f"object #{i} is missing field {exc.args[0]!r}") from None
        except TypeError as exc:
            raise SceneValidationError(f"object #{i}: {exc}") from None
        objects.append(obj)
    labels = data.get("gold_labels")
    gold = None
    if labels is not None:
        if not isinstance(labels, list):
            raise SceneValidationError("gold_labels must be a list of strings")
        gold = LabelSet(labels)
    return Scene(scenario, image_ref, width, height, tuple(objects), gold)


def load_scene(path: str | os.PathLike[str]) -> Scene:
    text = Path(path).read_text(encoding="utf-8")
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SceneParseError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
    return scene_from_dict(data)


def save_scene(scene: Scene, path: str | os.PathLike[str]) -> None:
    atomic_write(path, scene.to_json())


def atomic_write(path: str | os.PathLike[str], text: str) -> None:
    """Write via a temp file in the same directory, then rename over the target."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(f".{path.name}.tmp{os.getpid()}")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)
