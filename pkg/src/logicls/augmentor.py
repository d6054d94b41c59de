"""Scene edits and question rewording that grow a training set from a base set.

Two operations are available:

* ``cutpaste`` moves, duplicates or deletes one object. Labels are never edited
  by hand: the edited scene is re-classified with the ground-truth answerer.
* ``paraphrase`` rewords a question from a template bank; the scene is untouched.

Every produced sample keeps the id of the base subquery it came from, so the
resampler can group augmented samples with their origin.
"""

from __future__ import annotations

import json
import logging
import random
from dataclasses import dataclass, field, replace
from typing import Any, Optional, Sequence

from .aggregator import truth_labels
from .answerer import GroundTruthProvider
from .errors import AugmentError
from .evaluator import Outcome, in_scope, select, value_from_dict, value_to_dict
from .lang.ast import ScenarioSpec
from .lang.compiler import AtomicSubquery, compile_spec
from .scene import BBox, ObjectInstance, Scene

log = logging.getLogger(__name__)

IOU_CAP = 0.3
MODES = ("move", "duplicate", "delete")
OPS = ("cutpaste", "paraphrase")
MIN_PARAPHRASES, MAX_PARAPHRASES = 10, 20


# --- cut and paste ------------------------------------------------------------

def _fresh_id(scene: Scene, base: str) -> str:
    taken = {o.id for o in scene.objects}
    k = 1
    while f"{base}_dup{k}" in taken:
        k += 1
    return f"{base}_dup{k}"


def _random_target(scene: Scene, src: BBox, rng: random.Random) -> BBox:
    x = rng.uniform(0, scene.width - src.width)
    y = rng.uniform(0, scene.height - src.height)
    return BBox(round(x, 2), round(y, 2), round(x, 2) + src.width, round(y, 2) + src.height)


def _check_target(scene: Scene, obj: ObjectInstance, target: BBox, iou_cap: float, ignore: str | None) -> None:
    if not scene.canvas.contains(target):
        raise AugmentError(f"target {target.as_list()} lies outside the {scene.width}x{scene.height} canvas")
    if abs(target.width - obj.bbox.width) > 1e-6 or abs(target.height - obj.bbox.height) > 1e-6:
        raise AugmentError("target box must keep the source object's width and height")
    for other in scene.objects:
        if other.id == ignore or other.category != obj.category:
            continue
        iou = other.bbox.iou(target)
        if iou > iou_cap:
            raise AugmentError(f"target overlaps {other.id} with IoU {iou:.3f} > cap {iou_cap}")


def cut_paste(
    scene: Scene,
    object_id: str,
    mode: str,
    target_bbox: Optional[BBox],
    spec: ScenarioSpec,
    seed: int = 0,
    iou_cap: float = IOU_CAP,
    image_ref: str | None = None,
) -> Scene:
    """Move, duplicate or delete one object; the result's labels come from re-classification.

    With ``target_bbox=None`` a same-sized placement is drawn from ``seed``.
    """
    if mode not in MODES:
        raise AugmentError(f"mode must be one of {MODES}, got {mode!r}")
    if spec.name != scene.scenario:
        raise AugmentError(f"spec {spec.name!r} does not describe scenario {scene.scenario!r}")
    try:
        obj = scene.get(object_id)
    except KeyError:
        raise AugmentError(f"no object {object_id!r} in {scene.image_ref}") from None

    objects = list(scene.objects)
    if mode == "delete":
        objects = [o for o in objects if o.id != object_id]
    else:
        ignore = object_id if mode == "move" else None
        if target_bbox is None:
            rng = random.Random(f"{seed}|{scene.image_ref}|{object_id}|{mode}")
            for _ in range(50):
                cand = _random_target(scene, obj.bbox, rng)
                try:
                    _check_target(scene, obj, cand, iou_cap, ignore)
                except AugmentError:
                    continue
                target_bbox = cand
                break
            else:
                raise AugmentError(f"no placement for {object_id} within IoU cap {iou_cap}")
        _check_target(scene, obj, target_bbox, iou_cap, ignore)
        if mode == "move":
            objects = [replace(o, bbox=target_bbox) if o.id == object_id else o for o in objects]
        else:
            objects.append(ObjectInstance(_fresh_id(scene, object_id), obj.category, target_bbox, obj.attributes))

    edited = Scene(scene.scenario, image_ref or scene.image_ref, scene.width, scene.height, tuple(objects))
    return edited.with_labels(truth_labels(edited, spec))


# --- paraphrases --------------------------------------------------------------

PREFIXES = (
    "",
    "Look at the image. ",
    "Examine the scene closely. ",
    "Judge only from what is visible. ",
    "Use the object positions to decide. ",
)

BODIES: dict[str, tuple[str, ...]] = {
    "count": (
        "What is the number of {a} {scope}?",
        "Count the {a} {scope}. How many are there?",
        "How many instances of {a} appear {scope}?",
        "Give the total count of {a} {scope}.",
        "Report how many {a} are present {scope}.",
    ),
    "relation": (
        "Is it true that the {a} is {rel} {b}?",
        "Would you say the {a} lies {rel} {b}?",
        "Answer yes or no: is the {a} {rel} {b}?",
        "Check whether the {a} is {rel} {b}.",
        "Does the {a} sit {rel} {b}?",
    ),
    "distance": (
        "Are the centres of the {a} and the {b} {cmp} {threshold} pixels apart?",
        "Is the centre-to-centre distance from the {a} to the {b} {cmp} {threshold} pixels?",
        "Answer yes or no: is the {a} {cmp} {threshold} pixels from the {b}, measured centre to centre?",
        "Measured between centres, is the gap between the {a} and the {b} {cmp} {threshold} pixels?",
        "Check whether the {a} and the {b} are {cmp} {threshold} pixels apart at their centres.",
    ),
    "size_ratio": (
        "Does the {a} cover {cmp} {threshold} times the area of the {b}?",
        "Is the {a}'s area {cmp} {threshold} times that of the {b}?",
        "Answer yes or no: is the area ratio of the {a} to the {b} {cmp} {threshold}?",
        "Compared with the {b}, is the {a} {cmp} {threshold} times as large in area?",
        "Check whether the {a} occupies {cmp} {threshold} times the area of the {b}.",
    ),
    "attribute": (
        "Which {key} does {a} #{index} have, counting top to bottom then left to right? Choose from: {values}.",
        "Name the {key} of {a} number {index} in reading order. Options: {values}.",
        "In reading order, what {key} is {a} #{index}? Pick one of: {values}.",
        "Identify the {key} of {a} at position {index} (top to bottom, left to right). Valid answers: {values}.",
        "Tell the {key} of {a} #{index} when ordered top to bottom, then left to right. Use one of: {values}.",
    ),
    "pairing_count": (
        "Is the number of {a} equal to the number of {b}?",
        "Do the {a} and the {b} come in equal numbers?",
        "Answer yes or no: are there exactly as many {a} as {b}?",
        "Check whether every {a} could be matched with one {b}, with none left over.",
        "Are the counts of {a} and {b} the same?",
    ),
    "pairing_match": (
        "Ordering both by {order}, do {a} #{index} and {b} #{index} share the same {key}?",
        "With both lists sorted by {order}, is the {key} of {a} #{index} equal to that of {b} #{index}?",
        "Answer yes or no: after sorting by {order}, do {a} #{index} and {b} #{index} match in {key}?",
        "Sorted by {order}, check whether {a} #{index} and {b} #{index} carry the same {key}.",
        "Is {a} #{index} paired with {b} #{index} by {key}, both ordered by {order}?",
    ),
}


def paraphrase_bank(subquery: AtomicSubquery) -> list[str]:
    bodies = BODIES.get(subquery.role)
    if bodies is None:
        raise AugmentError(f"no paraphrase templates for {subquery.reasoning_kind} subqueries ({subquery.role})")
    slots = subquery.slot_map()
    out = []
    for prefix in PREFIXES:
        for body in bodies:
            try:
                text = prefix + body.format(**slots)
            except KeyError as exc:
                raise AugmentError(f"template slot {exc} missing for subquery {subquery.id}") from None
            if text != subquery.question_text and text not in out:
                out.append(text)
    return out


def paraphrase_expand(subquery: AtomicSubquery, n: int, seed: int = 0) -> list[str]:
    """``n`` distinct rewordings of the subquery's question, never including the original."""
    if not MIN_PARAPHRASES <= n <= MAX_PARAPHRASES:
        raise AugmentError(f"n must be between {MIN_PARAPHRASES} and {MAX_PARAPHRASES}, got {n}")
    bank = paraphrase_bank(subquery)
    if len(bank) < n:
        raise AugmentError(f"only {len(bank)} paraphrases available for {subquery.id}, {n} requested")
    return random.Random(f"{seed}|{subquery.id}|{subquery.question_text}").sample(bank, n)


# --- training sets ------------------------------------------------------------

@dataclass(frozen=True)
class TrainingSample:
    sample_id: str
    base_subquery_id: str
    scene_ref: str
    gold_answer: Outcome
    provenance: str = "cot"
    question_text: str = ""
    cot_text: str = ""
    scene: Optional[Scene] = field(default=None, compare=False, repr=False)
    op: str = ""

    def __post_init__(self) -> None:
        if self.provenance not in ("cot", "augmented"):
            raise AugmentError(f"provenance must be cot or augmented, got {self.provenance!r}")

    def to_dict(self) -> dict[str, Any]:
        data = {
            "sample_id": self.sample_id,
            "base_subquery_id": self.base_subquery_id,
            "scene_ref": self.scene_ref,
            "gold_answer": value_to_dict(self.gold_answer),
            "provenance": self.provenance,
            "question_text": self.question_text,
            "cot_text": self.cot_text,
        }
        if self.op:
            data["op"] = self.op
        return data

    @classmethod
    def from_dict(cls, d: dict[str, Any], scene: Scene | None = None) -> "TrainingSample":
        return cls(
            d["sample_id"], d["base_subquery_id"], d["scene_ref"], value_from_dict(d["gold_answer"]),
            d.get("provenance", "cot"), d.get("question_text", ""), d.get("cot_text", ""), scene, d.get("op", ""),
        )


def cot_samples(scenes: Sequence[Scene], spec: ScenarioSpec) -> list[TrainingSample]:
    """One base sample per (scene, subquery), answered and explained by the ground truth."""
    truth = GroundTruthProvider()
    program = compile_spec(spec)
    out = []
    for scene in scenes:
        for q in program.subqueries:
            rec = truth.answer(scene, q)
            out.append(
                TrainingSample(f"{scene.image_ref}::{q.id}", q.id, scene.image_ref, rec.value, "cot",
                               q.question_text, rec.cot_text, scene)
            )
    return out


@dataclass(frozen=True)
class AugmentConfig:
    ops: tuple[str, ...] = OPS
    multiplicity: int = 1
    cut_modes: tuple[str, ...] = MODES
    n_paraphrases: int = MIN_PARAPHRASES
    iou_cap: float = IOU_CAP

    def __post_init__(self) -> None:
        if not self.ops or any(op not in OPS for op in self.ops):
            raise AugmentError(f"ops must be a non-empty subset of {OPS}")
        if not self.cut_modes or any(m not in MODES for m in self.cut_modes):
            raise AugmentError(f"cut_modes must be a non-empty subset of {MODES}")
        if self.multiplicity < 1:
            raise AugmentError("multiplicity must be >= 1")


def _edit_candidates(scene: Scene, q: AtomicSubquery) -> list[ObjectInstance]:
    """Objects whose edit can change the subquery's answer, falling back to any object."""
    c = q.constraint
    if q.role == "count":
        hits = [o for o in select(scene, c.selectors[0]) if in_scope(o.center, q.scope, scene)]
    else:
        hits = [o for sel in c.selectors for o in select(scene, sel)]
    return sorted(hits, key=lambda o: o.id)


def _augment_one(
    base: TrainingSample, q: AtomicSubquery, spec: ScenarioSpec, cfg: AugmentConfig, k: int, seed: int
) -> TrainingSample:
    op = cfg.ops[k % len(cfg.ops)]
    rng = random.Random(f"{seed}|{base.sample_id}|{k}")
    sid = f"{base.sample_id}~{k:02d}"
    if base.scene is None:
        raise AugmentError(f"base sample {base.sample_id} carries no scene")
    if op == "paraphrase":
        texts = paraphrase_expand(q, cfg.n_paraphrases, seed)
        text = texts[(k // len(cfg.ops)) % len(texts)]
        return replace(base, sample_id=sid, provenance="augmented", question_text=text, op="paraphrase")

    mode = rng.choice(cfg.cut_modes)
    candidates = _edit_candidates(base.scene, q)
    if mode == "delete" and not candidates:
        raise AugmentError(f"nothing to delete for {q.id} in {base.scene_ref}")
    pool = candidates or sorted(base.scene.objects, key=lambda o: o.id)
    if not pool:
        raise AugmentError(f"scene {base.scene_ref} has no objects to edit")
    victim = rng.choice(pool)
    ref = f"{base.sample_id}#aug{k:02d}"
    edited = cut_paste(base.scene, victim.id, mode, None, spec, rng.randrange(2**31), cfg.iou_cap, ref)
    rec = GroundTruthProvider().answer(edited, q)
    return TrainingSample(sid, q.id, ref, rec.value, "augmented", q.question_text, rec.cot_text, edited,
                          f"cutpaste:{mode}:{victim.id}")


def build_augmented_set(
    cot_set: Sequence[TrainingSample], spec: ScenarioSpec, config: AugmentConfig | None = None, seed: int = 0
) -> list[TrainingSample]:
    """``config.multiplicity`` augmented samples per base sample, ordered by sample id.

    Ops rotate through ``config.ops``; an op that cannot be applied to a sample is
    logged and skipped.
    """
    cfg = config or AugmentConfig()
    if not cot_set:
        raise AugmentError("no base samples to augment")
    program = compile_spec(spec).by_id()
    out = []
    for base in sorted(cot_set, key=lambda s: s.sample_id):
        if base.scene is not None and base.scene.scenario != spec.name:
            raise AugmentError(f"sample {base.sample_id} is from {base.scene.scenario!r}, spec is {spec.name!r}")
        q = program.get(base.base_subquery_id)
        if q is None:
            raise AugmentError(f"sample {base.sample_id} refers to unknown subquery {base.base_subquery_id!r}")
        for k in range(cfg.multiplicity):
            try:
                out.append(_augment_one(base, q, spec, cfg, k, seed))
            except AugmentError as exc:
                log.warning("skipped augmentation %d of %s: %s", k, base.sample_id, exc)
    return sorted(out, key=lambda s: s.sample_id)


def samples_to_jsonl(samples: Sequence[TrainingSample]) -> str:
    return "".join(json.dumps(s.to_dict(), sort_keys=True) + "\n" for s in samples)
