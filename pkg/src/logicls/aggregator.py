"""Turn subquery answers into a label set with a per-subquery evidence trail."""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from typing import TYPE_CHECKING, Any, Iterable, Sequence

from .answerer import AnswerRecord, GroundTruthProvider, Provider
from .errors import AggregationError
from .evaluator import CMP, Boolean, Categorical, Numeric, Outcome, Unanswerable
from .lang.ast import Constraint, ScenarioSpec
from .lang.compiler import AtomicSubquery, SubqueryProgram, compile_spec
from .lang.serializer import rule_text
from .scene import LabelSet, Scene, atomic_write
from .wire import coerce, render_icl_prompt, render_tagged

if TYPE_CHECKING:
    from .answerer import RemoteProvider

SATISFIED, VIOLATED, UNANSWERABLE = "satisfied", "violated", "unanswerable"


class UnanswerablePolicy(str, Enum):
    STRICT = "strict"    # an unanswerable subquery counts as a violation
    LENIENT = "lenient"  # an unanswerable subquery is ignored

    @classmethod
    def coerce(cls, value: "UnanswerablePolicy | str") -> "UnanswerablePolicy":
        return value if isinstance(value, cls) else cls(value)


_TYPES = {"numeric": Numeric, "boolean": Boolean, "categorical": Categorical}


@dataclass(frozen=True)
class EvidenceItem:
    subquery_id: str
    question_text: str
    answer: AnswerRecord
    outcome: str
    violation_category: str

    def to_dict(self) -> dict[str, Any]:
        return {
            "subquery_id": self.subquery_id,
            "question_text": self.question_text,
            "outcome": self.outcome,
            "answer": self.answer.to_dict(),
            "violation_category": self.violation_category,
        }


@dataclass(frozen=True)
class Verdict:
    labels: LabelSet
    evidence: tuple[EvidenceItem, ...]

    def violated(self) -> list[EvidenceItem]:
        return [e for e in self.evidence if e.outcome == VIOLATED]

    def to_dict(self, scene: str) -> dict[str, Any]:
        return {
            "scene": scene,
            "labels": self.labels.to_list(),
            "evidence": [e.to_dict() for e in self.evidence],
        }


def check_passes(q: AtomicSubquery, value: Outcome) -> bool:
    if q.answer_type == "categorical":
        return value.value in q.check.expected
    if q.answer_type == "boolean":
        return value.value == q.check.expected
    return CMP[q.check.op](value.value, q.check.expected)


def judge(q: AtomicSubquery, record: AnswerRecord, policy: UnanswerablePolicy) -> str:
    value = record.value
    if isinstance(value, Unanswerable):
        return VIOLATED if policy is UnanswerablePolicy.STRICT else UNANSWERABLE
    expected_type = _TYPES[q.answer_type]
    if not isinstance(value, expected_type):
        raise AggregationError(
            f"answer for {q.id} is {value.kind}, subquery expects {q.answer_type}"
        )
    if q.answer_type == "categorical" and value.value not in q.values:
        raise AggregationError(f"answer {value.value!r} for {q.id} is outside its value set")
    return SATISFIED if check_passes(q, value) else VIOLATED


def aggregate(
    program: SubqueryProgram,
    answers: Sequence[AnswerRecord],
    policy: UnanswerablePolicy | str = UnanswerablePolicy.STRICT,
) -> Verdict:
    """A constraint is violated when any of its subqueries is; labels are the union
    of violated constraints' categories, or ``{normal}`` when there are none."""
    policy = UnanswerablePolicy.coerce(policy)
    by_id: dict[str, AnswerRecord] = {}
    known = program.by_id()
    for rec in answers:
        if rec.subquery_id not in known:
            raise AggregationError(f"answer for unknown subquery {rec.subquery_id!r}")
        if rec.subquery_id in by_id:
            raise AggregationError(f"duplicate answer for subquery {rec.subquery_id!r}")
        by_id[rec.subquery_id] = rec
    missing = [q.id for q in program.subqueries if q.id not in by_id]
    if missing:
        raise AggregationError(f"no answer for subqueries {missing[:5]}{'...' if len(missing) > 5 else ''}")

    evidence = []
    violated = set()
    for q in program.subqueries:
        rec = by_id[q.id]
        outcome = judge(q, rec, policy)
        if outcome == VIOLATED:
            violated.add(q.violation_category)
        evidence.append(EvidenceItem(q.id, q.question_text, rec, outcome, q.violation_category))
    return Verdict(LabelSet.from_anomalies(violated), tuple(evidence))


def answer_all(scene: Scene, program: SubqueryProgram, provider: Provider) -> list[AnswerRecord]:
    return [provider.answer(scene, q) for q in program.subqueries]


def classify(
    scene: Scene,
    spec: ScenarioSpec,
    provider: Provider | None = None,
    policy: UnanswerablePolicy | str = UnanswerablePolicy.STRICT,
) -> Verdict:
    program = compile_spec(spec)
    provider = provider or GroundTruthProvider()
    return aggregate(program, answer_all(scene, program, provider), policy)


def truth_labels(scene: Scene, spec: ScenarioSpec) -> LabelSet:
    return classify(scene, spec, GroundTruthProvider()).labels


def save_verdicts(rows: Iterable[tuple[str, Verdict]], path) -> None:
    atomic_write(path, "".join(json.dumps(v.to_dict(scene)) + "\n" for scene, v in rows))


def load_verdict_labels(path) -> dict[str, LabelSet]:
    """Map scene reference to predicted label set from a verdict JSONL file."""
    out: dict[str, LabelSet] = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                row = json.loads(line)
                out[row["scene"]] = LabelSet(row["labels"])
    return out


# --- whole-constraint baseline ----------------------------------------------------

def end2end_question(c: Constraint) -> str:
    return f"Does the image satisfy the rule {rule_text(c)}? Answer yes or no."


def classify_end2end(scene: Scene, spec: ScenarioSpec, provider: "RemoteProvider",
                     exemplar_scene: Scene | None = None) -> Verdict:
    """Ask one yes/no question per constraint instead of its atomic subqueries.

    Kept as a baseline to compare against the decomposed pipeline; an answer of
    "no" marks the constraint's category as present.
    """
    program = compile_spec(spec)
    evidence = []
    violated = set()
    for c in spec.constraints:
        question = end2end_question(c)
        exemplar = ("", "")
        if exemplar_scene is not None:
            holds = aggregate_group(program, c.id, exemplar_scene)
            exemplar = (exemplar_scene.image_ref, render_tagged(
                "Checked every object the rule mentions.", Boolean(holds)))
        bundle = render_icl_prompt(question, exemplar, scene.image_ref)
        cot, raw = provider.ask_raw(bundle)
        value = coerce(raw, "boolean")
        outcome = SATISFIED if value.value else VIOLATED
        if not value.value:
            violated.add(c.violation)
        evidence.append(EvidenceItem(c.id, question, AnswerRecord(c.id, value, cot), outcome, c.violation))
    return Verdict(LabelSet.from_anomalies(violated), tuple(evidence))


def aggregate_group(program: SubqueryProgram, constraint_id: str, scene: Scene) -> bool:
    """Ground-truth check of one constraint: True when all its subqueries pass."""
    truth = GroundTruthProvider()
    for q in program.group_of(constraint_id):
        rec = truth.answer(scene, q)
        if isinstance(rec.value, Unanswerable) or not check_passes(q, rec.value):
            return False
    return True
