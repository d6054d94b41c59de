"""One-exemplar in-context prompt bundles and parsing of tagged model responses.

A response carries its reasoning in ``<think>...</think>`` and its final answer in
``<answer>...</answer>``. Only the first span of each kind counts.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Any, Sequence

from .errors import CoercionError, TagParseError, ValueOutOfSetError
from .evaluator import Boolean, Categorical, Numeric, Outcome
from .lang.compiler import AtomicSubquery

THINK_OPEN, THINK_CLOSE = "<think>", "</think>"
ANSWER_OPEN, ANSWER_CLOSE = "<answer>", "</answer>"

SYSTEM_PROMPT = (
    "- Task: Look at the image and reply to the question.\n"
    "- Format: Write your working inside <think></think>, then only the final value inside "
    "<answer></answer>, e.g. <think>two nuts near the top edge</think><answer>2</answer>."
)
TEST_INSTRUCTION = "Apply the same reasoning to the test image and give its reasoning and answer."

_NUMBER = re.compile(r"[-+]?\d+(?:\.\d+)?")
_TRUE = {"yes", "true"}
_FALSE = {"no", "false"}


@dataclass(frozen=True)
class PromptBundle:
    system_prompt: str
    user_prompt: str
    exemplar_image_ref: str
    exemplar_output: str
    test_image_ref: str

    def render(self) -> str:
        """Plain-text layout: system prompt, user prompt, solved case, then the test case."""
        return (
            f"System Prompt:\n{self.system_prompt}\n"
            f"User Prompt: {self.user_prompt}\n"
            f"Case:\n"
            f"- Input Image: {self.exemplar_image_ref}\n"
            f"- Output: {self.exemplar_output}\n"
            f"{TEST_INSTRUCTION}\n"
            f"Test:\n"
            f"- Input: {self.test_image_ref}\n"
            f"- Output:"
        )

    def to_request(self) -> dict[str, Any]:
        return {
            "system_prompt": self.system_prompt,
            "subquery": self.user_prompt,
            "exemplar": {"image_ref": self.exemplar_image_ref, "output": self.exemplar_output},
            "test_image_ref": self.test_image_ref,
        }


def render_tagged(cot: str, value: Outcome) -> str:
    return f"{THINK_OPEN}{cot}{THINK_CLOSE}{ANSWER_OPEN}{value.render()}{ANSWER_CLOSE}"


def render_icl_prompt(subquery: AtomicSubquery | str, exemplar: tuple[str, Any], test_image_ref: str) -> PromptBundle:
    """Build the prompt for one question.

    ``exemplar`` is ``(image_ref, record)`` where record is an AnswerRecord (or any
    object with ``cot_text`` and ``value``) or an already rendered output string.
    """
    question = subquery if isinstance(subquery, str) else subquery.question_text
    image_ref, record = exemplar
    output = record if isinstance(record, str) else render_tagged(record.cot_text, record.value)
    return PromptBundle(SYSTEM_PROMPT, question, image_ref, output, test_image_ref)


def extract_spans(text: str) -> tuple[str, str]:
    """Return (think content, answer content); raises TagParseError when no closed answer span."""
    start = text.find(ANSWER_OPEN)
    if start < 0:
        raise TagParseError("response has no <answer> span")
    end = text.find(ANSWER_CLOSE, start + len(ANSWER_OPEN))
    if end < 0:
        raise TagParseError("<answer> span is not closed")
    answer = text[start + len(ANSWER_OPEN):end]
    cot = ""
    t0 = text.find(THINK_OPEN)
    if t0 >= 0:
        t1 = text.find(THINK_CLOSE, t0 + len(THINK_OPEN))
        if t1 >= 0:
            cot = text[t0 + len(THINK_OPEN):t1]
    return cot, answer


def coerce(raw: str, answer_type: str, values: Sequence[str] = ()) -> Outcome:
    token = raw.strip()
    if answer_type == "numeric":
        m = _NUMBER.match(token)
        if m is None:
            raise CoercionError(f"expected a number, got {token!r}")
        return Numeric(float(m.group()))
    if answer_type == "boolean":
        low = token.lower()
        if low in _TRUE:
            return Boolean(True)
        if low in _FALSE:
            return Boolean(False)
        raise CoercionError(f"expected yes/no/true/false, got {token!r}")
    if answer_type == "categorical":
        if token not in values:
            raise ValueOutOfSetError(f"{token!r} is not one of {list(values)}")
        return Categorical(token)
    raise CoercionError(f"unknown answer type {answer_type!r}")


def parse_tagged_response(text: str, expected: AtomicSubquery | str, values: Sequence[str] = ()) -> tuple[str, Outcome]:
    if isinstance(expected, AtomicSubquery):
        answer_type, values = expected.answer_type, expected.values
    else:
        answer_type = expected
    cot, raw = extract_spans(text)
    return cot, coerce(raw, answer_type, values)
