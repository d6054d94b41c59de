"""Answer providers: ground truth, seeded noisy simulation, and a remote HTTP model."""

from __future__ import annotations

import json
import math
import random
import threading
import time
import urllib.error
import urllib.request
from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping, Protocol

from .errors import LogiclsError, ResponseFormatError, TransportError
from .evaluator import (
    Boolean,
    Categorical,
    Numeric,
    Outcome,
    Trace,
    Unanswerable,
    trace,
    value_from_dict,
    value_to_dict,
)
from .lang.compiler import REASONING_KINDS, AtomicSubquery
from .scene import Scene, atomic_write
from .lang.serializer import format_number
from .wire import PromptBundle, extract_spans, parse_tagged_response, render_icl_prompt


@dataclass(frozen=True)
class AnswerRecord:
    subquery_id: str
    value: Outcome
    cot_text: str = ""
    perplexity: float = 1.0

    def __post_init__(self) -> None:
        if not math.isfinite(self.perplexity) or self.perplexity < 1.0:
            raise LogiclsError(f"perplexity must be finite and >= 1, got {self.perplexity}")

    @property
    def answerable(self) -> bool:
        return not isinstance(self.value, Unanswerable)

    def to_dict(self) -> dict[str, Any]:
        return {
            "subquery_id": self.subquery_id,
            "value": value_to_dict(self.value),
            "cot_text": self.cot_text,
            "perplexity": self.perplexity,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "AnswerRecord":
        return cls(d["subquery_id"], value_from_dict(d["value"]), d.get("cot_text", ""), float(d.get("perplexity", 1.0)))


def save_records(records: Iterable[AnswerRecord], path) -> None:
    atomic_write(path, "".join(json.dumps(r.to_dict()) + "\n" for r in records))


def load_records(path) -> list[AnswerRecord]:
    with open(path, encoding="utf-8") as fh:
        return [AnswerRecord.from_dict(json.loads(line)) for line in fh if line.strip()]


class Provider(Protocol):
    def answer(self, scene: Scene, subquery: AtomicSubquery) -> AnswerRecord: ...


def fmt_box(values) -> str:
    return "[" + ", ".join(format_number(v) for v in values) + "]"


def grounded_cot(t: Trace, value: Outcome) -> str:
    """Reasoning text citing the bounding box of every object the answer rests on."""
    parts = []
    if t.objects:
        cited = ", ".join(f"{label} {o.id} at {fmt_box(o.bbox.as_list())}" for label, o in t.objects)
        parts.append(f"Located {cited}.")
    else:
        parts.append("No matching objects located.")
    parts.extend(n[0].upper() + n[1:] + "." for n in t.notes)
    parts.append(f"Answer: {value.render()}.")
    return " ".join(parts)


class GroundTruthProvider:
    """Exact answers from the geometric evaluator; perplexity is pinned at 1."""

    name = "truth"

    def answer(self, scene: Scene, subquery: AtomicSubquery) -> AnswerRecord:
        t = trace(scene, subquery)
        return AnswerRecord(subquery.id, t.value, grounded_cot(t, t.value), 1.0)


@dataclass(frozen=True)
class NoiseProfile:
    """Corruption model for a simulated imperfect answerer.

    ``p`` maps reasoning kind to corruption probability. Numeric answers move by
    ±k with k >= 1 drawn geometrically (continue with probability ``tail``);
    booleans flip; categoricals jump uniformly to another allowed value.
    """

    p: Mapping[str, float] = field(default_factory=dict)
    kappa: float = 1.0
    tail: float = 0.5
    seed: int = 0

    def __post_init__(self) -> None:
        for kind, prob in self.p.items():
            if kind not in REASONING_KINDS:
                raise LogiclsError(f"unknown reasoning kind {kind!r}")
            if not 0.0 <= prob <= 1.0:
                raise LogiclsError(f"corruption probability for {kind} must be in [0, 1], got {prob}")
        if self.kappa < 0:
            raise LogiclsError("kappa must be >= 0")
        if not 0.0 <= self.tail < 1.0:
            raise LogiclsError("tail must be in [0, 1)")

    @classmethod
    def uniform(cls, p: float, seed: int = 0, kappa: float = 1.0) -> "NoiseProfile":
        return cls({k: p for k in REASONING_KINDS}, kappa=kappa, seed=seed)

    def rate(self, kind: str) -> float:
        return self.p.get(kind, 0.0)


class NoisyProvider:
    """Ground truth passed through a seeded corruption channel.

    Every call derives its own generator from (seed, scene, subquery), so results
    do not depend on call order or threading.
    """

    name = "noisy"

    def __init__(self, profile: NoiseProfile):
        self.profile = profile

    def _rng(self, scene: Scene, subquery: AtomicSubquery) -> random.Random:
        return random.Random(f"{self.profile.seed}|{scene.image_ref}|{subquery.id}")

    def corrupt(self, value: Outcome, subquery: AtomicSubquery, rng: random.Random) -> Outcome:
        if isinstance(value, Numeric):
            k = 1
            while rng.random() < self.profile.tail:
                k += 1
            sign = rng.choice((-1, 1))
            if value.value + sign * k < 0:
                sign = 1
            return Numeric(value.value + sign * k)
        if isinstance(value, Boolean):
            return Boolean(not value.value)
        if isinstance(value, Categorical):
            others = [v for v in subquery.values if v != value.value]
            return Categorical(rng.choice(others)) if others else value
        return value

    def answer(self, scene: Scene, subquery: AtomicSubquery) -> AnswerRecord:
        t = trace(scene, subquery)
        rng = self._rng(scene, subquery)
        u = rng.random()
        corrupted = not isinstance(t.value, Unanswerable) and u < self.profile.rate(subquery.reasoning_kind)
        if corrupted:
            value = self.corrupt(t.value, subquery, rng)
            inflation = 1.0
        else:
            value = t.value
            inflation = rng.uniform(0.0, 0.25)
        return AnswerRecord(subquery.id, value, grounded_cot(t, value), 1.0 + self.profile.kappa * inflation)


@dataclass(frozen=True)
class RemoteConfig:
    timeout: float = 30.0
    retries: int = 2
    backoff: float = 0.5
    max_in_flight: int = 4

    @classmethod
    def from_mapping(cls, data: Mapping[str, Any] | None) -> "RemoteConfig":
        data = dict(data or {})
        known = {k: data[k] for k in ("timeout", "retries", "backoff", "max_in_flight") if k in data}
        return cls(**known)


class RemoteProvider:
    """Speaks the one-exemplar ICL protocol to ``POST {url}/answer``.

    The exemplar for each question is a normal reference scene answered by the
    ground-truth provider.
    """

    name = "remote"

    def __init__(self, url: str, exemplar_scene: Scene | None = None, config: RemoteConfig | None = None):
        self.url = url.rstrip("/")
        self.exemplar_scene = exemplar_scene
        self.config = config or RemoteConfig()
        self._slots = threading.BoundedSemaphore(max(1, self.config.max_in_flight))
        self._truth = GroundTruthProvider()

    def _exemplar(self, subquery: AtomicSubquery) -> tuple[str, Any]:
        if self.exemplar_scene is None:
            return ("", "")
        return (self.exemplar_scene.image_ref, self._truth.answer(self.exemplar_scene, subquery))

    def post(self, body: Mapping[str, Any]) -> dict[str, Any]:
        data = json.dumps(body).encode("utf-8")
        last: Exception | None = None
        for attempt in range(self.config.retries + 1):
            req = urllib.request.Request(
                self.url + "/answer", data=data, headers={"Content-Type": "application/json"}, method="POST"
            )
            try:
                with self._slots:
                    with urllib.request.urlopen(req, timeout=self.config.timeout) as resp:
                        payload = resp.read()
            except urllib.error.HTTPError as exc:
                last = exc
                if exc.code < 500:
                    break
            except (urllib.error.URLError, OSError) as exc:
                last = exc
            else:
                try:
                    decoded = json.loads(payload)
                except json.JSONDecodeError:
                    raise ResponseFormatError("remote answer body is not JSON") from None
                if not isinstance(decoded, dict) or not isinstance(decoded.get("text"), str):
                    raise ResponseFormatError("remote answer body lacks a string 'text' field")
                return decoded
            if attempt < self.config.retries:
                time.sleep(self.config.backoff * (2 ** attempt))
        raise TransportError(f"POST {self.url}/answer failed: {last}")

    def bundle(self, scene: Scene, subquery: AtomicSubquery) -> PromptBundle:
        return render_icl_prompt(subquery, self._exemplar(subquery), scene.image_ref)

    def answer(self, scene: Scene, subquery: AtomicSubquery) -> AnswerRecord:
        reply = self.post(self.bundle(scene, subquery).to_request())
        cot, value = parse_tagged_response(reply["text"], subquery)
        ppl = reply.get("perplexity", 1.0)
        try:
            ppl = max(1.0, float(ppl))
        except (TypeError, ValueError):
            ppl = 1.0
        return AnswerRecord(subquery.id, value, cot, ppl)

    def ask_raw(self, bundle: PromptBundle) -> tuple[str, str]:
        """Send a pre-built bundle; returns (think, answer) text without coercion."""
        reply = self.post(bundle.to_request())
        return extract_spans(reply["text"])


def provider_from_string(text: str, *, exemplar_scene: Scene | None = None,
                         remote_config: RemoteConfig | None = None):
    """``truth`` | ``noisy:<p>:<seed>`` | ``remote:<url>``."""
    if text == "truth":
        return GroundTruthProvider()
    if text.startswith("noisy:"):
        parts = text.split(":")
        if len(parts) != 3:
            raise ValueError("noisy answerer must be written noisy:<p>:<seed>")
        try:
            p, seed = float(parts[1]), int(parts[2])
        except ValueError:
            raise ValueError(f"bad noisy answerer spec {text!r}") from None
        return NoisyProvider(NoiseProfile.uniform(p, seed=seed))
    if text.startswith("remote:"):
        return RemoteProvider(text[len("remote:"):], exemplar_scene, remote_config)
    raise ValueError(f"unknown answerer {text!r}; use truth, noisy:<p>:<seed> or remote:<url>")
