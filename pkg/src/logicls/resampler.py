"""Difficulty scoring, group-level resampling, and a toy training loop that exercises both.

Each training sample belongs to the group of the base subquery it was derived
from. A sample's difficulty is ``alpha * [answer wrong] + beta * perplexity``;
groups are drawn with probability proportional to ``(group difficulty sum) ** gamma``
and a member is then picked uniformly.

The simulated learner is deliberately simple. Each group has a skill in
[0, 1]; every exposure moves it a fraction ``eta`` of the way to 1; a sample is
answered correctly with probability equal to its group's skill. Its
perplexity follows the noisy answerer's model: ``1 + kappa`` when wrong,
``1 + kappa * U[0, 0.25]`` when right.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping, Sequence

from .errors import ResampleError

ALPHA, BETA, GAMMA = 1.0, 0.2, 1.0
SAMPLERS = ("uniform", "difficulty")


def _finite(name: str, v: float) -> float:
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
        raise ResampleError(f"{name} must be a finite number, got {v!r}")
    return float(v)


def difficulty(correct: bool, perplexity: float, alpha: float = ALPHA, beta: float = BETA) -> float:
    perplexity = _finite("perplexity", perplexity)
    alpha, beta = _finite("alpha", alpha), _finite("beta", beta)
    if perplexity < 1.0:
        raise ResampleError(f"perplexity must be >= 1, got {perplexity}")
    if alpha < 0 or beta < 0:
        raise ResampleError("alpha and beta must be >= 0")
    return alpha * (0.0 if correct else 1.0) + beta * perplexity


@dataclass
class DifficultyTable:
    epoch: int
    scores: dict[str, float]
    group_of: dict[str, str]
    sums: dict[str, float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        for sid, d in self.scores.items():
            if not d >= 0:
                raise ResampleError(f"difficulty of {sid} is negative or NaN: {d}")
            if sid not in self.group_of:
                raise ResampleError(f"sample {sid} has no group")
        if not self.sums:
            self.sums = self.recompute()

    def recompute(self) -> dict[str, float]:
        out: dict[str, float] = {g: 0.0 for g in dict.fromkeys(self.group_of.values())}
        for sid in sorted(self.scores):
            out[self.group_of[sid]] += self.scores[sid]
        return out

    def consistent(self) -> bool:
        return self.recompute() == self.sums

    @classmethod
    def from_outcomes(
        cls,
        epoch: int,
        outcomes: Iterable[tuple[str, str, bool, float]],
        alpha: float = ALPHA,
        beta: float = BETA,
    ) -> "DifficultyTable":
        """``outcomes`` holds (sample id, group, correct, perplexity) rows."""
        scores: dict[str, float] = {}
        group_of: dict[str, str] = {}
        for sid, group, correct, ppl in outcomes:
            scores[sid] = difficulty(correct, ppl, alpha, beta)
            group_of[sid] = group
        return cls(epoch, scores, group_of)


@dataclass(frozen=True)
class SamplingPlan:
    groups: tuple[str, ...]
    probs: tuple[float, ...]
    gamma: float = GAMMA

    def as_dict(self) -> dict[str, float]:
        return dict(zip(self.groups, self.probs))


def sampling_plan(group_sums: Mapping[str, float] | Sequence[float], gamma: float = GAMMA) -> SamplingPlan:
    if isinstance(group_sums, Mapping):
        names = tuple(str(k) for k in group_sums)
        sums = [_finite(f"sum of {k}", v) for k, v in group_sums.items()]
    else:
        sums = [_finite(f"sum {i}", v) for i, v in enumerate(group_sums)]
        names = tuple(str(i) for i in range(len(sums)))
    gamma = _finite("gamma", gamma)
    if gamma <= 0:
        raise ResampleError(f"gamma must be > 0, got {gamma}")
    if not sums:
        raise ResampleError("at least one group is required")
    if any(s < 0 for s in sums):
        raise ResampleError("group sums must be >= 0")
    top = max(sums)
    if top == 0:
        return SamplingPlan(names, tuple(1.0 / len(sums) for _ in sums), gamma)
    try:
        weights = [s ** gamma for s in sums]
        total = sum(weights)
        if total == 0 or not math.isfinite(total):
            raise OverflowError
    except OverflowError:
        weights = [(s / top) ** gamma for s in sums]
        total = sum(weights)
    return SamplingPlan(names, tuple(w / total for w in weights), gamma)


def sample_batch(
    plan: SamplingPlan,
    groups: Mapping[str, Sequence[str]],
    batch_size: int,
    seed: int | str,
) -> list[str]:
    if batch_size < 1:
        raise ResampleError("batch_size must be >= 1")
    for g, p in zip(plan.groups, plan.probs):
        if p > 0 and not groups.get(g):
            raise ResampleError(f"group {g!r} has probability {p} but no members")
    rng = random.Random(seed)
    picked = rng.choices(plan.groups, weights=plan.probs, k=batch_size)
    return [rng.choice(groups[g]) for g in picked]


# --- training simulator ---------------------------------------------------------

@dataclass(frozen=True)
class GroupConfig:
    name: str
    skill: float
    samples: int = 20        # members in the base (scored) set
    multiplicity: int = 3    # augmented members per base sample


@dataclass(frozen=True)
class SimConfig:
    groups: tuple[GroupConfig, ...]
    eta: float = 0.004
    gamma: float = GAMMA
    alpha: float = ALPHA
    beta: float = BETA
    kappa: float = 1.0
    epochs: int = 6
    batch_size: int = 32
    steps_per_epoch: int = 10
    seeds: tuple[int, ...] = tuple(range(10))
    sampler: str = "difficulty"

    def __post_init__(self) -> None:
        if not self.groups:
            raise ResampleError("simulation needs at least one group")
        names = [g.name for g in self.groups]
        if len(set(names)) != len(names):
            raise ResampleError("group names must be unique")
        for g in self.groups:
            if not 0.0 <= g.skill <= 1.0:
                raise ResampleError(f"skill of {g.name} must be in [0, 1]")
            if g.samples < 1 or g.multiplicity < 1:
                raise ResampleError(f"group {g.name} needs >= 1 sample and multiplicity >= 1")
        if not 0.0 <= self.eta <= 1.0:
            raise ResampleError("eta must be in [0, 1]")
        if self.gamma <= 0:
            raise ResampleError("gamma must be > 0")
        if self.alpha < 0 or self.beta < 0 or self.kappa < 0:
            raise ResampleError("alpha, beta and kappa must be >= 0")
        if self.epochs < 1 or self.batch_size < 1 or self.steps_per_epoch < 1:
            raise ResampleError("epochs, batch_size and steps_per_epoch must be >= 1")
        if not self.seeds:
            raise ResampleError("at least one seed is required")
        if self.sampler not in SAMPLERS:
            raise ResampleError(f"sampler must be one of {SAMPLERS}")

    @classmethod
    def from_mapping(cls, data: Mapping[str, Any]) -> "SimConfig":
        data = dict(data)
        raw_groups = data.pop("groups", None)
        if raw_groups is None:
            groups = DEFAULT_GROUPS
        else:
            groups = tuple(GroupConfig(**dict(g)) for g in raw_groups)
        if "seeds" in data:
            data["seeds"] = tuple(int(s) for s in data["seeds"])
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ResampleError(f"unknown simulation settings: {sorted(unknown)}")
        return cls(groups=groups, **data)

    def with_sampler(self, sampler: str) -> "SimConfig":
        return SimConfig(**{**self.__dict__, "sampler": sampler})


DEFAULT_GROUPS = tuple(
    [GroupConfig(f"easy{i}", 0.9) for i in range(4)] + [GroupConfig(f"hard{i}", 0.3) for i in range(4)]
)


def default_config(**overrides: Any) -> SimConfig:
    """Two skill tiers: four well-learnt groups and four weak ones."""
    return SimConfig(groups=DEFAULT_GROUPS, **overrides)


@dataclass
class RunReport:
    seed: int
    sampler: str
    groups: tuple[str, ...]
    errors: list[list[float]]          # [epoch][group], epoch 0 is before training
    exposures: dict[str, int]
    plans: list[dict[str, float]]

    @property
    def final_max_error(self) -> float:
        return max(self.errors[-1])

    def to_dict(self) -> dict[str, Any]:
        return {
            "seed": self.seed,
            "sampler": self.sampler,
            "final_max_error": self.final_max_error,
            "exposures": self.exposures,
            "final_errors": dict(zip(self.groups, self.errors[-1])),
        }


@dataclass
class SimReport:
    config: SimConfig
    runs: list[RunReport]

    @property
    def final_max_errors(self) -> list[float]:
        return [r.final_max_error for r in self.runs]

    def csv_rows(self) -> list[list[Any]]:
        rows: list[list[Any]] = [["sampler", "seed", "epoch", "group", "error", "probability"]]
        for run in self.runs:
            for epoch, errs in enumerate(run.errors):
                plan = run.plans[epoch] if epoch < len(run.plans) else {}
                for g, e in zip(run.groups, errs):
                    rows.append([run.sampler, run.seed, epoch, g, f"{e:.6f}", f"{plan.get(g, 0.0):.6f}"])
        return rows

    def summary(self) -> dict[str, Any]:
        errs = self.final_max_errors
        return {
            "sampler": self.config.sampler,
            "seeds": list(self.config.seeds),
            "mean_final_max_error": sum(errs) / len(errs),
            "runs": [r.to_dict() for r in self.runs],
        }


def _score_epoch(
    cfg: SimConfig, skills: dict[str, float], members: Mapping[str, Sequence[str]], rng: random.Random, epoch: int
) -> DifficultyTable:
    rows = []
    for g in cfg.groups:
        for sid in members[g.name]:
            correct = rng.random() < skills[g.name]
            inflation = rng.uniform(0.0, 0.25) if correct else 1.0
            rows.append((sid, g.name, correct, 1.0 + cfg.kappa * inflation))
    return DifficultyTable.from_outcomes(epoch, rows, cfg.alpha, cfg.beta)


def _uniform_plan(cfg: SimConfig, augmented: Mapping[str, Sequence[str]]) -> SamplingPlan:
    """Every augmented sample equally likely, i.e. groups weighted by size."""
    total = sum(len(v) for v in augmented.values())
    return SamplingPlan(tuple(augmented), tuple(len(v) / total for v in augmented.values()), cfg.gamma)


def simulate_run(cfg: SimConfig, seed: int) -> RunReport:
    names = tuple(g.name for g in cfg.groups)
    base = {g.name: [f"{g.name}/{i}" for i in range(g.samples)] for g in cfg.groups}
    augmented = {
        g.name: [f"{sid}~{k}" for sid in base[g.name] for k in range(g.multiplicity)] for g in cfg.groups
    }
    skills = {g.name: g.skill for g in cfg.groups}
    exposures = {n: 0 for n in names}
    score_rng = random.Random(f"score|{seed}")
    plan = _uniform_plan(cfg, augmented)
    errors = [[1.0 - skills[n] for n in names]]
    plans = [plan.as_dict()]
    member_group = {sid: g for g, ids in augmented.items() for sid in ids}
    for epoch in range(1, cfg.epochs + 1):
        for step in range(cfg.steps_per_epoch):
            for sid in sample_batch(plan, augmented, cfg.batch_size, f"{seed}|{epoch}|{step}"):
                g = member_group[sid]
                exposures[g] += 1
                skills[g] += cfg.eta * (1.0 - skills[g])
        errors.append([1.0 - skills[n] for n in names])
        if cfg.sampler == "difficulty":
            table = _score_epoch(cfg, skills, base, score_rng, epoch)
            plan = sampling_plan({n: table.sums[n] for n in names}, cfg.gamma)
        plans.append(plan.as_dict())
    return RunReport(seed, cfg.sampler, names, errors, exposures, plans)


def simulate_training(config: SimConfig) -> SimReport:
    return SimReport(config, [simulate_run(config, s) for s in config.seeds])
