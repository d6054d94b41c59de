import math
import random
from collections import Counter

import pytest
from hypothesis import assume, given
from hypothesis import strategies as st

from logicls.errors import ResampleError
from logicls.resampler import (
    DifficultyTable,
    GroupConfig,
    SimConfig,
    default_config,
    difficulty,
    sample_batch,
    sampling_plan,
    simulate_run,
    simulate_training,
)

sums_st = st.lists(st.floats(0.0, 1e6, allow_nan=False), min_size=1, max_size=8)


class TestDifficulty:
    def test_examples(self):
        assert abs(difficulty(False, 5.0) - 2.0) <= 1e-12
        assert difficulty(True, 1.0, alpha=1.0, beta=0.0) == 0.0
        assert difficulty(True, 1.0) == pytest.approx(0.2, abs=1e-12)

    @pytest.mark.parametrize("ppl", [math.nan, math.inf, 0.5, "3"])
    def test_bad_perplexity(self, ppl):
        with pytest.raises(ResampleError):
            difficulty(True, ppl)

    def test_bad_weights(self):
        with pytest.raises(ResampleError):
            difficulty(True, 1.0, alpha=-1)
        with pytest.raises(ResampleError):
            difficulty(True, 1.0, beta=math.nan)


class TestTable:
    def test_sums(self):
        t = DifficultyTable.from_outcomes(
            1, [("a/0", "a", False, 5.0), ("a/1", "a", True, 1.0), ("b/0", "b", True, 2.0)]
        )
        assert t.sums["a"] == pytest.approx(2.2) and t.sums["b"] == pytest.approx(0.4)
        assert t.consistent()
        t.sums["a"] += 1
        assert not t.consistent()

    def test_ungrouped_sample(self):
        with pytest.raises(ResampleError):
            DifficultyTable(0, {"x": 1.0}, {})

    @given(st.lists(st.tuples(st.integers(0, 3), st.booleans(), st.floats(1.0, 50.0)), max_size=40))
    def test_consistency(self, rows):
        outcomes = [(f"s{i}", f"g{g}", c, p) for i, (g, c, p) in enumerate(rows)]
        t = DifficultyTable.from_outcomes(0, outcomes)
        assert t.consistent()
        for g, s in t.sums.items():
            expected = math.fsum(t.scores[sid] for sid in t.scores if t.group_of[sid] == g)
            assert s == pytest.approx(expected, rel=1e-12, abs=1e-12)


class TestPlan:
    def test_examples(self):
        assert sampling_plan([1, 1, 1, 1]).probs == (0.25,) * 4
        assert sampling_plan({"x": 3.0, "y": 1.0}).as_dict() == {"x": 0.75, "y": 0.25}
        p = sampling_plan([3.0, 1.0], gamma=2.0).probs
        assert p == pytest.approx((0.9, 0.1), abs=1e-12)

    def test_all_zero_is_uniform(self):
        assert sampling_plan([0.0, 0.0]).probs == (0.5, 0.5)

    @pytest.mark.parametrize("gamma", [0.0, -1.0, math.nan])
    def test_bad_gamma(self, gamma):
        with pytest.raises(ResampleError):
            sampling_plan([1.0], gamma=gamma)

    def test_bad_sums(self):
        with pytest.raises(ResampleError):
            sampling_plan([1.0, -0.1])
        with pytest.raises(ResampleError):
            sampling_plan([])

    def test_overflow_falls_back(self):
        p = sampling_plan([1e300, 5e299], gamma=4.0).probs
        assert p == pytest.approx((16 / 17, 1 / 17))

    @given(sums_st, st.floats(0.1, 8.0))
    def test_normalised(self, sums, gamma):
        p = sampling_plan(sums, gamma).probs
        assert all(x >= 0 for x in p)
        assert math.fsum(p) == pytest.approx(1.0, abs=1e-9)

    @given(sums_st, st.floats(0.1, 4.0), st.floats(1e-3, 1e3))
    def test_scale_invariant(self, sums, gamma, c):
        assume(max(sums) > 1e-3)
        a = sampling_plan(sums, gamma).probs
        b = sampling_plan([c * s for s in sums], gamma).probs
        assert a == pytest.approx(b, abs=1e-12)

    @given(sums_st, st.floats(0.1, 4.0), st.floats(0.0, 100.0))
    def test_monotone_in_own_sum(self, sums, gamma, bump):
        assume(any(s > 0 for s in sums[1:]))
        before = sampling_plan(sums, gamma).probs[0]
        after = sampling_plan([sums[0] + bump] + sums[1:], gamma).probs[0]
        assert after >= before - 1e-12

    def test_large_gamma_concentrates(self):
        p = sampling_plan([1.0, 2.0, 4.0], gamma=16.0).probs
        assert p[2] > 0.99


class TestSampleBatch:
    def test_frequencies(self):
        plan = sampling_plan({"x": 3.0, "y": 1.0})
        groups = {"x": ["x0", "x1"], "y": ["y0"]}
        drawn = sample_batch(plan, groups, 100_000, seed=7)
        counts = Counter(s[0] for s in drawn)
        assert abs(counts["x"] / 100_000 - 0.75) <= 0.01
        assert abs(counts["y"] / 100_000 - 0.25) <= 0.01
        members = Counter(s for s in drawn if s[0] == "x")
        assert abs(members["x0"] / counts["x"] - 0.5) <= 0.02

    def test_deterministic(self):
        plan = sampling_plan({"x": 1.0, "y": 2.0})
        groups = {"x": ["x0"], "y": ["y0", "y1"]}
        assert sample_batch(plan, groups, 50, 3) == sample_batch(plan, groups, 50, 3)
        assert sample_batch(plan, groups, 50, 3) != sample_batch(plan, groups, 50, 4)

    def test_empty_group(self):
        plan = sampling_plan({"x": 1.0, "y": 1.0})
        with pytest.raises(ResampleError):
            sample_batch(plan, {"x": ["x0"], "y": []}, 4, 0)
        with pytest.raises(ResampleError):
            sample_batch(plan, {"x": ["x0"], "y": ["y0"]}, 0, 0)


class TestSimulator:
    def test_no_learning_is_flat(self):
        cfg = default_config(eta=0.0, seeds=(0,))
        run = simulate_run(cfg, 0)
        assert all(row == run.errors[0] for row in run.errors)

    def test_harder_group_gets_more_exposure(self):
        cfg = SimConfig(groups=(GroupConfig("easy", 0.95), GroupConfig("hard", 0.2)), seeds=(0,))
        diff = simulate_run(cfg, 0)
        uni = simulate_run(cfg.with_sampler("uniform"), 0)
        assert diff.exposures["hard"] > diff.exposures["easy"]
        assert diff.exposures["hard"] > uni.exposures["hard"]
        assert diff.errors[-1][1] < uni.errors[-1][1]

    def test_errors_never_increase(self):
        run = simulate_run(default_config(), 1)
        for before, after in zip(run.errors, run.errors[1:]):
            assert all(b >= a for b, a in zip(before, after))

    def test_deterministic(self):
        cfg = default_config(seeds=(0, 1))
        assert simulate_training(cfg).summary() == simulate_training(cfg).summary()

    def test_difficulty_sampler_wins(self):
        cfg = default_config()
        diff = simulate_training(cfg).final_max_errors
        uni = simulate_training(cfg.with_sampler("uniform")).final_max_errors
        assert sum(d < u for d, u in zip(diff, uni)) >= 9

    def test_config_validation(self):
        with pytest.raises(ResampleError):
            SimConfig(groups=())
        with pytest.raises(ResampleError):
            default_config(sampler="greedy")
        with pytest.raises(ResampleError):
            SimConfig(groups=(GroupConfig("a", 1.5),))
        with pytest.raises(ResampleError):
            SimConfig.from_mapping({"learning_rate": 0.1})
        assert SimConfig.from_mapping({"eta": 0.01, "seeds": [1, 2]}).seeds == (1, 2)

    def test_csv_rows(self):
        rep = simulate_training(default_config(seeds=(0,), epochs=2))
        rows = rep.csv_rows()
        assert rows[0] == ["sampler", "seed", "epoch", "group", "error", "probability"]
        assert len(rows) == 1 + 3 * 8
