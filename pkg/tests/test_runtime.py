from __future__ import annotations

import random

import pytest

from imo.errors import MismatchedReport, TooFewModels, UnknownModel
from imo.planner import PlannerWeights, evaluate_plan, plan
from imo.registry import Registry
from imo.runtime import co_train, co_train_models, execute_plan, score_report
from imo.workflow import Subtask, TaskSpec

from conftest import make_manifest

WEIGHTS = PlannerWeights()


def single_task(difficulty, novel=False):
    return TaskSpec.create(
        {"s1": Subtask(frozenset(["t"]), difficulty, novel)}, set())


class TestExecute:
    def test_pass_and_fail_thresholds(self):
        for cap, difficulty, expected in ((0.9, 0.5, True), (0.3, 0.5, False)):
            task = single_task(difficulty)
            pool = {"m": make_manifest("m", {"t": cap})}
            p = plan(task, pool, WEIGHTS)
            report = execute_plan(p, task, b"payload", pool)
            assert report.results["s1"].passed is expected

    def test_chain_latency_totals(self, chain_task, two_model_pool):
        p = plan(chain_task, two_model_pool, WEIGHTS)
        report = execute_plan(p, chain_task, b"x", two_model_pool)
        assert report.critical_path_latency_ms == 200
        assert report.total_cost_ucr == 20

    def test_output_shape_and_determinism(self, chain_task, two_model_pool):
        p = plan(chain_task, two_model_pool, WEIGHTS)
        r1 = execute_plan(p, chain_task, b"input bytes", two_model_pool)
        r2 = execute_plan(p, chain_task, b"input bytes", two_model_pool)
        assert r1.to_doc() == r2.to_doc()
        out = r1.results["s1"].output.decode()
        name, sid, fingerprint = out.split(":")
        assert (name, sid) == ("a", "s1")
        assert len(fingerprint) == 8

    def test_downstream_input_includes_prerequisite_outputs(self, chain_task, two_model_pool):
        p = plan(chain_task, two_model_pool, WEIGHTS)
        report = execute_plan(p, chain_task, b"seed", two_model_pool)
        from imo.canon import sha256_hex

        expected_input = b"seed" + report.results["s1"].output
        assert report.results["s2"].output.decode().endswith(
            sha256_hex(expected_input)[:8])

    def test_unknown_model_version(self, chain_task, two_model_pool):
        p = plan(chain_task, two_model_pool, WEIGHTS)
        stale = {name: make_manifest(name, m.capabilities, version=9)
                 for name, m in two_model_pool.items()}
        with pytest.raises(UnknownModel):
            execute_plan(p, chain_task, b"", stale)

    def test_forced_failure_is_model_specific(self):
        task = single_task(0.1)
        pool = {"m": make_manifest("m", {"t": 0.9})}
        p = plan(task, pool, WEIGHTS)
        report = execute_plan(p, task, b"", pool,
                              forced_failures=frozenset({("s1", "m")}))
        assert not report.results["s1"].passed
        report2 = execute_plan(p, task, b"", pool,
                               forced_failures=frozenset({("s1", "other")}))
        assert report2.results["s1"].passed


def diamond_task(join_difficulty=0.5, novel_join=False):
    return TaskSpec.create(
        {
            "a": Subtask(frozenset(["t"]), 0.1, False),
            "b": Subtask(frozenset(["t"]), 0.1, False),
            "c": Subtask(frozenset(["t"]), join_difficulty, novel_join),
        },
        {("a", "c"), ("b", "c")},
    )


class TestScorecard:
    def test_all_pass(self):
        task = diamond_task()
        pool = {"m": make_manifest("m", {"t": 0.9})}
        p = plan(task, pool, WEIGHTS)
        card = score_report(execute_plan(p, task, b"", pool), task, p)
        assert card.functional == 1.0
        assert card.multi_step == 1.0
        assert card.comprehensive == 1.0
        assert card.transparency == 1
        assert card.adaptability is None
        assert card.responsiveness is None

    def test_join_failure_zeroes_comprehensive(self):
        task = diamond_task(join_difficulty=0.95)
        pool = {"m": make_manifest("m", {"t": 0.9})}
        p = plan(task, pool, WEIGHTS)
        card = score_report(execute_plan(p, task, b"", pool), task, p)
        assert card.comprehensive == 0.0
        assert card.functional == pytest.approx(2 / 3)
        assert card.multi_step == 0.0  # both maximal chains pass through c

    def test_adaptability_tracks_novel_subtasks(self):
        task = diamond_task(novel_join=True)
        pool = {"m": make_manifest("m", {"t": 0.9})}
        p = plan(task, pool, WEIGHTS)
        card = score_report(execute_plan(p, task, b"", pool), task, p)
        assert card.adaptability == 1.0

    def test_transparency_zero_on_empty_rationale(self):
        task = single_task(0.1)
        pool = {"m": make_manifest("m", {"t": 0.9})}
        p = plan(task, pool, WEIGHTS)
        from dataclasses import replace

        blank = replace(p, rationale={"s1": ""})
        card = score_report(execute_plan(p, task, b"", pool), task, blank)
        assert card.transparency == 0

    def test_mismatched_report(self, chain_task, two_model_pool):
        p = plan(chain_task, two_model_pool, WEIGHTS)
        report = execute_plan(p, chain_task, b"", two_model_pool)
        other = single_task(0.5)
        with pytest.raises(MismatchedReport):
            score_report(report, other, p)

    def test_functional_matches_static_quality_prediction(self):
        # planner statics and runtime dynamics agree on pass/fail
        rng = random.Random(99)
        for _ in range(50):
            difficulty = round(rng.random(), 3)
            cap = round(rng.random(), 3)
            task = single_task(difficulty)
            pool = {"m": make_manifest("m", {"t": cap})}
            p = plan(task, pool, WEIGHTS)
            breakdown = evaluate_plan(p.assignment, task, pool, WEIGHTS)
            card = score_report(execute_plan(p, task, b"", pool), task, p)
            assert (card.functional == 1.0) == (breakdown.quality >= difficulty)


class TestCoTrain:
    def test_single_round_arithmetic(self):
        caps = {"low": {"t": 0.2}, "high": {"t": 0.8}}
        updated = co_train(caps, rounds=1, eta=0.1)
        assert updated["low"]["t"] == pytest.approx(0.26)
        assert updated["high"]["t"] == pytest.approx(0.8)

    def test_equal_caps_unchanged(self):
        caps = {"a": {"t": 0.5}, "b": {"t": 0.5}}
        updated = co_train(caps, rounds=5, eta=0.1)
        assert updated == caps

    def test_convergence_to_group_max(self):
        # iterate the update rule; the per-tag group max is a fixed point
        caps = {"a": {"t": 0.15, "u": 0.9}, "b": {"t": 0.85, "u": 0.1},
                "c": {"t": 0.4}}
        updated = co_train(caps, rounds=100, eta=0.2)
        for name in caps:
            assert updated[name]["t"] == pytest.approx(0.85, abs=1e-6)
            assert updated[name]["u"] == pytest.approx(0.9, abs=1e-6)

    def test_monotone_and_max_invariant(self):
        rng = random.Random(3)
        caps = {f"m{i}": {f"t{j}": round(rng.random(), 4) for j in range(4)}
                for i in range(5)}
        tag_max = {f"t{j}": max(c.get(f"t{j}", 0.0) for c in caps.values())
                   for j in range(4)}
        state = caps
        for _ in range(20):
            nxt = co_train(state, rounds=1, eta=0.37)
            for name in state:
                for tag in nxt[name]:
                    assert nxt[name][tag] >= state[name].get(tag, 0.0) - 1e-15
                    assert nxt[name][tag] <= tag_max[tag] + 1e-12
            state = nxt

    def test_too_few_models(self):
        with pytest.raises(TooFewModels):
            co_train({"solo": {"t": 0.5}}, rounds=1)

    def test_publishes_new_versions(self, tmp_path):
        registry = Registry(tmp_path / "store")
        meta = {"capabilities": {"t": 0.2}, "cost_per_call": 1, "latency_ms": 1,
                "designer_account": "d"}
        registry.put_model("low", b"l", meta)
        registry.put_model("high", b"h", {**meta, "capabilities": {"t": 0.8}})
        published = co_train_models(registry, ["low", "high"], rounds=1, eta=0.1)
        assert published["low"].version == 2
        assert published["low"].capabilities["t"] == pytest.approx(0.26)
        assert published["low"].changelog == "co-train r=1"
        assert registry.get_manifest("high").version == 2
