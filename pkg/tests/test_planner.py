from __future__ import annotations

import itertools
import random

import pytest

from imo.errors import (
    EmptyPool,
    InfeasiblePlan,
    MismatchedReport,
    NoFeasiblePlan,
    ParseError,
    TooLarge,
    UnknownModel,
    UnrecognizedIntent,
)
from imo.planner import (
    OptimalPathStore,
    PlannerWeights,
    brute_force_plan,
    evaluate_plan,
    interpret_request,
    parse_lexicon,
    plan,
    refine_plan,
)
from imo.runtime import execute_plan
from imo.workflow import Subtask, TaskSpec

from conftest import make_manifest

WEIGHTS = PlannerWeights()


class TestEvaluate:
    def test_worked_fixture(self, chain_task, two_model_pool):
        # hand-evaluated: Q=(0.9+0.8)/2, C=10+10, L=100+100,
        # U = 0.85 - 0.25*(20/40) - 0.25*(200/400) = 0.600
        breakdown = evaluate_plan({"s1": "a", "s2": "b"}, chain_task,
                                  two_model_pool, WEIGHTS)
        assert breakdown.quality == pytest.approx(0.85)
        assert breakdown.cost_ucr == 20
        assert breakdown.latency_ms == 200
        assert breakdown.utility == pytest.approx(0.600)
        assert breakdown.feasible

    def test_all_four_assignments_cross_check(self, chain_task, two_model_pool):
        # oracle enumeration of the 2x2 instance, worked by hand
        expected = {
            ("a", "a"): 0.300,
            ("a", "b"): 0.600,
            ("b", "a"): 0.000,
            ("b", "b"): 0.300,
        }
        for (m1, m2), utility in expected.items():
            got = evaluate_plan({"s1": m1, "s2": m2}, chain_task, two_model_pool, WEIGHTS)
            assert got.utility == pytest.approx(utility, abs=1e-12)

    def test_unset_budget_drops_cost_term(self, two_model_pool):
        task = TaskSpec.create(
            {"s1": Subtask(frozenset(["translate"]), 0.5, False),
             "s2": Subtask(frozenset(["summarize"]), 0.5, False)},
            {("s1", "s2")}, budget_ucr=None, deadline_ms=400)
        got = evaluate_plan({"s1": "a", "s2": "b"}, task, two_model_pool, WEIGHTS)
        assert got.utility == pytest.approx(0.725)
        assert got.feasible

    def test_absent_tag_scores_zero(self, chain_task, two_model_pool):
        pool = dict(two_model_pool)
        pool["c"] = make_manifest("c", {"translate": 0.9})  # no summarize tag
        got = evaluate_plan({"s1": "a", "s2": "c"}, chain_task, pool, WEIGHTS)
        assert got.quality == pytest.approx(0.45)

    def test_unknown_model(self, chain_task, two_model_pool):
        with pytest.raises(UnknownModel):
            evaluate_plan({"s1": "a", "s2": "ghost"}, chain_task,
                          two_model_pool, WEIGHTS)

    def test_infeasible_flag(self, two_model_pool):
        task = TaskSpec.create(
            {"s1": Subtask(frozenset(["translate"]), 0.5, False)},
            set(), budget_ucr=5, deadline_ms=400)
        got = evaluate_plan({"s1": "a"}, task, two_model_pool, WEIGHTS)
        assert not got.feasible


class TestBruteForce:
    def test_picks_ab_on_fixture(self, chain_task, two_model_pool):
        best = brute_force_plan(chain_task, two_model_pool, WEIGHTS)
        assert best.assignment == {"s1": ("a", 1), "s2": ("b", 1)}
        assert best.utility.utility == pytest.approx(0.600)

    def test_single_model_single_subtask(self):
        task = TaskSpec.create({"s1": Subtask(frozenset(["t"]), 0.5, False)}, set())
        pool = {"only": make_manifest("only", {"t": 0.7})}
        best = brute_force_plan(task, pool, WEIGHTS)
        assert best.assignment == {"s1": ("only", 1)}

    def test_too_large(self):
        subtasks = {f"s{i}": Subtask(frozenset(["t"]), 0.5, False) for i in range(10)}
        task = TaskSpec.create(subtasks, set())
        pool = {f"m{i}": make_manifest(f"m{i}", {"t": 0.5}) for i in range(10)}
        with pytest.raises(TooLarge):
            brute_force_plan(task, pool, WEIGHTS)

    def test_tie_breaks_lexicographic(self):
        task = TaskSpec.create({"s1": Subtask(frozenset(["t"]), 0.5, False)}, set())
        pool = {"bb": make_manifest("bb", {"t": 0.5}),
                "aa": make_manifest("aa", {"t": 0.5})}
        best = brute_force_plan(task, pool, WEIGHTS)
        assert best.assignment["s1"] == ("aa", 1)

    def test_infeasible_still_returned_flagged(self):
        task = TaskSpec.create({"s1": Subtask(frozenset(["t"]), 0.5, False)},
                               set(), budget_ucr=1)
        pool = {"m": make_manifest("m", {"t": 0.9}, cost=10)}
        best = brute_force_plan(task, pool, WEIGHTS)
        assert not best.utility.feasible


def random_instance(rng):
    n_subtasks = rng.randint(1, 4)
    n_models = rng.randint(1, 3)
    tags = ["t1", "t2", "t3"]
    subtasks = {}
    for i in range(n_subtasks):
        required = rng.sample(tags, rng.randint(1, 2))
        subtasks[f"s{i}"] = Subtask(frozenset(required), rng.random(), rng.random() < 0.2)
    deps = set()
    ids = sorted(subtasks)
    for i, j in itertools.combinations(range(n_subtasks), 2):
        if rng.random() < 0.4:
            deps.add((ids[i], ids[j]))
    pool = {}
    for i in range(n_models):
        caps = {tag: round(rng.uniform(0.3, 1.0), 4) for tag in tags}
        pool[f"m{i}"] = make_manifest(f"m{i}", caps, cost=rng.randint(1, 20),
                                      latency=rng.randint(10, 300))
    max_cost = n_subtasks * 20
    max_latency = n_subtasks * 300
    budget = None if rng.random() < 0.3 else rng.randint(int(max_cost * 0.8), max_cost * 3)
    deadline = None if rng.random() < 0.3 else rng.randint(int(max_latency * 0.8), max_latency * 3)
    task = TaskSpec.create(subtasks, deps, budget_ucr=budget, deadline_ms=deadline)
    return task, pool


class TestBeamSearch:
    def test_exhaustive_beam_matches_oracle_on_fixture(self, chain_task, two_model_pool):
        result = plan(chain_task, two_model_pool, PlannerWeights(beam_width=8))
        assert result.utility.utility == pytest.approx(0.600)
        assert result.assignment == {"s1": ("a", 1), "s2": ("b", 1)}

    def test_depth_one_is_exhaustive(self, two_model_pool):
        task = TaskSpec.create({"s1": Subtask(frozenset(["summarize"]), 0.5, False)},
                               set(), budget_ucr=40, deadline_ms=400)
        result = plan(task, two_model_pool, PlannerWeights(beam_width=8))
        assert result.assignment["s1"] == ("b", 1)

    def test_empty_pool(self, chain_task):
        with pytest.raises(EmptyPool):
            plan(chain_task, {}, WEIGHTS)

    def test_empty_task(self, two_model_pool):
        task = TaskSpec.create({}, set())
        with pytest.raises(NoFeasiblePlan):
            plan(task, two_model_pool, WEIGHTS)

    def test_rationale_present_and_shaped(self, chain_task, two_model_pool):
        result = plan(chain_task, two_model_pool, WEIGHTS)
        assert result.rationale["s1"] == "chose a match 0.9000 cost 10"

    def test_oracle_equivalence_seeded_suite(self):
        rng = random.Random(1729)
        for _ in range(200):
            task, pool = random_instance(rng)
            exhaustive = len(pool) ** len(task.subtasks)
            beamed = plan(task, pool, PlannerWeights(beam_width=exhaustive))
            oracle = brute_force_plan(task, pool, WEIGHTS)
            assert beamed.utility.utility == oracle.utility.utility
            assert beamed.assignment == oracle.assignment

    def test_default_beam_quality_bound(self):
        rng = random.Random(1729)
        for _ in range(200):
            task, pool = random_instance(rng)
            beamed = plan(task, pool, PlannerWeights(beam_width=8))
            oracle = brute_force_plan(task, pool, WEIGHTS)
            assert oracle.utility.utility > 0
            assert beamed.utility.utility >= 0.95 * oracle.utility.utility

    def test_argmax_invariant_under_weight_scaling(self, chain_task, two_model_pool):
        base = plan(chain_task, two_model_pool, WEIGHTS)
        for scale in (0.1, 3.0, 1000.0):
            scaled = PlannerWeights(w_q=1.0 * scale, w_c=0.25 * scale, w_l=0.25 * scale)
            assert plan(chain_task, two_model_pool, scaled).assignment == base.assignment

    def test_candidate_restriction_pins_model(self, chain_task, two_model_pool):
        result = plan(chain_task, two_model_pool, WEIGHTS,
                      candidates={"s1": ["b"]})
        assert result.assignment["s1"] == ("b", 1)

    def test_determinism(self, chain_task, two_model_pool):
        a = plan(chain_task, two_model_pool, WEIGHTS)
        b = plan(chain_task, two_model_pool, WEIGHTS)
        assert a.to_doc() == b.to_doc()


class TestRecords:
    def test_strict_improvement_sequence(self, chain_task, two_model_pool):
        store = OptimalPathStore()
        events = []
        for utility_target in (0.5, 0.6, 0.55):
            pool = {"m": make_manifest("m", {"translate": utility_target,
                                             "summarize": utility_target})}
            task = TaskSpec.create(
                {"s1": Subtask(frozenset(["translate"]), 0.1, False)}, set())
            p = plan(task, pool, WEIGHTS)
            assert p.utility.utility == pytest.approx(utility_target)
            events.append(store.record_if_best(p, "alice", now=1))
        assert events[0] is not None and events[0].old_utility is None
        assert events[1] is not None and events[1].old_utility == pytest.approx(0.5)
        assert events[2] is None
        assert store.current(task.task_hash).best_utility == pytest.approx(0.6)

    def test_epsilon_guard(self):
        store = OptimalPathStore()
        task = TaskSpec.create({"s1": Subtask(frozenset(["t"]), 0.1, False)}, set())
        pool = {"m": make_manifest("m", {"t": 0.6})}
        p = plan(task, pool, WEIGHTS)
        assert store.record_if_best(p, "alice") is not None
        assert store.record_if_best(p, "bob") is None  # identical utility

    def test_infeasible_rejected(self):
        store = OptimalPathStore()
        task = TaskSpec.create({"s1": Subtask(frozenset(["t"]), 0.5, False)},
                               set(), budget_ucr=1)
        pool = {"m": make_manifest("m", {"t": 0.9}, cost=10)}
        p = plan(task, pool, WEIGHTS)
        with pytest.raises(InfeasiblePlan):
            store.record_if_best(p, "alice")

    def test_history_monotone(self):
        store = OptimalPathStore()
        task = TaskSpec.create({"s1": Subtask(frozenset(["t"]), 0.1, False)}, set())
        rng = random.Random(7)
        for _ in range(50):
            pool = {"m": make_manifest("m", {"t": round(rng.random(), 4)})}
            p = plan(task, pool, WEIGHTS)
            store.record_if_best(p, "alice")
        history = [r.best_utility for r in store.history(task.task_hash)]
        assert all(b - a > store.epsilon for a, b in zip(history, history[1:]))


LEXICON = {"translate": "translate", "summarize": "summarize"}


class TestInterpreter:
    def test_then_chains(self):
        task = interpret_request("translate then summarize", LEXICON)
        assert set(task.subtasks) == {"s1", "s2"}
        assert task.deps == frozenset({("s1", "s2")})
        assert task.subtasks["s1"].required_tags == frozenset(["translate"])

    def test_single_keyword(self):
        task = interpret_request("summarize", LEXICON)
        assert set(task.subtasks) == {"s1"}
        assert task.deps == frozenset()

    def test_no_match(self):
        with pytest.raises(UnrecognizedIntent):
            interpret_request("play chess", LEXICON)

    def test_connective_free_matches_are_independent(self):
        task = interpret_request("translate summarize", LEXICON)
        assert len(task.subtasks) == 2
        assert task.deps == frozenset()

    def test_semicolon_connective(self):
        task = interpret_request("translate; summarize", LEXICON)
        assert task.deps == frozenset({("s1", "s2")})

    def test_deterministic(self):
        a = interpret_request("translate then summarize then translate", LEXICON)
        b = interpret_request("translate then summarize then translate", LEXICON)
        assert a.to_doc() == b.to_doc()
        assert a.deps == frozenset({("s1", "s2"), ("s2", "s3")})

    def test_parse_lexicon(self):
        text = "# comment\ntranslate = translate\nsum = summarize  # trailing\n\n"
        assert parse_lexicon(text) == {"translate": "translate", "sum": "summarize"}

    def test_parse_lexicon_rejects_junk(self):
        with pytest.raises(ParseError):
            parse_lexicon("no equals sign here")


class TestRefine:
    def test_failed_subtask_gets_other_model(self, chain_task, two_model_pool):
        # difficulty 0.95 on s1: model a (0.9) fails naturally
        task = TaskSpec.create(
            {"s1": Subtask(frozenset(["translate"]), 0.95, False),
             "s2": Subtask(frozenset(["summarize"]), 0.5, False)},
            {("s1", "s2")}, budget_ucr=40, deadline_ms=400)
        first = plan(task, two_model_pool, WEIGHTS)
        assert first.assignment["s1"] == ("a", 1)
        report = execute_plan(first, task, b"input", two_model_pool)
        assert not report.results["s1"].passed
        refined = refine_plan(first, report, task, two_model_pool, WEIGHTS)
        assert refined.assignment["s1"] == ("b", 1)

    def test_all_models_failed_restores_candidates(self):
        task = TaskSpec.create({"s1": Subtask(frozenset(["t"]), 0.99, False)}, set())
        pool = {"only": make_manifest("only", {"t": 0.5})}
        first = plan(task, pool, WEIGHTS)
        report = execute_plan(first, task, b"", pool)
        refined = refine_plan(first, report, task, pool, WEIGHTS)
        assert refined.assignment["s1"] == ("only", 1)

    def test_mismatched_report(self, chain_task, two_model_pool):
        other_task = TaskSpec.create(
            {"s1": Subtask(frozenset(["translate"]), 0.5, False)}, set())
        first = plan(chain_task, two_model_pool, WEIGHTS)
        report = execute_plan(first, chain_task, b"", two_model_pool)
        with pytest.raises(MismatchedReport):
            refine_plan(first, report, other_task, two_model_pool, WEIGHTS)

    def test_failures_append_memories(self, two_model_pool):
        from imo.memory import MemoryStream

        task = TaskSpec.create({"s1": Subtask(frozenset(["translate"]), 0.95, False)},
                               set())
        first = plan(task, two_model_pool, WEIGHTS)
        report = execute_plan(first, task, b"", two_model_pool)
        stream = MemoryStream()
        refine_plan(first, report, task, two_model_pool, WEIGHTS,
                    memories=stream, now=5)
        assert len(stream) == 1
        assert stream.records[0].text == "subtask s1 failed with a"
        assert stream.records[0].importance == 6
