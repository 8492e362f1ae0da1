import numpy as np
from django.test import SimpleTestCase

from toolretrieval.exceptions import PlanningError
from toolretrieval.planner import (
    PlanState,
    SubQuery,
    format_history,
    goal_satisfied,
    parse_verdict,
    plan,
    plan_step,
    planner_variables,
    propose_hypotheses,
    select_subquery,
    select_subquery_traced,
)

from .support import FunctionProvider

PHRASES = [
    "find romantic music", "search love songs", "find books about relationships",
    "weather in paris", "convert euros to dollars", "latest football scores",
    "translate text to french", "stock price of a company", "recipe for pancakes",
    "nearby coffee shops", "movie showtimes tonight", "song lyrics search",
]


def scripted_planner(aspects, judge=None):
    """Proposes the first aspect not yet planned; says Yes once every aspect is in the history."""

    def respond(template_id, variables):
        if variables["mode"] == "propose":
            remaining = [aspect for aspect in aspects if aspect not in variables["history"]]
            return "\n".join(remaining[:1] or aspects[:1])
        if judge is not None:
            return judge
        covered = all(aspect in variables["history"] for aspect in aspects)
        return "Yes, every part is covered." if covered else "No, something is missing."

    return FunctionProvider(respond)


class ProposeHypothesesTests(SimpleTestCase):
    def test_lines_become_candidates(self):
        provider = FunctionProvider(lambda t, v: "get weather\n\n  find lyrics  \nconvert money\nbook a taxi\n")
        hypotheses = propose_hypotheses(PlanState("q1", "do things"), provider)
        self.assertEqual(hypotheses, ["get weather", "find lyrics", "convert money", "book a taxi"])

    def test_extra_lines_are_cut_to_the_requested_count(self):
        provider = FunctionProvider(lambda t, v: "a1\na2\na3\na4\na5\na6")
        hypotheses = propose_hypotheses(PlanState("q1", "do things", num_hypotheses=2), provider)
        self.assertEqual(hypotheses, ["a1", "a2"])

    def test_empty_response(self):
        provider = FunctionProvider(lambda t, v: "\n  \n")
        with self.assertRaisesMessage(PlanningError, "no hypotheses"):
            propose_hypotheses(PlanState("q1", "do things"), provider)

    def test_prompt_variables(self):
        state = PlanState("q1", "do things", history=(SubQuery("get weather", 1, "q1"),))
        variables = planner_variables(state, "propose")
        self.assertEqual(variables["history"], "1. get weather")
        self.assertEqual(variables["num_hypotheses"], "4")
        self.assertEqual(variables["retrieved"], "")
        self.assertEqual(format_history(()), "(none)")


class SelectSubqueryTests(SimpleTestCase):
    def test_candidate_far_from_history_is_kept(self):
        prev = ["find romantic music"]
        cand = ["search love songs", "find books about relationships"]
        for seed in range(10):
            self.assertEqual(select_subquery(prev, cand, seed), "search love songs")

    def test_choice_avoids_planned_clusters(self):
        rng = np.random.default_rng(99)
        for _ in range(100):
            picked = [PHRASES[i] for i in rng.permutation(len(PHRASES))[:int(rng.integers(2, 9))]]
            split = int(rng.integers(1, len(picked)))
            prev, cand = picked[:split], picked[split:]
            seed = int(rng.integers(1000))
            trace = select_subquery_traced(prev, cand, seed)
            self.assertIn(trace.choice, cand)
            self.assertEqual(len(trace.labels), len(prev) + len(cand))
            if trace.branch == "filtered":
                self.assertIn(trace.choice, trace.survivors)
                self.assertNotIn(trace.labels[len(prev) + cand.index(trace.choice)], trace.prev_labels)
            else:
                self.assertEqual(trace.branch, "filtered_empty")

    def test_empty_history_picks_any_candidate(self):
        trace = select_subquery_traced([], ["a b", "c d"], 3)
        self.assertEqual(trace.branch, "empty_prev")
        self.assertIn(trace.choice, ["a b", "c d"])

    def test_all_candidates_filtered_falls_back(self):
        trace = select_subquery_traced(["play music"], ["play music"], 0)
        self.assertEqual(trace.branch, "filtered_empty")
        self.assertEqual(trace.choice, "play music")

    def test_no_shared_vocabulary(self):
        trace = select_subquery_traced(["!!!"], ["???", "..."], 0)
        self.assertEqual(trace.branch, "no_vocabulary")

    def test_no_candidates(self):
        with self.assertRaises(PlanningError):
            select_subquery(["play music"], [], 0)

    def test_same_seed_same_choice(self):
        prev = ["weather in paris", "convert euros to dollars"]
        cand = ["latest football scores", "translate text to french", "recipe for pancakes"]
        choices = {select_subquery(prev, cand, 21) for _ in range(5)}
        self.assertEqual(len(choices), 1)


class VerdictTests(SimpleTestCase):
    def test_yes_and_no(self):
        self.assertTrue(parse_verdict("Yes, all aspects covered."))
        self.assertTrue(parse_verdict("  yes"))
        self.assertFalse(parse_verdict("No"))
        self.assertFalse(parse_verdict("No, the weather part is open."))

    def test_anything_else_is_no_with_a_warning(self):
        with self.assertLogs("toolretrieval.planner", "WARNING"):
            self.assertFalse(parse_verdict("maybe"))
        with self.assertLogs("toolretrieval.planner", "WARNING"):
            self.assertFalse(parse_verdict(""))

    def test_stop_check_needs_history(self):
        with self.assertRaises(PlanningError):
            goal_satisfied(PlanState("q1", "do things"), scripted_planner(["x"]))


class PlanStepTests(SimpleTestCase):
    def test_yes_after_first_step(self):
        state, sub_query = plan_step(PlanState("q1", "get weather"), scripted_planner(["get weather"]))
        self.assertEqual(sub_query, SubQuery("get weather", 1, "q1"))
        self.assertTrue(state.done)
        self.assertFalse(state.exhausted)

    def test_exhaustion_at_max_steps(self):
        provider = scripted_planner(["get weather", "find lyrics"], judge="No")
        state = plan(PlanState("q1", "weather and lyrics", max_steps=2), provider)
        self.assertTrue(state.done)
        self.assertTrue(state.exhausted)
        self.assertEqual(state.step, 2)

    def test_three_step_plan(self):
        aspects = ["get weather forecast", "find song lyrics", "convert currency rates"]
        provider = scripted_planner(aspects)
        state = plan(PlanState("q7", "weather, lyrics and currency"), provider)
        self.assertEqual([sub.text for sub in state.history], aspects)
        self.assertEqual([sub.step_index for sub in state.history], [1, 2, 3])
        self.assertFalse(state.exhausted)
        modes = [variables["mode"] for _, variables in provider.calls]
        self.assertEqual(modes, ["propose", "judge"] * 3)

    def test_finished_plan_refuses_more_steps(self):
        state, _ = plan_step(PlanState("q1", "get weather"), scripted_planner(["get weather"]))
        with self.assertRaises(PlanningError):
            plan_step(state, scripted_planner(["get weather"]))
