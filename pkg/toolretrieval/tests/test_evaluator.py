import math
from types import SimpleNamespace

import numpy as np
from django.test import SimpleTestCase, TestCase

from toolretrieval.evaluator import (
    MetricsReport,
    QueryMetrics,
    dcg,
    evaluate_system,
    ndcg,
    recall,
    record_run,
    sample_queries,
    summary_table,
    write_report,
)
from toolretrieval.exceptions import EvaluationError, PipelineError
from toolretrieval.models import EvaluationRun
from toolretrieval.utils import read_jsonl

from .support import TempDirMixin, make_query


def brute_force_ndcg(ranking, rels):
    gains = [2 ** rels.get(tool_id, 0) - 1 for tool_id in ranking]
    actual = sum(gain / math.log2(i + 2) for i, gain in enumerate(gains))
    ideal_gains = sorted((2 ** g - 1 for g in rels.values()), reverse=True)
    ideal = sum(gain / math.log2(i + 2) for i, gain in enumerate(ideal_gains))
    return actual / ideal if ideal else 0.0


class ListSystem:
    """Returns a fixed ranking per query id; ids in ``broken`` fail."""

    def __init__(self, rankings, broken=()):
        self.rankings = rankings
        self.broken = set(broken)

    def run(self, record):
        if record.id in self.broken:
            raise PipelineError("no answer")
        ranking = list(self.rankings.get(record.id, []))
        return SimpleNamespace(tools=frozenset(ranking), ranking=lambda: ranking)


class RecallTests(SimpleTestCase):
    def test_examples(self):
        self.assertEqual(recall({"A", "B", "C"}, {"A", "D"}), 0.5)
        self.assertEqual(recall(set(), {"A"}), 0.0)
        self.assertEqual(recall({"A", "B"}, {"A", "B"}), 1.0)

    def test_empty_gold(self):
        with self.assertRaises(EvaluationError):
            recall({"A"}, set())


class NdcgTests(SimpleTestCase):
    def test_hand_computed_example(self):
        rels = {"A": 0, "B": 2, "C": 1}
        self.assertAlmostEqual(dcg([0, 2, 1]), 2.392789, places=6)
        self.assertAlmostEqual(dcg([2, 1, 0]), 3.630930, places=6)
        self.assertAlmostEqual(ndcg(["A", "B", "C"], rels), dcg([0, 2, 1]) / dcg([2, 1, 0]), places=12)
        self.assertAlmostEqual(ndcg(["A", "B", "C"], rels), 0.659002, places=6)

    def test_perfect_and_empty(self):
        self.assertEqual(ndcg(["B", "C"], {"B": 2, "C": 1}), 1.0)
        self.assertEqual(ndcg(["A"], {"A": 0}), 0.0)
        self.assertEqual(ndcg([], {"A": 1}), 0.0)

    def test_bad_grade(self):
        with self.assertRaises(EvaluationError):
            ndcg(["A"], {"A": 3})

    def test_matches_brute_force(self):
        rng = np.random.default_rng(31)
        ids = [f"t{n}" for n in range(12)]
        for _ in range(200):
            rels = {tool_id: int(rng.integers(0, 3)) for tool_id in rng.choice(ids, int(rng.integers(1, 6)), replace=False)}
            ranking = [str(tool_id) for tool_id in rng.permutation(ids)[:int(rng.integers(0, 10))]]
            rels = {str(k): v for k, v in rels.items()}
            value = ndcg(ranking, rels)
            self.assertAlmostEqual(value, brute_force_ndcg(ranking, rels), places=12)
            self.assertTrue(0.0 <= value <= 1.0 + 1e-12)


class EvaluateSystemTests(TempDirMixin, SimpleTestCase):
    def setUp(self):
        self.records = [
            make_query("q1", "first", ["A", "B"], graded={"A": 2, "B": 1}),
            make_query("q2", "second", ["C"]),
            make_query("q3", "third", ["A", "C"]),
        ]

    def test_oracle_system_scores_one(self):
        system = ListSystem({"q1": ["A", "B"], "q2": ["C"], "q3": ["C", "A"]})
        report = evaluate_system(self.records, system, 500, 11)
        self.assertEqual(report.query_count, 3)
        self.assertEqual(report.macro_recall, 1.0)
        self.assertAlmostEqual(report.macro_ndcg, 1.0, places=12)

    def test_empty_system_scores_zero(self):
        report = evaluate_system(self.records, ListSystem({}), 500, 11)
        self.assertEqual(report.macro_recall, 0.0)
        self.assertEqual(report.macro_ndcg, 0.0)

    def test_failed_queries_are_reported_not_scored(self):
        report = evaluate_system(self.records, ListSystem({"q1": ["A"], "q3": ["A"]}, broken={"q2"}), 500, 11)
        self.assertEqual([m.query_id for m in report.per_query], ["q1", "q3"])
        self.assertEqual(report.failed, (("q2", "pipeline: no answer"),))
        self.assertEqual(report.macro_recall, 0.5)

    def test_empty_split(self):
        with self.assertRaises(EvaluationError):
            evaluate_system([], ListSystem({}), 10, 1)

    def test_sample_size_and_seed(self):
        records = [make_query(f"q{n:02d}", "text", ["A"]) for n in range(40)]
        sample = sample_queries(records, 10, 5)
        self.assertEqual(len(sample), 10)
        self.assertEqual([r.id for r in sample], sorted(r.id for r in sample))
        self.assertEqual(sample, sample_queries(list(reversed(records)), 10, 5))
        self.assertEqual(len(sample_queries(records, 100, 5)), 40)

    def test_macro_of_constant_metrics(self):
        per_query = tuple(QueryMetrics(f"q{n}", 0.25, 0.5, (), ("A",)) for n in range(4))
        report = MetricsReport(per_query)
        self.assertEqual(report.macro_recall, 0.25)
        self.assertEqual(report.macro_ndcg, 0.5)

    def test_report_file_and_table(self):
        report = evaluate_system(self.records, ListSystem({"q1": ["A"]}), 500, 11, config={"method": "pnr"})
        path = self.make_tempdir() / "report.jsonl"
        write_report(path, report)
        rows = [record for _, record in read_jsonl(path)]
        self.assertEqual(rows[0]["kind"], "summary")
        self.assertEqual(rows[0]["config"], {"method": "pnr"})
        self.assertEqual(len(rows), 4)

        table = summary_table(report, title="pnr on test")
        self.assertTrue(table.startswith("pnr on test"))
        self.assertIn("recall", table)
        self.assertIn(f"{100 * report.macro_recall:.2f}", table)


class RecordRunTests(TestCase):
    def test_run_row(self):
        report = MetricsReport((QueryMetrics("q1", 1.0, 0.5, ("A",), ("A",)),), (("q2", "boom"),))
        row = record_run(report, "pnr", "test", 500, 11, 3, "out/eval_pnr_test.jsonl")
        self.assertEqual(EvaluationRun.objects.count(), 1)
        row.refresh_from_db()
        self.assertEqual(row.query_count, 1)
        self.assertEqual(row.failed_count, 1)
        self.assertEqual(row.catalog_version, 3)
        self.assertEqual(row.macro_ndcg, 0.5)
