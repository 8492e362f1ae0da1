import json
from io import StringIO
from unittest import mock

from django.core.management import CommandError, call_command
from django.db import OperationalError
from django.test import TestCase

from toolretrieval.catalog import apply_description, load_catalog, write_cache
from toolretrieval.dense_retriever import TestEmbedder
from toolretrieval.models import EvaluationRun, Tool as ToolRow
from toolretrieval.utils import read_jsonl

from .support import TempDirMixin, copy_suite, fixture_suite


class CommandTestCase(TempDirMixin, TestCase):
    variant = "standard"

    def setUp(self):
        self.root = copy_suite(fixture_suite(self.variant), self.make_tempdir())
        self.config = str(self.root / "fixture.env")
        self.out = self.root / "out"

    def call(self, name, **options):
        stdout = StringIO()
        call_command(name, config=self.config, stdout=stdout, **options)
        return stdout.getvalue()

    def expected(self, name):
        return json.loads((self.root / "expected" / name).read_text(encoding="utf-8"))

    def report_summary(self, name):
        rows = [record for _, record in read_jsonl(self.out / name)]
        return rows[0]

    def run_twice(self, name, files, between=None, **options):
        """Run a command twice and compare the named output files byte for byte."""
        self.call(name, **options)
        first = {path: (self.out / path).read_bytes() for path in files}
        if between:
            between()
        self.call(name, **options)
        for path in files:
            self.assertEqual((self.out / path).read_bytes(), first[path], f"{name}: {path}")


class IngestAndIndexTests(CommandTestCase):
    def test_ingest_writes_normalized_files_and_mirror(self):
        output = self.call("ingest")
        self.assertIn("tools: 60 (catalog version 0)", output)
        self.assertIn("queries: 30", output)
        self.assertTrue((self.out / "tools.jsonl").is_file())
        self.assertTrue((self.out / "queries.jsonl").is_file())
        splits = json.loads((self.out / "splits.json").read_text(encoding="utf-8"))
        self.assertEqual(splits, self.expected("splits.json"))
        self.assertEqual(ToolRow.objects.count(), 60)

    def test_index_is_byte_identical_across_runs(self):
        output = self.call("index")
        self.assertIn("indexed 60 tools, catalog version 0, provider hashing-2048", output)
        first = (self.out / "index.npz").read_bytes()
        self.call("index")
        self.assertEqual((self.out / "index.npz").read_bytes(), first)

    def test_missing_settings_fail_with_a_code(self):
        stdout = StringIO()
        with self.assertRaisesMessage(CommandError, "config: missing required setting: catalog_path"):
            call_command("ingest", stdout=stdout)


class PlanAndRetrieveCommandTests(CommandTestCase):
    def test_plan_lists_one_sub_query_per_aspect(self):
        trace = self.out / "plan_trace.jsonl"
        output = self.call("plan", query_id="Q1", trace=str(trace))
        gold = self.expected("pnr_tools.json")["Q1"]
        lines = output.splitlines()
        self.assertEqual(lines[0], f"query Q1: {len(gold)} sub-queries")
        self.assertEqual(len(lines), len(gold) + 1)
        kinds = [record["kind"] for _, record in read_jsonl(trace)]
        self.assertEqual(kinds.count("plan_step"), len(gold))
        self.assertEqual(kinds[-1], "result")

    def test_retrieve_prints_the_expected_tools(self):
        self.call("index")
        expected = self.expected("pnr_tools.json")
        for query_id in ("Q1", "Q2", "Q17"):
            output = self.call("retrieve", query_id=query_id)
            tools = [line for line in output.splitlines() if line and not line.startswith("#")]
            self.assertEqual(tools, expected[query_id])

    def test_retrieve_trace(self):
        self.call("index")
        trace = self.out / "trace.jsonl"
        self.call("retrieve", query_id="Q3", trace=str(trace))
        rows = [record for _, record in read_jsonl(trace)]
        self.assertEqual(rows[-1]["kind"], "result")
        self.assertEqual(rows[-1]["tools"], self.expected("pnr_tools.json")["Q3"])
        self.assertTrue(any(row["kind"] == "step" for row in rows))

    def test_retrieve_without_index(self):
        with self.assertRaisesMessage(CommandError, "stale_index:"):
            self.call("retrieve", query_id="Q1")

    def test_stale_index_is_refused(self):
        self.call("index")
        catalog = load_catalog(self.root / "tools.jsonl")
        edited = apply_description(catalog, "T01", "a freshly written description", 1, 1.0)
        write_cache(self.out / "description_cache.json", edited)
        with self.assertRaisesMessage(CommandError, "stale_index:"):
            self.call("retrieve", query_id="Q1")
        self.call("retrieve", query_id="Q1", no_cache=True)

    def test_unknown_query(self):
        with self.assertRaisesMessage(CommandError, "dataset: unknown query id 'Q99'"):
            self.call("plan", query_id="Q99")


class EvalCommandTests(CommandTestCase):
    def test_pnr_recovers_every_gold_tool(self):
        output = self.call("eval", method="pnr", split="test")
        self.assertIn("pnr on test", output)
        summary = self.report_summary("eval_pnr_test.jsonl")
        self.assertEqual(summary["macro_recall"], 1.0)
        self.assertEqual(summary["failed_count"], 0)
        self.assertEqual(summary["config"]["method"], "pnr")
        self.assertNotIn("catalog_path", summary["config"])
        self.assertEqual(EvaluationRun.objects.get().method, "pnr")

    def test_reports_are_deterministic(self):
        self.call("eval", method="dense", split="dev")
        first = (self.out / "eval_dense_dev.jsonl").read_bytes()
        self.call("eval", method="dense", split="dev")
        self.assertEqual((self.out / "eval_dense_dev.jsonl").read_bytes(), first)
        self.assertLess(self.report_summary("eval_dense_dev.jsonl")["macro_recall"], 1.0)

    def test_bm25_and_sampling(self):
        self.call("eval", method="bm25", split="train", sample=5, seed=3)
        summary = self.report_summary("eval_bm25_train.jsonl")
        self.assertEqual(summary["query_count"], 5)
        self.assertEqual(summary["config"]["sample_size"], 5)


class OptimizeCommandTests(CommandTestCase):
    variant = "keyword_poor"

    def test_optimize_then_compare_with_and_without_cache(self):
        before = load_catalog(self.root / "tools.jsonl")
        output = self.call("optimize")
        self.assertIn("rounds:", output)
        self.assertTrue((self.out / "description_cache.json").is_file())
        rows = [record for _, record in read_jsonl(self.out / "eg_report.jsonl")]
        self.assertEqual(rows[-1]["kind"], "summary")
        self.assertTrue(rows[-1]["accepted"])
        self.assertTrue(ToolRow.objects.filter(tool_id__in=rows[-1]["accepted"]).exists())
        # the tools file itself is never rewritten
        self.assertEqual(load_catalog(self.root / "tools.jsonl").tools, before.tools)

        self.call("eval", method="pnr", split="dev")
        optimized = self.report_summary("eval_pnr_dev.jsonl")
        self.call("eval", method="pnr", split="dev", no_cache=True)
        original = self.report_summary("eval_pnr_dev.jsonl")
        self.assertGreater(optimized["macro_recall"], original["macro_recall"])
        self.assertGreater(optimized["config"]["catalog_version"], 0)
        self.assertFalse(original["config"]["description_cache"])


class TrainAndFixtureCommandTests(CommandTestCase):
    def test_train_writes_a_head(self):
        output = self.call("train", steps=2, learning_rate=0.01)
        self.assertTrue(output.startswith("loss:"))
        self.assertIn("over 2 steps", output)
        self.assertTrue((self.out / "head.npy").is_file())

    def test_make_fixture_reproduces_the_suite(self):
        target = self.make_tempdir() / "again"
        stdout = StringIO()
        call_command("make_fixture", seed=42, out=str(target), stdout=stdout)
        self.assertIn("fixture 'standard' (seed 42)", stdout.getvalue())
        self.assertEqual((target / "SHA256SUMS").read_bytes(), (self.root / "SHA256SUMS").read_bytes())


class ReproducibleOutputTests(CommandTestCase):
    def test_ingest(self):
        self.run_twice("ingest", ["tools.jsonl", "queries.jsonl", "splits.json"])

    def test_plan_trace(self):
        self.run_twice("plan", ["plan.jsonl"], query_id="Q4", trace=str(self.out / "plan.jsonl"))

    def test_retrieve_trace(self):
        self.call("index")
        self.run_twice("retrieve", ["retrieve.jsonl"], query_id="Q5", trace=str(self.out / "retrieve.jsonl"))

    def test_train(self):
        self.run_twice("train", ["head.npy"], steps=3, learning_rate=0.01)


class ReproducibleOptimizeTests(CommandTestCase):
    variant = "keyword_poor"

    def test_optimize(self):
        # a second run would start from the cached descriptions
        self.run_twice("optimize", ["eg_report.jsonl", "description_cache.json"],
                       between=(self.out / "description_cache.json").unlink)


class CommandFailureTests(CommandTestCase):
    def test_database_errors_are_one_line(self):
        missing = OperationalError("no such table: toolretrieval_evaluationrun")
        with mock.patch("toolretrieval.management.commands.eval.record_run", side_effect=missing):
            with self.assertRaisesMessage(CommandError, "database: no such table: toolretrieval_evaluationrun"):
                self.call("eval", method="bm25", split="dev")

    def test_providers_are_closed(self):
        class ClosingEmbedder(TestEmbedder):
            closed = False

            def close(self):
                self.closed = True

        embedder = ClosingEmbedder(2048)
        with mock.patch("toolretrieval.management.commands.index.make_embedder", return_value=embedder):
            self.call("index")
        self.assertTrue(embedder.closed)
