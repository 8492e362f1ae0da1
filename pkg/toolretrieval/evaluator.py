"""Recall, graded NDCG and the evaluation harness."""
import logging
import math
from dataclasses import dataclass, field

from django.db import transaction

from .exceptions import EvaluationError, ToolRetrievalError
from .models import EvaluationRun
from .retrieval_pipeline import run_many
from .utils import seeded_rng, write_jsonl

logger = logging.getLogger(__name__)

GRADES = (0, 1, 2)


def recall(retrieved, gold):
    gold = set(gold)
    if not gold:
        raise EvaluationError("recall is undefined for an empty gold set")
    return len(set(retrieved) & gold) / len(gold)


def dcg(grades):
    return sum((2 ** grade - 1) / math.log2(position + 1) for position, grade in enumerate(grades, start=1))


def ndcg(ranking, rels):
    """Exponential gain ``2^g - 1``, discount ``log2(position + 1)``; 0 when no tool has a positive grade."""
    for tool_id, grade in rels.items():
        if grade not in GRADES:
            raise EvaluationError(f"grade {grade!r} for tool '{tool_id}' is outside {{0, 1, 2}}")
    ideal = dcg(sorted(rels.values(), reverse=True))
    if ideal == 0:
        return 0.0
    return dcg([rels.get(tool_id, 0) for tool_id in ranking]) / ideal


@dataclass(frozen=True)
class QueryMetrics:
    query_id: str
    recall: float
    ndcg: float
    retrieved: tuple
    gold: tuple

    def to_record(self):
        return {
            "kind": "query",
            "query_id": self.query_id,
            "recall": self.recall,
            "ndcg": self.ndcg,
            "retrieved": list(self.retrieved),
            "gold": list(self.gold),
        }


@dataclass(frozen=True)
class MetricsReport:
    per_query: tuple
    failed: tuple = ()          # (query id, error message)
    config: dict = field(default_factory=dict)

    @property
    def query_count(self):
        return len(self.per_query)

    @property
    def macro_recall(self):
        return sum(m.recall for m in self.per_query) / len(self.per_query) if self.per_query else 0.0

    @property
    def macro_ndcg(self):
        return sum(m.ndcg for m in self.per_query) / len(self.per_query) if self.per_query else 0.0

    def summary_record(self):
        return {
            "kind": "summary",
            "query_count": self.query_count,
            "failed_count": len(self.failed),
            "macro_recall": self.macro_recall,
            "macro_ndcg": self.macro_ndcg,
            "config": self.config,
        }

    def records(self):
        rows = [self.summary_record()]
        rows.extend(metrics.to_record() for metrics in self.per_query)
        rows.extend({"kind": "failed", "query_id": query_id, "error": error} for query_id, error in self.failed)
        return rows


def sample_queries(records, sample_size, seed):
    """Seeded sample of ``min(sample_size, len(records))`` queries, returned in id order."""
    records = sorted(records, key=lambda record: record.id)
    if sample_size >= len(records):
        return records
    picks = seeded_rng(seed).choice(len(records), size=sample_size, replace=False)
    return [records[int(i)] for i in sorted(picks)]


def evaluate_system(records, system, sample_size, seed, workers=1, config=None):
    """``system`` is anything with ``run(record)`` returning an object with ``tools`` and ``ranking()``."""
    if not records:
        raise EvaluationError("cannot evaluate an empty split")
    sample = sample_queries(records, sample_size, seed)
    per_query = []
    failed = []
    for record, outcome in run_many(system, sample, workers):
        if isinstance(outcome, ToolRetrievalError):
            failed.append((record.id, f"{outcome.code}: {outcome}"))
            continue
        per_query.append(QueryMetrics(
            query_id=record.id,
            recall=recall(outcome.tools, record.gold),
            ndcg=ndcg(outcome.ranking(), record.grades()),
            retrieved=tuple(outcome.ranking()),
            gold=tuple(sorted(record.gold)),
        ))
    report = MetricsReport(tuple(per_query), tuple(failed), dict(config or {}))
    logger.info("evaluated %d queries (%d failed): recall %.4f ndcg %.4f",
                report.query_count, len(failed), report.macro_recall, report.macro_ndcg)
    return report


def write_report(path, report):
    write_jsonl(path, report.records())


def summary_table(report, title="evaluation"):
    rows = [
        ("queries", str(report.query_count)),
        ("failed", str(len(report.failed))),
        ("recall", f"{100 * report.macro_recall:.2f}"),
        ("ndcg", f"{100 * report.macro_ndcg:.2f}"),
    ]
    width = max(len(label) for label, _ in rows)
    lines = [title, "-" * max(len(title), width + 10)]
    lines.extend(f"{label.ljust(width)}  {value:>8}" for label, value in rows)
    return "\n".join(lines)


def record_run(report, method, split, sample_size, seed, catalog_version, report_path=""):
    with transaction.atomic():
        return EvaluationRun.objects.create(
            method=method,
            split=split,
            sample_size=sample_size,
            seed=seed,
            catalog_version=catalog_version,
            query_count=report.query_count,
            failed_count=len(report.failed),
            macro_recall=report.macro_recall,
            macro_ndcg=report.macro_ndcg,
            report_path=str(report_path),
        )
