"""Edit-and-ground description optimization.

Each round: run plan-and-retrieve over the training queries and count, per
gold tool, how often it was missed; tools missed more often than the failure
threshold get their failure queries stripped of entities, a list of reasons,
and a rewritten description. A rewrite is kept only if it strictly raises the
tool's recall on the dev queries that need it.
"""
import logging
from dataclasses import dataclass, field

from .catalog import apply_description, write_cache
from .dense_retriever import restamp_index
from .exceptions import OptimizationError, ToolRetrievalError
from .llm_gateway import DecodeParams, complete
from .retrieval_pipeline import run_many

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class EgConfig:
    failure_threshold: float = 0.5
    max_rounds: int = 5
    failure_batch_cap: int = 8
    full_rebuild: bool = False
    workers: int = 1

    def __post_init__(self):
        if not 0.0 < self.failure_threshold <= 1.0:
            raise OptimizationError("failure_threshold must lie in (0, 1]")
        if self.max_rounds < 0:
            raise OptimizationError("max_rounds must be non-negative")
        if self.failure_batch_cap < 1:
            raise OptimizationError("failure_batch_cap must be at least 1")

    @classmethod
    def from_engine(cls, config):
        return cls(
            failure_threshold=config.failure_threshold,
            max_rounds=config.max_rounds,
            failure_batch_cap=config.failure_batch_cap,
            full_rebuild=config.full_rebuild,
            workers=config.workers,
        )


@dataclass
class ToolStats:
    trials: int = 0
    failure: int = 0
    failure_queries: list = field(default_factory=list)
    best_recall: float = None

    def record(self, query_text, hit):
        self.trials += 1
        if not hit:
            self.failure += 1
            if query_text not in self.failure_queries:
                self.failure_queries.append(query_text)

    @property
    def failure_rate(self):
        return self.failure / self.trials if self.trials else 0.0


@dataclass
class EgState:
    stats: dict = field(default_factory=dict)
    current_round: int = 0

    def tool(self, tool_id):
        return self.stats.setdefault(tool_id, ToolStats())

    def reset_counters(self):
        for stats in self.stats.values():
            stats.trials = 0
            stats.failure = 0
            stats.failure_queries = []

    def best_recalls(self):
        return {tool_id: self.stats[tool_id].best_recall for tool_id in sorted(self.stats)}


@dataclass(frozen=True)
class DescriptionProposal:
    tool_id: str
    round: int
    old_text: str
    filtered_queries: tuple
    reasons: tuple
    new_text: str
    dev_recall_old: float
    dev_recall_new: float
    accepted: bool

    def to_record(self):
        return {
            "tool_id": self.tool_id,
            "round": self.round,
            "old_text": self.old_text,
            "filtered_queries": list(self.filtered_queries),
            "reasons": list(self.reasons),
            "new_text": self.new_text,
            "dev_recall_old": self.dev_recall_old,
            "dev_recall_new": self.dev_recall_new,
            "accepted": self.accepted,
        }


# 🔹 Operations
def phase1_evaluate(trainset, pipeline, state, workers=1):
    for record, outcome in run_many(pipeline, trainset, workers):
        if isinstance(outcome, ToolRetrievalError):
            logger.warning("round %d: skipping query '%s' (%s)", state.current_round, record.id, outcome)
            continue
        for tool_id in record.gold_tool_ids:
            state.tool(tool_id).record(record.text, tool_id in outcome.tools)
    return state


def select_underinformative(state, config):
    return [
        tool_id
        for tool_id in sorted(state.stats)
        if state.stats[tool_id].trials > 0 and state.stats[tool_id].failure_rate > config.failure_threshold
    ]


def recent_first(queries, cap):
    return list(reversed(queries))[:cap]


def strip_entities(queries, provider, cap=8, params=None):
    if not queries:
        raise OptimizationError("no failure queries to filter")
    filtered = []
    for query in recent_first(queries, cap):
        generic = complete(provider, "entity_filter", {"query": query}, params).strip()
        if not generic:
            logger.warning("entity filter returned nothing for %r; keeping the original", query)
            generic = query
        filtered.append(generic)
    return filtered


def _bullets(lines):
    return "\n".join(f"- {line}" for line in lines)


def generate_reasons(tool, filtered_queries, provider, params=None):
    if not filtered_queries:
        raise OptimizationError(f"no queries to assess tool '{tool.id}' against")
    variables = {"tool_name": tool.name, "description": tool.description, "queries": _bullets(filtered_queries)}
    reasons = [line.strip() for line in complete(provider, "functionality_assessment", variables, params).splitlines()]
    reasons = [line for line in reasons if line]
    if not reasons:
        raise OptimizationError(f"no reasons for tool '{tool.id}'")
    return reasons


def rewrite_description(tool, description, filtered_queries, reasons, provider, params=None):
    if not description or not filtered_queries or not reasons:
        raise OptimizationError(f"incomplete rewrite inputs for tool '{tool.id}'")
    variables = {
        "tool_name": tool.name,
        "description": description,
        "queries": _bullets(filtered_queries),
        "reasons": _bullets(reasons),
    }
    rewritten = complete(provider, "edit_ground", variables, params).strip()
    if not rewritten:
        raise OptimizationError(f"empty rewrite for tool '{tool.id}'")
    return rewritten


def tool_dev_recall(tool_id, devset, pipeline, workers=1):
    """Share of dev queries needing ``tool_id`` whose final set contains it; ``None`` without such queries."""
    relevant = [record for record in devset if tool_id in record.gold]
    if not relevant:
        return None
    hits = 0
    for record, outcome in run_many(pipeline, relevant, workers):
        if isinstance(outcome, ToolRetrievalError):
            continue
        hits += tool_id in outcome.tools
    return hits / len(relevant)


def dev_recalls(devset, pipeline, tool_ids, workers=1):
    """Per-tool dev recall for ``tool_ids`` from a single pass over the dev queries."""
    outcomes = run_many(pipeline, devset, workers)
    recalls = {}
    for tool_id in tool_ids:
        relevant = [(record, outcome) for record, outcome in outcomes if tool_id in record.gold]
        if not relevant:
            recalls[tool_id] = None
            continue
        hits = sum(
            1 for _, outcome in relevant
            if not isinstance(outcome, ToolRetrievalError) and tool_id in outcome.tools
        )
        recalls[tool_id] = hits / len(relevant)
    return recalls


def gate(devset, pipeline, tool_id, new_text, best_recall, full_rebuild=False, workers=1):
    """Returns ``(dev_recall_new, accepted, candidate_pipeline)``; the caller decides what to keep."""
    candidate = pipeline.with_description(tool_id, new_text, full_rebuild=full_rebuild)
    recall_new = tool_dev_recall(tool_id, devset, candidate, workers)
    if recall_new is None or best_recall is None:
        logger.warning("no dev queries need tool '%s'; rewrite rejected", tool_id)
        return recall_new, False, candidate
    return recall_new, recall_new > best_recall, candidate


class EditAndGround:
    """Runs the optimization rounds. ``pipeline`` is replaced whenever a rewrite is accepted."""

    def __init__(self, pipeline, trainset, devset, config=None, llm=None, cache_path=None, params=None):
        self.pipeline = pipeline
        self.trainset = list(trainset)
        self.devset = list(devset)
        self.config = config or EgConfig()
        self.llm = llm or pipeline.llm
        self.cache_path = cache_path
        self.params = params or DecodeParams()
        self.state = EgState()
        self.report = []
        self.rounds_run = 0
        self.recall_history = []

    @property
    def catalog(self):
        return self.pipeline.catalog

    def initialize(self):
        recalls = dev_recalls(self.devset, self.pipeline, self.catalog.ids(), self.config.workers)
        for tool_id, recall in recalls.items():
            self.state.tool(tool_id).best_recall = recall
        self.recall_history.append(self.state.best_recalls())

    def run(self):
        self.initialize()
        for round_number in range(1, self.config.max_rounds + 1):
            self.state.current_round = round_number
            self.state.reset_counters()
            phase1_evaluate(self.trainset, self.pipeline, self.state, self.config.workers)
            selected = select_underinformative(self.state, self.config)
            self.rounds_run = round_number
            logger.info("round %d: %d under-informative tools", round_number, len(selected))
            if not selected:
                self.recall_history.append(self.state.best_recalls())
                break
            for tool_id in selected:
                try:
                    self.optimize_tool(tool_id, round_number)
                except ToolRetrievalError as exc:
                    logger.error("round %d: tool '%s' not optimized: %s", round_number, tool_id, exc)
            self.recall_history.append(self.state.best_recalls())
        return self.catalog, list(self.report)

    def optimize_tool(self, tool_id, round_number):
        stats = self.state.tool(tool_id)
        tool = self.catalog.get(tool_id)
        filtered = strip_entities(stats.failure_queries, self.llm, self.config.failure_batch_cap, self.params)
        reasons = generate_reasons(tool, filtered, self.llm, self.params)
        new_text = rewrite_description(tool, tool.description, filtered, reasons, self.llm, self.params)
        recall_new, accepted, candidate = gate(
            self.devset, self.pipeline, tool_id, new_text, stats.best_recall,
            full_rebuild=self.config.full_rebuild, workers=self.config.workers,
        )
        proposal = DescriptionProposal(
            tool_id=tool_id,
            round=round_number,
            old_text=tool.description,
            filtered_queries=tuple(filtered),
            reasons=tuple(reasons),
            new_text=new_text,
            dev_recall_old=stats.best_recall,
            dev_recall_new=recall_new,
            accepted=accepted,
        )
        self.report.append(proposal)
        if not accepted:
            logger.info("round %d: rewrite of '%s' rejected (%s -> %s)", round_number, tool_id,
                        stats.best_recall, recall_new)
            return proposal

        catalog = apply_description(self.catalog, tool_id, new_text, round_number, recall_new)
        self.pipeline = self.pipeline.with_catalog(catalog, restamp_index(candidate.index, catalog))
        stats.best_recall = recall_new
        logger.info("round %d: rewrite of '%s' accepted (dev recall %.4f)", round_number, tool_id, recall_new)
        if self.cache_path:
            write_cache(self.cache_path, catalog)
        return proposal

    def report_records(self):
        rows = [{"kind": "proposal", **proposal.to_record()} for proposal in self.report]
        rows.extend(
            {"kind": "round", "round": round_number, "best_recall": recalls}
            for round_number, recalls in enumerate(self.recall_history)
        )
        rows.append({
            "kind": "summary",
            "rounds_run": self.rounds_run,
            "accepted": sorted({proposal.tool_id for proposal in self.report if proposal.accepted}),
            "catalog_version": self.catalog.version,
        })
        return rows


def run_eg(trainset, devset, pipeline, config, llm=None, cache_path=None, params=None):
    optimizer = EditAndGround(pipeline, trainset, devset, config, llm=llm, cache_path=cache_path, params=params)
    return optimizer.run()
