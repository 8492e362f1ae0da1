"""Plan-and-retrieve: per sub-query dense candidates, likelihood rerank, top-5, predictor shortlist, union."""
import logging
import re
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

from .catalog import preview_description
from .dense_retriever import build_index, check_fresh, dense_topk, refresh_index
from .exceptions import PipelineError, StaleIndexError, ToolRetrievalError
from .llm_gateway import DecodeParams, LmRerankScorer, RecordingProvider, complete
from .planner import PlanState, plan_step
from .text_analysis import bm25_topk, build_bm25
from .utils import write_jsonl

logger = logging.getLogger(__name__)

_BULLET = re.compile(r"^\s*(?:[-*•]+|\d+[.)])\s*")


@dataclass(frozen=True)
class PipelineConfig:
    pool_size: int = 20
    rerank_top: int = 5
    max_steps: int = 6
    num_hypotheses: int = 4
    lm_order: int = 2
    include_retrieved: bool = False
    plan_seed: int = 13
    debug_checks: bool = True
    temperature: float = 0.0
    max_tokens: int = 512

    @classmethod
    def from_engine(cls, config):
        return cls(
            pool_size=config.pool_size,
            rerank_top=config.rerank_top,
            max_steps=config.max_steps,
            num_hypotheses=config.num_hypotheses,
            lm_order=config.lm_order,
            include_retrieved=config.include_retrieved,
            plan_seed=config.plan_seed,
            debug_checks=config.debug_checks,
            temperature=config.llm_temperature,
            max_tokens=config.llm_max_tokens,
        )

    @property
    def decode(self):
        return DecodeParams(temperature=self.temperature, max_tokens=self.max_tokens)


@dataclass(frozen=True)
class CandidateSet:
    sub_query: str
    ranked: tuple   # (tool id, cosine)
    pool_size: int

    @property
    def ids(self):
        return [tool_id for tool_id, _ in self.ranked]


@dataclass(frozen=True)
class Shortlist:
    sub_query: str
    tool_ids: tuple
    source_top5: tuple


@dataclass(frozen=True)
class StepResult:
    sub_query: object     # planner.SubQuery
    candidates: CandidateSet
    reranked: tuple       # (tool id, negative log-likelihood), top entries only
    shortlist: Shortlist

    def to_record(self, query_id):
        return {
            "kind": "step",
            "query_id": query_id,
            "step": self.sub_query.step_index,
            "sub_query": self.sub_query.text,
            "candidates": [[tool_id, score] for tool_id, score in self.candidates.ranked],
            "top": [[tool_id, nll] for tool_id, nll in self.reranked],
            "shortlist": list(self.shortlist.tool_ids),
        }


@dataclass(frozen=True)
class PnRResult:
    query_id: str
    steps: tuple
    tools: frozenset
    exhausted: bool = False
    calls: tuple = ()
    hit_counts: dict = field(default_factory=dict)

    @property
    def sub_queries(self):
        return [step.sub_query.text for step in self.steps]

    def ranking(self):
        """Tools of the final set, best (lowest) rerank score across steps first, ties by id."""
        best = {}
        for step in self.steps:
            scores = dict(step.reranked)
            for tool_id in step.shortlist.tool_ids:
                best[tool_id] = min(best.get(tool_id, float("inf")), scores[tool_id])
        return sorted(self.tools, key=lambda tool_id: (best.get(tool_id, float("inf")), tool_id))

    def trace_records(self):
        records = []
        for call in self.calls:
            records.append({"kind": "call", "query_id": self.query_id, **call.to_record()})
        for step in self.steps:
            records.append(step.to_record(self.query_id))
        records.append({
            "kind": "result",
            "query_id": self.query_id,
            "tools": sorted(self.tools),
            "hit_counts": dict(sorted(self.hit_counts.items())),
            "exhausted": self.exhausted,
        })
        return records


class QueryAborted(PipelineError):
    """A step failed; ``partial`` keeps whatever was computed before the failure."""

    def __init__(self, message, partial):
        super().__init__(message)
        self.partial = partial


# 🔹 Stages
def retrieve_candidates(index, provider, sub_query, pool_size, catalog=None, head=None):
    if catalog is not None:
        check_fresh(index, catalog)
    ranked = dense_topk(index, provider.embed(sub_query), pool_size, head=head)
    return CandidateSet(sub_query, tuple(ranked), pool_size)


def rerank_lm(candidates, scorer, catalog, top=5):
    scores = scorer.scores(candidates.sub_query, candidates.ids, catalog)
    ranked = sorted(scores.items(), key=lambda item: (item[1], item[0]))
    return ranked[:top]


def format_tool_list(tool_ids, catalog):
    return "\n".join(
        f"{position}. {catalog.get(tool_id).name}: {catalog.get(tool_id).description}"
        for position, tool_id in enumerate(tool_ids, start=1)
    )


def _clean_name(text):
    return _BULLET.sub("", text).strip().strip("\"'`").strip()


def parse_tool_names(response, known=()):
    """Names in a predictor answer, one or more per line.

    A line that names one of ``known`` as a whole (optionally followed by
    ``: description``) is kept intact; other lines are split on commas.
    """
    known = {name.lower() for name in known}
    names = []
    for line in (response or "").splitlines():
        line = _clean_name(line)
        if line.lower() in known or line.split(":", 1)[0].strip().lower() in known:
            parts = [line]
        else:
            parts = [_clean_name(part) for part in line.split(",")]
        names.extend(name for name in parts if name and name.lower() != "none")
    return names


def predict_shortlist(top5, sub_query, provider, catalog, params=None):
    if not top5:
        raise PipelineError(f"nothing to shortlist for sub-query {sub_query!r}")
    variables = {"sub_query": sub_query, "tools": format_tool_list(top5, catalog)}
    response = complete(provider, "predictor", variables, params)
    listed = {}
    for tool_id in top5:
        listed.setdefault(catalog.get(tool_id).name.lower(), []).append(tool_id)
    chosen = []
    for name in parse_tool_names(response, listed):
        matches = listed.get(name.lower())
        if matches is None and ":" in name:
            matches = listed.get(name.split(":", 1)[0].strip().lower())
        if matches is None:
            logger.warning("predictor named %r, which is not among the listed tools; dropped", name)
            continue
        if len(matches) > 1:
            logger.warning("predictor named %r, shared by listed tools %s; keeping all of them",
                           name, ", ".join(matches))
        chosen.extend(tool_id for tool_id in matches if tool_id not in chosen)
    return Shortlist(sub_query, tuple(chosen), tuple(top5))


def union_tools(shortlists):
    tools = set()
    for shortlist in shortlists:
        tools.update(shortlist.tool_ids)
    return frozenset(tools)


# 🔹 Full loop
class PlanAndRetrieve:
    """Runs the interleaved plan/retrieve loop over a fixed catalog snapshot and its index."""

    def __init__(self, catalog, index, embedder, llm, config=None, head=None, scorer=None):
        self.catalog = catalog
        self.index = index
        self.embedder = embedder
        self.llm = llm
        self.config = config or PipelineConfig()
        self.head = head
        self.scorer = scorer or LmRerankScorer(self.config.lm_order)
        check_fresh(index, catalog)
        if index.provider_id != embedder.provider_id:
            raise StaleIndexError(
                f"index was embedded with '{index.provider_id}' but the embedder is '{embedder.provider_id}'"
            )

    def close(self):
        self.llm.close()
        self.embedder.close()

    def with_catalog(self, catalog, index):
        return PlanAndRetrieve(catalog, index, self.embedder, self.llm, self.config, self.head, self.scorer)

    def with_description(self, tool_id, text, full_rebuild=False):
        """Pipeline over a preview catalog where ``tool_id`` reads ``text``."""
        catalog = preview_description(self.catalog, tool_id, text)
        if full_rebuild:
            index = build_index(catalog, self.embedder)
        else:
            index = refresh_index(self.index, catalog, self.embedder, [tool_id])
        return self.with_catalog(catalog, index)

    def run(self, record):
        cfg = self.config
        recorder = RecordingProvider(self.llm)
        state = PlanState(
            query_id=record.id,
            query=record.text,
            max_steps=cfg.max_steps,
            num_hypotheses=cfg.num_hypotheses,
            seed=cfg.plan_seed,
            include_retrieved=cfg.include_retrieved,
        )
        steps = []
        try:
            while not state.done:
                state, sub_query = plan_step(state, recorder, cfg.decode)
                candidates = retrieve_candidates(self.index, self.embedder, sub_query.text, cfg.pool_size,
                                                 self.catalog, self.head)
                reranked = rerank_lm(candidates, self.scorer, self.catalog, cfg.rerank_top)
                top_ids = [tool_id for tool_id, _ in reranked]
                shortlist = predict_shortlist(top_ids, sub_query.text, recorder, self.catalog, cfg.decode)
                steps.append(StepResult(sub_query, candidates, tuple(reranked), shortlist))
                if cfg.include_retrieved:
                    names = [self.catalog.get(tool_id).name for tool_id in sorted(union_tools(s.shortlist for s in steps))]
                    state = replace(state, retrieved=tuple(names))
        except ToolRetrievalError as exc:
            partial = self._result(record, steps, state, recorder)
            raise QueryAborted(f"query '{record.id}' aborted at step {len(steps) + 1}: {exc}", partial) from exc

        result = self._result(record, steps, state, recorder)
        if cfg.debug_checks:
            self.check_result(result)
        return result

    def _result(self, record, steps, state, recorder):
        hits = Counter(tool_id for step in steps for tool_id in step.shortlist.tool_ids)
        return PnRResult(
            query_id=record.id,
            steps=tuple(steps),
            tools=union_tools(step.shortlist for step in steps),
            exhausted=state.exhausted,
            calls=tuple(recorder.calls),
            hit_counts=dict(hits),
        )

    @staticmethod
    def check_result(result):
        for step in result.steps:
            top = set(step.shortlist.source_top5)
            if not set(step.shortlist.tool_ids) <= top:
                raise PipelineError(f"query '{result.query_id}': shortlist escapes the reranked top entries")
            if not top <= set(step.candidates.ids):
                raise PipelineError(f"query '{result.query_id}': reranked entries escape the candidate pool")
        if result.tools != union_tools(step.shortlist for step in result.steps):
            raise PipelineError(f"query '{result.query_id}': final set differs from the union of shortlists")


def run_pnr(query, index, providers, config, catalog, head=None):
    """``providers`` is an ``(llm, embedder)`` pair."""
    llm, embedder = providers
    return PlanAndRetrieve(catalog, index, embedder, llm, config, head=head).run(query)


# 🔹 One-shot baselines
@dataclass(frozen=True)
class OneShotResult:
    query_id: str
    ranked: tuple

    @property
    def tools(self):
        return frozenset(tool_id for tool_id, _ in self.ranked)

    def ranking(self):
        return [tool_id for tool_id, _ in self.ranked]

    def trace_records(self):
        return [{"kind": "result", "query_id": self.query_id, "ranked": [list(item) for item in self.ranked]}]


class OneShotRetriever:
    """Whole-query top-k without planning: ``dense`` through the index, ``bm25`` over current descriptions."""

    def __init__(self, mode, catalog, index=None, embedder=None, head=None, k=5):
        if mode not in ("dense", "bm25"):
            raise PipelineError(f"unknown one-shot mode '{mode}'")
        self.mode = mode
        self.catalog = catalog
        self.index = index
        self.embedder = embedder
        self.head = head
        self.k = k
        if mode == "dense":
            if index is None or embedder is None:
                raise PipelineError("dense one-shot retrieval needs an index and an embedder")
            check_fresh(index, catalog)
        else:
            self._bm25 = build_bm25(catalog.descriptions())

    def run(self, record):
        if self.mode == "dense":
            ranked = dense_topk(self.index, self.embedder.embed(record.text), self.k, head=self.head)
        else:
            ranked = bm25_topk(self._bm25, record.text, self.k)
        return OneShotResult(record.id, tuple(ranked))

    def close(self):
        if self.embedder is not None:
            self.embedder.close()


def run_many(system, records, workers=1):
    """``[(record, result or error)]`` in input order; errors are ``ToolRetrievalError`` instances."""

    def attempt(record):
        try:
            return record, system.run(record)
        except ToolRetrievalError as exc:
            logger.warning("query '%s' failed: %s", record.id, exc)
            return record, exc

    if workers <= 1:
        return [attempt(record) for record in records]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(attempt, records))


def write_trace(path, results):
    records = []
    for result in results:
        records.extend(result.trace_records())
    write_jsonl(path, records)
