"""Autoregressive query decomposition.

Each step asks the planner template for a batch of candidate sub-queries, keeps
the one that lands farthest from what was already planned (TF-IDF + k-means
cluster membership), and then asks the same template whether the request is
covered.
"""
import logging
import re
from dataclasses import dataclass, replace

from .exceptions import PlanningError, TextAnalysisError
from .llm_gateway import DecodeParams, complete
from .text_analysis import kmeans, tfidf_fit
from .utils import seeded_choice

logger = logging.getLogger(__name__)

_VERDICT = re.compile(r"\W*([A-Za-z]+)")


@dataclass(frozen=True)
class SubQuery:
    text: str
    step_index: int
    parent_query_id: str


@dataclass(frozen=True)
class PlanState:
    query_id: str
    query: str
    history: tuple = ()
    hypotheses: tuple = ()
    done: bool = False
    exhausted: bool = False
    max_steps: int = 6
    num_hypotheses: int = 4
    seed: int = 13
    include_retrieved: bool = False
    retrieved: tuple = ()

    @property
    def step(self):
        return len(self.history)


def format_history(history):
    if not history:
        return "(none)"
    return "\n".join(f"{sub.step_index}. {sub.text}" for sub in history)


def planner_variables(state, mode):
    return {
        "query": state.query,
        "history": format_history(state.history),
        "mode": mode,
        "num_hypotheses": str(state.num_hypotheses),
        "retrieved": ", ".join(state.retrieved) if state.include_retrieved else "",
    }


def propose_hypotheses(state, provider, params=None):
    if state.done:
        raise PlanningError(f"plan for '{state.query_id}' is already finished")
    response = complete(provider, "planner", planner_variables(state, "propose"), params)
    candidates = [line.strip() for line in response.splitlines() if line.strip()]
    if not candidates:
        raise PlanningError(f"no hypotheses for query '{state.query_id}'")
    return candidates[:state.num_hypotheses]


# 🔹 Sub-query selection
@dataclass(frozen=True)
class SelectionTrace:
    choice: str
    branch: str          # "empty_prev" | "filtered" | "filtered_empty" | "no_vocabulary"
    labels: tuple = ()   # cluster label per item of prev + cand
    prev_labels: frozenset = frozenset()
    survivors: tuple = ()


def select_subquery_traced(prev, cand, seed):
    prev = list(prev)
    cand = list(cand)
    if not cand:
        raise PlanningError("no candidate sub-queries to choose from")
    if not prev:
        return SelectionTrace(seeded_choice(cand, seed), "empty_prev")

    union = prev + cand
    try:
        model = tfidf_fit(union)
    except TextAnalysisError:
        logger.warning("sub-query candidates share no vocabulary with the plan; choosing at random")
        return SelectionTrace(seeded_choice(cand, seed), "no_vocabulary")

    k = min(len(union), len(prev) + 1)
    labels = kmeans(model.matrix(union), k, seed).labels
    prev_labels = frozenset(labels[:len(prev)])
    survivors = tuple(text for text, label in zip(cand, labels[len(prev):]) if label not in prev_labels)
    if not survivors:
        return SelectionTrace(seeded_choice(cand, seed), "filtered_empty", labels, prev_labels)
    return SelectionTrace(seeded_choice(survivors, seed), "filtered", labels, prev_labels, survivors)


def select_subquery(prev, cand, seed):
    return select_subquery_traced(prev, cand, seed).choice


# 🔹 Stop check
def parse_verdict(response):
    match = _VERDICT.match(response or "")
    word = match.group(1).lower() if match else ""
    if word == "yes":
        return True
    if word != "no":
        logger.warning("unparseable planner verdict %r; treating it as 'no'", (response or "")[:80])
    return False


def goal_satisfied(state, provider, params=None):
    if not state.history:
        raise PlanningError("the stop check needs at least one planned sub-query")
    return parse_verdict(complete(provider, "planner", planner_variables(state, "judge"), params))


def plan_step(state, provider, params=None):
    """One planning step: hypotheses, selection, stop check. Returns ``(state', SubQuery)``."""
    if state.done:
        raise PlanningError(f"plan for '{state.query_id}' is already finished")
    step = state.step + 1
    params = params or DecodeParams()
    step_params = replace(params, seed=state.seed + step)
    hypotheses = propose_hypotheses(state, provider, step_params)
    choice = select_subquery([sub.text for sub in state.history], hypotheses, state.seed + step)
    sub_query = SubQuery(choice, step, state.query_id)
    state = replace(state, history=state.history + (sub_query,), hypotheses=tuple(hypotheses))

    satisfied = goal_satisfied(state, provider, step_params)
    if satisfied:
        state = replace(state, done=True)
    elif step >= state.max_steps:
        logger.info("query '%s': plan exhausted after %d steps", state.query_id, step)
        state = replace(state, done=True, exhausted=True)
    return state, sub_query


def plan(state, provider, params=None):
    """Planning alone, without retrieval in between steps."""
    while not state.done:
        state, _ = plan_step(state, provider, params)
    return state
