"""Prompt templates, chat providers and the likelihood scorer used for reranking."""
import logging
import math
import threading
from collections import Counter
from dataclasses import dataclass
from pathlib import Path

from django.template.loader import get_template

from .exceptions import ProviderError, TemplateError, TranscriptMiss
from .serializers import TranscriptEntrySerializer
from .text_analysis import tokenize
from .transport import JsonEndpoint, TransportFailure
from .utils import read_jsonl, write_jsonl

logger = logging.getLogger(__name__)

UNSCRIPTED = "UNSCRIPTED"
KEY_SEPARATOR = "\x1f"

# reserved tokens; tokenize() never yields text with angle brackets
START = "<s>"
UNK = "<unk>"
SEP = "<sep>"
SEP_MARKER = "[SEP]"


# 🔹 Templates
@dataclass(frozen=True)
class PromptTemplate:
    template_id: str
    required_vars: tuple

    @property
    def template_name(self):
        return f"prompts/{self.template_id}.txt"


TEMPLATES = {
    template.template_id: template
    for template in (
        PromptTemplate("planner", ("query", "history", "mode", "num_hypotheses", "retrieved")),
        PromptTemplate("predictor", ("sub_query", "tools")),
        PromptTemplate("entity_filter", ("query",)),
        PromptTemplate("functionality_assessment", ("tool_name", "description", "queries")),
        PromptTemplate("edit_ground", ("tool_name", "description", "queries", "reasons")),
    )
}


def get_prompt_template(template_id):
    try:
        return TEMPLATES[template_id]
    except KeyError:
        raise TemplateError(f"unknown template '{template_id}'") from None


def render(template_id, variables):
    template = get_prompt_template(template_id)
    for name in template.required_vars:
        if name not in variables:
            raise TemplateError(f"template '{template_id}' is missing variable '{name}'")
    context = {name: str(variables[name]) for name in template.required_vars}
    return get_template(template.template_name).render(context)


def canonical_key(template_id, variables):
    pairs = [f"{name}={variables[name]}" for name in sorted(variables)]
    return KEY_SEPARATOR.join([template_id] + pairs)


# 🔹 Providers
@dataclass(frozen=True)
class DecodeParams:
    temperature: float = 0.0
    max_tokens: int = 512
    seed: int = None


class LlmProvider:
    def complete(self, template_id, prompt, variables, params):
        raise NotImplementedError

    def close(self):
        pass


class RemoteChatProvider(LlmProvider):
    """OpenAI-style chat completions; the auth token comes from the environment via config."""

    def __init__(self, url, model, token="", timeout=45.0, max_inflight=4, transport=None, **kwargs):
        self.model = model
        self._endpoint = JsonEndpoint(url, token=token, timeout=timeout, max_inflight=max_inflight,
                                      transport=transport, **kwargs)

    def complete(self, template_id, prompt, variables, params):
        payload = {
            "model": self.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": params.temperature,
            "max_tokens": params.max_tokens,
        }
        if params.seed is not None:
            payload["seed"] = params.seed
        try:
            data = self._endpoint.post(payload)
        except TransportFailure as exc:
            raise ProviderError(f"{template_id}: {exc}") from exc
        if isinstance(data, dict) and isinstance(data.get("text"), str):
            return data["text"]
        try:
            return str(data["choices"][0]["message"]["content"] or "")
        except (KeyError, IndexError, TypeError) as exc:
            raise ProviderError(f"{template_id}: unexpected chat response ({exc!r})") from exc

    def close(self):
        self._endpoint.close()


class ScriptedProvider(LlmProvider):
    """Replays recorded responses keyed by ``(template_id, canonical_key)``."""

    def __init__(self, entries=None, strict=True):
        self.entries = dict(entries or {})
        self.strict = strict

    @classmethod
    def from_path(cls, path, strict=True):
        """``path`` is one transcript file or a directory of ``*.jsonl`` transcripts."""
        path = Path(path)
        if path.is_dir():
            files = sorted(path.glob("*.jsonl"))
        elif path.is_file():
            files = [path]
        else:
            raise ProviderError(f"transcript path not found: {path}")
        entries = {}
        for file in files:
            try:
                for number, record in read_jsonl(file):
                    serializer = TranscriptEntrySerializer(data=record)
                    if not serializer.is_valid():
                        raise ProviderError(f"{file} line {number}: {serializer.errors}")
                    data = serializer.validated_data
                    slot = (data["template_id"], data["key"])
                    if slot in entries and entries[slot] != data["response"]:
                        raise ProviderError(f"{file} line {number}: conflicting response for key {data['key']!r}")
                    entries[slot] = data["response"]
            except ValueError as exc:
                raise ProviderError(f"{file} {exc}") from exc
        logger.info("loaded %d scripted responses from %s", len(entries), path)
        return cls(entries, strict=strict)

    def complete(self, template_id, prompt, variables, params):
        key = canonical_key(template_id, variables)
        try:
            return self.entries[(template_id, key)]
        except KeyError:
            if self.strict:
                raise TranscriptMiss(template_id, key) from None
            logger.warning("no scripted response for %s; answering %s", template_id, UNSCRIPTED)
            return UNSCRIPTED


@dataclass(frozen=True)
class ProviderCall:
    template_id: str
    key: str
    response: str

    def to_record(self):
        return {"template_id": self.template_id, "key": self.key, "response": self.response}


class RecordingProvider(LlmProvider):
    """Wraps a provider and keeps every call, in call order."""

    def __init__(self, inner):
        self.inner = inner
        self.calls = []
        self._lock = threading.Lock()

    def complete(self, template_id, prompt, variables, params):
        response = self.inner.complete(template_id, prompt, variables, params)
        with self._lock:
            self.calls.append(ProviderCall(template_id, canonical_key(template_id, variables), response))
        return response


def write_transcripts(calls, directory):
    """One ``<template_id>.jsonl`` per template, deduplicated and sorted by key."""
    grouped = {}
    for call in calls:
        grouped.setdefault(call.template_id, {})[call.key] = call.response
    directory = Path(directory)
    for template_id in sorted(TEMPLATES):
        entries = grouped.get(template_id, {})
        write_jsonl(
            directory / f"{template_id}.jsonl",
            [ProviderCall(template_id, key, entries[key]).to_record() for key in sorted(entries)],
        )
    return {template_id: len(entries) for template_id, entries in grouped.items()}


def make_llm(config):
    if config.llm_provider == "scripted":
        config.require("transcripts_path")
        return ScriptedProvider.from_path(config.transcripts_path, strict=config.transcript_strict)
    return RemoteChatProvider(
        config.llm_url,
        config.llm_model,
        token=config.llm_api_token,
        timeout=config.llm_timeout,
        max_inflight=config.max_inflight,
    )


def complete(provider, template_id, variables, params=None):
    prompt = render(template_id, variables)
    return provider.complete(template_id, prompt, variables, params or DecodeParams())


# 🔹 N-gram likelihood
def sequence_tokens(text):
    """Tokens of ``text`` with every literal ``[SEP]`` marker turned into the separator token."""
    parts = text.split(SEP_MARKER)
    tokens = tokenize(parts[0])
    for part in parts[1:]:
        tokens.append(SEP)
        tokens.extend(tokenize(part))
    return tokens


class NGramLm:
    """Add-one smoothed n-gram model. The vocabulary always holds the unknown and separator tokens."""

    def __init__(self, order=2, extra_vocabulary=()):
        if order < 1:
            raise ValueError("order must be at least 1")
        self.order = order
        self.vocabulary = {UNK, SEP, *extra_vocabulary}
        self.ngram_counts = Counter()
        self.context_counts = Counter()

    @classmethod
    def fit(cls, corpus, order=2, extra_vocabulary=()):
        lm = cls(order, extra_vocabulary)
        sequences = [sequence_tokens(text) for text in corpus]
        for tokens in sequences:
            lm.vocabulary.update(tokens)
        for tokens in sequences:
            lm.add(tokens)
        return lm

    def copy(self):
        clone = NGramLm(self.order)
        clone.vocabulary = set(self.vocabulary)
        clone.ngram_counts = Counter(self.ngram_counts)
        clone.context_counts = Counter(self.context_counts)
        return clone

    def _map(self, token):
        return token if token in self.vocabulary or token == START else UNK

    def _events(self, tokens):
        padded = [START] * (self.order - 1) + [self._map(token) for token in tokens]
        for position in range(self.order - 1, len(padded)):
            yield tuple(padded[position - self.order + 1:position]), padded[position]

    def add(self, tokens):
        for context, token in self._events(tokens):
            self.ngram_counts[(context, token)] += 1
            self.context_counts[context] += 1

    def _conditional(self, context, token):
        return (self.ngram_counts[(context, token)] + 1) / (self.context_counts[context] + len(self.vocabulary))

    def prob(self, token, context=()):
        """p(token | context); a short context is padded with start symbols."""
        if self.order == 1:
            context = ()
        else:
            padded = (START,) * (self.order - 1) + tuple(self._map(t) for t in context)
            context = padded[-(self.order - 1):]
        return self._conditional(context, self._map(token))

    def neg_logprob(self, tokens):
        return -sum(math.log(self._conditional(context, token)) for context, token in self._events(tokens))


def sequence_neg_logprob(lm, text):
    return lm.neg_logprob(sequence_tokens(text))


class LmRerankScorer:
    """Scores ``sub_query [SEP] description`` with an n-gram model over the current descriptions plus the sub-query."""

    def __init__(self, order=2):
        self.order = order
        self._base = None
        self._base_key = None
        self._lock = threading.Lock()

    def _base_lm(self, catalog):
        key = catalog.fingerprint()
        with self._lock:
            if self._base_key != key:
                self._base = NGramLm.fit([tool.description for tool in catalog], order=self.order)
                self._base_key = key
            return self._base

    def model_for(self, sub_query, catalog):
        lm = self._base_lm(catalog).copy()
        tokens = sequence_tokens(sub_query)
        lm.vocabulary.update(tokens)
        lm.add(tokens)
        return lm

    def scores(self, sub_query, candidate_ids, catalog):
        lm = self.model_for(sub_query, catalog)
        return {
            tool_id: sequence_neg_logprob(lm, f"{sub_query} {SEP_MARKER} {catalog.get(tool_id).description}")
            for tool_id in candidate_ids
        }
