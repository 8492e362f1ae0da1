"""Deterministic desk-scale suites: a synthetic catalog, multi-aspect queries and scripted transcripts.

Every tool description has the same shape, ``"<4 category words> api to <2 tool
keywords> quickly"``, so likelihood reranking is driven by shared bigrams and
not by length. A query spells out its primary aspect with repeated category
words and mentions the other aspects tersely, which pulls whole-query top-5
retrieval into the primary category. The ``keyword_poor`` variant replaces ten
descriptions with brand names that carry none of the tool's keywords.

Transcripts are produced by recording ``FixtureOracle`` while the pipeline and
the optimizer run over the suite, so replaying them with ``ScriptedProvider``
answers every call those runs make.
"""
import json
import logging
import re
import shutil
from dataclasses import dataclass
from pathlib import Path

from .catalog import (
    assign_splits, load_catalog, load_queries, query_to_record, save_catalog, QueryRecord, Tool, ToolCatalog,
)
from .conf import load_config
from .dense_retriever import TestEmbedder, build_index
from .eg_optimizer import EditAndGround, EgConfig
from .exceptions import FixtureError, ToolRetrievalError
from .llm_gateway import LlmProvider, RecordingProvider, write_transcripts
from .retrieval_pipeline import OneShotRetriever, PipelineConfig, PlanAndRetrieve
from .text_analysis import tokenize
from .utils import seeded_rng, sha256_file, write_atomic, write_json, write_jsonl

logger = logging.getLogger(__name__)

VARIANTS = ("standard", "keyword_poor")
PINNED_SEED = 42
COMMITTED_ROOT = Path(__file__).resolve().parent / "suites"
N_CATEGORIES = 6
TOOLS_PER_CATEGORY = 10
ACTIVE_PER_CATEGORY = 4
N_QUERIES = 30
N_POOR = 10
MAX_ATTEMPTS = 200

CONSONANTS = "bdfgklmnprstvz"
VOWELS = "aeiou"
FILLER = {"get", "api", "to", "quickly", "i", "need", "help", "with", "and", "also", "for", "order"}
GENERIC = "a specific value"


@dataclass(frozen=True)
class FixtureTool:
    id: str
    name: str
    category: int
    category_words: tuple
    keywords: tuple
    brand: str

    @property
    def rich_description(self):
        return f"{' '.join(self.category_words)} api to {self.keywords[0]} {self.keywords[1]} quickly"

    @property
    def poor_description(self):
        return f"{' '.join(self.category_words)} api to {self.brand} {self.brand}lab quickly"

    @property
    def aspect(self):
        return f"get {self.keywords[0]} {self.keywords[1]} {self.category_words[0]}"


@dataclass(frozen=True)
class FixtureSuite:
    root: Path
    variant: str
    seed: int

    @property
    def catalog_path(self):
        return self.root / "tools.jsonl"

    @property
    def queries_path(self):
        return self.root / "queries.jsonl"

    @property
    def transcripts_dir(self):
        return self.root / "transcripts"

    @property
    def config_path(self):
        return self.root / "fixture.env"

    @property
    def expected_dir(self):
        return self.root / "expected"

    @property
    def checksums_path(self):
        return self.root / "SHA256SUMS"


# 🔹 Scripted oracle
class FixtureOracle(LlmProvider):
    """Answers every template the way a careful model would on the synthetic suite."""

    def __init__(self, aspects_by_query=None, rich_by_name=None):
        self.aspects_by_query = dict(aspects_by_query or {})
        self.rich_by_name = dict(rich_by_name or {})

    def complete(self, template_id, prompt, variables, params):
        return getattr(self, f"_{template_id}")(variables)

    @staticmethod
    def _planned(history):
        return {match.group(1).strip() for match in re.finditer(r"^\d+\.\s+(.*)$", history, re.MULTILINE)}

    def _planner(self, variables):
        aspects = self.aspects_by_query.get(variables["query"], [])
        planned = self._planned(variables["history"])
        open_aspects = [aspect for aspect in aspects if aspect not in planned]
        if variables["mode"] == "judge":
            if aspects and not open_aspects:
                return "Yes, every part of the request is covered."
            return "No, parts of the request are still open."
        return "\n".join(open_aspects or aspects)

    def _predictor(self, variables):
        wanted = set(tokenize(variables["sub_query"])) - {"get"}
        names = []
        for line in variables["tools"].splitlines():
            match = re.match(r"^\d+\.\s+([^:]+):\s*(.*)$", line)
            if match and wanted and wanted <= set(tokenize(match.group(2))):
                names.append(match.group(1).strip())
        return "\n".join(names) if names else "none"

    def _entity_filter(self, variables):
        text = re.sub(r"'[^']*'|\"[^\"]*\"", GENERIC, variables["query"])
        return re.sub(r"\d+", GENERIC, text)

    def _functionality_assessment(self, variables):
        queries = [line[2:].strip() for line in variables["queries"].splitlines() if line.startswith("- ")]
        return "\n".join(
            f"{variables['tool_name']} can serve '{query}' but its description never names that capability."
            for query in queries[:3]
        )

    def _edit_ground(self, variables):
        return self.rich_by_name.get(variables["tool_name"].lower(), variables["description"])


# 🔹 Generation
def _word_factory(rng):
    used = set(FILLER)

    def word(syllables=3):
        while True:
            candidate = "".join(
                CONSONANTS[int(rng.integers(len(CONSONANTS)))] + VOWELS[int(rng.integers(len(VOWELS)))]
                for _ in range(syllables)
            )
            if candidate not in used:
                used.add(candidate)
                return candidate

    return word


def build_tools(rng):
    word = _word_factory(rng)
    tools = []
    for category in range(N_CATEGORIES):
        category_words = tuple(word() for _ in range(4))
        for slot in range(TOOLS_PER_CATEGORY):
            brand = word()
            tools.append(FixtureTool(
                id=f"T{category * TOOLS_PER_CATEGORY + slot + 1:02d}",
                name=brand.capitalize(),
                category=category,
                category_words=category_words,
                keywords=(word(), word()),
                brand=brand,
            ))
    return tools


def query_text(gold, number):
    primary = gold[0]
    c1, c2, c3, c4 = primary.category_words
    text = f"i need {c1} {c2} {c3} {c4} {c1} {c2} help with {primary.keywords[0]} {primary.keywords[1]}"
    for tool in gold[1:]:
        text += f" and also {tool.keywords[0]} {tool.keywords[1]}"
    return f"{text} for order {number}"


def _catalog(tools, poor_ids=frozenset()):
    entries = {}
    for tool in tools:
        description = tool.poor_description if tool.id in poor_ids else tool.rich_description
        entries[tool.id] = Tool(tool.id, tool.name, tool.category_words[0], description, description)
    return ToolCatalog(tools=entries, version=0)


@dataclass(frozen=True)
class _Query:
    id: str
    text: str
    gold: tuple   # FixtureTool, primary first

    def record(self):
        return QueryRecord(
            id=self.id,
            text=self.text,
            gold_tool_ids=tuple(sorted(tool.id for tool in self.gold)),
            graded_relevance={tool.id: (2 if position == 0 else 1) for position, tool in enumerate(self.gold)},
        )


def build_queries(rng, tools, oracle, pipeline, one_shot):
    by_category = [tools[c * TOOLS_PER_CATEGORY:(c + 1) * TOOLS_PER_CATEGORY] for c in range(N_CATEGORIES)]
    active = [
        [members[int(i)] for i in sorted(rng.choice(TOOLS_PER_CATEGORY, ACTIVE_PER_CATEGORY, replace=False))]
        for members in by_category
    ]
    queries = []
    for number in range(1, N_QUERIES + 1):
        for attempt in range(1, MAX_ATTEMPTS + 1):
            size = int(rng.integers(2, 5))
            categories = [int(c) for c in rng.choice(N_CATEGORIES, size, replace=False)]
            gold = tuple(active[c][int(rng.integers(ACTIVE_PER_CATEGORY))] for c in categories)
            candidate = _Query(f"Q{number}", query_text(gold, int(rng.integers(10000, 100000))), gold)
            oracle.aspects_by_query[candidate.text] = [tool.aspect for tool in gold]
            if _separates(candidate.record(), pipeline, one_shot):
                queries.append(candidate)
                break
            del oracle.aspects_by_query[candidate.text]
        else:
            raise FixtureError(f"could not build query Q{number} in {MAX_ATTEMPTS} attempts")
    return queries


def _separates(record, pipeline, one_shot):
    """One-shot top-5 misses a gold tool while plan-and-retrieve recovers all of them."""
    if record.gold <= one_shot.run(record).tools:
        return False
    try:
        return record.gold <= pipeline.run(record).tools
    except ToolRetrievalError:
        return False


def choose_poor_tools(queries, splits):
    """Prefer tools needed by both train and dev queries, so the optimizer can both detect and verify them."""
    in_split = {"train": set(), "dev": set(), "test": set()}
    for query in queries:
        in_split[splits[query.id]].update(tool.id for tool in query.gold)
    both = sorted(in_split["train"] & in_split["dev"])
    train_only = sorted(in_split["train"] - in_split["dev"])
    rest = sorted((in_split["dev"] | in_split["test"]) - set(both) - set(train_only))
    return frozenset((both + train_only + rest)[:N_POOR])


def fixture_settings(config):
    return {
        "CATALOG_PATH": "tools.jsonl",
        "QUERIES_PATH": "queries.jsonl",
        "TRANSCRIPTS_PATH": "transcripts",
        "CACHE_PATH": "out/description_cache.json",
        "INDEX_PATH": "out/index.npz",
        "HEAD_PATH": "out/head.npy",
        "OUTPUT_DIR": "out",
        "LLM_PROVIDER": "scripted",
        "TRANSCRIPT_STRICT": "true",
        "EMBEDDER": "test",
        "EMBEDDING_DIMENSION": config.embedding_dimension,
        "POOL_SIZE": config.pool_size,
        "RERANK_TOP": config.rerank_top,
        "MAX_STEPS": config.max_steps,
        "NUM_HYPOTHESES": config.num_hypotheses,
        "LM_ORDER": config.lm_order,
        "INCLUDE_RETRIEVED": str(config.include_retrieved).lower(),
        "PLAN_SEED": config.plan_seed,
        "SPLIT_SEED": config.split_seed,
        "FAILURE_THRESHOLD": config.failure_threshold,
        "MAX_ROUNDS": config.max_rounds,
        "FAILURE_BATCH_CAP": config.failure_batch_cap,
    }


def generate_fixture(seed, out_dir, variant="standard", config=None):
    if variant not in VARIANTS:
        raise FixtureError(f"unknown fixture variant '{variant}' (expected one of {', '.join(VARIANTS)})")
    config = config or load_config()
    suite = FixtureSuite(Path(out_dir), variant, seed)
    rng = seeded_rng(seed)
    embedder = TestEmbedder(config.embedding_dimension)
    pipeline_config = PipelineConfig.from_engine(config)

    tools = build_tools(rng)
    rich = _catalog(tools)
    oracle = FixtureOracle(rich_by_name={tool.name.lower(): tool.rich_description for tool in tools})
    rich_index = build_index(rich, embedder)
    checker = PlanAndRetrieve(rich, rich_index, embedder, oracle, pipeline_config)
    one_shot = OneShotRetriever("dense", rich, rich_index, embedder)
    queries = build_queries(rng, tools, oracle, checker, one_shot)

    splits = assign_splits([query.id for query in queries], config.split_seed)
    poor = choose_poor_tools(queries, splits) if variant == "keyword_poor" else frozenset()

    save_catalog(_catalog(tools, poor), suite.catalog_path)
    write_jsonl(suite.queries_path, [query_to_record(query.record()) for query in sorted(queries, key=lambda q: q.id)])
    catalog = load_catalog(suite.catalog_path)
    dataset = load_queries(suite.queries_path, catalog, config.split_seed)

    recorder = RecordingProvider(oracle)
    pipeline = PlanAndRetrieve(catalog, build_index(catalog, embedder), embedder, recorder, pipeline_config)
    expected_pnr = _run_all(pipeline, dataset.records)
    baseline = OneShotRetriever("dense", catalog, pipeline.index, embedder)
    expected_one_shot = {record.id: baseline.run(record).ranking() for record in dataset.records}

    optimizer = EditAndGround(pipeline, dataset.train, dataset.dev, EgConfig.from_engine(config), llm=recorder,
                              params=pipeline_config.decode)
    optimized, proposals = optimizer.run()
    if poor and not any(proposal.accepted for proposal in proposals):
        raise FixtureError(f"seed {seed}: no keyword-poor description was repaired by the optimizer")
    expected_optimized = expected_pnr
    if optimized.version != catalog.version:
        expected_optimized = _run_all(optimizer.pipeline, dataset.records)

    write_transcripts(recorder.calls, suite.transcripts_dir)
    write_json(suite.expected_dir / "pnr_tools.json", expected_pnr)
    write_json(suite.expected_dir / "one_shot_top5.json", expected_one_shot)
    write_json(suite.expected_dir / "optimized_pnr_tools.json", expected_optimized)
    write_json(suite.expected_dir / "splits.json", {record.id: record.split for record in dataset.records})
    write_json(suite.expected_dir / "meta.json", {
        "seed": seed,
        "variant": variant,
        "tools": len(catalog),
        "queries": len(dataset),
        "keyword_poor_tools": sorted(poor),
        "accepted_rewrites": sorted(p.tool_id for p in proposals if p.accepted),
        "optimizer_rounds": optimizer.rounds_run,
    })
    settings = fixture_settings(config)
    write_atomic(suite.config_path, "".join(f"{key}={settings[key]}\n" for key in settings))
    write_checksums(suite)
    logger.info("fixture '%s' (seed %d) written to %s", variant, seed, suite.root)
    return suite


def _run_all(pipeline, records):
    outcome = {}
    for record in records:
        outcome[record.id] = sorted(pipeline.run(record).tools)
    return outcome


def write_checksums(suite):
    files = sorted(
        path for path in suite.root.rglob("*")
        if path.is_file() and path != suite.checksums_path and "out" not in path.relative_to(suite.root).parts
    )
    lines = [f"{sha256_file(path)}  {path.relative_to(suite.root).as_posix()}\n" for path in files]
    write_atomic(suite.checksums_path, "".join(lines))
    return len(lines)


def verify_checksums(suite):
    """Raise ``FixtureError`` unless every file listed in ``SHA256SUMS`` exists with the listed digest."""
    if not suite.checksums_path.is_file():
        raise FixtureError(f"{suite.root}: no SHA256SUMS")
    problems = []
    for line in suite.checksums_path.read_text(encoding="utf-8").splitlines():
        digest, _, name = line.partition("  ")
        path = suite.root / name
        if not path.is_file():
            problems.append(f"{name} is missing")
        elif sha256_file(path) != digest:
            problems.append(f"{name} differs")
    if problems:
        raise FixtureError(f"{suite.root}: " + "; ".join(problems))
    return suite


# 🔹 Committed suites
def committed_suite(variant, root=None):
    """The checked-in suite for ``variant``, or ``None`` when none has been pinned."""
    directory = Path(root or COMMITTED_ROOT) / variant
    meta_path = directory / "expected" / "meta.json"
    if not (directory / "SHA256SUMS").is_file() or not meta_path.is_file():
        return None
    meta = json.loads(meta_path.read_text(encoding="utf-8"))
    return FixtureSuite(directory, variant, int(meta["seed"]))


def pin_fixture(variant, seed=PINNED_SEED, root=None, config=None):
    """Regenerate the committed suite for ``variant`` in place."""
    directory = Path(root or COMMITTED_ROOT) / variant
    if directory.exists():
        shutil.rmtree(directory)
    return generate_fixture(seed, directory, variant=variant, config=config)
