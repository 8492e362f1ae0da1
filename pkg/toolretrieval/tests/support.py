import shutil
import tempfile
from pathlib import Path

from toolretrieval.catalog import QueryRecord, Tool, ToolCatalog
from toolretrieval.conf import load_config
from toolretrieval.fixtures import committed_suite, generate_fixture, verify_checksums
from toolretrieval.llm_gateway import LlmProvider
from toolretrieval.utils import write_jsonl

_suites = {}


class TempDirMixin:
    def make_tempdir(self):
        tmp = tempfile.TemporaryDirectory()
        self.addCleanup(tmp.cleanup)
        return Path(tmp.name)


def make_catalog(rows, version=0):
    """``rows`` is a list of ``(id, name, description)``."""
    tools = {
        tool_id: Tool(tool_id, name, "general", description, description)
        for tool_id, name, description in rows
    }
    return ToolCatalog(tools=tools, version=version)


def make_query(query_id, text, gold, split="train", graded=None):
    return QueryRecord(query_id, text, tuple(gold), graded, split)


def write_tools(path, rows):
    write_jsonl(path, rows)
    return path


class FunctionProvider(LlmProvider):
    """Answers through ``respond(template_id, variables)``; keeps every call for assertions."""

    def __init__(self, respond):
        self.respond = respond
        self.calls = []

    def complete(self, template_id, prompt, variables, params):
        self.calls.append((template_id, dict(variables)))
        return self.respond(template_id, variables)


def fixture_suite(variant="standard", seed=42):
    """The committed suite when one is checked in, otherwise one generated per test process.

    Either way it is shared read-only; copy it before writing into it.
    """
    key = (variant, seed)
    if key not in _suites:
        suite = committed_suite(variant)
        if suite is not None and suite.seed == seed:
            _suites[key] = (None, verify_checksums(suite))
        else:
            holder = tempfile.TemporaryDirectory(prefix=f"fixture-{variant}-")
            suite = generate_fixture(seed, Path(holder.name) / "suite", variant=variant, config=load_config())
            _suites[key] = (holder, suite)
    return _suites[key][1]


def copy_suite(suite, target):
    destination = Path(target) / "suite"
    shutil.copytree(suite.root, destination, ignore=shutil.ignore_patterns("out"))
    return destination
