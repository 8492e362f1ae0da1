"""Tool catalog and query dataset.

Catalog values are immutable snapshots: every mutation returns a new
``ToolCatalog`` with a higher ``version``. The tools file, the queries file and
the description cache are the source of truth; the ORM tables are a mirror
(see ``mirror_catalog``).
"""
import hashlib
import json
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path

from django.db import transaction

from .exceptions import CatalogError, DatasetError
from .models import DescriptionRevision, Tool as ToolRow
from .serializers import CacheEntrySerializer, QueryRecordSerializer, ToolRecordSerializer
from .utils import dumps_canonical, read_jsonl, seeded_rng, write_json, write_jsonl

logger = logging.getLogger(__name__)

SPLITS = ("train", "dev", "test")
SPLIT_RATIOS = (0.70, 0.15, 0.15)


def _flatten_errors(errors):
    if isinstance(errors, dict):
        return "; ".join(f"{name}: {_flatten_errors(detail)}" for name, detail in errors.items())
    if isinstance(errors, list):
        return " ".join(_flatten_errors(detail) for detail in errors if detail)
    return str(errors)


@dataclass(frozen=True)
class Revision:
    round: int
    text: str
    dev_recall: float

    def to_record(self):
        return {"round": self.round, "text": self.text, "dev_recall": self.dev_recall}


@dataclass(frozen=True)
class Tool:
    id: str
    name: str
    category: str
    description: str
    base_description: str
    history: tuple = ()

    def to_record(self):
        record = {
            "id": self.id,
            "name": self.name,
            "category": self.category,
            "description": self.description,
        }
        if self.history or self.base_description != self.description:
            record["base_description"] = self.base_description
            record["history"] = [revision.to_record() for revision in self.history]
        return record


@dataclass(frozen=True)
class ToolCatalog:
    tools: dict = field(default_factory=dict)
    version: int = 0

    def __len__(self):
        return len(self.tools)

    def __contains__(self, tool_id):
        return tool_id in self.tools

    def __iter__(self):
        return (self.tools[tool_id] for tool_id in self.ids())

    def get(self, tool_id):
        try:
            return self.tools[tool_id]
        except KeyError:
            raise CatalogError(f"unknown tool id '{tool_id}'") from None

    def ids(self):
        return sorted(self.tools)

    def descriptions(self):
        return {tool.id: tool.description for tool in self}

    def fingerprint(self):
        digest = hashlib.sha256()
        for tool_id in self.ids():
            digest.update(dumps_canonical([tool_id, self.tools[tool_id].description]).encode("utf-8"))
        return digest.hexdigest()

    def _with_tool(self, tool):
        tools = dict(self.tools)
        tools[tool.id] = tool
        return ToolCatalog(tools=tools, version=self.version + 1)


@dataclass(frozen=True)
class QueryRecord:
    id: str
    text: str
    gold_tool_ids: tuple
    graded_relevance: dict = None
    split: str = ""

    @property
    def gold(self):
        return frozenset(self.gold_tool_ids)

    def grades(self):
        """Graded labels, falling back to grade 1 for every gold tool."""
        if self.graded_relevance:
            return dict(self.graded_relevance)
        return {tool_id: 1 for tool_id in self.gold_tool_ids}


@dataclass(frozen=True)
class QueryDataset:
    records: tuple
    split_seed: int
    split_ratios: tuple = SPLIT_RATIOS

    def __len__(self):
        return len(self.records)

    def split(self, name):
        if name not in SPLITS:
            raise DatasetError(f"unknown split '{name}' (expected one of {', '.join(SPLITS)})")
        return [record for record in self.records if record.split == name]

    @property
    def train(self):
        return self.split("train")

    @property
    def dev(self):
        return self.split("dev")

    @property
    def test(self):
        return self.split("test")

    def get(self, query_id):
        for record in self.records:
            if record.id == query_id:
                return record
        raise DatasetError(f"unknown query id '{query_id}'")


# 🔹 Tools file
def load_catalog(path):
    path = Path(path)
    if not path.is_file():
        raise CatalogError(f"tools file not found: {path}")
    tools = {}
    try:
        for number, record in read_jsonl(path):
            serializer = ToolRecordSerializer(data=record)
            if not serializer.is_valid():
                raise CatalogError(f"{path} line {number}: {_flatten_errors(serializer.errors)}")
            data = serializer.validated_data
            if data["id"] in tools:
                raise CatalogError(f"{path} line {number}: duplicate tool id '{data['id']}'")
            history = tuple(
                Revision(entry["round"], entry["text"], entry["dev_recall"])
                for entry in data.get("history", [])
            )
            if history and history[-1].text != data["description"]:
                raise CatalogError(
                    f"{path} line {number}: description of '{data['id']}' differs from its last revision"
                )
            tools[data["id"]] = Tool(
                id=data["id"],
                name=data["name"],
                category=data["category"],
                description=data["description"],
                base_description=data.get("base_description", data["description"]),
                history=history,
            )
    except ValueError as exc:
        raise CatalogError(f"{path} {exc}") from exc
    version = sum(len(tool.history) for tool in tools.values())
    logger.info("loaded %d tools from %s (version %d)", len(tools), path, version)
    return ToolCatalog(tools=tools, version=version)


def save_catalog(catalog, path):
    write_jsonl(path, [tool.to_record() for tool in catalog])


def apply_description(catalog, tool_id, new_text, round, dev_recall):
    tool = catalog.get(tool_id)
    if not new_text or not new_text.strip():
        raise CatalogError(f"empty description for tool '{tool_id}'")
    revision = Revision(int(round), new_text, float(dev_recall))
    updated = replace(tool, description=new_text, history=tool.history + (revision,))
    return catalog._with_tool(updated)


def preview_description(catalog, tool_id, new_text):
    """Candidate catalog for gate evaluation: new text installed, history untouched."""
    tool = catalog.get(tool_id)
    if not new_text or not new_text.strip():
        raise CatalogError(f"empty description for tool '{tool_id}'")
    return catalog._with_tool(replace(tool, description=new_text))


# 🔹 Queries file
def assign_splits(query_ids, split_seed):
    """Map query id -> split; a pure function of the id set and the seed."""
    ordered = sorted(query_ids)
    n = len(ordered)
    n_train = n * 70 // 100
    n_dev = n * 15 // 100
    permutation = seeded_rng(split_seed).permutation(n)
    splits = {}
    for position, index in enumerate(permutation):
        if position < n_train:
            name = "train"
        elif position < n_train + n_dev:
            name = "dev"
        else:
            name = "test"
        splits[ordered[int(index)]] = name
    return splits


def load_queries(path, catalog, split_seed):
    path = Path(path)
    if not path.is_file():
        raise DatasetError(f"queries file not found: {path}")
    parsed = {}
    try:
        for number, record in read_jsonl(path):
            serializer = QueryRecordSerializer(data=record)
            if not serializer.is_valid():
                raise DatasetError(f"{path} line {number}: {_flatten_errors(serializer.errors)}")
            data = serializer.validated_data
            query_id = data["id"]
            if query_id in parsed:
                raise DatasetError(f"{path} line {number}: duplicate query id '{query_id}'")
            gold = list(dict.fromkeys(data["relevant_tool_ids"]))
            for tool_id in gold + sorted(data.get("graded", {})):
                if tool_id not in catalog:
                    raise DatasetError(f"query '{query_id}' references unknown tool id '{tool_id}'")
            parsed[query_id] = (data["query"], tuple(gold), data.get("graded") or None)
    except ValueError as exc:
        raise DatasetError(f"{path} {exc}") from exc

    splits = assign_splits(parsed, split_seed)
    records = tuple(
        QueryRecord(
            id=query_id,
            text=parsed[query_id][0],
            gold_tool_ids=parsed[query_id][1],
            graded_relevance=parsed[query_id][2],
            split=splits[query_id],
        )
        for query_id in sorted(parsed)
    )
    dataset = QueryDataset(records=records, split_seed=split_seed)
    logger.info(
        "loaded %d queries from %s (train %d, dev %d, test %d, seed %d)",
        len(records), path, len(dataset.train), len(dataset.dev), len(dataset.test), split_seed,
    )
    return dataset


def query_to_record(record):
    payload = {"id": record.id, "query": record.text, "relevant_tool_ids": list(record.gold_tool_ids)}
    if record.graded_relevance:
        payload["graded"] = dict(record.graded_relevance)
    return payload


# 🔹 Description cache
def load_cache(path):
    """tool id -> ``(description, tuple of Revision)``; a missing file is an empty cache."""
    path = Path(path)
    if not path.is_file():
        return {}
    try:
        payload = json.loads(path.read_text(encoding="utf-8"))
    except ValueError as exc:
        raise CatalogError(f"{path}: malformed description cache ({exc})") from exc
    if not isinstance(payload, dict):
        raise CatalogError(f"{path}: description cache must map tool ids to entries")
    entries = {}
    for tool_id in sorted(payload):
        serializer = CacheEntrySerializer(data=payload[tool_id])
        if not serializer.is_valid():
            raise CatalogError(f"{path} entry '{tool_id}': {_flatten_errors(serializer.errors)}")
        data = serializer.validated_data
        history = tuple(
            Revision(entry["round"], entry["text"], entry["dev_recall"]) for entry in data.get("history", [])
        ) or (Revision(data["round"], data["description"], data["dev_recall"]),)
        if history[-1].text != data["description"]:
            raise CatalogError(f"{path} entry '{tool_id}': description differs from its last revision")
        entries[tool_id] = history
    return entries


def overlay_cache(catalog, entries):
    """Replay cached revisions on top of the catalog; each applied revision bumps the version."""
    for tool_id in sorted(entries):
        tool = catalog.get(tool_id)
        lineage = entries[tool_id]
        known = len(tool.history)
        if lineage[:known] != tool.history:
            raise CatalogError(f"cached lineage for '{tool_id}' does not extend the tools file history")
        for revision in lineage[known:]:
            catalog = apply_description(catalog, tool_id, revision.text, revision.round, revision.dev_recall)
    return catalog


def write_cache(path, catalog):
    payload = {}
    for tool in catalog:
        if not tool.history:
            continue
        last = tool.history[-1]
        payload[tool.id] = {
            "description": tool.description,
            "round": last.round,
            "dev_recall": last.dev_recall,
            "history": [revision.to_record() for revision in tool.history],
        }
    write_json(path, payload)
    return len(payload)


# 🔹 ORM mirror
def mirror_catalog(catalog):
    with transaction.atomic():
        for tool in catalog:
            row, _ = ToolRow.objects.update_or_create(
                tool_id=tool.id,
                defaults={
                    "name": tool.name,
                    "category": tool.category,
                    "description": tool.description,
                    "base_description": tool.base_description,
                    "catalog_version": catalog.version,
                },
            )
            for position, revision in enumerate(tool.history):
                DescriptionRevision.objects.update_or_create(
                    tool=row,
                    position=position,
                    defaults={"round": revision.round, "text": revision.text, "dev_recall": revision.dev_recall},
                )
            row.revisions.filter(position__gte=len(tool.history)).delete()
    logger.info("mirrored %d tools (version %d)", len(catalog), catalog.version)
