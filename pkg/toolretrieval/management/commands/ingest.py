from toolretrieval.catalog import load_catalog, mirror_catalog, query_to_record, save_catalog
from toolretrieval.runtime import engine_dataset, output_path
from toolretrieval.utils import write_json, write_jsonl

from ._base import EngineCommand


class Command(EngineCommand):
    help = "Validate the tools and queries files, write normalized copies and the split assignment, mirror the catalog."

    required_paths = ("catalog_path", "queries_path", "output_dir")

    def run(self, config, options):
        catalog = load_catalog(config.catalog_path)
        dataset = engine_dataset(config, catalog)

        save_catalog(catalog, output_path(config, "tools.jsonl"))
        write_jsonl(output_path(config, "queries.jsonl"), [query_to_record(record) for record in dataset.records])
        write_json(output_path(config, "splits.json"), {record.id: record.split for record in dataset.records})
        mirror_catalog(catalog)

        self.say(f"tools: {len(catalog)} (catalog version {catalog.version})")
        self.say(
            f"queries: {len(dataset)} (train {len(dataset.train)}, dev {len(dataset.dev)}, "
            f"test {len(dataset.test)}, split seed {dataset.split_seed})"
        )
