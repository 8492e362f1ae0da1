from toolretrieval.dense_retriever import build_index, make_embedder, save_index
from toolretrieval.runtime import engine_catalog

from ._base import EngineCommand


class Command(EngineCommand):
    help = "Embed every tool description and persist the dense index, stamped with the catalog version."

    required_paths = ("catalog_path", "index_path")

    def add_engine_arguments(self, parser):
        parser.add_argument("--no-cache", action="store_true", help="index the tools file without cached rewrites")

    def run(self, config, options):
        catalog = engine_catalog(config, use_cache=not options["no_cache"])
        index = build_index(catalog, self.closing(make_embedder(config)))
        save_index(index, config.index_path)
        self.say(f"indexed {len(index)} tools, catalog version {index.catalog_version}, "
                 f"provider {index.provider_id}")
