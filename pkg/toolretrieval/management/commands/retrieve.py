from toolretrieval.dense_retriever import load_index
from toolretrieval.retrieval_pipeline import write_trace
from toolretrieval.runtime import engine_catalog, engine_dataset, engine_head, engine_pipeline

from ._base import EngineCommand


class Command(EngineCommand):
    help = "Run plan-and-retrieve for one query against the stored index and print the final tool set."

    required_paths = ("catalog_path", "queries_path", "index_path")

    def add_engine_arguments(self, parser):
        parser.add_argument("--query-id", required=True)
        parser.add_argument("--trace", help="write provider calls and per-step results as JSON lines")
        parser.add_argument("--no-cache", action="store_true", help="ignore cached description rewrites")
        parser.add_argument("--head", help="projection head (.npy) applied to query and tool vectors")

    def run(self, config, options):
        catalog = engine_catalog(config, use_cache=not options["no_cache"])
        record = engine_dataset(config, catalog).get(options["query_id"])
        # a stale stamp is refused inside the pipeline
        index = load_index(config.index_path)
        pipeline = self.closing(engine_pipeline(config, catalog, index=index, head=engine_head(options["head"])))
        result = pipeline.run(record)

        for step in result.steps:
            chosen = ", ".join(step.shortlist.tool_ids) or "(none)"
            self.say(f"# step {step.sub_query.step_index}: {step.sub_query.text} -> {chosen}")
        for tool_id in sorted(result.tools):
            self.say(tool_id)

        if options["trace"]:
            write_trace(options["trace"], [result])
