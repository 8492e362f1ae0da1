from toolretrieval.catalog import mirror_catalog, write_cache
from toolretrieval.eg_optimizer import EditAndGround, EgConfig
from toolretrieval.retrieval_pipeline import PipelineConfig
from toolretrieval.runtime import engine_catalog, engine_dataset, engine_pipeline, output_path
from toolretrieval.utils import write_jsonl

from ._base import EngineCommand


class Command(EngineCommand):
    help = "Run edit-and-ground over the training queries; write the description cache and the round report."

    required_paths = ("catalog_path", "queries_path", "cache_path", "output_dir")
    overrides = {"max_rounds": "max_rounds", "workers": "workers", "failure_threshold": "failure_threshold"}

    def add_engine_arguments(self, parser):
        parser.add_argument("--max-rounds", type=int, dest="max_rounds")
        parser.add_argument("--failure-threshold", type=float, dest="failure_threshold")
        parser.add_argument("--workers", type=int)
        parser.add_argument("--no-cache", action="store_true", help="start from the tools file, not the cache")

    def run(self, config, options):
        catalog = engine_catalog(config, use_cache=not options["no_cache"])
        dataset = engine_dataset(config, catalog)
        optimizer = EditAndGround(
            self.closing(engine_pipeline(config, catalog)),
            dataset.train,
            dataset.dev,
            EgConfig.from_engine(config),
            cache_path=config.cache_path,
            params=PipelineConfig.from_engine(config).decode,
        )
        optimized, proposals = optimizer.run()

        write_cache(config.cache_path, optimized)
        report_path = output_path(config, "eg_report.jsonl")
        write_jsonl(report_path, optimizer.report_records())
        mirror_catalog(optimized)

        accepted = sorted({proposal.tool_id for proposal in proposals if proposal.accepted})
        self.say(f"rounds: {optimizer.rounds_run}")
        self.say(f"proposals: {len(proposals)} (accepted {len(accepted)}: {', '.join(accepted) or 'none'})")
        self.say(f"catalog version: {optimized.version}")
        self.say(f"report: {report_path}")
