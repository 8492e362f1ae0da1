from toolretrieval.evaluator import evaluate_system, record_run, summary_table, write_report
from toolretrieval.runtime import engine_catalog, engine_dataset, engine_head, engine_system, output_path

from ._base import EngineCommand

METHODS = ("pnr", "dense", "bm25")


class Command(EngineCommand):
    help = "Evaluate a retrieval method on one split: macro recall and NDCG, written as a JSON lines report."

    required_paths = ("catalog_path", "queries_path", "output_dir")
    overrides = {"sample": "sample_size", "seed": "eval_seed", "workers": "workers"}

    def add_engine_arguments(self, parser):
        parser.add_argument("--method", choices=METHODS, default="pnr")
        parser.add_argument("--split", choices=("train", "dev", "test"), default="test")
        parser.add_argument("--sample", type=int, help="number of queries to sample from the split")
        parser.add_argument("--seed", type=int, help="sampling seed")
        parser.add_argument("--workers", type=int)
        parser.add_argument("--no-cache", action="store_true", help="evaluate the tools file descriptions")
        parser.add_argument("--head", help="projection head (.npy) applied to query and tool vectors")

    def run(self, config, options):
        method, split = options["method"], options["split"]
        catalog = engine_catalog(config, use_cache=not options["no_cache"])
        records = engine_dataset(config, catalog).split(split)
        system = self.closing(engine_system(method, config, catalog, head=engine_head(options["head"])))

        run_config = {
            **config.echo(),
            "method": method,
            "split": split,
            "catalog_version": catalog.version,
            "description_cache": not options["no_cache"],
            "head": bool(options["head"]),
        }
        report = evaluate_system(records, system, config.sample_size, config.eval_seed, config.workers, run_config)
        report_path = output_path(config, f"eval_{method}_{split}.jsonl")
        write_report(report_path, report)
        record_run(report, method, split, config.sample_size, config.eval_seed, catalog.version, report_path)

        self.say(summary_table(report, f"{method} on {split} (catalog version {catalog.version})"))
        self.say(f"report: {report_path}")
