from toolretrieval.dense_retriever import make_embedder
from toolretrieval.runtime import engine_catalog, engine_dataset
from toolretrieval.trainer import ProjectionHead, build_trainset, save_head, train

from ._base import EngineCommand


class Command(EngineCommand):
    help = "Fit the contrastive projection head on the training queries and write it to head_path."

    required_paths = ("catalog_path", "queries_path", "head_path")
    overrides = {"steps": "steps", "learning_rate": "learning_rate", "negatives": "negatives"}

    def add_engine_arguments(self, parser):
        parser.add_argument("--steps", type=int)
        parser.add_argument("--learning-rate", type=float, dest="learning_rate")
        parser.add_argument("--negatives", type=int)
        parser.add_argument("--no-cache", action="store_true", help="train on the tools file descriptions")

    def run(self, config, options):
        catalog = engine_catalog(config, use_cache=not options["no_cache"])
        dataset = engine_dataset(config, catalog)
        embedder = self.closing(make_embedder(config))
        trainset = build_trainset(
            dataset.train, catalog, embedder, config.negatives, config.train_batch_size, config.train_seed,
        )
        head = train(
            ProjectionHead.identity(embedder.dimension),
            trainset,
            steps=config.steps,
            learning_rate=config.learning_rate,
            seed=config.train_seed,
            share_in_batch=config.share_in_batch,
        )
        save_head(head, config.head_path)
        if head.loss_trajectory:
            self.say(f"loss: {head.loss_trajectory[0]:.6f} -> {head.loss_trajectory[-1]:.6f} "
                     f"over {len(head.loss_trajectory)} steps")
        self.say(f"head: {config.head_path} ({head.dimension} x {head.dimension})")
