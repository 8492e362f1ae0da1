from toolretrieval.exceptions import FixtureError
from toolretrieval.fixtures import COMMITTED_ROOT, PINNED_SEED, VARIANTS, generate_fixture, pin_fixture

from ._base import EngineCommand


class Command(EngineCommand):
    help = "Generate a synthetic suite (tools, queries, scripted transcripts, expected outputs) into a directory."

    def add_engine_arguments(self, parser):
        parser.add_argument("--seed", type=int, default=42)
        parser.add_argument("--variant", choices=VARIANTS, default="standard")
        target = parser.add_mutually_exclusive_group(required=True)
        target.add_argument("--out", help="suite directory")
        target.add_argument("--pin", action="store_true",
                            help=f"regenerate the committed suites under {COMMITTED_ROOT} (seed {PINNED_SEED})")

    def run(self, config, options):
        if options["pin"]:
            if options["seed"] != PINNED_SEED:
                raise FixtureError(f"committed suites use seed {PINNED_SEED}, not {options['seed']}")
            for variant in VARIANTS:
                suite = pin_fixture(variant, config=config)
                self.say(f"fixture '{suite.variant}' (seed {suite.seed}) pinned at {suite.root}")
            return
        suite = generate_fixture(options["seed"], options["out"], variant=options["variant"], config=config)
        self.say(f"fixture '{suite.variant}' (seed {suite.seed}) written to {suite.root}")
        self.say(f"replay with: --config {suite.config_path}")
