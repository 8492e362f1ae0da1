from contextlib import ExitStack, closing

from django.core.management.base import BaseCommand, CommandError
from django.db import DatabaseError

from toolretrieval.conf import load_config
from toolretrieval.exceptions import ToolRetrievalError


class EngineCommand(BaseCommand):
    """Loads the engine configuration and turns engine errors into one-line ``<code>: <detail>`` failures."""

    required_paths = ()
    # flag dest -> config key
    overrides = {}

    def add_arguments(self, parser):
        parser.add_argument("--config", help="flat KEY=VALUE configuration file (default: $TOOLRETRIEVAL_CONFIG)")
        self.add_engine_arguments(parser)

    def add_engine_arguments(self, parser):
        pass

    def handle(self, *args, **options):
        try:
            overrides = {key: options.get(dest) for dest, key in self.overrides.items()}
            config = load_config(options.get("config"), overrides)
            config.require(*self.required_paths)
            with ExitStack() as self._resources:
                self.run(config, options)
        except ToolRetrievalError as exc:
            raise CommandError(f"{exc.code}: {exc}") from exc
        except DatabaseError as exc:
            raise CommandError(f"database: {exc} (run 'manage.py migrate' first)") from exc

    def closing(self, resource):
        """Close ``resource`` (a provider, pipeline or retriever) when the command finishes."""
        return self._resources.enter_context(closing(resource))

    def run(self, config, options):
        raise NotImplementedError

    def say(self, line=""):
        self.stdout.write(line)
