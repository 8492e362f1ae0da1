"""Engine configuration.

Precedence, lowest first: ``settings.TOOLRETRIEVAL`` defaults, a flat
``KEY=VALUE`` file, ``TOOLRETRIEVAL_<KEY>`` environment variables, explicit
overrides (command-line flags). API tokens come from the environment only.
"""
import logging
import os
from dataclasses import dataclass, fields
from pathlib import Path

from django.conf import settings
from dotenv import dotenv_values

from .exceptions import ConfigurationError
from .serializers import EngineConfigSerializer

logger = logging.getLogger(__name__)

ENV_PREFIX = "TOOLRETRIEVAL_"
SECRET_KEYS = ("LLM_API_TOKEN", "EMBEDDING_API_TOKEN")
PATH_KEYS = (
    "catalog_path", "queries_path", "cache_path", "transcripts_path",
    "head_path", "index_path", "output_dir",
)


@dataclass(frozen=True)
class EngineConfig:
    catalog_path: str
    queries_path: str
    cache_path: str
    transcripts_path: str
    head_path: str
    index_path: str
    output_dir: str

    llm_provider: str
    llm_url: str
    llm_model: str
    llm_timeout: float
    llm_temperature: float
    llm_max_tokens: int
    transcript_strict: bool
    embedder: str
    embedding_url: str
    embedding_model: str
    embedding_dimension: int
    max_inflight: int

    pool_size: int
    rerank_top: int
    max_steps: int
    num_hypotheses: int
    lm_order: int
    include_retrieved: bool
    plan_seed: int

    failure_threshold: float
    max_rounds: int
    failure_batch_cap: int
    full_rebuild: bool

    negatives: int
    train_batch_size: int
    learning_rate: float
    steps: int
    share_in_batch: bool
    train_seed: int

    split_seed: int
    sample_size: int
    eval_seed: int
    workers: int
    debug_checks: bool

    def require(self, *names):
        missing = [name for name in names if not getattr(self, name)]
        if missing:
            raise ConfigurationError("missing required setting: " + ", ".join(missing))
        return self

    def path(self, name):
        value = getattr(self, name)
        return Path(value) if value else None

    @property
    def llm_api_token(self):
        return os.environ.get(ENV_PREFIX + "LLM_API_TOKEN", "")

    @property
    def embedding_api_token(self):
        return os.environ.get(ENV_PREFIX + "EMBEDDING_API_TOKEN", "")

    def echo(self):
        """Non-secret knobs, for report headers."""
        return {f.name: getattr(self, f.name) for f in fields(self) if f.name not in PATH_KEYS}


def _read_config_file(path):
    path = Path(path)
    if not path.is_file():
        raise ConfigurationError(f"config file not found: {path}")
    values = {}
    for raw_key, value in dotenv_values(path).items():
        key = raw_key.upper()
        if key.startswith(ENV_PREFIX):
            key = key[len(ENV_PREFIX):]
        if key in SECRET_KEYS:
            raise ConfigurationError(f"{raw_key} must be set in the environment, not in {path}")
        if value is None:
            continue
        if key.lower() in PATH_KEYS and value and not Path(value).is_absolute():
            value = str((path.parent / value).resolve())
        values[key] = value
    return values


def load_config(config_file=None, overrides=None):
    merged = {key.upper(): value for key, value in settings.TOOLRETRIEVAL.items()}

    config_file = config_file or os.environ.get(ENV_PREFIX + "CONFIG")
    if config_file:
        merged.update(_read_config_file(config_file))

    for key in list(merged):
        env_value = os.environ.get(ENV_PREFIX + key)
        if env_value is not None:
            merged[key] = env_value

    for key, value in (overrides or {}).items():
        if value is not None:
            merged[key.upper()] = value

    data = {key.lower(): value for key, value in merged.items()}
    serializer = EngineConfigSerializer(data=data)
    if not serializer.is_valid():
        problems = "; ".join(
            f"{name}: {' '.join(str(m) for m in messages)}"
            for name, messages in sorted(serializer.errors.items())
        )
        raise ConfigurationError(problems)
    config = EngineConfig(**serializer.validated_data)
    logger.debug("engine config resolved (file=%s)", config_file or "-")
    return config
