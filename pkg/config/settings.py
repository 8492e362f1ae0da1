"""
Django settings for the tool retrieval engine.

Only the pieces the engine uses are configured: the ORM mirror, prompt
templates, logging and the engine defaults in ``TOOLRETRIEVAL``. Engine knobs
are resolved at runtime by ``toolretrieval.conf`` (defaults below, then the
flat config file, then ``TOOLRETRIEVAL_*`` environment variables, then flags).
"""

from pathlib import Path
import os

import dj_database_url
from dotenv import load_dotenv

load_dotenv()
ENV = os.getenv('ENV', 'local')
# Build paths inside the project like this: BASE_DIR / 'subdir'.
BASE_DIR = Path(__file__).resolve().parent.parent

SECRET_KEY = os.getenv("SECRET_KEY", "toolretrieval-local-only")

DEBUG = os.environ.get('DEBUG', 'True') == 'True'

ALLOWED_HOSTS = []

INSTALLED_APPS = [
    'django.contrib.contenttypes',
    'rest_framework',
    'toolretrieval',
]

TEMPLATES = [
    {
        'BACKEND': 'django.template.backends.django.DjangoTemplates',
        'DIRS': [],
        'APP_DIRS': True,
        'OPTIONS': {
            # prompts are plain text, never HTML
            'autoescape': False,
            'context_processors': [],
        },
    },
]


# Database
# The mirror tables written by ingest, optimize and eval; SQLITE_PATH moves the
# local file next to the engine outputs.

if ENV == "local":
    DATABASES = {
        'default': {
            'ENGINE': 'django.db.backends.sqlite3',
            'NAME': os.getenv('SQLITE_PATH', BASE_DIR / 'db.sqlite3'),
        }
    }

if ENV == "production":
    DATABASES = {
        'default': dj_database_url.config(
            env="DATABASE_URL",
            conn_max_age=60,
        )
    }


# Logging

LOG_LEVEL = os.getenv("TOOLRETRIEVAL_LOG_LEVEL", "INFO")

LOGGING = {
    'version': 1,
    'disable_existing_loggers': False,
    'formatters': {
        'verbose': {
            'format': '{asctime} {levelname} {name}: {message}',
            'style': '{',
        },
    },
    'handlers': {
        'console': {
            'class': 'logging.StreamHandler',
            'stream': 'ext://sys.stderr',
            'formatter': 'verbose',
        },
    },
    'loggers': {
        'toolretrieval': {
            'handlers': ['console'],
            'level': LOG_LEVEL,
            'propagate': False,
        },
    },
}


LANGUAGE_CODE = 'en-us'

TIME_ZONE = 'UTC'

USE_I18N = False

USE_TZ = True

DEFAULT_AUTO_FIELD = 'django.db.models.BigAutoField'


# Engine defaults (see toolretrieval/conf.py for precedence and bounds)

TOOLRETRIEVAL = {
    # paths
    "CATALOG_PATH": "",
    "QUERIES_PATH": "",
    "CACHE_PATH": "",
    "TRANSCRIPTS_PATH": "",
    "HEAD_PATH": "",
    "INDEX_PATH": "",
    "OUTPUT_DIR": "",
    # providers
    "LLM_PROVIDER": "scripted",  # remote | scripted
    "LLM_URL": "https://api.openai.com/v1/chat/completions",
    "LLM_MODEL": "gpt-4o-mini",
    "LLM_TIMEOUT": 45.0,
    "LLM_TEMPERATURE": 0.0,
    "LLM_MAX_TOKENS": 512,
    "TRANSCRIPT_STRICT": True,
    "EMBEDDER": "test",  # remote | test
    "EMBEDDING_URL": "https://api.openai.com/v1/embeddings",
    "EMBEDDING_MODEL": "text-embedding-3-small",
    "EMBEDDING_DIMENSION": 2048,
    "MAX_INFLIGHT": 4,
    # plan and retrieve
    "POOL_SIZE": 20,
    "RERANK_TOP": 5,
    "MAX_STEPS": 6,
    "NUM_HYPOTHESES": 4,
    "LM_ORDER": 2,
    "INCLUDE_RETRIEVED": False,
    "PLAN_SEED": 13,
    # edit and ground
    "FAILURE_THRESHOLD": 0.5,
    "MAX_ROUNDS": 5,
    "FAILURE_BATCH_CAP": 8,
    "FULL_REBUILD": False,
    # training
    "NEGATIVES": 4,
    "TRAIN_BATCH_SIZE": 16,
    "LEARNING_RATE": 0.05,
    "STEPS": 500,
    "SHARE_IN_BATCH": False,
    "TRAIN_SEED": 7,
    # data and evaluation
    "SPLIT_SEED": 7,
    "SAMPLE_SIZE": 500,
    "EVAL_SEED": 11,
    "WORKERS": 1,
    "DEBUG_CHECKS": True,
}
