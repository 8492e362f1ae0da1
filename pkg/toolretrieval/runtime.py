"""Wiring shared by the management commands: catalog with cache overlay, dataset, providers, pipeline."""
import logging
from pathlib import Path

from .catalog import load_cache, load_catalog, load_queries, overlay_cache
from .dense_retriever import build_index, make_embedder
from .llm_gateway import make_llm
from .retrieval_pipeline import OneShotRetriever, PipelineConfig, PlanAndRetrieve
from .trainer import load_head

logger = logging.getLogger(__name__)


def engine_catalog(config, use_cache=True):
    """Tools file, then every cached revision replayed on top unless ``use_cache`` is off."""
    config.require("catalog_path")
    catalog = load_catalog(config.catalog_path)
    if use_cache and config.cache_path:
        entries = load_cache(config.cache_path)
        if entries:
            catalog = overlay_cache(catalog, entries)
            logger.info("description cache %s applied: catalog version %d", config.cache_path, catalog.version)
    return catalog


def engine_dataset(config, catalog):
    config.require("queries_path")
    return load_queries(config.queries_path, catalog, config.split_seed)


def engine_head(path):
    return load_head(path) if path else None


def engine_pipeline(config, catalog, index=None, embedder=None, llm=None, head=None):
    """Plan-and-retrieve over ``catalog``; the index is built in memory when none is given."""
    embedder = embedder or make_embedder(config)
    if index is None:
        index = build_index(catalog, embedder)
    return PlanAndRetrieve(
        catalog, index, embedder, llm or make_llm(config), PipelineConfig.from_engine(config), head=head,
    )


def engine_system(method, config, catalog, head=None):
    if method == "pnr":
        return engine_pipeline(config, catalog, head=head)
    if method == "dense":
        embedder = make_embedder(config)
        return OneShotRetriever("dense", catalog, build_index(catalog, embedder), embedder, head=head,
                                k=config.rerank_top)
    return OneShotRetriever("bm25", catalog, k=config.rerank_top)


def output_path(config, filename):
    config.require("output_dir")
    return Path(config.output_dir) / filename
