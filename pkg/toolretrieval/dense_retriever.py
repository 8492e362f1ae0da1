"""Embedding providers and the exact dense index over tool descriptions."""
import io
import logging
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
from sklearn.feature_extraction.text import HashingVectorizer

from .exceptions import EmbeddingError, IndexFormatError, StaleIndexError, ToolRetrievalError
from .text_analysis import tokenize
from .transport import JsonEndpoint, TransportFailure
from .utils import write_atomic_bytes

logger = logging.getLogger(__name__)

INDEX_FORMAT = 1


def normalize(vector):
    vector = np.asarray(vector, dtype=np.float64)
    norm = np.linalg.norm(vector)
    if not np.isfinite(norm) or norm == 0.0:
        raise EmbeddingError("cannot normalize a zero or non-finite vector")
    return vector / norm


class EmbeddingProvider:
    provider_id = ""
    dimension = 0

    def embed(self, text):
        raise NotImplementedError

    def embed_many(self, texts):
        return [self.embed(text) for text in texts]

    def close(self):
        pass


class TestEmbedder(EmbeddingProvider):
    """Hashed bag of tokens, L2-normalized. Network-free and deterministic."""

    __test__ = False

    def __init__(self, dimension=2048):
        self.dimension = dimension
        self.provider_id = f"hashing-{dimension}"
        self._vectorizer = HashingVectorizer(
            n_features=dimension,
            tokenizer=tokenize,
            lowercase=False,
            token_pattern=None,
            alternate_sign=False,
            norm="l2",
        )

    def embed(self, text):
        if not tokenize(text):
            raise EmbeddingError("text has no tokens")
        return self._vectorizer.transform([text]).toarray()[0]


class RemoteEmbedder(EmbeddingProvider):
    """OpenAI-style embeddings endpoint: ``{model, input}`` -> ``{data: [{embedding}]}``."""

    def __init__(self, url, model, dimension, token="", timeout=45.0, max_inflight=4, transport=None, **kwargs):
        self.model = model
        self.dimension = dimension
        self.provider_id = f"remote-{model}"
        self._endpoint = JsonEndpoint(url, token=token, timeout=timeout, max_inflight=max_inflight,
                                      transport=transport, **kwargs)

    def embed(self, text):
        return self.embed_many([text])[0]

    def embed_many(self, texts):
        try:
            payload = self._endpoint.post({"model": self.model, "input": list(texts)})
        except TransportFailure as exc:
            raise EmbeddingError(str(exc)) from exc
        try:
            rows = sorted(payload["data"], key=lambda row: row.get("index", 0))
            vectors = [np.asarray(row["embedding"], dtype=np.float64) for row in rows]
        except (KeyError, TypeError, ValueError) as exc:
            raise EmbeddingError(f"unexpected embedding response: {exc}") from exc
        if len(vectors) != len(texts):
            raise EmbeddingError(f"asked for {len(texts)} embeddings, received {len(vectors)}")
        for vector in vectors:
            if vector.shape != (self.dimension,):
                raise EmbeddingError(f"expected dimension {self.dimension}, received {vector.shape[0]}")
        return [normalize(vector) for vector in vectors]

    def close(self):
        self._endpoint.close()


def make_embedder(config):
    if config.embedder == "test":
        return TestEmbedder(config.embedding_dimension)
    return RemoteEmbedder(
        config.embedding_url,
        config.embedding_model,
        config.embedding_dimension,
        token=config.embedding_api_token,
        timeout=config.llm_timeout,
        max_inflight=config.max_inflight,
    )


# 🔹 Index
@dataclass(frozen=True)
class DenseIndex:
    ids: tuple
    matrix: np.ndarray
    catalog_version: int
    catalog_fingerprint: str
    provider_id: str

    def __len__(self):
        return len(self.ids)

    @property
    def dimension(self):
        return self.matrix.shape[1]


def _embed_tool(provider, tool):
    try:
        vector = provider.embed(tool.description)
    except (ToolRetrievalError, TransportFailure) as exc:
        raise EmbeddingError(f"embedding failed for tool '{tool.id}': {exc}") from exc
    if len(vector) != provider.dimension:
        raise EmbeddingError(f"embedding failed for tool '{tool.id}': dimension {len(vector)} != {provider.dimension}")
    return vector


def build_index(catalog, provider):
    ids = tuple(catalog.ids())
    matrix = np.zeros((len(ids), provider.dimension))
    for row, tool in enumerate(catalog):
        matrix[row] = _embed_tool(provider, tool)
    logger.debug("built dense index over %d tools (version %d)", len(ids), catalog.version)
    return DenseIndex(ids, matrix, catalog.version, catalog.fingerprint(), provider.provider_id)


def refresh_index(index, catalog, provider, tool_ids):
    """Re-embed only ``tool_ids`` and stamp the result with ``catalog``."""
    if set(index.ids) != set(catalog.ids()):
        raise StaleIndexError("index and catalog hold different tool ids; rebuild the index")
    matrix = index.matrix.copy()
    for tool_id in sorted(set(tool_ids)):
        matrix[index.ids.index(tool_id)] = _embed_tool(provider, catalog.get(tool_id))
    return replace(index, matrix=matrix, catalog_version=catalog.version,
                   catalog_fingerprint=catalog.fingerprint())


def restamp_index(index, catalog):
    return replace(index, catalog_version=catalog.version, catalog_fingerprint=catalog.fingerprint())


def check_fresh(index, catalog):
    if index.catalog_version != catalog.version or index.catalog_fingerprint != catalog.fingerprint():
        raise StaleIndexError(
            f"index was built for catalog version {index.catalog_version} but the catalog is at version "
            f"{catalog.version}; run 'manage.py index' to rebuild it"
        )


def project(matrix, head):
    """Apply the projection head and re-normalize rows."""
    projected = np.atleast_2d(matrix) @ head.weights.T
    norms = np.linalg.norm(projected, axis=1, keepdims=True)
    norms[norms == 0.0] = 1.0
    return projected / norms


def dense_topk(index, query_vec, k, head=None):
    query_vec = np.asarray(query_vec, dtype=np.float64)
    if query_vec.shape != (index.dimension,):
        raise EmbeddingError(f"query dimension {query_vec.shape[-1]} does not match index dimension {index.dimension}")
    matrix = index.matrix
    if head is not None:
        if head.dimension != index.dimension:
            raise EmbeddingError(f"projection head dimension {head.dimension} does not match index {index.dimension}")
        matrix = project(matrix, head)
        query_vec = project(query_vec, head)[0]
    scores = matrix @ query_vec
    # ids are stored ascending, so row position breaks ties
    order = np.lexsort((np.arange(len(scores)), -scores))[:k]
    return [(index.ids[i], float(scores[i])) for i in order]


def save_index(index, path):
    buffer = io.BytesIO()
    np.savez(
        buffer,
        format=np.array(INDEX_FORMAT),
        ids=np.array(index.ids, dtype=str),
        matrix=index.matrix,
        catalog_version=np.array(index.catalog_version),
        catalog_fingerprint=np.array(index.catalog_fingerprint),
        provider_id=np.array(index.provider_id),
    )
    write_atomic_bytes(path, buffer.getvalue())


def load_index(path):
    path = Path(path)
    if not path.is_file():
        raise StaleIndexError(f"no dense index at {path}; run 'manage.py index' first")
    try:
        with np.load(path, allow_pickle=False) as data:
            if int(data["format"]) != INDEX_FORMAT:
                raise IndexFormatError(f"{path}: unsupported index format {int(data['format'])}")
            index = DenseIndex(
                ids=tuple(str(tool_id) for tool_id in data["ids"]),
                matrix=np.array(data["matrix"], dtype=np.float64),
                catalog_version=int(data["catalog_version"]),
                catalog_fingerprint=str(data["catalog_fingerprint"]),
                provider_id=str(data["provider_id"]),
            )
    except (KeyError, ValueError, OSError) as exc:
        raise IndexFormatError(f"{path}: unreadable dense index ({exc})") from exc
    if index.matrix.ndim != 2 or index.matrix.shape[0] != len(index.ids):
        raise IndexFormatError(f"{path}: matrix shape {index.matrix.shape} does not match {len(index.ids)} ids")
    return index
