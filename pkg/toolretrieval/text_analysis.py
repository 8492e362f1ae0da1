"""Tokenizer, TF-IDF vectors, k-means and a BM25 index.

Everything here is deterministic and immutable once fitted or built.
"""
import logging
import math
import re
import warnings
from collections import Counter
from dataclasses import dataclass

import numpy as np
from sklearn.cluster import KMeans
from sklearn.exceptions import ConvergenceWarning
from sklearn.feature_extraction.text import TfidfVectorizer

from .exceptions import TextAnalysisError
from .utils import seeded_rng

logger = logging.getLogger(__name__)

_TOKEN = re.compile(r"[^\W_]+")

BM25_K1 = 1.2
BM25_B = 0.75
KMEANS_MAX_ITER = 100


def tokenize(text):
    return _TOKEN.findall(text.lower()) if text else []


# 🔹 TF-IDF
@dataclass(frozen=True)
class SparseVector:
    indices: tuple
    weights: tuple

    @property
    def norm(self):
        return math.sqrt(sum(w * w for w in self.weights))


@dataclass(frozen=True)
class TfIdfModel:
    vectorizer: TfidfVectorizer
    fitted_corpus_size: int

    @property
    def vocabulary(self):
        return self.vectorizer.vocabulary_

    @property
    def idf(self):
        """Token -> idf weight, ``ln((1+N)/(1+df)) + 1``."""
        weights = self.vectorizer.idf_
        return {token: float(weights[column]) for token, column in self.vocabulary.items()}

    def matrix(self, texts):
        return self.vectorizer.transform(texts).toarray()


def tfidf_fit(corpus):
    corpus = list(corpus)
    if not corpus:
        raise TextAnalysisError("cannot fit TF-IDF on an empty corpus")
    vectorizer = TfidfVectorizer(
        tokenizer=tokenize,
        lowercase=False,
        token_pattern=None,
        smooth_idf=True,
        sublinear_tf=False,
        norm="l2",
    )
    try:
        vectorizer.fit(corpus)
    except ValueError as exc:
        # raised for a corpus without a single token
        raise TextAnalysisError(f"cannot fit TF-IDF: {exc}") from exc
    return TfIdfModel(vectorizer=vectorizer, fitted_corpus_size=len(corpus))


def tfidf_transform(model, text):
    row = model.vectorizer.transform([text]).tocsr()
    row.sort_indices()
    return SparseVector(
        indices=tuple(int(i) for i in row.indices),
        weights=tuple(float(w) for w in row.data),
    )


# 🔹 K-means
@dataclass(frozen=True)
class ClusterAssignment:
    labels: tuple
    centroids: np.ndarray
    seed: int
    inertia: float
    iterations: int


def farthest_point_init(points, k, seed):
    """First center drawn with the seed; each next one is the point farthest from the chosen set."""
    rng = seeded_rng(seed)
    chosen = [int(rng.integers(len(points)))]
    nearest = ((points - points[chosen[0]]) ** 2).sum(axis=1)
    while len(chosen) < k:
        index = int(np.argmax(nearest))
        chosen.append(index)
        nearest = np.minimum(nearest, ((points - points[index]) ** 2).sum(axis=1))
    return points[chosen].copy()


def kmeans(vectors, k, seed, max_iter=KMEANS_MAX_ITER):
    points = np.asarray(vectors, dtype=np.float64)
    if points.ndim != 2 or len(points) == 0:
        raise TextAnalysisError("k-means needs a non-empty list of equal-length vectors")
    if not 1 <= k <= len(points):
        raise TextAnalysisError(f"k must lie in [1, {len(points)}], got {k}")

    model = KMeans(
        n_clusters=k,
        init=farthest_point_init(points, k, seed),
        n_init=1,
        max_iter=max_iter,
        tol=0.0,
        algorithm="lloyd",
        random_state=seed,
    )
    with warnings.catch_warnings():
        # duplicate points leave fewer distinct clusters than k
        warnings.simplefilter("ignore", ConvergenceWarning)
        model.fit(points)
    return ClusterAssignment(
        labels=tuple(int(label) for label in model.labels_),
        centroids=model.cluster_centers_,
        seed=seed,
        inertia=float(model.inertia_),
        iterations=int(model.n_iter_),
    )


# 🔹 BM25
@dataclass(frozen=True)
class Bm25Index:
    postings: dict
    doc_lengths: dict
    avg_doc_length: float
    k1: float = BM25_K1
    b: float = BM25_B

    @property
    def size(self):
        return len(self.doc_lengths)

    def idf(self, token):
        df = len(self.postings.get(token, ()))
        n = self.size
        return math.log(1.0 + (n - df + 0.5) / (df + 0.5))


def build_bm25(documents, k1=BM25_K1, b=BM25_B):
    """``documents`` maps doc id -> text."""
    postings = {}
    doc_lengths = {}
    for doc_id in sorted(documents):
        tokens = tokenize(documents[doc_id])
        doc_lengths[doc_id] = len(tokens)
        for token, tf in sorted(Counter(tokens).items()):
            postings.setdefault(token, []).append((doc_id, tf))
    avg = sum(doc_lengths.values()) / len(doc_lengths) if doc_lengths else 0.0
    return Bm25Index(
        postings={token: tuple(entries) for token, entries in postings.items()},
        doc_lengths=doc_lengths,
        avg_doc_length=avg,
        k1=k1,
        b=b,
    )


def bm25_topk(index, query, k):
    scores = {}
    for token in tokenize(query):
        entries = index.postings.get(token)
        if not entries:
            continue
        idf = index.idf(token)
        for doc_id, tf in entries:
            length_norm = 1.0 - index.b + index.b * index.doc_lengths[doc_id] / index.avg_doc_length
            scores[doc_id] = scores.get(doc_id, 0.0) + idf * tf * (index.k1 + 1.0) / (tf + index.k1 * length_norm)
    ranked = sorted(scores.items(), key=lambda item: (-item[1], item[0]))
    return ranked[:k]
