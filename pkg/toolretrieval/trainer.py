"""Contrastive fine-tuning of a square projection head over frozen embeddings.

Similarity is ``s(q, d) = (W q) . (W d)``. For each item the positive competes
with its explicit negatives (and, when ``share_in_batch`` is on, with the other
items' positives) under a softmax cross-entropy. The gradient is analytic:
``dL/dW = W (A + A^T) / B`` with ``A = sum_j q_j (sum_k c_jk d_jk)^T`` and
``c_j = softmax(s_j) - e_0``.
"""
import io
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import logsumexp, softmax

from .exceptions import IndexFormatError, TrainingError
from .utils import seeded_rng, write_atomic_bytes

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ProjectionHead:
    weights: np.ndarray
    loss_trajectory: tuple = field(default=(), compare=False)

    @classmethod
    def identity(cls, dimension):
        return cls(np.eye(dimension))

    @property
    def dimension(self):
        return self.weights.shape[0]


@dataclass(frozen=True)
class TrainBatch:
    queries: np.ndarray    # (B, D)
    positives: np.ndarray  # (B, D)
    negatives: np.ndarray  # (B, n, D)

    @classmethod
    def from_items(cls, items):
        """``items`` is a list of ``(q, d_pos, [d_neg, ...])``."""
        if not items:
            raise TrainingError("a batch needs at least one item")
        counts = {len(negs) for _, _, negs in items}
        if len(counts) != 1 or 0 in counts:
            raise TrainingError("every item needs the same non-zero number of negatives")
        return cls(
            queries=np.array([q for q, _, _ in items], dtype=np.float64),
            positives=np.array([p for _, p, _ in items], dtype=np.float64),
            negatives=np.array([negs for _, _, negs in items], dtype=np.float64),
        )

    @property
    def size(self):
        return self.queries.shape[0]

    def candidates(self, share_in_batch=False):
        """(B, C, D): column 0 is the positive, then explicit negatives, then other positives if shared."""
        docs = np.concatenate([self.positives[:, None, :], self.negatives], axis=1)
        if share_in_batch and self.size > 1:
            others = np.array([np.delete(self.positives, j, axis=0) for j in range(self.size)])
            docs = np.concatenate([docs, others], axis=1)
        return docs


def _check(batch, head):
    dim = head.dimension
    if batch.queries.shape[1] != dim or batch.positives.shape[1] != dim or batch.negatives.shape[2] != dim:
        raise TrainingError(f"batch vectors do not match head dimension {dim}")
    for array in (head.weights, batch.queries, batch.positives, batch.negatives):
        if not np.all(np.isfinite(array)):
            raise TrainingError("non-finite value in batch or head")


def _similarities(batch, weights, share_in_batch):
    docs = batch.candidates(share_in_batch)
    projected_queries = batch.queries @ weights.T
    projected_docs = docs @ weights.T
    return docs, np.einsum("bd,bcd->bc", projected_queries, projected_docs)


def loss(batch, head, share_in_batch=False):
    _check(batch, head)
    _, sims = _similarities(batch, head.weights, share_in_batch)
    value = float(np.mean(logsumexp(sims, axis=1) - sims[:, 0]))
    if not np.isfinite(value):
        raise TrainingError("loss is not finite")
    return value


def grad(batch, head, share_in_batch=False):
    _check(batch, head)
    docs, sims = _similarities(batch, head.weights, share_in_batch)
    coeffs = softmax(sims, axis=1)
    coeffs[:, 0] -= 1.0
    mixed = np.einsum("bc,bcd->bd", coeffs, docs)
    # W (Q^T M + M^T Q) without forming the D x D outer product
    weighted_queries = head.weights @ batch.queries.T
    weighted_mixed = head.weights @ mixed.T
    return (weighted_queries @ mixed + weighted_mixed @ batch.queries) / batch.size


def train(head, trainset, steps, learning_rate, seed, share_in_batch=False):
    if steps < 0:
        raise TrainingError("steps must be non-negative")
    if steps and not trainset:
        raise TrainingError("empty training set")
    rng = seeded_rng(seed)
    weights = head.weights.copy()
    trajectory = []
    order = []
    for step in range(1, steps + 1):
        if not order:
            order = [int(i) for i in rng.permutation(len(trainset))]
        batch = trainset[order.pop(0)]
        current = ProjectionHead(weights)
        try:
            value = loss(batch, current, share_in_batch)
        except TrainingError as exc:
            raise TrainingError(f"training diverged at step {step}: {exc}") from exc
        trajectory.append(value)
        weights = weights - learning_rate * grad(batch, current, share_in_batch)
        if not np.all(np.isfinite(weights)):
            raise TrainingError(f"training diverged at step {step}: non-finite weights")
        if step == 1 or step % 100 == 0 or step == steps:
            logger.debug("step %d/%d loss %.6f", step, steps, value)
    return ProjectionHead(weights, tuple(trajectory))


def build_trainset(records, catalog, provider, negatives, batch_size, seed):
    """One item per (train query, gold tool); negatives drawn from tools outside the gold set."""
    rng = seeded_rng(seed)
    all_ids = catalog.ids()
    cache = {}

    def embed(text):
        if text not in cache:
            cache[text] = provider.embed(text)
        return cache[text]

    items = []
    for record in records:
        pool = [tool_id for tool_id in all_ids if tool_id not in record.gold]
        if not pool:
            raise TrainingError(f"query '{record.id}' has no tool outside its gold set to sample negatives from")
        query_vector = embed(record.text)
        for tool_id in sorted(record.gold):
            picks = rng.choice(len(pool), size=negatives, replace=len(pool) < negatives)
            items.append((
                query_vector,
                embed(catalog.get(tool_id).description),
                [embed(catalog.get(pool[int(i)]).description) for i in picks],
            ))
    batches = [TrainBatch.from_items(items[start:start + batch_size]) for start in range(0, len(items), batch_size)]
    logger.info("training set: %d items in %d batches", len(items), len(batches))
    return batches


def save_head(head, path):
    """``.npy`` matrix; the file header carries the shape."""
    buffer = io.BytesIO()
    np.save(buffer, head.weights, allow_pickle=False)
    write_atomic_bytes(path, buffer.getvalue())


def load_head(path):
    path = Path(path)
    if not path.is_file():
        raise IndexFormatError(f"projection head not found: {path}")
    try:
        weights = np.load(path, allow_pickle=False)
    except (ValueError, OSError) as exc:
        raise IndexFormatError(f"{path}: unreadable projection head ({exc})") from exc
    if weights.ndim != 2 or weights.shape[0] != weights.shape[1] or not np.all(np.isfinite(weights)):
        raise IndexFormatError(f"{path}: expected a finite square matrix, found shape {weights.shape}")
    return ProjectionHead(np.asarray(weights, dtype=np.float64))
