import math

import numpy as np
from django.test import SimpleTestCase

from toolretrieval.exceptions import TextAnalysisError
from toolretrieval.text_analysis import bm25_topk, build_bm25, kmeans, tfidf_fit, tfidf_transform, tokenize

WORDS = ["red", "green", "blue", "song", "book", "map", "rate", "news"]


def brute_force_bm25(documents, query, k1=1.2, b=0.75):
    tokenized = {doc_id: tokenize(text) for doc_id, text in documents.items()}
    n = len(tokenized)
    avg = sum(len(tokens) for tokens in tokenized.values()) / n
    scores = {}
    for doc_id, tokens in tokenized.items():
        score = 0.0
        matched = False
        for token in tokenize(query):
            tf = tokens.count(token)
            if not tf:
                continue
            matched = True
            df = sum(1 for other in tokenized.values() if token in other)
            idf = math.log(1.0 + (n - df + 0.5) / (df + 0.5))
            norm = 1.0 - b + b * len(tokens) / avg
            score += idf * tf * (k1 + 1.0) / (tf + k1 * norm)
        if matched:
            scores[doc_id] = score
    return sorted(scores.items(), key=lambda item: (-item[1], item[0]))


class TokenizeTests(SimpleTestCase):
    def test_examples(self):
        self.assertEqual(tokenize("Open Library!"), ["open", "library"])
        self.assertEqual(tokenize(""), [])
        self.assertEqual(tokenize("ID-987654"), ["id", "987654"])
        self.assertEqual(tokenize("snake_case words"), ["snake", "case", "words"])


class TfIdfTests(SimpleTestCase):
    def test_smoothed_idf(self):
        model = tfidf_fit(["a b", "a c"])
        self.assertAlmostEqual(model.idf["a"], 1.0, places=12)
        self.assertAlmostEqual(model.idf["b"], math.log(3 / 2) + 1, places=12)
        self.assertAlmostEqual(model.idf["b"], 1.4055, places=4)
        self.assertEqual(sorted(model.vocabulary.values()), list(range(3)))
        self.assertEqual(model.fitted_corpus_size, 2)

    def test_out_of_vocabulary_is_zero_vector(self):
        vector = tfidf_transform(tfidf_fit(["a b", "a c"]), "zzz")
        self.assertEqual(vector.indices, ())
        self.assertEqual(vector.norm, 0.0)

    def test_fitted_document_has_unit_norm(self):
        model = tfidf_fit(["a b b", "a c", "c d e"])
        for text in ("a b b", "a c", "c d e"):
            vector = tfidf_transform(model, text)
            self.assertAlmostEqual(vector.norm, 1.0, places=9)
            self.assertEqual(list(vector.indices), sorted(vector.indices))

    def test_empty_corpus_rejected(self):
        with self.assertRaises(TextAnalysisError):
            tfidf_fit([])
        with self.assertRaises(TextAnalysisError):
            tfidf_fit(["!!!", "..."])


class KMeansTests(SimpleTestCase):
    def test_single_cluster(self):
        result = kmeans(np.random.default_rng(0).normal(size=(6, 3)), 1, seed=5)
        self.assertEqual(set(result.labels), {0})

    def test_separated_groups_get_distinct_labels(self):
        rng = np.random.default_rng(1)
        left = rng.normal(0.0, 0.05, size=(5, 2))
        right = rng.normal(10.0, 0.05, size=(5, 2))
        labels = kmeans(np.vstack([left, right]), 2, seed=3).labels
        self.assertEqual(len(set(labels[:5])), 1)
        self.assertEqual(len(set(labels[5:])), 1)
        self.assertNotEqual(labels[0], labels[5])

    def test_deterministic_for_seed(self):
        points = np.random.default_rng(2).normal(size=(12, 4))
        self.assertEqual(kmeans(points, 3, seed=9).labels, kmeans(points, 3, seed=9).labels)

    def test_labels_are_in_range(self):
        points = np.random.default_rng(4).normal(size=(9, 2))
        result = kmeans(points, 4, seed=1)
        self.assertEqual(len(result.labels), 9)
        self.assertTrue(all(0 <= label < 4 for label in result.labels))
        self.assertEqual(result.centroids.shape, (4, 2))

    def test_objective_never_increases_across_iterations(self):
        points = np.random.default_rng(8).normal(size=(60, 5))
        for seed in (0, 1, 2):
            inertias = [kmeans(points, 4, seed=seed, max_iter=steps).inertia for steps in range(1, 12)]
            for steps, (before, after) in enumerate(zip(inertias, inertias[1:]), start=1):
                self.assertLessEqual(after, before + 1e-9, f"seed {seed}, iteration {steps} -> {steps + 1}")

    def test_duplicate_points_do_not_fail(self):
        points = np.ones((3, 2))
        result = kmeans(points, 2, seed=0)
        self.assertEqual(len(set(result.labels)), 1)

    def test_k_out_of_range(self):
        with self.assertRaises(TextAnalysisError):
            kmeans(np.ones((2, 2)), 3, seed=0)
        with self.assertRaises(TextAnalysisError):
            kmeans(np.ones((2, 2)), 0, seed=0)
        with self.assertRaises(TextAnalysisError):
            kmeans(np.empty((0, 2)), 1, seed=0)


class Bm25Tests(SimpleTestCase):
    def test_absent_term_gives_empty_result(self):
        index = build_bm25({"a": "red song", "b": "blue book"})
        self.assertEqual(bm25_topk(index, "purple", 5), [])
        self.assertEqual(bm25_topk(index, "", 5), [])

    def test_identical_documents_tie_by_id(self):
        index = build_bm25({"z": "red song", "m": "red song", "a": "blue book"})
        ranked = bm25_topk(index, "red", 5)
        self.assertEqual([doc_id for doc_id, _ in ranked], ["m", "z"])
        self.assertEqual(ranked[0][1], ranked[1][1])

    def test_toy_corpus_matches_brute_force(self):
        documents = {"d1": "red song red", "d2": "blue song", "d3": "red book map"}
        self.assertEqual(bm25_topk(build_bm25(documents), "red song", 3), brute_force_bm25(documents, "red song"))

    def test_random_corpora_match_brute_force(self):
        rng = np.random.default_rng(2024)
        for _ in range(50):
            size = int(rng.integers(1, 101))
            documents = {
                f"t{n:03d}": " ".join(rng.choice(WORDS, size=int(rng.integers(1, 9))))
                for n in range(size)
            }
            query = " ".join(rng.choice(WORDS + ["absent"], size=int(rng.integers(1, 5))))
            expected = brute_force_bm25(documents, query)
            actual = bm25_topk(build_bm25(documents), query, size)
            self.assertEqual([doc_id for doc_id, _ in actual], [doc_id for doc_id, _ in expected])
            for (_, got), (_, want) in zip(actual, expected):
                self.assertAlmostEqual(got, want, places=9)
