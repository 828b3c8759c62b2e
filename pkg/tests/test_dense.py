import json
import random

import numpy as np
import pytest

from chiq.errors import FormatError
from chiq.retrieval.dense import (
    HashEmbedder,
    HttpEmbedder,
    VectorIndex,
    build_vector_index,
    load_vector_index,
    save_vector_index,
    search_dense,
)


def test_hash_embedder_deterministic():
    embedder = HashEmbedder(dim=16)
    v1 = embedder.embed("abc")
    v2 = embedder.embed("abc")
    assert np.array_equal(v1, v2)
    assert v1.shape == (16,)
    assert not np.array_equal(v1, embedder.embed("abd"))


def test_self_similarity_cosine():
    rng = np.random.default_rng(3)
    vectors = rng.normal(size=(6, 8))
    index = build_vector_index(
        ((f"d{i}", vectors[i]) for i in range(6)), similarity="cosine"
    )
    ranked = search_dense(index, vectors[5], k=3, query_id="q")
    assert ranked.doc_ids()[0] == "d5"
    assert ranked.hits[0][1] == pytest.approx(1.0)


def test_orthogonal_vectors_score_zero():
    index = build_vector_index(
        [("d1", np.array([1.0, 0.0])), ("d2", np.array([0.0, 1.0]))],
        similarity="dot",
    )
    ranked = search_dense(index, np.array([0.0, 1.0]), k=2)
    assert dict(ranked.hits)["d1"] == pytest.approx(0.0)


def test_dimension_mismatch_rejected():
    index = build_vector_index([("d1", np.ones(8))])
    with pytest.raises(FormatError, match="dimension"):
        search_dense(index, np.ones(16), k=1)


def test_mixed_dims_rejected_at_build():
    with pytest.raises(FormatError, match="dimension"):
        build_vector_index([("d1", np.ones(8)), ("d2", np.ones(4))])


def test_zero_vector_rejected_in_cosine():
    with pytest.raises(ValueError, match="non-zero"):
        build_vector_index([("d1", np.zeros(4))], similarity="cosine")
    index = build_vector_index([("d1", np.ones(4))], similarity="cosine")
    with pytest.raises(ValueError, match="zero query"):
        search_dense(index, np.zeros(4), k=1)


def test_matches_independent_brute_force():
    rng = np.random.default_rng(11)
    py_rng = random.Random(11)
    for similarity in ("dot", "cosine"):
        vectors = rng.normal(size=(100, 12))
        index = build_vector_index(
            ((f"d{i:03d}", vectors[i]) for i in range(100)), similarity=similarity
        )
        query = rng.normal(size=12)
        # independent reference: plain python loops
        scores = {}
        for i in range(100):
            doc = vectors[i]
            dot = sum(float(a) * float(b) for a, b in zip(doc, query))
            if similarity == "cosine":
                norm_d = sum(float(a) ** 2 for a in doc) ** 0.5
                norm_q = sum(float(b) ** 2 for b in query) ** 0.5
                dot = dot / (norm_d * norm_q)
            scores[f"d{i:03d}"] = dot
        k = py_rng.randint(1, 100)
        expected = sorted(scores.items(), key=lambda kv: (-kv[1], kv[0]))[:k]
        ranked = search_dense(index, query, k=k)
        assert ranked.doc_ids() == [doc_id for doc_id, _ in expected]
        for (_, got), (_, want) in zip(ranked.hits, expected):
            assert got == pytest.approx(want, abs=1e-9)


def test_http_embedder_caches_identical_bytes(tmp_path):
    calls = []

    class FakeResponse:
        status_code = 200

        def json(self):
            return {"embedding": [0.25, -1.0, 0.5]}

    class FakeSession:
        def post(self, url, json=None, timeout=None):
            calls.append(json["input"])
            return FakeResponse()

    embedder = HttpEmbedder("http://fake/embed", cache_dir=tmp_path, session=FakeSession())
    v1 = embedder.embed("abc")
    v2 = embedder.embed("abc")
    assert np.array_equal(v1, v2)
    assert calls == ["abc"]  # second hit served from disk


def test_http_embedder_dimension_check(tmp_path):
    class FakeResponse:
        status_code = 200

        def __init__(self, n):
            self.n = n

        def json(self):
            return {"embedding": [0.0] * self.n}

    class FakeSession:
        def __init__(self):
            self.sizes = [8, 16]

        def post(self, url, json=None, timeout=None):
            return FakeResponse(self.sizes.pop(0))

    embedder = HttpEmbedder("http://fake/embed", session=FakeSession())
    assert embedder.embed("a").shape == (8,)
    with pytest.raises(FormatError, match="dimension mismatch"):
        embedder.embed("b")


def test_vector_index_round_trip(tmp_path):
    index = build_vector_index([("d1", np.array([1.0, 2.0])), ("d2", np.array([3.0, 4.0]))])
    save_vector_index(index, tmp_path / "v")
    loaded = load_vector_index(tmp_path / "v")
    assert loaded.doc_ids == index.doc_ids
    assert np.array_equal(loaded.vectors, index.vectors)
    manifest = json.loads((tmp_path / "v" / "manifest.json").read_text())
    assert manifest["kind"] == "dense"
