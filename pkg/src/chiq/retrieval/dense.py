"""Exact dense retrieval over externally supplied embeddings.

The encoder lives behind an HTTP endpoint ({"input": text} in,
{"embedding": [...]} out); a hash-based mock provides deterministic
vectors for tests and offline runs. Search is an exhaustive similarity
scan: at desk scale there is no reason to trade exactness for ANN
structures.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Protocol

import numpy as np
import requests

from ..errors import FormatError, GatewayError, TransportError
from .ranked import RankedList


class Embedder(Protocol):
    dim: int
    backend_id: str

    def embed(self, text: str) -> np.ndarray: ...


class HashEmbedder:
    """Deterministic mock: vectors derived from a hash of the text."""

    def __init__(self, dim: int = 16):
        if dim < 1:
            raise ValueError("dim must be >= 1")
        self.dim = dim
        self.backend_id = f"hash-embed:{dim}"

    def embed(self, text: str) -> np.ndarray:
        digest = hashlib.shake_256(text.encode("utf-8")).digest(4 * self.dim)
        raw = struct.unpack(f"<{self.dim}I", digest)
        # map uint32 to [-1, 1); never all-zero for non-pathological dims
        vec = np.array([(v / 2**31) - 1.0 for v in raw], dtype=np.float64)
        if not vec.any():
            vec[0] = 1.0
        return vec


class HttpEmbedder:
    """Embedding endpoint client with the same disk-cache behavior as chat
    completions (content-addressed JSON files)."""

    def __init__(
        self,
        url: str,
        dim: int | None = None,
        cache_dir: str | Path | None = None,
        timeout: float = 60.0,
        session: requests.Session | None = None,
    ):
        self.url = url
        self.dim = dim or 0  # learned from the first response when unset
        self.backend_id = f"http-embed:{url}"
        self.timeout = timeout
        self.session = session or requests.Session()
        self._cache_dir = Path(cache_dir) if cache_dir else None
        if self._cache_dir:
            self._cache_dir.mkdir(parents=True, exist_ok=True)

    def _cache_path(self, text: str) -> Path | None:
        if self._cache_dir is None:
            return None
        key = hashlib.sha256(f"{self.backend_id}\x00{text}".encode("utf-8")).hexdigest()
        return self._cache_dir / f"{key}.json"

    def embed(self, text: str) -> np.ndarray:
        path = self._cache_path(text)
        if path is not None and path.exists():
            with path.open("r", encoding="utf-8") as fh:
                vec = np.array(json.load(fh)["embedding"], dtype=np.float64)
            return self._check_dim(vec)
        try:
            response = self.session.post(self.url, json={"input": text}, timeout=self.timeout)
        except requests.RequestException as exc:
            raise TransportError(f"embedding request to {self.url} failed: {exc}") from exc
        if response.status_code != 200:
            raise GatewayError(f"embedding endpoint returned HTTP {response.status_code}")
        try:
            embedding = response.json()["embedding"]
        except (ValueError, KeyError) as exc:
            raise GatewayError("malformed embedding response") from exc
        vec = np.asarray(embedding, dtype=np.float64)
        vec = self._check_dim(vec)
        if path is not None:
            tmp = path.with_suffix(".tmp")
            with tmp.open("w", encoding="utf-8") as fh:
                json.dump({"embedding": vec.tolist()}, fh)
            tmp.replace(path)
        return vec

    def _check_dim(self, vec: np.ndarray) -> np.ndarray:
        if vec.ndim != 1:
            raise GatewayError("embedding must be a flat vector")
        if self.dim == 0:
            self.dim = int(vec.shape[0])
        elif vec.shape[0] != self.dim:
            raise FormatError(
                f"embedding dimension mismatch: got {vec.shape[0]}, expected {self.dim}"
            )
        return vec


@dataclass(frozen=True)
class VectorIndex:
    vectors: np.ndarray  # (N, d)
    doc_ids: tuple[str, ...]
    similarity: str = "dot"  # "dot" | "cosine"

    def __post_init__(self) -> None:
        if self.similarity not in ("dot", "cosine"):
            raise ValueError(f"unknown similarity {self.similarity!r}")
        if self.vectors.ndim != 2:
            raise ValueError("vectors must be a 2-d array")
        if self.vectors.shape[0] != len(self.doc_ids):
            raise ValueError("vector count and doc_ids disagree")
        if self.similarity == "cosine":
            norms = np.linalg.norm(self.vectors, axis=1)
            if np.any(norms == 0.0):
                raise ValueError("cosine similarity requires non-zero vectors")

    @property
    def dim(self) -> int:
        return int(self.vectors.shape[1])


def build_vector_index(
    items: Iterable[tuple[str, np.ndarray]], similarity: str = "dot"
) -> VectorIndex:
    doc_ids: list[str] = []
    rows: list[np.ndarray] = []
    dim: int | None = None
    for doc_id, vec in items:
        vec = np.asarray(vec, dtype=np.float64)
        if dim is None:
            dim = int(vec.shape[0])
        elif vec.shape[0] != dim:
            raise FormatError(
                f"embedding dimension mismatch at {doc_id!r}: got {vec.shape[0]}, expected {dim}"
            )
        doc_ids.append(doc_id)
        rows.append(vec)
    if not rows:
        raise ValueError("cannot build an empty vector index")
    return VectorIndex(vectors=np.vstack(rows), doc_ids=tuple(doc_ids), similarity=similarity)


def search_dense(
    vindex: VectorIndex, query_vector: np.ndarray, k: int, query_id: str = ""
) -> RankedList:
    """Exhaustive top-k similarity scan, ties broken by doc_id."""
    if k < 1:
        raise ValueError("k must be >= 1")
    query = np.asarray(query_vector, dtype=np.float64)
    if query.shape != (vindex.dim,):
        raise FormatError(
            f"query dimension {query.shape} does not match index dimension {vindex.dim}"
        )
    if vindex.similarity == "cosine":
        qnorm = np.linalg.norm(query)
        if qnorm == 0.0:
            raise ValueError("zero query vector is undefined under cosine similarity")
        doc_norms = np.linalg.norm(vindex.vectors, axis=1)
        scores = (vindex.vectors @ query) / (doc_norms * qnorm)
    else:
        scores = vindex.vectors @ query
    pairs = {doc_id: float(score) for doc_id, score in zip(vindex.doc_ids, scores)}
    return RankedList.from_scores(query_id=query_id, scores=pairs, depth=k)


def save_vector_index(vindex: VectorIndex, directory: str | Path) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    manifest = {
        "format_version": 1,
        "kind": "dense",
        "similarity": vindex.similarity,
        "dim": vindex.dim,
        "n_docs": len(vindex.doc_ids),
    }
    with (directory / "manifest.json").open("w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
    np.savez_compressed(
        directory / "vectors.npz",
        vectors=vindex.vectors,
        doc_ids=np.array(vindex.doc_ids, dtype=object),
    )


def load_vector_index(directory: str | Path) -> VectorIndex:
    directory = Path(directory)
    with (directory / "manifest.json").open("r", encoding="utf-8") as fh:
        manifest = json.load(fh)
    if manifest.get("format_version") != 1 or manifest.get("kind") != "dense":
        raise FormatError("not a dense index directory")
    payload = np.load(directory / "vectors.npz", allow_pickle=True)
    return VectorIndex(
        vectors=payload["vectors"],
        doc_ids=tuple(str(d) for d in payload["doc_ids"]),
        similarity=manifest["similarity"],
    )
