"""Embedding providers and the 2D field projection.

Two providers share one interface: a deterministic local embedder (hashed
character 3-grams, dimension 256) so everything runs offline, and a remote
JSON-over-HTTP client for real embedding services (default dimension 1536).
Embeddings are reduced to grid coordinates by a seeded random projection
followed by a tanh squash into the unit square.
"""

from __future__ import annotations

import hashlib
import threading
import time
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import requests

from .errors import ConfigError, EmptyText, ProviderUnavailable

LOCAL_DIM = 256
REMOTE_DIM = 1536

# Scale of the tanh squash.  Unit vectors hit by a standard-normal random
# projection give N(0,1) raw coordinates; 0.5 spreads those over roughly
# [0.1, 0.9] of the grid instead of piling up at the center or the walls.
SQUASH_SCALE = 0.5


@dataclass(frozen=True)
class FieldPosition:
    """Normalized (x, y) in [0,1]^2 plus the grid cell it falls in."""

    x: float
    y: float
    cell: tuple[int, int]

    @classmethod
    def from_xy(cls, x: float, y: float, grid_size: int) -> "FieldPosition":
        if not (0.0 <= x <= 1.0 and 0.0 <= y <= 1.0):
            raise ConfigError(f"position ({x}, {y}) outside the unit square")
        cell = (min(int(x * grid_size), grid_size - 1),
                min(int(y * grid_size), grid_size - 1))
        return cls(x, y, cell)


def _normalize(vec: np.ndarray) -> np.ndarray:
    norm = float(np.linalg.norm(vec))
    if norm == 0.0:
        return vec
    return vec / norm


class LocalProvider:
    """Offline embedder: signed hashed bag of character 3-grams.

    Identical text always yields the identical (bit-exact) vector, which is
    what makes snapshots and test fixtures reproducible without a network.
    """

    kind = "deterministic-local"

    def __init__(self, dimension: int = LOCAL_DIM):
        if dimension < 2:
            raise ConfigError(f"embedding dimension must be >= 2, got {dimension}")
        self.dimension = int(dimension)

    def embed_batch(self, texts: list[str]) -> np.ndarray:
        out = np.zeros((len(texts), self.dimension))
        for i, text in enumerate(texts):
            out[i] = self._one(text)
        return out

    def _one(self, text: str) -> np.ndarray:
        cleaned = " ".join(text.lower().split())
        padded = f" {cleaned} "
        vec = np.zeros(self.dimension)
        for j in range(len(padded) - 2):
            gram = padded[j:j + 3]
            h = int.from_bytes(
                hashlib.blake2b(gram.encode("utf-8"), digest_size=8).digest(),
                "little")
            idx = h % self.dimension
            # Take the sign from a bit not consumed by the index.
            sign = 1.0 if (h >> 32) & 1 else -1.0
            vec[idx] += sign
        return _normalize(vec)


class RemoteProvider:
    """JSON-over-HTTP embedding client.

    POSTs {"model": ..., "input": [texts]} and expects
    {"data": [{"embedding": [...]}, ...]} in input order.  Non-2xx responses
    and transport errors are retried with exponential backoff; in-flight
    requests are capped by a semaphore.
    """

    kind = "remote"

    def __init__(self, endpoint: str, model: str, api_key: str | None = None,
                 dimension: int = REMOTE_DIM, timeout: float = 30.0,
                 max_retries: int = 3, batch_size: int = 64,
                 max_concurrent: int = 4, backoff_base: float = 0.25):
        if not endpoint:
            raise ConfigError("remote provider needs an endpoint URL")
        if max_retries < 0 or batch_size < 1 or max_concurrent < 1:
            raise ConfigError("bad remote provider limits")
        self.endpoint = endpoint
        self.model = model
        self.api_key = api_key
        self.dimension = int(dimension)
        self.timeout = float(timeout)
        self.max_retries = int(max_retries)
        self.batch_size = int(batch_size)
        self.backoff_base = float(backoff_base)
        self._sem = threading.BoundedSemaphore(max_concurrent)

    def embed_batch(self, texts: list[str]) -> np.ndarray:
        chunks = [texts[i:i + self.batch_size]
                  for i in range(0, len(texts), self.batch_size)]
        rows = [self._request(chunk) for chunk in chunks]
        return np.vstack(rows) if rows else np.zeros((0, self.dimension))

    def _request(self, chunk: list[str]) -> np.ndarray:
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        payload = {"model": self.model, "input": list(chunk)}
        last = "no attempt made"
        for attempt in range(self.max_retries + 1):
            if attempt:
                time.sleep(self.backoff_base * 2 ** (attempt - 1))
            try:
                with self._sem:
                    resp = requests.post(self.endpoint, json=payload,
                                         headers=headers, timeout=self.timeout)
            except requests.RequestException as exc:
                last = f"transport error: {exc}"
                continue
            if 200 <= resp.status_code < 300:
                return self._parse(resp, len(chunk))
            last = f"HTTP {resp.status_code}"
        raise ProviderUnavailable(
            f"embedding request failed after {self.max_retries + 1} attempts ({last})")

    def _parse(self, resp, expected: int) -> np.ndarray:
        try:
            data = resp.json()["data"]
            vecs = np.array([row["embedding"] for row in data], dtype=np.float64)
        except (ValueError, KeyError, TypeError) as exc:
            raise ProviderUnavailable(f"malformed embedding response: {exc}") from exc
        if vecs.shape != (expected, self.dimension) or not np.all(np.isfinite(vecs)):
            raise ProviderUnavailable(
                f"embedding response shape {vecs.shape} does not match "
                f"{expected} x {self.dimension}")
        return vecs


def embed(provider, text: str) -> np.ndarray:
    """Unit-norm embedding of one text under the given provider."""
    if not text or not text.strip():
        raise EmptyText("cannot embed empty text")
    vec = provider.embed_batch([text])[0]
    return _normalize(np.asarray(vec, dtype=np.float64))


def embed_many(provider, texts: list[str]) -> np.ndarray:
    """Batch variant of embed; one row per text, all unit-norm."""
    for t in texts:
        if not t or not t.strip():
            raise EmptyText("cannot embed empty text")
    vecs = np.asarray(provider.embed_batch(list(texts)), dtype=np.float64)
    norms = np.linalg.norm(vecs, axis=1, keepdims=True)
    norms[norms == 0.0] = 1.0
    return vecs / norms


@lru_cache(maxsize=32)
def _projection_matrix(seed: int, dim: int) -> np.ndarray:
    r = np.random.default_rng(seed).standard_normal((2, dim))
    r.setflags(write=False)
    return r


def project(embedding: np.ndarray, seed: int, grid_size: int) -> FieldPosition:
    """Map an embedding to grid coordinates.

    A seeded 2xd standard-normal matrix gives raw coordinates; the odd map
    0.5*(1 + tanh(s*raw)) lands them in (0, 1).  The same (embedding, seed)
    always produces the same position, so snapshots reload consistently.
    A zero vector maps to the center.
    """
    vec = np.asarray(embedding, dtype=np.float64)
    raw = _projection_matrix(int(seed), vec.shape[0]) @ vec
    x = 0.5 * (1.0 + float(np.tanh(SQUASH_SCALE * raw[0])))
    y = 0.5 * (1.0 + float(np.tanh(SQUASH_SCALE * raw[1])))
    return FieldPosition.from_xy(x, y, grid_size)
