"""Sentence-embedding similarity series.

Embeddings come from an external HTTP provider and are cached on disk as
little-endian float32 records with a JSON manifest. Similarity points are
mean pairwise cosines per (month, stance), across or within publishers,
with seeded down-sampling above a pair-count cap.
"""

from __future__ import annotations

import csv
import hashlib
import json
import os
import random
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence

import httpx
import numpy as np

from .errors import BackendError, TransportError, ValidationError
from .trends import StanceObservation, bucket_key

DEFAULT_SAMPLING_CAP = 500


def cosine(u: Sequence[float], v: Sequence[float]) -> float:
    """dot(u, v) / (|u| |v|); defined only for same-dimension non-zero vectors."""
    a = np.asarray(u, dtype=np.float64)
    b = np.asarray(v, dtype=np.float64)
    if a.shape != b.shape:
        raise ValidationError(f"dimension mismatch: {a.shape} vs {b.shape}")
    na = np.linalg.norm(a)
    nb = np.linalg.norm(b)
    if na == 0 or nb == 0:
        raise ValidationError("cosine undefined for zero vectors")
    return float(np.dot(a, b) / (na * nb))


@dataclass(frozen=True)
class EmbeddingVector:
    sentence_id: str
    dim: int
    values: tuple[float, ...]
    provider: str
    fetched_at: str = ""

    def __post_init__(self):
        if len(self.values) != self.dim:
            raise ValidationError("embedding length disagrees with dim")
        arr = np.asarray(self.values, dtype=np.float64)
        if not np.all(np.isfinite(arr)):
            raise ValidationError(f"non-finite embedding for {self.sentence_id!r}")
        if np.linalg.norm(arr) == 0:
            raise ValidationError(f"zero-norm embedding for {self.sentence_id!r}")


class EmbeddingCache:
    """Append-only vector cache: vectors.bin (float32 LE) + manifest.json."""

    def __init__(self, cache_dir: Path | str, provider: str):
        self.cache_dir = Path(cache_dir)
        self.cache_dir.mkdir(parents=True, exist_ok=True)
        self.provider = provider
        self.bin_path = self.cache_dir / f"{provider}.vectors.bin"
        self.manifest_path = self.cache_dir / f"{provider}.manifest.json"
        self._ids: list[str] = []
        self._dim: Optional[int] = None
        if self.manifest_path.exists():
            with self.manifest_path.open(encoding="utf-8") as fh:
                manifest = json.load(fh)
            if manifest["provider"] != provider:
                raise ValidationError("cache manifest belongs to a different provider")
            self._ids = list(manifest["ids"])
            self._dim = manifest["dim"]

    @property
    def dim(self) -> Optional[int]:
        return self._dim

    def __contains__(self, sentence_id: str) -> bool:
        return sentence_id in set(self._ids)

    def ids(self) -> set[str]:
        return set(self._ids)

    def put(self, vectors: Sequence[EmbeddingVector]) -> None:
        if not vectors:
            return
        known = set(self._ids)
        fresh = [v for v in vectors if v.sentence_id not in known]
        for vec in fresh:
            if self._dim is None:
                self._dim = vec.dim
            elif vec.dim != self._dim:
                raise ValidationError(
                    f"provider {self.provider!r} returned dim {vec.dim}, cache has {self._dim}"
                )
        with self.bin_path.open("ab") as fh:
            for vec in fresh:
                fh.write(np.asarray(vec.values, dtype="<f4").tobytes())
        self._ids.extend(v.sentence_id for v in fresh)
        tmp = self.manifest_path.with_suffix(".json.tmp")
        with tmp.open("w", encoding="utf-8") as fh:
            json.dump({"provider": self.provider, "dim": self._dim,
                       "count": len(self._ids), "ids": self._ids}, fh)
        tmp.rename(self.manifest_path)

    def get_many(self, sentence_ids: Iterable[str]) -> dict[str, np.ndarray]:
        wanted = set(sentence_ids)
        if not wanted or self._dim is None:
            return {}
        positions = {sid: i for i, sid in enumerate(self._ids)}
        out = {}
        data = np.fromfile(self.bin_path, dtype="<f4").reshape(-1, self._dim)
        for sid in wanted:
            if sid in positions:
                out[sid] = data[positions[sid]].astype(np.float64)
        return out


@dataclass
class EmbeddingProviderConfig:
    url: str
    provider: str = "sbert"
    batch_limit: int = 100
    token_env: str = "STANCEMON_EMBED_TOKEN"
    timeout: float = 30.0
    transport_retries: int = 3
    backoff_base: float = 0.5


class EmbeddingProviderClient:
    def __init__(self, config: EmbeddingProviderConfig, transport: Optional[httpx.BaseTransport] = None):
        self.config = config
        self._client = httpx.Client(transport=transport, timeout=config.timeout)
        self.request_count = 0

    def fetch_batch(self, sentences: Sequence[tuple[str, str]]) -> list[EmbeddingVector]:
        token = os.environ.get(self.config.token_env, "")
        headers = {"Authorization": f"Bearer {token}"} if token else {}
        payload = {"sentences": [text for _, text in sentences]}
        last_exc = None
        for attempt in range(self.config.transport_retries):
            try:
                resp = self._client.post(self.config.url, json=payload, headers=headers)
                resp.raise_for_status()
                break
            except (httpx.TransportError, httpx.HTTPStatusError) as exc:
                last_exc = exc
                if attempt + 1 < self.config.transport_retries:
                    time.sleep(self.config.backoff_base * (2 ** attempt))
        else:
            raise TransportError(
                f"embedding request failed after {self.config.transport_retries} attempts: {last_exc}"
            )
        self.request_count += 1
        try:
            body = resp.json()
            dim = int(body["dim"])
            rows = body["vectors"]
        except (KeyError, ValueError) as exc:
            raise BackendError(f"malformed embedding response: {exc}") from exc
        if len(rows) != len(sentences):
            raise BackendError(f"provider returned {len(rows)} vectors for {len(sentences)} sentences")
        fetched_at = str(int(time.time()))
        out = []
        for (sid, _), row in zip(sentences, rows):
            if len(row) != dim:
                raise BackendError(
                    f"provider {self.config.provider!r} vector for {sid!r} has length "
                    f"{len(row)}, expected dim {dim}"
                )
            out.append(EmbeddingVector(sid, dim, tuple(float(x) for x in row),
                                       self.config.provider, fetched_at))
        return out

    def close(self) -> None:
        self._client.close()


def fetch_embeddings(
    client: EmbeddingProviderClient,
    cache: EmbeddingCache,
    sentences: Sequence[tuple[str, str]],
) -> dict[str, np.ndarray]:
    """Return embeddings for all sentences, hitting the provider only for
    cache misses, in batches bounded by the configured limit."""
    cached_ids = cache.ids()
    misses = [(sid, text) for sid, text in sentences if sid not in cached_ids]
    limit = client.config.batch_limit
    for start in range(0, len(misses), limit):
        batch = misses[start:start + limit]
        vectors = client.fetch_batch(batch)
        if cache.dim is not None and vectors and vectors[0].dim != cache.dim:
            raise ValidationError(
                f"provider {client.config.provider!r} returned dim {vectors[0].dim}, "
                f"cache expects {cache.dim}"
            )
        cache.put(vectors)
    return cache.get_many([sid for sid, _ in sentences])


@dataclass(frozen=True)
class SimilarityPoint:
    bucket: str
    stance: str
    mode: str  # "cross_publisher" or "within:<publisher>"
    mean_cosine: float
    pair_count: int
    sampled: bool = False

    def __post_init__(self):
        if not (-1.0 - 1e-9 <= self.mean_cosine <= 1.0 + 1e-9):
            raise ValidationError(f"mean cosine {self.mean_cosine} outside [-1, 1]")
        if self.pair_count < 1:
            raise ValidationError("similarity point without pairs")


def _point_seed(seed: int, *parts: str) -> int:
    digest = hashlib.sha256(":".join([str(seed), *parts]).encode("utf-8")).hexdigest()
    return int(digest[:16], 16)


def _maybe_sample(ids: list[str], cap: int, rng: random.Random) -> tuple[list[str], bool]:
    if len(ids) <= cap:
        return ids, False
    return sorted(rng.sample(ids, cap)), True


def _normalized_matrix(ids: Sequence[str], embeddings: Mapping[str, np.ndarray]) -> np.ndarray:
    rows = np.stack([np.asarray(embeddings[sid], dtype=np.float64) for sid in ids])
    norms = np.linalg.norm(rows, axis=1, keepdims=True)
    if np.any(norms == 0):
        raise ValidationError("zero-norm embedding in similarity input")
    return rows / norms


def cross_publisher_similarity(
    embeddings: Mapping[str, np.ndarray],
    observations: Sequence[StanceObservation],
    month: str,
    stance: str,
    publishers: tuple[str, str],
    seed: int = 0,
    sampling_cap: int = DEFAULT_SAMPLING_CAP,
) -> Optional[SimilarityPoint]:
    """Mean cosine over all (publisher A, publisher B) same-stance pairs in
    a month; None when either side is empty."""
    sides = []
    for pub in publishers:
        ids = sorted(
            o.sentence_id for o in observations
            if o.publisher == pub and o.label == stance
            and bucket_key(o.day, "month") == month and o.sentence_id in embeddings
        )
        sides.append(ids)
    if not sides[0] or not sides[1]:
        return None
    rng = random.Random(_point_seed(seed, month, stance, "cross", *publishers))
    left, sampled_l = _maybe_sample(sides[0], sampling_cap, rng)
    right, sampled_r = _maybe_sample(sides[1], sampling_cap, rng)
    a = _normalized_matrix(left, embeddings)
    b = _normalized_matrix(right, embeddings)
    mean = float(np.clip((a @ b.T).mean(), -1.0, 1.0))
    return SimilarityPoint(
        bucket=month, stance=stance, mode="cross_publisher",
        mean_cosine=mean, pair_count=len(left) * len(right),
        sampled=sampled_l or sampled_r,
    )


def within_publisher_similarity(
    embeddings: Mapping[str, np.ndarray],
    observations: Sequence[StanceObservation],
    month: str,
    stance: str,
    publisher: str,
    seed: int = 0,
    sampling_cap: int = DEFAULT_SAMPLING_CAP,
) -> Optional[SimilarityPoint]:
    """Mean cosine over unordered distinct same-stance pairs inside one
    publisher; self-pairs excluded; None below two sentences."""
    ids = sorted(
        o.sentence_id for o in observations
        if o.publisher == publisher and o.label == stance
        and bucket_key(o.day, "month") == month and o.sentence_id in embeddings
    )
    if len(ids) < 2:
        return None
    rng = random.Random(_point_seed(seed, month, stance, "within", publisher))
    ids, sampled = _maybe_sample(ids, sampling_cap, rng)
    a = _normalized_matrix(ids, embeddings)
    gram = a @ a.T
    n = len(ids)
    mean = float(np.clip((gram.sum() - np.trace(gram)) / (n * (n - 1)), -1.0, 1.0))
    return SimilarityPoint(
        bucket=month, stance=stance, mode=f"within:{publisher}",
        mean_cosine=mean, pair_count=n * (n - 1) // 2, sampled=sampled,
    )


def similarity_series(
    embeddings: Mapping[str, np.ndarray],
    observations: Sequence[StanceObservation],
    publishers: tuple[str, str],
    seed: int = 0,
    sampling_cap: int = DEFAULT_SAMPLING_CAP,
) -> list[SimilarityPoint]:
    """Cross- and within-publisher similarity points for every observed
    (month, stance) cell that has enough sentences."""
    months = sorted({bucket_key(o.day, "month") for o in observations})
    stances = sorted({o.label for o in observations})
    points: list[SimilarityPoint] = []
    for month in months:
        for stance in stances:
            cross = cross_publisher_similarity(
                embeddings, observations, month, stance, publishers, seed, sampling_cap)
            if cross is not None:
                points.append(cross)
            for pub in publishers:
                within = within_publisher_similarity(
                    embeddings, observations, month, stance, pub, seed, sampling_cap)
                if within is not None:
                    points.append(within)
    return points


def write_similarity_csv(points: Sequence[SimilarityPoint], fh) -> None:
    writer = csv.writer(fh)
    writer.writerow(["month", "stance", "mode", "mean_cosine", "pair_count", "sampled"])
    for point in points:
        writer.writerow([point.bucket, point.stance, point.mode,
                         f"{point.mean_cosine:.9f}", point.pair_count,
                         "true" if point.sampled else "false"])
