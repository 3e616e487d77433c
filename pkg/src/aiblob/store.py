"""Persistent sentence-level vector store with exact top-k cosine retrieval.

Retrieval is an exhaustive scan over a float32 matrix (a few hundred thousand
sentences is tractable exactly, and exactness keeps results reproducible).
Scores are computed in float64 with ties broken by sentence_id ascending.

On-disk layout (bit-exact):
    meta.jsonl   header {"format":"aiblob-store","version":1,"dim":D}, then one
                 record object per line; line order defines row order.
    vectors.bin  magic "AIBV" | u32 LE version=1 | u32 LE dim | u64 LE count |
                 count*dim float32 LE values in meta.jsonl row order.
"""

from __future__ import annotations

import json
import os
import struct
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import ConfigError, ParseError, StoreError, ValidationError
from .util import atomic_write_bytes, atomic_write_text, dumps_line

STORE_FORMAT = "aiblob-store"
STORE_VERSION = 1
VECTORS_MAGIC = b"AIBV"
META_FILE = "meta.jsonl"
VECTORS_FILE = "vectors.bin"


@dataclass
class VectorRecord:
    """One stored sentence: id, unit vector, and clip metadata."""

    sentence_id: str
    vector: np.ndarray
    video_id: str
    text: str
    start_s: float
    end_s: float


@dataclass
class RetrievalHit:
    sentence_id: str
    score: float
    record: VectorRecord


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    """Dot product of two unit vectors, clamped to [-1, 1]."""
    va = np.asarray(a, dtype=np.float64)
    vb = np.asarray(b, dtype=np.float64)
    if va.shape != vb.shape:
        raise ConfigError(f"cosine dimension mismatch: {va.shape[0]} vs {vb.shape[0]}")
    return float(np.clip(np.dot(va, vb), -1.0, 1.0))


class VectorStore:
    """In-memory store over (sentence_id, vector, metadata) rows.

    Safe for many concurrent readers or a single writer; don't save while an
    insert is in flight. Queries are deterministic regardless of parallelism.
    """

    def __init__(self, dim: int):
        if dim < 1:
            raise ConfigError(f"store dim must be positive, got {dim}")
        self.dim = dim
        self._records: list[VectorRecord] = []
        self._rows: dict[str, int] = {}
        self._chunks: list[np.ndarray] = []
        self._matrix: np.ndarray | None = None
        self._matrix64: np.ndarray | None = None
        self._ids_array: np.ndarray | None = None

    def __len__(self) -> int:
        return len(self._records)

    @property
    def count(self) -> int:
        return len(self._records)

    def video_ids(self) -> set[str]:
        return {r.video_id for r in self._records}

    def get(self, sentence_id: str) -> VectorRecord:
        try:
            return self._records[self._rows[sentence_id]]
        except KeyError:
            raise StoreError(f"unknown sentence_id {sentence_id}") from None

    def records(self) -> Iterable[VectorRecord]:
        return iter(self._records)

    def insert_batch(self, records: Sequence[VectorRecord]) -> int:
        """Insert records atomically: any invalid record rejects the whole batch."""
        seen_in_batch: set[str] = set()
        prepared: list[np.ndarray] = []
        for i, rec in enumerate(records):
            arr = np.asarray(rec.vector, dtype=np.float32)
            if arr.ndim != 1 or arr.shape[0] != self.dim:
                got = arr.shape[0] if arr.ndim == 1 else arr.shape
                raise ConfigError(
                    f"record {rec.sentence_id}: vector dim {got} does not match store dim {self.dim}"
                )
            if not np.isfinite(arr).all():
                raise ValidationError(f"record {rec.sentence_id}: vector has NaN/Inf")
            if rec.sentence_id in self._rows or rec.sentence_id in seen_in_batch:
                raise ValidationError(f"duplicate sentence_id {rec.sentence_id}")
            seen_in_batch.add(rec.sentence_id)
            prepared.append(arr)
        for rec, arr in zip(records, prepared):
            self._rows[rec.sentence_id] = len(self._records)
            self._records.append(
                VectorRecord(rec.sentence_id, arr, rec.video_id, rec.text,
                             float(rec.start_s), float(rec.end_s))
            )
            self._chunks.append(arr)
        self._matrix = None
        self._matrix64 = None
        self._ids_array = None
        return len(records)

    def _stacked(self) -> np.ndarray:
        if self._matrix is None:
            if not self._chunks:
                self._matrix = np.zeros((0, self.dim), dtype=np.float32)
            else:
                self._matrix = np.vstack(self._chunks)
                self._chunks = [self._matrix]
        return self._matrix

    def top_k(
        self,
        query: np.ndarray,
        k: int,
        exclude: set[str] | frozenset[str] = frozenset(),
        video_cap: int | None = None,
    ) -> list[RetrievalHit]:
        """Exact top-k by cosine, skipping excluded ids.

        Ties break by sentence_id ascending. With video_cap set, at most that
        many hits may share a video_id, enforced in score order.
        """
        if k < 1:
            raise ValidationError(f"k must be positive, got {k}")
        q = np.asarray(query, dtype=np.float64)
        if q.ndim != 1 or q.shape[0] != self.dim:
            got = q.shape[0] if q.ndim == 1 else q.shape
            raise ConfigError(f"query dim {got} does not match store dim {self.dim}")
        if not self._records:
            return []

        # Scores in float64 so ranking is insensitive to accumulation order.
        if self._matrix64 is None:
            self._matrix64 = self._stacked().astype(np.float64)
        scores = np.clip(self._matrix64 @ q, -1.0, 1.0)
        if self._ids_array is None:
            self._ids_array = np.array([r.sentence_id for r in self._records])
        order = np.lexsort((self._ids_array, -scores))

        hits: list[RetrievalHit] = []
        per_video: dict[str, int] = {}
        for row in order:
            rec = self._records[int(row)]
            if rec.sentence_id in exclude:
                continue
            if video_cap is not None:
                used = per_video.get(rec.video_id, 0)
                if used >= video_cap:
                    continue
                per_video[rec.video_id] = used + 1
            hits.append(RetrievalHit(rec.sentence_id, float(scores[int(row)]), rec))
            if len(hits) == k:
                break
        return hits

    # ------------------------------------------------------------------
    # Persistence
    # ------------------------------------------------------------------

    def save(self, directory: str) -> dict:
        """Write meta.jsonl + vectors.bin; returns a manifest of what was written."""
        os.makedirs(directory, exist_ok=True)
        lines = [dumps_line({"format": STORE_FORMAT, "version": STORE_VERSION, "dim": self.dim})]
        for rec in self._records:
            lines.append(
                dumps_line(
                    {
                        "sentence_id": rec.sentence_id,
                        "video_id": rec.video_id,
                        "text": rec.text,
                        "start_s": rec.start_s,
                        "end_s": rec.end_s,
                    }
                )
            )
        meta_path = os.path.join(directory, META_FILE)
        vectors_path = os.path.join(directory, VECTORS_FILE)
        atomic_write_text(meta_path, "\n".join(lines) + "\n")

        header = VECTORS_MAGIC + struct.pack("<IIQ", STORE_VERSION, self.dim, self.count)
        body = self._stacked().astype("<f4").tobytes() if self.count else b""
        atomic_write_bytes(vectors_path, header + body)
        return {
            "dim": self.dim,
            "count": self.count,
            "meta_path": meta_path,
            "vectors_path": vectors_path,
        }

    @classmethod
    def load(cls, directory: str) -> "VectorStore":
        meta_path = os.path.join(directory, META_FILE)
        vectors_path = os.path.join(directory, VECTORS_FILE)
        for path in (meta_path, vectors_path):
            if not os.path.exists(path):
                raise StoreError(f"missing store file: {path}")

        with open(meta_path, "r", encoding="utf-8") as handle:
            lines = [line for line in handle.read().split("\n") if line]
        if not lines:
            raise StoreError(f"{meta_path}: empty metadata file")
        header = _parse_meta_line(lines[0], meta_path, 1)
        if header.get("format") != STORE_FORMAT:
            raise StoreError(f"{meta_path}: not a store file (format={header.get('format')!r})")
        if header.get("version") != STORE_VERSION:
            raise StoreError(f"{meta_path}: unsupported version {header.get('version')!r}")
        dim = header.get("dim")
        if not isinstance(dim, int) or dim < 1:
            raise StoreError(f"{meta_path}: bad dim {dim!r}")

        with open(vectors_path, "rb") as handle:
            blob = handle.read()
        if len(blob) < 20:
            raise StoreError(f"{vectors_path}: truncated header")
        magic, version, bin_dim, bin_count = struct.unpack("<4sIIQ", blob[:20])
        if magic != VECTORS_MAGIC:
            raise StoreError(f"{vectors_path}: bad magic {magic!r}")
        if version != STORE_VERSION:
            raise StoreError(f"{vectors_path}: unsupported version {version}")
        if bin_dim != dim:
            raise StoreError(f"{vectors_path}: dim {bin_dim} does not match metadata dim {dim}")
        meta_rows = lines[1:]
        if bin_count != len(meta_rows):
            raise StoreError(
                f"{vectors_path}: count {bin_count} does not match {len(meta_rows)} metadata rows"
            )
        expected_bytes = 20 + bin_count * dim * 4
        if len(blob) != expected_bytes:
            raise StoreError(
                f"{vectors_path}: expected {expected_bytes} bytes, found {len(blob)}"
            )
        matrix = np.frombuffer(blob[20:], dtype="<f4").reshape(bin_count, dim)

        store = cls(dim)
        records = []
        for lineno, line in enumerate(meta_rows, start=2):
            rec = _parse_meta_line(line, meta_path, lineno)
            try:
                records.append(
                    VectorRecord(
                        sentence_id=rec["sentence_id"],
                        vector=matrix[lineno - 2],
                        video_id=rec["video_id"],
                        text=rec["text"],
                        start_s=float(rec["start_s"]),
                        end_s=float(rec["end_s"]),
                    )
                )
            except (KeyError, TypeError, ValueError) as exc:
                raise StoreError(f"{meta_path}:{lineno}: bad record: {exc}") from exc
        store.insert_batch(records)
        return store


def _parse_meta_line(line: str, path: str, lineno: int) -> dict:
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}:{lineno}: invalid JSON: {exc.msg}") from exc
    if not isinstance(obj, dict):
        raise ParseError(f"{path}:{lineno}: expected a JSON object")
    return obj
