"""Chunking, TF-IDF n-gram indexing, ranking, and context-window assembly.

Pinned formulas: term frequency is the raw count within a chunk, idf is
ln((1+N)/(1+df)) + 1 over the indexed chunk collection, and chunk vectors
are L2-normalized (a chunk of only stopwords stores the zero vector).
N-grams span orders 1..3; stopwords are dropped at the unigram level only.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

from .corpus import Story


class RetrievalError(ValueError):
    """Bad retrieval input (no chunks, malformed index file)."""


@dataclass(frozen=True)
class Chunk:
    story_id: str
    chunk_index: int
    tokens: tuple[str, ...]


@dataclass(frozen=True)
class ContextWindow:
    example_id: str
    chunk_size: int
    tokens: tuple[str, ...]
    provenance: tuple[tuple[str, int], ...]


def chunk_story(story: Story, n: int) -> list[Chunk]:
    """Fixed-size spans; every chunk has n tokens except possibly the last."""
    if n < 1:
        raise RetrievalError(f"chunk size must be >= 1, got {n}")
    return [
        Chunk(story.story_id, i, tuple(story.tokens[start : start + n]))
        for i, start in enumerate(range(0, len(story.tokens), n))
    ]


def _ngrams(tokens, stopwords):
    grams = [t for t in tokens if t not in stopwords]
    for order in (2, 3):
        grams.extend(
            " ".join(tokens[i : i + order]) for i in range(len(tokens) - order + 1)
        )
    return grams


class TfidfIndex:
    """Sparse TF-IDF vectors over a chunk collection, ready for cosine ranking."""

    FORMAT = "storyqa-tfidf"
    VERSION = 1

    def __init__(self, chunks, idf, vectors, stopwords):
        self.chunks = list(chunks)
        self.idf = idf
        self.vectors = vectors
        self.stopwords = frozenset(stopwords)

    def vectorize(self, tokens) -> dict[str, float]:
        """Unit-normalized query vector over known n-grams ({} if empty)."""
        counts: dict[str, int] = {}
        for g in _ngrams(list(tokens), self.stopwords):
            if g in self.idf:
                counts[g] = counts.get(g, 0) + 1
        vec = {g: c * self.idf[g] for g, c in counts.items()}
        norm = math.sqrt(sum(w * w for w in vec.values()))
        if norm == 0.0:
            return {}
        return {g: w / norm for g, w in vec.items()}

    def save(self, path):
        payload = {
            "format": self.FORMAT,
            "version": self.VERSION,
            "stopwords": sorted(self.stopwords),
            "idf": self.idf,
            "chunks": [
                {"story_id": c.story_id, "chunk_index": c.chunk_index, "tokens": list(c.tokens)}
                for c in self.chunks
            ],
            "vectors": self.vectors,
        }
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, sort_keys=True)

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as fh:
            payload = json.load(fh)
        if payload.get("format") != cls.FORMAT or payload.get("version") != cls.VERSION:
            raise RetrievalError(f"unrecognized index file header in {path}")
        chunks = [
            Chunk(c["story_id"], c["chunk_index"], tuple(c["tokens"]))
            for c in payload["chunks"]
        ]
        return cls(chunks, payload["idf"], payload["vectors"], payload["stopwords"])


def build_tfidf_index(chunks, stopwords) -> TfidfIndex:
    chunks = list(chunks)
    if not chunks:
        raise RetrievalError("build_tfidf_index: no chunks")
    n_docs = len(chunks)
    per_chunk_counts = []
    df: dict[str, int] = {}
    for chunk in chunks:
        counts: dict[str, int] = {}
        for g in _ngrams(list(chunk.tokens), stopwords):
            counts[g] = counts.get(g, 0) + 1
        per_chunk_counts.append(counts)
        for g in counts:
            df[g] = df.get(g, 0) + 1
    idf = {g: math.log((1.0 + n_docs) / (1.0 + d)) + 1.0 for g, d in df.items()}
    vectors = []
    for counts in per_chunk_counts:
        vec = {g: c * idf[g] for g, c in counts.items()}
        norm = math.sqrt(sum(w * w for w in vec.values()))
        vectors.append({g: w / norm for g, w in vec.items()} if norm else {})
    return TfidfIndex(chunks, idf, vectors, stopwords)


def rank_chunks(index: TfidfIndex, query, top_k: int) -> list[tuple[Chunk, float]]:
    """Descending cosine score; ties by build order; zero-vector chunks last."""
    if top_k < 1:
        raise RetrievalError(f"top_k must be >= 1, got {top_k}")
    qvec = index.vectorize(query)
    scored = []
    for pos, (chunk, cvec) in enumerate(zip(index.chunks, index.vectors)):
        if cvec and qvec:
            small, big = (qvec, cvec) if len(qvec) <= len(cvec) else (cvec, qvec)
            score = sum(w * big.get(g, 0.0) for g, w in small.items())
        else:
            score = 0.0
        scored.append((chunk, score, not cvec, pos))
    scored.sort(key=lambda item: (-item[1], item[2], item[3]))
    return [(chunk, score) for chunk, score, _, _ in scored[:top_k]]


def assemble_context(ranked, max_context: int, example_id: str = "",
                     chunk_size: int = 0) -> ContextWindow:
    """Take top-scored chunks while they fit the budget, then restore story order."""
    ranked = list(ranked)
    if not ranked:
        raise RetrievalError("assemble_context: empty ranked list")
    selected = []
    budget = max_context
    for chunk, _score in ranked:
        if len(chunk.tokens) > budget:
            break
        selected.append(chunk)
        budget -= len(chunk.tokens)
    if not selected:
        # best chunk alone exceeds the budget: truncate it so the bound is hard
        head = ranked[0][0]
        truncated = Chunk(head.story_id, head.chunk_index, head.tokens[:max_context])
        selected = [truncated]
    selected.sort(key=lambda c: (c.story_id, c.chunk_index))
    tokens: list[str] = []
    provenance = []
    for chunk in selected:
        tokens.extend(chunk.tokens)
        provenance.append((chunk.story_id, chunk.chunk_index))
    return ContextWindow(
        example_id=example_id,
        chunk_size=chunk_size,
        tokens=tuple(tokens),
        provenance=tuple(provenance),
    )


def build_window(index: TfidfIndex, query, max_context: int, example_id: str,
                 chunk_size: int, top_k: int | None = None) -> ContextWindow:
    """Rank all chunks (or the top_k cap) and assemble the budgeted window."""
    k = len(index.chunks) if top_k is None else min(top_k, len(index.chunks))
    ranked = rank_chunks(index, query, k)
    return assemble_context(ranked, max_context, example_id=example_id, chunk_size=chunk_size)
