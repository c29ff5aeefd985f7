"""Easy/hard training-set pairs per chunk size and the swap/advance scheduler.

Two difficulty axes: answerability (answer-cued vs question-cued retrieval)
and understandability (chunk size). Training starts on the easy set of a
randomly drawn chunk size; every epoch without a dev improvement swaps a
delta fraction of examples to their hard windows, and once the literal
``count <= 1/delta`` budget is spent the scheduler advances to a fresh
chunk size. The whole trajectory is a pure function of
(seed, dev-score sequence, delta, sizes).
"""

from __future__ import annotations

import json
import math
import random
from dataclasses import dataclass, field

from .retrieval import ContextWindow, build_tfidf_index, build_window, chunk_story

IMPROVED = "improved"
SWAPPED = "swapped"
ADVANCED = "advanced"
EXHAUSTED = "exhausted"

_MASK = 0xFFFFFFFFFFFFFFFF


class CurriculumError(ValueError):
    """Bad scheduler input (empty sizes, delta out of range)."""


@dataclass(frozen=True)
class SetPair:
    chunk_size: int
    easy: dict[str, ContextWindow]
    hard: dict[str, ContextWindow]


def build_sets(dataset, stopwords, chunk_sizes, max_context: int,
               split: str = "train", top_k: int | None = None) -> dict[int, SetPair]:
    """One easy/hard window pair per example per chunk size.

    Easy windows are cued by the concatenation of both reference answers,
    hard windows by the question. Retrieval is per story: each example's
    windows come from its own story's chunks.
    """
    examples = dataset.split(split)
    sets: dict[int, SetPair] = {}
    for k in sorted(set(chunk_sizes)):
        indexes = {}
        easy: dict[str, ContextWindow] = {}
        hard: dict[str, ContextWindow] = {}
        for ex in examples:
            if ex.story_id not in indexes:
                chunks = chunk_story(dataset.stories[ex.story_id], k)
                indexes[ex.story_id] = build_tfidf_index(chunks, stopwords)
            index = indexes[ex.story_id]
            answer_cue = list(ex.answers[0]) + list(ex.answers[1])
            easy[ex.example_id] = build_window(
                index, answer_cue, max_context, ex.example_id, k, top_k
            )
            hard[ex.example_id] = build_window(
                index, list(ex.question_tokens), max_context, ex.example_id, k, top_k
            )
        sets[k] = SetPair(chunk_size=k, easy=easy, hard=hard)
    return sets


@dataclass
class CurriculumState:
    remaining: list[int]
    active_k: int
    delta: float
    seed: int
    example_ids: tuple[str, ...]
    swap_count: int = 0
    swapped_ids: set[str] = field(default_factory=set)
    best_dev: float = float("-inf")
    advance_count: int = 0
    ordered: bool = False

    def to_json(self) -> dict:
        return {
            "remaining": list(self.remaining),
            "active_k": self.active_k,
            "delta": self.delta,
            "seed": self.seed,
            "example_ids": sorted(self.example_ids),
            "swap_count": self.swap_count,
            "swapped_ids": sorted(self.swapped_ids),
            "best_dev": self.best_dev,
            "advance_count": self.advance_count,
            "ordered": self.ordered,
        }

    @classmethod
    def from_json(cls, obj) -> "CurriculumState":
        return cls(
            remaining=list(obj["remaining"]),
            active_k=obj["active_k"],
            delta=obj["delta"],
            seed=obj["seed"],
            example_ids=tuple(obj["example_ids"]),
            swap_count=obj["swap_count"],
            swapped_ids=set(obj["swapped_ids"]),
            best_dev=obj["best_dev"],
            advance_count=obj["advance_count"],
            ordered=obj.get("ordered", False),
        )

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json(), fh, sort_keys=True, indent=1)

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as fh:
            return cls.from_json(json.load(fh))


def _derive_rng(seed: int, *salts: int) -> random.Random:
    x = seed & _MASK
    for s in salts:
        x = ((x * 1000003) ^ (s & _MASK)) & _MASK
    return random.Random(x)


def init_state(chunk_sizes, delta: float, seed: int, example_ids=(),
               ordered: bool = False) -> CurriculumState:
    """Draw the first chunk size and start on its easy set.

    With ``ordered=True`` the sizes are consumed in the given order instead
    of seeded sampling (the explicit size-schedule ablations).
    """
    if not chunk_sizes:
        raise CurriculumError("chunk_sizes must be non-empty")
    if not 0.0 < delta <= 1.0:
        raise CurriculumError(f"delta must be in (0, 1], got {delta}")
    if ordered:
        sizes = list(dict.fromkeys(chunk_sizes))
        active = sizes[0]
        sizes = sizes[1:]
    else:
        sizes = sorted(set(chunk_sizes))
        rng = _derive_rng(seed, 0x5EED, 0)
        active = sizes[rng.randrange(len(sizes))]
        sizes.remove(active)
    return CurriculumState(
        remaining=sizes,
        active_k=active,
        delta=delta,
        seed=seed,
        example_ids=tuple(sorted(example_ids)),
        ordered=ordered,
    )


def swap_quantum(delta: float, total: int) -> int:
    """ceil(delta * total) with a 1e-9 integer snap against float artifacts."""
    q = delta * total
    nearest = round(q)
    return int(nearest) if abs(q - nearest) < 1e-9 else math.ceil(q)


def on_epoch_end(state: CurriculumState, dev_score: float) -> str:
    """Algorithm step for one epoch's dev score.

    Improvement raises the bar; otherwise swap while the literal
    ``count <= 1/delta`` comparison holds, then advance to a new chunk size,
    and finally report exhaustion.
    """
    if not math.isfinite(dev_score):
        raise CurriculumError(f"dev_score must be finite, got {dev_score}")
    if dev_score > state.best_dev:
        state.best_dev = dev_score
        return IMPROVED
    if state.swap_count <= 1.0 / state.delta:
        unswapped = sorted(set(state.example_ids) - state.swapped_ids)
        quota = min(len(unswapped), swap_quantum(state.delta, len(state.example_ids)))
        rng = _derive_rng(state.seed, 0x5AFE, state.advance_count, state.swap_count + 1)
        state.swapped_ids.update(rng.sample(unswapped, quota))
        state.swap_count += 1
        return SWAPPED
    return advance(state)


def advance(state: CurriculumState) -> str:
    """Move to a fresh chunk size (also used by understandability-only schedules)."""
    if not state.remaining:
        return EXHAUSTED
    if state.ordered:
        new_k = state.remaining[0]
    else:
        rng = _derive_rng(state.seed, 0x5EED, state.advance_count + 1)
        new_k = state.remaining[rng.randrange(len(state.remaining))]
    state.remaining.remove(new_k)
    state.active_k = new_k
    state.swap_count = 0
    state.swapped_ids = set()
    state.advance_count += 1
    return ADVANCED


def current_training_set(state: CurriculumState, set_pairs) -> dict[str, ContextWindow]:
    """Swapped ids read their hard windows, everyone else the easy ones."""
    pair = set_pairs[state.active_k]
    return {
        ex_id: (pair.hard[ex_id] if ex_id in state.swapped_ids else pair.easy[ex_id])
        for ex_id in state.example_ids
    }


def write_manifest(state: CurriculumState, path) -> None:
    """Audit file: example_id -> (set, chunk size) for the current epoch."""
    rows = {
        ex_id: {
            "set": "hard" if ex_id in state.swapped_ids else "easy",
            "chunk_size": state.active_k,
        }
        for ex_id in state.example_ids
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(rows, fh, sort_keys=True, indent=1)
