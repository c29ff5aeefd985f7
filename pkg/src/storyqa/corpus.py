"""Corpus ingestion: tokenization, vocabulary, gold labels, dataset loading.

Everything here is immutable after construction and safe for concurrent
reads. The corpus file format is UTF-8 JSON-lines with two record types:

    {"type": "story", "story_id": ..., "text": ...}
    {"type": "qa", "example_id": ..., "story_id": ..., "question": ...,
     "answers": [a1, a2], "split": "train"|"dev"|"test"}
"""

from __future__ import annotations

import json
import string
from dataclasses import dataclass
from importlib import resources

PAD, UNK, BOS = 0, 1, 2
SPECIAL_TOKENS = ("<pad>", "<unk>", "<bos>")

CONTEXT_POSITION = "context_position"
VOCAB_INDEX = "vocab_index"
IGNORED = "ignored"

_PUNCT = set(string.punctuation)
_POSSESSIVE = "'s"


class CorpusError(ValueError):
    """Malformed corpus input (bad record, bad reference, empty vocab)."""


def tokenize(text: str) -> list[str]:
    """Deterministic rule tokenizer.

    Lowercase, split on whitespace, detach leading/trailing punctuation as
    single-character tokens, split a possessive 's, keep internal hyphens.
    Idempotent on its own space-joined output.
    """
    tokens: list[str] = []
    for piece in text.lower().split():
        tokens.extend(_split_piece(piece))
    return tokens


def _split_piece(piece: str) -> list[str]:
    lead: list[str] = []
    trail: list[str] = []
    while len(piece) > 1 and piece != _POSSESSIVE and piece[0] in _PUNCT:
        lead.append(piece[0])
        piece = piece[1:]
    while len(piece) > 1 and piece != _POSSESSIVE and piece[-1] in _PUNCT:
        trail.append(piece[-1])
        piece = piece[:-1]
    core = [piece]
    if len(piece) > 2 and piece.endswith(_POSSESSIVE):
        core = [piece[:-2], _POSSESSIVE]
    return lead + core + list(reversed(trail))


def load_stopwords(path=None) -> frozenset[str]:
    """The fixed English stopword list (shared by labels and retrieval)."""
    if path is None:
        text = resources.files("storyqa").joinpath("data/stopwords.txt").read_text("utf-8")
    else:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    return frozenset(w.strip() for w in text.splitlines() if w.strip())


@dataclass(frozen=True)
class Story:
    story_id: str
    tokens: tuple[str, ...]


@dataclass(frozen=True)
class QAExample:
    example_id: str
    story_id: str
    question_tokens: tuple[str, ...]
    answers: tuple[tuple[str, ...], tuple[str, ...]]
    split: str


@dataclass(frozen=True)
class Dataset:
    stories: dict[str, Story]
    examples: tuple[QAExample, ...]

    def split(self, name: str) -> list[QAExample]:
        return [ex for ex in self.examples if ex.split == name]


class Vocab:
    """Token/index bijection with fixed special slots PAD=0, UNK=1, BOS=2."""

    def __init__(self, ordered_tokens):
        self.token_of = list(SPECIAL_TOKENS) + list(ordered_tokens)
        self.id_of = {tok: i for i, tok in enumerate(self.token_of)}
        if len(self.id_of) != len(self.token_of):
            raise CorpusError("duplicate token in vocabulary")

    def __len__(self):
        return len(self.token_of)

    def __contains__(self, token):
        return token in self.id_of

    def encode(self, tokens) -> list[int]:
        return [self.id_of.get(t, UNK) for t in tokens]

    def to_json(self):
        return {"tokens": self.token_of[len(SPECIAL_TOKENS):]}

    @classmethod
    def from_json(cls, obj):
        return cls(obj["tokens"])


@dataclass(frozen=True)
class GoldLabel:
    kind: str
    index: int | None = None


def build_vocab(stories, min_stories: int) -> Vocab:
    """Tokens appearing in at least ``min_stories`` distinct stories.

    Ordered by descending story count, ties lexicographic, after the three
    special slots.
    """
    if min_stories < 1:
        raise CorpusError(f"min_stories must be >= 1, got {min_stories}")
    story_count: dict[str, int] = {}
    for story in stories:
        for tok in set(story.tokens):
            story_count[tok] = story_count.get(tok, 0) + 1
    kept = [t for t, c in story_count.items() if c >= min_stories]
    if not kept:
        raise CorpusError(
            f"empty generation vocabulary: no token appears in >= {min_stories} stories"
        )
    kept.sort(key=lambda t: (-story_count[t], t))
    return Vocab(kept)


def build_gold_labels(context, answer, vocab: Vocab, stopwords,
                      max_answer_len: int | None = None) -> list[GoldLabel]:
    """Per-answer-token training targets.

    The largest answer n-gram found contiguously in the context gets
    consecutive context positions (earliest match wins). Remaining stopwords
    take their vocabulary index, remaining non-stopwords the first context
    occurrence; either falls back to the other route, and a token found in
    neither the context nor the vocabulary is ignored.
    """
    context = list(context)
    if not context:
        raise CorpusError("build_gold_labels: empty context")
    ans = list(answer)
    if max_answer_len is not None:
        ans = ans[:max_answer_len]

    match = _largest_ngram_match(context, ans)
    first_at = {}
    for i, tok in enumerate(context):
        first_at.setdefault(tok, i)

    labels: list[GoldLabel] = []
    for j, tok in enumerate(ans):
        if match is not None and match[0] <= j < match[0] + match[2]:
            labels.append(GoldLabel(CONTEXT_POSITION, match[1] + (j - match[0])))
        elif tok in stopwords:
            if tok in vocab:
                labels.append(GoldLabel(VOCAB_INDEX, vocab.id_of[tok]))
            elif tok in first_at:
                labels.append(GoldLabel(CONTEXT_POSITION, first_at[tok]))
            else:
                labels.append(GoldLabel(IGNORED))
        elif tok in first_at:
            labels.append(GoldLabel(CONTEXT_POSITION, first_at[tok]))
        elif tok in vocab:
            labels.append(GoldLabel(VOCAB_INDEX, vocab.id_of[tok]))
        else:
            labels.append(GoldLabel(IGNORED))
    return labels


def _largest_ngram_match(context, ans):
    """(answer start, context start, length) of the longest contiguous match."""
    for length in range(len(ans), 0, -1):
        for s in range(0, len(ans) - length + 1):
            pos = _find_subsequence(context, ans[s : s + length])
            if pos >= 0:
                return s, pos, length
    return None


def _find_subsequence(haystack, needle):
    n = len(needle)
    for i in range(len(haystack) - n + 1):
        if haystack[i : i + n] == needle:
            return i
    return -1


def load_dataset(path, max_question_len: int = 30) -> Dataset:
    """Parse and cross-validate a JSON-lines corpus file."""
    stories: dict[str, Story] = {}
    examples: list[QAExample] = []
    seen_examples: set[str] = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusError(f"line {lineno}: invalid JSON ({exc.msg})") from exc
            kind = rec.get("type")
            if kind == "story":
                story = _parse_story(rec, lineno)
                if story.story_id in stories:
                    raise CorpusError(f"line {lineno}: duplicate story_id {story.story_id!r}")
                stories[story.story_id] = story
            elif kind == "qa":
                ex = _parse_qa(rec, lineno, max_question_len)
                if ex.example_id in seen_examples:
                    raise CorpusError(f"line {lineno}: duplicate example_id {ex.example_id!r}")
                seen_examples.add(ex.example_id)
                examples.append(ex)
            else:
                raise CorpusError(f"line {lineno}: unknown record type {kind!r}")
    for ex in examples:
        if ex.story_id not in stories:
            raise CorpusError(
                f"example {ex.example_id!r} references missing story_id {ex.story_id!r}"
            )
    return Dataset(stories=stories, examples=tuple(examples))


def _parse_story(rec, lineno):
    try:
        story_id, text = rec["story_id"], rec["text"]
    except KeyError as exc:
        raise CorpusError(f"line {lineno}: story record missing field {exc}") from exc
    tokens = tuple(tokenize(text))
    if not tokens:
        raise CorpusError(f"line {lineno}: story {story_id!r} has no tokens")
    return Story(story_id=str(story_id), tokens=tokens)


def _parse_qa(rec, lineno, max_question_len):
    try:
        example_id = rec["example_id"]
        story_id = rec["story_id"]
        question = rec["question"]
        answers = rec["answers"]
        split = rec["split"]
    except KeyError as exc:
        raise CorpusError(f"line {lineno}: qa record missing field {exc}") from exc
    if split not in ("train", "dev", "test"):
        raise CorpusError(f"line {lineno}: bad split {split!r}")
    if not isinstance(answers, list) or len(answers) != 2:
        raise CorpusError(f"line {lineno}: answers must be a list of exactly two strings")
    answer_tokens = tuple(tuple(tokenize(a)) for a in answers)
    if any(not a for a in answer_tokens):
        raise CorpusError(f"line {lineno}: empty answer after tokenization")
    return QAExample(
        example_id=str(example_id),
        story_id=str(story_id),
        question_tokens=tuple(tokenize(question))[:max_question_len],
        answers=answer_tokens,  # type: ignore[arg-type]
        split=split,
    )


def build_input_vocab(dataset: Dataset) -> Vocab:
    """Embedding-side vocabulary: every token seen anywhere in the dataset.

    Separate from the generation vocabulary; embeddings are frozen, so this
    carries no training leakage.
    """
    seen: dict[str, int] = {}
    for story in dataset.stories.values():
        for tok in story.tokens:
            seen[tok] = seen.get(tok, 0) + 1
    for ex in dataset.examples:
        for tok in ex.question_tokens:
            seen[tok] = seen.get(tok, 0) + 1
        for ans in ex.answers:
            for tok in ans:
                seen[tok] = seen.get(tok, 0) + 1
    ordered = sorted(seen, key=lambda t: (-seen[t], t))
    return Vocab(ordered)
