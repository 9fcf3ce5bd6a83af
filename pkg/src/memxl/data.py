"""Corpus loading, character/word vocabularies, and contiguous-stream
batching for recurrent-memory training."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

LEVELS = ("char", "word")
UNK = "<unk>"
EOT = "<eot>"


@dataclass
class Vocabulary:
    """Token <-> id maps. Word level reserves unknown and end-of-text ids
    after the content tokens; character level has no specials and rejects
    unseen characters outright."""

    tokens: list[str]
    level: str
    lookup: dict[str, int] = field(init=False, repr=False)

    def __post_init__(self):
        if self.level not in LEVELS:
            raise ValueError(f"level must be one of {LEVELS}, got {self.level!r}")
        self.lookup = {t: i for i, t in enumerate(self.tokens)}
        if len(self.lookup) != len(self.tokens):
            raise ValueError("duplicate tokens in vocabulary")

    @property
    def size(self) -> int:
        return len(self.tokens)

    @property
    def unk_id(self) -> int | None:
        return self.lookup[UNK] if self.level == "word" else None

    @property
    def eot_id(self) -> int | None:
        return self.lookup[EOT] if self.level == "word" else None

    def to_dict(self) -> dict:
        return {"level": self.level, "tokens": list(self.tokens)}

    @staticmethod
    def from_dict(d: dict) -> "Vocabulary":
        return Vocabulary(tokens=list(d["tokens"]), level=d["level"])


def tokenize(text: str, level: str) -> list[str]:
    if level == "char":
        return list(text)
    if level == "word":
        return text.split()
    raise ValueError(f"level must be one of {LEVELS}, got {level!r}")


def build_vocab(tokens: list[str], level: str) -> Vocabulary:
    content = sorted(set(tokens) - {UNK, EOT})
    if level == "word":
        content += [UNK, EOT]
    return Vocabulary(tokens=content, level=level)


def encode(vocab: Vocabulary, tokens: list[str]) -> np.ndarray:
    lookup = vocab.lookup
    if vocab.level == "word":
        unk = vocab.unk_id
        return np.array([lookup.get(t, unk) for t in tokens], dtype=np.int64)
    ids = np.empty(len(tokens), dtype=np.int64)
    for i, t in enumerate(tokens):
        try:
            ids[i] = lookup[t]
        except KeyError:
            raise ValueError(f"character {t!r} not in vocabulary") from None
    return ids


@dataclass
class Corpus:
    ids: np.ndarray
    vocab: Vocabulary
    level: str

    def __len__(self) -> int:
        return len(self.ids)


def corpus_from_text(text: str, level: str, vocab: Vocabulary | None = None) -> Corpus:
    tokens = tokenize(text, level)
    if not tokens:
        raise ValueError("empty corpus")
    if vocab is None:
        vocab = build_vocab(tokens, level)
    elif vocab.level != level:
        raise ValueError(f"vocabulary level {vocab.level!r} does not match requested {level!r}")
    return Corpus(ids=encode(vocab, tokens), vocab=vocab, level=level)


def load_corpus(path, level: str, vocab: Vocabulary | None = None) -> Corpus:
    """Read a text file as one token stream.

    Pass the training split's vocabulary when loading validation/test
    splits so ids line up (word-level OOV maps to the unknown id)."""
    text = Path(path).read_text(encoding="utf-8")
    if not text:
        raise ValueError(f"empty corpus file: {path}")
    return corpus_from_text(text, level, vocab)


@dataclass
class Batches:
    """The corpus cut into ``B`` contiguous streams advanced ``block``
    tokens per step, so each stream's memory recurrence stays meaningful.
    Targets are the inputs shifted one token forward."""

    inputs: np.ndarray   # [B, S]
    targets: np.ndarray  # [B, S]
    block: int

    @property
    def batch(self) -> int:
        return self.inputs.shape[0]

    @property
    def n_steps(self) -> int:
        return self.inputs.shape[1] // self.block

    def step(self, t: int) -> tuple[np.ndarray, np.ndarray]:
        """Input/target blocks for global step ``t`` (wraps per epoch)."""
        j = (t % self.n_steps) * self.block
        return self.inputs[:, j : j + self.block], self.targets[:, j : j + self.block]


def batchify(ids: np.ndarray, batch: int, block: int) -> Batches:
    ids = np.asarray(ids)
    if batch < 1 or block < 1:
        raise ValueError(f"batch and block must be positive, got {batch} and {block}")
    steps = (len(ids) - 1) // (batch * block)
    if steps < 1:
        raise ValueError(
            f"corpus of {len(ids)} tokens is too small for batch {batch} x block {block}"
        )
    span = steps * block
    used = batch * span
    return Batches(
        inputs=ids[:used].reshape(batch, span),
        targets=ids[1 : used + 1].reshape(batch, span),
        block=block,
    )
