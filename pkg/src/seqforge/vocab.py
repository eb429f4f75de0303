"""Whitespace tokenizer with byte fallback over a corpus-built vocabulary.

Layout: pad/bos/eos at 0..2, then 256 byte tokens, then the most frequent
corpus words, then the separator, then the sentinel band at the very top.
Words absent from the table encode as their UTF-8 bytes, so any string
round-trips exactly.
"""

from __future__ import annotations

from collections import Counter

import numpy as np

from .model import BOS_ID, EOS_ID, PAD_ID

_BYTE_BASE = 3


class Vocabulary:
    def __init__(self, words: list[str], num_sentinels: int = 16):
        if len(set(words)) != len(words):
            raise ValueError("duplicate words in vocabulary")
        self.words = list(words)
        self.num_sentinels = num_sentinels
        self.word_base = _BYTE_BASE + 256
        self._word_to_id = {w: self.word_base + i for i, w in enumerate(self.words)}

    @classmethod
    def build(cls, lines, max_words: int = 2000, num_sentinels: int = 16) -> "Vocabulary":
        counts = Counter()
        for line in lines:
            counts.update(line.split())
        ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
        return cls([w for w, _ in ranked[:max_words]], num_sentinels)

    @property
    def separator_id(self) -> int:
        return self.word_base + len(self.words)

    @property
    def sentinel_base_id(self) -> int:
        return self.separator_id + 1

    @property
    def size(self) -> int:
        return self.sentinel_base_id + self.num_sentinels

    def encode(self, text: str) -> np.ndarray:
        ids: list[int] = []
        prev_was_bytes = False
        for word in text.split():
            wid = self._word_to_id.get(word)
            if wid is not None:
                ids.append(wid)
                prev_was_bytes = False
            else:
                if prev_was_bytes:  # boundary byte between adjacent fallback words
                    ids.append(_BYTE_BASE + 0x20)
                ids.extend(_BYTE_BASE + b for b in word.encode("utf-8"))
                prev_was_bytes = True
        return np.array(ids, dtype=np.int64)

    def decode(self, ids) -> str:
        parts: list[str] = []
        byte_run: list[int] = []

        def flush():
            if byte_run:
                parts.extend(bytes(byte_run).decode("utf-8", errors="replace").split(" "))
                byte_run.clear()

        for t in np.asarray(ids, dtype=np.int64):
            t = int(t)
            if t in (PAD_ID, BOS_ID, EOS_ID):
                continue
            if _BYTE_BASE <= t < self.word_base:
                byte_run.append(t - _BYTE_BASE)
                continue
            flush()
            if t >= self.sentinel_base_id:
                parts.append(f"<extra_{t - self.sentinel_base_id}>")
            elif t == self.separator_id:
                parts.append("<sep>")
            elif t < self.word_base + len(self.words):
                parts.append(self.words[t - self.word_base])
            else:
                raise IndexError(f"id {t} outside the vocabulary of size {self.size}")
        flush()
        return " ".join(parts)
