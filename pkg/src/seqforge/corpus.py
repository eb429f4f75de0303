"""Synthetic corpora and a seeded synthetic "pretrained" encoder.

Token id layout for a synthetic vocabulary of size V with S sentinels:

    0..2            pad / bos / eos
    3..V-S-2        regular tokens, split into disjoint per-language bands
    V-S-1           separator (translation span corruption)
    V-S..V-1        sentinels, ascending

Languages are disjoint id bands so multilingual sampling and the
translation tasks can be exercised without any real text. Every
generated example is a pure function of (spec, split, index).
"""

from __future__ import annotations

import json
import zlib
from dataclasses import dataclass, asdict
from pathlib import Path

import numpy as np

from .archive import CheckpointArchive
from .model import ModelConfig, parameter_shape
from .surgery import _model_name, encoder_archive_names

TASKS = ("copy", "reverse", "toy-translation")
DEFAULT_SENTINELS = 16


@dataclass(frozen=True)
class SyntheticTaskSpec:
    task: str
    vocab_size: int
    min_len: int
    max_len: int
    lang_sizes: tuple[int, ...]  # mono corpus lines per language
    train_pairs: int
    test_pairs: int
    seed: int
    num_sentinels: int = DEFAULT_SENTINELS

    def __post_init__(self):
        if self.task not in TASKS:
            raise ValueError(f"unknown task {self.task!r}; choose from {TASKS}")
        if not 2 <= self.min_len <= self.max_len:
            raise ValueError("need 2 <= min_len <= max_len")
        langs = max(2 if self.task == "toy-translation" else 1, len(self.lang_sizes))
        if self.regular_band_size() < langs:
            raise ValueError("vocabulary too small for the language bands")

    @property
    def sentinel_base(self) -> int:
        return self.vocab_size - self.num_sentinels

    @property
    def separator(self) -> int:
        return self.sentinel_base - 1

    def regular_band_size(self) -> int:
        return self.separator - 3

    def num_languages(self) -> int:
        return max(2 if self.task == "toy-translation" else 1, len(self.lang_sizes))

    def language_bands(self) -> list[tuple[int, int]]:
        """Disjoint [lo, hi) id ranges, one per language."""
        n = self.num_languages()
        width = self.regular_band_size() // n
        return [(3 + i * width, 3 + (i + 1) * width) for i in range(n)]


def translation_map(spec: SyntheticTaskSpec) -> np.ndarray:
    """Deterministic per-token map for toy-translation: a seeded permutation
    of the source band, offset into the target band."""
    (lo0, hi0), (lo1, _) = spec.language_bands()[:2]
    perm = np.random.default_rng(spec.seed ^ 0x5EED).permutation(hi0 - lo0)
    return lo1 + perm  # index by (src_id - lo0)


def _example_rng(spec: SyntheticTaskSpec, split: str, index: int) -> np.random.Generator:
    tag = zlib.crc32(split.encode())  # stable across processes, unlike hash()
    return np.random.default_rng(np.random.SeedSequence((spec.seed, tag, index)))


def _draw_sequence(rng, band: tuple[int, int], min_len: int, max_len: int) -> np.ndarray:
    n = int(rng.integers(min_len, max_len + 1))
    return rng.integers(band[0], band[1], size=n)


def make_pair(spec: SyntheticTaskSpec, split: str, index: int) -> tuple[np.ndarray, np.ndarray]:
    rng = _example_rng(spec, split, index)
    bands = spec.language_bands()
    src = _draw_sequence(rng, bands[0], spec.min_len, spec.max_len)
    if spec.task == "copy":
        tgt = src.copy()
    elif spec.task == "reverse":
        tgt = src[::-1].copy()
    else:
        tgt = translation_map(spec)[src - bands[0][0]]
    return src, tgt


def make_mono(spec: SyntheticTaskSpec, lang: int, index: int) -> np.ndarray:
    rng = _example_rng(spec, f"mono{lang}", index)
    return _draw_sequence(rng, spec.language_bands()[lang], spec.min_len, spec.max_len)


# ---------------------------------------------------------------------------
# shard files: pairs are "src ids<TAB>tgt ids", mono is one sequence per line
# ---------------------------------------------------------------------------

def format_ids(ids) -> str:
    return " ".join(str(int(i)) for i in ids)


def parse_ids(text: str) -> np.ndarray:
    return np.array([int(t) for t in text.split()], dtype=np.int64)


def write_pairs(path, pairs) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for src, tgt in pairs:
            fh.write(f"{format_ids(src)}\t{format_ids(tgt)}\n")


def read_pairs(path) -> list[tuple[np.ndarray, np.ndarray]]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise ValueError(f"{path}:{line_no}: expected 'src<TAB>tgt'")
            out.append((parse_ids(parts[0]), parse_ids(parts[1])))
    return out


def write_mono(path, sequences) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for seq in sequences:
            fh.write(format_ids(seq) + "\n")


def read_mono(path) -> list[np.ndarray]:
    with open(path, encoding="utf-8") as fh:
        return [parse_ids(line) for line in fh if line.strip()]


def gen_corpus(spec: SyntheticTaskSpec, out_dir) -> dict[str, Path]:
    """Write mono shards per language plus train/test pair shards."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written: dict[str, Path] = {}
    for lang, size in enumerate(spec.lang_sizes):
        path = out_dir / f"mono.{lang}.ids"
        write_mono(path, (make_mono(spec, lang, i) for i in range(size)))
        written[f"mono.{lang}"] = path
    for split, count in (("train", spec.train_pairs), ("test", spec.test_pairs)):
        path = out_dir / f"{split}.pairs"
        write_pairs(path, (make_pair(spec, split, i) for i in range(count)))
        written[split] = path
    spec_path = out_dir / "spec.json"
    with open(spec_path, "w", encoding="utf-8") as fh:
        json.dump(asdict(spec), fh, indent=1, sort_keys=True)
        fh.write("\n")
    written["spec"] = spec_path
    return written


def gen_encoder(config: ModelConfig, seed: int) -> CheckpointArchive:
    """A random but seeded encoder checkpoint in the archive format.

    Layer-norm gains and biases are randomized (not 1/0) so that every
    tensor is unique and weight-surgery audits by element-wise equality
    are unambiguous.
    """
    rng = np.random.default_rng(seed)
    tensors: dict[str, np.ndarray] = {}
    for name in encoder_archive_names(config.encoder_layers):
        shape = parameter_shape(_model_name(name), config)
        loc = 1.0 if name.endswith(".gain") else 0.0
        std = 0.05 if name.endswith(".gain") else 0.02
        tensors[name] = rng.normal(loc, std, size=shape).astype(np.float32)
    return CheckpointArchive(tensors)
