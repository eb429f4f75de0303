"""On-disk checkpoint format: manifest.json + tensors.bin.

manifest.json is a JSON list of {name, shape, dtype: "f32", offset};
tensors.bin holds the little-endian IEEE-754 float32 payloads
concatenated in manifest order. Offsets are byte offsets into the blob.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

MANIFEST_NAME = "manifest.json"
BLOB_NAME = "tensors.bin"

_DTYPE = np.dtype("<f4")


class ArchiveError(ValueError):
    """A checkpoint failed structural validation."""


class CheckpointArchive:
    """An ordered named-tensor store; values are float32 in memory."""

    def __init__(self, tensors: dict[str, np.ndarray]):
        names = list(tensors)
        if len(set(names)) != len(names):
            raise ArchiveError("duplicate tensor names")
        self.tensors = {n: np.ascontiguousarray(a, dtype=np.float32) for n, a in tensors.items()}

    def __eq__(self, other) -> bool:
        if not isinstance(other, CheckpointArchive):
            return NotImplemented
        return (list(self.tensors) == list(other.tensors)
                and all(np.array_equal(self.tensors[n], other.tensors[n]) for n in self.tensors))

    def manifest(self) -> list[dict]:
        entries = []
        offset = 0
        for name, arr in self.tensors.items():
            entries.append({"name": name, "shape": list(arr.shape), "dtype": "f32",
                            "offset": offset})
            offset += arr.size * _DTYPE.itemsize
        return entries

    def save(self, directory) -> None:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        with open(directory / MANIFEST_NAME, "w", encoding="utf-8") as fh:
            json.dump(self.manifest(), fh, indent=1)
            fh.write("\n")
        with open(directory / BLOB_NAME, "wb") as fh:
            for arr in self.tensors.values():
                fh.write(arr.astype(_DTYPE, copy=False).tobytes())

    @classmethod
    def load(cls, directory) -> "CheckpointArchive":
        directory = Path(directory)
        manifest_path = directory / MANIFEST_NAME
        blob_path = directory / BLOB_NAME
        if not manifest_path.exists():
            raise ArchiveError(f"no {MANIFEST_NAME} in {directory}")
        with open(manifest_path, encoding="utf-8") as fh:
            entries = json.load(fh)
        blob = blob_path.read_bytes()

        names = [e["name"] for e in entries]
        if len(set(names)) != len(names):
            raise ArchiveError(f"duplicate tensor names in {manifest_path}")
        tensors: dict[str, np.ndarray] = {}
        expected_offset = 0
        for e in entries:
            if e.get("dtype") != "f32":
                raise ArchiveError(f"tensor {e['name']}: unsupported dtype {e.get('dtype')!r}")
            if e["offset"] != expected_offset:
                raise ArchiveError(
                    f"tensor {e['name']}: offset {e['offset']} does not match "
                    f"expected {expected_offset} (offsets must ascend without gaps)")
            shape = tuple(int(s) for s in e["shape"])
            nbytes = int(np.prod(shape, dtype=np.int64)) * _DTYPE.itemsize
            chunk = blob[expected_offset:expected_offset + nbytes]
            if len(chunk) < nbytes:
                raise ArchiveError(f"tensor {e['name']}: blob truncated")
            tensors[e["name"]] = np.frombuffer(chunk, dtype=_DTYPE).reshape(shape).astype(np.float32)
            expected_offset += nbytes
        if expected_offset != len(blob):
            raise ArchiveError(
                f"blob has {len(blob)} bytes but manifest accounts for {expected_offset}")
        return cls(tensors)


def average_checkpoints(archives: list[CheckpointArchive]) -> CheckpointArchive:
    """Element-wise arithmetic mean; all manifests must agree on names,
    order and shapes."""
    if not archives:
        raise ArchiveError("no archives to average")
    first = archives[0]
    ref = [(n, a.shape) for n, a in first.tensors.items()]
    for i, other in enumerate(archives[1:], start=2):
        got = [(n, a.shape) for n, a in other.tensors.items()]
        if got != ref:
            diff = next((a, b) for a, b in zip(ref, got) if a != b) if len(got) == len(ref) \
                else (f"{len(ref)} tensors", f"{len(got)} tensors")
            raise ArchiveError(f"archive {i} manifest mismatch: {diff[0]} vs {diff[1]}")
    out = {}
    for name in first.tensors:
        acc = np.zeros_like(first.tensors[name], dtype=np.float64)
        for a in archives:
            acc += a.tensors[name]
        out[name] = (acc / len(archives)).astype(np.float32)
    return CheckpointArchive(out)
