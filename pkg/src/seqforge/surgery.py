"""Weight surgery: build a seq2seq model entirely from encoder weights.

An encoder checkpoint carries embeddings, an embedding layer norm, and L
(even) identical post-norm layers. The seq2seq encoder copies it
verbatim. Decoder block i (1-indexed) takes its self-attention and
bottom FFN (with their norms) from odd encoder layer 2i-1, and its
cross-attention and top FFN from even layer 2i, projection by
projection. Embeddings are shared; layer norms are duplicated as
independent copies. Nothing is randomly initialized, and the returned
MappingReport makes the copy auditable tensor by tensor.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .archive import ArchiveError, CheckpointArchive
from .model import (
    ModelConfig,
    Seq2SeqModel,
    attention_names,
    encoder_layer_names,
    ffn_names,
    norm_names,
    parameter_names,
    parameter_shape,
)

ENCODER_EXTRA_NAMES = ("embed.token", "embed.position", "embed.norm.gain", "embed.norm.bias")


class SurgeryConfigError(ValueError):
    """The encoder/config pair cannot be mapped."""


@dataclass
class EncoderParams:
    """In-memory pretrained-encoder parameter set with inferred dimensions."""

    tensors: dict[str, np.ndarray]
    layers: int
    hidden: int
    ffn_dim: int
    vocab_size: int
    max_positions: int


@dataclass
class MappingReport:
    """Where every decoder parameter came from."""

    entries: list[tuple[str, str, str]] = field(default_factory=list)  # (dst, src, transform)
    unmapped: list[str] = field(default_factory=list)

    def source_of(self, decoder_path: str) -> str:
        for dst, src, _ in self.entries:
            if dst == decoder_path:
                return src
        raise KeyError(decoder_path)

    def to_lines(self) -> list[str]:
        lines = [f"{dst} <- {src} ({tr})" for dst, src, tr in self.entries]
        lines += [f"{path} <- UNMAPPED" for path in self.unmapped]
        return lines


def encoder_archive_names(layers: int) -> list[str]:
    names = list(ENCODER_EXTRA_NAMES)
    for i in range(1, layers + 1):
        names += encoder_layer_names(i)
    return names


def load_encoder(archive: CheckpointArchive) -> EncoderParams:
    """Validate an encoder checkpoint and infer its dimensions from shapes."""
    tensors = archive.tensors
    for name in ENCODER_EXTRA_NAMES:
        if name not in tensors:
            raise ArchiveError(f"missing tensor: {name}")
    layer_ids = set()
    for name in tensors:
        if name.startswith("encoder.layer."):
            layer_ids.add(int(name.split(".")[2]))
    if not layer_ids:
        raise ArchiveError("missing tensor: encoder.layer.1.attn.wq")
    layers = max(layer_ids)
    if layer_ids != set(range(1, layers + 1)):
        missing = min(set(range(1, layers + 1)) - layer_ids)
        raise ArchiveError(f"missing tensor: encoder.layer.{missing}.attn.wq")

    vocab_size, hidden = tensors["embed.token"].shape
    max_positions = tensors["embed.position"].shape[0]
    ffn_dim = tensors["encoder.layer.1.ffn.w1"].shape[1]
    probe = ModelConfig(vocab_size=vocab_size, hidden=hidden, ffn_dim=ffn_dim, heads=1,
                        encoder_layers=layers, decoder_blocks=1, max_positions=max_positions)

    expected = encoder_archive_names(layers)
    for name in expected:
        if name not in tensors:
            raise ArchiveError(f"missing tensor: {name}")
        want = parameter_shape(_model_name(name), probe)
        if tuple(tensors[name].shape) != want:
            raise ArchiveError(
                f"tensor {name} has shape {tuple(tensors[name].shape)}, expected {want}")
    extra = [n for n in tensors if n not in expected]
    if extra:
        raise ArchiveError(f"unexpected tensor: {extra[0]}")
    return EncoderParams(tensors={n: tensors[n] for n in expected}, layers=layers,
                         hidden=hidden, ffn_dim=ffn_dim, vocab_size=vocab_size,
                         max_positions=max_positions)


def _model_name(archive_name: str) -> str:
    # the encoder archive's embed.norm plays the per-stack embed_norm role
    if archive_name.startswith("embed.norm."):
        return archive_name.replace("embed.norm.", "encoder.embed_norm.")
    return archive_name


def decoder_mapping(layers: int) -> list[tuple[str, str]]:
    """(decoder path, encoder path) pairs for an L-layer encoder."""
    pairs = [(f"decoder.embed_norm.{f}", f"embed.norm.{f}") for f in ("gain", "bias")]
    for block in range(1, layers // 2 + 1):
        odd, even = 2 * block - 1, 2 * block
        d = f"decoder.block.{block}"
        for dst_group, src_layer, src_group, names in (
            ("self_attn", odd, "attn", attention_names),
            ("self_attn_norm", odd, "attn_norm", norm_names),
            ("bottom_ffn", odd, "ffn", ffn_names),
            ("bottom_ffn_norm", odd, "ffn_norm", norm_names),
            ("cross_attn", even, "attn", attention_names),
            ("cross_attn_norm", even, "attn_norm", norm_names),
            ("top_ffn", even, "ffn", ffn_names),
            ("top_ffn_norm", even, "ffn_norm", norm_names),
        ):
            src_prefix = f"encoder.layer.{src_layer}.{src_group}"
            for dst, src in zip(names(f"{d}.{dst_group}"), names(src_prefix)):
                pairs.append((dst, src))
    return pairs


def build_seq2seq(encoder: EncoderParams, config: ModelConfig) -> tuple[Seq2SeqModel, MappingReport]:
    """Assemble the model; every parameter is a copy of an encoder tensor."""
    if encoder.layers % 2 != 0:
        raise SurgeryConfigError(
            f"encoder has {encoder.layers} layers; an odd layer count cannot fill "
            f"interleaved decoder blocks")
    if config.encoder_layers != encoder.layers:
        raise SurgeryConfigError(
            f"config.encoder_layers={config.encoder_layers} but the checkpoint has "
            f"{encoder.layers} layers")
    if config.decoder_blocks * 2 != encoder.layers:
        raise SurgeryConfigError(
            f"config.decoder_blocks={config.decoder_blocks}; an {encoder.layers}-layer "
            f"encoder fills exactly {encoder.layers // 2} blocks")
    for attr in ("hidden", "ffn_dim", "vocab_size", "max_positions"):
        if getattr(config, attr) != getattr(encoder, attr):
            raise SurgeryConfigError(
                f"config.{attr}={getattr(config, attr)} does not match the "
                f"checkpoint ({getattr(encoder, attr)})")

    params: dict[str, np.ndarray] = {}
    report = MappingReport()
    for name in ("embed.token", "embed.position"):
        params[name] = encoder.tensors[name].copy()
    for f in ("gain", "bias"):
        params[f"encoder.embed_norm.{f}"] = encoder.tensors[f"embed.norm.{f}"].copy()
    for i in range(1, encoder.layers + 1):
        for name in encoder_layer_names(i):
            params[name] = encoder.tensors[name].copy()
    for dst, src in decoder_mapping(encoder.layers):
        params[dst] = encoder.tensors[src].copy()
        report.entries.append((dst, src, "copy"))

    report.unmapped = [n for n in parameter_names(config)
                       if n.startswith("decoder.") and n not in params]
    model = Seq2SeqModel(config, params)
    return model, report


def config_for_encoder(encoder: EncoderParams, heads: int, dropout: float = 0.0) -> ModelConfig:
    return ModelConfig(vocab_size=encoder.vocab_size, hidden=encoder.hidden,
                       ffn_dim=encoder.ffn_dim, heads=heads,
                       encoder_layers=encoder.layers, decoder_blocks=encoder.layers // 2,
                       max_positions=encoder.max_positions, dropout=dropout)


def save_archive(model: Seq2SeqModel) -> CheckpointArchive:
    """Snapshot the model's parameters as an archive (float32 on disk)."""
    return CheckpointArchive({n: a.copy() for n, a in model.params.items()})


def load_model(archive: CheckpointArchive, config: ModelConfig,
               dtype=np.float32) -> Seq2SeqModel:
    params = {n: a.astype(dtype) for n, a in archive.tensors.items()}
    return Seq2SeqModel(config, params)
