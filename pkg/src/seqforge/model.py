"""Encoder-decoder transformer with interleaved decoder blocks.

The encoder is a standard post-norm (BERT-family) stack. Each decoder
block interleaves attention with feed-forward sub-layers in the order
self-attention -> FFN -> cross-attention -> FFN, so one block is
structurally two encoder layers and can be initialized entirely from
encoder weights (see surgery.build_seq2seq).

Parameters live in an ordered name -> ndarray dict with dotted paths
(encoder.layer.3.ffn.w1, decoder.block.1.cross_attn.wq, ...); layers and
blocks are 1-indexed. Token/position embeddings are shared between the
stacks and the output projection is tied to the token embedding.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T

PAD_ID = 0
BOS_ID = 1
EOS_ID = 2

_ATTN_FIELDS = ("wq", "bq", "wk", "bk", "wv", "bv", "wo", "bo")
_FFN_FIELDS = ("w1", "b1", "w2", "b2")
_NORM_FIELDS = ("gain", "bias")

LN_EPS = 1e-5


@dataclass(frozen=True)
class ModelConfig:
    vocab_size: int
    hidden: int
    ffn_dim: int
    heads: int
    encoder_layers: int
    decoder_blocks: int
    max_positions: int
    dropout: float = 0.0
    pre_norm: bool = False

    def __post_init__(self):
        if min(self.vocab_size, self.hidden, self.ffn_dim, self.heads,
               self.encoder_layers, self.decoder_blocks, self.max_positions) < 1:
            raise ValueError("all ModelConfig dimensions must be positive")
        if self.hidden % self.heads != 0:
            raise ValueError(f"hidden={self.hidden} not divisible by heads={self.heads}")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError(f"dropout={self.dropout} outside [0, 1)")

    def to_dict(self) -> dict:
        return {
            "vocab_size": self.vocab_size, "hidden": self.hidden, "ffn_dim": self.ffn_dim,
            "heads": self.heads, "encoder_layers": self.encoder_layers,
            "decoder_blocks": self.decoder_blocks, "max_positions": self.max_positions,
            "dropout": self.dropout, "pre_norm": self.pre_norm,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(**d)


def base_config(vocab_size: int, max_positions: int = 512) -> ModelConfig:
    """The base-size preset: 768 hidden, 3072 FFN, 12 heads, 12 encoder
    layers feeding 6 interleaved decoder blocks."""
    return ModelConfig(vocab_size=vocab_size, hidden=768, ffn_dim=3072, heads=12,
                       encoder_layers=12, decoder_blocks=6, max_positions=max_positions)


# ---------------------------------------------------------------------------
# parameter schema
# ---------------------------------------------------------------------------

def attention_names(prefix: str) -> list[str]:
    return [f"{prefix}.{f}" for f in _ATTN_FIELDS]


def ffn_names(prefix: str) -> list[str]:
    return [f"{prefix}.{f}" for f in _FFN_FIELDS]


def norm_names(prefix: str) -> list[str]:
    return [f"{prefix}.{f}" for f in _NORM_FIELDS]


def encoder_layer_names(i: int) -> list[str]:
    p = f"encoder.layer.{i}"
    return (attention_names(f"{p}.attn") + norm_names(f"{p}.attn_norm")
            + ffn_names(f"{p}.ffn") + norm_names(f"{p}.ffn_norm"))


def decoder_block_names(i: int) -> list[str]:
    p = f"decoder.block.{i}"
    return (attention_names(f"{p}.self_attn") + norm_names(f"{p}.self_attn_norm")
            + ffn_names(f"{p}.bottom_ffn") + norm_names(f"{p}.bottom_ffn_norm")
            + attention_names(f"{p}.cross_attn") + norm_names(f"{p}.cross_attn_norm")
            + ffn_names(f"{p}.top_ffn") + norm_names(f"{p}.top_ffn_norm"))


def parameter_names(config: ModelConfig) -> list[str]:
    names = ["embed.token", "embed.position"]
    names += norm_names("encoder.embed_norm")
    for i in range(1, config.encoder_layers + 1):
        names += encoder_layer_names(i)
    names += norm_names("decoder.embed_norm")
    for i in range(1, config.decoder_blocks + 1):
        names += decoder_block_names(i)
    return names


def parameter_shape(name: str, config: ModelConfig) -> tuple[int, ...]:
    h, f = config.hidden, config.ffn_dim
    if name == "embed.token":
        return (config.vocab_size, h)
    if name == "embed.position":
        return (config.max_positions, h)
    leaf = name.rsplit(".", 1)[1]
    if leaf in ("gain", "bias", "bq", "bk", "bv", "bo", "b2"):
        return (h,)
    if leaf in ("wq", "wk", "wv", "wo"):
        return (h, h)
    if leaf == "w1":
        return (h, f)
    if leaf == "b1":
        return (f,)
    if leaf == "w2":
        return (f, h)
    raise KeyError(f"unknown parameter {name}")


def init_params(config: ModelConfig, seed: int, dtype=np.float32,
                weight_std: float = 0.02) -> dict[str, np.ndarray]:
    """Fresh random parameters: N(0, weight_std) weights, zero biases,
    unit layer-norm gains."""
    rng = np.random.default_rng(seed)
    params: dict[str, np.ndarray] = {}
    for name in parameter_names(config):
        shape = parameter_shape(name, config)
        leaf = name.rsplit(".", 1)[1]
        if leaf == "gain":
            arr = np.ones(shape)
        elif len(shape) == 1:
            arr = np.zeros(shape)
        else:
            arr = rng.normal(0.0, weight_std, size=shape)
        params[name] = arr.astype(dtype)
    return params


# ---------------------------------------------------------------------------
# forward graph pieces
# ---------------------------------------------------------------------------

def _attention(g, leaves, prefix, q_in, heads, kv_in=None, kv=None, mask=None,
               dropout_p=0.0, rng=None):
    """Multi-head attention. Keys/values come from projecting kv_in, or from
    a precomputed (K, V) tensor pair (incremental decoding cache)."""
    if kv is None:
        kv = project_kv(g, leaves, prefix, kv_in)
    k_all, v_all = kv
    q_all = T.add(T.matmul(q_in, leaves[f"{prefix}.wq"]), leaves[f"{prefix}.bq"])
    dh = q_all.shape[-1] // heads
    ctx = []
    for h in range(heads):
        q = T.slice_axis(q_all, 1, h * dh, (h + 1) * dh)
        k = T.slice_axis(k_all, 1, h * dh, (h + 1) * dh)
        v = T.slice_axis(v_all, 1, h * dh, (h + 1) * dh)
        scores = T.scale(T.matmul(q, T.transpose(k)), 1.0 / np.sqrt(dh))
        if mask is not None:
            scores = T.add_const(scores, mask)
        probs = T.softmax(scores, axis=-1)
        if dropout_p > 0.0:
            probs = T.dropout(probs, dropout_p, rng)
        ctx.append(T.matmul(probs, v))
    ctx = ctx[0] if heads == 1 else T.concat(ctx, axis=1)
    return T.add(T.matmul(ctx, leaves[f"{prefix}.wo"]), leaves[f"{prefix}.bo"])


def project_kv(g, leaves, prefix, kv_in):
    k = T.add(T.matmul(kv_in, leaves[f"{prefix}.wk"]), leaves[f"{prefix}.bk"])
    v = T.add(T.matmul(kv_in, leaves[f"{prefix}.wv"]), leaves[f"{prefix}.bv"])
    return k, v


def _ffn(g, leaves, prefix, x):
    h = T.gelu(T.add(T.matmul(x, leaves[f"{prefix}.w1"]), leaves[f"{prefix}.b1"]))
    return T.add(T.matmul(h, leaves[f"{prefix}.w2"]), leaves[f"{prefix}.b2"])


def _norm(leaves, prefix, x):
    return T.layer_norm(x, leaves[f"{prefix}.gain"], leaves[f"{prefix}.bias"], eps=LN_EPS)


class _SubLayers:
    """Residual wiring for one stack. Post-norm (default): LN(x + f(x)),
    with the stack's extra LayerNorm applied to the embeddings. Pre-norm:
    x + f(LN(x)), with the extra LayerNorm moved to the stack output."""

    def __init__(self, g, leaves, pre_norm, dropout_p=0.0, rng=None):
        self.g = g
        self.leaves = leaves
        self.pre_norm = pre_norm
        self.dropout_p = dropout_p
        self.rng = rng

    def _drop(self, x):
        return T.dropout(x, self.dropout_p, self.rng) if self.dropout_p > 0.0 else x

    def embed(self, norm_prefix, ids):
        tok = T.embedding_lookup(self.leaves["embed.token"], ids)
        pos = T.embedding_lookup(self.leaves["embed.position"], np.arange(len(ids)))
        x = T.add(tok, pos)
        if not self.pre_norm:
            x = _norm(self.leaves, norm_prefix, x)
        return self._drop(x)

    def wrap(self, norm_prefix, x, fn):
        if self.pre_norm:
            return T.add(x, self._drop(fn(_norm(self.leaves, norm_prefix, x))))
        return _norm(self.leaves, norm_prefix, T.add(x, self._drop(fn(x))))

    def finish(self, norm_prefix, x):
        return _norm(self.leaves, norm_prefix, x) if self.pre_norm else x


def _mask_bias(mask, dtype):
    """Boolean keep-mask over key positions -> additive 0/-inf row vector."""
    mask = np.asarray(mask, dtype=bool)
    return np.where(mask, 0.0, -np.inf).astype(dtype).reshape(1, -1)


def causal_bias(n: int, dtype) -> np.ndarray:
    out = np.zeros((n, n), dtype=dtype)
    out[np.triu_indices(n, k=1)] = -np.inf
    return out


class Seq2SeqModel:
    """Parameter store plus the forward passes built on the autodiff tape.

    Forward methods that do not need gradients attach parameters as
    non-grad leaves, so the tape records nothing and the pass is a plain
    numpy computation.
    """

    def __init__(self, config: ModelConfig, params: dict[str, np.ndarray]):
        expected = parameter_names(config)
        missing = [n for n in expected if n not in params]
        if missing:
            raise ValueError(f"missing parameter: {missing[0]}")
        for name in expected:
            shape = parameter_shape(name, config)
            if tuple(params[name].shape) != shape:
                raise ValueError(
                    f"parameter {name} has shape {params[name].shape}, expected {shape}")
        self.config = config
        self.params = {n: params[n] for n in expected}  # canonical order
        self.dtype = next(iter(self.params.values())).dtype

    @classmethod
    def random_init(cls, config: ModelConfig, seed: int = 0, dtype=np.float32) -> "Seq2SeqModel":
        return cls(config, init_params(config, seed, dtype=dtype))

    def param_count(self) -> int:
        return sum(a.size for a in self.params.values())

    def _leaves(self, g: T.Graph, requires_grad: bool) -> dict[str, T.Tensor]:
        return {n: g.leaf(a, requires_grad=requires_grad) for n, a in self.params.items()}

    # -- encoder ------------------------------------------------------------

    def _check_ids(self, ids, what: str):
        ids = np.asarray(ids, dtype=np.int64)
        if ids.ndim != 1 or len(ids) == 0:
            raise ValueError(f"{what} must be a non-empty 1-D id sequence")
        if len(ids) > self.config.max_positions:
            raise ValueError(
                f"{what} length {len(ids)} exceeds max_positions {self.config.max_positions}")
        return ids

    def _encode_graph(self, g, leaves, source_ids, source_mask, dropout_p=0.0, rng=None):
        cfg = self.config
        bias = None if source_mask is None else _mask_bias(source_mask, self.dtype)
        sub = _SubLayers(g, leaves, cfg.pre_norm, dropout_p, rng)
        x = sub.embed("encoder.embed_norm", source_ids)
        for i in range(1, cfg.encoder_layers + 1):
            p = f"encoder.layer.{i}"
            x = sub.wrap(f"{p}.attn_norm", x,
                         lambda h, p=p: _attention(g, leaves, f"{p}.attn", h, cfg.heads,
                                                   kv_in=h, mask=bias,
                                                   dropout_p=dropout_p, rng=rng))
            x = sub.wrap(f"{p}.ffn_norm", x,
                         lambda h, p=p: _ffn(g, leaves, f"{p}.ffn", h))
        return sub.finish("encoder.embed_norm", x)

    def encode(self, source_ids, source_mask=None) -> np.ndarray:
        """Hidden states (src_len, hidden); masked positions never feed the
        attention outputs of unmasked positions."""
        source_ids = self._check_ids(source_ids, "source_ids")
        g = T.Graph(dtype=self.dtype)
        leaves = self._leaves(g, requires_grad=False)
        return self._encode_graph(g, leaves, source_ids, source_mask).data

    # -- decoder ------------------------------------------------------------

    def _decode_graph(self, g, leaves, target_ids, enc_states, source_mask,
                      cross_kv=None, dropout_p=0.0, rng=None):
        cfg = self.config
        n = len(target_ids)
        self_bias = causal_bias(n, self.dtype)
        cross_bias = None if source_mask is None else _mask_bias(source_mask, self.dtype)
        sub = _SubLayers(g, leaves, cfg.pre_norm, dropout_p, rng)
        y = sub.embed("decoder.embed_norm", target_ids)
        for i in range(1, cfg.decoder_blocks + 1):
            p = f"decoder.block.{i}"
            kv = None if cross_kv is None else cross_kv[i - 1]
            y = sub.wrap(f"{p}.self_attn_norm", y,
                         lambda h, p=p: _attention(g, leaves, f"{p}.self_attn", h,
                                                   cfg.heads, kv_in=h, mask=self_bias,
                                                   dropout_p=dropout_p, rng=rng))
            y = sub.wrap(f"{p}.bottom_ffn_norm", y,
                         lambda h, p=p: _ffn(g, leaves, f"{p}.bottom_ffn", h))
            y = sub.wrap(f"{p}.cross_attn_norm", y,
                         lambda h, p=p, kv=kv: _attention(g, leaves, f"{p}.cross_attn", h,
                                                          cfg.heads, kv_in=enc_states,
                                                          kv=kv, mask=cross_bias,
                                                          dropout_p=dropout_p, rng=rng))
            y = sub.wrap(f"{p}.top_ffn_norm", y,
                         lambda h, p=p: _ffn(g, leaves, f"{p}.top_ffn", h))
        y = sub.finish("decoder.embed_norm", y)
        return T.matmul(y, T.transpose(leaves["embed.token"]))

    def decode(self, target_ids, encoder_states, source_mask=None, cross_kv=None) -> np.ndarray:
        """Logits (tgt_len, vocab); position t depends only on target_ids[:t+1]
        and the encoder states. cross_kv, when given, must come from
        cross_attention_kv(encoder_states)."""
        target_ids = self._check_ids(target_ids, "target_ids")
        encoder_states = np.asarray(encoder_states)
        if encoder_states.ndim != 2 or encoder_states.shape[1] != self.config.hidden:
            raise ValueError(
                f"encoder_states shape {encoder_states.shape} does not match hidden "
                f"size {self.config.hidden}")
        g = T.Graph(dtype=self.dtype)
        leaves = self._leaves(g, requires_grad=False)
        enc = g.leaf(encoder_states)
        kv = None
        if cross_kv is not None:
            kv = [(g.leaf(k), g.leaf(v)) for k, v in cross_kv]
        return self._decode_graph(g, leaves, target_ids, enc, source_mask, cross_kv=kv).data

    def cross_attention_kv(self, encoder_states) -> list[tuple[np.ndarray, np.ndarray]]:
        """Per-block cross-attention (K, V), computed by the same code path
        decode uses, so cached and inline results are bit-identical."""
        g = T.Graph(dtype=self.dtype)
        leaves = self._leaves(g, requires_grad=False)
        enc = g.leaf(encoder_states)
        out = []
        for i in range(1, self.config.decoder_blocks + 1):
            k, v = project_kv(g, leaves, f"decoder.block.{i}.cross_attn", enc)
            out.append((k.data, v.data))
        return out

    # -- loss ---------------------------------------------------------------

    def _loss_graph(self, g, leaves, batch, smoothing, dropout_p=0.0, rng=None):
        cfg = self.config
        seq_losses = []
        total_tokens = 0
        for source_ids, target_ids in batch:
            src = self._check_ids(source_ids, "source_ids")
            tgt = np.asarray(target_ids, dtype=np.int64)
            if tgt.ndim != 1 or len(tgt) == 0:
                raise ValueError("target sequences must have length >= 1")
            dec_in = np.concatenate([[BOS_ID], tgt])
            labels = np.concatenate([tgt, [EOS_ID]])
            if len(dec_in) > cfg.max_positions:
                raise ValueError(
                    f"target_ids length {len(dec_in)} exceeds max_positions {cfg.max_positions}")
            enc = self._encode_graph(g, leaves, src, None, dropout_p, rng)
            logits = self._decode_graph(g, leaves, dec_in, enc, None,
                                        dropout_p=dropout_p, rng=rng)
            lp = T.log_softmax(logits, axis=-1)
            picked = T.sum_all(T.gather_rows(lp, labels))
            if smoothing == 0.0:
                seq_losses.append(T.scale(picked, -1.0))
            else:
                smooth = T.sum_all(lp)
                seq_losses.append(T.add(T.scale(picked, -(1.0 - smoothing)),
                                        T.scale(smooth, -smoothing / cfg.vocab_size)))
            total_tokens += len(labels)
        total = seq_losses[0]
        for s in seq_losses[1:]:
            total = T.add(total, s)
        return T.scale(total, 1.0 / total_tokens), total_tokens

    def forward_loss(self, batch, smoothing: float = 0.0) -> float:
        """Mean label-smoothed negative log-likelihood per target token.
        smoothing=0 is exact cross-entropy."""
        if not batch:
            raise ValueError("empty batch")
        g = T.Graph(dtype=self.dtype)
        leaves = self._leaves(g, requires_grad=False)
        loss, _ = self._loss_graph(g, leaves, batch, smoothing)
        return float(loss.data)

    def forward_backward(self, batch, smoothing: float = 0.0, dropout_p: float = 0.0,
                         rng: np.random.Generator | None = None):
        """Loss plus gradients for every parameter; returns
        (loss, grads dict, token count)."""
        if not batch:
            raise ValueError("empty batch")
        g = T.Graph(dtype=self.dtype)
        leaves = self._leaves(g, requires_grad=True)
        loss, tokens = self._loss_graph(g, leaves, batch, smoothing, dropout_p, rng)
        g.backward(loss)
        grads = {n: (t.grad if t.grad is not None else np.zeros_like(t.data))
                 for n, t in leaves.items()}
        return float(loss.data), grads, tokens

    def clone(self) -> "Seq2SeqModel":
        return Seq2SeqModel(self.config, {n: a.copy() for n, a in self.params.items()})
