"""Optimization loop: Adam with linear warmup/decay, global gradient
clipping, label-smoothed loss, and optional pre-training task mixing.

Everything is deterministic given (model bits, data order, seed): the
loop's randomness flows from independent child generators of the config
seed, and with mix_ratio == 0 the mixing draw is skipped entirely so the
trajectory is bit-identical to a loop with no mix stream.
"""

from __future__ import annotations

import time
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .corruption import strip_sentinels
from .model import Seq2SeqModel
from .surgery import save_archive

ADAM_EPS = 1e-8
MAX_CONSECUTIVE_BAD_STEPS = 10


class NonFiniteGradientError(RuntimeError):
    """A gradient turned inf/nan; the message names the parameter."""


@dataclass(frozen=True)
class TrainConfig:
    lr_peak: float
    warmup_steps: int
    total_steps: int
    betas: tuple[float, float] = (0.9, 0.999)
    clip_norm: float = 1.0
    smoothing: float = 0.1
    batch_tokens: int = 256
    mix_ratio: float = 0.0
    seed: int = 0
    accum_steps: int = 1
    save_every: int = 0  # 0: only the final checkpoint
    log_every: int = 50
    dropout: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.mix_ratio <= 1.0:
            raise ValueError(f"mix_ratio={self.mix_ratio} outside [0, 1]")
        if self.clip_norm <= 0.0:
            raise ValueError(f"clip_norm={self.clip_norm} must be positive")
        if not 1 <= self.warmup_steps <= self.total_steps:
            raise ValueError("need 1 <= warmup_steps <= total_steps")
        if self.batch_tokens < 1 or self.accum_steps < 1:
            raise ValueError("batch_tokens and accum_steps must be positive")

    def to_dict(self) -> dict:
        d = {k: getattr(self, k) for k in self.__dataclass_fields__}
        d["betas"] = list(self.betas)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        d = dict(d)
        if "betas" in d:
            d["betas"] = tuple(d["betas"])
        return cls(**d)


def pretrain_preset(lr_peak: float, total_steps: int = 600_000, **overrides) -> TrainConfig:
    """Full-scale pre-training settings: 10,000 warmup steps, Adam
    betas (0.9, 0.999), gradient norm clipped to 1.0."""
    base = dict(lr_peak=lr_peak, warmup_steps=10_000, total_steps=total_steps,
                betas=(0.9, 0.999), clip_norm=1.0, smoothing=0.1)
    base.update(overrides)
    return TrainConfig(**base)


def finetune_preset(total_steps: int, **overrides) -> TrainConfig:
    """Full-scale fine-tuning settings: peak learning rate 3e-4 with 4,000
    warmup steps, Adam betas (0.9, 0.98), label smoothing 0.1."""
    base = dict(lr_peak=3e-4, warmup_steps=4_000, total_steps=total_steps,
                betas=(0.9, 0.98), clip_norm=1.0, smoothing=0.1)
    base.update(overrides)
    return TrainConfig(**base)


@dataclass
class TrainState:
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    loss_history: deque = field(default_factory=lambda: deque(maxlen=100))
    mix_rng: np.random.Generator | None = None
    dropout_rng: np.random.Generator | None = None

    @classmethod
    def for_model(cls, model: Seq2SeqModel) -> "TrainState":
        return cls(m={n: np.zeros_like(a) for n, a in model.params.items()},
                   v={n: np.zeros_like(a) for n, a in model.params.items()})


def lr_schedule(step: int, config: TrainConfig) -> float:
    """Linear ramp 0 -> lr_peak over warmup_steps, then linear decay to 0
    at total_steps (held at 0 beyond)."""
    if step < 1:
        raise ValueError("steps are 1-based")
    if step <= config.warmup_steps:
        return config.lr_peak * step / config.warmup_steps
    if step >= config.total_steps:
        return 0.0
    span = config.total_steps - config.warmup_steps
    return config.lr_peak * (config.total_steps - step) / span


def global_grad_norm(grads: dict[str, np.ndarray]) -> float:
    total = 0.0
    for g in grads.values():
        total += float(np.dot(g.reshape(-1), g.reshape(-1)))
    return float(np.sqrt(total))


def clip_gradients(grads: dict[str, np.ndarray], clip_norm: float) -> float:
    """Scale all gradients so the global L2 norm is at most clip_norm;
    returns the scale applied. Raises on non-finite gradients."""
    for name, g in grads.items():
        if not np.isfinite(g).all():
            raise NonFiniteGradientError(f"non-finite gradient in parameter {name}")
    norm = global_grad_norm(grads)
    scale = 1.0 if norm <= clip_norm else clip_norm / norm
    if scale != 1.0:
        for g in grads.values():
            g *= scale
    return scale


def adam_step(state: TrainState, params: dict[str, np.ndarray],
              grads: dict[str, np.ndarray], lr: float,
              betas: tuple[float, float], eps: float = ADAM_EPS) -> None:
    """One bias-corrected Adam update, in place."""
    b1, b2 = betas
    state.step += 1
    c1 = 1.0 - b1 ** state.step
    c2 = 1.0 - b2 ** state.step
    for name, p in params.items():
        g = grads[name]
        m = state.m[name]
        v = state.v[name]
        m += (1.0 - b1) * (g - m)
        v += (1.0 - b2) * (g * g - v)
        p -= (lr / c1) * m / (np.sqrt(v / c2) + eps)


class ExampleStream:
    """Cycles over (src, tgt) pairs; each epoch is reshuffled with a
    generator keyed by (seed, epoch), batches are token-budgeted chunks of
    a length-sorted order, and batch order is shuffled."""

    def __init__(self, pairs, seed: int):
        self.pairs = list(pairs)
        if not self.pairs:
            raise ValueError("stream needs at least one example")
        self.seed = seed
        self.epoch = 0
        self._queue: list[list] = []

    @staticmethod
    def _cost(pair) -> int:
        src, tgt = pair
        return len(src) + len(tgt) + 2  # EOS on both sides

    def _refill(self, batch_tokens: int) -> None:
        rng = np.random.default_rng(np.random.SeedSequence((self.seed, self.epoch)))
        order = rng.permutation(len(self.pairs))
        order = order[np.argsort([self._cost(self.pairs[i]) for i in order], kind="stable")]
        batches, current, budget = [], [], 0
        for idx in order:
            cost = self._cost(self.pairs[idx])
            if current and budget + cost > batch_tokens:
                batches.append(current)
                current, budget = [], 0
            current.append(self.pairs[idx])
            budget += cost
        if current:
            batches.append(current)
        rng.shuffle(batches)
        self._queue = batches
        self.epoch += 1

    def next_batch(self, batch_tokens: int) -> list:
        if not self._queue:
            self._refill(batch_tokens)
        return self._queue.pop()


def choose_stream(rng: np.random.Generator, mix_ratio: float) -> bool:
    """True: draw this batch from the pre-training mix stream."""
    return bool(rng.random() < mix_ratio)


@dataclass
class StepLog:
    step: int
    loss: float
    lr: float
    grad_norm: float
    tokens_per_sec: float

    def format(self) -> str:
        return (f"{self.step} {self.loss:.6f} {self.lr:.6g} "
                f"{self.grad_norm:.6g} {self.tokens_per_sec:.1f}")


def train_loop(model: Seq2SeqModel, train_stream: ExampleStream, config: TrainConfig,
               out_dir=None, mix_stream: ExampleStream | None = None,
               sentinel_base_id: int | None = None, stop_loss: float | None = None,
               state: TrainState | None = None, quiet: bool = True):
    """Run the optimization loop; returns (final archive, list of StepLog).

    With a mix stream, each batch is drawn from it with probability
    mix_ratio and its targets pass through strip_sentinels (mixing keeps
    sentinels out of downstream predictions). Checkpoints go to
    out_dir/checkpoint_<step> every save_every steps plus out_dir/final.
    """
    if mix_stream is not None and config.mix_ratio > 0.0 and sentinel_base_id is None:
        raise ValueError("mixing needs sentinel_base_id to strip target sentinels")
    state = state or TrainState.for_model(model)
    if state.mix_rng is None or state.dropout_rng is None:
        children = np.random.SeedSequence(config.seed).spawn(2)
        state.mix_rng = np.random.default_rng(children[0])
        state.dropout_rng = np.random.default_rng(children[1])
    mix_rng, dropout_rng = state.mix_rng, state.dropout_rng
    out_dir = Path(out_dir) if out_dir is not None else None
    logs: list[StepLog] = []
    log_lines: list[str] = []
    bad_steps = 0

    for step in range(1, config.total_steps + 1):
        t0 = time.monotonic()
        lr = lr_schedule(step, config)
        grads = None
        tokens = 0
        loss_acc = 0.0
        for _ in range(config.accum_steps):
            use_mix = (mix_stream is not None and config.mix_ratio > 0.0
                       and choose_stream(mix_rng, config.mix_ratio))
            stream = mix_stream if use_mix else train_stream
            batch = stream.next_batch(config.batch_tokens)
            if use_mix:
                batch = [(src, strip_sentinels(tgt, sentinel_base_id)) for src, tgt in batch]
                batch = [(s, t) for s, t in batch if len(t) > 0]
                if not batch:
                    continue
            loss, g, n = model.forward_backward(batch, smoothing=config.smoothing,
                                                dropout_p=config.dropout, rng=dropout_rng)
            loss_acc += loss * n
            tokens += n
            if grads is None:
                grads = g
            else:
                for name in grads:
                    grads[name] += g[name]
        if grads is None or tokens == 0:
            continue
        if config.accum_steps > 1:
            for g in grads.values():
                g /= config.accum_steps

        try:
            norm = global_grad_norm(grads)
            clip_gradients(grads, config.clip_norm)
        except NonFiniteGradientError:
            bad_steps += 1
            if bad_steps >= MAX_CONSECUTIVE_BAD_STEPS:
                raise
            continue
        bad_steps = 0

        adam_step(state, model.params, grads, lr, config.betas)
        loss = loss_acc / tokens
        state.loss_history.append(loss)

        if step % config.log_every == 0 or step == config.total_steps:
            dt = max(time.monotonic() - t0, 1e-9)
            entry = StepLog(step, loss, lr, norm, tokens / dt)
            logs.append(entry)
            log_lines.append(entry.format())
            if not quiet:
                print(entry.format())
        if out_dir is not None and config.save_every and step % config.save_every == 0:
            save_archive(model).save(out_dir / f"checkpoint_{step}")
        if stop_loss is not None and loss < stop_loss:
            break

    final = save_archive(model)
    if out_dir is not None:
        final.save(out_dir / "final")
        out_dir.mkdir(parents=True, exist_ok=True)
        with open(out_dir / "metrics.log", "w", encoding="utf-8") as fh:
            fh.write("\n".join(log_lines) + ("\n" if log_lines else ""))
    return final, logs
