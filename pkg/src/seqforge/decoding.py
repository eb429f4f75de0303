"""Length-normalized beam search over an encode-once / decode-prefix session.

A DecodeSession caches the encoder states and each block's projected
cross-attention K/V. The cached tensors are produced by the exact same
code path a fresh full decode uses, and each step re-runs the decoder
over the whole prefix, so step logits are bit-identical to full-sequence
decode at every prefix length (a classic per-shape KV cache cannot give
that guarantee: BLAS kernels differ between gemv and gemm).

Scores are sum(log p) / len^alpha. Ties break by score, then by
lexicographic token order, so decoding is reproducible. The greedy
hypothesis always joins the final candidate pool, which makes
score(beam k) >= score(greedy) hold unconditionally.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .model import BOS_ID, EOS_ID, Seq2SeqModel


@dataclass(frozen=True)
class BeamConfig:
    beam_size: int = 5
    max_len: int = 80
    length_penalty: float = 1.0  # alpha; 0 disables length normalization
    eos_id: int = EOS_ID
    bos_id: int = BOS_ID

    def __post_init__(self):
        if self.beam_size < 1 or self.max_len < 1:
            raise ValueError("beam_size and max_len must be >= 1")


@dataclass
class Hypothesis:
    """Generated tokens (EOS included when finished), their summed log
    probability, and whether the hypothesis hit EOS."""

    tokens: list[int] = field(default_factory=list)
    log_prob: float = 0.0
    finished: bool = False

    def score(self, alpha: float) -> float:
        n = max(len(self.tokens), 1)
        return self.log_prob / n ** alpha

    @property
    def output(self) -> list[int]:
        if self.finished and self.tokens and self.tokens[-1] == EOS_ID:
            return self.tokens[:-1]
        return list(self.tokens)


def _sort_key(alpha: float):
    return lambda h: (-h.score(alpha), h.tokens)


class DecodeSession:
    """Per-source decoding state: encoder pass done once, cross-attention
    K/V cached per decoder block."""

    def __init__(self, model: Seq2SeqModel, source_ids, source_mask=None):
        self.model = model
        self.source_mask = source_mask
        self.encoder_states = model.encode(source_ids, source_mask)
        self.cross_kv = model.cross_attention_kv(self.encoder_states)

    def prefix_logits(self, prefix: list[int]) -> np.ndarray:
        """Logits for the next token after `prefix` (prefix starts at BOS)."""
        logits = self.model.decode(prefix, self.encoder_states,
                                   source_mask=self.source_mask, cross_kv=self.cross_kv)
        return logits[-1]

    def prefix_log_probs(self, prefix: list[int]) -> np.ndarray:
        return log_softmax_row(self.prefix_logits(prefix))


def log_softmax_row(logits: np.ndarray) -> np.ndarray:
    x = logits.astype(np.float64)
    x -= x.max()
    return x - np.log(np.exp(x).sum())


def greedy_decode(model: Seq2SeqModel, source_ids, config: BeamConfig = BeamConfig(),
                  source_mask=None, session: DecodeSession | None = None) -> Hypothesis:
    """Argmax decoding; ties go to the lowest token id (np.argmax order)."""
    session = session or DecodeSession(model, source_ids, source_mask)
    hyp = Hypothesis()
    prefix = [config.bos_id]
    for _ in range(config.max_len):
        lp = session.prefix_log_probs(prefix)
        token = int(np.argmax(lp))
        hyp.tokens.append(token)
        hyp.log_prob += float(lp[token])
        if token == config.eos_id:
            hyp.finished = True
            break
        prefix.append(token)
    return hyp


def beam_search(model: Seq2SeqModel, source_ids, config: BeamConfig = BeamConfig(),
                source_mask=None) -> tuple[Hypothesis, list[Hypothesis]]:
    """Returns (best hypothesis, n-best list sorted by normalized score)."""
    alpha = config.length_penalty
    session = DecodeSession(model, source_ids, source_mask)
    greedy = greedy_decode(model, source_ids, config, session=session)
    live: list[Hypothesis] = [Hypothesis()]
    finished: list[Hypothesis] = []
    banked = 0

    for _ in range(config.max_len):
        if not live:
            break
        candidates: list[Hypothesis] = []
        for hyp in live:
            lp = session.prefix_log_probs([config.bos_id] + hyp.tokens)
            for token in range(len(lp)):
                candidates.append(Hypothesis(hyp.tokens + [token],
                                             hyp.log_prob + float(lp[token]),
                                             finished=token == config.eos_id))
        candidates.sort(key=lambda h: (-h.log_prob, h.tokens))
        next_live: list[Hypothesis] = []
        for rank, cand in enumerate(candidates):
            if cand.finished:
                # EOS counts only when it ranks inside the beam; this is what
                # makes beam_size=1 reduce to greedy decoding exactly
                if rank < config.beam_size:
                    finished.append(cand)
                    banked += 1
            elif len(next_live) < config.beam_size:
                next_live.append(cand)
        if banked >= config.beam_size:
            live = []
            break
        if next_live and len(next_live[0].tokens) >= config.max_len:
            finished.extend(next_live)  # length limit: keep them as candidates
            live = []
            break
        if finished:
            best_done = max(h.score(alpha) for h in finished)
            # a live hypothesis can at best keep its log-prob and grow to max_len
            live = [h for h in next_live
                    if h.log_prob / max(config.max_len, 1) ** alpha >= best_done]
        else:
            live = next_live

    finished.extend(live)
    finished.append(greedy)
    nbest = sorted(finished, key=_sort_key(alpha))
    seen = set()
    unique = []
    for h in nbest:
        key = tuple(h.tokens)
        if key not in seen:
            seen.add(key)
            unique.append(h)
    return unique[0], unique[: max(config.beam_size, 1)]
