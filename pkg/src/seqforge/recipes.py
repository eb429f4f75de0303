"""End-to-end demo recipes: generate -> corrupt -> init-map -> train ->
generate -> eval, at sizes that run on a laptop CPU in minutes.

Every recipe is deterministic given --seed: corpora, the synthetic
encoder, corruption, batch order and the training loop all derive their
randomness from it, so rerunning a recipe reproduces its checkpoint
archives byte for byte.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .archive import CheckpointArchive
from .corpus import SyntheticTaskSpec, gen_corpus, gen_encoder, read_pairs, write_pairs
from .corruption import CorruptionConfig, span_corrupt, translation_span_corrupt
from .decoding import BeamConfig, beam_search
from .metrics import bleu
from .model import ModelConfig, Seq2SeqModel
from .sampling import SamplerState, advance, sample_language
from .surgery import build_seq2seq, config_for_encoder, load_encoder, load_model, save_archive
from .training import ExampleStream, TrainConfig, train_loop

RECIPES = ("pretrain-demo", "finetune-demo", "zeroshot-mix-demo")


class RecipeError(RuntimeError):
    """A recipe stage failed; the message names the stage."""


class MultilingualStream:
    """Per-language example streams drawn through the temperature sampler;
    quacks like ExampleStream for train_loop."""

    def __init__(self, per_language: list[list], warm_steps: int, seed: int):
        self.streams = [ExampleStream(pairs, seed=seed + 101 * i)
                        for i, pairs in enumerate(per_language)]
        self.sampler = SamplerState(sizes=[len(p) for p in per_language],
                                    warm_steps=warm_steps)
        self.rng = np.random.default_rng(np.random.SeedSequence((seed, 0x1A)))

    def next_batch(self, batch_tokens: int) -> list:
        lang = sample_language(self.sampler, self.rng)
        advance(self.sampler)
        return self.streams[lang].next_batch(batch_tokens)


class TaskMixStream:
    """Bernoulli mixture of two pre-training task streams (50/50 default)."""

    def __init__(self, primary, secondary, seed: int, ratio: float = 0.5):
        self.primary = primary
        self.secondary = secondary
        self.ratio = ratio
        self.rng = np.random.default_rng(np.random.SeedSequence((seed, 0x2B)))

    def next_batch(self, batch_tokens: int) -> list:
        if self.rng.random() < self.ratio:
            return self.secondary.next_batch(batch_tokens)
        return self.primary.next_batch(batch_tokens)


@dataclass(frozen=True)
class DemoSettings:
    """One tiny-but-trainable setup shared by the shipped recipes.

    Sized so that the span-corruption pretraining actually transfers: at
    this band width and sequence length a randomly initialized model
    needs several hundred steps to crack toy-translation while the
    pretrained one needs a fraction of that.
    """

    vocab_size: int = 48
    num_sentinels: int = 12
    hidden: int = 48
    ffn_dim: int = 96
    heads: int = 4
    encoder_layers: int = 2
    max_positions: int = 48
    min_len: int = 4
    max_len: int = 10
    lang_sizes: tuple[int, ...] = (192, 96)
    train_pairs: int = 224
    test_pairs: int = 32
    pretrain_steps: int = 600
    finetune_steps: int = 1200
    batch_tokens: int = 448
    lr: float = 2.5e-3

    def task_spec(self, seed: int) -> SyntheticTaskSpec:
        return SyntheticTaskSpec(task="toy-translation", vocab_size=self.vocab_size,
                                 min_len=self.min_len, max_len=self.max_len,
                                 lang_sizes=self.lang_sizes, train_pairs=self.train_pairs,
                                 test_pairs=self.test_pairs, seed=seed,
                                 num_sentinels=self.num_sentinels)

    def encoder_config(self) -> ModelConfig:
        return ModelConfig(vocab_size=self.vocab_size, hidden=self.hidden,
                           ffn_dim=self.ffn_dim, heads=self.heads,
                           encoder_layers=self.encoder_layers,
                           decoder_blocks=self.encoder_layers // 2,
                           max_positions=self.max_positions)


def _write_json(path: Path, payload: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=1, sort_keys=True)
        fh.write("\n")


def write_sidecar_config(out_dir: Path, model_config: ModelConfig,
                         train_config: TrainConfig | None = None) -> None:
    payload = {"model": model_config.to_dict()}
    if train_config is not None:
        payload["train"] = train_config.to_dict()
    _write_json(Path(out_dir) / "config.json", payload)


def read_sidecar_config(model_dir) -> ModelConfig | None:
    path = Path(model_dir) / "config.json"
    if not path.exists():
        path = Path(model_dir).parent / "config.json"
        if not path.exists():
            return None
    with open(path, encoding="utf-8") as fh:
        return ModelConfig.from_dict(json.load(fh)["model"])


def corruption_examples(sequences, config: CorruptionConfig, seed: int):
    rng = np.random.default_rng(np.random.SeedSequence((seed, config.seed)))
    return [(e.source_ids, e.target_ids)
            for e in (span_corrupt(seq, config, rng) for seq in sequences)]


def translation_corruption_examples(pairs, config: CorruptionConfig, seed: int):
    rng = np.random.default_rng(np.random.SeedSequence((seed, config.seed, 1)))
    out = []
    for src, tgt in pairs:
        e = translation_span_corrupt(src, tgt, config, rng)
        out.append((e.source_ids, e.target_ids))
    return out


def generate_file(model: Seq2SeqModel, sources, out_path, beam: BeamConfig) -> list[list[int]]:
    outputs = []
    with open(out_path, "w", encoding="utf-8") as fh:
        for src in sources:
            best, _ = beam_search(model, src, beam)
            outputs.append(best.output)
            fh.write(" ".join(str(t) for t in best.output) + "\n")
    return outputs


def _stage(name: str, fn):
    try:
        return fn()
    except Exception as exc:  # noqa: BLE001 - recipes report the failing stage
        raise RecipeError(f"stage '{name}' failed: {exc}") from exc


def run_pretrain_demo(out_dir, seed: int = 7, settings: DemoSettings = DemoSettings(),
                      quiet: bool = True) -> dict:
    """gen -> corrupt -> init-map -> pretrain (span + translation span)."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    spec = settings.task_spec(seed)

    corpus = _stage("gen-corpus", lambda: gen_corpus(spec, out_dir / "corpus"))

    def make_encoder():
        archive = gen_encoder(settings.encoder_config(), seed)
        archive.save(out_dir / "encoder")
        return archive
    _stage("gen-encoder", make_encoder)

    def init_map():
        encoder = load_encoder(CheckpointArchive.load(out_dir / "encoder"))
        config = config_for_encoder(encoder, heads=settings.heads)
        model, report = build_seq2seq(encoder, config)
        save_archive(model).save(out_dir / "initmap")
        write_sidecar_config(out_dir / "initmap", config)
        with open(out_dir / "initmap" / "mapping_report.txt", "w", encoding="utf-8") as fh:
            fh.write("\n".join(report.to_lines()) + "\n")
        return model, report
    model, report = _stage("init-map", init_map)

    span_cfg = CorruptionConfig(corrupt_prob=0.15, mean_span_len=3.0,
                                sentinel_base_id=spec.sentinel_base,
                                max_len=settings.max_positions, seed=seed)
    xspan_cfg = CorruptionConfig(corrupt_prob=0.5, mean_span_len=3.0,
                                 sentinel_base_id=spec.sentinel_base,
                                 max_len=settings.max_positions, seed=seed)

    def corrupt():
        from .corpus import read_mono
        per_lang = []
        data_dir = out_dir / "data"
        data_dir.mkdir(exist_ok=True)
        for lang in range(len(spec.lang_sizes)):
            examples = corruption_examples(read_mono(corpus[f"mono.{lang}"]), span_cfg,
                                           seed + lang)
            write_pairs(data_dir / f"span.{lang}.tsv", examples)
            per_lang.append(examples)
        xspan = translation_corruption_examples(read_pairs(corpus["train"]), xspan_cfg, seed)
        write_pairs(data_dir / "xspan.tsv", xspan)
        return per_lang, xspan
    per_lang, xspan = _stage("corrupt", corrupt)

    train_cfg = TrainConfig(lr_peak=settings.lr, warmup_steps=max(1, settings.pretrain_steps // 10),
                            total_steps=settings.pretrain_steps, smoothing=0.1,
                            batch_tokens=settings.batch_tokens, seed=seed, log_every=50)

    def pretrain():
        mono = MultilingualStream(per_lang, warm_steps=settings.pretrain_steps, seed=seed)
        mixed = TaskMixStream(mono, ExampleStream(xspan, seed=seed + 13), seed=seed)
        final, logs = train_loop(model, mixed, train_cfg, out_dir=out_dir / "pretrain",
                                 quiet=quiet)
        write_sidecar_config(out_dir / "pretrain", model.config, train_cfg)
        return final, logs
    final, logs = _stage("pretrain", pretrain)

    return {"out_dir": out_dir, "spec": spec, "settings": settings, "model": model,
            "final": final, "logs": logs, "report": report, "corpus": corpus}


def _finetune_chain(out_dir, seed: int, settings: DemoSettings, mix: bool,
                    quiet: bool = True) -> dict:
    out_dir = Path(out_dir)
    state = run_pretrain_demo(out_dir, seed=seed, settings=settings, quiet=quiet)
    spec = state["spec"]
    model = load_model(state["final"], state["model"].config)

    train_pairs = read_pairs(state["corpus"]["train"])
    test_pairs = read_pairs(state["corpus"]["test"])
    ft_cfg = TrainConfig(lr_peak=settings.lr, warmup_steps=max(1, settings.finetune_steps // 10),
                         total_steps=settings.finetune_steps, smoothing=0.1,
                         batch_tokens=settings.batch_tokens, seed=seed + 1,
                         mix_ratio=0.5 if mix else 0.0, log_every=100)

    def finetune():
        mix_stream = None
        if mix:
            span_cfg = CorruptionConfig(corrupt_prob=0.15, mean_span_len=3.0,
                                        sentinel_base_id=spec.sentinel_base,
                                        max_len=settings.max_positions, seed=seed)
            from .corpus import read_mono
            pooled = []
            for lang in range(len(spec.lang_sizes)):
                pooled += corruption_examples(read_mono(state["corpus"][f"mono.{lang}"]),
                                              span_cfg, seed + 7 * lang)
            mix_stream = ExampleStream(pooled, seed=seed + 29)
        return train_loop(model, ExampleStream(train_pairs, seed=seed + 17), ft_cfg,
                          out_dir=out_dir / "finetune", mix_stream=mix_stream,
                          sentinel_base_id=spec.sentinel_base, quiet=quiet)
    final, logs = _stage("finetune", finetune)
    write_sidecar_config(out_dir / "finetune", model.config, ft_cfg)

    def generate():
        beam = BeamConfig(beam_size=5, max_len=80)
        sources = [src for src, _ in test_pairs]
        outputs = generate_file(model, sources, out_dir / "hyp.txt", beam)
        with open(out_dir / "ref.txt", "w", encoding="utf-8") as fh:
            for _, tgt in test_pairs:
                fh.write(" ".join(str(int(t)) for t in tgt) + "\n")
        return outputs
    outputs = _stage("generate", generate)

    def evaluate():
        hyp = [" ".join(str(t) for t in seq) for seq in outputs]
        ref = [" ".join(str(int(t)) for t in tgt) for _, tgt in test_pairs]
        score = bleu(hyp, ref)
        sentinel_count = sum(1 for seq in outputs for t in seq if t >= spec.sentinel_base)
        _write_json(out_dir / "scores.json",
                    {"bleu": score, "sentinel_tokens_in_output": sentinel_count})
        return score, sentinel_count
    score, sentinel_count = _stage("eval", evaluate)

    state.update({"model": model, "final": final, "finetune_logs": logs,
                  "bleu": score, "sentinel_count": sentinel_count,
                  "test_pairs": test_pairs, "train_pairs": train_pairs})
    return state


def run_finetune_demo(out_dir, seed: int = 7, settings: DemoSettings = DemoSettings(),
                      quiet: bool = True) -> dict:
    """Full chain ending in beam-search generation and a BLEU score on the
    memorized toy-translation test set."""
    return _finetune_chain(out_dir, seed, settings, mix=False, quiet=quiet)


def run_zeroshot_mix_demo(out_dir, seed: int = 7, settings: DemoSettings = DemoSettings(),
                          quiet: bool = True) -> dict:
    """Fine-tuning mixed 50/50 with span corruption whose targets are
    sentinel-stripped; generated outputs must contain no sentinel ids."""
    return _finetune_chain(out_dir, seed, settings, mix=True, quiet=quiet)


def run_recipe(name: str, out_dir, seed: int = 7, quiet: bool = True) -> dict:
    if name == "pretrain-demo":
        return run_pretrain_demo(out_dir, seed=seed, quiet=quiet)
    if name == "finetune-demo":
        return run_finetune_demo(out_dir, seed=seed, quiet=quiet)
    if name == "zeroshot-mix-demo":
        return run_zeroshot_mix_demo(out_dir, seed=seed, quiet=quiet)
    raise ValueError(f"unknown recipe {name!r}; choose from {RECIPES}")
