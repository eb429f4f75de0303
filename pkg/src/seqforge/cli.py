"""The forge command line: gen, corrupt, init-map, pretrain, finetune,
generate, eval, recipe.

Exit codes: 0 success, 1 validation error (bad flags, bad inputs,
malformed files), 2 runtime failure. FORGE_THREADS caps the BLAS thread
pool, which is why heavy imports happen inside main() after the
environment is set.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path


class CliValidationError(ValueError):
    pass


class ForgeParser(argparse.ArgumentParser):
    def error(self, message):  # argparse would exit(2); route to exit code 1
        raise CliValidationError(message)


def _int_list(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(t) for t in text.split(","))
    except ValueError:
        raise CliValidationError(f"expected comma-separated integers, got {text!r}")


def build_parser() -> ForgeParser:
    parser = ForgeParser(prog="forge", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=ForgeParser)

    gen = sub.add_parser("gen", help="generate synthetic corpora or a synthetic encoder")
    gen_sub = gen.add_subparsers(dest="kind", required=True, parser_class=ForgeParser)

    corpus = gen_sub.add_parser("corpus", help="write mono + pair shards for a toy task")
    corpus.add_argument("--task", choices=("copy", "reverse", "toy-translation"),
                        default="toy-translation", help="pair construction rule")
    corpus.add_argument("--vocab-size", type=int, default=48)
    corpus.add_argument("--num-sentinels", type=int, default=12)
    corpus.add_argument("--min-len", type=int, default=4)
    corpus.add_argument("--max-len", type=int, default=10)
    corpus.add_argument("--lang-sizes", type=_int_list, default=(192, 96),
                        help="mono corpus lines per language, comma separated")
    corpus.add_argument("--train-pairs", type=int, default=224)
    corpus.add_argument("--test-pairs", type=int, default=32)
    corpus.add_argument("--seed", type=int, default=0)
    corpus.add_argument("--out", required=True, help="output directory")
    corpus.set_defaults(func=cmd_gen_corpus)

    encoder = gen_sub.add_parser("encoder", help="write a seeded random encoder checkpoint")
    encoder.add_argument("--vocab-size", type=int, default=48)
    encoder.add_argument("--hidden", type=int, default=48)
    encoder.add_argument("--ffn-dim", type=int, default=96)
    encoder.add_argument("--layers", type=int, default=2, help="encoder layer count (even)")
    encoder.add_argument("--max-positions", type=int, default=48)
    encoder.add_argument("--seed", type=int, default=0)
    encoder.add_argument("--out", required=True, help="output directory")
    encoder.set_defaults(func=cmd_gen_encoder)

    corrupt = sub.add_parser("corrupt", help="apply span / translation span corruption")
    corrupt.add_argument("--task", choices=("span", "xspan"), required=True)
    corrupt.add_argument("--in", dest="infile", required=True,
                         help="mono shard (span) or source shard / pair TSV (xspan)")
    corrupt.add_argument("--in2", dest="infile2", default=None,
                         help="target-side shard for xspan when --in is not a pair TSV")
    corrupt.add_argument("--p", type=float, default=None,
                         help="corrupted-token probability (default 0.15 span / 0.50 xspan)")
    corrupt.add_argument("--mean-span", type=float, default=3.0)
    corrupt.add_argument("--seed", type=int, default=0)
    corrupt.add_argument("--vocab-size", type=int, default=48)
    corrupt.add_argument("--num-sentinels", type=int, default=12)
    corrupt.add_argument("--max-len", type=int, default=512)
    corrupt.add_argument("--out", required=True, help="output pair TSV")
    corrupt.set_defaults(func=cmd_corrupt)

    initmap = sub.add_parser("init-map", help="build a seq2seq model from an encoder checkpoint")
    initmap.add_argument("--encoder", required=True, help="encoder checkpoint directory")
    initmap.add_argument("--out", required=True, help="model output directory")
    initmap.add_argument("--report", default=None,
                         help="mapping report path (default <out>/mapping_report.txt)")
    initmap.add_argument("--heads", type=int, default=2,
                         help="attention heads for the assembled model")
    initmap.set_defaults(func=cmd_init_map)

    for name, help_text in (("pretrain", "train on corruption shards"),
                            ("finetune", "train on pair shards, optionally mixing")):
        train = sub.add_parser(name, help=help_text)
        train.add_argument("--config", default=None, help="JSON config with model/train sections")
        train.add_argument("--model", default=None,
                           help="initial checkpoint directory (e.g. init-map output)")
        train.add_argument("--data", action="append", required=True,
                           help="shard path; repeat for multiple languages/shards")
        train.add_argument("--mix-data", action="append", default=None,
                           help="pre-training shards mixed into fine-tuning")
        train.add_argument("--mix-ratio", type=float, default=None)
        train.add_argument("--save-every", type=int, default=None)
        train.add_argument("--steps", type=int, default=None)
        train.add_argument("--warmup", type=int, default=None)
        train.add_argument("--lr", type=float, default=None)
        train.add_argument("--batch-tokens", type=int, default=None)
        train.add_argument("--smoothing", type=float, default=None)
        train.add_argument("--seed", type=int, default=None)
        train.add_argument("--num-sentinels", type=int, default=12,
                           help="sentinel band width of the vocabulary")
        train.add_argument("--out", required=True)
        train.set_defaults(func=cmd_train, mode=name)

    generate = sub.add_parser("generate", help="beam-search decode a file of sources")
    generate.add_argument("--model", required=True, help="model checkpoint directory")
    generate.add_argument("--in", dest="infile", required=True,
                          help="sources, one id sequence per line (pair TSVs use the left side)")
    generate.add_argument("--beam", type=int, default=5)
    generate.add_argument("--max-len", type=int, default=80)
    generate.add_argument("--alpha", type=float, default=1.0, help="length penalty exponent")
    generate.add_argument("--out", required=True)
    generate.set_defaults(func=cmd_generate)

    evaluate = sub.add_parser("eval", help="score hypotheses against references")
    evaluate.add_argument("--metric", choices=("bleu", "rougeL"), required=True)
    evaluate.add_argument("--hyp", required=True)
    evaluate.add_argument("--ref", required=True)
    evaluate.set_defaults(func=cmd_eval)

    recipe = sub.add_parser("recipe", help="run an end-to-end demo pipeline")
    recipe.add_argument("name", choices=("pretrain-demo", "finetune-demo", "zeroshot-mix-demo"))
    recipe.add_argument("--out", required=True)
    recipe.add_argument("--seed", type=int, default=7)
    recipe.set_defaults(func=cmd_recipe)

    return parser


# ---------------------------------------------------------------------------
# command handlers (heavy imports stay inside)
# ---------------------------------------------------------------------------

def cmd_gen_corpus(args) -> int:
    from .corpus import SyntheticTaskSpec, gen_corpus

    spec = SyntheticTaskSpec(task=args.task, vocab_size=args.vocab_size,
                             min_len=args.min_len, max_len=args.max_len,
                             lang_sizes=args.lang_sizes, train_pairs=args.train_pairs,
                             test_pairs=args.test_pairs, seed=args.seed,
                             num_sentinels=args.num_sentinels)
    written = gen_corpus(spec, args.out)
    for key, path in written.items():
        print(f"{key}: {path}")
    return 0


def cmd_gen_encoder(args) -> int:
    from .corpus import gen_encoder
    from .model import ModelConfig

    config = ModelConfig(vocab_size=args.vocab_size, hidden=args.hidden,
                         ffn_dim=args.ffn_dim, heads=1, encoder_layers=args.layers,
                         decoder_blocks=max(1, args.layers // 2),
                         max_positions=args.max_positions)
    gen_encoder(config, args.seed).save(args.out)
    print(f"encoder checkpoint: {args.out}")
    return 0


def cmd_corrupt(args) -> int:
    import numpy as np

    from .corpus import format_ids, parse_ids
    from .corruption import CorruptionConfig, span_corrupt, translation_span_corrupt

    p = args.p if args.p is not None else (0.15 if args.task == "span" else 0.5)
    config = CorruptionConfig(corrupt_prob=p, mean_span_len=args.mean_span,
                              sentinel_base_id=args.vocab_size - args.num_sentinels,
                              max_len=args.max_len, seed=args.seed)

    def lines_of(path):
        with open(path, encoding="utf-8") as fh:
            return [line.rstrip("\n") for line in fh if line.strip()]

    out_path = Path(args.out)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    with open(out_path, "w", encoding="utf-8") as out:
        if args.task == "span":
            for i, line in enumerate(lines_of(args.infile)):
                rng = np.random.default_rng(np.random.SeedSequence((args.seed, i)))
                ex = span_corrupt(parse_ids(line), config, rng)
                out.write(f"{format_ids(ex.source_ids)}\t{format_ids(ex.target_ids)}\n")
        else:
            left = lines_of(args.infile)
            if args.infile2 is not None:
                right = lines_of(args.infile2)
                if len(left) != len(right):
                    raise CliValidationError(
                        f"--in has {len(left)} lines but --in2 has {len(right)}")
                pairs = [(parse_ids(a), parse_ids(b)) for a, b in zip(left, right)]
            else:
                if not all("\t" in line for line in left):
                    raise CliValidationError("xspan needs --in2 or a pair TSV as --in")
                pairs = [tuple(parse_ids(f) for f in line.split("\t")) for line in left]
            for i, (src, tgt) in enumerate(pairs):
                rng = np.random.default_rng(np.random.SeedSequence((args.seed, i)))
                ex = translation_span_corrupt(src, tgt, config, rng)
                out.write(f"{format_ids(ex.source_ids)}\t{format_ids(ex.target_ids)}\n")
    print(f"corrupted shard: {out_path}")
    return 0


def cmd_init_map(args) -> int:
    from .archive import CheckpointArchive
    from .recipes import write_sidecar_config
    from .surgery import build_seq2seq, config_for_encoder, load_encoder, save_archive

    encoder = load_encoder(CheckpointArchive.load(args.encoder))
    config = config_for_encoder(encoder, heads=args.heads)
    model, report = build_seq2seq(encoder, config)
    save_archive(model).save(args.out)
    write_sidecar_config(Path(args.out), config)
    report_path = Path(args.report) if args.report else Path(args.out) / "mapping_report.txt"
    with open(report_path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(report.to_lines()) + "\n")
    print(f"model: {args.out}")
    print(f"mapping report: {report_path} ({len(report.entries)} copies, "
          f"{len(report.unmapped)} unmapped)")
    return 0


def _load_train_model(args):
    from .archive import CheckpointArchive
    from .model import ModelConfig, Seq2SeqModel
    from .recipes import read_sidecar_config
    from .surgery import load_model

    file_cfg = {}
    if args.config:
        with open(args.config, encoding="utf-8") as fh:
            file_cfg = json.load(fh)
    model_config = None
    if args.model:
        model_config = read_sidecar_config(args.model)
    if model_config is None and "model" in file_cfg:
        model_config = ModelConfig.from_dict(file_cfg["model"])
    if model_config is None:
        raise CliValidationError(
            "no model configuration: pass --model with a config.json sidecar or "
            "--config with a 'model' section")
    if args.model:
        model = load_model(CheckpointArchive.load(args.model), model_config)
    else:
        model = Seq2SeqModel.random_init(model_config, seed=args.seed or 0)
    return model, file_cfg.get("train", {})


def cmd_train(args) -> int:
    from .corpus import read_pairs
    from .recipes import MultilingualStream, write_sidecar_config
    from .training import ExampleStream, TrainConfig, train_loop

    model, train_section = _load_train_model(args)

    defaults = dict(lr_peak=2.5e-3, warmup_steps=50, total_steps=500, smoothing=0.1,
                    batch_tokens=448, mix_ratio=0.0, seed=0, save_every=0, log_every=50)
    defaults.update(train_section)
    overrides = {"lr_peak": args.lr, "warmup_steps": args.warmup, "total_steps": args.steps,
                 "batch_tokens": args.batch_tokens, "smoothing": args.smoothing,
                 "seed": args.seed, "save_every": args.save_every,
                 "mix_ratio": args.mix_ratio}
    defaults.update({k: v for k, v in overrides.items() if v is not None})
    config = TrainConfig.from_dict(defaults)

    shards = [read_pairs(p) for p in args.data]
    if args.mode == "pretrain" and len(shards) > 1:
        stream = MultilingualStream(shards, warm_steps=config.total_steps, seed=config.seed)
    else:
        stream = ExampleStream([ex for shard in shards for ex in shard], seed=config.seed)

    mix_stream = None
    if args.mix_data:
        mix_pairs = [ex for p in args.mix_data for ex in read_pairs(p)]
        mix_stream = ExampleStream(mix_pairs, seed=config.seed + 1)

    sentinel_base = model.config.vocab_size - args.num_sentinels
    _, logs = train_loop(model, stream, config, out_dir=args.out, mix_stream=mix_stream,
                         sentinel_base_id=sentinel_base, quiet=False)
    write_sidecar_config(Path(args.out), model.config, config)
    print(f"final checkpoint: {Path(args.out) / 'final'}")
    return 0


def cmd_generate(args) -> int:
    from .archive import CheckpointArchive
    from .corpus import parse_ids
    from .decoding import BeamConfig
    from .recipes import generate_file, read_sidecar_config
    from .surgery import load_model

    model_config = read_sidecar_config(args.model)
    if model_config is None:
        raise CliValidationError(f"no config.json next to {args.model}")
    model = load_model(CheckpointArchive.load(args.model), model_config)
    beam = BeamConfig(beam_size=args.beam, max_len=args.max_len,
                      length_penalty=args.alpha)
    sources = []
    with open(args.infile, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                sources.append(parse_ids(line.split("\t")[0]))
    generate_file(model, sources, args.out, beam)
    print(f"wrote {len(sources)} hypotheses to {args.out}")
    return 0


def cmd_eval(args) -> int:
    from .metrics import bleu, rouge_l

    def lines_of(path):
        with open(path, encoding="utf-8") as fh:
            return [line.rstrip("\n") for line in fh if line.strip()]

    hyp, ref = lines_of(args.hyp), lines_of(args.ref)
    if args.metric == "bleu":
        print(f"{bleu(hyp, ref):.2f}")
    else:
        print(f"{rouge_l(hyp, ref):.2f}")
    return 0


def cmd_recipe(args) -> int:
    from .recipes import run_recipe

    state = run_recipe(args.name, args.out, seed=args.seed, quiet=False)
    print(f"artifacts under {args.out}")
    if "bleu" in state:
        print(f"test BLEU: {state['bleu']:.2f}")
    if "sentinel_count" in state:
        print(f"sentinel ids in generated output: {state['sentinel_count']}")
    return 0


def main(argv=None) -> int:
    threads = os.environ.get("FORGE_THREADS")
    if threads:
        for var in ("OPENBLAS_NUM_THREADS", "OMP_NUM_THREADS", "MKL_NUM_THREADS"):
            os.environ.setdefault(var, threads)

    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except CliValidationError as exc:
        print(f"forge: error: {exc}", file=sys.stderr)
        return 1
    except (ValueError, IndexError, KeyError) as exc:
        print(f"forge: invalid input: {exc}", file=sys.stderr)
        return 1
    except BrokenPipeError:
        return 2
    except OSError as exc:
        print(f"forge: i/o failure: {exc}", file=sys.stderr)
        return 2
    except RuntimeError as exc:
        print(f"forge: runtime failure: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
