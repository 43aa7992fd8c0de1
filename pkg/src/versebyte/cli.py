"""Command line entry point: align, split, train, translate, evaluate, report.

Every command is deterministic given its resolved configuration and seed,
writes only under its output directory, and exits 0 exactly when its
postcondition held. All files are UTF-8.
"""

import argparse
import json
import os
import sys
from dataclasses import dataclass, field

from . import corpus
from .checkpoint import CheckpointError, load_checkpoint
from .evaluation import (ComparisonRow, corpus_bleu, evaluate_model,
                         render_comparison, translate_text)
from .model import ModelConfig
from .tokenizer import encode, tag_source
from .trainer import TrainConfig, fit
from .validation import check_language_code

ENV_SEED = "VERSEBYTE_SEED"
DEFAULT_RATIOS = (0.98, 0.01, 0.01)


class ConfigError(ValueError):
    """A run config that does not match the documented schema."""


# ---------------------------------------------------------------- run config

@dataclass
class RunConfig:
    """Fully resolved view of one training run, echoed next to its outputs."""
    out_dir: str
    model: ModelConfig
    train: TrainConfig
    train_path: str = ""
    validation_path: str = ""
    pairs_path: str = ""
    ratios: tuple = DEFAULT_RATIOS
    split_seed: int = 0
    decode: dict = field(default_factory=lambda: {"beam_width": 1, "max_len": 256,
                                                  "length_penalty": 0.0})

    def to_dict(self) -> dict:
        data = ({"train": self.train_path, "validation": self.validation_path}
                if self.train_path else
                {"pairs": self.pairs_path, "ratios": list(self.ratios),
                 "split_seed": self.split_seed})
        return {"data": data, "model": self.model.to_dict(),
                "train": self.train.to_dict(), "decode": dict(self.decode),
                "out_dir": self.out_dir}


def _require_mapping(value, path: str) -> dict:
    if not isinstance(value, dict):
        raise ConfigError(f"{path}: expected an object, got {type(value).__name__}")
    return value


def _known_keys(section: dict, allowed, path: str) -> None:
    for key in section:
        if key not in allowed:
            raise ConfigError(f"{path}.{key}: unknown field")


def _section(raw: dict, name: str, allowed) -> dict:
    out = _require_mapping(raw.get(name, {}), name)
    _known_keys(out, allowed, name)
    return out


_MODEL_FIELDS = ("d_model", "n_heads", "d_ff", "enc_layers", "dec_layers",
                 "dropout_rate", "rel_pos_buckets", "rel_pos_max_distance",
                 "max_seq_len")
_TRAIN_FIELDS = ("learning_rate", "scheduler_factor", "scheduler_patience",
                 "batch_size", "max_epochs", "early_stop_patience", "min_lr",
                 "grad_clip_norm", "seed")
_DECODE_FIELDS = ("beam_width", "max_len", "length_penalty")


def build_run_config(raw: dict, base_dir: str, out_dir_flag=None) -> RunConfig:
    """Validate a raw config mapping and fill in every default.

    Relative paths are resolved against the config file's directory; the
    VERSEBYTE_SEED environment variable overrides train.seed.
    """
    raw = _require_mapping(raw, "config")
    _known_keys(raw, ("data", "model", "train", "decode", "out_dir"), "config")

    data = _require_mapping(raw.get("data"), "data") if "data" in raw else None
    if data is None:
        raise ConfigError("data: required section is missing")
    _known_keys(data, ("train", "validation", "pairs", "ratios", "split_seed"), "data")

    def path_of(key):
        value = data[key]
        if not isinstance(value, str) or not value:
            raise ConfigError(f"data.{key}: expected a file path string")
        return os.path.join(base_dir, value) if not os.path.isabs(value) else value

    has_files = "train" in data or "validation" in data
    has_pairs = "pairs" in data
    if has_files == has_pairs:
        raise ConfigError("data: give either train+validation paths or a pairs path")
    if has_files and ("train" not in data or "validation" not in data):
        raise ConfigError("data: train and validation paths are both required")

    try:
        model = ModelConfig(**_section(raw, "model", _MODEL_FIELDS))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"model: {exc}") from exc
    try:
        train = TrainConfig(**_section(raw, "train", _TRAIN_FIELDS))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"train: {exc}") from exc

    env_seed = os.environ.get(ENV_SEED)
    if env_seed is not None:
        try:
            train.seed = int(env_seed)
        except ValueError:
            raise ConfigError(f"{ENV_SEED}: expected an integer, got {env_seed!r}")
        if train.seed < 0:
            raise ConfigError(f"{ENV_SEED}: seed must be >= 0, got {train.seed}")

    decode = _section(raw, "decode", _DECODE_FIELDS)
    decode = {"beam_width": decode.get("beam_width", 1),
              "max_len": decode.get("max_len", 256),
              "length_penalty": decode.get("length_penalty", 0.0)}
    if not isinstance(decode["beam_width"], int) or decode["beam_width"] < 1:
        raise ConfigError(f"decode.beam_width: must be an integer >= 1, "
                          f"got {decode['beam_width']!r}")
    if not isinstance(decode["max_len"], int) or decode["max_len"] < 1:
        raise ConfigError(f"decode.max_len: must be an integer >= 1, "
                          f"got {decode['max_len']!r}")

    out_dir = out_dir_flag or raw.get("out_dir")
    if not isinstance(out_dir, str) or not out_dir:
        raise ConfigError("out_dir: required (in the config or via --out-dir)")
    if not os.path.isabs(out_dir):
        out_dir = os.path.join(base_dir, out_dir)

    cfg = RunConfig(out_dir=out_dir, model=model, train=train, decode=decode)
    if has_files:
        cfg.train_path = path_of("train")
        cfg.validation_path = path_of("validation")
        if "ratios" in data or "split_seed" in data:
            raise ConfigError("data: ratios/split_seed only apply with a pairs path")
    else:
        cfg.pairs_path = path_of("pairs")
        ratios = data.get("ratios", list(DEFAULT_RATIOS))
        if (not isinstance(ratios, (list, tuple)) or len(ratios) != 3
                or not all(isinstance(r, (int, float)) and not isinstance(r, bool)
                           and 0 <= r <= 1 for r in ratios)
                or abs(sum(ratios) - 1.0) > 1e-9 or ratios[0] <= 0):
            raise ConfigError(f"data.ratios: expected three fractions summing to 1 "
                              f"with a positive train share, got {ratios!r}")
        cfg.ratios = tuple(float(r) for r in ratios)
        split_seed = data.get("split_seed", 0)
        if not isinstance(split_seed, int) or isinstance(split_seed, bool) or split_seed < 0:
            raise ConfigError(f"data.split_seed: must be an integer >= 0, got {split_seed!r}")
        cfg.split_seed = split_seed
    return cfg


# ---------------------------------------------------------------- commands

def cmd_align(args) -> int:
    src = corpus.load_version(args.source, args.source_lang,
                              os.path.splitext(os.path.basename(args.source))[0])
    tgt = corpus.load_version(args.target, args.target_lang,
                              os.path.splitext(os.path.basename(args.target))[0])
    pairs = corpus.align(src, tgt)
    corpus.write_examples_jsonl(pairs, args.out)
    coverage = 100.0 * len(pairs) / min(len(src), len(tgt)) if pairs else 0.0
    print(f"aligned {len(pairs)} verse pairs ({coverage:.1f}% coverage) -> {args.out}")
    return 0


def cmd_split(args) -> int:
    ratios = (args.train_ratio, args.validation_ratio, args.test_ratio)
    examples = corpus.read_examples_jsonl(args.pairs)
    split = corpus.make_split(examples, ratios, args.seed)
    os.makedirs(args.out_dir, exist_ok=True)
    for name, part in (("train", split.train), ("validation", split.validation),
                       ("test", split.test)):
        corpus.write_examples_jsonl(part, os.path.join(args.out_dir, f"{name}.jsonl"))
    print(f"split {len(examples)} pairs -> train={len(split.train)} "
          f"validation={len(split.validation)} test={len(split.test)}")
    return 0


def cmd_train(args) -> int:
    with open(args.config, "r", encoding="utf-8") as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config: not valid JSON ({exc})") from exc
    base_dir = os.path.dirname(os.path.abspath(args.config))
    cfg = build_run_config(raw, base_dir, out_dir_flag=args.out_dir)

    # load and split all data before creating any output
    split_parts = None
    if cfg.train_path:
        train_examples = corpus.read_examples_jsonl(cfg.train_path)
        val_examples = corpus.read_examples_jsonl(cfg.validation_path)
    else:
        pairs = corpus.read_examples_jsonl(cfg.pairs_path)
        split = corpus.make_split(pairs, cfg.ratios, cfg.split_seed)
        train_examples, val_examples = split.train, split.validation
        if not val_examples:
            val_examples = train_examples  # tiny corpora: validate on train
        split_parts = split
    if not train_examples:
        raise ConfigError("data: training split is empty")
    if not val_examples:
        raise ConfigError("data: validation split is empty")

    os.makedirs(cfg.out_dir, exist_ok=True)
    with open(os.path.join(cfg.out_dir, "resolved_config.json"), "w",
              encoding="utf-8") as fh:
        json.dump(cfg.to_dict(), fh, indent=2)
    if split_parts is not None:
        for name, part in (("train", split_parts.train),
                           ("validation", split_parts.validation),
                           ("test", split_parts.test)):
            corpus.write_examples_jsonl(part, os.path.join(cfg.out_dir, f"{name}.jsonl"))

    report = fit(train_examples, val_examples, cfg.model, cfg.train, cfg.out_dir)
    report.save(os.path.join(cfg.out_dir, "train_report.json"))
    print(f"stopped after epoch {report.records[-1].epoch} ({report.stop_reason}) "
          f"best_val_loss={report.best_val_loss:.6f} checkpoint={report.best_checkpoint}")
    return 0


def _read_input_lines(args) -> list[str]:
    if args.text is not None:
        return [args.text]
    with open(args.input, "r", encoding="utf-8") as fh:
        return [line.rstrip("\n") for line in fh if line.strip()]


def cmd_translate(args) -> int:
    check_language_code(args.target_lang)
    params, config = load_checkpoint(args.checkpoint)
    lines = _read_input_lines(args)
    for line in lines:
        src_len = len(encode(tag_source(line, args.target_lang), append_eos=True))
        if src_len > config.max_seq_len:
            raise ValueError(f"input of {src_len} tokens exceeds the model's "
                             f"max_seq_len {config.max_seq_len}")
        print(translate_text(params, line, args.target_lang,
                             beam_width=args.beam, max_len=args.max_len,
                             length_penalty=args.length_penalty))
    return 0


def cmd_evaluate(args) -> int:
    examples = corpus.read_examples_jsonl(args.test)
    if not examples:
        raise ValueError(f"test file {args.test} holds no examples")
    if args.self_test:
        rows = sorted((ComparisonRow(
            verse_id=ex.verse_id.render(), source_lang=ex.source_lang,
            target_lang=ex.target_lang, source_text=ex.source_text,
            reference_text=ex.target_text, model_text=ex.target_text)
            for ex in examples), key=lambda r: (r.target_lang, r.verse_id))
        report = corpus_bleu([r.model_text for r in rows],
                             [r.reference_text for r in rows],
                             smoothing=args.smoothing)
    else:
        if not args.checkpoint:
            raise ValueError("--checkpoint is required unless --self-test is given")
        params, _ = load_checkpoint(args.checkpoint)
        report, rows = evaluate_model(params, examples, beam_width=args.beam,
                                      max_len=args.max_len,
                                      smoothing=args.smoothing)
    os.makedirs(args.out_dir, exist_ok=True)
    report.save(os.path.join(args.out_dir, "bleu.json"))
    ext = {"text": "txt", "html": "html", "json": "json"}[args.format]
    doc_path = os.path.join(args.out_dir, f"comparison.{ext}")
    with open(doc_path, "w", encoding="utf-8") as fh:
        fh.write(render_comparison(rows, args.format))
    print(f"BLEU={report.score:.6f} BP={report.brevity_penalty:.6f} "
          f"segments={report.segment_count} -> {args.out_dir}")
    return 0


def cmd_report(args) -> int:
    with open(args.rows, "r", encoding="utf-8") as fh:
        rows = [ComparisonRow.from_dict(d) for d in json.load(fh)]
    document = render_comparison(rows, args.format)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(document)
        print(f"wrote {args.out}")
    else:
        sys.stdout.write(document)
    return 0


# ---------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="versebyte",
        description="Byte-level verse translation: align, split, train, "
                    "translate, evaluate, report.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("align", help="pair two verse files on shared verse ids")
    p.add_argument("--source", required=True, help="source verse file (id<TAB>text)")
    p.add_argument("--source-lang", required=True)
    p.add_argument("--target", required=True, help="target verse file (id<TAB>text)")
    p.add_argument("--target-lang", required=True)
    p.add_argument("--out", required=True, help="output JSONL of parallel examples")
    p.set_defaults(func=cmd_align)

    p = sub.add_parser("split", help="split aligned pairs into train/validation/test")
    p.add_argument("--pairs", required=True, help="JSONL of parallel examples")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--train-ratio", type=float, default=DEFAULT_RATIOS[0])
    p.add_argument("--validation-ratio", type=float, default=DEFAULT_RATIOS[1])
    p.add_argument("--test-ratio", type=float, default=DEFAULT_RATIOS[2])
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("train", help="train a model from a JSON run config")
    p.add_argument("--config", required=True, help="run config JSON file")
    p.add_argument("--out-dir", default=None, help="overrides out_dir in the config")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("translate", help="translate text with a trained checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--target-lang", required=True)
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--text", default=None, help="one source text")
    group.add_argument("--input", default=None, help="file with one source per line")
    p.add_argument("--beam", type=int, default=1, help="beam width (1 = greedy)")
    p.add_argument("--max-len", type=int, default=256)
    p.add_argument("--length-penalty", type=float, default=0.0)
    p.set_defaults(func=cmd_translate)

    p = sub.add_parser("evaluate", help="score a checkpoint on a test JSONL")
    p.add_argument("--checkpoint", default=None)
    p.add_argument("--test", required=True, help="JSONL of parallel examples")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--format", choices=("text", "html", "json"), default="text")
    p.add_argument("--beam", type=int, default=1)
    p.add_argument("--max-len", type=int, default=256)
    p.add_argument("--smoothing", choices=("none", "add_one"), default="none")
    p.add_argument("--self-test", action="store_true",
                   help="score references against themselves (expects BLEU 1.0)")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("report", help="render saved comparison rows")
    p.add_argument("--rows", required=True, help="JSON array of comparison rows")
    p.add_argument("--format", choices=("text", "html", "json"), default="text")
    p.add_argument("--out", default=None, help="write here instead of stdout")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (corpus.CorpusError, CheckpointError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
