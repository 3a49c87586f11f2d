"""Command-line surface.

Five subcommands: train and eval run the language-model pipeline, trace
emits attribution artifacts, params reports closed-form parameter
counts, selfcheck runs the invariant suite.  Exit codes are fixed so
scripts can tell failure classes apart: 0 success, 1 failed check,
2 configuration problem, 3 unreadable or inconsistent input, 4 numeric
divergence.

Config files are flat ``key = value`` UTF-8 text.  '#' starts a
comment, blank lines are skipped, unknown keys are rejected.  A
``preset = NAME`` line expands a named preset first; later keys
override it.  The seed resolves in order: --seed flag, RANLAB_SEED
environment variable, config file, built-in default.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
from pathlib import Path

from .cells import CellKind, count_parameters, layer_configs
from .errors import (
    ConfigError,
    IngestionError,
    IntegrityError,
    NumericError,
    RanlabError,
)
from .lm import (
    PRESETS,
    TrainConfig,
    evaluate,
    load_checkpoint,
    model_from_checkpoint,
    train,
)
from .selfcheck import FAULTS, run_checks
from .viz import render, run_attribution

KIND_NAMES = [k.value for k in CellKind]


# ------------------------------------------------------------ config files

_OPTIONAL_INT = ("vocab_size", "projection_dim")
_OPTIONAL_FLOAT = ("clip_norm",)
_INT_FIELDS = ("embedding_dim", "decay_start_epoch", "max_epochs",
               "batch_size", "bptt_length", "seed")
_FLOAT_FIELDS = ("lr_initial", "lr_decay", "dropout_rate", "init_scale",
                 "forget_bias_init")
_STR_FIELDS = ("kind", "vocab_mode", "output_activation", "precision")


def _parse_value(key: str, raw: str):
    if key in _OPTIONAL_INT or key in _OPTIONAL_FLOAT:
        if raw.lower() == "none":
            return None
    try:
        if key == "hidden_dims":
            return tuple(int(part) for part in raw.split(",") if part.strip())
        if key in _INT_FIELDS or key in _OPTIONAL_INT:
            return int(raw)
        if key in _FLOAT_FIELDS or key in _OPTIONAL_FLOAT:
            return float(raw)
    except ValueError as exc:
        raise ConfigError(f"config key {key}: cannot parse {raw!r}") from exc
    if key in _STR_FIELDS:
        return raw
    raise ConfigError(f"unknown config key {key!r}")


def parse_config_text(text: str, source: str = "<config>") -> TrainConfig:
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {line!r}")
        key, raw = (part.strip() for part in line.split("=", 1))
        if key == "preset":
            if raw not in PRESETS:
                raise ConfigError(f"{source}:{lineno}: unknown preset {raw!r}")
            values = {**PRESETS[raw], **values}
            continue
        values[key] = _parse_value(key, raw)
    return TrainConfig(**values)


def load_config(path) -> TrainConfig:
    path = Path(path)
    if not path.is_file():
        raise IngestionError(f"config file {path} does not exist")
    return parse_config_text(path.read_text(encoding="utf-8"), str(path))


def _read_text(path, what: str) -> str:
    path = Path(path)
    if not path.is_file():
        raise IngestionError(f"{what} file {path} does not exist")
    return path.read_text(encoding="utf-8")


def _resolve_seed(args_seed: int | None, config: TrainConfig) -> TrainConfig:
    if args_seed is not None:
        return dataclasses.replace(config, seed=args_seed)
    env = os.environ.get("RANLAB_SEED")
    if env is not None:
        try:
            return dataclasses.replace(config, seed=int(env))
        except ValueError as exc:
            raise ConfigError(f"RANLAB_SEED must be an integer, not {env!r}") from exc
    return config


# ------------------------------------------------------------- subcommands


def cmd_train(args) -> int:
    config = load_config(args.config) if args.config else TrainConfig()
    config = _resolve_seed(args.seed, config)
    corpus = _read_text(args.corpus, "corpus")
    valid = _read_text(args.valid, "validation") if args.valid else corpus
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    metrics_path = out_dir / "metrics.tsv"
    ckpt_path = out_dir / "model.ckpt"
    with open(metrics_path, "w", encoding="utf-8") as log:
        try:
            _, rows = train(config, corpus, valid, checkpoint_path=ckpt_path,
                            log_stream=log, progress=sys.stderr)
        except NumericError:
            print(f"metrics for completed epochs: {metrics_path}", file=sys.stderr)
            raise
    print(f"wrote {metrics_path} and {ckpt_path} ({len(rows)} epochs)")
    return 0


def cmd_eval(args) -> int:
    ckpt = load_checkpoint(args.checkpoint)
    corpus = _read_text(args.corpus, "corpus")
    report = evaluate(ckpt, corpus)
    for name in ("nats", "perplexity", "bpc"):
        print(f"{name}\t{report[name]!r}")
    return 0


def cmd_trace(args) -> int:
    ckpt = load_checkpoint(args.checkpoint)
    model = model_from_checkpoint(ckpt)
    text = _read_text(args.input, "input")
    ids = model.vocab.encode(text)
    artifact = render(run_attribution(model, ids), args.format)
    if args.out == "-":
        sys.stdout.write(artifact)
    else:
        Path(args.out).write_text(artifact, encoding="utf-8")
        print(f"wrote {args.out}")
    return 0


# configurations whose parameter totals are usually quoted slightly
# higher; the gap is a known accounting ambiguity of about 0.01M
QUOTED_NEARBY = {
    ("lstm", 1500, 1500, 2, None): "36.02",
    ("ran-general", 1500, 1500, 2, None): "22.52",
    ("lstm", 2048, 512, 1, 512): "9.46",
}


def cmd_params(args) -> int:
    input_dim = args.di if args.di is not None else args.dh
    configs = layer_configs(
        CellKind(args.kind), [args.dh] * args.layers, input_dim,
        projection_dim=args.projection,
    )
    total = sum(count_parameters(c) for c in configs)
    millions = f"{total / 1e6:.2f}"
    if args.json:
        print(json.dumps({
            "kind": args.kind, "hidden_dim": args.dh, "input_dim": input_dim,
            "layers": args.layers, "projection_dim": args.projection,
            "total": total, "millions": millions,
        }, sort_keys=True))
        return 0
    print(f"{total:,} ({millions}M)")
    quoted = QUOTED_NEARBY.get((args.kind, args.dh, input_dim, args.layers, args.projection))
    if quoted is not None:
        print(f"note: often quoted as {quoted}M; the ~0.01M gap is a known "
              "accounting ambiguity, the exact tensor count is the figure above")
    return 0


def cmd_selfcheck(args) -> int:
    results = run_checks(quick=args.quick, fault=args.inject_fault, stream=sys.stdout)
    failed = [r for r in results if not r.passed]
    total_s = sum(r.seconds for r in results)
    print(f"{len(results)} checks in {total_s:.1f}s", file=sys.stderr)
    if failed:
        print(f"failed: {', '.join(r.name for r in failed)}", file=sys.stderr)
        return 1
    return 0


# ------------------------------------------------------------------ parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ranlab",
        description="Gated-recurrent-cell laboratory: train and evaluate "
                    "small language models, trace state decompositions, "
                    "count parameters, verify invariants.",
    )
    sub = parser.add_subparsers(dest="command")

    p = sub.add_parser("train", help="train a language model")
    p.add_argument("--config", default=None,
                   help="flat key=value config file (default: built-in defaults)")
    p.add_argument("--corpus", required=True, help="training text file")
    p.add_argument("--valid", default=None,
                   help="validation text file (default: the training corpus)")
    p.add_argument("--out", default="ranlab-run",
                   help="output directory for metrics.tsv and model.ckpt "
                        "(default: ranlab-run)")
    p.add_argument("--seed", type=int, default=None,
                   help="RNG seed; overrides RANLAB_SEED and the config file "
                        "(default: config value)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a text file")
    p.add_argument("--checkpoint", required=True, help="checkpoint file")
    p.add_argument("--corpus", required=True, help="text file to score")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("trace", help="emit a strongest-predecessor attribution artifact")
    p.add_argument("--checkpoint", required=True, help="checkpoint file")
    p.add_argument("--input", required=True, help="text file to trace")
    p.add_argument("--format", choices=("dot", "tsv"), default="dot",
                   help="artifact format (default: dot)")
    p.add_argument("--out", default="-", help="output file (default: stdout)")
    p.set_defaults(func=cmd_trace)

    p = sub.add_parser("params", help="closed-form recurrent-stack parameter counts")
    p.add_argument("--kind", required=True, choices=KIND_NAMES, help="cell kind")
    p.add_argument("--dh", required=True, type=int, help="hidden dimension")
    p.add_argument("--di", type=int, default=None,
                   help="input dimension of the first layer (default: --dh)")
    p.add_argument("--layers", type=int, default=1, help="stack depth (default: 1)")
    p.add_argument("--projection", type=int, default=None,
                   help="output projection dimension (default: none)")
    p.add_argument("--json", action="store_true",
                   help="machine-readable output (default: human-readable)")
    p.set_defaults(func=cmd_params)

    p = sub.add_parser("selfcheck", help="run the invariant suite")
    p.add_argument("--quick", action="store_true",
                   help="reduced sizes, well under a minute (default: full sizes)")
    p.add_argument("--inject-fault", choices=sorted(FAULTS), default=None,
                   help="deliberately corrupt one check to prove the suite "
                        "can fail (default: no fault)")
    p.set_defaults(func=cmd_selfcheck)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "func", None) is None:
        parser.print_help(sys.stderr)
        return 2
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (IngestionError, IntegrityError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return 3
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 4
    except RanlabError as exc:
        print(f"check failed: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
