"""Command-line interface.

Subcommands mirror the pipeline stages plus `soundex` and `synth` utilities.
Every stage subcommand accepts --config <file> and per-key override flags;
flags win over file values. Exit codes: 0 success, 2 config error, 3 data
error, 4 training divergence.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys

from soundexlm.checkpoint import CorruptCheckpoint, VersionMismatch
from soundexlm.config import ConfigError, ExperimentConfig, load_config
from soundexlm.data import EmptyDataset, MalformedLine, RatioInvalid, make_synthetic_corpus
from soundexlm.model import DivergenceDetected
from soundexlm.phonetics import soundex
from soundexlm.pipeline import ALL_STAGES, DEFAULT_STAGES, PipelineError, run_pipeline

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_DIVERGED = 4

_DATA_ERRORS = (
    EmptyDataset,
    MalformedLine,
    RatioInvalid,
    PipelineError,
    CorruptCheckpoint,
    VersionMismatch,
    FileNotFoundError,
)


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", default=None, help="key=value config file")
    for field in dataclasses.fields(ExperimentConfig):
        parser.add_argument(
            "--" + field.name.replace("_", "-"),
            dest=field.name,
            default=None,
            help=f"override {field.name} (default {field.default!r})",
        )


def _config_from_args(args: argparse.Namespace) -> ExperimentConfig:
    overrides = {
        f.name: getattr(args, f.name)
        for f in dataclasses.fields(ExperimentConfig)
        if getattr(args, f.name, None) is not None
    }
    return load_config(args.config, overrides)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="soundexlm",
        description="SOUNDEX-augmented language modeling, attacks, and explanations",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_soundex = sub.add_parser("soundex", help="print SOUNDEX codes for words")
    p_soundex.add_argument("words", nargs="+", metavar="word")

    p_synth = sub.add_parser("synth", help="generate the synthetic corpus")
    p_synth.add_argument("--seed", type=int, default=0)
    p_synth.add_argument("--size", type=int, default=2000)
    p_synth.add_argument("--variant-rate", type=float, default=0.3)
    p_synth.add_argument("--out-dir", default="data/synth")

    for stage in ALL_STAGES:
        p_stage = sub.add_parser(stage, help=f"run the {stage} stage")
        _add_config_flags(p_stage)
        if stage == "pretrain":
            p_stage.add_argument(
                "--dump-batch",
                default=None,
                metavar="PATH",
                help="write the first masked batch to a checkpoint container",
            )

    p_pipe = sub.add_parser("pipeline", help="run several stages in order")
    _add_config_flags(p_pipe)
    p_pipe.add_argument(
        "--stages",
        default=",".join(DEFAULT_STAGES),
        help=f"comma-separated subset of {','.join(ALL_STAGES)}",
    )
    p_pipe.add_argument("--dump-batch", default=None, metavar="PATH")
    return parser


def _cmd_soundex(args: argparse.Namespace) -> int:
    for word in args.words:
        code = soundex(word)
        print(f"{word}\t{code if code is not None else '-'}")
    return EXIT_OK


def _cmd_synth(args: argparse.Namespace) -> int:
    paths = make_synthetic_corpus(
        seed=args.seed,
        size=args.size,
        variant_rate=args.variant_rate,
        out_dir=args.out_dir,
    )
    for name, path in paths.items():
        print(f"{name}\t{path}")
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "soundex":
            return _cmd_soundex(args)
        if args.command == "synth":
            return _cmd_synth(args)
        config = _config_from_args(args)
        if args.command == "pipeline":
            stages = [s.strip() for s in args.stages.split(",") if s.strip()]
            out = run_pipeline(config, stages, dump_batch=args.dump_batch)
        else:
            dump = getattr(args, "dump_batch", None)
            out = run_pipeline(config, [args.command], dump_batch=dump)
        print(f"artifacts written to {out}")
        return EXIT_OK
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except _DATA_ERRORS as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except DivergenceDetected as exc:
        print(f"training diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED


if __name__ == "__main__":
    sys.exit(main())
