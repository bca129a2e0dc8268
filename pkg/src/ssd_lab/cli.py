"""Command line entry point ``ssd-lab``."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .fec import AlistError
from .sim import (
    ConfigError,
    count_ops_csv,
    dump_constellation,
    make_config,
    parse_config_text,
    run_ber,
    run_count_ops,
    run_llr_compare,
)

EXIT_OK, EXIT_CONFIG, EXIT_IO = 0, 2, 3

_FLAGS = {
    "--m": dict(dest="M", help="modulation order (4, 16, 64, 256)"),
    "--angle": dict(help="proposed | dvbt2 | none | rotation in radians"),
    "--demapper": dict(help="sphere | maxlog | exact | mmse"),
    "--reference": dict(help="reference demapper for llr-compare"),
    "--esn0": dict(help="Es/N0 grid in dB, a:b:step or comma list"),
    "--erasure": dict(help="per-cell erasure probability"),
    "--fading": dict(help="true for Rayleigh fading, false for h = 1"),
    "--ldpc": dict(help="alist file, 'default' for the bundled code, 'none' for uncoded"),
    "--frames": dict(help="frame budget per grid point"),
    "--stop-at-errors": dict(dest="stop_at_errors", help="frame errors that end a grid point"),
    "--frame-symbols": dict(dest="frame_symbols", help="symbols per uncoded frame"),
    "--batch-frames": dict(dest="batch_frames", help="frames between stop-rule checks"),
    "--max-iters": dict(dest="max_iters", help="min-sum iterations"),
    "--llr-cap": dict(dest="llr_cap", help="LLR magnitude clamp, 'none' to disable"),
    "--seed": dict(help="master RNG seed"),
    "--workers": dict(help="worker processes"),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ssd-lab", description="Rotated QAM signal-space diversity lab")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("ber", "Monte-Carlo BER over an Es/N0 grid"),
        ("llr-compare", "compare a demapper's LLRs with a reference demapper"),
        ("count-ops", "operation counts of the sphere and max-log demappers"),
        ("dump-constellation", "points, labels and grid coordinates of the alphabet"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="key = value configuration file")
        p.add_argument("--out", help="output CSV (default stdout)")
        for flag, kwargs in _FLAGS.items():
            p.add_argument(flag, default=None, **kwargs)
    return parser


def _config(args: argparse.Namespace):
    values = {}
    if args.config:
        values = parse_config_text(Path(args.config).read_text())
    overrides = {}
    for flag, kwargs in _FLAGS.items():
        dest = kwargs.get("dest", flag[2:].replace("-", "_"))
        value = getattr(args, dest)
        if value is not None:
            overrides[dest] = value
    return make_config(values, **overrides)


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config = _config(args)
        if args.command == "ber":
            text = run_ber(config).to_csv()
        elif args.command == "llr-compare":
            report = run_llr_compare(config)
            text = report.to_csv()
            for p in report.points:
                q = p.quantiles()
                print(
                    f"Es/N0={p.esn0_db:g} dB: sign agreement {p.agreement_rate:.6f}, "
                    f"|delta| median {q[0.5]:.4g}, p99 {q[0.99]:.4g}, max {q[1.0]:.4g}",
                    file=sys.stderr,
                )
        elif args.command == "count-ops":
            text = count_ops_csv(config, run_count_ops(config))
        else:
            text = dump_constellation(config)
        if args.out:
            Path(args.out).write_text(text)
        else:
            sys.stdout.write(text)
    except ConfigError as exc:
        print(f"ssd-lab: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, AlistError) as exc:
        print(f"ssd-lab: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
