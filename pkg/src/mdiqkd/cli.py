"""Command-line entry point ``mdiqkd``.

Log verbosity comes from the ``MDIQKD_LOG_LEVEL`` environment variable
(default ``WARNING``).
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from .config import ConfigError
from .otp import InsufficientKeyError, KeyFileError, generate_key, write_key_file, xor_file
from .pipeline import PipelineError, estimate_only, run_pipeline

EXIT_ERROR = 1
EXIT_INSUFFICIENT_KEY = 3


def _simulate(args) -> int:
    manifest = run_pipeline(args.config, args.out, partitions=args.partitions)
    print(f"wrote {', '.join(manifest.outputs)} to {args.out}")
    keyrate = json.loads((Path(args.out) / "keyrate.json").read_text())
    print(f"key rate {keyrate['total_bits_per_pulse']:.4e} bits/pulse, "
          f"e11 <= {keyrate['e11_used']:.4f}, y11 >= {keyrate['y11_used']:.4e}")
    return 0


def _estimate(args) -> int:
    est, report = estimate_only(args.tallies, args.config)
    if args.json:
        print(json.dumps({"estimate": est.to_dict(), "keyrate": report.to_dict()}, indent=2))
    else:
        print(f"y11 lower bound  {est.y11_lower:.6e}")
        print(f"e11 upper bound  {est.e11_upper:.6f}" + ("  (clamped)" if est.clamped["e11_upper"] else ""))
        print(report.to_text(), end="")
    return 0


def _report(args) -> int:
    from .plotting import render_report

    for path in render_report(args.run):
        print(path)
    return 0


def _calibrate(args) -> int:
    from .analytic import calibrate_misalignment
    from .config import load_config

    cfg = load_config(args.config)
    if args.pulse_pairs:
        cfg = cfg.replace(pulse_pairs=args.pulse_pairs)
    print(f"{calibrate_misalignment(cfg, args.target):.6f}")
    return 0


def _otp_xor(args) -> int:
    used = xor_file(args.key, args.in_path, args.out)
    logging.getLogger(__name__).info("consumed %d key bits", used)
    return 0


def _otp_keygen(args) -> int:
    write_key_file(args.out, generate_key(args.bits, args.seed))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mdiqkd", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run the full simulation and post-processing")
    p.add_argument("--config", required=True, help="config file or preset name (e.g. paper-50km)")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--partitions", type=int, default=1, help="parallel worker processes")
    p.set_defaults(func=_simulate)

    p = sub.add_parser("estimate", help="decoy estimation and key rate from a tally CSV")
    p.add_argument("--tallies", required=True)
    p.add_argument("--config", required=True)
    p.add_argument("--json", action="store_true", help="print JSON instead of a table")
    p.set_defaults(func=_estimate)

    p = sub.add_parser("report", help="render figures and report.csv for a run directory")
    p.add_argument("--run", required=True)
    p.set_defaults(func=_report)

    p = sub.add_parser("calibrate", help="misalignment giving a target e11 bound (noise-free model)")
    p.add_argument("--config", required=True)
    p.add_argument("--target", type=float, default=0.246)
    p.add_argument("--pulse-pairs", type=int, default=0)
    p.set_defaults(func=_calibrate)

    otp = sub.add_parser("otp", help="one-time pad").add_subparsers(dest="otp_command", required=True)
    for name in ("encrypt", "decrypt"):
        p = otp.add_parser(name)
        p.add_argument("--key", required=True)
        p.add_argument("--in", dest="in_path", required=True)
        p.add_argument("--out", required=True)
        p.set_defaults(func=_otp_xor)
    p = otp.add_parser("keygen", help="write a seeded demonstration key file")
    p.add_argument("--bits", type=int, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_otp_keygen)
    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=os.environ.get("MDIQKD_LOG_LEVEL", "WARNING").upper(),
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except InsufficientKeyError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INSUFFICIENT_KEY
    except (ConfigError, PipelineError, KeyFileError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
