"""Command-line entry point: ``qdsps sweep``, ``qdsps hbt`` and ``qdsps synth``."""
from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from .analytics import HbtHistogram, hbt_g2, synth_histogram
from .counting import photocount_distribution
from .errors import NumericalGuardError, UndefinedG2Error
from .models import PulseEnvelope, make_model
from .sweep import ConfigError, build_config, parse_area, parse_grid, read_config_file, run_sweep, to_csv, to_json

HEADER_KEYS = {"bin_width": float, "period": float, "center_index": int, "n_side": int, "window": float}


class HistogramFormatError(ValueError):
    pass


def write_histogram(h: HbtHistogram, path) -> None:
    """One header line of ``key=value`` pairs, then one integer count per line."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(
            f"# bin_width={h.bin_width!r} period={h.period!r} center_index={h.center_index} "
            f"n_side={h.n_side} window={h.window!r}\n"
        )
        fh.write("\n".join(str(int(c)) for c in h.counts) + "\n")


def read_histogram(path, **overrides) -> HbtHistogram:
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines or not lines[0].startswith("#"):
        raise HistogramFormatError(f"{path}: missing '# bin_width=... period=... center_index=...' header")
    meta = {}
    for token in lines[0][1:].split():
        if "=" not in token:
            raise HistogramFormatError(f"{path}:1: malformed header token {token!r}")
        key, value = token.split("=", 1)
        if key not in HEADER_KEYS:
            raise HistogramFormatError(f"{path}:1: unknown header key {key!r}")
        try:
            meta[key] = HEADER_KEYS[key](value)
        except ValueError:
            raise HistogramFormatError(f"{path}:1: bad value for {key!r}: {value!r}") from None
    missing = {"bin_width", "period", "center_index"} - set(meta)
    if missing:
        raise HistogramFormatError(f"{path}:1: header lacks {sorted(missing)}")
    counts = []
    for lineno, line in enumerate(lines[1:], 2):
        line = line.strip()
        if not line:
            continue
        try:
            counts.append(int(line))
        except ValueError:
            raise HistogramFormatError(f"{path}:{lineno}: expected an integer count, got {line!r}") from None
    meta.update({k: v for k, v in overrides.items() if v is not None})
    try:
        return HbtHistogram(counts=np.array(counts, dtype=np.int64), **meta)
    except ValueError as exc:
        raise HistogramFormatError(f"{path}: {exc}") from None


def _parse_bg(text):
    if text is None or text == "estimate":
        return "estimate"
    if text.lower() == "none":
        return None
    return float(text)


def cmd_sweep(args) -> int:
    file_values = read_config_file(args.config) if args.config else {}
    overrides = {
        "system": args.system, "channel": args.channel, "shape": args.shape,
        "area": args.area, "grid": args.grid, "nmax": args.nmax,
        "mc": True if args.mc else None, "ntraj": args.ntraj, "seed": args.seed,
        "out": args.out, "format": args.format, "jobs": args.jobs, "dt": args.dt,
    }
    cfg = build_config(file_values, overrides)
    result = run_sweep(cfg)
    text = to_json(result) if cfg.format == "json" else to_csv(result)
    if cfg.out:
        with open(cfg.out, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return 0


def hbt_report(h: HbtHistogram, bg="estimate") -> dict:
    r = hbt_g2(h, bg)
    return {
        "N0": r.n0, "N0_err": r.n0_err, "N1": r.n1, "N1_err": r.n1_err,
        "background_per_bin": r.background_per_bin, "background_per_window": r.background,
        "g2_raw": r.g2_raw, "g2_raw_err": r.g2_raw_err, "g2_corr": r.g2, "g2_corr_err": r.g2_err,
    }


def cmd_hbt(args) -> int:
    h = read_histogram(args.histogram, n_side=args.n_side, window=args.window)
    report = hbt_report(h, _parse_bg(args.bg))
    if args.json:
        sys.stdout.write(json.dumps(report, sort_keys=True) + "\n")
    else:
        for key, value in report.items():
            sys.stdout.write(f"{key:>22s}  {value!r}\n")
    return 0


def cmd_synth(args) -> int:
    m = make_model(args.system)
    d = photocount_distribution(m, PulseEnvelope(args.gamma_t, args.area), args.channel)
    h = synth_histogram(d, args.pulses, args.dark_rate, args.bin_width, args.period,
                        args.seed, args.lifetime, args.n_side, args.window)
    write_histogram(h, args.out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qdsps", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    sw = sub.add_parser("sweep", help="photon statistics versus pulse length")
    sw.add_argument("--config", help="flat key = value file; flags override it")
    sw.add_argument("--system", choices=["2ls", "3ls"])
    sw.add_argument("--channel", choices=["default", "X", "2X"])
    sw.add_argument("--shape", choices=["square", "gaussian"])
    sw.add_argument("--area", type=parse_area, help="pulse area, e.g. 3.14159 or pi")
    sw.add_argument("--grid", type=parse_grid, help="min:max:npoints (log) or comma list of gamma*T")
    sw.add_argument("--nmax", type=int)
    sw.add_argument("--dt", type=float)
    sw.add_argument("--mc", action="store_true", help="add Monte-Carlo columns")
    sw.add_argument("--ntraj", type=lambda s: int(float(s)))
    sw.add_argument("--seed", type=int)
    sw.add_argument("--jobs", type=int)
    sw.add_argument("--out")
    sw.add_argument("--format", choices=["csv", "json"])
    sw.set_defaults(func=cmd_sweep)

    hb = sub.add_parser("hbt", help="g2[0] from a coincidence histogram file")
    hb.add_argument("histogram")
    hb.add_argument("--n-side", type=int)
    hb.add_argument("--window", type=float, help="integration window per peak (time units of the file)")
    hb.add_argument("--bg", default="estimate", help="'estimate', 'none' or counts per bin")
    hb.add_argument("--json", action="store_true")
    hb.set_defaults(func=cmd_hbt)

    sy = sub.add_parser("synth", help="write a synthetic HBT histogram from a simulated source")
    sy.add_argument("--system", choices=["2ls", "3ls"], default="2ls")
    sy.add_argument("--channel", default="default")
    sy.add_argument("--gamma-t", type=float, default=0.1)
    sy.add_argument("--area", type=parse_area, default="pi")
    sy.add_argument("--pulses", type=lambda s: int(float(s)), default=1_000_000)
    sy.add_argument("--dark-rate", type=float, default=0.002)
    sy.add_argument("--bin-width", type=float, default=0.06)
    sy.add_argument("--period", type=float, default=12.5)
    sy.add_argument("--lifetime", type=float, default=0.2)
    sy.add_argument("--n-side", type=int, default=16)
    sy.add_argument("--window", type=float, default=2.6)
    sy.add_argument("--seed", type=int, default=0)
    sy.add_argument("--out", required=True)
    sy.set_defaults(func=cmd_synth)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, HistogramFormatError) as exc:
        print(f"qdsps: error: {exc}", file=sys.stderr)
        return 2
    except (NumericalGuardError, UndefinedG2Error, ValueError, OSError) as exc:
        print(f"qdsps: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
