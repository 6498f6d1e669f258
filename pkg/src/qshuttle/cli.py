"""Command-line front end.

Each subcommand runs one experiment and writes three files to ``--out``:
``manifest.json`` (before any computation), ``raw.csv`` and ``summary.json``.

Exit codes: 0 success, 1 configuration or argument error, 2 fit did not
converge (outputs are still written), 3 internal error.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import logging
import math
import sys
import traceback
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__, analysis, experiments
from .analysis import FitError
from .device import ConfigError, DeviceConfig, load_config, to_document
from .experiments import ExperimentResult

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_NOT_CONVERGED = 2
EXIT_INTERNAL = 3

SUBCOMMANDS = (
    "ramsey",
    "echo",
    "rabi",
    "shuttle-repeat",
    "detuning-sweep",
    "rb1q",
    "rb2q",
    "dcz-cal",
    "residual-j",
    "fit",
)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with status 2 by default, which is reserved here.
    def error(self, message: str):
        raise UsageError(message)


# ---------------------------------------------------------------------------
# Emission
# ---------------------------------------------------------------------------


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return "%.12g" % v
    return str(v)


def format_csv(result: ExperimentResult) -> str:
    lines = [",".join(result.columns)]
    lines += [",".join(_fmt(v) for v in row) for row in result.rows]
    return "\n".join(lines) + "\n"


def emit_csv(result: ExperimentResult, path: str | Path) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        fh.write(format_csv(result))
    return path


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return float(obj) if math.isfinite(obj) else None
    return obj


def summary_document(result: ExperimentResult) -> dict:
    return _jsonable(
        {
            "experiment": result.experiment,
            "seed": result.seed,
            "fits": [
                {
                    "model": f.model,
                    "params": f.params,
                    "stderr": f.stderr,
                    "converged": f.converged,
                    "fixed": f.fixed,
                }
                for f in result.fits
            ],
            "scalars": result.scalars,
            "tables": result.tables,
            "metadata": result.metadata,
            "config_digest": result.config_digest,
        }
    )


def emit_summary(result: ExperimentResult, path: str | Path) -> Path:
    path = Path(path)
    path.write_text(json.dumps(summary_document(result), indent=2, sort_keys=True) + "\n")
    return path


def _print_summary(doc: dict, json_only: bool, stream=None) -> None:
    stream = stream or sys.stdout
    if json_only:
        stream.write(json.dumps(doc, indent=2, sort_keys=True) + "\n")
        return
    stream.write(f"{doc['experiment']} (seed {doc['seed']})\n")
    for f in doc["fits"]:
        state = "converged" if f["converged"] else "NOT converged"
        stream.write(f"  fit {f['model']}: {state}\n")
    for k, v in doc["scalars"].items():
        stream.write(f"  {k} = {v:.10g}\n" if isinstance(v, float) else f"  {k} = {v}\n")


# ---------------------------------------------------------------------------
# Argument handling
# ---------------------------------------------------------------------------


def _int_list(text: str) -> list[int]:
    try:
        vals = [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None
    if not vals or any(v < 0 for v in vals):
        raise argparse.ArgumentTypeError("need at least one non-negative integer")
    return vals


def _float_list(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _positive(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def _seed(text: str) -> int:
    try:
        v = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an unsigned 64-bit integer, got {text!r}") from None
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must fit in an unsigned 64-bit integer")
    return v


def _qubit(text: str) -> int:
    table = {"L": 0, "M": 1, "0": 0, "1": 1}
    if text not in table:
        raise argparse.ArgumentTypeError("qubit must be L or M")
    return table[text]


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    g = common.add_argument_group("global options")
    g.add_argument("--config", metavar="PATH", help="device configuration JSON (default: reference profile)")
    g.add_argument("--out", metavar="DIR", default=".", help="output directory (default: current directory)")
    g.add_argument("--seed", type=_seed, default=0, help="master seed")
    g.add_argument("--shots", type=_positive, help="shots per point")
    g.add_argument("--sequences", type=_positive, help="random sequences per length")
    g.add_argument("--lengths", type=_int_list, help="comma-separated sequence lengths or cycle counts")
    g.add_argument("--interleave-cz", action="store_true", help="interleaved 2Q RB with the CZ gate")
    g.add_argument("--no-noise", action="store_true", help="disable every noise mechanism")
    g.add_argument("--json-only", action="store_true", help="skip raw.csv and print the summary as JSON")
    g.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")

    parser = _Parser(prog="qshuttle", description="Shuttling spin-qubit experiment simulator")
    parser.add_argument("--version", action="version", version=f"qshuttle {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="SUBCOMMAND", parser_class=_Parser)
    sub.required = True

    for name in ("ramsey", "echo", "rabi"):
        p = sub.add_parser(name, parents=[common], help=f"{name} experiment")
        p.add_argument("--qubit", type=_qubit, default=0, help="L or M (default L)")
        p.add_argument("--times", type=_float_list, help="comma-separated delay or burst times (s)")
    p = sub.add_parser("shuttle-repeat", parents=[common], help="repeated shuttling")
    p.add_argument("--mode", choices=("polarization", "coherence"), default="polarization")
    p = sub.add_parser("detuning-sweep", parents=[common], help="1Q RB under a static detuning")
    p.add_argument("--f-rabi", type=_float_list, help="Rabi frequencies (Hz)")
    p.add_argument("--detunings", type=_float_list, help="detuning grid (Hz)")
    for name, text in (("rb1q", "simultaneous single-qubit RB"), ("rb2q", "two-qubit RB")):
        p = sub.add_parser(name, parents=[common], help=text)
        p.add_argument("--bootstrap", type=_positive, default=500, help="bootstrap resamples")
    sub.add_parser("dcz-cal", parents=[common], help="DCZ phase calibration")
    p = sub.add_parser("residual-j", parents=[common], help="residual exchange probe")
    p.add_argument("--times", type=_float_list, help="comma-separated evolution times (s)")
    p = sub.add_parser("fit", parents=[common], help="fit a CSV file")
    p.add_argument("input", help="CSV produced by a previous run or with x/y columns")
    p.add_argument("--model", help="decay model for a plain x/y fit")
    p.add_argument("--x", default=None, help="x column (default: first column)")
    p.add_argument("--y", default=None, help="y column (default: last column)")
    p.add_argument("--bootstrap", type=_positive, default=500, help="bootstrap resamples for RB files")
    return parser


def _overrides(args: argparse.Namespace) -> dict:
    keys = ("shots", "sequences", "lengths", "interleave_cz", "no_noise", "json_only")
    return {k: getattr(args, k) for k in keys if getattr(args, k, None) not in (None, False)}


def _manifest(args: argparse.Namespace, cfg: DeviceConfig, config_bytes: bytes | None) -> dict:
    return {
        "subcommand": args.command,
        "config_path": str(Path(args.config).resolve()) if args.config else None,
        "config_file_sha256": hashlib.sha256(config_bytes).hexdigest() if config_bytes is not None else None,
        "config_digest": cfg.digest(),
        "config": to_document(cfg),
        "seed": args.seed,
        "output_dir": str(Path(args.out).resolve()),
        "overrides": _overrides(args),
        "version": __version__,
    }


# ---------------------------------------------------------------------------
# Dispatch
# ---------------------------------------------------------------------------


def _run(args: argparse.Namespace, cfg: DeviceConfig) -> ExperimentResult:
    cmd = args.command
    shots = args.shots
    if cmd in ("ramsey", "echo", "rabi"):
        fn = {"ramsey": experiments.run_ramsey, "echo": experiments.run_echo, "rabi": experiments.run_rabi}[cmd]
        kw = {"delays" if cmd != "rabi" else "burst_times": args.times} if args.times else {}
        return fn(cfg, args.qubit, shots=shots or cfg.defaults.shots, seed=args.seed, **kw)
    if cmd == "shuttle-repeat":
        return experiments.run_shuttle_repeat(
            cfg, args.mode, args.lengths, shots=shots or cfg.defaults.shots, seed=args.seed
        )
    if cmd == "detuning-sweep":
        kw = {}
        if args.f_rabi:
            kw["f_R_values"] = args.f_rabi
        if args.detunings:
            kw["delta_f_grid"] = args.detunings
        if args.lengths:
            kw["L_values"] = args.lengths
        if args.sequences:
            kw["n_sequences"] = args.sequences
        return experiments.run_detuning_sweep(cfg, seed=args.seed, **kw)
    if cmd in ("rb1q", "rb2q"):
        if cmd == "rb1q" and args.interleave_cz:
            raise UsageError("--interleave-cz applies to rb2q only")
        return experiments.run_rb(
            cfg,
            "2q" if cmd == "rb2q" else "1q_simultaneous",
            L_values=args.lengths,
            n_sequences=args.sequences,
            shots=shots,
            seed=args.seed,
            interleave_cz=args.interleave_cz,
            n_resamples=getattr(args, "bootstrap", 500),
        )
    if cmd == "dcz-cal":
        return experiments.run_dcz_calibration(cfg, shots=shots or cfg.defaults.shots, seed=args.seed)
    if cmd == "residual-j":
        return experiments.run_residual_j_probe(
            cfg, args.times, shots=shots or cfg.defaults.shots, seed=args.seed
        )
    if cmd == "fit":
        return _refit(args, cfg)
    raise UsageError(f"unknown subcommand {cmd!r}")


def _refit(args: argparse.Namespace, cfg: DeviceConfig) -> ExperimentResult:
    """Fit a CSV: RB raw files are re-summarized, anything else gets an x/y fit."""
    try:
        rows = analysis.read_csv_rows(args.input)
    except OSError as exc:
        raise UsageError(f"cannot read {args.input}: {exc}") from exc
    if not rows:
        raise UsageError(f"{args.input} has no data rows")
    columns = tuple(rows[0].keys())
    if args.model is None and set(analysis.RB_COLUMNS[:5]) <= set(columns):
        series = {r.get("series", "") or "" for r in rows}
        arity = "2q" if "ref" in series else "1q_simultaneous"
        fits, scalars = experiments.summarize_rb_rows(rows, args.seed, arity, getattr(args, "bootstrap", 500))
        name = "rb2q" if arity == "2q" else "rb1q"
    else:
        if args.model is None:
            raise UsageError("--model is required for non-RB CSV files")
        if args.model not in analysis.MODELS:
            raise UsageError(f"unknown model {args.model!r}; choose from {sorted(analysis.MODELS)}")
        xcol = args.x or columns[0]
        ycol = args.y or columns[-1]
        for c in (xcol, ycol):
            if c not in columns:
                raise UsageError(f"column {c!r} not in {list(columns)}")
        try:
            pts = sorted((float(r[xcol]), float(r[ycol])) for r in rows)
        except ValueError as exc:
            raise UsageError(f"non-numeric data: {exc}") from exc
        x = np.array([p[0] for p in pts])
        y = np.array([p[1] for p in pts])
        ux = np.unique(x)
        if ux.size != x.size:
            # Repeated x values (e.g. several phases per delay) are averaged.
            y = np.array([y[x == u].mean() for u in ux])
            x = ux
        f = analysis.fit(args.model, x, y)
        fits, scalars = [f], dict(f.params)
        name = "fit"
    out_cols = columns
    out_rows = [tuple(r[c] for c in columns) for r in rows]
    return ExperimentResult(
        name, out_cols, out_rows, fits, scalars, args.seed, cfg.digest(), metadata={"input": str(args.input)}
    )


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"qshuttle: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)

    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        config_bytes = Path(args.config).read_bytes() if args.config else None
        cfg = load_config(args.config)
        if args.no_noise:
            cfg = dataclasses.replace(cfg, noise=cfg.noise.silent())
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "manifest.json").write_text(
            json.dumps(_jsonable(_manifest(args, cfg, config_bytes)), indent=2, sort_keys=True) + "\n"
        )
    except ConfigError as exc:
        print(f"qshuttle: config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"qshuttle: error: {exc}", file=sys.stderr)
        return EXIT_USAGE

    try:
        result = _run(args, cfg)
    except (UsageError, ConfigError, ValueError) as exc:
        if isinstance(exc, FitError):
            print(f"qshuttle: fit error: {exc}", file=sys.stderr)
            return EXIT_NOT_CONVERGED
        print(f"qshuttle: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception:
        traceback.print_exc()
        return EXIT_INTERNAL

    try:
        if not args.json_only:
            emit_csv(result, out / "raw.csv")
        emit_summary(result, out / "summary.json")
    except OSError as exc:
        print(f"qshuttle: cannot write outputs: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    _print_summary(summary_document(result), args.json_only)
    if not result.converged:
        print("qshuttle: fit did not converge", file=sys.stderr)
        return EXIT_NOT_CONVERGED
    return EXIT_OK


__all__ = ["main", "build_parser", "emit_csv", "emit_summary", "format_csv", "summary_document"]
