"""Command line: ``analyze``, ``random-verify`` and ``sweep``.

Exit codes: 0 all applicable verifications pass, 1 a verification failed,
2 usage or configuration error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import re
import sys
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

from . import analysis
from .config import ConfigError, RunConfig, apply_overrides, load, sweep_values
from .pencil_core import PencilError
from .wave_operators import ProfileError, WaveSpeedError

log = logging.getLogger("kreincount")

EXIT_OK, EXIT_VERIFY, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2, 3

SWEEP_COUNTERS = ("Np_neg", "Np_zero", "Np_pos", "Nn_neg", "Nn_zero", "Nn_pos", "Nc_plus",
                  "Nc_minus", "dim_HK_neg", "dim_HAdK_neg", "N_real", "N_comp", "N_imag_neg",
                  "N_zero_neg")


class UsageError(Exception):
    pass


def _json_default(o):
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, (np.bool_,)):
        return bool(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, complex):
        return [o.real, o.imag]
    raise TypeError(f"not serializable: {type(o)}")


def write_json(obj, path: Path) -> None:
    path.write_text(json.dumps(obj, indent=2, default=_json_default) + "\n")


def write_spectra(rows: List[List], path: Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(analysis.SPECTRA_COLUMNS)
        for r in rows:
            w.writerow([repr(float(v)) if isinstance(v, float) else v for v in r])


def _stem(cfg: RunConfig) -> str:
    return Path(cfg.source).stem if cfg.source else cfg.model


def _out_dir(arg: Optional[str]) -> Path:
    out = Path(arg or os.environ.get("KC_OUT", "kc_out"))
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load(args) -> RunConfig:
    cfg = load(args.config)
    return apply_overrides(cfg, args.tol_cluster, args.tol_kernel, args.delta)


def cmd_analyze(args) -> int:
    cfg = _load(args)
    out = _out_dir(args.out)
    stem = _stem(cfg)
    report, spectra = analysis.analyze_config(cfg)
    for label, rows in spectra.items():
        tag = re.sub(r"[^A-Za-z0-9]+", "", label)
        path = out / f"{stem}_spectrum_{tag}.csv"
        write_spectra(rows, path)
        report["spectra_files"][label] = str(path)
    path = out / f"{stem}_report.json"
    write_json(report, path)
    failed = analysis.failed_checks(report)
    for label, c in report["counters"].items():
        print(f"{stem} [{label}] N_real={c['N_real']} N_comp={c['N_comp']} "
              f"N_imag_neg={c['N_imag_neg']} N_zero_neg={c['N_zero_neg']} "
              f"Np=({c['Np_neg']},{c['Np_zero']},{c['Np_pos']}) "
              f"Nn=({c['Nn_neg']},{c['Nn_zero']},{c['Nn_pos']}) Nc+={c['Nc_plus']}")
    print(f"report: {path}")
    if failed:
        print("FAILED: " + "; ".join(failed))
        return EXIT_VERIFY
    print("all verifications passed")
    return EXIT_OK


def parse_dims(text: str):
    m = re.fullmatch(r"\s*(\d+)\s*\.\.\s*(\d+)\s*", text)
    if not m:
        raise UsageError(f"--dims must look like A..B, got {text!r}")
    lo, hi = int(m.group(1)), int(m.group(2))
    if not 2 <= lo <= hi:
        raise UsageError(f"--dims needs 2 <= A <= B, got {lo}..{hi}")
    return lo, hi


def cmd_random_verify(args) -> int:
    if args.trials < 1:
        raise UsageError("--trials must be at least 1")
    dims = parse_dims(args.dims)
    summary = analysis.random_suite(args.trials, dims, args.seed, pontryagin=not args.no_pontryagin)
    print(f"random-verify dims={dims[0]}..{dims[1]} trials={summary['trials']} seed={args.seed} "
          f"kinds=generic:{summary['kinds']['generic']},jordan:{summary['kinds']['jordan']},"
          f"complex:{summary['kinds']['complex']}")
    for f in summary["failures"]:
        print(f"  FAIL trial {f['trial']} (seed {f['seed']}, dim {f['dim']}, {f['kind']}): "
              + ", ".join(f["reasons"]))
    print(f"{summary['passed']}/{summary['trials']} pass")
    if args.out:
        write_json(summary, _out_dir(args.out) / "random_verify.json")
    return EXIT_OK if summary["failed"] == 0 else EXIT_VERIFY


def cmd_sweep(args) -> int:
    cfg = _load(args)
    values = sweep_values(cfg)
    name = cfg.sweep["parameter"]
    out = _out_dir(args.out)
    path = out / f"{_stem(cfg)}_sweep.csv"
    all_ok = True
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([name, "block", *SWEEP_COUNTERS, "pass", "failed_checks", "error"])
        for v in values:
            try:
                report, _ = analysis.analyze_config(cfg.with_param(name, v))
            except (PencilError, ProfileError, WaveSpeedError, ConfigError,
                    np.linalg.LinAlgError) as exc:
                all_ok = False
                w.writerow([v, "", *([""] * len(SWEEP_COUNTERS)), False, "",
                            f"{type(exc).__name__}: {exc}"])
                print(f"{name}={v}: error {type(exc).__name__}: {exc}")
                continue
            failed = analysis.failed_checks(report)
            all_ok = all_ok and not failed
            for label, c in report["counters"].items():
                fl = [f for f in failed if f.startswith(label + ":")]
                w.writerow([v, label, *(c[k] for k in SWEEP_COUNTERS), not fl, ";".join(fl), ""])
            print(f"{name}={v}: " + ("pass" if not failed else "FAILED " + "; ".join(failed)))
    print(f"sweep: {path}")
    return EXIT_OK if all_ok else EXIT_VERIFY


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="kreincount",
                                 description="Eigenvalue counts for linearized Hamiltonian systems.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--out", help="output directory (env KC_OUT, default ./kc_out)")
        p.add_argument("--tol-cluster", type=float, help="eigenvalue clustering tolerance")
        p.add_argument("--tol-kernel", type=float, help="relative kernel tolerance")
        p.add_argument("--delta", type=float, help="shift for A + delta K")

    a = sub.add_parser("analyze", help="analyse one configuration")
    a.add_argument("config")
    common(a)
    a.set_defaults(func=cmd_analyze)

    r = sub.add_parser("random-verify", help="random-pencil theorem suite")
    r.add_argument("--dims", default="2..10")
    r.add_argument("--trials", type=int, default=500)
    r.add_argument("--seed", type=int, default=7)
    r.add_argument("--out")
    r.add_argument("--no-pontryagin", action="store_true", help="skip the Pontryagin checks")
    r.set_defaults(func=cmd_random_verify)

    s = sub.add_parser("sweep", help="counters against a parameter range")
    s.add_argument("config")
    common(s)
    s.set_defaults(func=cmd_sweep)
    return ap


def main(argv: Optional[Sequence[str]] = None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (UsageError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (PencilError, ProfileError, WaveSpeedError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
