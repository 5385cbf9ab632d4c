"""Command-line front end: ``run``, ``sweep`` and ``validate``.

Exit codes: 0 success, 2 invalid configuration or arguments, 3 numerical
failure. Numbers in CSV files use the shortest decimal that round-trips.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import sys
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable, List, Optional, Sequence

import numpy as np

from . import __version__
from ._backend import BACKEND
from .config import ConfigError, ProtocolConfig, load_config
from .coulomb import equilibrium_positions
from .model import IonSpecies
from .protocols import (
    ProtocolResult,
    SeparationSpec,
    default_sweep_durations,
    run,
    sweep,
    worker_count,
)

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_NUMERICAL = 3

CSV_SCHEMA_VERSION = 1

NUMERICAL_ERRORS = (ArithmeticError, RuntimeError, np.linalg.LinAlgError, ValueError)


def fmt(x) -> str:
    return repr(float(x))


def write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([v if isinstance(v, str) else fmt(v) for v in row])


def coordinate_labels(dim: int, n_ions: int = 2) -> List[str]:
    axes = "xyz"[:dim]
    xs = [f"x{i + 1}{a}" for i in range(n_ions) for a in axes]
    ps = [f"p{i + 1}{a}" for i in range(n_ions) for a in axes]
    return xs + ps


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def write_run_outputs(result: ProtocolResult, spec: SeparationSpec, out: Path) -> List[Path]:
    out.mkdir(parents=True, exist_ok=True)
    d = spec.dimension
    labels = coordinate_labels(d)
    t = result.trace.times
    files = []

    p = out / "means.csv"
    write_csv(p, ["t"] + labels, (np.concatenate([[tk], z]) for tk, z in zip(t, result.trace.means)))
    files.append(p)

    k = len(labels)
    iu = np.triu_indices(k)
    p = out / "covariance.csv"
    cov_cols = [f"{labels[i]}.{labels[j]}" for i, j in zip(*iu)]
    write_csv(p, ["t"] + cov_cols, (np.concatenate([[tk], c[iu]]) for tk, c in zip(t, result.trace.covs)))
    files.append(p)

    ctrl = result.control
    iu_d = np.triu_indices(d)
    axes = "xyz"[:d]
    m_cols = [f"M{i + 1}_{axes[a]}{axes[b]}" for i in range(2) for a, b in zip(*iu_d)]
    f_cols = [f"F{i + 1}_{axes[a]}" for i in range(2) for a in range(d)]
    p = out / "control.csv"
    write_csv(
        p,
        ["t"] + m_cols + f_cols,
        (
            np.concatenate([[tk], ctrl.curvature[n][:, iu_d[0], iu_d[1]].ravel(), ctrl.force[n].ravel()])
            for n, tk in enumerate(ctrl.times)
        ),
    )
    files.append(p)

    c_cols = [f"c{i + 1}_{axes[a]}" for i in range(2) for a in range(d)]
    p = out / "centers.csv"
    write_csv(p, ["t"] + c_cols, (np.concatenate([[tk], c.ravel()]) for tk, c in zip(ctrl.times, result.centers)))
    files.append(p)

    p = out / "diagnostics.csv"
    tr = result.trace
    write_csv(
        p,
        ["t", "invariant_residual", "I_expect", "purity"],
        zip(t, tr.invariant_residual, tr.invariant_expectation, tr.purity),
    )
    files.append(p)

    pops = result.populations
    keys = sorted(pops.populations)
    p = out / "populations.csv"
    write_csv(
        p,
        [f"n_{lab}" for lab in labels[: len(keys[0])]] + ["population"],
        (list(map(str, idx)) + [pops[idx]] for idx in keys),
    )
    files.append(p)

    n = t.size
    snap_times = {"t0": t[0], "t_half": t[(n - 1) // 2], "t_final": t[-1], "target": t[-1]}
    p = out / "snapshots.json"
    payload = {
        "units": "oscillator units of the weak trap frequency",
        "labels": labels,
        "snapshots": {
            key: {"t": float(snap_times[key]), "covariance": result.snapshots[key].tolist()}
            for key in ("t0", "t_half", "t_final", "target")
        },
    }
    p.write_text(json.dumps(payload, indent=1) + "\n", encoding="utf-8")
    files.append(p)
    return files


def write_manifest(
    out: Path,
    cfg: ProtocolConfig,
    command: str,
    started: datetime,
    files: Sequence[Path],
    summary: dict,
) -> Path:
    manifest = {
        "tool": "invshuttle",
        "version": __version__,
        "backend": BACKEND,
        "command": command,
        "config_hash": cfg.digest,
        "config_source": cfg.source,
        "csv_schema_version": CSV_SCHEMA_VERSION,
        "started": started.isoformat(),
        "finished": datetime.now(timezone.utc).isoformat(),
        "outputs": [{"file": f.name, "sha256": _sha256(f)} for f in files],
        "summary": summary,
    }
    path = out / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, allow_nan=True) + "\n", encoding="utf-8")
    return path


def _out_dir(args, cfg: ProtocolConfig) -> Path:
    return Path(args.out or cfg.output_directory or "out")


def _json_safe(x):
    return None if isinstance(x, float) and not math.isfinite(x) else x


def cmd_run(args) -> int:
    started = datetime.now(timezone.utc)
    cfg, spec = load_config(args.config)
    try:
        result = run(spec)
    except NUMERICAL_ERRORS as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    out = _out_dir(args, cfg)
    files = write_run_outputs(result, spec, out)
    pops = result.populations
    summary = {
        **{k: _json_safe(v) for k, v in result.summary().items()},
        "population_status": pops.status,
        "populations": {"".join(map(str, idx)): p for idx, p in pops.largest(8)},
    }
    write_manifest(out, cfg, "run", started, files, summary)
    print(f"T = {result.duration:g}: fidelity {result.fidelity:.6f}, outputs in {out}")
    return EXIT_OK


def parse_durations(text: str) -> List[float]:
    items = [s.strip() for s in text.split(",") if s.strip()]
    try:
        values = [float(s) for s in items]
    except ValueError:
        raise ConfigError(f"cannot parse durations {text!r}", "--durations") from None
    if not values:
        raise ConfigError("empty duration list", "--durations")
    if any(not (v > 0 and math.isfinite(v)) for v in values):
        raise ConfigError("durations must be positive and finite", "--durations")
    return values


def cmd_sweep(args) -> int:
    started = datetime.now(timezone.utc)
    cfg, spec = load_config(args.config)
    if args.durations is not None:
        durations = parse_durations(args.durations)
    elif cfg.durations is not None:
        durations = cfg.durations
        if not durations:
            raise cfg.error(["sweep", "durations"], "empty duration list")
    else:
        durations = default_sweep_durations()
    points = sweep(spec, durations, worker_count())
    out = _out_dir(args, cfg)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "fidelity_sweep.csv"
    write_csv(
        path,
        ["T", "fidelity", "residual", "status", "wall_time"],
        ([p.duration, p.fidelity, p.residual, p.status, p.wall_time] for p in points),
    )
    ok = [p for p in points if p.status == "ok"]
    for p in points:
        if p.status != "ok":
            print(f"T = {p.duration:g} failed: {p.message}", file=sys.stderr)
    summary = {
        "points": len(points),
        "succeeded": len(ok),
        "min_fidelity": min((p.fidelity for p in ok), default=None),
        "max_residual": max((p.residual for p in ok), default=None),
    }
    write_manifest(out, cfg, "sweep", started, [path], summary)
    print(f"{len(ok)}/{len(points)} durations succeeded, results in {path}")
    return EXIT_OK if ok else EXIT_NUMERICAL


def cmd_validate(args) -> int:
    cfg, spec = load_config(args.config)
    units = spec.units
    m0, _ = spec.confinements()
    ion = IonSpecies(1.0, spec.ion_charge)
    try:
        x1, x2 = equilibrium_positions(m0, (ion, ion), spec.kappa)
    except NUMERICAL_ERRORS as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    d0 = float(np.linalg.norm(x1 - x2))
    print(f"config ok: {cfg.source} (sha256 {cfg.digest[:12]})")
    print(f"oscillator length  = {units.length * 1e9:.6g} nm")
    print(f"kappa              = {spec.kappa:.6g}")
    print(f"omega_r / omega_t  = {spec.omega_r / spec.omega_t:.6g}")
    print(f"d0                 = {units.length_to_si(d0) * 1e6:.4f} um ({d0:.6g} oscillator lengths)")
    print(f"final separation   = {spec.separation * 1e6:.6g} um")
    print(f"duration           = {spec.duration:g} / omega_t, {spec.n_steps} steps")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="invshuttle", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__} ({BACKEND})")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="simulate one protocol and write traces")
    p.add_argument("config")
    p.add_argument("--out", help="output directory (default: config output.directory or ./out)")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="fidelity as a function of the protocol duration")
    p.add_argument("config")
    p.add_argument("--durations", help="comma-separated durations in units of 1/omega_t")
    p.add_argument("--out")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("validate", help="check a config without simulating")
    p.add_argument("config")
    p.set_defaults(func=cmd_validate)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INVALID if exc.code else EXIT_OK
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
