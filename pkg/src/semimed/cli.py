"""Command-line interface: ``semimed estimate`` and ``semimed simulate``."""

from __future__ import annotations

import argparse
import csv
import datetime as _dt
import hashlib
import io
import json
import os
import sys
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from .decomposition import CELLS, TARGETS, build_surface, cell_arrays, effect_curve, horizon_of
from .event_data import DataValidationError, build_panels, read_csv
from .inference import (
    BootstrapFailureError,
    bootstrap,
    eval_index,
    haz_variance,
    percentile_band,
    prev_partial_variance,
    wald_band,
)
from .simulation import ConfigError, ScenarioConfig, config_dict, oracle_rows, run_study

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_PARTIAL_VARIANCE = 3

CURVE_COLUMNS = ("time", "z1", "z2_or_effect", "decomposition", "estimate", "se", "ci_lo", "ci_hi", "variance_method")
EFFECT_FLAGS = {"total": "total", "de": "DE", "ie": "IE", "de_alt": "DE_alt", "ie_alt": "IE_alt"}
MANIFEST = "manifest.json"


def _threads(value):
    if value is not None:
        return value
    env = os.environ.get("SEMIMED_THREADS")
    return int(env) if env else 1


def _fmt(value):
    if value is None:
        return ""
    value = float(value)
    if not np.isfinite(value):
        raise ValueError("refusing to write a non-finite value")
    return repr(value)


def config_hash(options):
    """sha256 of the canonical JSON form of ``options``."""
    blob = json.dumps(options, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode()).hexdigest()


def _sha256_file(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _write_output(path, body, digest):
    text = f"# manifest={MANIFEST} config_hash={digest}\n" + body
    Path(path).write_text(text)


def _write_manifest(out_dir, command, inputs, digest, seed, horizon, warn, outputs, extra=None):
    manifest = {
        "command": command,
        "inputs": {str(p): _sha256_file(p) for p in inputs},
        "config_hash": digest,
        "seed": seed,
        "version": __version__,
        "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
        "horizon": horizon,
        "warnings": warn,
        "outputs": {Path(p).name: _sha256_file(p) for p in outputs},
    }
    if extra:
        manifest.update(extra)
    (Path(out_dir) / MANIFEST).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def read_curves(path):
    """Read a curves.csv written by ``semimed estimate`` (header comment kept)."""
    with open(path, newline="") as fh:
        comment = fh.readline()
        rows = list(csv.DictReader(fh))
    return comment, rows


def write_curves(path, comment, rows):
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(CURVE_COLUMNS)
    for row in rows:
        writer.writerow([row[c] for c in CURVE_COLUMNS])
    Path(path).write_text(comment + out.getvalue())


# -- estimate -------------------------------------------------------------------


def _parse_grid(text, panels):
    if text == "events":
        grid = panels[0].grid
        jumps = np.zeros(grid.size, dtype=bool)
        for p in panels.values():
            jumps |= (p.dN_star + p.dN_0 + p.dN_1) > 0
        return grid[jumps]
    try:
        times = np.array(sorted({float(v) for v in text.split(",") if v.strip()}))
    except ValueError:
        raise ValueError(f"--grid must be 'events' or comma-separated times, got {text!r}") from None
    if times.size == 0 or np.any(times < 0) or not np.all(np.isfinite(times)):
        raise ValueError("--grid times must be finite and nonnegative")
    return times


def _parse_effects(text):
    names = [v.strip().lower() for v in text.split(",") if v.strip()]
    bad = [n for n in names if n not in EFFECT_FLAGS]
    if bad:
        raise ValueError(f"unknown effect(s) {', '.join(bad)}; choose from {', '.join(EFFECT_FLAGS)}")
    return [EFFECT_FLAGS[n] for n in dict.fromkeys(names)]


def _is_partial(decomposition, target):
    return decomposition == "prev" and any(z1 != z2 for z1, z2 in TARGETS[target])


def cmd_estimate(args):
    try:
        records = read_csv(args.input)
    except DataValidationError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_INVALID
    panels = build_panels(records)
    try:
        grid = _parse_grid(args.grid, panels)
        effects = _parse_effects(args.effects)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    if not 0 < args.alpha < 1:
        print("error: --alpha must lie in (0, 1)", file=sys.stderr)
        return EXIT_INVALID
    decompositions = ("prev", "haz") if args.decomposition == "both" else (args.decomposition,)
    targets = [f"F{z1}{z2}" for z1, z2 in CELLS] + effects
    want_asym = args.ci in ("asymptotic", "both")
    want_boot = args.ci in ("bootstrap", "both")

    partial = [t for t in targets if "prev" in decompositions and _is_partial("prev", t)]
    if args.ci == "asymptotic" and partial and not args.bootstrap_fallback:
        print(
            "error: asymptotic intervals are unavailable for the prevalence-controlling "
            f"cross-world targets ({', '.join(partial)}): their variance needs the covariance of "
            "the estimated prevalence (X) process, which is not implemented. Use --ci bootstrap "
            "or pass --bootstrap-fallback.",
            file=sys.stderr,
        )
        return EXIT_PARTIAL_VARIANCE

    options = {
        "command": "estimate",
        "input_sha256": _sha256_file(args.input),
        "decomposition": args.decomposition,
        "effects": effects,
        "ci": args.ci,
        "n_boot": args.n_boot,
        "alpha": args.alpha,
        "seed": args.seed,
        "grid": args.grid,
        "bootstrap_fallback": bool(args.bootstrap_fallback),
    }
    digest = config_hash(options)
    horizon = horizon_of(panels)
    notes = []
    if grid.size and grid[-1] > horizon:
        notes.append(f"estimates after t={horizon!r} are frozen (no subjects at risk in one arm)")

    boot_needed = want_boot or (args.ci == "asymptotic" and partial and args.bootstrap_fallback)
    counts = {arm: (p.dN_star, p.dN_0, p.dN_1, p.Y_0, p.Y_1) for arm, p in panels.items()}
    idx = eval_index(panels[0].grid, grid)
    hidx = int(np.searchsorted(panels[0].grid, horizon, side="right") - 1)

    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        boot = None
        if boot_needed:
            try:
                boot = bootstrap(
                    records, targets, decompositions, args.n_boot, args.seed, grid, _threads(args.threads)
                )
            except BootstrapFailureError as exc:
                print(f"error: {exc}", file=sys.stderr)
                return EXIT_INVALID
            if boot.n_failed:
                notes.append(f"dropped {boot.n_failed} of {args.n_boot} bootstrap replicates")
        rows, unstable, bootstrap_only = [], [], []
        for d in decompositions:
            surface = build_surface(panels, d, horizon)
            cells = cell_arrays(counts, d, hidx)
            for target in targets:
                estimate = effect_curve(surface, target).value(grid) if grid.size else np.empty(0)
                z1, label = (target[1], target[2]) if target in ("F00", "F01", "F10", "F11") else ("", target)
                lower = 0.0 if z1 != "" else -1.0
                blocks = []
                if args.ci == "none":
                    blocks.append(("none", None, None, None))
                if want_asym and not _is_partial(d, target):
                    if d == "haz":
                        var, min_risk = haz_variance(counts, cells, target, idx, hidx)
                    else:
                        var, min_risk, _ = prev_partial_variance(counts, cells, target, idx, hidx)
                    if min_risk < 5:
                        unstable.append(f"{d}/{target}")
                    se = np.sqrt(var)
                    lo, hi = wald_band(estimate, se, args.alpha, lower)
                    blocks.append(("asymptotic", se, lo, hi))
                use_boot = want_boot or (args.ci == "asymptotic" and _is_partial(d, target))
                if use_boot:
                    reps = boot.replicates[d, target]
                    se = np.std(reps, axis=0, ddof=1)
                    lo, hi = percentile_band(estimate, reps, args.alpha, lower)
                    blocks.append(("bootstrap", se, lo, hi))
                    if args.ci == "both" and _is_partial(d, target):
                        bootstrap_only.append(f"{d}/{target}")
                for method, se, lo, hi in blocks:
                    for j, t in enumerate(grid):
                        rows.append({
                            "time": _fmt(t),
                            "z1": z1,
                            "z2_or_effect": label,
                            "decomposition": d,
                            "estimate": _fmt(estimate[j]),
                            "se": "" if se is None else _fmt(se[j]),
                            "ci_lo": "" if lo is None else _fmt(lo[j]),
                            "ci_hi": "" if hi is None else _fmt(hi[j]),
                            "variance_method": method,
                        })
    if unstable:
        notes.append(
            "fewer than 5 subjects at risk at some jumps inside the grid; asymptotic variance is "
            f"unstable in the tail for {', '.join(unstable)}"
        )
    if bootstrap_only:
        notes.append(
            f"only a partial asymptotic variance exists for {', '.join(bootstrap_only)}; "
            "bootstrap intervals only"
        )
    notes.extend(str(w.message) for w in caught)
    notes = list(dict.fromkeys(notes))
    for note in notes:
        print(f"warning: {note}", file=sys.stderr)

    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    curves = out_dir / "curves.csv"
    write_curves(curves, f"# manifest={MANIFEST} config_hash={digest}\n", rows)
    _write_manifest(out_dir, "estimate", [args.input], digest, args.seed, horizon, notes, [curves],
                    {"options": options})
    return EXIT_OK


# -- simulate -------------------------------------------------------------------


def _scenario_from_args(args):
    raw = {}
    if args.config:
        text = Path(args.config).read_text()
        base = ScenarioConfig.from_text(text)
        raw = config_dict(base)
        if base.name != "custom":
            raw["setting"] = base.name
        raw.pop("name", None)
    if args.setting is not None:
        raw["setting"] = args.setting
    overrides = {
        "a": args.a, "b": args.b, "c": args.c, "m": args.m, "p_treat": args.p_treat,
        "censor_low": args.censor_low, "censor_high": args.censor_high, "horizon": args.horizon,
        "n_reps": args.reps, "n_boot": args.n_boot, "seed": args.seed, "eval_times": args.eval_times,
    }
    raw.update({k: v for k, v in overrides.items() if v is not None})
    if raw.get("setting") == "custom":
        raw["name"] = "custom"
    return ScenarioConfig.from_mapping(raw)


def cmd_simulate(args):
    try:
        config = _scenario_from_args(args)
    except (ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    options = {"command": "simulate", **config_dict(config)}
    digest = config_hash(options)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        summary = run_study(config, threads=_threads(args.threads))
    notes = list(dict.fromkeys(str(w.message) for w in caught))
    if summary.n_failed_replicates:
        notes.append(
            f"{summary.n_failed_replicates} replicate(s) had more than 10% failed bootstrap resamples "
            "and were left out of the bootstrap statistics"
        )
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    body = io.StringIO()
    summary.to_csv(body)
    _write_output(out_dir / "study_summary.csv", body.getvalue(), digest)
    body = io.StringIO()
    summary.replicates_to_csv(body)
    _write_output(out_dir / "replicates.csv", body.getvalue(), digest)
    body = io.StringIO()
    writer = csv.writer(body, lineterminator="\n")
    writer.writerow(("time", "decomposition", "target", "value"))
    dense = np.linspace(0.0, config.horizon, 201)
    for t, d, target, v in oracle_rows(config, dense):
        writer.writerow((repr(t), d, target, repr(v)))
    _write_output(out_dir / "oracle_curves.csv", body.getvalue(), digest)

    outputs = [out_dir / n for n in ("study_summary.csv", "replicates.csv", "oracle_curves.csv")]
    _write_manifest(out_dir, "simulate", [args.config] if args.config else [], digest, config.seed,
                    config.horizon, notes, outputs, {"config": config_dict(config)})
    for note in notes:
        print(f"warning: {note}", file=sys.stderr)
    print(summary.pretty())
    return EXIT_OK


# -- entry point ----------------------------------------------------------------


def build_parser():
    parser = argparse.ArgumentParser(
        prog="semimed",
        description="Natural direct and indirect effects on a terminal event in semi-competing risks data.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    est = sub.add_parser("estimate", help="estimate incidence and effect curves from a CSV file")
    est.add_argument("--input", required=True, help="CSV with columns id,z,time_nonterminal,"
                     "status_nonterminal,time_terminal,status_terminal")
    est.add_argument("--decomposition", choices=("prev", "haz", "both"), default="both")
    est.add_argument("--effects", default="total,de,ie,de_alt,ie_alt",
                     help="comma-separated subset of total,de,ie,de_alt,ie_alt")
    est.add_argument("--ci", choices=("asymptotic", "bootstrap", "both", "none"), default="bootstrap")
    est.add_argument("--n-boot", type=int, default=200)
    est.add_argument("--alpha", type=float, default=0.05)
    est.add_argument("--seed", type=int, default=0)
    est.add_argument("--grid", default="events", help="'events' (all event times) or comma-separated times")
    est.add_argument("--bootstrap-fallback", action="store_true",
                     help="with --ci asymptotic, use the bootstrap for targets without a full variance")
    est.add_argument("--threads", type=int, default=None, help="worker threads (default: $SEMIMED_THREADS or 1)")
    est.add_argument("--out-dir", default=".")
    est.set_defaults(func=cmd_estimate)

    sim = sub.add_parser("simulate", help="run a replication study with known truth")
    sim.add_argument("--setting", choices=("1", "2", "3", "null", "custom"), default=None)
    sim.add_argument("--config", help="flat key=value scenario file")
    for flag in ("a", "b", "c"):
        sim.add_argument(f"--{flag}", type=int, default=None)
    sim.add_argument("--m", type=int, default=None, help="sample size per dataset")
    sim.add_argument("--p-treat", type=float, default=None)
    sim.add_argument("--censor-low", type=float, default=None)
    sim.add_argument("--censor-high", type=float, default=None)
    sim.add_argument("--horizon", type=float, default=None)
    sim.add_argument("--eval-times", default=None, help="comma-separated report times")
    sim.add_argument("--reps", type=int, default=None)
    sim.add_argument("--n-boot", type=int, default=None)
    sim.add_argument("--seed", type=int, default=None)
    sim.add_argument("--threads", type=int, default=None, help="worker threads (default: $SEMIMED_THREADS or 1)")
    sim.add_argument("--out-dir", default=".")
    sim.set_defaults(func=cmd_simulate)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if getattr(args, "n_boot", None) is not None and args.n_boot < 2:
        print("error: --n-boot must be at least 2", file=sys.stderr)
        return EXIT_INVALID
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
