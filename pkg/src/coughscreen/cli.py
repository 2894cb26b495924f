"""Command-line front door.

Subcommands:
    synth     generate a synthetic dataset (WAVs + manifest)
    features  extract the 261-value feature vectors from a manifest to CSV
    run       execute the full nested experiment and write reports
    audit     verify an exported fold-plan CSV for cougher disjointness
    plot      render SVG diagrams from a written report.json

Exit codes: 0 success, 2 config error, 3 data error, 4 leakage-audit failure.
The COUGHSCREEN_OUT environment variable sets the default output root.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys

from .data import ManifestError, load_manifest
from .experiment import ConfigError, ExperimentConfig, run_experiment
from .features import VECTOR_COLUMN_NAMES, extract
from .reports import emit_plots, load_report
from .splits import LeakageError, audit_plan_rows, load_plan_csv
from .synth import SyntheticConfig, export_dataset, generate_synthetic

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_LEAKAGE = 4


def _default_out(sub: str) -> str:
    return os.path.join(os.environ.get("COUGHSCREEN_OUT", "runs"), sub)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="coughscreen", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    p.add_argument("--out", default=_default_out("synth"))
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--coughers", type=int, default=80)
    p.add_argument("--prevalence", type=float, default=295 / 1105)
    p.add_argument("--coughs-mean", type=float, default=9.03)
    p.add_argument("--coughs-std", type=float, default=5.7)
    p.add_argument("--coughs-min", type=int, default=3)
    p.add_argument("--coughs-max", type=int, default=50)
    p.add_argument("--signal-audio", type=float, default=1.0)
    p.add_argument("--signal-clinical", type=float, default=1.0)

    p = sub.add_parser("features", help="manifest -> feature CSV")
    p.add_argument("manifest")
    p.add_argument("--audio-root", default=None)
    p.add_argument("--out", default=None, help="output CSV (default: stdout)")

    p = sub.add_parser("run", help="run the full nested experiment")
    p.add_argument("--config", default=None, help="JSON experiment config")
    p.add_argument("--manifest", default=None)
    p.add_argument("--audio-root", default=None)
    p.add_argument("--synthetic", action="store_true",
                   help="use a synthetic dataset (defaults from 'synth')")
    p.add_argument("--coughers", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default=None)
    p.add_argument("--jobs", type=int, default=None)
    p.add_argument("--feature-mode", choices=["audio", "fused", "both"], default=None)
    p.add_argument("--model", choices=["LR", "GBDT", "both"], default=None)
    p.add_argument("--alpha", type=float, action="append", default=None,
                   help="miscoverage level; repeatable")
    p.add_argument("--plots", action="store_true", help="also emit SVG plots")

    p = sub.add_parser("audit", help="verify a fold-plan CSV for disjointness")
    p.add_argument("plan")

    p = sub.add_parser("plot", help="render SVG diagrams from report.json")
    p.add_argument("report")
    p.add_argument("--out", default=None, help="output directory (default: report's)")
    return parser


def _cmd_synth(args) -> int:
    cfg = SyntheticConfig(n_coughers=args.coughers, prevalence=args.prevalence,
                          coughs_mean=args.coughs_mean, coughs_std=args.coughs_std,
                          coughs_min=args.coughs_min, coughs_max=args.coughs_max,
                          signal_strength_audio=args.signal_audio,
                          signal_strength_clinical=args.signal_clinical,
                          seed=args.seed)
    coughers = generate_synthetic(cfg)
    manifest = export_dataset(coughers, args.out)
    n_rec = sum(len(c.recordings) for c in coughers)
    print(f"wrote {len(coughers)} coughers / {n_rec} recordings to {manifest}")
    return EXIT_OK


def _cmd_features(args) -> int:
    coughers = load_manifest(args.manifest, args.audio_root)
    header = ["recording_id", "cougher_id"] + VECTOR_COLUMN_NAMES
    out = open(args.out, "w", newline="", encoding="utf-8") if args.out else sys.stdout
    try:
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(header)
        for c in coughers:
            for rec in c.recordings:
                vec = extract(rec.waveform)
                writer.writerow([rec.id, c.id] + [repr(v) for v in vec])
    finally:
        if args.out:
            out.close()
    if args.out:
        print(f"wrote features for {sum(len(c.recordings) for c in coughers)} "
              f"recordings to {args.out}")
    return EXIT_OK


def _cmd_run(args) -> int:
    doc = {}
    if args.config:
        try:
            with open(args.config, encoding="utf-8") as fh:
                doc = json.load(fh)
        except FileNotFoundError as exc:
            raise ConfigError(f"config file not found: {args.config}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file is not valid JSON: {exc}") from exc
    if args.manifest:
        doc["manifest"] = args.manifest
    if args.audio_root:
        doc["audio_root"] = args.audio_root
    if args.synthetic and "synthetic" not in doc:
        doc["synthetic"] = {}
    if args.coughers is not None:
        doc.setdefault("synthetic", {})["n_coughers"] = args.coughers
    if args.seed is not None:
        doc["seed"] = args.seed
    if args.out is not None:
        doc["out"] = args.out
    doc.setdefault("out", _default_out("experiment"))
    if args.jobs is not None:
        doc["jobs"] = args.jobs
    if args.feature_mode is not None:
        doc["feature_mode"] = args.feature_mode
    if args.model is not None:
        doc["family"] = args.model
    if args.alpha:
        doc["alphas"] = args.alpha
    cfg = ExperimentConfig.from_dict(doc)
    report = run_experiment(cfg, progress=lambda msg: print(msg, flush=True))
    if args.plots:
        emit_plots(report, cfg.out)
    print(f"done in {report.wall_clock_s:.1f}s; reports in {cfg.out}")
    return EXIT_OK


def _cmd_audit(args) -> int:
    try:
        rows = load_plan_csv(args.plan)
    except FileNotFoundError as exc:
        raise ManifestError(str(exc)) from exc
    except ValueError as exc:
        raise ManifestError(str(exc)) from exc
    violations = audit_plan_rows(rows)
    if violations:
        for v in violations:
            print(f"VIOLATION: {v}")
        raise LeakageError(f"{len(violations)} violation(s) in {args.plan}")
    print(f"{args.plan}: {len(rows)} rows, cougher-disjoint at every boundary")
    return EXIT_OK


def _cmd_plot(args) -> int:
    try:
        report = load_report(args.report)
    except FileNotFoundError as exc:
        raise ManifestError(str(exc)) from exc
    outdir = args.out or os.path.dirname(os.path.abspath(args.report))
    written = emit_plots(report, outdir)
    print(f"wrote {len(written)} plot files to {outdir}")
    return EXIT_OK


_COMMANDS = {"synth": _cmd_synth, "features": _cmd_features, "run": _cmd_run,
             "audit": _cmd_audit, "plot": _cmd_plot}


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ManifestError, FileNotFoundError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except LeakageError as exc:
        print(f"leakage audit failure: {exc}", file=sys.stderr)
        return EXIT_LEAKAGE


if __name__ == "__main__":
    sys.exit(main())
