"""Command line interface: simulate, localize, experiment, report."""

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import experiment, simulate

logger = logging.getLogger(__name__)


def _parse_methods(text, candidates):
    methods = []
    for token in text.split(","):
        token = token.strip()
        if not token:
            continue
        if token == "edm":
            token = f"edm-c{candidates}"
        experiment.parse_method(token)
        methods.append(token)
    if not methods:
        raise ValueError("no methods given")
    return tuple(methods)


def _parse_floats(text):
    return tuple(float(tok) for tok in text.split(",") if tok.strip())


def _add_simulate(sub):
    p = sub.add_parser("simulate", help="synthesize one scenario into a directory")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--alpha-c", type=float, default=2.0, help="source distance from the mic centroid, m")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--snr-db", type=float, default=5.0)
    p.add_argument("--duration", type=float, default=5.0)
    p.add_argument("--mic-count", type=int, default=6)
    p.add_argument("--noise", choices=("diffuse", "white", "none"), default="diffuse")
    p.add_argument("--drr-db", default="0", help="target DRR in dB, or 'none' to skip calibration")
    p.add_argument("--sample-rate", type=float, default=16000.0)


def _add_localize(sub):
    p = sub.add_parser("localize", help="run localizers on a saved scenario")
    p.add_argument("--scenario-dir", required=True)
    p.add_argument("--methods", default="edm-c3,srp-phat", help="comma separated")
    p.add_argument("--candidates", type=int, default=3, help="C for the plain 'edm' method label")
    p.add_argument("--exact-tdoa", action="store_true", help="bypass the DSP front end with ground-truth delays")
    p.add_argument("--out", default=None, help="write the JSON report here instead of stdout")


def _add_experiment(sub):
    p = sub.add_parser("experiment", help="batch comparison over random scenarios")
    p.add_argument("--config", default=None, help="JSON file with ExperimentConfig fields")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--reps", type=int, default=None)
    p.add_argument("--alpha-c", default=None, help="comma separated distances, m")
    p.add_argument("--methods", default=None, help="comma separated")
    p.add_argument("--candidates", type=int, default=3)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--exact-tdoa", action="store_true")
    p.add_argument("--jobs", type=int, default=None)


def _add_report(sub):
    p = sub.add_parser("report", help="recompute the summary from a results.csv")
    p.add_argument("--results", required=True)
    p.add_argument("--out-dir", default=None, help="also rewrite summary files here")


def _cmd_simulate(args):
    drr = None if args.drr_db.lower() == "none" else float(args.drr_db)
    spec = simulate.ScenarioSpec(
        seed=args.seed,
        mic_count=args.mic_count,
        source_distance=args.alpha_c,
        snr_db=args.snr_db,
        duration_s=args.duration,
        noise_model=args.noise,
        target_drr_db=drr,
    )
    room = simulate.RoomSpec(sample_rate=args.sample_rate)
    instance = simulate.synthesize_scenario(spec, room)
    out = simulate.save_scenario(instance, args.out_dir)
    print(
        json.dumps(
            {
                "out_dir": str(out),
                "source_position_m": instance.source_position.tolist(),
                "t60_s": round(instance.t60_s, 3),
                "drr_db": round(instance.drr_db, 2),
                "reflection_coeff": round(instance.reflection_coeff, 4),
            },
            indent=2,
        )
    )
    return 0


def _cmd_localize(args):
    signals, meta = simulate.load_scenario(args.scenario_dir)
    methods = _parse_methods(args.methods, args.candidates)
    cfg = experiment.ExperimentConfig(
        methods=methods,
        exact_tdoa=args.exact_tdoa,
        room_dims=tuple(meta["room_dims_m"]),
        sample_rate=meta["sample_rate_hz"],
        speed_of_sound=meta["speed_of_sound_mps"],
        mic_count=meta["mic_count"],
    )
    mics = np.asarray(meta["mic_positions_m"]).T
    source = np.asarray(meta["source_position_m"])
    tdoas = np.asarray(meta["ground_truth_tdoas_s"]) if args.exact_tdoa else None
    outs = experiment.run_methods(signals, mics, source, methods, cfg, tdoas=tdoas)
    report = []
    for o in outs:
        entry = {k: o[k] for k in ("method", "failure")}
        entry["position_m"] = None if o["position"] is None else [round(x, 6) for x in o["position"]]
        for k in ("error_m", "alpha_hat_m", "cost_min", "runtime_ms"):
            entry[k] = None if np.isnan(o[k]) else round(float(o[k]), 6)
        report.append(entry)
    text = json.dumps(report, indent=2)
    if args.out:
        Path(args.out).write_text(text + "\n")
    else:
        print(text)
    return 0


def _cmd_experiment(args):
    data = {}
    if args.config:
        with open(args.config) as fh:
            data = json.load(fh)
    if args.seed is not None:
        data["master_seed"] = args.seed
    if args.reps is not None:
        data["repetitions"] = args.reps
    if args.alpha_c is not None:
        data["alpha_c_values"] = _parse_floats(args.alpha_c)
    if args.methods is not None:
        data["methods"] = _parse_methods(args.methods, args.candidates)
    if args.exact_tdoa:
        data["exact_tdoa"] = True
    if args.jobs is not None:
        data["jobs"] = args.jobs
    cfg = experiment.ExperimentConfig.from_dict(data)

    records = experiment.run_experiment(cfg)
    paths = experiment.emit_results(records, args.out_dir)
    summary = experiment.summarize(records)
    _print_summary(summary)
    print(f"wrote {', '.join(str(p) for p in paths.values())}")
    if all(r.failure for r in records):
        print("every scenario failed", file=sys.stderr)
        return 1
    return 0


def _print_summary(summary):
    header = f"{'alpha_c':>8} {'method':>10} {'n':>4} {'median':>9} {'q1':>9} {'q3':>9} {'>25cm':>6} {'fail':>5}"
    print(header)
    for row in summary:
        print(
            f"{row['alpha_c']:>8g} {row['method']:>10} {row['n']:>4d} "
            f"{row['median_m']:>9.4f} {row['q1_m']:>9.4f} {row['q3_m']:>9.4f} "
            f"{row['n_large']:>6d} {row['n_failed']:>5d}"
        )


def _cmd_report(args):
    records = experiment.read_results_csv(args.results)
    summary = experiment.summarize(records)
    _print_summary(summary)
    if args.out_dir:
        out = Path(args.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        experiment._write_csv(out / "summary.csv", experiment.SUMMARY_COLUMNS, summary)
        experiment._write_json(
            out / "summary.json",
            [{c: experiment._json_value(r[c]) for c in experiment.SUMMARY_COLUMNS} for r in summary],
        )
    return 0


_COMMANDS = {
    "simulate": _cmd_simulate,
    "localize": _cmd_localize,
    "experiment": _cmd_experiment,
    "report": _cmd_report,
}


def main(argv=None):
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    parser = argparse.ArgumentParser(prog="edmloc", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    _add_simulate(sub)
    _add_localize(sub)
    _add_experiment(sub)
    _add_report(sub)
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (ValueError, OSError, simulate.PlacementError, simulate.CalibrationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
