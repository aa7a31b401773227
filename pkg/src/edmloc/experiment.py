"""Batch evaluation harness comparing the localizers over random scenarios.

Scenario seeds are a pure function of the master seed and the scenario
grid index, so runs are reproducible regardless of parallelism.  Raw
per-scenario records are written without wall-clock columns (timings go
to a separate file) so identical configurations produce byte-identical
result files.
"""

import csv
import json
import logging
import math
import re
import time
from dataclasses import dataclass
from multiprocessing import get_context
from pathlib import Path

import numpy as np

from . import dsp, localizer, simulate, srp

logger = logging.getLogger(__name__)

DEFAULT_METHODS = ("srp-phat", "edm-c1", "edm-c2", "edm-c3")
LARGE_ERROR_M = 0.25

_EDM_RE = re.compile(r"^edm-c(\d+)$")

RAW_COLUMNS = (
    "scenario_id",
    "alpha_c",
    "rep",
    "method",
    "error_m",
    "alpha_hat_m",
    "cost_min",
    "failure",
)
TIMING_COLUMNS = ("scenario_id", "method", "runtime_ms", "dsp_ms")
SUMMARY_COLUMNS = (
    "alpha_c",
    "method",
    "n",
    "n_failed",
    "median_m",
    "q1_m",
    "q3_m",
    "n_large",
)


def parse_method(name):
    """Split a method label into ("srp", None) or ("edm", candidate_count)."""
    if name == "srp-phat":
        return "srp", None
    m = _EDM_RE.match(name)
    if m and int(m.group(1)) >= 1:
        return "edm", int(m.group(1))
    raise ValueError(f"unknown method {name!r} (use srp-phat or edm-c<N>)")


@dataclass(frozen=True)
class ExperimentConfig:
    alpha_c_values: tuple = (0.5, 1.0, 2.0, 3.0)
    repetitions: int = 20
    methods: tuple = DEFAULT_METHODS
    master_seed: int = 12345
    exact_tdoa: bool = False
    jobs: int = 1
    # scenario
    room_dims: tuple = (6.0, 6.0, 2.4)
    sample_rate: float = 16000.0
    speed_of_sound: float = 343.0
    mic_count: int = 6
    snr_db: float = 5.0
    duration_s: float = 5.0
    noise_model: str = "diffuse"
    target_drr_db: object = 0.0  # None disables calibration
    # DSP front end
    interp_factor: int = 720
    weight_beta: float = 15.0
    # distance search
    alpha_resolution: float = 0.001
    alpha_max: object = None  # None: room diagonal
    alpha_strategy: str = "coarse-fine"
    # SRP grid
    srp_coarse_step: float = 0.10
    srp_fine_step: float = 0.01
    srp_refine_count: int = 3
    srp_fine_halfwidth: float = 0.10

    def __post_init__(self):
        if self.repetitions < 1:
            raise ValueError("repetitions must be >= 1")
        if self.master_seed < 0:
            raise ValueError("master_seed must be nonnegative")
        if not self.alpha_c_values:
            raise ValueError("need at least one source distance")
        if not self.methods:
            raise ValueError("need at least one method")
        for m in self.methods:
            parse_method(m)
        if self.exact_tdoa and any(parse_method(m)[0] == "srp" for m in self.methods):
            raise ValueError("exact-TDOA bypass applies to EDM methods only")
        if self.jobs < 1:
            raise ValueError("jobs must be >= 1")
        object.__setattr__(self, "alpha_c_values", tuple(float(a) for a in self.alpha_c_values))
        object.__setattr__(self, "methods", tuple(self.methods))
        object.__setattr__(self, "room_dims", tuple(float(d) for d in self.room_dims))

    @classmethod
    def from_dict(cls, data):
        unknown = set(data) - {f.name for f in cls.__dataclass_fields__.values()}
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    def alpha_search_config(self):
        alpha_max = self.alpha_max
        if alpha_max is None:
            alpha_max = math.sqrt(sum(d * d for d in self.room_dims))
        return localizer.AlphaSearchConfig(
            resolution=self.alpha_resolution,
            alpha_max=float(alpha_max),
            speed_of_sound=self.speed_of_sound,
            strategy=self.alpha_strategy,
        )

    def srp_grid_config(self):
        return srp.SrpGridConfig(
            room_dims=self.room_dims,
            coarse_step=self.srp_coarse_step,
            fine_step=self.srp_fine_step,
            refine_count=self.srp_refine_count,
            fine_halfwidth=self.srp_fine_halfwidth,
        )

    def stft_config(self):
        return dsp.StftConfig(sample_rate=self.sample_rate)

    def room_spec(self):
        return simulate.RoomSpec(
            dims=self.room_dims,
            sample_rate=self.sample_rate,
            speed_of_sound=self.speed_of_sound,
        )

    def scenario_spec(self, alpha_c, seed):
        return simulate.ScenarioSpec(
            seed=seed,
            mic_count=self.mic_count,
            source_distance=alpha_c,
            snr_db=self.snr_db,
            duration_s=self.duration_s,
            noise_model=self.noise_model,
            target_drr_db=self.target_drr_db,
        )


@dataclass
class ErrorRecord:
    scenario_id: str
    alpha_c: float
    rep: int
    method: str
    error_m: float
    alpha_hat_m: float
    cost_min: float
    runtime_ms: float
    dsp_ms: float
    failure: str = ""


def scenario_seed(master_seed, alpha_index, rep):
    """Deterministic per-scenario seed, independent of execution order."""
    ss = np.random.SeedSequence([int(master_seed), int(alpha_index), int(rep)])
    return int(ss.generate_state(1)[0])


def _singleton_sets(tdoas):
    return [
        dsp.TdoaCandidateSet(pair=(m + 1, 0), delays=np.array([t]), scores=np.array([1.0]))
        for m, t in enumerate(tdoas)
    ]


def gcc_candidate_sets(signals, mic_positions, cfg, max_candidates):
    """Shared DSP front end for the EDM methods: candidates per pair (m, 0)."""
    stft_cfg = cfg.stft_config()
    spec0 = dsp.stft(signals[0], stft_cfg)
    sets = []
    for m in range(1, mic_positions.shape[1]):
        spec_m = dsp.stft(signals[m], stft_cfg)
        cs = dsp.phat_cross_spectrum(spec_m, spec0, stft_cfg, pair=(m, 0))
        dist = float(np.linalg.norm(mic_positions[:, m] - mic_positions[:, 0]))
        curve = dsp.gcc_time_domain(
            cs,
            dist,
            interp_factor=cfg.interp_factor,
            weight_beta=cfg.weight_beta,
            speed_of_sound=cfg.speed_of_sound,
        )
        sets.append(dsp.extract_candidates(curve, max_candidates))
    return sets


def truncate_candidates(sets, count):
    return [
        dsp.TdoaCandidateSet(pair=s.pair, delays=s.delays[:count], scores=s.scores[:count])
        for s in sets
    ]


def all_pair_cross_spectra(signals, cfg):
    stft_cfg = cfg.stft_config()
    specs = [dsp.stft(sig, stft_cfg) for sig in signals]
    return [
        dsp.phat_cross_spectrum(specs[i], specs[j], stft_cfg, pair=(i, j))
        for i in range(len(specs))
        for j in range(i)
    ]


def run_methods(signals, mic_positions, source_position, methods, cfg, tdoas=None):
    """Apply the configured localizers to one scenario.

    ``signals`` may be None in exact-TDOA mode (then ``tdoas`` must hold the
    ground-truth delays).  Returns one result dict per method; failures are
    captured per method, not raised.
    """
    results = []
    edm_counts = [parse_method(m)[1] for m in methods if parse_method(m)[0] == "edm"]
    shared_sets = None
    dsp_ms = 0.0
    if edm_counts and tdoas is None:
        t0 = time.perf_counter()
        shared_sets = gcc_candidate_sets(signals, mic_positions, cfg, max(edm_counts))
        dsp_ms = 1000.0 * (time.perf_counter() - t0)

    for method in methods:
        kind, count = parse_method(method)
        out = {
            "method": method,
            "error_m": float("nan"),
            "alpha_hat_m": float("nan"),
            "cost_min": float("nan"),
            "runtime_ms": float("nan"),
            "dsp_ms": dsp_ms,
            "failure": "",
            "position": None,
        }
        try:
            if kind == "edm":
                if tdoas is not None:
                    sets = _singleton_sets(tdoas)
                else:
                    sets = truncate_candidates(shared_sets, count)
                t0 = time.perf_counter()
                res = localizer.localize(sets, mic_positions, cfg.alpha_search_config())
                out["runtime_ms"] = 1000.0 * (time.perf_counter() - t0)
                out["position"] = res.source_position
                out["alpha_hat_m"] = res.alpha_hat
                out["cost_min"] = res.cost_min
                out["combinations"] = res.combinations_evaluated
            else:
                t0 = time.perf_counter()
                cross = all_pair_cross_spectra(signals, cfg)
                res = srp.srp_localize(
                    cross, mic_positions, cfg.srp_grid_config(), cfg.speed_of_sound
                )
                out["runtime_ms"] = 1000.0 * (time.perf_counter() - t0)
                out["position"] = res.position
                out["score"] = res.score
            if source_position is not None:
                out["error_m"] = float(
                    np.linalg.norm(out["position"] - np.asarray(source_position))
                )
        except Exception as exc:  # per-method failures are recorded, not fatal
            logger.warning("method %s failed: %s", method, exc)
            out["failure"] = f"{type(exc).__name__}: {exc}"
        results.append(out)
    return results


def _scenario_records(task, cfg):
    scenario_id, alpha_c, rep, seed = task
    spec = cfg.scenario_spec(alpha_c, seed)
    room = cfg.room_spec()
    if cfg.exact_tdoa:
        rng = np.random.default_rng([seed, 0])
        mics, src = simulate.generate_geometry(spec, room, rng)
        tdoas = simulate.exact_tdoas(mics, src, cfg.speed_of_sound)
        outs = run_methods(None, mics, src, cfg.methods, cfg, tdoas=tdoas)
    else:
        inst = simulate.synthesize_scenario(spec, room)
        outs = run_methods(
            inst.mic_signals, inst.mic_positions, inst.source_position, cfg.methods, cfg
        )
    return [
        ErrorRecord(
            scenario_id=scenario_id,
            alpha_c=alpha_c,
            rep=rep,
            method=o["method"],
            error_m=o["error_m"],
            alpha_hat_m=o["alpha_hat_m"],
            cost_min=o["cost_min"],
            runtime_ms=o["runtime_ms"],
            dsp_ms=o["dsp_ms"],
            failure=o["failure"],
        )
        for o in outs
    ]


def run_experiment(cfg):
    """Run the full scenario grid; returns records sorted deterministically."""
    tasks = []
    for ai, alpha_c in enumerate(cfg.alpha_c_values):
        for rep in range(cfg.repetitions):
            seed = scenario_seed(cfg.master_seed, ai, rep)
            tasks.append((f"a{alpha_c:g}-r{rep:03d}", alpha_c, rep, seed))

    if cfg.jobs > 1:
        with get_context("spawn").Pool(cfg.jobs) as pool:
            chunks = pool.starmap(_scenario_records, [(t, cfg) for t in tasks])
    else:
        chunks = []
        for i, t in enumerate(tasks):
            logger.info("scenario %d/%d (%s)", i + 1, len(tasks), t[0])
            chunks.append(_scenario_records(t, cfg))
    records = [r for chunk in chunks for r in chunk]
    records.sort(key=lambda r: (r.scenario_id, r.method))
    return records


def _lower_rank(sorted_vals, frac):
    return sorted_vals[int(math.floor(frac * (len(sorted_vals) - 1)))]


def summarize(records):
    """Per (alpha_c, method) cell: counts, lower-median, quartiles, outliers.

    The median and quartiles use the lower nearest-rank convention (for an
    even count the lower of the two middle values), so summaries are exact
    record values; failed records are counted but excluded from statistics.
    """
    cells = {}
    for r in records:
        cells.setdefault((r.alpha_c, r.method), []).append(r)
    rows = []
    for (alpha_c, method) in sorted(cells):
        group = cells[(alpha_c, method)]
        errs = sorted(r.error_m for r in group if not r.failure and not math.isnan(r.error_m))
        row = {
            "alpha_c": alpha_c,
            "method": method,
            "n": len(group),
            "n_failed": sum(1 for r in group if r.failure),
            "median_m": _lower_rank(errs, 0.5) if errs else float("nan"),
            "q1_m": _lower_rank(errs, 0.25) if errs else float("nan"),
            "q3_m": _lower_rank(errs, 0.75) if errs else float("nan"),
            "n_large": sum(1 for e in errs if e > LARGE_ERROR_M),
        }
        rows.append(row)
    return rows


def _fmt(value):
    if isinstance(value, float):
        if math.isnan(value):
            return ""
        return f"{value:.6f}"
    return str(value)


def _json_value(value):
    if isinstance(value, float):
        return None if math.isnan(value) else round(value, 6)
    return value


def _write_csv(path, columns, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_fmt(row[c]) for c in columns])


def _write_json(path, rows):
    with open(path, "w") as fh:
        json.dump(rows, fh, indent=2, sort_keys=True)
        fh.write("\n")


def emit_results(records, out_dir, formats=("csv", "json")):
    """Write raw records, summary and timings; returns the file paths.

    ``results.*`` and ``summary.*`` contain only deterministic fields, so
    reruns of the same configuration are byte-identical; wall-clock
    measurements go to ``timings.csv``.
    """
    if not records:
        raise ValueError("no records to emit")
    unknown = set(formats) - {"csv", "json"}
    if unknown:
        raise ValueError(f"unknown output formats: {sorted(unknown)}")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    summary = summarize(records)
    raw_rows = [
        {c: getattr(r, c) for c in RAW_COLUMNS + ("runtime_ms", "dsp_ms")}
        for r in records
    ]

    paths = {}
    if "csv" in formats:
        paths["results_csv"] = out / "results.csv"
        _write_csv(paths["results_csv"], RAW_COLUMNS, raw_rows)
        paths["summary_csv"] = out / "summary.csv"
        _write_csv(paths["summary_csv"], SUMMARY_COLUMNS, summary)
        paths["timings_csv"] = out / "timings.csv"
        _write_csv(paths["timings_csv"], TIMING_COLUMNS, raw_rows)
    if "json" in formats:
        paths["results_json"] = out / "results.json"
        _write_json(
            paths["results_json"],
            [{c: _json_value(row[c]) for c in RAW_COLUMNS} for row in raw_rows],
        )
        paths["summary_json"] = out / "summary.json"
        _write_json(
            paths["summary_json"],
            [{c: _json_value(row[c]) for c in SUMMARY_COLUMNS} for row in summary],
        )
    return paths


def read_results_csv(path):
    """Parse a results.csv back into ErrorRecord objects (timings zeroed)."""
    records = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != list(RAW_COLUMNS):
            raise ValueError(f"unexpected results header: {reader.fieldnames}")
        for row in reader:
            records.append(
                ErrorRecord(
                    scenario_id=row["scenario_id"],
                    alpha_c=float(row["alpha_c"]),
                    rep=int(row["rep"]),
                    method=row["method"],
                    error_m=float(row["error_m"]) if row["error_m"] else float("nan"),
                    alpha_hat_m=float(row["alpha_hat_m"]) if row["alpha_hat_m"] else float("nan"),
                    cost_min=float(row["cost_min"]) if row["cost_min"] else float("nan"),
                    runtime_ms=0.0,
                    dsp_ms=0.0,
                    failure=row["failure"],
                )
            )
    return records
