"""
Command-line front end for the Monte Carlo experiments.

Each subcommand reads an optional YAML config (see ``DEFAULT_CONFIG`` for
every key), runs one experiment and writes ``results.csv``,
``manifest.json`` and a gnuplot script ``plot.gp`` into ``--out``. A
manifest can be fed back through ``--config`` to rerun the same experiment.
On failure a JSON error record is printed to stderr (and written to
``error.json`` when the output directory is usable) and the exit status is
nonzero: 2 for configuration errors, 1 otherwise.
"""

from __future__ import annotations

import argparse
import copy
import json
import os
import sys
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from .coarse import calibrate_threshold, false_alarm_rate
from .experiments import (
    CSV_COLUMNS,
    DETECTORS,
    ExperimentRecord,
    SceneSpec,
    build_scene,
    layover_geometry,
    records_to_csv,
    run_detection_sweep,
    run_layover_experiment,
    run_penalty_comparison,
    run_reconstruction,
    timing_benchmark,
)
from .fine import PENALTY_RULES, ModelSelectionConfig
from .signal_model import TomoGeometry, make_rng, reference_geometry

__all__ = ["DEFAULT_CONFIG", "DEFAULT_SEED", "COMMANDS", "ConfigError", "parse_config",
           "resolve_config", "run_command", "main"]

#: Seed used when neither the config nor ``--seed`` sets one.
DEFAULT_SEED = 20_240_611
THREADS_ENV = "CANLS_THREADS"
CSV_SCHEMA_VERSION = 1
MANIFEST_VERSION = 1

COMMANDS = ("pd-sweep", "rmse-sweep", "penalty-compare", "layover", "reconstruct", "timing",
            "calibrate-threshold")

DEFAULT_CONFIG = {
    "seed": DEFAULT_SEED,
    "trials": 2000,
    "threads": 1,
    # per-row wall-clock times make results.csv differ run to run
    "record_timing": False,
    "geometry": {
        "n_passes": 20,
        "baseline_extent": 903.0,
        "lambda_r0": 46956.0,
        "elevation_extent": 360.0,
        "grid_size": 234,
        "centered": True,
    },
    "detector": {
        "threshold": 0.8,
        "k_max": 2,
        "penalty": "BIC",
        "noise_var": 1.0,
        "fast_path": "windows",
        "refine": 1,
        "detectors": ["ca-nls", "sglrtc", "sl1mmer"],
    },
    "scenario": {"snr_db": 9.0, "alpha": 0.5},
    "sweep": {"var": "snr_db", "values": [0.0, 3.0, 6.0, 9.0, 12.0, 15.0]},
    "penalty": {
        "rules": ["BIC", "AIC", "AICc"],
        "noise_modes": ["known", "unknown"],
        "snr_values": [0.0, 3.0, 6.0, 9.0, 12.0, 15.0],
    },
    "stack": {
        "n_passes": 24,
        "baseline_extent": 100.0,
        "carrier_hz": 4.5e9,
        "range_m": 20_000.0,
        "points_per_rho": 17,
        "threshold": None,
    },
    "layover": {
        "n_pixels": 100,
        "spacing": [0.1, 3.0],
        "dphi_modes": ["zero", "random"],
        "ground_rho": 1.0,
        "extent_rho": 6.0,
        "snr_db": 9.0,
        "penalty": "BIC",
    },
    "scene": {
        "n_azimuth": 8,
        "n_double": 26,
        "n_triple": 25,
        "ground_rho": 1.0,
        "facade_rho": [1.5, 4.5],
        "roof_rho": 6.0,
        "snr_db": 9.0,
        "k_max": 3,
        "rules": ["BIC", "AIC", "AICc"],
        "detectors": ["ca-nls", "sglrtc", "sl1mmer"],
    },
    "timing": {
        "grid_sizes": [100, 200, 300],
        "trials": 20,
        "detectors": ["sglrtc", "ca-nls", "sl1mmer", "nls"],
    },
    "calibration": {"p_fa": 1e-3, "trials": 100_000, "check_trials": 100_000},
}


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending field."""


# --------------------------------------------------------------------------- config

def _merge(base: dict, over: dict, path: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, val in over.items():
        where = f"{path}{key}"
        if key not in base:
            raise ConfigError(f"{where}: unknown key")
        if isinstance(base[key], dict):
            if not isinstance(val, dict):
                raise ConfigError(f"{where}: expected a mapping")
            out[key] = _merge(base[key], val, where + ".")
        else:
            out[key] = val
    return out


def _num(cfg, path, kind=float, lo=None, hi=None, lo_open=False, allow_none=False):
    *parents, leaf = path.split(".")
    node = cfg
    for p in parents:
        node = node[p]
    val = node[leaf]
    if val is None and allow_none:
        return None
    if isinstance(val, bool) or not isinstance(val, (int, float)):
        raise ConfigError(f"{path}: expected a number, got {val!r}")
    if kind is int:
        if isinstance(val, float) and not val.is_integer():
            raise ConfigError(f"{path}: expected an integer, got {val!r}")
        val = int(val)
    else:
        val = float(val)
    if lo is not None and (val <= lo if lo_open else val < lo):
        raise ConfigError(f"{path}: must be {'>' if lo_open else '>='} {lo}, got {val}")
    if hi is not None and val > hi:
        raise ConfigError(f"{path}: must be <= {hi}, got {val}")
    node[leaf] = val
    return val


def _choice_list(cfg, path, allowed, nonempty=True):
    sec, leaf = path.split(".")
    vals = cfg[sec][leaf]
    if not isinstance(vals, list) or (nonempty and not vals):
        raise ConfigError(f"{path}: expected a non-empty list")
    for v in vals:
        if v not in allowed:
            raise ConfigError(f"{path}: {v!r} is not one of {list(allowed)}")
    return vals


def _num_list(cfg, path, kind=float, lo=None, length=None):
    sec, leaf = path.split(".")
    vals = cfg[sec][leaf]
    if not isinstance(vals, list) or not vals:
        raise ConfigError(f"{path}: expected a non-empty list of numbers")
    if length is not None and len(vals) != length:
        raise ConfigError(f"{path}: expected {length} values")
    out = []
    for v in vals:
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise ConfigError(f"{path}: expected numbers, got {v!r}")
        if kind is int and isinstance(v, float) and not v.is_integer():
            raise ConfigError(f"{path}: expected integers, got {v!r}")
        v = kind(v)
        if lo is not None and v < lo:
            raise ConfigError(f"{path}: values must be >= {lo}, got {v}")
        out.append(v)
    cfg[sec][leaf] = out
    return out


def resolve_config(data: dict | None) -> dict:
    """Fill defaults into ``data`` and validate every field."""
    data = data or {}
    if not isinstance(data, dict):
        raise ConfigError("config: top level must be a mapping")
    cfg = _merge(DEFAULT_CONFIG, data)

    _num(cfg, "seed", int, lo=0, hi=2 ** 64 - 1)
    _num(cfg, "trials", int, lo=1)
    _num(cfg, "threads", int, lo=1)
    if not isinstance(cfg["record_timing"], bool):
        raise ConfigError("record_timing: expected true or false")

    _num(cfg, "geometry.n_passes", int, lo=2)
    _num(cfg, "geometry.grid_size", int, lo=2)
    _num(cfg, "geometry.baseline_extent", lo=0, lo_open=True)
    _num(cfg, "geometry.lambda_r0", lo=0, lo_open=True)
    _num(cfg, "geometry.elevation_extent", lo=0, lo_open=True)
    if not isinstance(cfg["geometry"]["centered"], bool):
        raise ConfigError("geometry.centered: expected true or false")

    det = cfg["detector"]
    _num(cfg, "detector.threshold", lo=0, lo_open=True)
    _num(cfg, "detector.k_max", int, lo=1)
    _num(cfg, "detector.noise_var", lo=0, lo_open=True, allow_none=True)
    _num(cfg, "detector.refine", int, lo=1)
    if det["penalty"] not in PENALTY_RULES:
        raise ConfigError(f"detector.penalty: {det['penalty']!r} is not one of {list(PENALTY_RULES)}")
    if det["fast_path"] not in ("windows", "peaks", False):
        raise ConfigError("detector.fast_path: expected 'windows', 'peaks' or false")
    _choice_list(cfg, "detector.detectors", DETECTORS)
    if det["penalty"] == "AICc" and cfg["geometry"]["n_passes"] - 3 * det["k_max"] - 1 <= 0:
        raise ConfigError("detector.k_max: AICc needs N - 3 k_max - 1 > 0")

    _num(cfg, "scenario.snr_db")
    _num(cfg, "scenario.alpha", lo=0, lo_open=True)
    if cfg["sweep"]["var"] not in ("snr_db", "alpha"):
        raise ConfigError("sweep.var: expected 'snr_db' or 'alpha'")
    _num_list(cfg, "sweep.values")

    _choice_list(cfg, "penalty.rules", PENALTY_RULES)
    _choice_list(cfg, "penalty.noise_modes", ("known", "unknown"))
    _num_list(cfg, "penalty.snr_values")

    _num(cfg, "stack.n_passes", int, lo=2)
    _num(cfg, "stack.baseline_extent", lo=0, lo_open=True)
    _num(cfg, "stack.carrier_hz", lo=0, lo_open=True)
    _num(cfg, "stack.range_m", lo=0, lo_open=True)
    _num(cfg, "stack.points_per_rho", int, lo=1)
    _num(cfg, "stack.threshold", lo=0, lo_open=True, allow_none=True)

    _num(cfg, "layover.n_pixels", int, lo=1)
    _num_list(cfg, "layover.spacing", lo=0, length=2)
    _choice_list(cfg, "layover.dphi_modes", ("zero", "random"))
    _num(cfg, "layover.ground_rho", lo=0)
    _num(cfg, "layover.extent_rho", lo=0, lo_open=True)
    _num(cfg, "layover.snr_db")
    if cfg["layover"]["penalty"] not in PENALTY_RULES:
        raise ConfigError(f"layover.penalty: expected one of {list(PENALTY_RULES)}")

    _num(cfg, "scene.n_azimuth", int, lo=1)
    _num(cfg, "scene.n_double", int, lo=0)
    _num(cfg, "scene.n_triple", int, lo=0)
    _num(cfg, "scene.ground_rho", lo=0)
    _num_list(cfg, "scene.facade_rho", lo=0, length=2)
    _num(cfg, "scene.roof_rho", lo=0)
    _num(cfg, "scene.snr_db")
    _num(cfg, "scene.k_max", int, lo=1)
    _choice_list(cfg, "scene.rules", PENALTY_RULES)
    _choice_list(cfg, "scene.detectors", ("ca-nls", "sglrtc", "sl1mmer"))

    _num_list(cfg, "timing.grid_sizes", int, lo=2)
    _num(cfg, "timing.trials", int, lo=1)
    _choice_list(cfg, "timing.detectors", DETECTORS)

    _num(cfg, "calibration.p_fa", lo=0, lo_open=True, hi=0.5)
    _num(cfg, "calibration.trials", int, lo=1)
    _num(cfg, "calibration.check_trials", int, lo=0)
    return cfg


def _load_raw(path) -> dict:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"config: cannot read {path}: {exc.strerror}") from exc
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f" at line {mark.line + 1}, column {mark.column + 1}" if mark else ""
        problem = getattr(exc, "problem", None) or str(exc)
        raise ConfigError(f"config: parse error{where}: {problem}") from exc
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError("config: top level must be a mapping")
    if "manifest_version" in data:
        data = data.get("config", {})
    return data


def parse_config(path=None) -> dict:
    """Load a YAML (or JSON) config file, or a previous run's manifest, and resolve it."""
    return resolve_config(_load_raw(path) if path is not None else {})


def _geometry(cfg) -> TomoGeometry:
    g = cfg["geometry"]
    return reference_geometry(g["n_passes"], g["baseline_extent"], g["elevation_extent"],
                              g["grid_size"], g["lambda_r0"], g["centered"])


def _stack_geometry(cfg, extent_rho: float) -> TomoGeometry:
    s = cfg["stack"]
    return layover_geometry(s["n_passes"], s["baseline_extent"], s["carrier_hz"], s["range_m"],
                            extent_rho, s["points_per_rho"])


def _selection(cfg) -> ModelSelectionConfig:
    d = cfg["detector"]
    return ModelSelectionConfig(d["penalty"], d["noise_var"], d["k_max"])


# --------------------------------------------------------------------------- commands

def _cmd_sweep(cfg, out: Path, crlb: bool):
    d = cfg["detector"]
    return run_detection_sweep(
        d["detectors"], cfg["sweep"]["var"], cfg["sweep"]["values"], cfg["trials"],
        cfg["seed"], _geometry(cfg), cfg["scenario"]["snr_db"], cfg["scenario"]["alpha"],
        d["threshold"], _selection(cfg), cfg["threads"], crlb=crlb,
        fast_path=d["fast_path"], refine=d["refine"])


def _cmd_penalty(cfg, out: Path):
    p = cfg["penalty"]
    return run_penalty_comparison(p["rules"], p["noise_modes"], p["snr_values"], cfg["trials"],
                                  cfg["seed"], _geometry(cfg), cfg["scenario"]["alpha"],
                                  cfg["detector"]["threshold"], cfg["detector"]["k_max"],
                                  cfg["threads"])


def _cmd_layover(cfg, out: Path):
    lay = cfg["layover"]
    geo = _stack_geometry(cfg, lay["extent_rho"])
    records = []
    lines = ["dphi_mode,pixel,detector,spacing_rho,s_ground,s_facade,n_detected,elevations,"
             "is_double,within_margin,resolved"]
    for mode in lay["dphi_modes"]:
        rows, recs = run_layover_experiment(
            lay["n_pixels"], tuple(lay["spacing"]), mode, cfg["detector"]["detectors"],
            cfg["seed"], geo, lay["snr_db"], lay["ground_rho"], lay["penalty"],
            cfg["stack"]["threshold"], cfg["threads"])
        records += recs
        for r in rows:
            el = ";".join(repr(x) for x in r.elevations)
            lines.append(f"{mode},{r.pixel},{r.detector},{r.spacing_rho!r},{r.truth[0]!r},"
                         f"{r.truth[1]!r},{r.n_detected},{el},{int(r.is_double)},"
                         f"{int(r.within_margin)},{int(r.resolved)}")
    (out / "pixels.csv").write_text("\n".join(lines) + "\n")
    return records


def _cmd_reconstruct(cfg, out: Path):
    s = cfg["scene"]
    spec = SceneSpec(s["n_azimuth"], s["n_double"], s["n_triple"], s["ground_rho"],
                     tuple(s["facade_rho"]), s["roof_rho"], s["snr_db"])
    geo = _stack_geometry(cfg, s["ground_rho"] + max(s["roof_rho"], *s["facade_rho"]) + 1.0)
    scene = build_scene(spec, geo)
    res = run_reconstruction(scene, s["detectors"], s["rules"], cfg["seed"],
                             cfg["stack"]["threshold"], s["k_max"], cfg["threads"])
    lines = ["detector,rule,single,double,triple,double_recall,double_to_triple"]
    for (det, rule), c in res.counts.items():
        lines.append(f"{det},{rule},{c['single']},{c['double']},{c['triple']},"
                     f"{c['double_recall']},{c['double_to_triple']}")
    truth = scene.counts
    lines.append(f"truth,-,{truth['single']},{truth['double']},{truth['triple']},"
                 f"{truth['double']},0")
    (out / "counts.csv").write_text("\n".join(lines) + "\n")
    return res.records(cfg["seed"])


def _cmd_timing(cfg, out: Path):
    t = cfg["timing"]
    return timing_benchmark(t["grid_sizes"], t["detectors"], t["trials"], cfg["seed"],
                            cfg["scenario"]["snr_db"], cfg["scenario"]["alpha"],
                            cfg["detector"]["threshold"], _geometry(cfg))


def _cmd_calibrate(cfg, out: Path):
    c = cfg["calibration"]
    geo = _geometry(cfg)
    T = calibrate_threshold(geo, c["p_fa"], c["trials"], make_rng([cfg["seed"], 0]))
    rate = None
    if c["check_trials"]:
        rate = false_alarm_rate(geo, T, c["check_trials"], make_rng([cfg["seed"], 1]))
    (out / "threshold.json").write_text(json.dumps(
        {"threshold": T, "p_fa": c["p_fa"], "trials": c["trials"],
         "measured_p_fa": rate, "check_trials": c["check_trials"]}, indent=2) + "\n")
    print(f"T = {T:.4f}  (P_FA = {c['p_fa']:g}, {c['trials']} trials)")
    if rate is not None:
        print(f"measured P_FA = {rate:.3g} over {c['check_trials']} fresh trials")
    return [ExperimentRecord("cfar", "p_fa", c["p_fa"], c["trials"], None, rate, None, None,
                             cfg["seed"])]


_PLOT_COLUMN = {
    "pd-sweep": (5, "P_D", False),
    "rmse-sweep": (7, "RMSE (m)", True),
    "penalty-compare": (5, "P_D", False),
    "layover": (5, "fraction resolved", False),
    "reconstruct": (5, "double-pixel recall", False),
    "timing": (8, "mean time per pixel (s)", True),
    "calibrate-threshold": (6, "measured P_FA", True),
}


def _plot_script(command: str, records) -> str:
    col, label, logy = _PLOT_COLUMN[command]
    xlabel = records[0].sweep_var if records else "sweep value"
    tags = list(dict.fromkeys(r.detector for r in records))
    lines = [
        "# gnuplot script; run inside the output directory: gnuplot -p plot.gp",
        "set datafile separator ','",
        "set key autotitle columnhead",
        f"set xlabel '{xlabel}'",
        f"set ylabel '{label}'",
        "set grid",
    ]
    if logy:
        lines.append("set logscale y")
    parts = [f"'results.csv' using 3:(strcol(1) eq '{t}' ? ${col} : 1/0) "
             f"with linespoints title '{t}'" for t in tags]
    lines.append("plot " + ", \\\n     ".join(parts) if parts else "# no data")
    return "\n".join(lines) + "\n"


_RUNNERS = {
    "pd-sweep": lambda cfg, out: _cmd_sweep(cfg, out, crlb=False),
    "rmse-sweep": lambda cfg, out: _cmd_sweep(cfg, out, crlb=True),
    "penalty-compare": _cmd_penalty,
    "layover": _cmd_layover,
    "reconstruct": _cmd_reconstruct,
    "timing": _cmd_timing,
    "calibrate-threshold": _cmd_calibrate,
}


def run_command(command: str, cfg: dict, out_dir) -> int:
    """Run ``command`` with a resolved config and write its outputs into ``out_dir``."""
    if command not in _RUNNERS:
        raise ConfigError(f"command: unknown subcommand {command!r}")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    records = _RUNNERS[command](cfg, out)
    timing = cfg["record_timing"] or command == "timing"
    with open(out / "results.csv", "w", newline="") as fh:
        fh.write(records_to_csv(records, timing))
    manifest = {
        "manifest_version": MANIFEST_VERSION,
        "command": command,
        "seed": cfg["seed"],
        "package_version": __version__,
        "csv_schema_version": CSV_SCHEMA_VERSION,
        "csv_columns": list(CSV_COLUMNS),
        "numpy_version": np.__version__,
        "config": cfg,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    (out / "plot.gp").write_text(_plot_script(command, records))
    return 0


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="canls", description="Two-step multi-scatterer detection experiments.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True, metavar="COMMAND")
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", metavar="PATH", help="YAML config or a previous manifest.json")
        p.add_argument("--out", metavar="DIR", default=f"runs/{name}", help="output directory")
        p.add_argument("--seed", type=int, metavar="U64", help="override the config seed")
        p.add_argument("--threads", type=int, metavar="N",
                       help=f"worker threads (default: ${THREADS_ENV} or the config)")
        p.add_argument("--trials", type=int, metavar="N",
                       help="override the trial count of this experiment")
    return ap


_TRIAL_KEY = {"timing": ("timing", "trials"), "calibrate-threshold": ("calibration", "trials"),
              "layover": ("layover", "n_pixels")}


def _apply_overrides(cfg_data: dict, args) -> dict:
    data = copy.deepcopy(cfg_data)
    env_threads = os.environ.get(THREADS_ENV)
    if args.threads is not None:
        data["threads"] = args.threads
    elif env_threads and "threads" not in data:
        try:
            data["threads"] = int(env_threads)
        except ValueError as exc:
            raise ConfigError(f"{THREADS_ENV}: expected an integer, got {env_threads!r}") from exc
    if args.seed is not None:
        data["seed"] = args.seed
    if args.trials is not None:
        sec, key = _TRIAL_KEY.get(args.command, (None, "trials"))
        if sec is None:
            data["trials"] = args.trials
        else:
            data.setdefault(sec, {})[key] = args.trials
    return data


def _error(exc: BaseException, out_dir, code: int) -> int:
    record = {"status": "error", "error": type(exc).__name__, "message": str(exc),
              "exit_code": code}
    text = json.dumps(record)
    print(text, file=sys.stderr)
    if out_dir is not None:
        try:
            Path(out_dir).mkdir(parents=True, exist_ok=True)
            (Path(out_dir) / "error.json").write_text(text + "\n")
        except OSError:
            pass
    return code


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        raw = _load_raw(args.config) if args.config else {}
        cfg = resolve_config(_apply_overrides(raw, args))
    except ConfigError as exc:
        return _error(exc, None, 2)
    try:
        return run_command(args.command, cfg, args.out)
    except ConfigError as exc:
        return _error(exc, args.out, 2)
    except (ValueError, OSError, MemoryError) as exc:
        return _error(exc, args.out, 1)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
