"""Command-line harness: simulate, evaluate, or run the full pipeline.

Subcommands:

* ``simulate``  write a synthetic dataset (layout, truth, packet logs)
* ``eval``      run localization/tracking/pair-distance methods on a
                dataset directory and score them against its truth file
* ``pipeline``  simulate, train on the training logs, then eval with
                the trained model

Every output is deterministic for a given seed: floats are written
with repr, JSON keys are sorted, and no timestamps appear anywhere.
All inputs are read and validated before the first output file is
written, so a failing run does not leave a half-written dataset.

Exit codes: 0 success, 2 malformed input, 3 inconsistent data
(mismatched logs, undecidable training setups), 4 reserved.
"""

import argparse
import json
import math
import os
import sys

import numpy as np

from .baselines import bayesian_rssi_localize, fit_rssi_model, fused_localize
from .contact_tracing import (
    DEFAULT_MAX_BEACONS,
    DEFAULT_SHARPNESS,
    build_pair_query,
    estimate_pair_distance,
    two_step_pair_distance,
)
from .errors import (
    DataMismatchError,
    GaugeError,
    InsufficientDataError,
    InsufficientGeometryError,
    InvalidInputError,
)
from .geometry import load_layout, save_layout
from .inference import (
    McmcConfig,
    TrainingDataset,
    TrainingSpot,
    localize,
    track,
    train,
)
from .presets import PRESET_NAMES, get_preset
from .prp_model import load_model, save_model
from .simulator import (
    SimConfig,
    Trajectory,
    generate_trajectory,
    read_packet_log,
    simulate_packets,
    stationary_trajectory,
    write_packet_log,
    write_trajectory,
)

SCHEMA_TRUTH = "truth_v1"
SCHEMA_CONTACT = "contact_v1"
SCHEMA_REPORT = "report_v1"

METHOD_NAMES = ("bprp", "rssi", "fused", "track", "contact")
EVAL_RECEIVERS = ("r1", "r2")

EXIT_INPUT = 2
EXIT_DATA = 3

_INPUT_ERRORS = (InvalidInputError,)
_DATA_ERRORS = (
    DataMismatchError,
    GaugeError,
    InsufficientDataError,
    InsufficientGeometryError,
)


def _fmt(v) -> float:
    return float(v)


# ---------------------------------------------------------------------------
# configuration plumbing


def _load_config_file(path) -> dict:
    with open(path, "r", encoding="utf-8") as f:
        try:
            obj = json.load(f)
        except json.JSONDecodeError as e:
            raise InvalidInputError(f"{path}: not valid JSON ({e})") from e
    if not isinstance(obj, dict):
        raise InvalidInputError(f"{path}: config must be a JSON object")
    return obj


def _merge(args, key, fallback):
    """Explicit flag wins, then the config file, then the default."""
    flag = getattr(args, key, None)
    if flag is not None:
        return flag
    if args.config_values and key in args.config_values:
        return args.config_values[key]
    return fallback


def _parse_methods(raw) -> tuple:
    if isinstance(raw, str):
        parts = [p.strip() for p in raw.split(",") if p.strip()]
    else:
        parts = [str(p) for p in raw]
    if not parts:
        raise InvalidInputError("methods list is empty")
    bad = sorted(set(parts) - set(METHOD_NAMES))
    if bad:
        raise InvalidInputError(
            f"unknown methods {bad}; choose from {', '.join(METHOD_NAMES)}"
        )
    # keep canonical order, drop duplicates
    return tuple(m for m in METHOD_NAMES if m in parts)


def _mcmc_config(args, seed: int) -> McmcConfig:
    return McmcConfig(
        draws=int(_merge(args, "draws", 5000)),
        burn_in=int(_merge(args, "burn_in", 5000)),
        chains=int(_merge(args, "chains", 4)),
        seed=seed,
    )


# ---------------------------------------------------------------------------
# simulate


def _window_midpoints(traj: Trajectory, delta: float):
    span = traj.t_end - traj.t_start
    n_win = int(math.floor(span / delta + 1e-9))
    starts = [traj.t_start + w * delta for w in range(n_win)]
    mids = np.asarray([ws + delta / 2.0 for ws in starts])
    mx, my = traj.position_at(mids)
    return starts, mx, my


def _cmd_simulate(args) -> int:
    seed = int(_merge(args, "seed", 0))
    preset_name = _merge(args, "preset", "library")
    preset = get_preset(preset_name)
    delta = float(_merge(args, "delta", preset.delta))
    out_dir = _merge(args, "out", None)
    if not out_dir:
        raise InvalidInputError("--out is required")

    layout_path = _merge(args, "layout", None)
    layout = load_layout(layout_path) if layout_path else preset.layout
    model_path = _merge(args, "model", None)
    model = load_model(model_path) if model_path else preset.true_model
    if layout_path and not model_path:
        raise InvalidInputError(
            "a custom layout needs --model: the preset truth only fits its own floorplan"
        )

    train_window = preset.train_window
    train_rows = []
    spots = preset.training_spots if not layout_path else ()
    for i, spot in enumerate(spots):
        traj = stationary_trajectory(spot, train_window)
        train_rows.extend(
            simulate_packets(
                layout,
                traj,
                model,
                SimConfig(seed=seed, delta=train_window),
                receiver_id=f"s{i:02d}",
            )
        )

    route = preset.eval_waypoints
    trajs = {
        "r1": generate_trajectory(route),
        "r2": generate_trajectory(tuple(reversed(route))),
    }
    eval_rows = {}
    truth_receivers = {}
    for rid in EVAL_RECEIVERS:
        traj = trajs[rid]
        eval_rows[rid] = simulate_packets(
            layout, traj, model, SimConfig(seed=seed, delta=delta), receiver_id=rid
        )
        starts, mx, my = _window_midpoints(traj, delta)
        truth_receivers[rid] = {
            "windows": [
                {"start": _fmt(ws), "x": _fmt(mx[i]), "y": _fmt(my[i])}
                for i, ws in enumerate(starts)
            ]
        }
    pair_windows = []
    w1 = truth_receivers["r1"]["windows"]
    w2 = {w["start"]: w for w in truth_receivers["r2"]["windows"]}
    for w in w1:
        other = w2.get(w["start"])
        if other is None:
            continue
        d = math.hypot(w["x"] - other["x"], w["y"] - other["y"])
        pair_windows.append({"start": w["start"], "distance_m": _fmt(d)})

    truth = {
        "schema": SCHEMA_TRUTH,
        "seed": seed,
        "preset": preset_name if not layout_path else None,
        "delta": _fmt(delta),
        "train_window": _fmt(train_window),
        "train_spots": [
            {"receiver_id": f"s{i:02d}", "x": _fmt(px), "y": _fmt(py)}
            for i, (px, py) in enumerate(spots)
        ],
        "known_beacon_ids": [b.id for b in layout.beacons if b.known],
        "receivers": truth_receivers,
        "pairs": [{"a": "r1", "b": "r2", "windows": pair_windows}],
    }

    os.makedirs(out_dir, exist_ok=True)
    save_layout(layout, os.path.join(out_dir, "layout.json"))
    save_model(model, os.path.join(out_dir, "model.json"))
    if train_rows:
        write_packet_log(train_rows, os.path.join(out_dir, "train.csv"))
    for rid in EVAL_RECEIVERS:
        write_trajectory(trajs[rid], os.path.join(out_dir, f"traj_{rid}.csv"))
        write_packet_log(eval_rows[rid], os.path.join(out_dir, f"eval_{rid}.csv"))
    with open(os.path.join(out_dir, "truth.json"), "w", encoding="utf-8") as f:
        json.dump(truth, f, indent=2, sort_keys=True)
        f.write("\n")
    print(f"simulated dataset in {out_dir}: {len(spots)} training spots, "
          f"{len(w1)} eval windows per receiver")
    return 0


# ---------------------------------------------------------------------------
# train (pipeline step)


def _cmd_train(args, out_dir, seed) -> None:
    layout = load_layout(os.path.join(out_dir, "layout.json"))
    with open(os.path.join(out_dir, "truth.json"), "r", encoding="utf-8") as f:
        truth = json.load(f)
    train_window = float(truth["train_window"])
    rows = read_packet_log(os.path.join(out_dir, "train.csv"), window_length=train_window)
    by_rec = {}
    for r in rows:
        by_rec.setdefault(r.receiver_id, []).append(r)
    spots = []
    for entry in truth["train_spots"]:
        rid = entry["receiver_id"]
        if rid not in by_rec:
            raise DataMismatchError(f"truth lists spot {rid!r} but train.csv has no rows")
        spots.append(
            TrainingSpot(
                receiver_id=rid,
                windows=tuple(by_rec[rid]),
                position=(float(entry["x"]), float(entry["y"])),
            )
        )
    dataset = TrainingDataset(spots=tuple(spots), delta=train_window)
    config = _mcmc_config(args, seed)
    result = train(layout, dataset, config=config, seed_path=("pipeline",))
    rssi_model, _ = fit_rssi_model(
        layout, dataset, config=config, seed_path=("pipeline",)
    )
    trained = result.model.with_rssi(rssi_model)
    save_model(trained, os.path.join(out_dir, "model_trained.json"))
    result.posterior.save(
        os.path.join(out_dir, "posterior_train.csv"),
        os.path.join(out_dir, "posterior_train.json"),
    )
    for w in result.warnings:
        print(f"train: {w}")
    print(f"trained model written to {os.path.join(out_dir, 'model_trained.json')}")


# ---------------------------------------------------------------------------
# eval


def _group_windows(rows) -> dict:
    grouped = {}
    for r in rows:
        grouped.setdefault(r.window_start, []).append(r)
    return dict(sorted(grouped.items()))


def _quantiles(errors: np.ndarray) -> list:
    qs = []
    for q in range(101):
        qs.append(_fmt(np.percentile(errors, q)))
    return qs


def _cmd_eval(args) -> int:
    out_dir = _merge(args, "out", None)
    if not out_dir:
        raise InvalidInputError("--out is required")
    methods = _parse_methods(_merge(args, "methods", "bprp,rssi,fused"))
    layout = load_layout(os.path.join(out_dir, "layout.json"))
    truth_path = os.path.join(out_dir, "truth.json")
    if not os.path.exists(truth_path):
        raise InvalidInputError(f"{truth_path} not found; run simulate first")
    with open(truth_path, "r", encoding="utf-8") as f:
        truth = json.load(f)
    delta = float(_merge(args, "delta", truth["delta"]))
    seed = int(_merge(args, "seed", truth["seed"]))
    smax = float(_merge(args, "smax", 1.0))
    sharpness = float(_merge(args, "sharpness", DEFAULT_SHARPNESS))
    if smax <= 0:
        raise InvalidInputError(f"--smax must be positive, got {smax}")
    if sharpness <= 0:
        raise InvalidInputError(f"--sharpness must be positive, got {sharpness}")

    model_path = _merge(args, "model", None)
    if model_path is None:
        candidate = os.path.join(out_dir, "model_trained.json")
        model_path = candidate if os.path.exists(candidate) else os.path.join(out_dir, "model.json")
    model = load_model(model_path)

    rows_by_rec = {}
    truth_by_rec = {}
    for rid, tr in sorted(truth["receivers"].items()):
        path = os.path.join(out_dir, f"eval_{rid}.csv")
        rows_by_rec[rid] = _group_windows(read_packet_log(path, window_length=delta))
        truth_by_rec[rid] = {w["start"]: (w["x"], w["y"]) for w in tr["windows"]}
        missing = sorted(set(truth_by_rec[rid]) - set(rows_by_rec[rid]))
        if missing:
            raise DataMismatchError(
                f"{rid}: truth window(s) {missing[:3]} missing from the packet log"
            )

    config = _mcmc_config(args, seed)
    preds = {m: [] for m in methods if m != "contact"}
    errors = {m: [] for m in preds}

    point_methods = [m for m in methods if m in ("bprp", "rssi", "fused")]
    for rid in sorted(rows_by_rec):
        for ws, rows in rows_by_rec[rid].items():
            for m in point_methods:
                if m == "bprp":
                    res = localize(
                        layout, model, rows, delta, config=config,
                        seed_path=("eval", "bprp"),
                    )
                elif m == "rssi":
                    res = bayesian_rssi_localize(
                        layout, model, rows, delta, config=config,
                        seed_path=("eval", "rssi"),
                    )
                else:
                    res = fused_localize(
                        layout, model, rows, delta, config=config,
                        seed_path=("eval", "fused"),
                    )
                px, py = res.mean_position
                preds[m].append((rid, ws, px, py))
                tx, ty = truth_by_rec[rid][ws]
                errors[m].append(math.hypot(px - tx, py - ty))
        if "track" in methods:
            all_rows = [r for rows in rows_by_rec[rid].values() for r in rows]
            tr = track(
                layout, model, all_rows, delta, s_max=smax, config=config,
                seed_path=("eval", "track"),
            )
            for w in tr.warnings:
                print(f"track {rid}: {w}")
            for i, ws in enumerate(tr.window_starts):
                px, py = tr.mean_positions[i]
                preds["track"].append((rid, float(ws), float(px), float(py)))
                tx, ty = truth_by_rec[rid][float(ws)]
                errors["track"].append(math.hypot(px - tx, py - ty))

    contact_reports = []
    if "contact" in methods:
        for pair in truth.get("pairs", []):
            a, b = pair["a"], pair["b"]
            true_by_ws = {w["start"]: w["distance_m"] for w in pair["windows"]}
            windows_out = []
            for ws in sorted(set(rows_by_rec[a]) & set(rows_by_rec[b])):
                query = build_pair_query(
                    layout, rows_by_rec[a][ws], rows_by_rec[b][ws], delta,
                    max_beacons=DEFAULT_MAX_BEACONS,
                )
                elements = {}
                for rid in (a, b):
                    loc = localize(
                        layout, model, rows_by_rec[rid][ws], delta, config=config,
                        seed_path=("eval", "contact-loc"),
                    )
                    elements[rid] = loc.elements
                tri = estimate_pair_distance(
                    layout, model, query, config=config, sharpness=sharpness,
                    elements_a=elements[a], elements_b=elements[b],
                    seed_path=("eval", "contact", repr(float(ws))),
                )
                two = two_step_pair_distance(
                    layout, model, query, config=config,
                    seed_path=("eval", "contact", repr(float(ws))),
                )
                entry = {
                    "start": _fmt(ws),
                    "true_m": _fmt(true_by_ws[ws]) if ws in true_by_ws else None,
                    "triangle": {
                        "map_m": _fmt(tri.map_m),
                        "mean_m": _fmt(tri.mean_m),
                        "sd_m": _fmt(tri.sd_m),
                        "n_triangles": tri.n_triangles,
                        "n_draws": int(tri.draws.shape[0]),
                    },
                    "two_step": {
                        "map_m": _fmt(two.map_m),
                        "mean_m": _fmt(two.mean_m),
                        "sd_m": _fmt(two.sd_m),
                        "n_draws": int(two.draws.shape[0]),
                    },
                }
                windows_out.append(entry)
            contact_reports.append(
                {
                    "schema": SCHEMA_CONTACT,
                    "pair": [a, b],
                    "delta": _fmt(delta),
                    "windows": windows_out,
                }
            )

    report = {
        "schema": SCHEMA_REPORT,
        "seed": seed,
        "preset": truth.get("preset"),
        "delta": _fmt(delta),
        "model": os.path.basename(model_path),
        "methods": {},
        "contact": {},
    }
    for m in sorted(errors):
        errs = np.asarray(errors[m])
        report["methods"][m] = {
            "n_windows": int(errs.shape[0]),
            "mean_m": _fmt(errs.mean()),
            "median_m": _fmt(np.median(errs)),
            "p90_m": _fmt(np.percentile(errs, 90)),
        }
    if contact_reports:
        for key in ("triangle", "two_step"):
            abs_errs = []
            for rep in contact_reports:
                for w in rep["windows"]:
                    if w["true_m"] is not None:
                        abs_errs.append(abs(w[key]["mean_m"] - w["true_m"]))
            if abs_errs:
                abs_errs = np.asarray(abs_errs)
                report["contact"][key] = {
                    "n": int(abs_errs.shape[0]),
                    "mean_abs_error_m": _fmt(abs_errs.mean()),
                    "median_abs_error_m": _fmt(np.median(abs_errs)),
                }

    # all computation done; write everything
    for m in sorted(preds):
        path = os.path.join(out_dir, f"pred_{m}.csv")
        with open(path, "w", encoding="utf-8", newline="") as f:
            f.write("receiver_id,window_start,x,y\n")
            for rid, ws, px, py in sorted(preds[m], key=lambda t: (t[0], t[1])):
                f.write(f"{rid},{repr(float(ws))},{repr(float(px))},{repr(float(py))}\n")
    with open(os.path.join(out_dir, "errors.csv"), "w", encoding="utf-8", newline="") as f:
        f.write("method,receiver_id,window_start,error_m\n")
        for m in sorted(preds):
            rows = sorted(zip(preds[m], errors[m]), key=lambda t: (t[0][0], t[0][1]))
            for (rid, ws, _, _), err in rows:
                f.write(f"{m},{rid},{repr(float(ws))},{repr(float(err))}\n")
    with open(os.path.join(out_dir, "cdf.csv"), "w", encoding="utf-8", newline="") as f:
        f.write("method,quantile,error_m\n")
        for m in sorted(errors):
            if errors[m]:
                for q, v in enumerate(_quantiles(np.asarray(errors[m]))):
                    f.write(f"{m},{q},{repr(float(v))}\n")
    for rep in contact_reports:
        a, b = rep["pair"]
        with open(
            os.path.join(out_dir, f"contact_{a}_{b}.json"), "w", encoding="utf-8"
        ) as f:
            json.dump(rep, f, indent=2, sort_keys=True)
            f.write("\n")
    with open(os.path.join(out_dir, "report.json"), "w", encoding="utf-8") as f:
        json.dump(report, f, indent=2, sort_keys=True)
        f.write("\n")

    for m in sorted(report["methods"]):
        s = report["methods"][m]
        print(f"{m}: median {s['median_m']:.3f} m over {s['n_windows']} windows")
    for key in sorted(report["contact"]):
        s = report["contact"][key]
        print(f"contact/{key}: median abs error {s['median_abs_error_m']:.3f} m over {s['n']} pairs")
    return 0


def _cmd_pipeline(args) -> int:
    rc = _cmd_simulate(args)
    if rc != 0:
        return rc
    out_dir = _merge(args, "out", None)
    seed = int(_merge(args, "seed", 0))
    _cmd_train(args, out_dir, seed)
    return _cmd_eval(args)


# ---------------------------------------------------------------------------
# argument plumbing


def _add_common(p):
    p.add_argument("--out", help="dataset directory")
    p.add_argument("--config", help="JSON file with defaults for any flag")
    p.add_argument("--seed", type=int, help="run seed (unsigned 64-bit)")
    p.add_argument("--delta", type=float, help="window length in seconds")


def _add_mcmc(p):
    p.add_argument("--draws", type=int, help="retained draws per chain")
    p.add_argument("--burn-in", dest="burn_in", type=int, help="burn-in steps per chain")
    p.add_argument("--chains", type=int, help="number of chains")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bprp",
        description="packet-count localization and pair-distance estimation",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", help="write a synthetic dataset")
    _add_common(p_sim)
    p_sim.add_argument("--preset", choices=PRESET_NAMES, help="built-in scenario")
    p_sim.add_argument("--layout", help="custom floorplan JSON (needs --model)")
    p_sim.add_argument("--model", help="custom ground-truth model JSON")

    p_eval = sub.add_parser("eval", help="run methods against a dataset")
    _add_common(p_eval)
    _add_mcmc(p_eval)
    p_eval.add_argument("--model", help="model JSON (default: trained, else truth)")
    p_eval.add_argument("--methods", help="comma list: bprp,rssi,fused,track,contact")
    p_eval.add_argument("--smax", type=float, help="mobility speed cap, m/s")
    p_eval.add_argument("--sharpness", type=float, help="triangle softness, 1/m")

    p_pipe = sub.add_parser("pipeline", help="simulate, train, then eval")
    _add_common(p_pipe)
    _add_mcmc(p_pipe)
    p_pipe.add_argument("--preset", choices=PRESET_NAMES, help="built-in scenario")
    p_pipe.add_argument("--layout", help="custom floorplan JSON (needs --model)")
    p_pipe.add_argument("--model", help="custom ground-truth model JSON")
    p_pipe.add_argument("--methods", help="comma list: bprp,rssi,fused,track,contact")
    p_pipe.add_argument("--smax", type=float, help="mobility speed cap, m/s")
    p_pipe.add_argument("--sharpness", type=float, help="triangle softness, 1/m")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args.config_values = _load_config_file(args.config) if args.config else {}
        if args.command == "simulate":
            return _cmd_simulate(args)
        if args.command == "eval":
            return _cmd_eval(args)
        return _cmd_pipeline(args)
    except _DATA_ERRORS as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DATA
    except _INPUT_ERRORS + (FileNotFoundError,) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
