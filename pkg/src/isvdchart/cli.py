"""Command-line entry point.

Exit codes: 0 success, 2 malformed input, 3 calibration failure,
4 stream record inconsistent with the calibration.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

import numpy as np

from . import experiments, monitor, plotting
from .calibration import CalibrationError, CalibrationSpec, estimate_sigma0, find_control_limit
from .formats import (CALIBRATE_DEFAULTS, SETUP_KEYS, SIMULATE_DEFAULTS, FormatError,
                      StreamMismatch, calibration_doc, load_calibration, load_config,
                      load_state, num, read_records, save_state, write_records)
from .model import EmpiricalModel, Subgroup, derive_seed, process_model, sample_unit_sphere
from .monitor import MonitorConfig

EXIT_OK, EXIT_INPUT, EXIT_CALIBRATION, EXIT_STREAM = 0, 2, 3, 4

log = logging.getLogger("isvdchart")


def _spec_from(cfg) -> CalibrationSpec:
    try:
        return CalibrationSpec(float(cfg["target_arl0"]), float(cfg["tolerance"]),
                               int(cfg["replications"]), cfg["max_run_length"],
                               int(cfg["seed"]))
    except (TypeError, ValueError) as exc:
        raise FormatError(f"bad calibration settings: {exc}") from None


def _open_stream(source):
    if source in (None, "-"):
        return sys.stdin
    return open(source, encoding="utf-8")


def cmd_calibrate(config_path, historical_data_path, output_path) -> int:
    cfg = load_config(config_path, CALIBRATE_DEFAULTS)
    spec = _spec_from(cfg)
    try:
        chart_cfg = MonitorConfig(float(cfg["lambda"]), int(cfg["r"]), m=int(cfg["m"]))
    except (TypeError, ValueError) as exc:
        raise FormatError(f"{config_path}: {exc}") from None
    J = cfg["J"]
    if not (J == "auto" or (isinstance(J, int) and J >= 0)):
        raise FormatError(f"{config_path}: J must be 'auto' or a nonnegative integer")

    xs, ys = [], []
    with open(historical_data_path, encoding="utf-8") as fh:
        for _, sg in read_records(fh):
            if xs and (sg.xs.shape[1] != xs[0].shape[1] or sg.ys.shape[1] != ys[0].shape[1]):
                raise FormatError(f"{historical_data_path}: record t={sg.t} changes dimensions")
            xs.append(sg.xs)
            ys.append(sg.ys)
    if not xs:
        raise FormatError(f"{historical_data_path}: no records")
    X, Y = np.vstack(xs), np.vstack(ys)
    if X.shape[0] < 2:
        raise FormatError(f"{historical_data_path}: need at least two pairs")
    mu_x = mu_y = None
    if cfg["center_means"]:
        mu_x, mu_y = X.mean(axis=0), Y.mean(axis=0)
        X, Y = X - mu_x, Y - mu_y
    sigma0 = estimate_sigma0(X, Y, J, edge_factor=float(cfg["edge_factor"]))
    history = EmpiricalModel(X, Y)
    result = find_control_limit(history, chart_cfg, spec, sigma0=sigma0)
    doc = calibration_doc(sigma0, chart_cfg, result, X.shape[1], Y.shape[1], mu_x, mu_y)
    with open(output_path, "w") as fh:
        json.dump(doc, fh, indent=2)
    log.info("H = %.6g (ARL %.1f +/- %.1f)", result.H, result.achieved_arl, result.std_error)
    return EXIT_OK


def cmd_monitor(calibration_path, stream_source, output=None, halt_on_alarm=False,
                alarm_summary=None, means="zero", state_in=None, state_out=None,
                figure=None) -> int:
    sigma0, config, doc = load_calibration(calibration_path)
    p, q = int(doc["p"]), int(doc["q"])
    if state_in:
        state = load_state(state_in)
        if (state.p, state.q) != (p, q):
            raise FormatError(f"{state_in}: snapshot is {state.p}x{state.q}, calibration {p}x{q}")
        state = monitor.MonitorState(state.t, state.D, config, sigma0, state.update_count)
    else:
        state = monitor.init(sigma0, config, p, q)
    mu_x = mu_y = None
    if means == "calibration":
        if "mu_x" not in doc:
            raise FormatError(f"{calibration_path}: no stored means")
        mu_x, mu_y = np.asarray(doc["mu_x"], float), np.asarray(doc["mu_y"], float)

    out = open(output, "w", newline="") if output else sys.stdout
    stats = []
    alarmed = False
    try:
        out.write("t,statistic,H,alarm\n")
        with _open_stream(stream_source) as fh:
            for _, sg in read_records(fh):
                if sg.xs.shape[1] != p or sg.ys.shape[1] != q:
                    raise StreamMismatch(
                        sg.t, f"dims {sg.xs.shape[1]}x{sg.ys.shape[1]}, expected {p}x{q}")
                if mu_x is not None:
                    sg = type(sg)(sg.t, sg.xs - mu_x, sg.ys - mu_y)
                state, pt = monitor.step(state, sg)
                stats.append(pt.statistic)
                out.write(f"{sg.t},{pt.statistic!r},{config.H!r},{int(pt.alarm)}\n")
                if pt.alarm and not alarmed:
                    alarmed = True
                    _report_alarm(state, sg.t, pt, alarm_summary)
                    if halt_on_alarm:
                        break
    finally:
        if out is not sys.stdout:
            out.close()
        else:
            out.flush()
    if state_out:
        save_state(state, state_out)
    if figure and stats:
        plotting.control_chart(stats, config.H, figure, t0=state.t - len(stats) + 1)
    return EXIT_OK


def _report_alarm(state, t, pt, path):
    _, u, v = monitor.fsvd.leading_triplet(state.D)
    summary = {"t": t, "statistic": pt.statistic, "H": state.config.H,
               "u": u.tolist(), "v": v.tolist()}
    if path:
        with open(path, "w") as fh:
            json.dump(summary, fh, indent=2)
    else:
        print("alarm: " + json.dumps(summary), file=sys.stderr)


def _setups_from(cfg, path):
    if not isinstance(cfg["setups"], list) or not cfg["setups"]:
        raise FormatError(f"{path}: 'setups' must be a non-empty list")
    setups = []
    for item in cfg["setups"]:
        if isinstance(item, bool):
            raise FormatError(f"{path}: bad setup entry {item!r}")
        if isinstance(item, int):
            try:
                setup = experiments.setup_by_id(item)
            except KeyError:
                raise FormatError(f"{path}: unknown setup id {item}") from None
        elif isinstance(item, dict):
            extra = set(item) - SETUP_KEYS
            if extra:
                raise FormatError(f"{path}: unknown setup keys {sorted(extra)}")
            kw = dict(item)
            if "lambda" in kw:
                kw["lam"] = kw.pop("lambda")
            try:
                setup = experiments.SetupSpec(**kw)
            except (TypeError, ValueError) as exc:
                raise FormatError(f"{path}: bad inline setup: {exc}") from None
        else:
            raise FormatError(f"{path}: bad setup entry {item!r}")
        if cfg["s_sq_grid"] is not None:
            try:
                setup = experiments.replace(setup, s_sq_grid=tuple(cfg["s_sq_grid"]))
            except (TypeError, ValueError) as exc:
                raise FormatError(f"{path}: bad s_sq_grid: {exc}") from None
        setups.append(setup)
    return setups


def cmd_simulate(experiment_config_path, output_dir) -> int:
    cfg = load_config(experiment_config_path, SIMULATE_DEFAULTS)
    spec = _spec_from(cfg)
    setups = _setups_from(cfg, experiment_config_path)
    methods = cfg["methods"]
    if not isinstance(methods, list) or not methods or \
            any(m not in experiments.METHODS for m in methods):
        raise FormatError(f"{experiment_config_path}: methods must be a subset of "
                          f"{list(experiments.METHODS)}")
    os.makedirs(output_dir, exist_ok=True)
    runner = experiments.ExperimentRunner(spec)
    results = runner.run(setups, methods)
    experiments.write_results_csv(results, os.path.join(output_dir, "results.csv"))
    experiments.write_summary_json(results, spec, os.path.join(output_dir, "summary.json"),
                                   setups)
    if cfg["figure"]:
        plotting.arl_curves(results, os.path.join(output_dir, "arl_curves.png"), setups)
    return EXIT_OK


def parse_dims(text):
    dims = []
    for part in text.split(","):
        try:
            p, q = part.lower().split("x")
            dims.append((int(p), int(q)))
        except ValueError:
            raise FormatError(f"bad dimension {part!r}; expected PxQ") from None
        if dims[-1][0] < 1 or dims[-1][1] < 1:
            raise FormatError(f"bad dimension {part!r}")
    return dims


def cmd_bench(dims_spec, output_path, r=5, m=5, J=1, steps=100, seed=0, figure=None) -> int:
    dims = parse_dims(dims_spec)
    rows = experiments.timing_benchmark(dims, r=r, m=m, J=J, steps=steps, seed=seed)
    experiments.write_timing_csv(rows, output_path)
    if figure:
        plotting.timing(rows, figure)
    return EXIT_OK


def cmd_testbed(output_dir, s_sq=0.75, lam=0.05, r=5, target_arl0=600.0,
                replications=500, seed=0) -> int:
    os.makedirs(output_dir, exist_ok=True)
    spec = CalibrationSpec(target_arl0, replications=replications, seed=seed)
    report = experiments.case_study_testbed(spec, s_sq=s_sq, lam=lam, r=r)
    with open(os.path.join(output_dir, "testbed.json"), "w") as fh:
        json.dump({k: num(v) if isinstance(v, float) else v
                   for k, v in report.to_dict().items()}, fh, indent=2)
    with open(os.path.join(output_dir, "run_lengths.csv"), "w") as fh:
        fh.write("replication,run_length\n")
        for i, rl in enumerate(report.run_lengths):
            fh.write(f"{i},{int(rl)}\n")
    plotting.control_chart(list(report.example_path), report.H,
                           os.path.join(output_dir, "control_chart.png"), tau=report.tau,
                           title="wafer testbed, one replication")
    plotting.run_length_histogram(report.run_lengths, report.tau,
                                  os.path.join(output_dir, "alarm_times.png"))
    return EXIT_OK


def cmd_generate(output_path, p, q, m, steps, J=0, s01=1.0, s_sq=None, tau=None, seed=0,
                 pattern_seed=0) -> int:
    """Write a synthetic JSON-lines stream (for trying out the other commands).

    Patterns come from ``pattern_seed`` and data from ``seed``, so a history
    file and a monitored stream can share one process.
    """
    rng = np.random.default_rng(derive_seed(pattern_seed, "generate patterns"))
    factors = [(s01, sample_unit_sphere(p, rng), sample_unit_sphere(q, rng)) for _ in range(J)]
    model = process_model(p, q, factors)
    if s_sq is not None:
        model = model.with_change(s_sq, sample_unit_sphere(p, rng), sample_unit_sphere(q, rng),
                                  tau=tau or 1)
    xs, ys = model.sample(np.random.default_rng(derive_seed(seed, "generate data")),
                          1, steps, m)
    sgs = (Subgroup(t + 1, xs[t], ys[t]) for t in range(steps))
    if output_path == "-":
        write_records(sgs, sys.stdout)
    else:
        with open(output_path, "w") as fh:
            write_records(sgs, fh)
    return EXIT_OK


def build_parser():
    ap = argparse.ArgumentParser(prog="isvdchart", description=__doc__.split("\n")[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    c = sub.add_parser("calibrate", help="estimate Sigma0 and the control limit H")
    c.add_argument("config")
    c.add_argument("history", help="JSON-lines in-control records")
    c.add_argument("-o", "--output", required=True)

    mo = sub.add_parser("monitor", help="run the chart over a JSON-lines stream")
    mo.add_argument("calibration")
    mo.add_argument("stream", nargs="?", default="-", help="file, or - for stdin")
    mo.add_argument("-o", "--output", help="CSV path (default stdout)")
    mo.add_argument("--halt-on-alarm", action="store_true")
    mo.add_argument("--alarm-summary", help="write first-alarm JSON here")
    mo.add_argument("--means", choices=("zero", "calibration"), default="zero")
    mo.add_argument("--state-in")
    mo.add_argument("--state-out")
    mo.add_argument("--figure", help="render the control chart to this image")

    s = sub.add_parser("simulate", help="run the benchmark setups")
    s.add_argument("config")
    s.add_argument("output_dir")

    b = sub.add_parser("bench", help="per-step timing, ISVD vs dense")
    b.add_argument("dims", help="comma separated PxQ list, e.g. 128x128,256x256")
    b.add_argument("-o", "--output", required=True)
    b.add_argument("--r", type=int, default=5)
    b.add_argument("--m", type=int, default=5)
    b.add_argument("--J", type=int, default=1)
    b.add_argument("--steps", type=int, default=100)
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--figure")

    t = sub.add_parser("testbed", help="synthetic wafer overlay/thickness case study")
    t.add_argument("output_dir")
    t.add_argument("--s-sq", type=float, default=0.75)
    t.add_argument("--lambda", dest="lam", type=float, default=0.05)
    t.add_argument("--r", type=int, default=5)
    t.add_argument("--target-arl0", type=float, default=600.0)
    t.add_argument("--replications", type=int, default=500)
    t.add_argument("--seed", type=int, default=0)

    g = sub.add_parser("generate", help="write a synthetic stream")
    g.add_argument("output", help="path or -")
    g.add_argument("--p", type=int, default=10)
    g.add_argument("--q", type=int, default=20)
    g.add_argument("--m", type=int, default=5)
    g.add_argument("--steps", type=int, default=200)
    g.add_argument("--J", type=int, default=0)
    g.add_argument("--s01", type=float, default=1.0)
    g.add_argument("--s-sq", type=float)
    g.add_argument("--tau", type=int)
    g.add_argument("--seed", type=int, default=0, help="data seed")
    g.add_argument("--pattern-seed", type=int, default=0)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        if args.command == "calibrate":
            return cmd_calibrate(args.config, args.history, args.output)
        if args.command == "monitor":
            return cmd_monitor(args.calibration, args.stream, args.output, args.halt_on_alarm,
                               args.alarm_summary, args.means, args.state_in,
                               args.state_out, args.figure)
        if args.command == "simulate":
            return cmd_simulate(args.config, args.output_dir)
        if args.command == "bench":
            return cmd_bench(args.dims, args.output, args.r, args.m, args.J, args.steps,
                             args.seed, args.figure)
        if args.command == "testbed":
            return cmd_testbed(args.output_dir, args.s_sq, args.lam, args.r,
                               args.target_arl0, args.replications, args.seed)
        if args.command == "generate":
            return cmd_generate(args.output, args.p, args.q, args.m, args.steps, args.J,
                                args.s01, args.s_sq, args.tau, args.seed, args.pattern_seed)
    except StreamMismatch as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_STREAM
    except CalibrationError as exc:
        print(f"calibration failed: {exc}", file=sys.stderr)
        return EXIT_CALIBRATION
    except (FormatError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
