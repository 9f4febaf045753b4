"""Command-line entry point: ``run``, ``probe``, ``export-mesh`` and ``report``.

Exit codes: 0 success (every verdict passed), 1 some verdict failed,
2 invalid configuration or usage, 3 the run aborted.
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import sys
import time
from contextlib import ExitStack
from pathlib import Path

import numpy as np
import scipy.fft
from threadpoolctl import threadpool_limits

from . import config as cfgmod
from .construction import c2_norm_estimate, metric_defect
from .corrugation import default_table
from .errors import ConfigError, DivergenceError, InsufficientDataError, ParameterError, StageAbort
from .export import load_state, read_csv, save_state, write_csv, write_obj
from .frame import build_frame
from .iteration import (
    DEFECT_FLOOR,
    IterationDiagnostics,
    c1alpha_cauchy_check,
    choose_parameters,
    frame_base_point,
    run_iteration,
)
from .probes import PROBES, run_probe

log = logging.getLogger("c1alpha")

EXIT_OK, EXIT_FAILED, EXIT_CONFIG, EXIT_ABORT = 0, 1, 2, 3

LOG_CSV = "run_log.csv"
MESH_OBJ = "surface.obj"
SUMMARY_JSON = "summary.json"
STATE_NPZ = "final_state.npz"

# tolerances of the end-to-end verdicts
DELTA_SLOPE_TOL = 0.15
MIN_STAGES = 4


def _write_json(path, obj):
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True, default=_jsonable) + "\n",
                          newline="")


def _jsonable(x):
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, (tuple, set, frozenset)):
        return list(x)
    return str(x)


def _finite(x):
    """JSON has no inf/nan; report them as strings."""
    if isinstance(x, (int, np.integer)):
        return int(x)
    x = float(x)
    return x if math.isfinite(x) else repr(x)


def _verdict(value, tolerance, passed, detail=""):
    return {"value": _finite(value) if value is not None else None, "tolerance": tolerance,
            "passed": bool(passed), "detail": detail}


def convergence_verdicts(diag, alpha):
    """The end-to-end checks of a run log (schedule decay, C^1 sum, Cauchy ratio)."""
    sched = diag.schedule
    out = {}
    rows = diag.log
    out["stages_completed"] = _verdict(len(rows), f">= {MIN_STAGES}", len(rows) >= MIN_STAGES,
                                       diag.stop_reason)
    target = -sched.a * math.log(sched.K)
    try:
        fit = diag.delta_fit()
        out["delta_slope"] = _verdict(fit.slope, f"<= {target:.4g} within {DELTA_SLOPE_TOL:.0%}",
                                      fit.slope <= target * (1 - DELTA_SLOPE_TOL))
    except InsufficientDataError as exc:
        out["delta_slope"] = _verdict(None, f"<= {target:.4g} within {DELTA_SLOPE_TOL:.0%}", False,
                                      str(exc))
    if rows:
        C = diag.fitted_c1_constant()
        total = diag.c1_total()
        bound = 2 * C * sched.delta0
        out["c1_sum"] = _verdict(total, f"<= 2 C delta0 = {bound:.4g}", total <= bound,
                                 f"C={C:.4g}")
    else:
        out["c1_sum"] = _verdict(None, "<= 2 C delta0", False, "no completed stage")
    try:
        cc = c1alpha_cauchy_check(rows, alpha, sched.K, sched.a, sched.n_star)
        out["holder_increments"] = _verdict(cc.ratio, "ratio < 1", cc.ratio < 1.0,
                                            f"predicted={cc.predicted:.4g}; " + "; ".join(cc.notes))
    except InsufficientDataError as exc:
        out["holder_increments"] = _verdict(None, "ratio < 1", False, str(exc))
    return out


def _schedule_dict(s):
    return {"n": s.n, "m": s.m, "n_star": s.n_star, "alpha": s.alpha, "beta": s.beta, "a": s.a,
            "K": s.K, "mu0": s.mu0, "delta0": s.delta0, "max_stages": s.max_stages,
            "stage_constant": s.stage_constant,
            "checks": {k: {"passed": bool(ok), "detail": d} for k, (ok, d) in s.checks.items()},
            "notes": list(s.notes)}


def cmd_run(cfg, out: Path):
    """Validate, run the stage loop and write the CSV, OBJ, state and summary."""
    cfgmod.check(cfg)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    grid = cfg.grid()
    state = cfg.initial_state(grid)
    g = cfg.target_metric()
    d0 = metric_defect(state, g)
    schedule = choose_parameters(
        cfg.alpha, cfg.beta, cfg.n, d0, c2_norm_estimate(state), m=cfg.m,
        stage_constant=cfg.stage_constant, max_stages=cfg.max_stages,
        K=cfg.override("K"), mu0=cfg.override("mu0"), delta0=cfg.override("delta0"),
    )
    summary = {"config": {k: v for k, v in vars(cfg).items() if k != "source"},
               "schedule": _schedule_dict(schedule), "initial_defect": d0}
    status, diag, final, error = "completed", None, state, None
    if d0 <= DEFECT_FLOOR:
        status = "converged"
        diag = IterationDiagnostics(schedule, [], "defect at floor", d0, d0)
    else:
        frame = build_frame(frame_base_point(g, grid), seed=cfg.seed)
        try:
            final, diag = run_iteration(state, g, schedule, default_table(2.0), frame=frame,
                                        max_resolution=cfg.max_resolution,
                                        memory_limit=cfg.memory_limit, gamma=cfg.gamma,
                                        seed=cfg.seed)
        except ParameterError as exc:
            status, error = "rejected", str(exc)
        except (StageAbort, DivergenceError) as exc:
            status, error = "aborted", str(exc)
            diag = getattr(exc, "diagnostics", None)
            final = getattr(exc, "state", final)
    rows = diag.log if diag is not None else []
    write_csv(out / LOG_CSV, rows, record_timing=cfg.record_timing)
    save_state(out / STATE_NPZ, final)
    if final.m == 3:
        write_obj(out / MESH_OBJ, final, cfg.mesh_vertices)
    summary.update({
        "status": status,
        "error": error,
        "stop_reason": diag.stop_reason if diag is not None else None,
        "stages": len(rows),
        "final_defect": diag.final_defect if diag is not None else None,
        "warnings": diag.warnings if diag is not None else [],
        "artifacts": [LOG_CSV, STATE_NPZ] + ([MESH_OBJ] if final.m == 3 else []),
    })
    if status == "converged":
        verdicts = {"defect_at_floor": _verdict(d0, f"<= {DEFECT_FLOOR:g}", True)}
    elif diag is not None:
        verdicts = convergence_verdicts(diag, cfg.alpha)
    else:
        verdicts = {"run": _verdict(None, "completes", False, error or "")}
    summary["verdicts"] = verdicts
    summary["passed"] = all(v["passed"] for v in verdicts.values())
    if cfg.record_timing:
        summary["runtime_s"] = time.perf_counter() - t0
    _write_json(out / SUMMARY_JSON, summary)
    if status == "rejected":
        return EXIT_CONFIG, summary
    if status == "aborted":
        return EXIT_ABORT, summary
    return (EXIT_OK if summary["passed"] else EXIT_FAILED), summary


def cmd_probe(which, out: Path | None, seed=0, timing=True):
    if which not in PROBES:
        raise KeyError(which)
    rep = run_probe(which, seed=seed)
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        _write_json(out / f"probe_{which}.json", rep.to_dict(timing))
    return (EXIT_OK if rep.passed else EXIT_FAILED), rep


def cmd_export_mesh(state_path: Path, out: Path, max_vertices=513):
    state = load_state(state_path)
    out.mkdir(parents=True, exist_ok=True)
    shape = write_obj(out / MESH_OBJ, state, max_vertices)
    return EXIT_OK, shape


def cmd_report(out: Path):
    """Re-validate the CSV schema and collect the summary verdicts."""
    summary = json.loads((out / SUMMARY_JSON).read_text())
    rows = read_csv(out / LOG_CSV)
    if len(rows) != summary.get("stages", len(rows)):
        raise ValueError("run log and summary disagree on the number of stages")
    return (EXIT_OK if summary.get("passed") else EXIT_FAILED), summary, rows


# ----------------------------------------------------------------- parsing


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="flat key = value run configuration")
    common.add_argument("--out", type=Path, default=Path("out"), help="output directory")
    common.add_argument("--threads", type=int, default=1, help="worker threads for FFT and BLAS")
    common.add_argument("--seed", type=int, default=None, help="seed of the sampled check sets")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="c1alpha", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="verb", required=True)
    sub.add_parser("run", parents=[common], help="run the stage iteration")
    pr = sub.add_parser("probe", parents=[common], help="measure one module's properties")
    pr.add_argument("which", help=" | ".join(PROBES))
    ex = sub.add_parser("export-mesh", parents=[common], help="write an OBJ from a saved state")
    ex.add_argument("--state", type=Path, help=f"saved state (default OUT/{STATE_NPZ})")
    ex.add_argument("--max-vertices", type=int, default=513)
    sub.add_parser("report", parents=[common], help="summarise the artifacts of a run")
    return p


def _print_verdicts(verdicts, stream):
    for name, v in verdicts.items():
        mark = "PASS" if v["passed"] else "FAIL"
        print(f"{mark}  {name}: {v['value']} ({v['tolerance']}) {v.get('detail', '')}".rstrip(),
              file=stream)


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.threads < 1:
        parser.error("--threads must be positive")
    with ExitStack() as stack:
        stack.enter_context(threadpool_limits(args.threads))
        stack.enter_context(scipy.fft.set_workers(args.threads))
        try:
            return _dispatch(args, parser)
        except ConfigError as exc:
            print("invalid configuration:", file=sys.stderr)
            for p in exc.problems:
                print(f"  - {p}", file=sys.stderr)
            return EXIT_CONFIG


def _load(args, parser, required=True):
    if args.config is None:
        if required:
            parser.error("--config is required")
        cfg = cfgmod.RunConfig()
    else:
        cfg = cfgmod.load_config(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    return cfg


def _dispatch(args, parser):
    if args.verb == "run":
        cfg = _load(args, parser)
        code, summary = cmd_run(cfg, args.out)
        print(f"status: {summary['status']}  stages: {summary['stages']}  "
              f"stop: {summary['stop_reason']}")
        if summary.get("error"):
            print(f"error: {summary['error']}", file=sys.stderr)
        _print_verdicts(summary["verdicts"], sys.stdout)
        return code
    if args.verb == "probe":
        cfg = _load(args, parser, required=False)
        if args.which not in PROBES:
            parser.error(f"unknown probe {args.which!r}; choose from {', '.join(PROBES)}")
        code, rep = cmd_probe(args.which, args.out, seed=cfg.seed, timing=cfg.record_timing)
        for c in rep.checks:
            mark = "PASS" if c.passed else "FAIL"
            print(f"{mark}  {c.name}: {c.value:.6g} ({c.tolerance}) {c.detail}".rstrip())
        for k, v in rep.data.items():
            print(f"      {k}: {v}")
        return code
    if args.verb == "export-mesh":
        path = args.state or args.out / STATE_NPZ
        if not path.exists():
            parser.error(f"no saved state at {path}")
        code, shape = cmd_export_mesh(path, args.out, args.max_vertices)
        print(f"wrote {args.out / MESH_OBJ} ({shape[0]} x {shape[1]} vertices)")
        return code
    if args.verb == "report":
        try:
            code, summary, rows = cmd_report(args.out)
        except (OSError, ValueError) as exc:
            print(f"report failed: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        print(f"status: {summary['status']}  stages: {len(rows)}  stop: {summary['stop_reason']}")
        for r in rows:
            print("  " + "  ".join(f"{k}={v:.4g}" if isinstance(v, float) else f"{k}={v}"
                                   for k, v in r.items()))
        _print_verdicts(summary["verdicts"], sys.stdout)
        return code
    parser.error(f"unknown verb {args.verb}")


__all__ = ["main", "cmd_run", "cmd_probe", "cmd_export_mesh", "cmd_report"]
