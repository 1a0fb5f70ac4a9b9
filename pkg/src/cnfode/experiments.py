"""Named experiments: sweeps over orders, domains, grids and subdomain counts.

Each experiment is split into independent cells. Cells run inline or on a
bounded process pool; their rows are merged in cell order, so the worker
count never changes the output.
"""
from __future__ import annotations

import csv
import io
import logging
import os
import tempfile
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .archive import save_weights
from .config import ExperimentConfig, dump_config
from .fragmentation import FragmentedSolution, make_fragmentation, solve_scnf
from .oracle import analytic_on, delta_u_fragmented, rk4_solve
from .problems import PROBLEMS, RIGID_BODY_INITIAL_VALUES, IvpSystem, rigid_body_problem

__all__ = ["RunArtifact", "run_experiment", "CSV_SCHEMAS", "OUTPUT_ROOT_ENV", "default_output_dir"]

log = logging.getLogger(__name__)

OUTPUT_ROOT_ENV = "CNFODE_OUTPUT_ROOT"
MANIFEST = "manifest.txt"
TRAJECTORY_SAMPLES = 1000
RK4_REFERENCE_SUBSTEPS = 100

# column order is part of the file format
CSV_SCHEMAS: dict[str, dict[str, tuple]] = {
    "epochs-sweep": {
        "summary.csv": ("m", "delta_u", "final_cost", "status"),
        "trace.csv": ("m", "epoch", "cost", "delta_u"),
        "pointwise.csv": ("m", "t", "exact", "approx", "abs_error", "rk4", "rk4_abs_error"),
    },
    "domain-size": {"summary.csv": ("m", "t_end", "delta_u", "final_cost", "status")},
    "training-points": {"summary.csv": ("m", "ntp", "delta_u", "final_cost", "status")},
    "scaling-table": {
        "runs.csv": ("t_end", "hidden", "ntp", "seed", "delta_u", "status"),
        "summary.csv": ("t_end", "hidden", "ntp", "delta_u_mean", "delta_u_min", "delta_u_max", "runs"),
    },
    "cnf-vs-scnf": {
        "summary.csv": ("method", "hidden", "ntp", "subdomains", "delta_u", "status"),
        "trajectory.csv": ("method", "t", "exact", "approx"),
    },
    "order-sweep": {
        "summary.csv": ("m", "delta_u", "interface_linf", "interface_prev", "interface_next", "status"),
        "subdomains.csv": ("m", "l", "t_start", "t_stop", "delta_u_l", "final_cost"),
        "trajectory.csv": ("m", "t", "exact", "approx"),
    },
    "subdomain-sweep": {"summary.csv": ("subdomains", "delta_u", "interface_linf", "status")},
    "subdomain-error": {
        "summary.csv": ("m", "delta_u", "status"),
        "subdomains.csv": ("m", "l", "t_start", "t_stop", "delta_u_l", "final_cost"),
    },
    "rigid-body": {
        "summary.csv": ("case", "u0", "v0", "w0", "max_r2_drift", "max_h_drift", "max_dev_rk4",
                        "delta_u_rk4", "status"),
        "trajectory.csv": ("case", "t", "u", "v", "w", "rk4_u", "rk4_v", "rk4_w", "r2", "energy"),
        "subdomains.csv": ("case", "l", "t_start", "t_stop", "final_cost"),
    },
}


@dataclass
class RunArtifact:
    out_dir: Path
    tables: dict = field(default_factory=dict)
    weights: list = field(default_factory=list)
    manifest: Optional[Path] = None
    plot_script: Optional[Path] = None
    failed: bool = False
    wall_clock_s: float = 0.0


@dataclass
class _CellOutput:
    name: str
    rows: dict
    solution: Optional[FragmentedSolution] = None
    failed: bool = False


def default_output_dir(experiment: str) -> Path:
    return Path(os.environ.get(OUTPUT_ROOT_ENV, "runs")) / experiment


def _problem(cfg: ExperimentConfig, t_end: float, case: int = 0) -> IvpSystem:
    if cfg.problem == "rigid_body":
        return rigid_body_problem(RIGID_BODY_INITIAL_VALUES[case], domain_end=t_end)
    return PROBLEMS[cfg.problem](domain_end=t_end)


def _status(sol: FragmentedSolution) -> str:
    return "ok" if sol.failed_at is None else f"diverged@{sol.failed_at}"


def _nan_if_failed(sol, value):
    return value if sol.failed_at is None else float("nan")


def _cnf(cfg: ExperimentConfig, m: int, t_end: float, ntp: int, hidden: Optional[int] = None,
         seed_offset: int = 0, record_error: bool = False):
    problem = _problem(cfg, t_end)
    frag = make_fragmentation(problem.t0, t_end, 1, ntp - 1)
    sol = solve_scnf(problem, cfg.variant, m, hidden or cfg.hidden, cfg.training(seed_offset), frag,
                     record_error=record_error)
    return problem, sol


def _scnf(cfg: ExperimentConfig, m: int, h: int, case: int = 0, training=None):
    problem = _problem(cfg, cfg.t_end[0], case)
    frag = make_fragmentation(problem.t0, cfg.t_end[0], h, cfg.subdomain_points - 1)
    sol = solve_scnf(problem, cfg.variant, m, cfg.hidden, training or cfg.training(), frag,
                     independent_init=cfg.independent_init)
    return problem, sol


def _delta(problem, sol) -> float:
    if sol.solved == 0:
        return float("nan")
    return _nan_if_failed(sol, delta_u_fragmented(sol, problem.analytic).delta_u)


def _final_cost(sol) -> float:
    return float(np.nansum(sol.final_costs)) if sol.failed_at is None else float("nan")


def _subdomain_rows(key: dict, sol, report) -> list:
    rows = []
    for l in range(sol.solved):
        rows.append({**key, "l": l, "t_start": sol.frag.edges[l], "t_stop": sol.frag.edges[l + 1],
                     "delta_u_l": report.delta_u_l[l], "final_cost": sol.final_costs[l]})
    return rows


def _trajectory_rows(key: dict, problem, sol) -> list:
    ts = np.linspace(problem.t0, sol.frag.t_end, TRAJECTORY_SAMPLES)
    if sol.failed_at is not None:
        ts = ts[ts <= sol.frag.edges[sol.failed_at]]
    exact = analytic_on(problem.analytic, ts)[:, 0]
    approx = sol.evaluate_many(ts)[:, 0] if ts.size else np.zeros(0)
    return [{**key, "t": t, "exact": e, "approx": a} for t, e, a in zip(ts, exact, approx)]


# --- cells ------------------------------------------------------------------

def _cells(cfg: ExperimentConfig) -> list[tuple]:
    e = cfg.experiment
    if e == "epochs-sweep":
        return [(m,) for m in cfg.orders]
    if e == "domain-size":
        return [(m, t) for m in cfg.orders for t in cfg.t_end]
    if e == "training-points":
        return [(m, n) for m in cfg.orders for n in cfg.ntp]
    if e == "scaling-table":
        return [(i, s) for i in range(len(cfg.t_end)) for s in range(cfg.repeats)]
    if e == "cnf-vs-scnf":
        return [("CNF",), ("SCNF",)]
    if e in ("order-sweep", "subdomain-error"):
        return [(m,) for m in cfg.orders]
    if e == "subdomain-sweep":
        return [(h,) for h in cfg.subdomains]
    if e == "rigid-body":
        return [(c,) for c in range(len(RIGID_BODY_INITIAL_VALUES))]
    raise ValueError(e)


def _run_cell(cfg: ExperimentConfig, cell: tuple) -> _CellOutput:
    e = cfg.experiment
    if e == "epochs-sweep":
        (m,) = cell
        problem, sol = _cnf(cfg, m, cfg.t_end[0], cfg.ntp[0], record_error=True)
        grid = sol.frag.grids[0]
        exact = analytic_on(problem.analytic, grid)[:, 0]
        rk4 = rk4_solve(problem, grid)[:, 0]
        trace = sol.loss_traces[0] if sol.loss_traces else np.zeros(0)
        errs = sol.error_traces[0] if sol.error_traces else np.full(trace.size, np.nan)
        rows = {
            "summary.csv": [{"m": m, "delta_u": _delta(problem, sol), "final_cost": _final_cost(sol),
                             "status": _status(sol)}],
            "trace.csv": [{"m": m, "epoch": i, "cost": c, "delta_u": d}
                          for i, (c, d) in enumerate(zip(trace, errs))],
            "pointwise.csv": [],
        }
        if sol.failed_at is None:
            approx = sol.eval_in(0, grid)[0][:, 0]
            rows["pointwise.csv"] = [
                {"m": m, "t": t, "exact": u, "approx": a, "abs_error": abs(u - a), "rk4": r,
                 "rk4_abs_error": abs(u - r)}
                for t, u, a, r in zip(grid, exact, approx, rk4)]
        return _CellOutput(f"m{m}", rows, sol, sol.failed_at is not None)
    if e == "domain-size":
        m, t_end = cell
        problem, sol = _cnf(cfg, m, t_end, cfg.ntp[0])
        row = {"m": m, "t_end": t_end, "delta_u": _delta(problem, sol), "final_cost": _final_cost(sol),
               "status": _status(sol)}
        return _CellOutput(f"m{m}_tend{t_end:g}", {"summary.csv": [row]}, sol, sol.failed_at is not None)
    if e == "training-points":
        m, ntp = cell
        problem, sol = _cnf(cfg, m, cfg.t_end[0], ntp)
        row = {"m": m, "ntp": ntp, "delta_u": _delta(problem, sol), "final_cost": _final_cost(sol),
               "status": _status(sol)}
        return _CellOutput(f"m{m}_ntp{ntp}", {"summary.csv": [row]}, sol, sol.failed_at is not None)
    if e == "scaling-table":
        i, seed = cell
        t_end = cfg.t_end[i]
        hidden = max(1, round(cfg.hidden * t_end / cfg.t_end[0]))
        ntp = max(2, round(cfg.ntp[0] * t_end / cfg.t_end[0]))
        problem, sol = _cnf(cfg, cfg.orders[0], t_end, ntp, hidden=hidden, seed_offset=seed)
        row = {"t_end": t_end, "hidden": hidden, "ntp": ntp, "seed": cfg.seed + seed,
               "delta_u": _delta(problem, sol), "status": _status(sol)}
        return _CellOutput(f"tend{t_end:g}_seed{cfg.seed + seed}", {"runs.csv": [row]}, sol,
                           sol.failed_at is not None)
    if e == "cnf-vs-scnf":
        (method,) = cell
        m = cfg.orders[0]
        plain = replace(cfg, incremental=False)
        if method == "CNF":
            problem, sol = _cnf(plain, m, cfg.t_end[0], cfg.ntp[0], hidden=cfg.hidden * 20)
            hidden, ntp, h = cfg.hidden * 20, cfg.ntp[0], 1
        else:
            problem, sol = _scnf(plain, m, cfg.subdomains[0])
            hidden, ntp, h = cfg.hidden, cfg.subdomain_points, cfg.subdomains[0]
        row = {"method": method, "hidden": hidden, "ntp": ntp, "subdomains": h,
               "delta_u": _delta(problem, sol), "status": _status(sol)}
        rows = {"summary.csv": [row], "trajectory.csv": _trajectory_rows({"method": method}, problem, sol)}
        return _CellOutput(method.lower(), rows, sol, sol.failed_at is not None)
    if e in ("order-sweep", "subdomain-error"):
        (m,) = cell
        problem, sol = _scnf(cfg, m, cfg.subdomains[0])
        rows = {"summary.csv": [], "subdomains.csv": []}
        if sol.solved:
            rep = delta_u_fragmented(sol, problem.analytic)
            rows["subdomains.csv"] = _subdomain_rows({"m": m}, sol, rep)
        else:
            rep = None
        if e == "order-sweep":
            rows["summary.csv"].append({
                "m": m, "delta_u": _delta(problem, sol),
                "interface_linf": _nan_if_failed(sol, rep.interface_linf) if rep else float("nan"),
                "interface_prev": _nan_if_failed(sol, rep.interface_prev) if rep else float("nan"),
                "interface_next": _nan_if_failed(sol, rep.interface_next) if rep else float("nan"),
                "status": _status(sol)})
            rows["trajectory.csv"] = _trajectory_rows({"m": m}, problem, sol)
        else:
            rows["summary.csv"].append({"m": m, "delta_u": _delta(problem, sol), "status": _status(sol)})
        return _CellOutput(f"m{m}", rows, sol, sol.failed_at is not None)
    if e == "subdomain-sweep":
        (h,) = cell
        problem, sol = _scnf(cfg, cfg.orders[0], h)
        iface = float("nan")
        if sol.failed_at is None:
            iface = delta_u_fragmented(sol, problem.analytic).interface_linf
        row = {"subdomains": h, "delta_u": _delta(problem, sol), "interface_linf": iface,
               "status": _status(sol)}
        return _CellOutput(f"h{h}", {"summary.csv": [row]}, sol, sol.failed_at is not None)
    if e == "rigid-body":
        (case,) = cell
        problem, sol = _scnf(cfg, cfg.orders[0], cfg.subdomains[0], case=case)
        return _CellOutput(f"case{case}", _rigid_rows(case, problem, sol), sol, sol.failed_at is not None)
    raise ValueError(e)


def rigid_body_reference(problem: IvpSystem, times) -> np.ndarray:
    """Fine-step RK4 trajectory used as the oracle for the rigid body."""
    return rk4_solve(problem, times, substeps=RK4_REFERENCE_SUBSTEPS)


def _rigid_rows(case: int, problem: IvpSystem, sol: FragmentedSolution) -> dict:
    ts = sol.frag.unique_points()
    if sol.failed_at is not None:
        ts = ts[ts <= sol.frag.edges[sol.failed_at]]
    ref = rigid_body_reference(problem, ts)
    approx = sol.evaluate_many(ts) if ts.size else np.zeros((0, 3))
    inv = problem.invariants_fn
    q = np.array([inv(u) for u in approx]) if ts.size else np.zeros((0, 2))
    q0 = problem.invariant_targets()
    u0 = problem.u0
    summary = {"case": case, "u0": u0[0], "v0": u0[1], "w0": u0[2],
               "max_r2_drift": _nan_if_failed(sol, float(np.max(np.abs(q[:, 0] - q0[0])))),
               "max_h_drift": _nan_if_failed(sol, float(np.max(np.abs(q[:, 1] - q0[1])))),
               "max_dev_rk4": _nan_if_failed(sol, float(np.max(np.abs(approx - ref)))),
               "delta_u_rk4": _nan_if_failed(sol, float(np.mean(np.abs(approx - ref).sum(axis=1)))),
               "status": _status(sol)}
    traj = [{"case": case, "t": t, "u": a[0], "v": a[1], "w": a[2], "rk4_u": r[0], "rk4_v": r[1],
             "rk4_w": r[2], "r2": qq[0], "energy": qq[1]} for t, a, r, qq in zip(ts, approx, ref, q)]
    subs = [{"case": case, "l": l, "t_start": sol.frag.edges[l], "t_stop": sol.frag.edges[l + 1],
             "final_cost": sol.final_costs[l]} for l in range(sol.solved)]
    return {"summary.csv": [summary], "trajectory.csv": traj, "subdomains.csv": subs}


def _scaling_summary(rows: list) -> list:
    groups: dict = {}
    for r in rows:
        groups.setdefault((r["t_end"], r["hidden"], r["ntp"]), []).append(r["delta_u"])
    out = []
    for (t_end, hidden, ntp), vals in groups.items():
        v = np.array(vals, dtype=np.float64)
        out.append({"t_end": t_end, "hidden": hidden, "ntp": ntp, "delta_u_mean": float(np.mean(v)),
                    "delta_u_min": float(np.min(v)), "delta_u_max": float(np.max(v)), "runs": v.size})
    return out


# --- output -----------------------------------------------------------------

def _cell_text(value) -> str:
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, (np.integer,)):
        return str(int(value))
    return str(value)


def write_csv(path: Path, columns: tuple, rows: list) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_cell_text(row[c]) for c in columns])
    _atomic_write(path, buf.getvalue())


def _atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".tmp-")
    with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)
    os.replace(tmp, path)


def run_experiment(cfg: ExperimentConfig, out_dir=None, save_archives: bool = True) -> RunArtifact:
    """Run every cell of ``cfg``'s experiment and write CSVs, archives, manifest and plot script."""
    from .plotscript import emit_plot_script

    out = Path(out_dir or cfg.out or default_output_dir(cfg.experiment))
    start = time.perf_counter()
    cells = _cells(cfg)
    if cfg.workers > 1 and len(cells) > 1:
        with ProcessPoolExecutor(max_workers=min(cfg.workers, len(cells))) as pool:
            results = list(pool.map(_run_cell, [cfg] * len(cells), cells))
    else:
        results = [_run_cell(cfg, c) for c in cells]
    schemas = CSV_SCHEMAS[cfg.experiment]
    merged = {name: [] for name in schemas}
    for res in results:
        for name, rows in res.rows.items():
            merged[name].extend(rows)
    if cfg.experiment == "scaling-table":
        merged["summary.csv"] = _scaling_summary(merged["runs.csv"])
    art = RunArtifact(out)
    out.mkdir(parents=True, exist_ok=True)
    for name, columns in schemas.items():
        write_csv(out / name, columns, merged[name])
        art.tables[name] = out / name
    if save_archives:
        for res in results:
            if res.solution is not None:
                art.weights.append(save_weights(res.solution, out / "weights" / f"{res.name}.cnfw"))
    art.failed = any(r.failed for r in results)
    art.wall_clock_s = time.perf_counter() - start
    header = (f"# cnfode run manifest\n# library_version={__version__}\n"
              f"# wall_clock_s={art.wall_clock_s:.3f}\n")
    art.manifest = out / MANIFEST
    _atomic_write(art.manifest, header + dump_config(replace(cfg, out=str(out))))
    art.plot_script = emit_plot_script(out)
    return art
