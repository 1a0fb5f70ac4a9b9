"""Renderer-agnostic plot scripts.

A script is a plain-text list of figure blocks::

    figure <name>
      kind line|scatter|line3d
      csv <file>
      x <column>
      y <column>
      z <column>            (line3d only)
      group <column>        (one curve per distinct value)
      filter <column>=<v>   (optional)
      xscale/yscale lin|log
    end

Any plotting front end can map blocks to figures; nothing is rendered here.
"""
from __future__ import annotations

from pathlib import Path

from .config import parse_config_text

__all__ = ["PlotScriptError", "FIGURES", "emit_plot_script"]

SCRIPT_NAME = "plots.cnfplot"


class PlotScriptError(FileNotFoundError):
    pass


def _fig(name, csv, x, y, kind="line", group=None, yscale="lin", xscale="lin", z=None):
    return dict(name=name, csv=csv, kind=kind, x=x, y=y, z=z, group=group, xscale=xscale, yscale=yscale)


FIGURES = {
    "epochs-sweep": [
        _fig("error_vs_epoch", "trace.csv", "epoch", "delta_u", group="m", yscale="log"),
        _fig("cost_vs_epoch", "trace.csv", "epoch", "cost", group="m", yscale="log"),
        _fig("pointwise_error", "pointwise.csv", "t", "abs_error", kind="scatter", group="m", yscale="log"),
    ],
    "domain-size": [_fig("error_vs_domain", "summary.csv", "t_end", "delta_u", group="m", yscale="log")],
    "training-points": [_fig("error_vs_ntp", "summary.csv", "ntp", "delta_u", group="m", yscale="log")],
    "scaling-table": [_fig("error_vs_domain", "summary.csv", "t_end", "delta_u_mean", yscale="log")],
    "cnf-vs-scnf": [
        _fig("exact", "trajectory.csv", "t", "exact", group="method"),
        _fig("approx", "trajectory.csv", "t", "approx", group="method"),
    ],
    "order-sweep": [
        _fig("solutions", "trajectory.csv", "t", "approx", group="m"),
        _fig("exact", "trajectory.csv", "t", "exact", group="m"),
        _fig("subdomain_error", "subdomains.csv", "l", "delta_u_l", group="m", yscale="log"),
    ],
    "subdomain-sweep": [_fig("error_vs_subdomains", "summary.csv", "subdomains", "delta_u", yscale="log")],
    "subdomain-error": [_fig("subdomain_error", "subdomains.csv", "l", "delta_u_l", group="m", yscale="log")],
    "rigid-body": [
        _fig("trajectory_scnf", "trajectory.csv", "u", "v", z="w", kind="line3d", group="case"),
        _fig("trajectory_rk4", "trajectory.csv", "rk4_u", "rk4_v", z="rk4_w", kind="line3d", group="case"),
        _fig("top_view", "trajectory.csv", "u", "v", kind="scatter", group="case"),
        _fig("training_error", "subdomains.csv", "l", "final_cost", group="case", yscale="log"),
    ],
}


def _render(fig: dict) -> str:
    lines = [f"figure {fig['name']}", f"  kind {fig['kind']}", f"  csv {fig['csv']}",
             f"  x {fig['x']}", f"  y {fig['y']}"]
    if fig["z"]:
        lines.append(f"  z {fig['z']}")
    if fig["group"]:
        lines.append(f"  group {fig['group']}")
    lines += [f"  xscale {fig['xscale']}", f"  yscale {fig['yscale']}", "end", ""]
    return "\n".join(lines)


def emit_plot_script(artifact_dir) -> Path:
    """Write ``plots.cnfplot`` for the run in ``artifact_dir``."""
    artifact_dir = Path(artifact_dir)
    manifest = artifact_dir / "manifest.txt"
    if not manifest.is_file():
        raise PlotScriptError(f"{artifact_dir}: no manifest.txt, not a run artifact")
    experiment = parse_config_text(manifest.read_text(encoding="utf-8"), str(manifest))["experiment"]
    figures = FIGURES[experiment]
    missing = sorted({f["csv"] for f in figures if not (artifact_dir / f["csv"]).is_file()})
    if missing:
        raise PlotScriptError(f"{artifact_dir}: missing CSV files: {', '.join(missing)}")
    path = artifact_dir / SCRIPT_NAME
    path.write_text(f"# plot script for {experiment}\n\n" + "".join(_render(f) for f in figures),
                    encoding="utf-8")
    return path
