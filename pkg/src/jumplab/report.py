"""Output writers: delimited data files, run summaries, and figures.

Data files are plain CSV with a header row and full-precision floats, so a
rerun with the same seed reproduces them byte for byte.  Figures are rendered
with the Agg backend next to the data they show; any rendering problem is
swallowed, because plots never gate a pass/fail decision.
"""

from __future__ import annotations

import csv
import json
import os
from pathlib import Path

import numpy as np


def _cell(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_rows_csv(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_cell(v) for v in row])


def write_ladder_csv(path, ladder) -> None:
    write_rows_csv(
        path,
        ["dt", "mean_sq_residual", "mean_abs_residual"],
        [
            (float(ladder.dts[k]), float(ladder.mean_sq[k]), float(ladder.mean_abs[k]))
            for k in range(len(ladder.dts))
        ],
    )


def write_run_report(path, meta: dict, results) -> None:
    """Machine-readable summary: run metadata plus one entry per executed check.

    Artifact paths are stored relative to the report's directory so reruns
    into different roots produce comparable summaries.
    """
    base = Path(path).parent
    payload = dict(meta)
    payload["passed"] = all(r.passed for r in results)
    checks = []
    for r in results:
        entry = r.as_dict()
        entry["artifacts"] = [_relativize(a, base) for a in entry["artifacts"]]
        checks.append(entry)
    payload["checks"] = checks
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")


def _relativize(artifact: str, base: Path) -> str:
    try:
        return os.path.relpath(artifact, base)
    except ValueError:
        return artifact


def write_compare_summary(path, metrics: dict, runtime_s: float) -> dict:
    payload = {
        "l1": float(metrics["l1"]),
        "linf": float(metrics["linf"]),
        "mass_err": float(metrics["mass_err"]),
        "runtime_s": float(runtime_s),
    }
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")
    return payload


def _plt():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def render_overlay(path, x, curves, title, xlabel="x", ylabel="density") -> str | None:
    """Line plot of several curves over one axis; returns the file path or None."""
    try:
        plt = _plt()
        fig, ax = plt.subplots(figsize=(7, 4))
        for label, values in curves:
            ax.plot(x, values, label=label, linewidth=1.2)
        ax.set_xlabel(xlabel)
        ax.set_ylabel(ylabel)
        ax.set_title(title)
        ax.legend()
        fig.tight_layout()
        fig.savefig(path, dpi=120)
        plt.close(fig)
        return str(path)
    except Exception:
        return None


def render_series(path, t, series, title, hline=None) -> str | None:
    try:
        plt = _plt()
        fig, ax = plt.subplots(figsize=(7, 4))
        for label, values in series.items():
            ax.plot(t, values, label=label, linewidth=1.0)
        if hline is not None:
            ax.axhline(hline, color="gray", linestyle="--", linewidth=0.8, label="reference")
        ax.set_xlabel("t")
        ax.set_title(title)
        ax.legend()
        fig.tight_layout()
        fig.savefig(path, dpi=120)
        plt.close(fig)
        return str(path)
    except Exception:
        return None


def render_ladder(path, dts, mean_sq, order) -> str | None:
    try:
        plt = _plt()
        fig, ax = plt.subplots(figsize=(6, 4))
        ax.loglog(dts, mean_sq, "o", label="mean squared residual")
        ref = mean_sq[0] * (np.asarray(dts) / dts[0]) ** order
        ax.loglog(dts, ref, "--", label=f"slope {order:.2f}")
        ax.set_xlabel("dt")
        ax.set_ylabel("mean squared residual")
        ax.set_title("chain-rule residual vs step size")
        ax.legend()
        fig.tight_layout()
        fig.savefig(path, dpi=120)
        plt.close(fig)
        return str(path)
    except Exception:
        return None


def render_residuals(path, residuals) -> str | None:
    try:
        plt = _plt()
        fig, ax = plt.subplots(figsize=(7, 4))
        vals = np.maximum(np.asarray(residuals, dtype=float), 1e-18)
        ax.semilogy(np.arange(len(vals)), vals, ".", markersize=3)
        ax.set_xlabel("path index")
        ax.set_ylabel("max |u(t, x(t)) - u(0, x0)|")
        ax.set_title("conservation residual per path")
        fig.tight_layout()
        fig.savefig(path, dpi=120)
        plt.close(fig)
        return str(path)
    except Exception:
        return None


def render_paths(path, samples, title="sample trajectories") -> str | None:
    """samples: list of (times, values) pairs for the first state component."""
    try:
        plt = _plt()
        fig, ax = plt.subplots(figsize=(7, 4))
        for k, (t, x) in enumerate(samples):
            ax.plot(t, x, linewidth=0.9, label=f"path {k}")
        ax.set_xlabel("t")
        ax.set_ylabel("x")
        ax.set_title(title)
        if len(samples) <= 8:
            ax.legend()
        fig.tight_layout()
        fig.savefig(path, dpi=120)
        plt.close(fig)
        return str(path)
    except Exception:
        return None


def output_dir(root, name: str, deterministic: bool) -> Path:
    """Scenario output directory: stable name in deterministic mode, else timestamped."""
    root = Path(root)
    if deterministic:
        out = root / name
    else:
        import datetime

        stamp = datetime.datetime.now().strftime("%Y%m%d-%H%M%S")
        out = root / f"{name}-{stamp}"
    out.mkdir(parents=True, exist_ok=True)
    return out
