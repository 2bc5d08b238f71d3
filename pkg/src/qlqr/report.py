"""Artifact files for experiment runs: CSV traces, summaries, figure data.

Floats are written in shortest round-trip decimal form so reruns with the
same seed produce byte-identical CSV bodies.  The ``plots`` path emits one
delimited file per figure and renders the matching matplotlib figure next
to it.
"""

import csv
import json
import math
import os

import numpy as np

from .lti import Trajectory
from .qlearn import PiTrace


def fmt(value) -> str:
    """Shortest decimal that round-trips; empty string for missing values."""
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return repr(float(value))


def write_csv(path: str, header: list[str], rows) -> str:
    with open(path, "w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(fmt(v) for v in row) + "\n")
    return path


def read_csv(path: str) -> tuple[list[str], list[list[str]]]:
    if not os.path.exists(path):
        raise FileNotFoundError(f"missing artifact: {path}")
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        return header, [row for row in reader]


def gain_headers(n_gains: int) -> list[str]:
    return [f"k{i + 1}" for i in range(n_gains)]


def write_trace_csv(trace: PiTrace, path: str) -> str:
    """One row per policy of the iteration (row-major flattened gain)."""
    n_gains = trace.records[0].gain.size if trace.records else 0
    header = (
        ["iteration"]
        + gain_headers(n_gains)
        + [
            "gain_delta",
            "inner_iterations",
            "inner_final_residual",
            "gain_error_max",
            "stabilizing",
        ]
    )
    rows = []
    for rec in trace.records:
        rows.append(
            [rec.index]
            + list(rec.gain.ravel())
            + [
                rec.gain_delta,
                rec.inner_iterations,
                rec.inner_residuals[-1] if rec.inner_residuals else None,
                rec.gain_error,
                rec.stabilizing,
            ]
        )
    return write_csv(path, header, rows)


def write_inner_csv(trace: PiTrace, path: str) -> str:
    """Inner residual histories of every evaluation sweep."""
    header = ["outer_iteration", "inner_iteration", "h_change"]
    rows = []
    for rec in trace.records:
        if rec.inner_residuals is None:
            continue
        for i, r in enumerate(rec.inner_residuals):
            rows.append([rec.index, i + 1, r])
    return write_csv(path, header, rows)


def write_rollout_csv(traj: Trajectory, sample_time: float, path: str) -> str:
    """Closed-loop state/input trajectory on the sample-time grid."""
    n_x = traj.states.shape[1]
    n_u = traj.inputs.shape[1]
    header = (
        ["t_seconds"]
        + [f"x{i + 1}" for i in range(n_x)]
        + [f"u{i + 1}" for i in range(n_u)]
    )
    rows = [
        [k * sample_time] + list(traj.states[k]) + list(traj.inputs[k])
        for k in range(len(traj))
    ]
    return write_csv(path, header, rows)


def write_json(path: str, payload: dict) -> str:
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


# ---------------------------------------------------------------------------
# figure data + rendering
# ---------------------------------------------------------------------------

def _run_dirs(artifact_dir: str) -> list[str]:
    if not os.path.isdir(artifact_dir):
        raise FileNotFoundError(f"missing artifact directory: {artifact_dir}")
    runs = sorted(
        d
        for d in os.listdir(artifact_dir)
        if d.startswith("run_") and os.path.isdir(os.path.join(artifact_dir, d))
    )
    if not runs:
        raise FileNotFoundError(f"no run_* directories under {artifact_dir}")
    return runs


def emit_plot_data(artifact_dir: str, out_dir: str | None = None) -> dict:
    """Per-figure CSVs from stored artifacts; raw values, no smoothing.

    For every run: a gain-convergence table (iteration, k1, ...) and a
    position/speed trajectory table (t_seconds, x1[, x2]).
    """
    out_dir = out_dir or os.path.join(artifact_dir, "figures")
    os.makedirs(out_dir, exist_ok=True)
    outputs = {"convergence": [], "trajectory": []}
    for run in _run_dirs(artifact_dir):
        tag = run.split("_", 1)[1]
        header, rows = read_csv(os.path.join(artifact_dir, run, "trace.csv"))
        k_cols = [i for i, h in enumerate(header) if h.startswith("k")]
        conv_path = os.path.join(out_dir, f"convergence_run{tag}.csv")
        with open(conv_path, "w", newline="") as fh:
            fh.write(",".join(["iteration"] + [header[i] for i in k_cols]) + "\n")
            for row in rows:
                fh.write(",".join([row[0]] + [row[i] for i in k_cols]) + "\n")
        outputs["convergence"].append(conv_path)

        header, rows = read_csv(os.path.join(artifact_dir, run, "rollout.csv"))
        state_cols = [i for i, h in enumerate(header) if h.startswith("x")][:2]
        traj_path = os.path.join(out_dir, f"trajectory_run{tag}.csv")
        with open(traj_path, "w", newline="") as fh:
            fh.write(",".join(["t_seconds"] + [header[i] for i in state_cols]) + "\n")
            for row in rows:
                fh.write(",".join([row[0]] + [row[i] for i in state_cols]) + "\n")
        outputs["trajectory"].append(traj_path)
    return outputs


def _oracle_gain(artifact_dir: str):
    summary = os.path.join(artifact_dir, "summary.json")
    if os.path.exists(summary):
        with open(summary) as fh:
            payload = json.load(fh)
        gain = payload.get("oracle", {}).get("gain")
        if gain is not None:
            return np.asarray(gain, dtype=float).ravel()
    return None


def render_figures(artifact_dir: str, out_dir: str | None = None) -> list[str]:
    """Render one PNG per emitted figure CSV (gain convergence, trajectory)."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    out_dir = out_dir or os.path.join(artifact_dir, "figures")
    data = emit_plot_data(artifact_dir, out_dir)
    oracle_gain = _oracle_gain(artifact_dir)
    written = []

    for conv_path in data["convergence"]:
        header, rows = read_csv(conv_path)
        iters = [int(float(r[0])) for r in rows]
        n_gains = len(header) - 1
        ncols = 2 if n_gains > 1 else 1
        nrows = max(1, math.ceil(n_gains / ncols))
        fig, axes = plt.subplots(
            nrows, ncols, figsize=(4.5 * ncols, 3.0 * nrows), squeeze=False
        )
        for g in range(n_gains):
            ax = axes[g // ncols][g % ncols]
            vals = [float(r[g + 1]) for r in rows]
            ax.plot(iters, vals, "o-", label=header[g + 1])
            if oracle_gain is not None and g < oracle_gain.size:
                ax.axhline(
                    oracle_gain[g], color="r", linestyle="--", label="optimal"
                )
            ax.set_xlabel("policy iteration")
            ax.set_ylabel(header[g + 1])
            ax.grid(True)
            ax.legend(fontsize=8)
        for g in range(n_gains, nrows * ncols):
            axes[g // ncols][g % ncols].axis("off")
        fig.suptitle("Gain convergence")
        fig.tight_layout()
        png = conv_path.replace(".csv", ".png")
        fig.savefig(png, dpi=150)
        plt.close(fig)
        written.append(png)

    for traj_path in data["trajectory"]:
        header, rows = read_csv(traj_path)
        fig, ax = plt.subplots(figsize=(6.0, 3.5))
        t = [float(r[0]) for r in rows]
        for col in range(1, len(header)):
            ax.plot(t, [float(r[col]) for r in rows], label=header[col])
        ax.set_xlabel("time (s)")
        ax.set_ylabel("state")
        ax.grid(True)
        ax.legend()
        fig.suptitle("Closed-loop trajectory")
        fig.tight_layout()
        png = traj_path.replace(".csv", ".png")
        fig.savefig(png, dpi=150)
        plt.close(fig)
        written.append(png)

    return written


__all__ = [
    "fmt",
    "write_csv",
    "read_csv",
    "gain_headers",
    "write_trace_csv",
    "write_inner_csv",
    "write_rollout_csv",
    "write_json",
    "emit_plot_data",
    "render_figures",
]
