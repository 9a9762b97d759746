"""Render figures and summary tables from search run artifacts.

Consumes the trajectory and per-candidate log CSVs written by the search
commands and produces PNG figures plus a delimited summary, so a run
directory is self-describing without rerunning anything.
"""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt

from .errors import FormatError


def read_trajectory(path) -> tuple[list[int], list[float]]:
    gens, costs = [], []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != ["generation", "best_cost"]:
            raise FormatError(f"{path}: not a trajectory CSV")
        for row in reader:
            gens.append(int(row["generation"]))
            costs.append(float(row["best_cost"]))
    return gens, costs


def read_log(path) -> list[dict]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        expected = ["generation", "member", "cost", "area", "latency", "fidelity"]
        if reader.fieldnames != expected:
            raise FormatError(f"{path}: not a search log CSV")
        return [
            {"generation": int(r["generation"]), "member": int(r["member"]),
             "cost": float(r["cost"]), "area": float(r["area"]),
             "latency": int(r["latency"]), "fidelity": float(r["fidelity"])}
            for r in reader
        ]


def plot_trajectory(gens, costs, out_path, title="Best cost per generation"):
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.step(gens, costs, where="post", color="tab:blue")
    ax.set_xlabel("generation")
    ax.set_ylabel("best composite cost")
    ax.set_title(title)
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    plt.close(fig)


def plot_population(log_rows, out_path):
    """Per-candidate cost scatter over generations (feasible candidates only)."""
    feasible = [r for r in log_rows if r["cost"] < 1e8]
    fig, ax = plt.subplots(figsize=(6, 4))
    if feasible:
        ax.scatter([r["generation"] for r in feasible],
                   [r["cost"] for r in feasible],
                   s=8, alpha=0.35, color="tab:gray", label="candidates")
    ax.set_xlabel("generation")
    ax.set_ylabel("composite cost")
    ax.set_title("Candidate costs per generation")
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    plt.close(fig)


def plot_tradeoffs(log_rows, out_path):
    """Area vs fidelity of every evaluated feasible candidate."""
    feasible = [r for r in log_rows if r["cost"] < 1e8 and r["fidelity"] > 0]
    fig, ax = plt.subplots(figsize=(6, 4))
    if feasible:
        sc = ax.scatter([r["area"] for r in feasible],
                        [r["fidelity"] for r in feasible],
                        c=[r["latency"] for r in feasible],
                        s=12, cmap="viridis", alpha=0.7)
        fig.colorbar(sc, ax=ax, label="latency (cycles)")
    ax.set_xlabel("estimated area (LUTs)")
    ax.set_ylabel("fidelity")
    ax.set_title("Evaluated candidates")
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    plt.close(fig)


def write_summary_csv(log_rows, out_path):
    """Per-generation aggregates in a fixed column order."""
    by_gen: dict[int, list[dict]] = {}
    for r in log_rows:
        by_gen.setdefault(r["generation"], []).append(r)
    with open(out_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["generation", "evaluations", "feasible",
                         "min_cost", "mean_cost", "best_fidelity",
                         "min_area", "min_latency"])
        for g in sorted(by_gen):
            rows = by_gen[g]
            feas = [r for r in rows if r["cost"] < 1e8]
            min_cost = min(r["cost"] for r in rows)
            mean_cost = (sum(r["cost"] for r in feas) / len(feas)) if feas else ""
            writer.writerow([
                g, len(rows), len(feas),
                f"{min_cost:.6f}",
                f"{mean_cost:.6f}" if feas else "",
                f"{max((r['fidelity'] for r in feas), default=0):.6f}",
                f"{min((r['area'] for r in feas), default=0):.1f}",
                min((r["latency"] for r in feas), default=0),
            ])


def render_run_report(run_dir, out_dir) -> list[Path]:
    """All figures + summary for one search run directory."""
    run_dir, out_dir = Path(run_dir), Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    traj_path = run_dir / "trajectory.csv"
    log_path = run_dir / "search_log.csv"
    if not traj_path.exists():
        raise FormatError(f"{run_dir}: no trajectory.csv found")
    outputs = []
    gens, costs = read_trajectory(traj_path)
    fig1 = out_dir / "trajectory.png"
    plot_trajectory(gens, costs, fig1)
    outputs.append(fig1)
    if log_path.exists():
        rows = read_log(log_path)
        fig2 = out_dir / "population.png"
        plot_population(rows, fig2)
        fig3 = out_dir / "tradeoffs.png"
        plot_tradeoffs(rows, fig3)
        summary = out_dir / "summary.csv"
        write_summary_csv(rows, summary)
        outputs.extend([fig2, fig3, summary])
    return outputs
