"""Report rendering: delimited outputs plus matplotlib figures written next
to them. Consumers are scripts and CI, so everything lands in files.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .simulator import EVENT_KINDS, SceneResult, SimReport


def write_report_json(report: SimReport, path) -> None:
    """Canonical serialization: sorted keys, so identical runs match bytes."""
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(report.to_dict(), fh, sort_keys=True, indent=1)
        fh.write("\n")


def load_report_dict(path) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


def write_events_csv(results: list[SceneResult], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["scene_id", "kind", "tick", "value"])
        for res in results:
            for e in res.events:
                writer.writerow([e.scene_id, e.kind, e.tick, f"{e.value:.6f}"])


def write_decisions_log(results: list[SceneResult], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("timestamp,source,causes,distance\n")
        for res in results:
            for line in res.decision_log:
                fh.write(line + "\n")


def write_trace_csv(result: SceneResult, path) -> None:
    if result.trace is None:
        raise ValueError(f"scene {result.scene_id} was run without trace capture")
    trace = result.trace
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["tick", "x", "y", "theta", "v", "a", "k", "j", "source"])
        for i in range(len(trace.ego)):
            src = trace.sources[i] if i < len(trace.sources) else "end"
            writer.writerow(
                [i] + [f"{val:.9f}" for val in trace.ego[i]] + [src]
            )


def write_loss_csv(losses: list[float], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "mean_loss"])
        for i, loss in enumerate(losses):
            writer.writerow([i, f"{loss:.9f}"])


def write_ade_csv(ade: dict, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["horizon_s", "ade_m"])
        for h in sorted(ade):
            writer.writerow([f"{float(h):.1f}", f"{ade[h]:.6f}"])


def write_comparison_csv(reports: dict[str, dict], path) -> None:
    """Side-by-side event rates for several report dicts (label -> report)."""
    labels = list(reports)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["metric"] + labels)
        for kind in EVENT_KINDS:
            writer.writerow(
                [f"{kind} per 1000 miles"]
                + [f"{reports[l]['rates_per_1000_miles'][kind]:.3f}" for l in labels]
            )
        writer.writerow(["fallback usage"] + [f"{reports[l]['fallback_usage']:.4f}" for l in labels])
        writer.writerow(["miles"] + [f"{reports[l]['miles']:.3f}" for l in labels])


def plot_loss_curve(losses: list[float], path) -> None:
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(range(len(losses)), losses, marker="o", ms=3)
    ax.set_xlabel("epoch")
    ax.set_ylabel("mean training loss")
    ax.grid(True, alpha=0.4)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)


def plot_trigger_histogram(reports: dict[str, dict], path) -> None:
    """Distribution of first-violation causes behind each fallback takeover."""
    causes = sorted({c for rep in reports.values() for c in rep["trigger_histogram"]})
    fig, ax = plt.subplots(figsize=(8, 4.5))
    if causes:
        x = range(len(causes))
        width = 0.8 / max(len(reports), 1)
        for i, (label, rep) in enumerate(reports.items()):
            vals = [rep["trigger_histogram"].get(c, 0) for c in causes]
            ax.bar([xi + i * width for xi in x], vals, width=width, label=label)
        ax.set_xticks([xi + 0.4 - width / 2 for xi in x])
        ax.set_xticklabels(causes, rotation=30, ha="right")
        ax.legend()
    else:
        ax.text(0.5, 0.5, "no fallback triggers", ha="center", va="center")
    ax.set_ylabel("triggering ticks")
    ax.set_title("fallback trigger causes")
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)


def plot_event_rates(reports: dict[str, dict], path) -> None:
    fig, ax = plt.subplots(figsize=(8, 4.5))
    x = range(len(EVENT_KINDS))
    width = 0.8 / max(len(reports), 1)
    for i, (label, rep) in enumerate(reports.items()):
        vals = [rep["rates_per_1000_miles"][k] for k in EVENT_KINDS]
        ax.bar([xi + i * width for xi in x], vals, width=width, label=label)
    ax.set_xticks([xi + 0.4 - width / 2 for xi in x])
    ax.set_xticklabels(EVENT_KINDS, rotation=20, ha="right")
    ax.set_ylabel("events per 1000 miles")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)


def render_report_files(
    report: SimReport, results: list[SceneResult], out_dir, traces: bool = False
) -> list[Path]:
    """Write the full report bundle for one sim run into a directory."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    path = out / "report.json"
    write_report_json(report, path)
    written.append(path)
    path = out / "events.csv"
    write_events_csv(results, path)
    written.append(path)
    path = out / "decisions.csv"
    write_decisions_log(results, path)
    written.append(path)
    path = out / "triggers.png"
    plot_trigger_histogram({"run": report.to_dict()}, path)
    written.append(path)
    if traces:
        trace_dir = out / "traces"
        trace_dir.mkdir(exist_ok=True)
        for res in results:
            if res.trace is not None:
                tp = trace_dir / f"{res.scene_id}.csv"
                write_trace_csv(res, tp)
                written.append(tp)
    return written
