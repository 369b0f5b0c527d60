"""Figures and text summaries for a run directory."""

from __future__ import annotations

import json
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

PNG_META = {"Software": None}


def read_jsonl(path: Path) -> List[dict]:
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]


def rolling_mean(values: Sequence[float], window: int) -> np.ndarray:
    x = np.asarray(values, float)
    if len(x) == 0:
        return x
    window = max(1, min(window, len(x)))
    c = np.cumsum(np.insert(x, 0, 0.0))
    out = np.empty(len(x))
    for i in range(len(x)):
        lo = max(0, i + 1 - window)
        out[i] = (c[i + 1] - c[lo]) / (i + 1 - lo)
    return out


def training_curve(log: Sequence[dict], path: Path, window: int = 50) -> Path:
    eps = [r["episode"] for r in log]
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.plot(eps, rolling_mean([r["return"] for r in log], window), label=f"episode return ({window}-ep mean)")
    ax.set_xlabel("episode")
    ax.set_ylabel("return")
    ax2 = ax.twinx()
    ax2.plot(eps, [r["replay_mean_reward"] for r in log], color="tab:orange", label="replay mean reward")
    ax2.set_ylabel("replay mean reward (scaled)")
    lines = ax.get_lines() + ax2.get_lines()
    ax.legend(lines, [l.get_label() for l in lines], loc="lower right", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, metadata=PNG_META)
    plt.close(fig)
    return path


def bar_chart(labels: Sequence[str], values: Sequence[float], path: Path, ylabel: str, title: str = "") -> Path:
    fig, ax = plt.subplots(figsize=(max(4, 0.7 * len(labels) + 2), 4))
    ax.bar(range(len(labels)), values, color="tab:blue")
    ax.set_xticks(range(len(labels)))
    ax.set_xticklabels(labels, rotation=30, ha="right", fontsize=8)
    ax.set_ylabel(ylabel)
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, metadata=PNG_META)
    plt.close(fig)
    return path


def format_table(rows: Sequence[dict], columns: Sequence[str]) -> str:
    def cell(v):
        if isinstance(v, float):
            return f"{v:.4f}"
        return "" if v is None else str(v)

    body = [[cell(r.get(c)) for c in columns] for r in rows]
    widths = [max(len(c), *(len(b[i]) for b in body)) if body else len(c) for i, c in enumerate(columns)]
    lines = ["  ".join(c.ljust(w) for c, w in zip(columns, widths))]
    lines += ["  ".join(v.ljust(w) for v, w in zip(b, widths)) for b in body]
    return "\n".join(lines)


EVAL_COLUMNS = ("policy", "win", "loss", "cost", "cost_pct", "avg_mitigations", "path_length", "j", "regret")


def render(out: Path) -> List[Path]:
    """Write whatever figures and summaries the artifacts in ``out`` support."""
    figs = out / "figures"
    figs.mkdir(parents=True, exist_ok=True)
    written: List[Path] = []
    sections: List[str] = []
    if (out / "train_log.jsonl").exists():
        log = read_jsonl(out / "train_log.jsonl")
        written.append(training_curve(log, figs / "training_curve.png"))
        tail = log[-min(100, len(log)):]
        wins = sum(r["outcome"] == "win" for r in tail) / max(1, len(tail))
        sections.append(f"training: {len(log)} episodes, win rate over last {len(tail)}: {wins:.3f}")
    if (out / "eval_summary.json").exists():
        doc = json.loads((out / "eval_summary.json").read_text())
        rows = doc["summaries"]
        written.append(bar_chart([r["policy"] for r in rows], [r["j"] for r in rows], figs / "eval_j.png", "J"))
        sections.append("evaluation (corpus " + doc["corpus"] + ")\n" + format_table(rows, EVAL_COLUMNS))
    if (out / "ablation.json").exists():
        rows = json.loads((out / "ablation.json").read_text())
        written.append(
            bar_chart([r["variant"] for r in rows], [r["j"] for r in rows], figs / "ablation_j.png", "J", "ablations")
        )
        sections.append("ablations\n" + format_table(rows, ("variant", "win", "loss", "cost", "j")))
    if (out / "plan.txt").exists():
        sections.append("plan\n" + (out / "plan.txt").read_text().rstrip())
    if (out / "paths.txt").exists():
        sections.append("reconstructed paths\n" + (out / "paths.txt").read_text().rstrip())
    report = out / "report.txt"
    report.write_text("\n\n".join(sections) + "\n")
    written.append(report)
    return written
