"""ROC AUC by rank sum and evaluation reports."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


class UndefinedMetricError(ValueError):
    pass


class CoverageError(ValueError):
    pass


def roc_auc(scores, labels) -> float:
    """Mann-Whitney AUC: P(score_pos > score_neg), ties counted as one half.

    Uses mid-ranks, so every intermediate quantity is a multiple of 0.5 and the
    result equals the pairwise count divided by n_pos * n_neg exactly.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if scores.shape != labels.shape or scores.ndim != 1:
        raise ValueError("scores and labels must be 1-D and of equal length")
    if not np.all(np.isin(labels, (0, 1))):
        raise ValueError("labels must be 0 or 1")
    pos = labels == 1
    n_pos = int(pos.sum())
    n_neg = len(labels) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError("ROC AUC needs at least one positive and one negative")

    order = np.argsort(scores, kind="mergesort")
    s = scores[order]
    # mid-rank of each tie group = (first + last) / 2, 1-based
    boundaries = np.flatnonzero(np.diff(s)) + 1
    starts = np.concatenate(([0], boundaries))
    ends = np.concatenate((boundaries, [len(s)]))
    group_rank = (starts + 1 + ends) / 2.0
    ranks = np.empty(len(s))
    ranks[order] = np.repeat(group_rank, ends - starts)

    rank_sum = float(ranks[pos].sum())
    u = rank_sum - n_pos * (n_pos + 1) / 2.0
    return u / (n_pos * n_neg)


@dataclass
class EvalReport:
    variant: str
    split: str
    roc_auc: float
    n_pos: int
    n_neg: int
    scores: list = field(default_factory=list)  # (burst_id, probability, label)

    def to_json(self) -> dict:
        return {
            "variant": self.variant,
            "split": self.split,
            "roc_auc": self.roc_auc,
            "n_pos": self.n_pos,
            "n_neg": self.n_neg,
            "scores": [{"burst_id": b, "probability": p, "label": y} for b, p, y in self.scores],
        }

    @classmethod
    def from_json(cls, d: dict) -> "EvalReport":
        scores = [(s["burst_id"], s["probability"], s["label"]) for s in d["scores"]]
        return cls(d["variant"], d["split"], d["roc_auc"], d["n_pos"], d["n_neg"], scores)

    def to_text(self) -> str:
        lines = [
            f"variant   {self.variant}",
            f"split     {self.split}",
            f"roc_auc   {self.roc_auc:.6f}",
            f"n_pos     {self.n_pos}",
            f"n_neg     {self.n_neg}",
            "",
            f"{'burst_id':<24} {'probability':>12} label",
        ]
        lines += [f"{b:<24} {p:>12.6f} {y}" for b, p, y in self.scores]
        return "\n".join(lines) + "\n"

    def save(self, directory) -> None:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        (directory / "report.json").write_text(json.dumps(self.to_json(), indent=2) + "\n")
        (directory / "report.txt").write_text(self.to_text())


def evaluate(predictions, burst_ids, variant: str = "", split: str = "test") -> EvalReport:
    """Build a report from ``(burst_id, probability, label)`` rows covering ``burst_ids``.

    Duplicate ids (oversampled records) are scored once.
    """
    by_id = {}
    for bid, prob, label in predictions:
        by_id.setdefault(bid, (float(prob), int(label)))
    wanted = list(dict.fromkeys(burst_ids))
    missing = [b for b in wanted if b not in by_id]
    if missing:
        raise CoverageError(f"no prediction for bursts: {', '.join(missing[:20])}"
                            + (" ..." if len(missing) > 20 else ""))
    rows = [(b, *by_id[b]) for b in wanted]
    probs = [r[1] for r in rows]
    labels = [r[2] for r in rows]
    n_pos = sum(labels)
    return EvalReport(variant, split, roc_auc(probs, labels), n_pos, len(labels) - n_pos, rows)


VARIANT_DESCRIPTIONS = {
    "Baseline": "Single-image CNN",
    "LSTM": "LSTM cells over per-frame CNN features",
    "Mog2_4": "Image1 + MOG2",
    "Mog2_10": "Image1 + Image2 + Image3 + MOG2",
    "OptFlow_6": "Image1 + Optical Flow Image",
    "OptFlow_15": "Image1 + Image2 + Image3 + Flow-1-2 + Flow-2-3",
    "Hybrid_13": "Image1 + Image2 + Image3 + Optical Flow Image + MOG2",
    "OptFlowOnly_6": "Flow-1-2 + Flow-2-3",
    "OptFlowMog2Only_7": "Flow-1-2 + Flow-2-3 + MOG2",
}


def comparison_table(results: dict[str, dict[str, float]], scenarios=("uniform", "site_based")) -> str:
    """Plain-text table: one row per variant, one test ROC AUC column per scenario."""
    header = ["Model Name", "Model Description"] + [f"Test ROC AUC {s}" for s in scenarios]
    rows = []
    for variant, per_scenario in results.items():
        cells = [variant, VARIANT_DESCRIPTIONS.get(variant, "")]
        for s in scenarios:
            v = per_scenario.get(s)
            cells.append("-" if v is None else f"{v:.3f}")
        rows.append(cells)
    widths = [max(len(r[i]) for r in [header] + rows) for i in range(len(header))]
    sep = "+" + "+".join("-" * (w + 2) for w in widths) + "+"
    fmt = lambda cells: "| " + " | ".join(c.ljust(w) for c, w in zip(cells, widths)) + " |"
    return "\n".join([sep, fmt(header), sep] + [fmt(r) for r in rows] + [sep]) + "\n"
