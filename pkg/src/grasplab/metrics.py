"""Episode records and the grasp/lift/disturb success metrics.

The summary table mirrors the evaluation layout used for reporting:
rows are the three success metrics, columns are rigid size classes
(small/medium/large), deformable objects, and the episode-weighted
average.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, ValidationError

PHASES = ("reach", "grasp", "lift", "disturb", "done")
METRIC_NAMES = ("s_grasp", "s_lift", "s_disturb")
TABLE_COLUMNS = ("small", "medium", "large", "deformable", "avg")


@dataclass
class EpisodeRecord:
    """Outcome of one episode: phase trace, success flags, bookkeeping."""

    object_name: str
    size_class: str
    material: str
    s_grasp: bool
    s_lift: bool
    s_disturb: bool
    object_displacement_under_disturbance: float
    steps_used: int
    phase_trace: list = field(default_factory=list)
    reward_total: float = 0.0
    reward_term_totals: dict = field(default_factory=dict)
    mean_strain_during_lift: float = 0.0
    fault: str = ""

    def __post_init__(self):
        if self.s_disturb and not self.s_lift:
            raise ValidationError("success chain violated: s_disturb without s_lift")
        if self.s_lift and not self.s_grasp:
            raise ValidationError("success chain violated: s_lift without s_grasp")
        bad = [p for p in self.phase_trace if p not in PHASES]
        if bad:
            raise ValidationError(f"unknown phases in trace: {bad[:3]}")

    def to_dict(self) -> dict:
        return {
            "object_name": self.object_name,
            "size_class": self.size_class,
            "material": self.material,
            "s_grasp": self.s_grasp,
            "s_lift": self.s_lift,
            "s_disturb": self.s_disturb,
            "object_displacement_under_disturbance":
                float(self.object_displacement_under_disturbance),
            "steps_used": self.steps_used,
            "phase_trace": list(self.phase_trace),
            "reward_total": float(self.reward_total),
            "reward_term_totals": {k: float(v) for k, v in self.reward_term_totals.items()},
            "mean_strain_during_lift": float(self.mean_strain_during_lift),
            "fault": self.fault,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EpisodeRecord":
        return cls(**d)


@dataclass
class MetricsSummary:
    """Success rates per column plus episode counts."""

    rates: dict      # column -> {metric -> rate}
    counts: dict     # column -> episode count

    def rate(self, metric: str, column: str) -> float:
        return self.rates[column][metric]

    def to_dict(self) -> dict:
        return {"rates": self.rates, "counts": self.counts}

    def as_rows(self):
        """Rows for delimited output: metric name then one value per column."""
        rows = []
        for metric in METRIC_NAMES:
            rows.append([metric] + [self.rates[col][metric] for col in TABLE_COLUMNS])
        return rows

    def format_table(self) -> str:
        header = ["metric"] + [f"{c} (n={self.counts[c]})" for c in TABLE_COLUMNS]
        widths = [max(len(h), 10) for h in header]
        lines = ["  ".join(h.ljust(w) for h, w in zip(header, widths))]
        for row in self.as_rows():
            cells = [row[0].ljust(widths[0])] + [
                f"{v:.3f}".ljust(w) for v, w in zip(row[1:], widths[1:])]
            lines.append("  ".join(cells))
        return "\n".join(lines)


def _column_of(record: EpisodeRecord) -> str:
    if record.material == "deformable":
        return "deformable"
    return record.size_class


def evaluate_metrics(records) -> MetricsSummary:
    """Aggregate episode records into per-class success rates.

    Rigid episodes are grouped by size class, deformable episodes into
    their own column; "avg" is the episode-weighted mean over all
    records (identical to the weighted mean of the class rates because
    the classes partition the episodes).
    """
    records = list(records)
    if not records:
        raise DomainError("evaluate_metrics needs at least one record")
    rates = {}
    counts = {}
    for col in TABLE_COLUMNS:
        group = records if col == "avg" else [r for r in records if _column_of(r) == col]
        counts[col] = len(group)
        if group:
            rates[col] = {m: float(np.mean([getattr(r, m) for r in group]))
                          for m in METRIC_NAMES}
        else:
            rates[col] = {m: float("nan") for m in METRIC_NAMES}
    return MetricsSummary(rates=rates, counts=counts)
