"""One-at-a-time sensitivity of the uwTOPSIS ranking to weight bounds and k1."""
from __future__ import annotations

import csv
import itertools
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .mcdm import DecisionMatrix, Ranking, WeightBounds, rank_intervals, score_intervals


def mapd(baseline: Sequence[float], other: Sequence[float]) -> tuple[float, list[int]]:
    """Mean absolute percentage difference relative to ``baseline`` (as a fraction).

    Indices where the baseline is zero are skipped and returned.
    """
    a = np.asarray(baseline, dtype=float)
    b = np.asarray(other, dtype=float)
    if a.shape != b.shape:
        raise ValueError("score vectors differ in length")
    skipped = [int(i) for i in np.flatnonzero(a == 0)]
    keep = a != 0
    if not keep.any():
        return 0.0, skipped
    return float(np.mean(np.abs(a[keep] - b[keep]) / np.abs(a[keep]))), skipped


def _as_positions(ranking) -> dict[str, int]:
    if isinstance(ranking, Ranking):
        return ranking.positions()
    if isinstance(ranking, dict):
        return dict(ranking)
    # ordered sequence of labels, best first
    return {label: pos for pos, label in enumerate(ranking, 1)}


def _paired(rank_a, rank_b) -> tuple[list[str], dict[str, int], dict[str, int]]:
    pa, pb = _as_positions(rank_a), _as_positions(rank_b)
    if set(pa) != set(pb):
        raise ValueError("rankings cover different alternatives")
    return sorted(pa), pa, pb


def kendall_tau_distance(rank_a, rank_b) -> int:
    """Number of alternative pairs ordered differently by the two rankings."""
    labels, pa, pb = _paired(rank_a, rank_b)
    return sum(
        1
        for x, y in itertools.combinations(labels, 2)
        if (pa[x] - pa[y]) * (pb[x] - pb[y]) < 0
    )


def avg_position_diff(rank_a, rank_b) -> float:
    labels, pa, pb = _paired(rank_a, rank_b)
    return float(np.mean([abs(pa[x] - pb[x]) for x in labels]))


@dataclass(frozen=True)
class SweepConfig:
    l_range: tuple[float, float] = (0.05, 0.15)
    u_range: tuple[float, float] = (0.55, 0.65)
    k1_range: tuple[float, float] = (0.3, 0.7)
    grid_steps: int = 11
    baseline_lower: float = 0.1
    baseline_upper: float = 0.6
    baseline_k1: float = 0.5

    def __post_init__(self):
        if self.grid_steps < 1:
            raise ValueError("grid_steps must be positive")
        for lo, hi in (self.l_range, self.u_range, self.k1_range):
            if lo > hi:
                raise ValueError("range lower end exceeds upper end")

    def axis(self, rng: tuple[float, float]) -> list[float]:
        # rounding keeps the midpoint bit-identical to the baseline literal
        return [round(float(v), 10) for v in np.linspace(rng[0], rng[1], self.grid_steps)]

    def baseline(self, m: int) -> WeightBounds:
        return WeightBounds.uniform(m, self.baseline_lower, self.baseline_upper, self.baseline_k1)


@dataclass(frozen=True)
class SweepRow:
    param_set: str
    lower: float
    upper: float
    k1: float
    mapd: float
    kendall: int
    avg_pos_diff: float


@dataclass
class SensitivityReport:
    rows: list[SweepRow] = field(default_factory=list)
    notes: list[str] = field(default_factory=list)
    baseline: Ranking | None = None


def _bounds_or_none(m: int, lower: float, upper: float, k1: float) -> WeightBounds | None:
    try:
        return WeightBounds.uniform(m, lower, upper, k1)
    except ValueError:
        return None


def run_sweep(matrix: DecisionMatrix, config: SweepConfig = SweepConfig()) -> SensitivityReport:
    """Re-rank over the (l, u) grid at baseline k1 and over the k1 grid at baseline bounds.

    With ``grid_steps == 1`` the sweep collapses to the baseline point alone.
    Score intervals depend only on the bounds, so each bounds pair is solved
    once and re-ranked for every k1.
    """
    m = len(matrix.criteria)
    base = config.baseline(m)
    intervals_cache: dict[tuple[float, float], list] = {}

    def intervals(lower: float, upper: float):
        key = (lower, upper)
        if key not in intervals_cache:
            intervals_cache[key] = score_intervals(matrix, WeightBounds.uniform(m, lower, upper))
        return intervals_cache[key]

    base_rank = rank_intervals(intervals(config.baseline_lower, config.baseline_upper), base.k1)
    base_scores = base_rank.uw_scores()
    labels = list(matrix.alternatives)
    report = SensitivityReport(baseline=base_rank)

    def row(param_set: str, lower: float, upper: float, k1: float) -> None:
        if _bounds_or_none(m, lower, upper, k1) is None:
            report.notes.append(f"{param_set}: skipped infeasible point l={lower} u={upper} k1={k1}")
            return
        r = rank_intervals(intervals(lower, upper), k1)
        scores = r.uw_scores()
        value, skipped = mapd([base_scores[x] for x in labels], [scores[x] for x in labels])
        if skipped:
            report.notes.append(
                f"{param_set}: l={lower} u={upper} k1={k1}: zero baseline score excluded for "
                + ", ".join(labels[i] for i in skipped)
            )
        report.rows.append(
            SweepRow(param_set, lower, upper, k1, value,
                     kendall_tau_distance(base_rank, r), avg_position_diff(base_rank, r))
        )

    if config.grid_steps == 1:
        row("baseline", config.baseline_lower, config.baseline_upper, config.baseline_k1)
        return report
    for lower in config.axis(config.l_range):
        for upper in config.axis(config.u_range):
            row("bounds", lower, upper, config.baseline_k1)
    for k1 in config.axis(config.k1_range):
        row("k1", config.baseline_lower, config.baseline_upper, k1)
    return report


def write_report(report: SensitivityReport, path: str | Path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["param_set", "l", "u", "k1", "mapd", "kendall", "avg_pos_diff"])
        for r in report.rows:
            w.writerow([r.param_set, repr(r.lower), repr(r.upper), repr(r.k1), repr(r.mapd), r.kendall, repr(r.avg_pos_diff)])
