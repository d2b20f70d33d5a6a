"""Post-course criteria, per-participant t-test p-values and course aggregation."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy import stats

from .wlc import CitizenTimeline


class Direction(str, Enum):
    HIGHER_BETTER = "higher_better"
    LOWER_BETTER = "lower_better"


class CriterionId(str, Enum):
    C1 = "C1"  # days employed
    C2 = "C2"  # days under a permanent contract
    C3 = "C3"  # days in a contract of the course's professional family
    C4 = "C4"  # mean idle days between contract spells

    @property
    def direction(self) -> Direction:
        return Direction.LOWER_BETTER if self is CriterionId.C4 else Direction.HIGHER_BETTER


CRITERIA = tuple(CriterionId)


class WindowError(ValueError):
    pass


def _window_bounds(timeline: CitizenTimeline, t_i: int, horizon: int) -> tuple[int, int]:
    if t_i < 0 or t_i + horizon > timeline.curve.length_days:
        raise WindowError(
            f"{timeline.citizen_id}: window ({t_i}, {t_i + horizon}] outside curve "
            f"of length {timeline.curve.length_days}"
        )
    first = timeline.curve.day_of(t_i + 1)
    return first, first + horizon - 1


def _coverage(timeline: CitizenTimeline, first: int, last: int, keep) -> np.ndarray:
    mask = np.zeros(last - first + 1, dtype=bool)
    for s in timeline.spells:
        if keep(s) and s.end >= first and s.start <= last:
            mask[max(s.start, first) - first : min(s.end, last) - first + 1] = True
    return mask


def mean_interior_gap(employed: np.ndarray) -> float:
    """Mean length of idle runs lying strictly between employed runs."""
    if not employed.any():
        return float(len(employed))
    on = np.flatnonzero(employed)
    inner = employed[on[0] : on[-1] + 1]
    # run starts/ends of idle stretches inside the first..last employed span
    padded = np.concatenate(([True], inner, [True])).astype(np.int8)
    edges = np.diff(padded)
    starts, ends = np.flatnonzero(edges == -1), np.flatnonzero(edges == 1)
    if len(starts) == 0:
        return 0.0
    return float((ends - starts).mean())


def criterion_values(
    timeline: CitizenTimeline, t_i: int, horizon: int, course_family: str | None
) -> np.ndarray:
    """C1..C4 over the ``horizon`` days following course day ``t_i``."""
    first, last = _window_bounds(timeline, t_i, horizon)
    employed = np.asarray(timeline.curve.employed[t_i : t_i + horizon])
    c2 = _coverage(timeline, first, last, lambda s: s.permanent).sum()
    c3 = _coverage(timeline, first, last, lambda s: course_family is not None and s.pf_code == course_family).sum()
    return np.array([employed.sum(), c2, c3, mean_interior_gap(employed)], dtype=float)


def criterion_value(
    timeline: CitizenTimeline,
    t_i: int,
    horizon: int,
    criterion: CriterionId,
    course_family: str | None,
) -> float:
    return float(criterion_values(timeline, t_i, horizon, course_family)[CRITERIA.index(criterion)])


class Untestable(ValueError):
    pass


def participant_pvalue(
    subject_value: float, control_values: Sequence[float], direction: Direction
) -> float:
    """One-sided one-sample t-test of the controls' mean against the subject's value.

    Small p means the subject did better than its controls.
    """
    x = np.asarray(control_values, dtype=float)
    n = len(x)
    if n < 2:
        raise Untestable(f"need at least 2 controls, got {n}")
    sign = 1.0 if direction is Direction.HIGHER_BETTER else -1.0
    diff = sign * (x.mean() - subject_value)
    sd = x.std(ddof=1)
    if sd == 0.0 or not np.isfinite(sd):
        if diff < 0:
            return 0.0
        if diff > 0:
            return 1.0
        return 0.5
    t = diff / (sd / np.sqrt(n))
    return float(stats.t.cdf(t, df=n - 1))


@dataclass(frozen=True)
class ParticipantScore:
    citizen_id: str
    course_id: str
    criterion: CriterionId
    raw_value: float
    p_value: float
    control_n: int


def score_participant(
    subject: CitizenTimeline,
    controls: Sequence[CitizenTimeline],
    course_id: str,
    t_i: int,
    horizon: int,
    course_family: str | None,
) -> list[ParticipantScore]:
    """Scores on all four criteria; empty when fewer than two controls."""
    if len(controls) < 2:
        return []
    own = criterion_values(subject, t_i, horizon, course_family)
    ctrl = np.vstack([criterion_values(c, t_i, horizon, course_family) for c in controls])
    out = []
    for j, crit in enumerate(CRITERIA):
        p = participant_pvalue(own[j], ctrl[:, j], crit.direction)
        out.append(ParticipantScore(subject.citizen_id, course_id, crit, float(own[j]), p, len(controls)))
    return out


@dataclass
class PerformanceMatrix:
    courses: list[str] = field(default_factory=list)
    values: np.ndarray = field(default_factory=lambda: np.zeros((0, len(CRITERIA))))
    counts: np.ndarray = field(default_factory=lambda: np.zeros((0, len(CRITERIA)), dtype=int))
    excluded: dict[str, str] = field(default_factory=dict)


def course_performance(
    scores: Iterable[ParticipantScore], min_participants: int = 4
) -> tuple[np.ndarray, np.ndarray] | str:
    """Mean p-value and participant count per criterion, or an exclusion reason."""
    by_crit: dict[CriterionId, list[float]] = {c: [] for c in CRITERIA}
    for s in scores:
        by_crit[s.criterion].append(s.p_value)
    counts = np.array([len(by_crit[c]) for c in CRITERIA])
    if counts.min() < min_participants:
        return f"fewer than {min_participants} testable participants ({int(counts.min())})"
    means = np.array([np.mean(by_crit[c]) for c in CRITERIA])
    return means, counts


def performance_matrix(
    scores: Iterable[ParticipantScore], courses: Sequence[str], min_participants: int = 4
) -> PerformanceMatrix:
    grouped: dict[str, list[ParticipantScore]] = {c: [] for c in courses}
    for s in scores:
        grouped.setdefault(s.course_id, []).append(s)
    pm = PerformanceMatrix()
    rows, cnts = [], []
    for course in courses:
        result = course_performance(grouped[course], min_participants)
        if isinstance(result, str):
            pm.excluded[course] = result
            continue
        pm.courses.append(course)
        rows.append(result[0])
        cnts.append(result[1])
    if rows:
        pm.values = np.vstack(rows)
        pm.counts = np.vstack(cnts)
    return pm


def write_participant_scores(scores: Iterable[ParticipantScore], path: str | Path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["citizen_id", "course_id", "criterion", "raw_value", "p_value", "control_n"])
        for s in scores:
            w.writerow([s.citizen_id, s.course_id, s.criterion.value, f"{s.raw_value:.10g}", repr(s.p_value), s.control_n])


def read_participant_scores(path: str | Path) -> list[ParticipantScore]:
    with Path(path).open(newline="", encoding="utf-8") as fh:
        return [
            ParticipantScore(
                r["citizen_id"], r["course_id"], CriterionId(r["criterion"]),
                float(r["raw_value"]), float(r["p_value"]), int(r["control_n"]),
            )
            for r in csv.DictReader(fh)
        ]
