"""Per-participant control groups.

For each participant of a course: filter the pool on gender, age, education
and observed career length; keep the ``nn_cap`` curves nearest to the
participant's curve up to the course day; cluster them together with the
participant by PAM and keep the participant's cluster. The cluster count is
fixed per course as the mode of gap-statistic choices over a sample of
participants.
"""
from __future__ import annotations

import zlib
from collections import Counter
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.spatial.distance import cdist

from .clustering import gap_optimal_k, pam_from_distances
from .datamodel import Enrollment
from .wlc import CitizenTimeline


@dataclass(frozen=True)
class CohortConfig:
    horizon_days: int = 365
    age_window_years: int = 5
    nn_cap: int = 500
    sample_size: int = 200
    k_override: int | None = None
    seed: int = 0
    gap_k_max: int = 10
    gap_n_refs: int = 50
    stride: int = 1
    fallback_size: int = 10
    include_other_participants: bool = False

    def __post_init__(self):
        if self.nn_cap < 2:
            raise ValueError("nn_cap must be >= 2")
        if self.sample_size < 1:
            raise ValueError("sample_size must be >= 1")
        if self.horizon_days < 1:
            raise ValueError("horizon_days must be >= 1")
        if self.age_window_years < 0:
            raise ValueError("age_window_years must be >= 0")
        if self.k_override is not None and self.k_override < 1:
            raise ValueError("k_override must be positive")
        if self.stride < 1 or self.gap_k_max < 1 or self.gap_n_refs < 1:
            raise ValueError("stride, gap_k_max and gap_n_refs must be positive")


@dataclass(frozen=True)
class ControlGroup:
    subject_id: str
    course_id: str
    t_i: int
    member_ids: tuple[str, ...]
    distances: tuple[float, ...]
    k_used: int
    flag: str = ""
    initial_size: int = 0
    capped_size: int = 0


class Unscoreable(Exception):
    """Raised when a course has no participant with a nonempty control pool."""


def split_seed(root: int, *keys: str) -> np.random.SeedSequence:
    return np.random.SeedSequence([root, *(zlib.crc32(k.encode()) for k in keys)])


def _ages(birth: np.ndarray, day: np.ndarray) -> np.ndarray:
    b = birth.astype("datetime64[D]")
    d = day.astype("datetime64[D]")
    by, dy = b.astype("datetime64[Y]"), d.astype("datetime64[Y]")
    years = (dy - by).astype(int)
    # day-of-year offsets compared as (month, day) via days since Jan 1
    b_md = (b.astype("datetime64[M]") - by).astype(int) * 32 + (b - b.astype("datetime64[M]")).astype(int)
    d_md = (d.astype("datetime64[M]") - dy).astype(int) * 32 + (d - d.astype("datetime64[M]")).astype(int)
    return years - (d_md < b_md)


def _levels(reached: np.ndarray, day: np.ndarray) -> np.ndarray:
    level = np.zeros(len(day), dtype=int)
    for lvl in range(3):
        level = np.where(reached[:, lvl] <= day, lvl + 1, level)
    return level


@dataclass
class Pool:
    """Vectorized attribute table over candidate control citizens."""

    timelines: list[CitizenTimeline]
    ids: np.ndarray = field(init=False)
    gender: np.ndarray = field(init=False)
    birth: np.ndarray = field(init=False)
    origin: np.ndarray = field(init=False)
    length: np.ndarray = field(init=False)
    reached: np.ndarray = field(init=False)

    def __post_init__(self):
        tl = sorted(self.timelines, key=lambda c: c.citizen_id)
        self.timelines = tl
        self.ids = np.array([c.citizen_id for c in tl], dtype=object)
        self.gender = np.array([c.gender for c in tl], dtype=object)
        self.birth = np.array([c.birth_date for c in tl], dtype=np.int64)
        self.origin = np.array([c.curve.origin for c in tl], dtype=np.int64)
        self.length = np.array([c.curve.length_days for c in tl], dtype=np.int64)
        self.reached = np.array([c.level_reached for c in tl], dtype=float).reshape(len(tl), 3)

    def __len__(self) -> int:
        return len(self.timelines)


def subject_attributes(subject: CitizenTimeline, t_i: int) -> tuple[int, int]:
    day = np.array([subject.curve.day_of(t_i)])
    age = int(_ages(np.array([subject.birth_date]), day)[0])
    level = int(_levels(np.array([subject.level_reached]), day)[0])
    return age, level


def initial_control_group(
    subject: CitizenTimeline, t_i: int, pool: Pool, config: CohortConfig
) -> list[CitizenTimeline]:
    """Pool members matching gender, age window, education and career length.

    Age and education of a candidate are read at its own day ``t_i``.
    """
    if len(pool) == 0:
        return []
    age, level = subject_attributes(subject, t_i)
    day = pool.origin + t_i - 1
    mask = (
        (pool.gender == subject.gender)
        & (pool.length >= t_i + config.horizon_days)
        & (np.abs(_ages(pool.birth, day) - age) <= config.age_window_years)
        & (_levels(pool.reached, day) == level)
        & (pool.ids != subject.citizen_id)
    )
    return [pool.timelines[i] for i in np.flatnonzero(mask)]


def cap_to_nearest(
    subject: CitizenTimeline,
    candidates: Sequence[CitizenTimeline],
    t_i: int,
    nn_cap: int,
    stride: int = 1,
) -> tuple[list[CitizenTimeline], np.ndarray]:
    """Candidates ordered by curve distance on days 1..t_i, then by id; truncated."""
    if not candidates:
        return [], np.zeros(0)
    x = np.vstack([c.curve.values(t_i, stride) for c in candidates])
    d = np.sqrt(((x - subject.curve.values(t_i, stride)) ** 2).sum(axis=1))
    order = sorted(range(len(candidates)), key=lambda i: (d[i], candidates[i].citizen_id))
    order = order[:nn_cap]
    return [candidates[i] for i in order], d[order]


def _group_points(subject: CitizenTimeline, capped: Sequence[CitizenTimeline], t_i: int, stride: int):
    return np.vstack([subject.curve.values(t_i, stride)] + [c.curve.values(t_i, stride) for c in capped])


def control_group(
    subject: CitizenTimeline,
    course_id: str,
    t_i: int,
    pool: Pool,
    k_j: int,
    config: CohortConfig,
) -> ControlGroup | None:
    """Control group for one participant; ``None`` when no candidate survives filtering."""
    initial = initial_control_group(subject, t_i, pool, config)
    if not initial:
        return None
    capped, dist = cap_to_nearest(subject, initial, t_i, config.nn_cap, config.stride)
    points = _group_points(subject, capped, t_i, config.stride)
    k = min(k_j, len(points))
    res = pam_from_distances(cdist(points, points), k)
    cluster = res.labels[0]
    members = [i - 1 for i in np.flatnonzero(res.labels == cluster) if i != 0]
    flag = ""
    if not members:
        members = list(range(min(config.fallback_size, len(capped))))
        flag = "fallback"
    return ControlGroup(
        subject.citizen_id,
        course_id,
        t_i,
        tuple(capped[i].citizen_id for i in members),
        tuple(float(dist[i]) for i in members),
        k,
        flag,
        len(initial),
        len(capped),
    )


def course_t_i(subject: CitizenTimeline, enrollment: Enrollment) -> int:
    return enrollment.completion_date - subject.curve.origin + 1


def course_cluster_count(
    course_id: str,
    participants: Sequence[tuple[CitizenTimeline, int]],
    pool: Pool,
    config: CohortConfig,
) -> tuple[int, list[int]]:
    """Cluster count for a course and the per-participant gap choices behind it.

    ``participants`` pairs each eligible participant with its course day. The
    sample is drawn without replacement among participants with a nonempty
    initial control group; the mode is taken with ties going to the smaller k.
    """
    if config.k_override is not None:
        return config.k_override, []
    eligible = []
    for subject, t_i in sorted(participants, key=lambda p: p[0].citizen_id):
        initial = initial_control_group(subject, t_i, pool, config)
        if initial:
            eligible.append((subject, t_i, initial))
    if not eligible:
        raise Unscoreable(f"course {course_id}: no participant has control candidates")
    rng = np.random.default_rng(split_seed(config.seed, course_id, "sample"))
    n = min(config.sample_size, len(eligible))
    picks = sorted(rng.choice(len(eligible), size=n, replace=False))
    ks = []
    for idx in picks:
        subject, t_i, initial = eligible[idx]
        capped, _ = cap_to_nearest(subject, initial, t_i, config.nn_cap, config.stride)
        points = _group_points(subject, capped, t_i, config.stride)
        gap_seed = split_seed(config.seed, course_id, subject.citizen_id)
        ks.append(gap_optimal_k(points, config.gap_k_max, config.gap_n_refs, gap_seed))
    return mode_smallest(ks), ks


def mode_smallest(values: Sequence[int]) -> int:
    counts = Counter(values)
    top = max(counts.values())
    return min(v for v, c in counts.items() if c == top)
