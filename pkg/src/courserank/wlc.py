"""Working life curves: cumulative fraction of days employed since the origin.

Day index ``t`` runs from 1 (the origin date itself) to ``length_days`` (the
observation cut-off). ``value(t) = N(t) / t`` where ``N(t)`` counts employed
days among days ``1..t``.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np

from .datamodel import (
    STUDY_LEVEL,
    CitizenRecord,
    ContractRecord,
    Datasets,
    StudyRecord,
    Typology,
    resolve_contracts,
)


class NoWorkingLifeError(ValueError):
    """Citizen has neither contracts nor regulated studies."""


@dataclass(frozen=True)
class WorkingLifeCurve:
    citizen_id: str
    origin: int
    length_days: int
    employed: np.ndarray = field(repr=False)
    cumulative: np.ndarray = field(repr=False)
    flags: tuple[str, ...] = ()

    def value(self, t: int) -> float:
        if not 1 <= t <= self.length_days:
            raise IndexError(f"day {t} outside [1, {self.length_days}]")
        return float(self.cumulative[t - 1]) / t

    def values(self, upto: int | None = None, stride: int = 1) -> np.ndarray:
        """Curve values at days 1, 1+stride, ... <= upto."""
        upto = self.length_days if upto is None else upto
        if upto > self.length_days:
            raise ValueError(f"upto={upto} exceeds curve length {self.length_days}")
        idx = np.arange(0, upto, stride)
        return self.cumulative[idx] / (idx + 1.0)

    def day_of(self, t: int) -> int:
        """Absolute day count of day index ``t``."""
        return self.origin + t - 1


def determine_origin(
    studies: Iterable[StudyRecord], contracts: Iterable[ContractRecord]
) -> int:
    starts = [c.start_date for c in contracts]
    ends = [s.end_date for s in studies if s.study_type in STUDY_LEVEL]
    candidates = []
    if starts:
        candidates.append(min(starts))
    if ends:
        candidates.append(max(ends))
    if not candidates:
        raise NoWorkingLifeError("no contracts and no regulated studies")
    return min(candidates)


def build_wlc(
    origin: int,
    intervals: Iterable[tuple[int, int]],
    length_days: int,
    citizen_id: str = "",
) -> WorkingLifeCurve:
    """Build a curve from inclusive ``(start, end)`` absolute-day intervals.

    Overlapping intervals count once. Intervals starting before ``origin``
    are clipped and the curve is flagged.
    """
    if length_days < 1:
        raise ValueError("length_days must be positive")
    employed = np.zeros(length_days, dtype=bool)
    flags = []
    for start, end in intervals:
        if start < origin:
            flags.append("clipped_before_origin")
        lo = max(start, origin) - origin
        hi = min(end, origin + length_days - 1) - origin
        if hi >= lo:
            employed[lo : hi + 1] = True
    cumulative = np.cumsum(employed, dtype=np.int64)
    employed.setflags(write=False)
    cumulative.setflags(write=False)
    return WorkingLifeCurve(
        citizen_id, origin, length_days, employed, cumulative, tuple(sorted(set(flags)))
    )


def wlc_distance(
    a: WorkingLifeCurve, b: WorkingLifeCurve, upto: int, stride: int = 1
) -> float:
    if upto < 1:
        raise ValueError("upto must be >= 1")
    if upto > a.length_days or upto > b.length_days:
        raise ValueError("upto exceeds curve length")
    diff = a.values(upto, stride) - b.values(upto, stride)
    return float(np.sqrt(np.dot(diff, diff)))


def export_curve(curve: WorkingLifeCurve, path: str | Path) -> None:
    """Two-column ``day,value`` CSV of one curve, for plotting."""
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["day", "value"])
        for t, v in enumerate(curve.values(), 1):
            w.writerow([t, f"{v:.10g}"])


@dataclass(frozen=True)
class Spell:
    """Resolved contract interval, inclusive absolute days."""

    start: int
    end: int
    permanent: bool
    pf_code: str | None


@dataclass(frozen=True)
class CitizenTimeline:
    citizen_id: str
    gender: str
    birth_date: int
    curve: WorkingLifeCurve
    spells: tuple[Spell, ...]
    # first day each education level (compulsory, vocational, university) is held
    level_reached: tuple[float, float, float]


def level_reached_days(studies: Iterable[StudyRecord]) -> tuple[float, float, float]:
    reached = [np.inf, np.inf, np.inf]
    for s in studies:
        lvl = STUDY_LEVEL.get(s.study_type)
        if lvl is not None:
            reached[int(lvl) - 1] = min(reached[int(lvl) - 1], s.end_date)
    return tuple(reached)


def build_timeline(
    citizen: CitizenRecord,
    studies: list[StudyRecord],
    contracts: list[ContractRecord],
    as_of: int,
) -> CitizenTimeline:
    """Origin, imputed contract spells and curve for one citizen up to ``as_of``."""
    origin = determine_origin(studies, contracts)
    if origin > as_of:
        raise NoWorkingLifeError("working life starts after the observation cut-off")
    spells = []
    for contract, end in resolve_contracts(contracts):
        if contract.start_date > as_of:
            continue
        spells.append(
            Spell(
                contract.start_date,
                min(end, as_of),
                contract.typology is Typology.PERMANENT,
                contract.pf_code,
            )
        )
    curve = build_wlc(
        origin, [(s.start, s.end) for s in spells], as_of - origin + 1, citizen.citizen_id
    )
    return CitizenTimeline(
        citizen.citizen_id,
        citizen.gender.value,
        citizen.birth_date,
        curve,
        tuple(spells),
        level_reached_days(studies),
    )


def build_population(ds: Datasets, as_of: int) -> tuple[dict[str, CitizenTimeline], dict[str, str]]:
    """Timelines for every citizen with a working life; the rest get a reason."""
    studies = ds.studies_by_citizen()
    contracts = ds.contracts_by_citizen()
    timelines: dict[str, CitizenTimeline] = {}
    excluded: dict[str, str] = {}
    for cid in sorted(ds.citizens):
        try:
            timelines[cid] = build_timeline(ds.citizens[cid], studies[cid], contracts[cid], as_of)
        except NoWorkingLifeError as exc:
            excluded[cid] = str(exc)
    return timelines, excluded
