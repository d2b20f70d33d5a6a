"""Classical TOPSIS and unweighted TOPSIS (score intervals over bounded weights).

Each alternative's closeness score ``R_i(w) = d_minus / (d_minus + d_plus)`` is
minimised and maximised over weights on the simplex with box bounds
``l <= w <= u``. Alternatives are ranked by the indicator
``k1 * r_min + (1 - k1) * r_max`` with ties broken on ``r_min``.
"""
from __future__ import annotations

import csv
import functools
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.optimize import minimize

BENEFIT = "benefit"
COST = "cost"

FEAS_TOL = 1e-8
TIE_TOL = 1e-9
N_STARTS = 8


@dataclass(frozen=True)
class DecisionMatrix:
    alternatives: tuple[str, ...]
    criteria: tuple[str, ...]
    directions: tuple[str, ...]
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        x = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", x)
        n, m = len(self.alternatives), len(self.criteria)
        if n < 2 or m < 1:
            raise ValueError("need at least 2 alternatives and 1 criterion")
        if x.shape != (n, m):
            raise ValueError(f"values shape {x.shape} != ({n}, {m})")
        if not np.isfinite(x).all():
            raise ValueError("decision matrix has missing or non-finite entries")
        if len(self.directions) != m or any(d not in (BENEFIT, COST) for d in self.directions):
            raise ValueError("directions must be 'benefit' or 'cost' per criterion")
        if len(set(self.alternatives)) != n:
            raise ValueError("alternative labels must be unique")

    @property
    def is_benefit(self) -> np.ndarray:
        return np.array([d == BENEFIT for d in self.directions])


@dataclass(frozen=True)
class WeightBounds:
    lower: np.ndarray
    upper: np.ndarray
    k1: float = 0.5

    def __post_init__(self):
        lo = np.asarray(self.lower, dtype=float)
        up = np.asarray(self.upper, dtype=float)
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", up)
        if lo.shape != up.shape or lo.ndim != 1:
            raise ValueError("lower and upper must be vectors of equal length")
        if not (np.all(lo > 0) and np.all(lo <= up) and np.all(up <= 1)):
            raise ValueError("bounds must satisfy 0 < l <= u <= 1")
        if lo.sum() > 1 + 1e-12 or up.sum() < 1 - 1e-12:
            raise ValueError("infeasible bounds: need sum(l) <= 1 <= sum(u)")
        if not 0.0 <= self.k1 <= 1.0:
            raise ValueError("k1 must lie in [0, 1]")

    @classmethod
    def uniform(cls, m: int, lower: float = 0.1, upper: float = 0.6, k1: float = 0.5) -> "WeightBounds":
        return cls(np.full(m, lower), np.full(m, upper), k1)

    @property
    def k2(self) -> float:
        return 1.0 - self.k1

    @property
    def m(self) -> int:
        return len(self.lower)


@dataclass(frozen=True)
class ScoreInterval:
    label: str
    r_min: float
    r_max: float
    uw: float
    argmin_w: np.ndarray = field(repr=False)
    argmax_w: np.ndarray = field(repr=False)


@dataclass(frozen=True)
class RankedAlternative:
    label: str
    interval: ScoreInterval
    position: int
    quartile: int


@dataclass(frozen=True)
class Ranking:
    entries: tuple[RankedAlternative, ...]

    def positions(self) -> dict[str, int]:
        return {e.label: e.position for e in self.entries}

    def uw_scores(self) -> dict[str, float]:
        return {e.label: e.interval.uw for e in self.entries}

    def labels(self) -> list[str]:
        return [e.label for e in self.entries]


def normalize(x: np.ndarray) -> np.ndarray:
    """Vector normalisation per column; an all-zero column stays zero."""
    x = np.asarray(x, dtype=float)
    norms = np.sqrt((x**2).sum(axis=0))
    safe = np.where(norms > 0, norms, 1.0)
    return np.where(norms > 0, x / safe, 0.0)


def ideal_solutions(r: np.ndarray, is_benefit: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    is_benefit = np.asarray(is_benefit, dtype=bool)
    hi, lo = r.max(axis=0), r.min(axis=0)
    return np.where(is_benefit, hi, lo), np.where(is_benefit, lo, hi)


def topsis_score(row: np.ndarray, a_plus: np.ndarray, a_minus: np.ndarray, w: np.ndarray) -> float:
    d_plus = math.sqrt(float(np.sum((w * (row - a_plus)) ** 2)))
    d_minus = math.sqrt(float(np.sum((w * (row - a_minus)) ** 2)))
    if d_plus + d_minus == 0.0:
        return 0.5
    return d_minus / (d_plus + d_minus)


def topsis_scores(matrix: DecisionMatrix, w: np.ndarray) -> np.ndarray:
    """Classical TOPSIS closeness of every alternative under fixed weights."""
    r = normalize(matrix.values)
    a_plus, a_minus = ideal_solutions(r, matrix.is_benefit)
    return np.array([topsis_score(row, a_plus, a_minus, np.asarray(w, float)) for row in r])


# --- feasible set helpers -------------------------------------------------

def project_to_feasible(w: np.ndarray, bounds: WeightBounds) -> np.ndarray:
    """Euclidean projection onto {sum(w) = 1, l <= w <= u}."""
    lo, up = bounds.lower, bounds.upper
    if is_feasible(w, bounds, 1e-14):
        return np.clip(w, lo, up)
    a, b = float(np.min(w - up)), float(np.max(w - lo))
    for _ in range(80):
        tau = 0.5 * (a + b)
        if np.clip(w - tau, lo, up).sum() > 1.0:
            a = tau
        else:
            b = tau
    return np.clip(w - 0.5 * (a + b), lo, up)


def _greedy_vertex(order: Sequence[int], bounds: WeightBounds) -> np.ndarray:
    w = bounds.lower.copy()
    rest = 1.0 - w.sum()
    for j in order:
        add = min(bounds.upper[j] - w[j], rest)
        w[j] += add
        rest -= add
    return w


@functools.lru_cache(maxsize=256)
def _starts_cached(lower: tuple, upper: tuple) -> tuple[tuple[float, ...], ...]:
    bounds = WeightBounds(np.array(lower), np.array(upper))
    m = bounds.m
    verts: list[np.ndarray] = []
    for j in range(m):
        rest = [i for i in range(m) if i != j]
        for order in ([j] + rest, rest + [j], [j] + rest[::-1], rest[::-1] + [j]):
            v = _greedy_vertex(order, bounds)
            if not any(np.allclose(v, u, atol=1e-12) for u in verts):
                verts.append(v)
    centroid = project_to_feasible(np.mean(verts, axis=0), bounds)
    starts = [centroid] + verts
    return tuple(tuple(s) for s in starts[:N_STARTS])


def starting_points(bounds: WeightBounds) -> list[np.ndarray]:
    """Centroid of the feasible polytope plus greedy vertices, at most 8 points."""
    return [np.array(s) for s in _starts_cached(tuple(bounds.lower), tuple(bounds.upper))]


def is_feasible(w: np.ndarray, bounds: WeightBounds, tol: float = FEAS_TOL) -> bool:
    return (
        abs(w.sum() - 1.0) <= tol
        and bool(np.all(w >= bounds.lower - tol))
        and bool(np.all(w <= bounds.upper + tol))
    )


def _optimize(f, bounds: WeightBounds, sign: float) -> tuple[float, np.ndarray]:
    """Best of multi-start COBYLA runs on ``sign * f`` over the free weights.

    The last weight is eliminated through the simplex equality, leaving
    inequality constraints on ``l_m <= 1 - sum(x) <= u_m``. Final points are
    projected back onto the feasible set before evaluation.
    """
    lo, up = bounds.lower, bounds.upper
    m = bounds.m
    starts = starting_points(bounds)
    best_val, best_w = None, None

    def consider(w):
        nonlocal best_val, best_w
        w = project_to_feasible(w, bounds)
        val = f(w)
        if best_val is None or sign * val < sign * best_val:
            best_val, best_w = val, w

    if m == 1 or np.allclose(lo, up) or abs(lo.sum() - 1) < 1e-12 or abs(up.sum() - 1) < 1e-12:
        for s in starts:
            consider(s)
        return best_val, best_w

    def full(x):
        return np.append(x, 1.0 - x.sum())

    cons = [
        {"type": "ineq", "fun": lambda x: 1.0 - x.sum() - lo[-1]},
        {"type": "ineq", "fun": lambda x: up[-1] - (1.0 - x.sum())},
    ]
    box = list(zip(lo[:-1], up[:-1]))
    for s in starts:
        consider(s)
        res = minimize(
            lambda x: sign * f(full(x)),
            s[:-1],
            method="COBYLA",
            bounds=box,
            constraints=cons,
            options={"rhobeg": 0.05, "tol": 1e-10, "maxiter": 2000},
        )
        consider(full(res.x))
    return best_val, best_w


def _closeness(dp2: np.ndarray, dm2: np.ndarray, w: np.ndarray) -> float:
    w2 = w * w
    d_plus = math.sqrt(max(float(w2 @ dp2), 0.0))
    d_minus = math.sqrt(max(float(w2 @ dm2), 0.0))
    if d_plus + d_minus == 0.0:
        return 0.5
    return d_minus / (d_plus + d_minus)


def _interval_from_row(label, row, a_plus, a_minus, bounds: WeightBounds) -> ScoreInterval:
    f = functools.partial(_closeness, (row - a_plus) ** 2, (row - a_minus) ** 2)
    r_min, w_min = _optimize(f, bounds, +1.0)
    r_max, w_max = _optimize(f, bounds, -1.0)
    r_min, r_max = min(r_min, r_max), max(r_min, r_max)
    uw = bounds.k1 * r_min + bounds.k2 * r_max
    return ScoreInterval(label, r_min, r_max, uw, w_min, w_max)


def score_interval(matrix: DecisionMatrix, bounds: WeightBounds, i: int) -> ScoreInterval:
    if bounds.m != len(matrix.criteria):
        raise ValueError("bounds dimension does not match number of criteria")
    r = normalize(matrix.values)
    a_plus, a_minus = ideal_solutions(r, matrix.is_benefit)
    return _interval_from_row(matrix.alternatives[i], r[i], a_plus, a_minus, bounds)


def score_intervals(matrix: DecisionMatrix, bounds: WeightBounds) -> list[ScoreInterval]:
    if bounds.m != len(matrix.criteria):
        raise ValueError("bounds dimension does not match number of criteria")
    r = normalize(matrix.values)
    a_plus, a_minus = ideal_solutions(r, matrix.is_benefit)
    return [
        _interval_from_row(lab, r[i], a_plus, a_minus, bounds)
        for i, lab in enumerate(matrix.alternatives)
    ]


def with_k1(interval: ScoreInterval, k1: float) -> ScoreInterval:
    uw = k1 * interval.r_min + (1.0 - k1) * interval.r_max
    return ScoreInterval(interval.label, interval.r_min, interval.r_max, uw, interval.argmin_w, interval.argmax_w)


def interval_compare(a: ScoreInterval, b: ScoreInterval, k1: float = 0.5) -> int:
    """1 if ``a`` ranks above ``b``, -1 if below; 0 only for the same label."""
    sa = k1 * a.r_min + (1 - k1) * a.r_max
    sb = k1 * b.r_min + (1 - k1) * b.r_max
    if abs(sa - sb) > TIE_TOL:
        return 1 if sa > sb else -1
    if abs(a.r_min - b.r_min) > TIE_TOL:
        return 1 if a.r_min > b.r_min else -1
    if a.label == b.label:
        return 0
    return 1 if a.label < b.label else -1


def quartile_of(position: int, n: int) -> int:
    block = math.ceil(n / 4)
    return min(4, (position - 1) // block + 1)


def rank_intervals(intervals: Sequence[ScoreInterval], k1: float = 0.5) -> Ranking:
    ordered = sorted(
        intervals,
        key=functools.cmp_to_key(lambda a, b: -interval_compare(a, b, k1)),
    )
    n = len(ordered)
    return Ranking(
        tuple(
            RankedAlternative(iv.label, with_k1(iv, k1), pos, quartile_of(pos, n))
            for pos, iv in enumerate(ordered, 1)
        )
    )


def rank(matrix: DecisionMatrix, bounds: WeightBounds) -> Ranking:
    return rank_intervals(score_intervals(matrix, bounds), bounds.k1)


# --- CSV interfaces -------------------------------------------------------

def read_decision_matrix(path: str | Path) -> DecisionMatrix:
    """Header ``alternative,<criteria...>``, then a ``direction`` row, then data."""
    with Path(path).open(newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if len(rows) < 2:
        raise ValueError(f"{path}: need header and direction rows")
    header, direction = rows[0], rows[1]
    if direction[0] != "direction":
        raise ValueError(f"{path}: second row must start with 'direction'")
    labels = [r[0] for r in rows[2:]]
    values = np.array([[float(v) for v in r[1:]] for r in rows[2:]], dtype=float)
    return DecisionMatrix(tuple(labels), tuple(header[1:]), tuple(d.strip().lower() for d in direction[1:]), values)


def write_decision_matrix(matrix: DecisionMatrix, path: str | Path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["alternative", *matrix.criteria])
        w.writerow(["direction", *matrix.directions])
        for label, row in zip(matrix.alternatives, matrix.values):
            w.writerow([label, *(repr(float(v)) for v in row)])


def write_ranking(ranking: Ranking, path: str | Path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["alternative", "r_min", "r_max", "uw", "position", "quartile"])
        for e in ranking.entries:
            iv = e.interval
            w.writerow([e.label, repr(iv.r_min), repr(iv.r_max), repr(iv.uw), e.position, f"Q{e.quartile}"])


def read_ranking(path: str | Path) -> Ranking:
    with Path(path).open(newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    entries = []
    for r in rows:
        iv = ScoreInterval(r["alternative"], float(r["r_min"]), float(r["r_max"]), float(r["uw"]), np.array([]), np.array([]))
        entries.append(RankedAlternative(iv.label, iv, int(r["position"]), int(r["quartile"].lstrip("Q"))))
    return Ranking(tuple(entries))
