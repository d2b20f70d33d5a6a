"""Deterministic synthetic populations with planted course effects.

Careers are two-state (employed / idle) day-level Markov chains, simulated
spell by spell with geometric durations. A course with effect ``e`` raises
the citizen's stationary employment probability by ``e`` during the horizon
after completion, by raising the idle-to-employed rate.
"""
from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import asdict, dataclass, field, fields
from datetime import date
from pathlib import Path
from typing import Mapping

import numpy as np

from .datamodel import PROFESSIONAL_FAMILIES, age_at, iso, to_day

DEFAULT_FAMILIES = ("ADM", "HOT", "CSS", "COM", "ITC", "BCW", "ALA", "HEA", "ELE", "FOI")


@dataclass(frozen=True)
class SynthConfig:
    n_citizens: int = 1000
    n_courses: int = 10
    families: tuple[str, ...] = DEFAULT_FAMILIES
    family_weights: tuple[float, ...] = ()
    employment_rate: float = 0.55
    rate_concentration: float = 8.0
    mean_employed_spell: float = 180.0
    effect_sizes: tuple[float, ...] = ()
    permanent_share: float = 0.15
    home_family_share: float = 0.7
    participant_share: float = 0.3
    missing_end_share: float = 0.25
    horizon_days: int = 365
    as_of: str = "2020-12-31"
    seed: int = 0

    def __post_init__(self):
        if self.n_citizens < 1 or self.n_courses < 1:
            raise ValueError("n_citizens and n_courses must be positive")
        for name in ("employment_rate", "permanent_share", "home_family_share",
                     "participant_share", "missing_end_share"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        if self.employment_rate in (0.0, 1.0):
            raise ValueError("employment_rate must lie strictly inside (0, 1)")
        bad = [f for f in self.families if f not in PROFESSIONAL_FAMILIES]
        if bad or not self.families:
            raise ValueError(f"unknown professional families: {bad}")
        if self.family_weights and len(self.family_weights) != len(self.families):
            raise ValueError("family_weights must match families")
        if self.effect_sizes and len(self.effect_sizes) != self.n_courses:
            raise ValueError("effect_sizes must give one value per course")
        if any(not -1.0 <= e <= 1.0 for e in self.effect_sizes):
            raise ValueError("effect sizes must lie in [-1, 1]")
        if self.mean_employed_spell < 1 or self.rate_concentration <= 0 or self.horizon_days < 1:
            raise ValueError("spell length, concentration and horizon must be positive")
        date.fromisoformat(self.as_of)

    def effect(self, course: int) -> float:
        return self.effect_sizes[course] if self.effect_sizes else 0.0

    @classmethod
    def from_mapping(cls, values: Mapping[str, str]) -> "SynthConfig":
        """Build from string key/values (config file or CLI), ignoring unknown keys."""
        kinds = {f.name: f.type for f in fields(cls)}
        out = {}
        for key, raw in values.items():
            key = key.replace("-", "_")
            if key not in kinds or raw is None:
                continue
            kind = str(kinds[key])
            if "tuple[str" in kind:
                out[key] = tuple(x.strip().upper() for x in str(raw).split(",") if x.strip())
            elif "tuple[float" in kind:
                out[key] = tuple(float(x) for x in str(raw).split(",") if x.strip())
            elif kind == "int":
                out[key] = int(raw)
            elif kind == "float":
                out[key] = float(raw)
            else:
                out[key] = str(raw)
        return cls(**out)


def _rate_to_hire(rate: float, p_end: float) -> float:
    rate = min(max(rate, 1e-6), 1.0 - 1e-6)
    return min(1.0, rate * p_end / (1.0 - rate))


def simulate_employment(
    rng: np.random.Generator,
    start: int,
    stop: int,
    p_end: float,
    p_hire: float,
    boost_window: tuple[int, int] | None = None,
    p_hire_boost: float | None = None,
) -> list[tuple[int, int]]:
    """Employed spells (inclusive days) of a career starting employed at ``start``.

    Inside ``boost_window`` (half-open day range) the hire rate is
    ``p_hire_boost``; spells crossing a window edge are cut and redrawn, which
    is exact because geometric durations are memoryless.
    """
    edges = [] if boost_window is None else [boost_window[0], boost_window[1]]

    def hire_rate(day: int) -> float:
        if boost_window is not None and boost_window[0] <= day < boost_window[1]:
            return p_hire_boost
        return p_hire

    spells = []
    day, employed = start, True
    spell_start = start
    while day <= stop:
        p = p_end if employed else hire_rate(day)
        end = day + int(rng.geometric(p))  # first day of the next state
        cut = next((e for e in edges if day < e < end), None)
        if cut is not None:
            day = cut
            continue
        if employed:
            spells.append((spell_start, min(end - 1, stop)))
        else:
            spell_start = end
        day, employed = end, not employed
    return spells


@dataclass
class _Citizen:
    cid: str
    gender: str
    birth: int
    studies: list[tuple[str, str, int]] = field(default_factory=list)
    contracts: list[dict] = field(default_factory=list)
    course: int | None = None
    completion: int | None = None


def _years(birth: int, years: float) -> int:
    return birth + int(round(years * 365.25))


def _make_citizen(i: int, cfg: SynthConfig, catalog: list[dict], as_of: int, fam_p: np.ndarray) -> _Citizen:
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 1, i]))
    cid = f"P{i:06d}"
    gender = "F" if rng.random() < 0.5 else "M"
    birth = to_day("1965-01-01") + int(rng.integers(0, to_day("1997-12-31") - to_day("1965-01-01")))
    c = _Citizen(cid, gender, birth)

    level = rng.choice(4, p=[0.05, 0.40, 0.30, 0.25])
    last_end = None
    if level >= 1:
        last_end = _years(birth, 16 + rng.random() * 0.5)
        c.studies.append(("compulsory", "Secondary education", last_end))
    if level == 2:
        last_end = _years(birth, 19 + rng.random() * 2)
        c.studies.append(("vocational", "Vocational diploma", last_end))
    if level == 3:
        last_end = _years(birth, 22 + rng.random() * 2)
        c.studies.append(("university", "Bachelor degree", last_end))

    search = int(rng.geometric(1 / 200))
    first_job = (last_end if last_end is not None else _years(birth, 17)) + search
    home = str(rng.choice(cfg.families, p=fam_p))
    rate = float(rng.beta(cfg.employment_rate * cfg.rate_concentration,
                          (1 - cfg.employment_rate) * cfg.rate_concentration))
    p_end = 1.0 / cfg.mean_employed_spell
    p_hire = _rate_to_hire(rate, p_end)

    origin = min(first_job, last_end) if last_end is not None else first_job
    boost = None
    p_boost = None
    lo, hi = origin + 365, as_of - cfg.horizon_days - 30
    if rng.random() < cfg.participant_share and hi > lo:
        c.course = int(rng.integers(cfg.n_courses))
        c.completion = int(rng.integers(lo, hi + 1))
        c.studies.append(("training course", catalog[c.course]["course_id"], c.completion))
        eff = cfg.effect(c.course)
        if eff != 0.0:
            boost = (c.completion + 1, c.completion + 1 + cfg.horizon_days)
            p_boost = _rate_to_hire(rate + eff, p_end)

    if first_job <= as_of:
        for s_start, s_end in simulate_employment(rng, first_job, as_of, p_end, p_hire, boost, p_boost):
            n_pieces = min(1 + int(rng.poisson(0.5)), s_end - s_start + 1)
            cuts = sorted(rng.choice(np.arange(s_start + 1, s_end + 1), size=n_pieces - 1, replace=False)) if n_pieces > 1 else []
            bounds = [s_start, *[int(x) for x in cuts], s_end + 1]
            for a, b in zip(bounds[:-1], bounds[1:]):
                permanent = rng.random() < cfg.permanent_share
                fam = home if rng.random() < cfg.home_family_share else str(rng.choice(cfg.families, p=fam_p))
                c.contracts.append({
                    "start": a,
                    "end": b - 1,
                    "blank_end": bool(rng.random() < cfg.missing_end_share),
                    "typology": "permanent" if permanent else "temporary",
                    "pf": fam,
                    "cno": f"{int(rng.integers(1000, 9999))}",
                    "cnae": f"{int(rng.integers(100, 999))}",
                    "locality": f"{int(rng.integers(6000, 6999)):05d}",
                })
    return c


def _catalog(cfg: SynthConfig, fam_p: np.ndarray) -> list[dict]:
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 0]))
    out = []
    for j in range(cfg.n_courses):
        fam = str(rng.choice(cfg.families, p=fam_p))
        out.append({"course_id": f"C{j + 1:03d}", "name": f"Course {j + 1:03d} {PROFESSIONAL_FAMILIES[fam]}", "family": fam})
    return out


FILES = ("ds1.csv", "ds2.csv", "ds3.csv", "ds4.csv", "courses.csv")


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def generate(config: SynthConfig, out_dir: str | Path) -> dict:
    """Write DS1-DS4 and the course catalog to ``out_dir``; return the manifest."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    as_of = to_day(config.as_of)
    weights = np.array(config.family_weights or [1.0] * len(config.families), dtype=float)
    fam_p = weights / weights.sum()
    catalog = _catalog(config, fam_p)
    citizens = [_make_citizen(i, config, catalog, as_of, fam_p) for i in range(1, config.n_citizens + 1)]

    def writer(name: str, header: list[str]):
        fh = (out / name).open("w", newline="", encoding="utf-8")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        return fh, w

    fh, w = writer("courses.csv", ["course_id", "name", "family"])
    for course in catalog:
        w.writerow([course["course_id"], course["name"], course["family"]])
    fh.close()

    study_header = ["citizenId", "endDate", "studyType", "degree"]
    f1, w1 = writer("ds1.csv", study_header)
    f2, w2 = writer("ds2.csv", study_header)
    f3, w3 = writer("ds3.csv", ["citizenId", "gender", "birthDate", "age", "numberOfStudies", "daysOfWork"])
    f4, w4 = writer("ds4.csv", ["citizenId", "endDate", "typeCode", "description", "startDate", "typology",
                                "cnoCode", "cnaeCode", "economicSection", "sector", "localityCode", "pfCode"])
    for c in citizens:
        target = w2 if c.course is not None else w1
        for stype, degree, end in c.studies:
            target.writerow([c.cid, iso(end), stype, degree])
        worked = sum(k["end"] - k["start"] + 1 for k in c.contracts)
        w3.writerow([c.cid, c.gender, iso(c.birth), age_at(c.birth, as_of), len(c.studies), worked])
        for k in c.contracts:
            perm = k["typology"] == "permanent"
            w4.writerow([
                c.cid, "" if k["blank_end"] else iso(k["end"]),
                "100" if perm else "401", "Indefinido" if perm else "Obra o servicio",
                iso(k["start"]), k["typology"], k["cno"], k["cnae"], "G", "Services",
                k["locality"], k["pf"],
            ])
    for f in (f1, f2, f3, f4):
        f.close()

    manifest = {
        "config": asdict(config),
        "files": {name: _sha256(out / name) for name in FILES},
        "participants": sum(c.course is not None for c in citizens),
        "citizens": len(citizens),
    }
    (out / "synth_manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return manifest


def planted_truth(config: SynthConfig) -> dict[str, float]:
    """Course id -> planted effect size, for checking rankings."""
    weights = np.array(config.family_weights or [1.0] * len(config.families), dtype=float)
    catalog = _catalog(config, weights / weights.sum())
    return {c["course_id"]: config.effect(j) for j, c in enumerate(catalog)}

