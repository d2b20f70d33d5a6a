"""End-to-end course ranking run: ingest, curves, cohorts, criteria, uwTOPSIS, reports.

Every intermediate table is written as CSV into the output directory, with a
``manifest.json`` listing the configuration and a hash of each output.
"""
from __future__ import annotations

import configparser
import csv
import hashlib
import json
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Mapping

import numpy as np

from . import __version__
from .cohort import (
    CohortConfig,
    ControlGroup,
    Pool,
    Unscoreable,
    control_group,
    course_cluster_count,
    course_t_i,
)
from .criteria import (
    CRITERIA,
    ParticipantScore,
    performance_matrix,
    read_participant_scores,
    score_participant,
    write_participant_scores,
)
from .datamodel import Datasets, IngestError, ingest_datasets, iso, to_day, write_rejects
from .mcdm import COST, DecisionMatrix, Ranking, WeightBounds, rank, read_ranking, write_decision_matrix, write_ranking
from .sensitivity import SweepConfig
from .wlc import CitizenTimeline, build_population

log = logging.getLogger(__name__)

DATA_FILES = {"ds1": "ds1.csv", "ds2": "ds2.csv", "ds3": "ds3.csv", "ds4": "ds4.csv", "catalog": "courses.csv"}


class StageError(RuntimeError):
    def __init__(self, stage: str, message: str):
        super().__init__(f"{stage}: {message}")
        self.stage = stage


@dataclass(frozen=True)
class RunConfig:
    ds1: str = ""
    ds2: str = ""
    ds3: str = ""
    ds4: str = ""
    catalog: str = ""
    out_dir: str = "out"
    seed: int = 0
    as_of: str = ""
    min_participants: int = 4
    lower: float = 0.1
    upper: float = 0.6
    k1: float = 0.5
    threads: int = 0
    cohort: CohortConfig = field(default_factory=CohortConfig)
    sweep: SweepConfig = field(default_factory=SweepConfig)

    def __post_init__(self):
        if self.min_participants < 1:
            raise ValueError("min_participants must be >= 1")
        if self.threads < 0:
            raise ValueError("threads must be >= 0")
        if self.cohort.seed != self.seed:
            object.__setattr__(self, "cohort", replace(self.cohort, seed=self.seed))
        if self.as_of:
            to_day(self.as_of)
        self.bounds()
        self.sweep.baseline(len(CRITERIA))

    def bounds(self, m: int = len(CRITERIA)) -> WeightBounds:
        return WeightBounds.uniform(m, self.lower, self.upper, self.k1)

    def paths(self) -> dict[str, str]:
        return {k: getattr(self, k) for k in DATA_FILES}

    def to_dict(self) -> dict:
        out = asdict(self)
        out.pop("threads")
        out["cohort"].pop("seed")
        return out

    @classmethod
    def from_mapping(cls, values: Mapping[str, object]) -> "RunConfig":
        """Flat key/value settings, e.g. from a config file merged with CLI flags."""
        v = {k.replace("-", "_"): x for k, x in values.items() if x is not None and x != ""}
        known = {f.name for cls_ in (cls, CohortConfig, SweepConfig) for f in fields(cls_)}
        unknown = sorted(set(v) - known - {"data_dir", "bounds"})
        if unknown:
            raise ValueError(f"unknown settings: {', '.join(unknown)}")
        if "data_dir" in v:
            base = Path(str(v.pop("data_dir")))
            for key, name in DATA_FILES.items():
                v.setdefault(key, str(base / name))
        if "bounds" in v:
            v["lower"], v["upper"] = _pair(v.pop("bounds"))
        cohort_kw = _coerce(CohortConfig, v)
        sweep_kw = {}
        for key in ("l_range", "u_range", "k1_range"):
            if key in v:
                sweep_kw[key] = _pair(v.pop(key))
        sweep_kw.update(_coerce(SweepConfig, v))
        run_kw = _coerce(cls, v)
        run_kw["cohort"] = CohortConfig(**cohort_kw)
        sweep_kw.setdefault("baseline_lower", run_kw.get("lower", 0.1))
        sweep_kw.setdefault("baseline_upper", run_kw.get("upper", 0.6))
        sweep_kw.setdefault("baseline_k1", run_kw.get("k1", 0.5))
        run_kw["sweep"] = SweepConfig(**sweep_kw)
        return cls(**run_kw)


def _pair(raw) -> tuple[float, float]:
    if isinstance(raw, (tuple, list)):
        return float(raw[0]), float(raw[1])
    lo, hi = str(raw).split(":")
    return float(lo), float(hi)


_BOOL = {"true": True, "1": True, "yes": True, "false": False, "0": False, "no": False}


def _coerce(cls, values: dict) -> dict:
    out = {}
    for f in fields(cls):
        if f.name not in values or f.name in ("cohort", "sweep"):
            continue
        raw, kind = values[f.name], str(f.type)
        if kind == "str":
            raw = str(raw)
        if isinstance(raw, str):
            if kind.startswith("int"):
                raw = int(raw)
            elif kind == "float":
                raw = float(raw)
            elif kind == "bool":
                raw = _BOOL[raw.strip().lower()]
        out[f.name] = raw
    return out


def read_config_file(path: str | Path) -> dict[str, str]:
    """``key = value`` lines; an optional ``[section]`` header is ignored."""
    text = Path(path).read_text(encoding="utf-8")
    parser = configparser.ConfigParser()
    if not text.lstrip().startswith("["):
        text = "[run]\n" + text
    parser.read_string(text)
    out: dict[str, str] = {}
    for section in parser.sections():
        out.update(parser[section])
    return out


def sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


@dataclass
class RunResult:
    ranking: Ranking
    matrix: DecisionMatrix
    scores: list[ParticipantScore]
    groups: list[ControlGroup]
    k_per_course: dict[str, int]
    exclusions: list[tuple[str, str, str]]
    manifest: dict


def _latest_day(ds: Datasets) -> int:
    """Default observation cut-off: the latest contract date on record."""
    days = [c.start_date for c in ds.contracts]
    days += [c.end_date for c in ds.contracts if c.end_date is not None]
    if not days:
        raise StageError("ingest", "no contracts on record; pass as_of explicitly")
    return max(days)


def _write_csv(path: Path, header: list[str], rows) -> None:
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _ds3_consistency(ds: Datasets, timelines: dict[str, CitizenTimeline]) -> list[list]:
    studies: dict[str, int] = {}
    for s in ds.studies:
        studies[s.citizen_id] = studies.get(s.citizen_id, 0) + 1
    rows = []
    for cid in sorted(ds.citizens):
        if cid in ds.declared_studies and ds.declared_studies[cid] != studies.get(cid, 0):
            rows.append([cid, "numberOfStudies", ds.declared_studies[cid], studies.get(cid, 0)])
        if cid in ds.declared_days_of_work:
            worked = int(timelines[cid].curve.cumulative[-1]) if cid in timelines else 0
            if ds.declared_days_of_work[cid] != worked:
                rows.append([cid, "daysOfWork", ds.declared_days_of_work[cid], worked])
    return rows


def validate(config: RunConfig) -> tuple[Datasets, list[list]]:
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    ds = ingest_datasets(config.ds1, config.ds2, config.ds3, config.ds4, config.catalog or None)
    write_rejects(ds.rejects, out / "rejects.csv")
    as_of = to_day(config.as_of) if config.as_of else _latest_day(ds)
    timelines, _ = build_population(ds, as_of)
    mismatches = _ds3_consistency(ds, timelines)
    _write_csv(out / "ds3_consistency.csv", ["citizen_id", "field", "declared", "recomputed"], mismatches)
    return ds, mismatches


def run_rank(config: RunConfig) -> RunResult:
    """Run every stage and write all outputs; raises ``StageError`` on failure."""
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cfg = config.cohort
    h = cfg.horizon_days
    threads = config.threads or os.cpu_count() or 1
    stage = "ingest"
    outputs: list[str] = []
    try:
        try:
            ds = ingest_datasets(config.ds1, config.ds2, config.ds3, config.ds4, config.catalog or None)
        except (IngestError, OSError) as exc:
            raise StageError("ingest", str(exc)) from exc
        write_rejects(ds.rejects, out / "rejects.csv")
        outputs.append("rejects.csv")
        if not ds.courses:
            raise StageError("ingest", "course catalog is empty")
        as_of = to_day(config.as_of) if config.as_of else _latest_day(ds)

        log.info("ingested %d citizens, %d contracts, %d rejects", len(ds.citizens), len(ds.contracts), len(ds.rejects))
        stage = "wlc"
        timelines, no_life = build_population(ds, as_of)
        log.info("built %d working-life curves up to %s", len(timelines), iso(as_of))
        _write_csv(
            out / "wlc_summary.csv",
            ["citizen_id", "origin", "length_days", "employed_days", "final_value"],
            [[cid, iso(t.curve.origin), t.curve.length_days, int(t.curve.cumulative[-1]),
              repr(t.curve.value(t.curve.length_days))] for cid, t in timelines.items()],
        )
        outputs.append("wlc_summary.csv")

        stage = "cohort"
        exclusions: list[tuple[str, str, str]] = []
        by_course: dict[str, list] = {c: [] for c in sorted(ds.courses)}
        for e in sorted(ds.enrollments, key=lambda e: (e.course_id, e.citizen_id, e.completion_date)):
            subject = timelines.get(e.citizen_id)
            if subject is None:
                exclusions.append((e.citizen_id, e.course_id, "no working life"))
                continue
            t_i = course_t_i(subject, e)
            if t_i < 1:
                exclusions.append((e.citizen_id, e.course_id, "enrollment before working-life origin"))
                continue
            if t_i + h > subject.curve.length_days:
                exclusions.append((e.citizen_id, e.course_id, "horizon not observed"))
                continue
            by_course[e.course_id].append((subject, t_i))

        shared_pool = Pool([t for cid, t in timelines.items() if cid not in ds.participants])
        course_takers: dict[str, set[str]] = {}
        for e in ds.enrollments:
            course_takers.setdefault(e.course_id, set()).add(e.citizen_id)

        def pool_for(course_id: str) -> Pool:
            if not cfg.include_other_participants:
                return shared_pool
            takers = course_takers.get(course_id, set())
            return Pool([t for cid, t in timelines.items() if cid not in takers])

        pools = {c: pool_for(c) for c in by_course}

        # phase 1: course-level cluster counts
        def count_for(course_id: str):
            if not by_course[course_id]:
                return course_id, None, []
            try:
                k, ks = course_cluster_count(course_id, by_course[course_id], pools[course_id], cfg)
            except Unscoreable:
                return course_id, None, []
            return course_id, k, ks

        k_per_course: dict[str, int] = {}
        gap_rows = []
        with ThreadPoolExecutor(max_workers=threads) as ex:
            for course_id, k, ks in ex.map(count_for, list(by_course)):
                if k is not None:
                    k_per_course[course_id] = k
                    gap_rows.extend([course_id, i, kk] for i, kk in enumerate(ks))
                elif by_course[course_id]:
                    exclusions.append(("", course_id, "course unscoreable: no participant has controls"))
        _write_csv(out / "cluster_counts.csv", ["course_id", "k"], sorted(k_per_course.items()))
        _write_csv(out / "gap_samples.csv", ["course_id", "sample", "k"], gap_rows)
        outputs += ["cluster_counts.csv", "gap_samples.csv"]

        log.info("cluster counts: %s", k_per_course)
        # phase 2: per-participant control groups and scores
        jobs = [(c, s, t) for c in by_course if c in k_per_course for s, t in by_course[c]]

        def score_job(job):
            course_id, subject, t_i = job
            cg = control_group(subject, course_id, t_i, pools[course_id], k_per_course[course_id], cfg)
            if cg is None:
                return None, [], "no controls"
            members = [timelines[m] for m in cg.member_ids]
            family = ds.courses[course_id].family
            scores = score_participant(subject, members, course_id, t_i, h, family)
            return cg, scores, "" if scores else "fewer than 2 controls"

        groups: list[ControlGroup] = []
        scores: list[ParticipantScore] = []
        with ThreadPoolExecutor(max_workers=threads) as ex:
            for job, (cg, sc, reason) in zip(jobs, ex.map(score_job, jobs)):
                if cg is not None:
                    groups.append(cg)
                scores.extend(sc)
                if reason:
                    exclusions.append((job[1].citizen_id, job[0], reason))
        _write_csv(
            out / "control_groups.csv",
            ["subject_id", "course_id", "member_id", "distance", "flag"],
            [[g.subject_id, g.course_id, m, repr(d), g.flag]
             for g in groups for m, d in zip(g.member_ids, g.distances)],
        )
        _write_csv(
            out / "control_group_sizes.csv",
            ["subject_id", "course_id", "t_i", "initial_size", "capped_size", "k_used", "size", "flag"],
            [[g.subject_id, g.course_id, g.t_i, g.initial_size, g.capped_size, g.k_used, len(g.member_ids), g.flag]
             for g in groups],
        )
        outputs += ["control_groups.csv", "control_group_sizes.csv"]

        stage = "criteria"
        write_participant_scores(scores, out / "participant_scores.csv")
        pm = performance_matrix(scores, sorted(ds.courses), config.min_participants)
        for course_id, reason in pm.excluded.items():
            exclusions.append(("", course_id, reason))
        _write_csv(out / "exclusions.csv", ["citizen_id", "course_id", "reason"], exclusions)
        students = {c: len(course_takers.get(c, ())) for c in ds.courses}
        _write_csv(
            out / "course_performance.csv",
            ["course_id", "name", "family", "students", *[c.value for c in CRITERIA],
             *[f"n_{c.value}" for c in CRITERIA]],
            [[c, ds.courses[c].name, ds.courses[c].family, students[c],
              *(repr(float(v)) for v in pm.values[i]), *(int(n) for n in pm.counts[i])]
             for i, c in enumerate(pm.courses)],
        )
        outputs += ["participant_scores.csv", "exclusions.csv", "course_performance.csv"]
        if len(pm.courses) < 2:
            raise StageError("criteria", f"only {len(pm.courses)} course(s) scoreable; need 2 to rank")
        matrix = DecisionMatrix(
            tuple(pm.courses), tuple(c.value for c in CRITERIA), (COST,) * len(CRITERIA), pm.values
        )
        write_decision_matrix(matrix, out / "decision_matrix.csv")
        outputs.append("decision_matrix.csv")

        log.info("%d courses scoreable, %d excluded", len(pm.courses), len(pm.excluded))
        stage = "mcdm"
        ranking = rank(matrix, config.bounds(len(CRITERIA)))
        write_ranking(ranking, out / "ranking.csv")
        outputs.append("ranking.csv")

        stage = "report"
        outputs += write_reports(out)
    except StageError as exc:
        write_manifest(out, config, outputs, status="failed", failed_stage=exc.stage, message=str(exc))
        raise
    except Exception as exc:
        write_manifest(out, config, outputs, status="failed", failed_stage=stage, message=str(exc))
        raise StageError(stage, str(exc)) from exc

    manifest = write_manifest(
        out, config, outputs, status="complete",
        extra={
            "as_of": iso(as_of),
            "counts": ds.counts,
            "rejects": len(ds.rejects),
            "no_working_life": len(no_life),
            "k_per_course": k_per_course,
            "participants_scored": len({(s.citizen_id, s.course_id) for s in scores}),
        },
    )
    return RunResult(ranking, matrix, scores, groups, k_per_course, exclusions, manifest)


def write_manifest(out: Path, config: RunConfig, outputs: list[str], status: str,
                   failed_stage: str = "", message: str = "", extra: dict | None = None) -> dict:
    manifest = {
        "status": status,
        "version": __version__,
        "seed": config.seed,
        "config": config.to_dict(),
        "outputs": {name: sha256(out / name) for name in sorted(outputs) if (out / name).exists()},
    }
    if status != "complete":
        manifest["failed_stage"] = failed_stage
        manifest["message"] = message
        manifest["note"] = "outputs listed here are partial; later stages did not run"
    if extra:
        manifest.update(extra)
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return manifest


# --- reports ---------------------------------------------------------------

def quartile_participation(ranking: Ranking, students: Mapping[str, int]) -> list[list]:
    """Students per ranking quartile with percentages, plus a total row."""
    counts = {q: 0 for q in (1, 2, 3, 4)}
    for e in ranking.entries:
        counts[e.quartile] += students.get(e.label, 0)
    total = sum(counts.values())
    rows = []
    for q in (1, 2, 3, 4):
        pct = 100.0 * counts[q] / total if total else 0.0
        rows.append([f"Q{q}", counts[q], f"{pct:.4f}"])
    rows.append(["Total", total, f"{100.0 if total else 0.0:.4f}"])
    return rows


def family_quartiles(ranking: Ranking, families: Mapping[str, str]) -> list[list]:
    table: dict[str, list[int]] = {}
    for e in ranking.entries:
        fam = families.get(e.label, "")
        table.setdefault(fam, [0, 0, 0, 0])[e.quartile - 1] += 1
    return [[fam, *table[fam]] for fam in sorted(table)]


def pvalue_histogram(scores: list[ParticipantScore], bins: int = 20) -> list[list]:
    edges = np.linspace(0.0, 1.0, bins + 1)
    rows = []
    for crit in CRITERIA:
        p = np.array([s.p_value for s in scores if s.criterion is crit])
        counts, _ = np.histogram(p, bins=edges)
        for lo, hi, n in zip(edges[:-1], edges[1:], counts):
            rows.append([crit.value, f"{lo:.2f}", f"{hi:.2f}", int(n)])
    return rows


def write_reports(run_dir: str | Path) -> list[str]:
    """Students per quartile, per-family quartile counts and the p-value histogram."""
    run = Path(run_dir)
    ranking = read_ranking(run / "ranking.csv")
    with (run / "course_performance.csv").open(newline="", encoding="utf-8") as fh:
        perf = list(csv.DictReader(fh))
    students = {r["course_id"]: int(r["students"]) for r in perf}
    families = {r["course_id"]: r["family"] for r in perf}
    scores = read_participant_scores(run / "participant_scores.csv")
    _write_csv(run / "quartile_participation.csv", ["quartile", "students", "percent"],
               quartile_participation(ranking, students))
    _write_csv(run / "family_quartiles.csv", ["family", "Q1", "Q2", "Q3", "Q4"],
               family_quartiles(ranking, families))
    _write_csv(run / "pvalue_distribution.csv", ["criterion", "bin_lo", "bin_hi", "count"],
               pvalue_histogram(scores))
    return ["quartile_participation.csv", "family_quartiles.csv", "pvalue_distribution.csv"]
