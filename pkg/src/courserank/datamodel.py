"""Administrative records, CSV ingestion and contract end-date imputation.

Dates are held as integer day counts since 1970-01-01 (see ``to_day`` /
``from_day``); only the imputation rule needs real calendar arithmetic.
"""
from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field
from datetime import date, timedelta
from enum import Enum, IntEnum
from pathlib import Path
from typing import Iterable

EPOCH = date(1970, 1, 1)


def to_day(value: date | str) -> int:
    if isinstance(value, str):
        value = date.fromisoformat(value.strip())
    return (value - EPOCH).days


def from_day(day: int) -> date:
    return EPOCH + timedelta(days=int(day))


def iso(day: int | None) -> str:
    return "" if day is None else from_day(day).isoformat()


class Gender(str, Enum):
    F = "F"
    M = "M"


class StudyType(str, Enum):
    COMPULSORY = "compulsory"
    VOCATIONAL = "vocational"
    UNIVERSITY = "university"
    TRAINING_COURSE = "training_course"


class EducationLevel(IntEnum):
    NONE = 0
    COMPULSORY = 1
    VOCATIONAL = 2
    UNIVERSITY = 3


STUDY_LEVEL = {
    StudyType.COMPULSORY: EducationLevel.COMPULSORY,
    StudyType.VOCATIONAL: EducationLevel.VOCATIONAL,
    StudyType.UNIVERSITY: EducationLevel.UNIVERSITY,
}


class Typology(str, Enum):
    TEMPORARY = "temporary"
    PERMANENT = "permanent"


PROFESSIONAL_FAMILIES: dict[str, str] = {
    "ADM": "Administration and Management",
    "ALA": "Agricultural and Livestock Activities",
    "ART": "Arts and arts craft",
    "BCW": "Building and Civil Works",
    "CHE": "Chemistry",
    "COM": "Commerce and Marketing",
    "CSS": "Community Sociocultural Services",
    "ELE": "Electricity and Electronics",
    "ENW": "Energy and Water",
    "FOI": "Food Industries",
    "GRA": "Graphic Arts",
    "HEA": "Health",
    "HOT": "Hostel and Tourism",
    "IMA": "Installations and Maintenance",
    "IMS": "Image and Sound",
    "ITC": "IT and Communications",
    "MEM": "Mechanical Manufacturing",
    "PIM": "Personal Image",
    "PSA": "Physical and Sports Activities",
    "TCL": "Textile, Clothing and Leather",
    "VTM": "Vehicle Transport and Maintenance",
    "WFC": "Wood Furniture and Cork",
}


@dataclass(frozen=True)
class ProfessionalFamily:
    code: str
    description: str

    @classmethod
    def from_code(cls, code: str) -> "ProfessionalFamily":
        code = code.strip().upper()
        if code not in PROFESSIONAL_FAMILIES:
            raise ValueError(f"unknown professional family {code!r}")
        return cls(code, PROFESSIONAL_FAMILIES[code])


@dataclass(frozen=True)
class CitizenRecord:
    citizen_id: str
    gender: Gender
    birth_date: int


@dataclass(frozen=True)
class StudyRecord:
    citizen_id: str
    study_type: StudyType
    degree: str
    end_date: int


@dataclass(frozen=True)
class ContractRecord:
    citizen_id: str
    start_date: int
    end_date: int | None
    typology: Typology
    pf_code: str | None
    cno_code: str = ""
    cnae_code: str = ""
    locality_code: str = ""
    sector: str = ""
    economic_section: str = ""


@dataclass(frozen=True)
class Enrollment:
    citizen_id: str
    course_id: str
    completion_date: int


@dataclass(frozen=True)
class Course:
    course_id: str
    name: str
    family: str


@dataclass(frozen=True)
class Reject:
    dataset: str
    row: int
    reason: str


class IngestError(Exception):
    """Fatal ingestion failure (missing file, unknown column)."""


# Column names per dataset; the second set is what must be present.
STUDY_COLUMNS = {"citizenId", "endDate", "studyType", "degree"}
CITIZEN_COLUMNS = {"citizenId", "gender", "birthDate", "age", "numberOfStudies", "daysOfWork"}
CITIZEN_REQUIRED = {"citizenId", "gender", "birthDate"}
CONTRACT_COLUMNS = {
    "citizenId", "endDate", "typeCode", "description", "startDate", "typology",
    "cnoCode", "cnoDesc", "cnaeCode", "cnaeDesc", "economicSection", "sector",
    "localityCode", "pfCode",
}
CONTRACT_REQUIRED = {"citizenId", "endDate", "startDate", "typology", "pfCode"}
CATALOG_COLUMNS = {"course_id", "name", "family"}


@dataclass
class Datasets:
    """Validated collection of all ingested records."""

    citizens: dict[str, CitizenRecord] = field(default_factory=dict)
    studies: list[StudyRecord] = field(default_factory=list)
    contracts: list[ContractRecord] = field(default_factory=list)
    enrollments: list[Enrollment] = field(default_factory=list)
    courses: dict[str, Course] = field(default_factory=dict)
    participants: set[str] = field(default_factory=set)
    rejects: list[Reject] = field(default_factory=list)
    counts: dict[str, dict[str, int]] = field(default_factory=dict)
    # DS3 aggregates as declared in the file, checked against recomputation
    declared_studies: dict[str, int] = field(default_factory=dict)
    declared_days_of_work: dict[str, int] = field(default_factory=dict)

    def studies_by_citizen(self) -> dict[str, list[StudyRecord]]:
        out: dict[str, list[StudyRecord]] = {cid: [] for cid in self.citizens}
        for s in self.studies:
            out[s.citizen_id].append(s)
        return out

    def contracts_by_citizen(self) -> dict[str, list[ContractRecord]]:
        out: dict[str, list[ContractRecord]] = {cid: [] for cid in self.citizens}
        for c in self.contracts:
            out[c.citizen_id].append(c)
        return out

    def canonical(self) -> str:
        """Stable JSON-lines serialization used to compare ingestion runs."""
        lines = []
        for cid in sorted(self.citizens):
            lines.append(["citizen", asdict(self.citizens[cid])])
        for kind, rows in (
            ("study", self.studies),
            ("contract", self.contracts),
            ("enrollment", self.enrollments),
        ):
            for rec in rows:
                lines.append([kind, asdict(rec)])
        for course_id in sorted(self.courses):
            lines.append(["course", asdict(self.courses[course_id])])
        for rej in self.rejects:
            lines.append(["reject", asdict(rej)])
        return "\n".join(json.dumps(x, sort_keys=True, default=str) for x in lines) + "\n"


def _read_csv(path: Path, allowed: set[str], required: set[str], name: str) -> list[dict[str, str]]:
    if not path.is_file():
        raise IngestError(f"{name}: missing file {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames
        if not header:
            raise IngestError(f"{name}: empty file or missing header row")
        unknown = [c for c in header if c not in allowed]
        if unknown:
            raise IngestError(f"{name}: unknown column(s) {', '.join(unknown)}")
        missing = sorted(required - set(header))
        if missing:
            raise IngestError(f"{name}: missing column(s) {', '.join(missing)}")
        return list(reader)


def _parse_study_type(raw: str) -> StudyType:
    return StudyType(raw.strip().lower().replace(" ", "_"))


def _resolve_course(token: str, catalog: dict[str, Course]) -> Course | None:
    token = token.strip()
    if token in catalog:
        return catalog[token]
    for course in catalog.values():
        if course.name == token:
            return course
    return None


def ingest_datasets(
    ds1_path: str | Path,
    ds2_path: str | Path,
    ds3_path: str | Path,
    ds4_path: str | Path,
    catalog_path: str | Path | None = None,
) -> Datasets:
    """Parse and validate the four administrative datasets plus the course catalog.

    DS1/DS2 hold one row per study of non-participants/participants, DS3 one
    row per citizen, DS4 one row per contract. Training-course rows of DS2 name
    the course (by id or catalog name) in ``degree`` and become enrollments.
    Rows failing validation go to ``Datasets.rejects`` with a reason.
    """
    ds = Datasets()
    catalog_rows = []
    if catalog_path is not None:
        catalog_rows = _read_csv(Path(catalog_path), CATALOG_COLUMNS, CATALOG_COLUMNS, "catalog")
    ds1 = _read_csv(Path(ds1_path), STUDY_COLUMNS, STUDY_COLUMNS, "DS1")
    ds2 = _read_csv(Path(ds2_path), STUDY_COLUMNS, STUDY_COLUMNS, "DS2")
    ds3 = _read_csv(Path(ds3_path), CITIZEN_COLUMNS, CITIZEN_REQUIRED, "DS3")
    ds4 = _read_csv(Path(ds4_path), CONTRACT_COLUMNS, CONTRACT_REQUIRED, "DS4")

    def reject(dataset: str, row: int, reason: str) -> None:
        ds.rejects.append(Reject(dataset, row, reason))

    # row numbers are 1-based data rows (header excluded)
    for n, row in enumerate(catalog_rows, 1):
        try:
            family = ProfessionalFamily.from_code(row["family"]).code
        except ValueError:
            reject("catalog", n, "unknown professional family")
            continue
        cid = row["course_id"].strip()
        if not cid or cid in ds.courses:
            reject("catalog", n, "duplicate or empty course_id")
            continue
        ds.courses[cid] = Course(cid, row["name"].strip(), family)

    for n, row in enumerate(ds3, 1):
        cid = row["citizenId"].strip()
        if not cid:
            reject("DS3", n, "empty citizenId")
            continue
        if cid in ds.citizens:
            reject("DS3", n, "duplicate citizenId")
            continue
        try:
            gender = Gender(row["gender"].strip().upper())
        except ValueError:
            reject("DS3", n, "bad gender")
            continue
        try:
            birth = to_day(row["birthDate"])
        except ValueError:
            reject("DS3", n, "bad date")
            continue
        ds.citizens[cid] = CitizenRecord(cid, gender, birth)
        if row.get("numberOfStudies", "").strip():
            ds.declared_studies[cid] = int(float(row["numberOfStudies"]))
        if row.get("daysOfWork", "").strip():
            ds.declared_days_of_work[cid] = int(float(row["daysOfWork"]))

    for name, rows in (("DS1", ds1), ("DS2", ds2)):
        for n, row in enumerate(rows, 1):
            cid = row["citizenId"].strip()
            citizen = ds.citizens.get(cid)
            if citizen is None:
                reject(name, n, "unknown citizen")
                continue
            try:
                stype = _parse_study_type(row["studyType"])
            except ValueError:
                reject(name, n, "bad studyType")
                continue
            try:
                end = to_day(row["endDate"])
            except ValueError:
                reject(name, n, "bad date")
                continue
            if end <= citizen.birth_date:
                reject(name, n, "date before birth")
                continue
            if stype is StudyType.TRAINING_COURSE:
                if name == "DS1":
                    reject(name, n, "training course in DS1")
                    continue
                course = _resolve_course(row["degree"], ds.courses)
                if course is None:
                    reject(name, n, "unknown course")
                    continue
                ds.enrollments.append(Enrollment(cid, course.course_id, end))
                ds.participants.add(cid)
            ds.studies.append(StudyRecord(cid, stype, row["degree"].strip(), end))

    for n, row in enumerate(ds4, 1):
        cid = row["citizenId"].strip()
        citizen = ds.citizens.get(cid)
        if citizen is None:
            reject("DS4", n, "unknown citizen")
            continue
        try:
            start = to_day(row["startDate"])
            end = to_day(row["endDate"]) if row["endDate"].strip() else None
        except ValueError:
            reject("DS4", n, "bad date")
            continue
        if end is not None and end < start:
            reject("DS4", n, "date order")
            continue
        if start <= citizen.birth_date:
            reject("DS4", n, "date before birth")
            continue
        try:
            typology = Typology(row["typology"].strip().lower())
        except ValueError:
            reject("DS4", n, "bad typology")
            continue
        pf = row["pfCode"].strip()
        if pf:
            try:
                pf = ProfessionalFamily.from_code(pf).code
            except ValueError:
                reject("DS4", n, "unknown professional family")
                continue
        ds.contracts.append(
            ContractRecord(
                cid, start, end, typology, pf or None,
                cno_code=row.get("cnoCode", "").strip(),
                cnae_code=row.get("cnaeCode", "").strip(),
                locality_code=row.get("localityCode", "").strip(),
                sector=row.get("sector", "").strip(),
                economic_section=row.get("economicSection", "").strip(),
            )
        )

    rejected: dict[str, int] = {}
    for r in ds.rejects:
        rejected[r.dataset] = rejected.get(r.dataset, 0) + 1
    ds.counts = {
        "catalog": {"rows": len(catalog_rows), "accepted": len(ds.courses)},
        "DS1": {"rows": len(ds1), "accepted": len(ds1) - rejected.get("DS1", 0)},
        "DS2": {"rows": len(ds2), "accepted": len(ds2) - rejected.get("DS2", 0)},
        "DS3": {"rows": len(ds3), "accepted": len(ds.citizens)},
        "DS4": {"rows": len(ds4), "accepted": len(ds.contracts)},
    }
    return ds


def write_rejects(rejects: Iterable[Reject], path: str | Path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["dataset", "row", "reason"])
        for r in rejects:
            w.writerow([r.dataset, r.row, r.reason])


# --- imputation -----------------------------------------------------------

def adjusted_end_date(start: int) -> int:
    """Midpoint of the quarter following the contract's start quarter."""
    d = from_day(start)
    if d.month <= 3:
        target = date(d.year, 5, 15)
    elif d.month <= 6:
        target = date(d.year, 8, 15)
    elif d.month <= 9:
        target = date(d.year, 11, 15)
    else:
        target = date(d.year + 1, 2, 14)
    return to_day(target)


def impute_end_date(contract: ContractRecord, next_start: int | None) -> int:
    if contract.end_date is not None:
        return contract.end_date
    adjusted = adjusted_end_date(contract.start_date)
    if next_start is None:
        return adjusted
    return min(adjusted, next_start)


def resolve_contracts(contracts: list[ContractRecord]) -> list[tuple[ContractRecord, int]]:
    """Pair each of one citizen's contracts with its (possibly imputed) end date.

    The "next contract" for imputation is the earliest one starting strictly
    later.
    """
    ordered = sorted(contracts, key=lambda c: (c.start_date, c.end_date is None, c.end_date or 0))
    starts = sorted({c.start_date for c in ordered})
    out = []
    for c in ordered:
        nxt = next((s for s in starts if s > c.start_date), None)
        out.append((c, impute_end_date(c, nxt)))
    return out


# --- education ------------------------------------------------------------

def education_level_at(studies: Iterable[StudyRecord], t: int) -> EducationLevel:
    level = EducationLevel.NONE
    for s in studies:
        lvl = STUDY_LEVEL.get(s.study_type)
        if lvl is not None and s.end_date <= t and lvl > level:
            level = lvl
    return level


def age_at(birth: int, t: int) -> int:
    """Whole years completed at day ``t`` (birthday-based)."""
    b, d = from_day(birth), from_day(t)
    years = d.year - b.year
    if (d.month, d.day) < (b.month, b.day):
        years -= 1
    return years
