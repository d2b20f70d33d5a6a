from datetime import date, timedelta

import pytest
from hypothesis import given, strategies as st

from courserank.datamodel import (
    ContractRecord,
    EducationLevel,
    IngestError,
    StudyRecord,
    StudyType,
    Typology,
    adjusted_end_date,
    age_at,
    education_level_at,
    from_day,
    impute_end_date,
    ingest_datasets,
    iso,
    resolve_contracts,
    to_day,
)


def contract(start: str, end: str | None = None) -> ContractRecord:
    return ContractRecord("x", to_day(start), to_day(end) if end else None, Typology.TEMPORARY, "ADM")


@given(st.dates(min_value=date(1900, 1, 1), max_value=date(2100, 12, 31)))
def test_day_roundtrip(d):
    assert from_day(to_day(d)) == d
    assert iso(to_day(d)) == d.isoformat()


def test_imputation_uses_next_start_when_earlier():
    assert impute_end_date(contract("2019-02-01"), to_day("2019-03-10")) == to_day("2019-03-10")
    assert impute_end_date(contract("2019-02-01"), to_day("2019-09-01")) == to_day("2019-05-15")
    assert impute_end_date(contract("2019-02-01"), None) == to_day("2019-05-15")


def test_recorded_end_is_kept():
    assert impute_end_date(contract("2019-02-01", "2019-02-03"), None) == to_day("2019-02-03")


def test_resolve_contracts_next_start_is_strictly_later():
    cs = [contract("2019-02-01"), contract("2019-02-01", "2019-02-10"), contract("2019-04-01")]
    ends = {(c.start_date, c.end_date): e for c, e in resolve_contracts(cs)}
    assert ends[(to_day("2019-02-01"), None)] == to_day("2019-04-01")
    assert ends[(to_day("2019-04-01"), None)] == to_day("2019-08-15")


@given(st.dates(min_value=date(1950, 1, 1), max_value=date(2090, 12, 31)))
def test_adjusted_date_lies_in_following_quarter(d):
    adj = from_day(adjusted_end_date(to_day(d)))
    quarter = (d.month - 1) // 3
    assert ((adj.year - d.year) * 4 + (adj.month - 1) // 3) == quarter + 1
    assert adj > d


def test_age_is_birthday_based():
    birth = to_day("2000-03-15")
    assert age_at(birth, to_day("2020-03-14")) == 19
    assert age_at(birth, to_day("2020-03-15")) == 20
    leap = to_day("2000-02-29")
    assert age_at(leap, to_day("2001-02-28")) == 0
    assert age_at(leap, to_day("2001-03-01")) == 1


def test_education_level_counts_only_finished_regulated_studies():
    studies = [
        StudyRecord("x", StudyType.COMPULSORY, "ESO", to_day("2010-06-30")),
        StudyRecord("x", StudyType.UNIVERSITY, "BSc", to_day("2015-06-30")),
        StudyRecord("x", StudyType.TRAINING_COURSE, "C1", to_day("2012-01-01")),
    ]
    assert education_level_at(studies, to_day("2009-01-01")) is EducationLevel.NONE
    assert education_level_at(studies, to_day("2012-06-30")) is EducationLevel.COMPULSORY
    assert education_level_at(studies, to_day("2015-06-30")) is EducationLevel.UNIVERSITY


def write(path, text):
    path.write_text(text.strip() + "\n", encoding="utf-8")
    return path


@pytest.fixture
def files(tmp_path):
    write(tmp_path / "courses.csv", """
course_id,name,family
C1,Corporate financing,ADM
C2,Waiting tables,HOT
""")
    write(tmp_path / "ds3.csv", """
citizenId,gender,birthDate
a,F,1990-01-01
b,M,1985-05-05
a,F,1990-01-01
c,X,1980-01-01
""")
    write(tmp_path / "ds1.csv", """
citizenId,endDate,studyType,degree
b,2001-06-30,compulsory,ESO
zz,2001-06-30,compulsory,ESO
b,2001-13-30,compulsory,ESO
b,2001-06-30,phd,X
b,2010-01-01,training course,C1
""")
    write(tmp_path / "ds2.csv", """
citizenId,endDate,studyType,degree
a,2006-06-30,Compulsory,ESO
a,2015-03-01,training course,C1
a,2016-03-01,training course,Waiting tables
a,2017-03-01,training course,C9
a,1980-01-01,compulsory,ESO
""")
    write(tmp_path / "ds4.csv", """
citizenId,startDate,endDate,typology,pfCode
a,2008-01-01,,temporary,ADM
a,2009-01-01,2008-01-01,temporary,ADM
a,2009-01-01,2009-06-01,fixed,ADM
a,2009-01-01,2009-06-01,permanent,ZZZ
b,2003-01-01,2004-01-01,Permanent,
""")
    return tmp_path


def ingest(d):
    return ingest_datasets(d / "ds1.csv", d / "ds2.csv", d / "ds3.csv", d / "ds4.csv", d / "courses.csv")


def test_ingest_rejects_bad_rows_with_reasons(files):
    ds = ingest(files)
    reasons = sorted((r.dataset, r.row, r.reason) for r in ds.rejects)
    assert reasons == [
        ("DS1", 2, "unknown citizen"),
        ("DS1", 3, "bad date"),
        ("DS1", 4, "bad studyType"),
        ("DS1", 5, "training course in DS1"),
        ("DS2", 4, "unknown course"),
        ("DS2", 5, "date before birth"),
        ("DS3", 3, "duplicate citizenId"),
        ("DS3", 4, "bad gender"),
        ("DS4", 2, "date order"),
        ("DS4", 3, "bad typology"),
        ("DS4", 4, "unknown professional family"),
    ]
    assert sorted(ds.citizens) == ["a", "b"]
    assert [(e.citizen_id, e.course_id) for e in ds.enrollments] == [("a", "C1"), ("a", "C2")]
    assert ds.participants == {"a"}
    assert len(ds.contracts) == 2
    assert ds.contracts[0].end_date is None
    assert ds.contracts[1].typology is Typology.PERMANENT and ds.contracts[1].pf_code is None


def test_ingest_is_deterministic(files):
    assert ingest(files).canonical() == ingest(files).canonical()


def test_unknown_column_is_fatal(files):
    write(files / "ds1.csv", "citizenId,endDate,studyType,degree,extra\nb,2001-06-30,compulsory,ESO,1")
    with pytest.raises(IngestError, match="unknown column"):
        ingest(files)


def test_missing_required_column_is_fatal(files):
    write(files / "ds4.csv", "citizenId,startDate,endDate,typology\na,2008-01-01,,temporary")
    with pytest.raises(IngestError, match="missing column"):
        ingest(files)


def test_missing_file_is_fatal(files):
    (files / "ds3.csv").unlink()
    with pytest.raises(IngestError, match="missing file"):
        ingest(files)


def test_day_helpers_agree_with_timedelta():
    assert to_day("1970-01-02") - to_day("1970-01-01") == 1
    assert from_day(to_day("2020-02-28") + 1) == date(2020, 2, 28) + timedelta(days=1)
