import io
import json

import pytest

from perfxplain.logmodel import (
    ExecutionLog, ExecutionRecord, FeatureSchema, LogError,
    load_log, read_log, save_log, validate_log, write_log,
)
from perfxplain.pairs import build_pair
from perfxplain.pxql import AtomicPredicate, Clause, eval_clause

CSV = """id,numinstances,pigscript,iosortfactor,duration
j1,4,simple-filter.pig,10,100
j2,4,simple-groupby.pig,50,300.5
j3,8,simple-filter.pig,,104
"""


def write_files(tmp_path, schema, csv_text, level="job"):
    sp, lp = tmp_path / "schema.json", tmp_path / "log.csv"
    sp.write_text(json.dumps({"level": level, "features": [f.to_dict() for f in schema]}))
    lp.write_text(csv_text)
    return sp, lp


def test_load_well_formed(tmp_path, small_schema):
    log = load_log(*write_files(tmp_path, small_schema, CSV))
    assert [r.id for r in log.records] == ["j1", "j2", "j3"]
    assert log.record("j2").duration == 300.5
    assert log.record("j1").values["pigscript"] == "simple-filter.pig"
    assert validate_log(log) == []


def test_domain_violation_names_row_and_feature(tmp_path, small_schema):
    bad = CSV.replace("j2,4,simple-groupby.pig", "j2,4,join.pig")
    with pytest.raises(LogError) as info:
        load_log(*write_files(tmp_path, small_schema, bad))
    assert "row 3" in str(info.value) and "pigscript" in str(info.value)


def test_empty_cell_is_missing_and_stays_missing_downstream(tmp_path, small_schema):
    log = load_log(*write_files(tmp_path, small_schema, CSV))
    j3 = log.record("j3")
    assert j3.values["iosortfactor"] is None
    pair = build_pair(log.record("j1"), j3, log.schema)
    assert pair.derived["iosortfactor_isSame"] is None
    assert pair.derived["iosortfactor_compare"] is None
    assert pair.derived["iosortfactor"] is None
    assert not eval_clause(Clause((AtomicPredicate("iosortfactor_isSame", "!=", "T"),)), pair)


@pytest.mark.parametrize("mutate, fragment", [
    (lambda s: s.replace("j3,8", "j1,8"), "duplicate id"),
    (lambda s: s.replace(",104\n", ",\n"), "missing duration"),
    (lambda s: s.replace("numinstances", "nodes", 1), "unknown feature"),
    (lambda s: s.replace("j2,4,", "j2,four,"), "not a number"),
    (lambda s: s.replace("j1,4,simple-filter.pig,10,100", "j1,4,simple-filter.pig,10"), "expected 5 cells"),
])
def test_rejections(tmp_path, small_schema, mutate, fragment):
    with pytest.raises(LogError) as info:
        load_log(*write_files(tmp_path, small_schema, mutate(CSV)))
    assert fragment in str(info.value)


def test_malformed_schema(tmp_path):
    sp = tmp_path / "s.json"
    sp.write_text("{not json")
    lp = tmp_path / "l.csv"
    lp.write_text(CSV)
    with pytest.raises(LogError):
        load_log(sp, lp)
    sp.write_text(json.dumps({"features": [{"name": "x", "kind": "numeric"}]}))
    with pytest.raises(LogError, match="outcome"):
        load_log(sp, lp)


def test_schema_requires_unique_names():
    doc = [FeatureSchema("x", "numeric"), FeatureSchema("x", "numeric"),
           FeatureSchema("duration", "numeric", role="outcome")]
    log = ExecutionLog(tuple(doc), ())
    assert any("declared twice" in d for d in validate_log(log))


def test_validate_reports_duplicates_and_orphan_tasks(small_schema):
    r = {"numinstances": 1.0, "pigscript": "simple-filter.pig", "iosortfactor": 1.0, "duration": 5.0}
    dup = ExecutionLog(small_schema, (ExecutionRecord("a", r), ExecutionRecord("a", r)))
    assert len(validate_log(dup)) == 1
    tasks = ExecutionLog(small_schema, (ExecutionRecord("t1", r, "j1"), ExecutionRecord("t2", r)), "task")
    diags = validate_log(tasks)
    assert len(diags) == 1 and "t2" in diags[0]


def test_task_rows_need_parent(tmp_path, small_schema):
    text = CSV.replace("id,", "id,parent_job_id,").replace("j1,", "j1,p,").replace(
        "j2,", "j2,p,").replace("j3,", "j3,,")
    with pytest.raises(LogError, match="row 4"):
        load_log(*write_files(tmp_path, small_schema, text, level="task"))


def test_round_trip_is_bit_exact(tmp_path, planted_log):
    save_log(planted_log, tmp_path / "s.json", tmp_path / "l.csv")
    again = load_log(tmp_path / "s.json", tmp_path / "l.csv")
    assert again.schema == planted_log.schema
    assert again.records == planted_log.records
    assert validate_log(again) == []


def test_write_read_stream(small_log):
    buf = io.StringIO()
    write_log(small_log, buf)
    buf.seek(0)
    again = read_log(buf, small_log.schema)
    assert again.records == small_log.records
