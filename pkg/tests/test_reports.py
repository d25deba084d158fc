import json

import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import FIXTURES
from forgebench.errors import FormatError
from forgebench.reports import (DeviceCapacity, PPAReport, UtilPercent, aggregate_suite, builtin_device,
                                change_percent, format_change, load_device, load_reference_rows,
                                modularization_summary, parse_report, parse_report_file,
                                render_csynth_xml, render_impl_util, render_table_md, suite_csv,
                                suite_json, sum_totals, to_percent)

ZCU = builtin_device("zcu102")


def test_builtin_device():
    assert (ZCU.lut, ZCU.ff, ZCU.dsp, ZCU.bram) == (274080, 548160, 2520, 1824)
    with pytest.raises(FileNotFoundError):
        builtin_device("vu9p")


def test_load_device(tmp_path):
    p = tmp_path / "d.json"
    p.write_text(json.dumps({"part": "x", "lut": 100, "ff": 200, "dsp": 10, "bram_18k": 4}))
    assert load_device(p) == DeviceCapacity("x", 100, 200, 10, 4)
    p.write_text(json.dumps({"part": "x", "lut": 100}))
    with pytest.raises(FormatError):
        load_device(p)
    with pytest.raises(FileNotFoundError):
        load_device(tmp_path / "missing.json")


def test_csynth_fixture_frozen():
    r = parse_report_file(FIXTURES / "csynth_sample.xml")
    assert (r.design, r.stage, r.lut, r.ff, r.dsp, r.bram) == ("gemm_identity", "synth", 1234, 2210, 15, 4)
    assert r.latency_cycles == 4521 and r.clock_ns == pytest.approx(7.3)


def test_impl_fixture_frozen():
    r = parse_report_file(FIXTURES / "impl_util_sample.rpt")
    assert (r.stage, r.lut, r.ff, r.dsp, r.bram) == ("impl", 1102, 1987, 15, 3)


def test_truncated_reports_rejected():
    xml = (FIXTURES / "csynth_sample.xml").read_text()
    with pytest.raises(FormatError):
        parse_report(xml[: len(xml) // 2], "csynth_xml")
    with pytest.raises(FormatError, match="LUT"):
        parse_report(xml.replace("<LUT>", "<LUTX>").replace("</LUT>", "</LUTX>"), "csynth_xml")
    rpt = (FIXTURES / "impl_util_sample.rpt").read_text()
    with pytest.raises(FormatError):
        parse_report(rpt[:200], "impl_util")
    with pytest.raises(ValueError, match="unknown report format"):
        parse_report(rpt, "vcd")


def test_undef_latency():
    xml = render_csynth_xml(PPAReport("d", "synth", 1, 2, 3, 4, None, 5.0))
    assert parse_report(xml, "csynth_xml").latency_cycles is None


reports = st.builds(PPAReport, design=st.from_regex(r"[a-z][a-z0-9_]{0,10}", fullmatch=True),
                    stage=st.just("synth"), lut=st.integers(0, 10**6), ff=st.integers(0, 10**6),
                    dsp=st.integers(0, 5000), bram=st.integers(0, 4000),
                    latency_cycles=st.one_of(st.none(), st.integers(0, 10**9)),
                    clock_ns=st.one_of(st.none(), st.floats(0.5, 20).map(lambda x: round(x, 3))))


@given(reports)
def test_csynth_round_trip(r):
    assert parse_report(render_csynth_xml(r), "csynth_xml") == r


@given(reports)
def test_impl_round_trip(r):
    impl = PPAReport(r.design, "impl", r.lut, r.ff, r.dsp, r.bram)
    assert parse_report(render_impl_util(impl, ZCU), "impl_util") == impl


def test_percent_and_change():
    u = to_percent(PPAReport("d", "synth", lut=27408, ff=0, dsp=252, bram=0), ZCU)
    assert u.lut_pct == pytest.approx(10.0) and u.dsp_pct == pytest.approx(10.0)
    assert change_percent(UtilPercent(36.6, 40.64), UtilPercent(8.57, 0.63)) == pytest.approx((-76.585, -98.4498), abs=1e-3)
    assert change_percent(UtilPercent(0, 5), UtilPercent(1, 5)) == (None, 0.0)
    assert format_change((None, -50.0)) == "(undef, -50.00)"
    assert tuple(sum_totals([UtilPercent(1, 2), UtilPercent(3, 4.5)])) == (4, 6.5)
    assert UtilPercent(1.234, 5).display() == "(1.23, 5.00)"


@given(st.floats(0.01, 100), st.floats(0.01, 100))
def test_change_identity(a, b):
    same = change_percent(UtilPercent(a, b), UtilPercent(a, b))
    assert same == (0.0, 0.0)
    half = change_percent(UtilPercent(a, b), UtilPercent(a / 2, b / 2))
    assert half == pytest.approx((-50.0, -50.0))


def test_suite_tables():
    good = PPAReport("a", "synth", 100, 150, 3, 1, 40, 6.5)
    rows = aggregate_suite([("b", None, "timeout"), ("a", good), ("c", None)], ZCU)
    assert [r.design for r in rows] == ["a", "b", "c"]
    assert [r.status for r in rows] == ["pass", "timeout", "fail"]
    text = suite_csv(rows)
    lines = text.split("\r\n")
    assert lines[0].startswith("design,status,lut")
    assert lines[2] == "b,timeout,,,,,,,,"
    doc = json.loads(suite_json(rows))
    assert doc[0]["report"]["lut"] == 100 and doc[1]["report"] is None


def test_reference_rows_loaded():
    rows = load_reference_rows()
    assert len(rows) == 13
    assert {r["suite"] for r in rows} == {"GEMM", "DNN", "LLM"}
    flagged = [r["case"] for r in rows if r.get("excluded")]
    assert flagged == ["Tiled Attention"]


def test_modularization_summary_from_counts():
    before = [PPAReport("p1", "impl", 27408, 0, 252, 0), PPAReport("p2", "impl", 27408, 0, 0, 0)]
    row = modularization_summary(before, UtilPercent(5, 5), PPAReport("m", "impl", 27408, 0, 126, 0), ZCU,
                                 case="pair")
    assert tuple(row.total) == pytest.approx((20.0, 10.0))
    assert row.change == pytest.approx((-50.0, -50.0))
    md = render_table_md([row])
    assert "| pair | (10.00, 10.00) | (10.00, 0.00) | (20.00, 10.00) |" in md
    with pytest.raises(ValueError):
        modularization_summary(before, UtilPercent(1, 1), before[0])


@given(reports, st.integers(1, 10**6), st.integers(1, 10**4))
def test_doubling_capacity_halves_percent(r, lut, dsp):
    cap = DeviceCapacity("d", lut, 1, dsp, 1)
    big = DeviceCapacity("d", 2 * lut, 2, 2 * dsp, 2)
    a, b = to_percent(r, cap), to_percent(r, big)
    assert (b.lut_pct * 2, b.dsp_pct * 2) == (a.lut_pct, a.dsp_pct)
