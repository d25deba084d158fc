import json
import shutil
import subprocess
import sys

import pytest

from conftest import EXAMPLES, write_json
from forgebench.cli import EXIT_ENV, EXIT_FAIL, EXIT_OK, main


def run(*argv):
    return main([str(a) for a in argv])


def test_validate_ok_and_json(capsys, tmp_path, gemm_doc):
    path = write_json(tmp_path / "g.json", gemm_doc)
    assert run("validate", path) == EXIT_OK
    assert run("validate", path, "--json") == EXIT_OK
    out = capsys.readouterr().out
    doc = json.loads(out[out.index("{"):])
    assert doc == {"design": "identity_gemm", "ok": True, "diagnostics": []}


def test_validate_failures(capsys, tmp_path, gemm_doc):
    gemm_doc["interfaces"][1]["shape"] = [4, 2]
    assert run("validate", write_json(tmp_path / "bad.json", gemm_doc)) == EXIT_FAIL
    assert "calls[0].inputs" in capsys.readouterr().out
    gemm_doc["calls"][0]["inputs"] = ["A", "missing"]
    assert run("validate", write_json(tmp_path / "undeclared.json", gemm_doc)) == EXIT_ENV
    (tmp_path / "broken.json").write_text("{not json")
    assert run("validate", tmp_path / "broken.json") == EXIT_ENV
    assert run("validate", tmp_path / "absent.json") == EXIT_ENV
    gemm_doc["bogus"] = 1
    assert run("validate", write_json(tmp_path / "extra.json", gemm_doc)) == EXIT_ENV


def test_usage_error_exit_code():
    with pytest.raises(SystemExit) as info:
        main(["modularize"])
    assert info.value.code == EXIT_ENV


def test_generate(tmp_path, gemm_doc):
    path = write_json(tmp_path / "g.json", gemm_doc)
    assert run("generate", path, "--out", tmp_path / "out", "--with-testbench", "--seed", "3") == EXIT_OK
    root = tmp_path / "out" / "identity_gemm"
    assert (root / "tb" / "identity_gemm_tb.cpp").exists()
    vec = json.loads((root / "tb" / "vectors.json").read_text())
    assert set(vec["inputs"]) == {"A", "B"}
    gemm_doc["synth"] = {"data_type": "opaque:my_t"}
    for iface in gemm_doc["interfaces"]:
        iface["element"] = "opaque:my_t"
    opaque = write_json(tmp_path / "o.json", gemm_doc)
    assert run("generate", opaque, "--out", tmp_path / "o") == EXIT_OK
    assert run("generate", opaque, "--out", tmp_path / "o2", "--with-testbench") == EXIT_FAIL


def test_sweep_builtin_and_spec(capsys, tmp_path):
    spec = {"base": "gemm", "axes": [{"name": "dims", "values": [[4, 4, 4], [8, 4, 2]]},
                                     {"name": "loop_order", "values": ["ijk"]},
                                     {"name": "unroll", "values": [[1, 1, 1], [2, 2, 1]]},
                                     {"name": "assoc_order", "values": ["((xA)B)y"]}]}
    path = write_json(tmp_path / "spec.json", spec)
    assert run("sweep", path, "--out", tmp_path / "s", "--json") == EXIT_OK
    out = capsys.readouterr().out
    doc = json.loads(out[out.index("{"):])
    assert doc["count"] == 4
    manifest = json.loads((tmp_path / "s" / "spec" / "manifest.json").read_text())
    assert manifest["count"] == 4
    spec["base"] = "llm"
    spec["axes"] = [{"name": "heads", "values": [3]}]
    assert run("sweep", write_json(tmp_path / "bad.json", spec), "--out", tmp_path / "b") == EXIT_FAIL


def _programs(**dims):
    return {"programs": [{"id": k, "dims": v} for k, v in dims.items()]}


def test_modularize_pair(capsys, tmp_path):
    path = write_json(tmp_path / "pair.json", _programs(a=[4, 6, 2], b=[2, 3, 4]))
    assert run("modularize", path, "--policy", "min", "--out", tmp_path / "lo") == EXIT_OK
    out = capsys.readouterr().out
    assert "tile (2, 3, 2)" in out and "a: 4 iterations" in out and "b: 2 iterations" in out
    assert run("modularize", path, "--policy", "max", "--out", tmp_path / "hi") == EXIT_OK
    assert "tile (4, 6, 4)" in capsys.readouterr().out
    mixed = write_json(tmp_path / "mixed.json", _programs(a=[4, 6, 2], b=[2, 3]))
    assert run("modularize", mixed, "--out", tmp_path / "m") == EXIT_FAIL


def test_modularize(tmp_path):
    progs = _programs(p1=[96, 512, 128], p2=[128, 256, 64], p3=[256, 128, 192])
    path = write_json(tmp_path / "p.json", progs)
    assert run("modularize", path, "--policy", "min", "--out", tmp_path / "m") == EXIT_OK
    plan = json.loads((tmp_path / "m" / "plan.json").read_text())
    assert plan["tile"] == [32, 128, 64]
    assert run("modularize", path, "--policy", "max", "--out", tmp_path / "x") == EXIT_OK
    assert json.loads((tmp_path / "x" / "plan.json").read_text())["tile"] == [256, 512, 192]
    assert run("modularize", path, "--policy", "custom", "--out", tmp_path / "c") == EXIT_FAIL
    single = write_json(tmp_path / "one.json", _programs(p1=[4, 4, 4]))
    assert run("modularize", single, "--out", tmp_path / "o") == EXIT_FAIL


def test_modularize_kernels_emit_design(tmp_path):
    progs = {"programs": [
        {"id": "a", "kernel": "linear", "params": {"variant": "gemm", "m": 4, "k": 4, "n": 2}},
        {"id": "b", "kernel": "linear", "params": {"variant": "gemm", "m": 2, "k": 2, "n": 2}}]}
    path = write_json(tmp_path / "p.json", progs)
    assert run("modularize", path, "--out", tmp_path / "m") == EXIT_OK
    designs = [p for p in (tmp_path / "m").glob("*.json") if p.name != "plan.json"]
    assert len(designs) == 1
    assert run("validate", designs[0]) == EXIT_OK


def test_run_missing_vendor_tool(tmp_path, monkeypatch, gemm_doc):
    monkeypatch.setenv("FORGEBENCH_HLS_TOOL", "/nonexistent/hls")
    path = write_json(tmp_path / "g.json", gemm_doc)
    assert run("run", path, "--backend", "vendor", "--out", tmp_path / "r") == EXIT_ENV


def test_generate_run_report_pipeline(capsys, tmp_path):
    """The shipped example designs flow through every subcommand."""
    suite = tmp_path / "suite"
    suite.mkdir()
    for p in EXAMPLES.glob("*.json"):
        shutil.copy(p, suite / p.name)
        assert run("validate", p) == EXIT_OK
        assert run("generate", p, "--out", tmp_path / "gen", "--with-testbench") == EXIT_OK
    runcfg = write_json(tmp_path / "run.json", {"backend": "mock", "workers": 2,
                                                "fail_stages": {"vgg_block": "synth"}})
    assert run("run", suite, "--run-config", runcfg, "--out", tmp_path / "r") == EXIT_FAIL
    results = json.loads((tmp_path / "r" / "run_results.json").read_text())
    assert results["count"] == 4 and results["passed"] == 3
    modular = write_json(tmp_path / "mod.json", {"rows": [
        {"case": "pair", "parts": [[10, 20], [5, 5]], "shared": [3, 5], "after": [7.5, 12.5]}]})
    assert run("report", tmp_path / "r", "--modular", modular, "--out", tmp_path / "rep") == EXIT_OK
    assert run("report", tmp_path / "r", "--device", tmp_path / "nodev.json", "--out", tmp_path / "x") == EXIT_ENV
    csv_text = (tmp_path / "rep" / "summary.csv").read_text()
    assert csv_text.count("\n") == 5
    assert "vgg_block,fail" in csv_text
    table = (tmp_path / "rep" / "modular_table.md").read_text()
    assert "(15.00, 25.00)" in table and "(-50.00, -50.00)" in table


def test_console_script_entry(tmp_path, gemm_doc):
    path = write_json(tmp_path / "g.json", gemm_doc)
    proc = subprocess.run([sys.executable, "-m", "forgebench.cli", "validate", str(path)],
                          capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
