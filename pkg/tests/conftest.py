import json
import shutil
from pathlib import Path

import pytest
from hypothesis import settings

from forgebench.config import (DesignConfig, InterfaceDecl, MemoryDecl, ModuleCall, SynthSettings,
                               design_from_dict)
from forgebench.kernels.specs import ActSpec, LinearSpec

settings.register_profile("forgebench", max_examples=100, deadline=None, derandomize=True)
settings.load_profile("forgebench")

PKG_DATA = Path(__file__).resolve().parents[1] / "src" / "forgebench" / "data"
EXAMPLES = PKG_DATA / "examples"
FIXTURES = PKG_DATA / "fixtures"

needs_cxx = pytest.mark.skipif(shutil.which("g++") is None and shutil.which("clang++") is None,
                               reason="no C++ compiler")


def gemm_design(m=4, k=6, n=2, name="gemm_t", loop_order="ijk", unroll=(1, 1, 1), bias=False,
                act=None) -> DesignConfig:
    spec = LinearSpec(variant="gemm", m=m, k=k, n=n, bias=bias, loop_order=loop_order, unroll=unroll)
    ifaces = [InterfaceDecl("A", "in", (m, k)), InterfaceDecl("B", "in", (k, n))]
    ins = ["A", "B"]
    if bias:
        ifaces.append(InterfaceDecl("bias", "in", (n,)))
        ins.append("bias")
    ifaces.append(InterfaceDecl("C", "out", (m, n)))
    calls = []
    memories = ()
    if act:
        memories = (MemoryDecl("t", "on_chip", (m, n)),)
        calls = [ModuleCall("linear", spec, tuple(ins), ("t",)),
                 ModuleCall("act", ActSpec(act=act, shape=(m, n)), ("t",), ("C",))]
    else:
        calls = [ModuleCall("linear", spec, tuple(ins), ("C",))]
    return DesignConfig(name, memories, tuple(ifaces), tuple(calls), SynthSettings(top_name=name))


@pytest.fixture
def gemm_doc():
    return {
        "name": "identity_gemm",
        "interfaces": [
            {"name": "A", "direction": "in", "shape": [2, 3]},
            {"name": "B", "direction": "in", "shape": [3, 2]},
            {"name": "C", "direction": "out", "shape": [2, 2]},
        ],
        "calls": [{"kernel": "linear", "params": {"variant": "gemm", "m": 2, "k": 3, "n": 2},
                   "inputs": ["A", "B"], "outputs": ["C"]}],
    }


@pytest.fixture
def gemm_cfg(gemm_doc):
    return design_from_dict(gemm_doc)


def write_json(path: Path, doc) -> Path:
    path.write_text(json.dumps(doc), encoding="utf-8")
    return path


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(results):
        ok, detail = results[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'} - {detail}")
