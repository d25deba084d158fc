"""Software simulation of emitted bundles with a plain C++ compiler."""

from __future__ import annotations

import os
import shutil
import subprocess
from dataclasses import dataclass
from pathlib import Path

CXX_FLAGS = ["-std=c++14", "-O1", "-DFORGEBENCH_SHIM", "-Wno-unknown-pragmas"]


@dataclass(frozen=True)
class CsimResult:
    compiled: bool
    returncode: int
    output: str

    @property
    def passed(self) -> bool:
        return self.compiled and self.returncode == 0


def find_cxx() -> str | None:
    return os.environ.get("CXX") or shutil.which("g++") or shutil.which("clang++")


def compile_and_run(bundle_dir, timeout: float = 300.0) -> CsimResult:
    """Build ``src/*.cpp`` plus the testbench and execute it."""
    root = Path(bundle_dir)
    cxx = find_cxx()
    if cxx is None:
        raise FileNotFoundError("no C++ compiler found (set CXX)")
    sources = sorted(str(p) for p in (root / "src").glob("*.cpp")) + sorted(
        str(p) for p in (root / "tb").glob("*.cpp"))
    exe = root / "csim.out"
    build = subprocess.run([cxx, *CXX_FLAGS, f"-I{root / 'src'}", *sources, "-o", str(exe), "-lm"],
                           capture_output=True, text=True, timeout=timeout)
    if build.returncode != 0:
        return CsimResult(False, build.returncode, build.stderr)
    run = subprocess.run([str(exe)], capture_output=True, text=True, timeout=timeout)
    return CsimResult(True, run.returncode, run.stdout + run.stderr)
