"""Design-level emission: header, kernels, top function, testbench, tool script."""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Mapping, Optional

import numpy as np

from ..config import FLOW_ORDER, DesignConfig, RunConfig, initially_defined, validate_design
from ..dtypes import DataType
from ..errors import UnsupportedSpec, ValidationError
from ..kernels.design import ops_count
from ..kernels.specs import MoveSpec, OperatorSpec, numel
from .kernels import IND, array_param, c_double, c_float, call_arguments, kernel_function

SHIM_NAME = "forgebench_hls.h"


@dataclass(frozen=True)
class SourceUnit:
    path: str
    text: str

    def sha256(self) -> str:
        return hashlib.sha256(self.text.encode("ascii")).hexdigest()


@dataclass
class SourceBundle:
    design: str
    units: list[SourceUnit] = field(default_factory=list)
    manifest: dict[str, str] = field(default_factory=dict)  # role -> unit path

    def unit(self, role: str) -> SourceUnit:
        path = self.manifest[role]
        return next(u for u in self.units if u.path == path)

    def add(self, role: str, unit: SourceUnit) -> None:
        self.units = [u for u in self.units if u.path != unit.path] + [unit]
        self.manifest[role] = unit.path


def shim_header() -> str:
    return resources.files("forgebench.codegen").joinpath(SHIM_NAME).read_text(encoding="ascii")


def _typedef(dt: DataType) -> str:
    return f"typedef {dt.c_type()} data_t;"


def _unit(path: str, text: str) -> SourceUnit:
    if not text.endswith("\n"):
        text += "\n"
    text.encode("ascii")
    return SourceUnit(path, text)


def emit_kernel(spec: OperatorSpec, dt: DataType, prefix: str = "fb") -> SourceUnit:
    """Standalone translation unit holding one kernel instance."""
    code = kernel_function(spec, prefix)
    text = "\n".join([
        f'#include "{SHIM_NAME}"',
        "",
        _typedef(dt),
        "",
        code.definition,
    ])
    return _unit(f"src/{code.name}.cpp", text)


def _top_params(cfg: DesignConfig) -> list[tuple[str, tuple, bool]]:
    ports = [(i.name, i.shape, i.direction == "in") for i in cfg.interfaces]
    ports += [(m.name, m.shape, False) for m in cfg.memories if m.space == "off_chip"]
    return ports


def _top_prototype(cfg: DesignConfig) -> str:
    params = [array_param(n, s, const=c) for n, s, c in _top_params(cfg)]
    return f"void {cfg.synth.top_name}({', '.join(params)})"


def _zero_fill_targets(cfg: DesignConfig) -> list[str]:
    """Buffers that start as zeros: declared so, or first touched by a store."""
    names = [m.name for m in cfg.memories if m.init == "zeros"]
    defined = initially_defined(cfg)
    for call in cfg.calls:
        if isinstance(call.params, MoveSpec) and call.params.direction == "store":
            for out in call.outputs:
                if out not in defined and out not in names:
                    names.append(out)
        defined.update(call.outputs)
    return names


def emit_design(cfg: DesignConfig, run: Optional[RunConfig] = None,
                vectors: Optional[Mapping[str, Mapping[str, np.ndarray]]] = None) -> SourceBundle:
    report = validate_design(cfg)
    if not report.ok:
        raise ValidationError(report)
    name = cfg.name
    dt = cfg.synth.data_type

    kernels = {}
    for call in cfg.calls:
        key = (call.kernel, call.params.content_hash())
        if key not in kernels:
            kernels[key] = kernel_function(call.params, name)

    guard = f"{name.upper()}_H"
    header = [f"#ifndef {guard}", f"#define {guard}", "", f'#include "{SHIM_NAME}"', "",
              _typedef(dt), ""]
    header += [k.prototype for k in kernels.values()]
    header += ["", _top_prototype(cfg) + ";", "", f"#endif  // {guard}"]

    body = [f'#include "{name}.h"', ""]
    for k in kernels.values():
        body += [k.definition]

    top = [f'#include "{name}.h"', "", _top_prototype(cfg) + " {"]
    for idx, (port, shape, _) in enumerate(_top_params(cfg)):
        top.append(f"{IND}#pragma HLS INTERFACE m_axi port={port} offset=slave "
                   f"bundle=gmem{idx} depth={numel(shape)}")
    top.append(f"{IND}#pragma HLS INTERFACE s_axilite port=return")
    for m in cfg.memories:
        if m.space == "on_chip":
            top.append(f"{IND}static {array_param(m.name, m.shape)};")
    shapes = cfg.buffers()
    for buf in _zero_fill_targets(cfg):
        n = numel(shapes[buf])
        top.append(f"{IND}for (int n = 0; n < {n}; n++) "
                   f"(&{buf}{'[0]' * (len(shapes[buf]) - 1)}[0])[n] = 0;")
    for call in cfg.calls:
        fname = kernels[(call.kernel, call.params.content_hash())].name
        args = call_arguments(call.params, call.inputs, call.outputs)
        top.append(f"{IND}{fname}({', '.join(args)});")
    top.append("}")

    bundle = SourceBundle(name)
    bundle.add("shim", _unit(f"src/{SHIM_NAME}", shim_header()))
    bundle.add("kernel_header", _unit(f"src/{name}.h", "\n".join(header)))
    bundle.add("kernel_body", _unit(f"src/{name}_kernels.cpp", "\n".join(body)))
    bundle.add("top", _unit(f"src/{name}_top.cpp", "\n".join(top)))
    bundle.add("build_script", emit_build_script(cfg, run or RunConfig()))
    if vectors is not None:
        bundle.add("testbench", emit_testbench(cfg, vectors))
    return bundle


def _literals(values: np.ndarray, dt: DataType) -> str:
    flat = np.asarray(values, dtype=np.float64).ravel()
    fmt = c_float if dt.kind == "float32" else c_double
    items = [fmt(v) for v in flat]
    rows = [", ".join(items[i:i + 8]) for i in range(0, len(items), 8)]
    return ("\n" + IND).join(r + "," for r in rows)


def emit_testbench(cfg: DesignConfig, vectors: Mapping[str, Mapping[str, np.ndarray]]) -> SourceUnit:
    """C++ main that runs the top function on embedded inputs.

    ``vectors`` is ``{"inputs": {...}, "outputs": {...}}`` as produced by the
    oracle.  Exit status is 0 when every output is within tolerance.
    """
    dt = cfg.synth.data_type
    if not dt.checkable:
        raise UnsupportedSpec("oracle unavailable for opaque data type")
    inputs, outputs = vectors.get("inputs", {}), vectors.get("outputs", {})
    want_in = {i.name for i in cfg.interfaces if i.direction in ("in", "inout")}
    want_out = {i.name for i in cfg.interfaces if i.direction in ("out", "inout")}
    if set(inputs) != want_in or set(outputs) != want_out:
        raise UnsupportedSpec(
            f"vectors cover inputs {sorted(inputs)} / outputs {sorted(outputs)}, "
            f"design needs {sorted(want_in)} / {sorted(want_out)}")
    tol = dt.tolerance(ops_count(cfg))
    tol_text = "1e-4" if dt.kind == "float32" else c_double(tol)

    lines = ["#include <cmath>", "#include <cstdio>", "", f'#include "{cfg.name}.h"', "",
             f"static const double TOL = {tol_text};", "",
             "namespace tb {  // keeps buffer names clear of libc symbols such as gamma"]
    for name, shape, _ in _top_params(cfg):
        decl = array_param(name, shape)
        if name in inputs:
            lines.append(f"static {decl} = {{\n{IND}{_literals(inputs[name], dt)}\n}};")
        else:
            lines.append(f"static {decl};")
    for name in sorted(want_out):
        values = np.asarray(outputs[name], dtype=np.float64).ravel()
        body = ("\n" + IND).join(
            ", ".join(c_double(v) for v in values[i:i + 6]) + "," for i in range(0, len(values), 6))
        lines.append(f"static const double {name}_golden[{len(values)}] = {{\n{IND}{body}\n}};")
    lines += ["}  // namespace tb", "", "static double max_abs_err(const data_t *got, const double *want, int n) {",
              f"{IND}double err = 0.0;",
              f"{IND}for (int i = 0; i < n; i++) {{",
              f"{IND}{IND}double e = std::fabs((double)got[i] - want[i]);",
              f"{IND}{IND}if (!(e <= err)) err = e;",
              f"{IND}}}",
              f"{IND}return err;",
              "}", "",
              "int main() {",
              f"{IND}{cfg.synth.top_name}({', '.join('tb::' + n for n, _, _ in _top_params(cfg))});",
              f"{IND}int fail = 0;"]
    shapes = cfg.buffers()
    for name in sorted(want_out):
        first = f"&tb::{name}{'[0]' * len(shapes[name])}"
        n = numel(shapes[name])
        lines += [f"{IND}{{",
                  f"{IND}{IND}double err = max_abs_err({first}, tb::{name}_golden, {n});",
                  f'{IND}{IND}std::printf("{name} max_abs_err=%.3e\\n", err);',
                  f"{IND}{IND}if (!(err <= TOL)) fail = 1;",
                  f"{IND}}}"]
    lines += [f'{IND}std::printf(fail ? "FAIL\\n" : "PASS\\n");',
              f"{IND}return fail;", "}"]
    return _unit(f"tb/{cfg.name}_tb.cpp", "\n".join(lines))


_STAGE_TCL = {
    "csim": "csim_design",
    "synth": "csynth_design",
    "cosim": "cosim_design",
    "impl": "export_design -flow impl -rtl verilog",
}


def emit_build_script(cfg: DesignConfig, run: RunConfig, stages=None) -> SourceUnit:
    """Vitis HLS TCL script running the requested stages in canonical order.

    ``stages`` defaults to the design's flow.  When it is a strict subset the
    script reopens the existing project instead of resetting it.
    """
    flow = cfg.synth.flow if stages is None else tuple(stages)
    ordered = [s for s in FLOW_ORDER if s in flow]
    fresh = stages is None or (ordered and ordered[0] == cfg.synth.flow[0])
    reset = " -reset" if fresh else ""
    name = cfg.name
    lines = [
        f"# {name}: generated by forgebench",
        f"open_project{reset} {name}_prj",
        f"set_top {cfg.synth.top_name}",
        f"add_files src/{name}_kernels.cpp -cflags \"-Isrc\"",
        f"add_files src/{name}_top.cpp -cflags \"-Isrc\"",
        f"add_files -tb tb/{name}_tb.cpp -cflags \"-Isrc\"",
        f"open_solution{reset} solution1 -flow_target vivado",
        f"set_part {{{cfg.synth.part}}}",
        f"create_clock -period {cfg.synth.clock_period_ns:g} -name default",
    ]
    lines += [_STAGE_TCL[s] for s in ordered]
    lines.append("exit")
    return _unit("scripts/run_hls.tcl", "\n".join(lines))


def write_bundle(bundle: SourceBundle, out_dir) -> Path:
    """Write under ``<out>/<design>/`` with a ``bundle.json`` manifest.

    Files whose content is unchanged are not rewritten.
    """
    root = Path(out_dir) / bundle.design
    for unit in bundle.units:
        _write_if_changed(root / unit.path, unit.text)
    paths = {u.path: u for u in bundle.units}
    manifest = {
        "design": bundle.design,
        "units": {role: {"path": path, "sha256": paths[path].sha256()}
                  for role, path in sorted(bundle.manifest.items())},
    }
    _write_if_changed(root / "bundle.json", json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return root


def _write_if_changed(path: Path, text: str) -> None:
    if path.exists() and path.read_text(encoding="utf-8") == text:
        return
    os.makedirs(path.parent, exist_ok=True)
    path.write_text(text, encoding="utf-8")
