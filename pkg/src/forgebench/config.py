"""Design and run configuration documents.

Both documents are strict JSON: unknown keys are rejected, missing optional
keys get the defaults below.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from typing import Any, Optional

from .dtypes import FLOAT32, DataType
from .errors import ConfigSyntaxError, SchemaError
from .kernels.specs import CATALOG, OperatorSpec, parse_spec

IDENT_RE = re.compile(r"^[A-Za-z_][A-Za-z0-9_]*$")
# names that would break the emitted C++ (keywords, the element typedef, main)
RESERVED = frozenset("""
    alignas alignof and asm auto bool break case catch char class const constexpr continue
    data_t decltype default delete do double else enum explicit extern false float for friend
    goto if inline int long main mutable namespace new noexcept not nullptr operator or private
    protected public register return short signed sizeof static struct switch tb template this
    throw true try typedef typename union unsigned using virtual void volatile while
""".split())

FLOW_ORDER = ("csim", "synth", "cosim", "impl")
DEFAULT_CLOCK_NS = 10.0
DEFAULT_FLOW = ("csim", "synth")
DEFAULT_PART = "xczu9eg-ffvb1156-2-e"  # ZCU102
DEFAULT_TIMEOUT_S = 3600


@dataclass(frozen=True)
class MemoryDecl:
    name: str
    space: str
    shape: tuple[int, ...]
    element: DataType = FLOAT32
    init: str = "none"  # "zeros" marks the buffer as defined before any call


@dataclass(frozen=True)
class InterfaceDecl:
    name: str
    direction: str
    shape: tuple[int, ...]
    element: DataType = FLOAT32


@dataclass(frozen=True)
class ModuleCall:
    kernel: str
    params: OperatorSpec
    inputs: tuple[str, ...]
    outputs: tuple[str, ...]


@dataclass(frozen=True)
class SynthSettings:
    clock_period_ns: float = DEFAULT_CLOCK_NS
    top_name: str = "top"
    data_type: DataType = FLOAT32
    flow: tuple[str, ...] = DEFAULT_FLOW
    part: str = DEFAULT_PART


@dataclass(frozen=True)
class DesignConfig:
    name: str
    memories: tuple[MemoryDecl, ...] = ()
    interfaces: tuple[InterfaceDecl, ...] = ()
    calls: tuple[ModuleCall, ...] = ()
    synth: SynthSettings = field(default_factory=SynthSettings)

    def buffers(self) -> dict[str, tuple[int, ...]]:
        out = {m.name: m.shape for m in self.memories}
        for i in self.interfaces:
            out[i.name] = i.shape
        return out

    def interface(self, name: str) -> Optional[InterfaceDecl]:
        return next((i for i in self.interfaces if i.name == name), None)

    def memory(self, name: str) -> Optional[MemoryDecl]:
        return next((m for m in self.memories if m.name == name), None)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "memories": [_memory_dict(m, self.synth.data_type) for m in self.memories],
            "interfaces": [_interface_dict(i, self.synth.data_type) for i in self.interfaces],
            "calls": [
                {"kernel": c.kernel, "params": c.params.to_params(),
                 "inputs": list(c.inputs), "outputs": list(c.outputs)}
                for c in self.calls
            ],
            "synth": {
                "clock_period_ns": self.synth.clock_period_ns,
                "top_name": self.synth.top_name,
                "data_type": str(self.synth.data_type),
                "flow": list(self.synth.flow),
                "part": self.synth.part,
            },
        }


def _memory_dict(m: MemoryDecl, default_dt: DataType) -> dict:
    d = {"name": m.name, "space": m.space, "shape": list(m.shape)}
    if m.element != default_dt:
        d["element"] = str(m.element)
    if m.init != "none":
        d["init"] = m.init
    return d


def _interface_dict(i: InterfaceDecl, default_dt: DataType) -> dict:
    d = {"name": i.name, "direction": i.direction, "shape": list(i.shape)}
    if i.element != default_dt:
        d["element"] = str(i.element)
    return d


def dumps_design(cfg: DesignConfig) -> str:
    return json.dumps(cfg.to_dict(), indent=2) + "\n"


@dataclass(frozen=True)
class RunConfig:
    backend: str = "mock"
    workers: int = 1
    timeout_s: int = DEFAULT_TIMEOUT_S
    output_dir: str = "build"
    device_file: Optional[str] = None
    command: str = "vitis_hls -f {script} -l {log}"
    stage_durations: dict = field(default_factory=dict)
    fail_stages: dict = field(default_factory=dict)


# -- parsing helpers ---------------------------------------------------------

def _load_json(text: str) -> Any:
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigSyntaxError(exc.msg, exc.lineno, exc.colno) from None


def _obj(value: Any, path: str, required: tuple[str, ...], optional: tuple[str, ...]) -> dict:
    if not isinstance(value, dict):
        raise SchemaError(path, "expected an object")
    for key in value:
        if key not in required and key not in optional:
            raise SchemaError(f"{path}.{key}" if path else key, "unknown field")
    for key in required:
        if key not in value:
            raise SchemaError(f"{path}.{key}" if path else key, "missing required field")
    return value


def _list(value: Any, path: str) -> list:
    if not isinstance(value, list):
        raise SchemaError(path, "expected a list")
    return value


def _ident(value: Any, path: str) -> str:
    if not isinstance(value, str) or not IDENT_RE.match(value):
        raise SchemaError(path, f"{value!r} is not a valid identifier")
    if value in RESERVED:
        raise SchemaError(path, f"{value!r} is reserved in generated C++")
    return value


def _shape(value: Any, path: str) -> tuple[int, ...]:
    dims = _list(value, path)
    if not 1 <= len(dims) <= 4:
        raise SchemaError(path, "shape rank must be 1..4")
    for i, d in enumerate(dims):
        if isinstance(d, bool) or not isinstance(d, int):
            raise SchemaError(f"{path}[{i}]", "expected an integer")
        if d < 1:
            raise SchemaError(f"{path}[{i}]", "dimension must be >= 1")
    return tuple(dims)


def _dtype(value: Any, path: str) -> DataType:
    if not isinstance(value, str):
        raise SchemaError(path, "expected a data type string")
    try:
        return DataType.parse(value)
    except ValueError as exc:
        raise SchemaError(path, str(exc)) from None


def _choice(value: Any, path: str, allowed: tuple[str, ...]) -> str:
    if value not in allowed:
        raise SchemaError(path, f"{value!r} is not one of: {', '.join(allowed)}")
    return value


def _parse_synth(raw: Any) -> SynthSettings:
    d = _obj(raw, "synth", (), ("clock_period_ns", "top_name", "data_type", "flow", "part"))
    clock = d.get("clock_period_ns", DEFAULT_CLOCK_NS)
    if isinstance(clock, bool) or not isinstance(clock, (int, float)) or clock <= 0:
        raise SchemaError("synth.clock_period_ns", "must be a positive number")
    flow_raw = _list(d.get("flow", list(DEFAULT_FLOW)), "synth.flow")
    if not flow_raw:
        raise SchemaError("synth.flow", "flow must not be empty")
    stages = {_choice(s, f"synth.flow[{i}]", FLOW_ORDER) for i, s in enumerate(flow_raw)}
    part = d.get("part", DEFAULT_PART)
    if not isinstance(part, str) or not part:
        raise SchemaError("synth.part", "expected a device part string")
    return SynthSettings(
        clock_period_ns=float(clock),
        top_name=_ident(d.get("top_name", "top"), "synth.top_name"),
        data_type=_dtype(d["data_type"], "synth.data_type") if "data_type" in d else FLOAT32,
        flow=tuple(s for s in FLOW_ORDER if s in stages),
        part=part,
    )


def design_from_dict(doc: Any, catalog: dict[str, type[OperatorSpec]] = CATALOG) -> DesignConfig:
    d = _obj(doc, "", ("name",), ("memories", "interfaces", "calls", "synth"))
    name = _ident(d["name"], "name")
    synth = _parse_synth(d.get("synth", {}))
    dt = synth.data_type

    memories = []
    for i, raw in enumerate(_list(d.get("memories", []), "memories")):
        p = f"memories[{i}]"
        m = _obj(raw, p, ("name", "space", "shape"), ("element", "init"))
        memories.append(MemoryDecl(
            name=_ident(m["name"], f"{p}.name"),
            space=_choice(m["space"], f"{p}.space", ("on_chip", "off_chip")),
            shape=_shape(m["shape"], f"{p}.shape"),
            element=_dtype(m["element"], f"{p}.element") if "element" in m else dt,
            init=_choice(m.get("init", "none"), f"{p}.init", ("none", "zeros")),
        ))

    interfaces = []
    for i, raw in enumerate(_list(d.get("interfaces", []), "interfaces")):
        p = f"interfaces[{i}]"
        f = _obj(raw, p, ("name", "direction", "shape"), ("element",))
        interfaces.append(InterfaceDecl(
            name=_ident(f["name"], f"{p}.name"),
            direction=_choice(f["direction"], f"{p}.direction", ("in", "out", "inout")),
            shape=_shape(f["shape"], f"{p}.shape"),
            element=_dtype(f["element"], f"{p}.element") if "element" in f else dt,
        ))

    seen: set[str] = set()
    for kind, decls in (("memories", memories), ("interfaces", interfaces)):
        for i, decl in enumerate(decls):
            if decl.name in seen:
                raise SchemaError(f"{kind}[{i}].name", f"duplicate buffer name {decl.name!r}")
            seen.add(decl.name)

    calls = []
    for i, raw in enumerate(_list(d.get("calls", []), "calls")):
        p = f"calls[{i}]"
        c = _obj(raw, p, ("kernel", "params", "inputs", "outputs"), ())
        kernel = c["kernel"]
        if not isinstance(kernel, str) or kernel not in catalog:
            raise SchemaError(f"{p}.kernel", f"unknown kernel {kernel!r}")
        spec = parse_spec(kernel, c["params"], f"{p}.params", catalog)
        names = {}
        for role in ("inputs", "outputs"):
            lst = _list(c[role], f"{p}.{role}")
            for j, buf in enumerate(lst):
                if not isinstance(buf, str):
                    raise SchemaError(f"{p}.{role}[{j}]", "expected a buffer name")
                if buf not in seen:
                    raise SchemaError(f"{p}.{role}[{j}]", f"undeclared buffer {buf!r}")
            names[role] = tuple(lst)
        calls.append(ModuleCall(kernel, spec, names["inputs"], names["outputs"]))

    return DesignConfig(name, tuple(memories), tuple(interfaces), tuple(calls), synth)


def parse_design_config(text: str, catalog: dict[str, type[OperatorSpec]] = CATALOG) -> DesignConfig:
    return design_from_dict(_load_json(text), catalog)


def load_design(path) -> DesignConfig:
    with open(path, encoding="utf-8") as f:
        return parse_design_config(f.read())


def parse_run_config(text: str) -> RunConfig:
    d = _obj(_load_json(text), "", (),
             ("backend", "workers", "timeout_s", "output_dir", "device_file",
              "command", "stage_durations", "fail_stages"))
    backend = _choice(d.get("backend", "mock"), "backend", ("mock", "vendor"))
    workers = d.get("workers", 1)
    if isinstance(workers, bool) or not isinstance(workers, int):
        raise SchemaError("workers", "expected an integer")
    if workers < 1:
        raise SchemaError("workers", "workers must be >= 1")
    timeout = d.get("timeout_s", DEFAULT_TIMEOUT_S)
    if isinstance(timeout, bool) or not isinstance(timeout, (int, float)) or timeout <= 0:
        raise SchemaError("timeout_s", "must be a positive number")
    for key in ("output_dir", "command"):
        if key in d and not isinstance(d[key], str):
            raise SchemaError(key, "expected a string")
    device = d.get("device_file")
    if device is not None and not isinstance(device, str):
        raise SchemaError("device_file", "expected a path string")
    durations = _obj(d.get("stage_durations", {}), "stage_durations", (), FLOW_ORDER)
    for stage, secs in durations.items():
        if isinstance(secs, bool) or not isinstance(secs, (int, float)) or secs < 0:
            raise SchemaError(f"stage_durations.{stage}", "expected seconds >= 0")
    fails = d.get("fail_stages", {})
    if not isinstance(fails, dict):
        raise SchemaError("fail_stages", "expected an object of design name -> stage")
    for design, stage in fails.items():
        _choice(stage, f"fail_stages.{design}", FLOW_ORDER)
    return RunConfig(
        backend=backend,
        workers=workers,
        timeout_s=timeout,
        output_dir=d.get("output_dir", "build"),
        device_file=device,
        command=d.get("command", RunConfig.command),
        stage_durations=dict(durations),
        fail_stages=dict(fails),
    )


# -- semantic validation -----------------------------------------------------

@dataclass(frozen=True)
class Diagnostic:
    path: str
    message: str

    def __str__(self) -> str:
        return f"{self.path}: {self.message}"


@dataclass(frozen=True)
class ValidationReport:
    diagnostics: tuple[Diagnostic, ...] = ()

    @property
    def ok(self) -> bool:
        return not self.diagnostics

    def __iter__(self):
        return iter(self.diagnostics)

    def __len__(self) -> int:
        return len(self.diagnostics)


def initially_defined(cfg: DesignConfig) -> set[str]:
    defined = {i.name for i in cfg.interfaces if i.direction in ("in", "inout")}
    defined |= {m.name for m in cfg.memories if m.init == "zeros"}
    return defined


def _linear_inner_mismatch(spec, shapes) -> Optional[str]:
    if spec.variant == "gemm" and len(shapes) >= 2:
        a, b = shapes[0], shapes[1]
        if a is not None and b is not None and len(a) == 2 and len(b) == 2 and a[1] != b[0]:
            return f"inner dimensions {a[1]}≠{b[0]}"
    return None


def validate_design(cfg: DesignConfig, catalog: dict[str, type[OperatorSpec]] = CATALOG) -> ValidationReport:
    diags: list[Diagnostic] = []
    buffers = cfg.buffers()
    dt = cfg.synth.data_type

    for kind, decls in (("memories", cfg.memories), ("interfaces", cfg.interfaces)):
        for i, decl in enumerate(decls):
            if decl.element != dt:
                diags.append(Diagnostic(f"{kind}[{i}].element",
                                        f"element type {decl.element} differs from design type {dt}"))

    defined = initially_defined(cfg)
    written: set[str] = set()
    read_only = {i.name for i in cfg.interfaces if i.direction == "in"}

    for ci, call in enumerate(cfg.calls):
        p = f"calls[{ci}]"
        spec = call.params
        if call.kernel not in catalog or not isinstance(spec, catalog[call.kernel]):
            diags.append(Diagnostic(f"{p}.kernel", f"kernel {call.kernel!r} not in catalog"))
            continue
        problems = spec.check()
        diags.extend(Diagnostic(f"{p}.params", msg) for msg in problems)

        for role, names in (("inputs", call.inputs), ("outputs", call.outputs)):
            for j, name in enumerate(names):
                if name not in buffers:
                    diags.append(Diagnostic(f"{p}.{role}[{j}]", f"undeclared buffer {name!r}"))

        if problems:
            continue
        ins, outs = spec.operands()
        if len(call.inputs) != len(ins):
            diags.append(Diagnostic(f"{p}.inputs",
                                    f"{call.kernel} expects {len(ins)} inputs, got {len(call.inputs)}"))
        if len(call.outputs) != len(outs):
            diags.append(Diagnostic(f"{p}.outputs",
                                    f"{call.kernel} expects {len(outs)} outputs, got {len(call.outputs)}"))

        actual = [buffers.get(n) for n in call.inputs]
        inner = _linear_inner_mismatch(spec, actual) if call.kernel == "linear" else None
        if inner:
            diags.append(Diagnostic(f"{p}.inputs", inner))
        for role, names, expected in (("inputs", call.inputs, ins), ("outputs", call.outputs, outs)):
            for j, (name, (operand, shape)) in enumerate(zip(names, expected)):
                got = buffers.get(name)
                if got is not None and got != shape and not inner:
                    diags.append(Diagnostic(
                        f"{p}.{role}[{j}]",
                        f"{operand} bound to {name!r} of shape {list(got)}, expected {list(shape)}"))

        for j, name in enumerate(call.inputs):
            if name in buffers and name not in defined:
                diags.append(Diagnostic(f"{p}.inputs[{j}]",
                                        f"buffer {name!r} is read before any call defines it"))
        for j, name in enumerate(call.outputs):
            if name in read_only:
                diags.append(Diagnostic(f"{p}.outputs[{j}]", f"writes input interface {name!r}"))
            if name in call.inputs:
                diags.append(Diagnostic(f"{p}.outputs[{j}]", f"buffer {name!r} is both read and written"))
        defined.update(n for n in call.outputs if n in buffers)
        written.update(call.outputs)

    for i, iface in enumerate(cfg.interfaces):
        if iface.direction == "out" and iface.name not in written:
            diags.append(Diagnostic(f"interfaces[{i}]", f"output interface {iface.name!r} is never written"))
    return ValidationReport(tuple(diags))
