"""Cartesian enumeration of benchmark suites."""

from __future__ import annotations

import hashlib
import itertools
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Sequence

from .config import (DesignConfig, InterfaceDecl, MemoryDecl, ModuleCall, SynthSettings,
                     dumps_design, validate_design)
from .errors import InvalidAxisValue, SchemaError
from .kernels.specs import (ASSOC_ORDERS, LOOP_ORDERS, ActSpec, AttnSpec, ConvSpec, DropoutSpec,
                            LinearSpec, NormSpec)

FAMILIES = ("gemm_chain", "dnn_block", "llm_block")
SUITE_ALIASES = {"gemm": "gemm_chain", "dnn": "dnn_block", "llm": "llm_block"}


@dataclass(frozen=True)
class SweepSpec:
    base: str
    axes: tuple[tuple[str, tuple], ...]

    @property
    def total(self) -> int:
        return math.prod(len(v) for _, v in self.axes)

    def points(self):
        names = [n for n, _ in self.axes]
        for combo in itertools.product(*(v for _, v in self.axes)):
            yield dict(zip(names, combo))


GEMM_DIMS = (
    (8, 8, 8), (8, 16, 32), (16, 8, 16), (16, 16, 16), (16, 32, 8),
    (32, 16, 64), (32, 32, 32), (32, 64, 16), (64, 32, 32), (64, 64, 64),
    (8, 64, 128), (16, 128, 32), (32, 128, 64), (64, 16, 128), (64, 128, 64),
    (128, 32, 16), (128, 64, 128), (128, 128, 128), (256, 64, 32), (256, 128, 256),
)
GEMM_UNROLLS = ((1, 1, 1), (2, 2, 1), (1, 1, 4), (4, 4, 4))

DNN_KERNELS = (1, 3, 5, 7)
DNN_FEATURE_MAPS = (  # (in_ch, out_ch, h, w)
    (8, 8, 8, 8), (8, 16, 16, 16), (16, 16, 14, 14),
    (16, 32, 8, 8), (32, 32, 7, 7), (64, 64, 14, 14),
)
DNN_ACTIVATIONS = ("relu", "relu6", "sigmoid", "silu", "hard_sigmoid", "hard_swish")
DNN_UNROLLS = ((1, 1), (1, 4), (4, 1), (4, 4))  # (unroll_in, unroll_out)
DNN_GROUPS = 4

LLM_SEQ = (8, 16, 32)
LLM_HIDDEN = (32, 64, 128)
LLM_HEADS = (4, 8, 16)
LLM_KV_RATIO = (1, 2, 4)  # query heads per kv head; 1 is plain multi-head
LLM_DROPOUT_P = (0.1, 0.25, 0.5)


def builtin_suites() -> dict[str, SweepSpec]:
    return {
        "gemm_chain": SweepSpec("gemm_chain", (
            ("dims", GEMM_DIMS),
            ("loop_order", LOOP_ORDERS),
            ("unroll", GEMM_UNROLLS),
            ("assoc_order", ASSOC_ORDERS),
        )),
        "dnn_block": SweepSpec("dnn_block", (
            ("kernel", DNN_KERNELS),
            ("feature_map", DNN_FEATURE_MAPS),
            ("grouped", (False, True)),
            ("bias", (False, True)),
            ("activation", DNN_ACTIVATIONS),
            ("unroll", DNN_UNROLLS),
        )),
        "llm_block": SweepSpec("llm_block", (
            ("seq_len", LLM_SEQ),
            ("hidden", LLM_HIDDEN),
            ("heads", LLM_HEADS),
            ("kv_ratio", LLM_KV_RATIO),
            ("dropout_p", LLM_DROPOUT_P),
            ("with_rope", (False, True)),
            ("with_dropout", (False, True)),
            ("norm", ("layernorm", "rmsnorm")),
        )),
    }


def _iface(name, direction, shape):
    return InterfaceDecl(name, direction, tuple(shape))


def gemm_chain_design(name: str, p: dict) -> DesignConfig:
    m, k, n = p["dims"]
    spec = LinearSpec(variant="chain_xABy", m=m, k=k, n=n, loop_order=p["loop_order"],
                      unroll=tuple(p["unroll"]), assoc_order=p["assoc_order"],
                      inline_mul=p.get("inline_mul", False))
    return DesignConfig(
        name=name,
        interfaces=(_iface("x", "in", (1, m)), _iface("A", "in", (m, k)),
                    _iface("B", "in", (k, n)), _iface("y", "in", (n, 1)),
                    _iface("out", "out", (1, 1))),
        calls=(ModuleCall("linear", spec, ("x", "A", "B", "y"), ("out",)),),
        synth=SynthSettings(top_name=name),
    )


def dnn_block_design(name: str, p: dict) -> DesignConfig:
    K = p["kernel"]
    cin, cout, h, w = p["feature_map"]
    groups = DNN_GROUPS if p["grouped"] else 1
    ui, uo = p["unroll"]
    conv = ConvSpec(in_ch=cin, out_ch=cout, h=h, w=w, kernel=K, stride=1, padding=K // 2,
                    groups=groups, bias=p["bias"], unroll_in=ui, unroll_out=uo)
    oshape = conv.output_shapes()[0]
    bn = NormSpec(norm="batchnorm", shape=oshape, affine=True)
    act = ActSpec(act=p["activation"], shape=oshape)
    ifaces = [_iface("x", "in", (cin, h, w)), _iface("w", "in", conv.input_shapes()[1])]
    conv_in = ["x", "w"]
    if p["bias"]:
        ifaces.append(_iface("b", "in", (cout,)))
        conv_in.append("b")
    for stat in ("mean", "var", "gamma", "beta"):
        ifaces.append(_iface(stat, "in", (cout,)))
    ifaces.append(_iface("y", "out", oshape))
    return DesignConfig(
        name=name,
        memories=(MemoryDecl("conv_out", "on_chip", oshape), MemoryDecl("bn_out", "on_chip", oshape)),
        interfaces=tuple(ifaces),
        calls=(
            ModuleCall("conv", conv, tuple(conv_in), ("conv_out",)),
            ModuleCall("norm", bn, ("conv_out", "mean", "var", "gamma", "beta"), ("bn_out",)),
            ModuleCall("act", act, ("bn_out",), ("y",)),
        ),
        synth=SynthSettings(top_name=name),
    )


def llm_block_design(name: str, p: dict) -> DesignConfig:
    L, d, heads = p["seq_len"], p["hidden"], p["heads"]
    attn = AttnSpec(seq_len=L, hidden=d, heads=heads, kv_groups=heads // p["kv_ratio"],
                    with_rope=p["with_rope"])
    shape = (L, d)
    ifaces = [_iface("X", "in", shape), _iface("wq", "in", (d, d)),
              _iface("wk", "in", (d, attn.kv_dim)), _iface("wv", "in", (d, attn.kv_dim)),
              _iface("wo", "in", (d, d)), _iface("gamma", "in", (d,))]
    norm_in = ["gamma"]
    if p["norm"] == "layernorm":
        ifaces.append(_iface("beta", "in", (d,)))
        norm_in.append("beta")
    ifaces.append(_iface("Y", "out", shape))
    memories = [MemoryDecl("attn_out", "on_chip", shape)]
    calls = [ModuleCall("attention", attn, ("X", "X", "X", "wq", "wk", "wv", "wo"), ("attn_out",))]
    src = "attn_out"
    if p["with_dropout"]:
        memories.append(MemoryDecl("drop_out", "on_chip", shape))
        calls.append(ModuleCall("dropout", DropoutSpec(shape=shape, p=p["dropout_p"], seed=0),
                                ("attn_out",), ("drop_out",)))
        src = "drop_out"
    calls.append(ModuleCall("norm", NormSpec(norm=p["norm"], shape=shape, affine=True),
                            (src, *norm_in), ("Y",)))
    return DesignConfig(name=name, memories=tuple(memories), interfaces=tuple(ifaces),
                        calls=tuple(calls), synth=SynthSettings(top_name=name))


def _check_point(base: str, p: dict) -> None:
    if base == "llm_block":
        if p["hidden"] % p["heads"]:
            raise InvalidAxisValue(f"heads={p['heads']} does not divide hidden={p['hidden']}")
        if p["heads"] % p["kv_ratio"]:
            raise InvalidAxisValue(f"kv_ratio={p['kv_ratio']} does not divide heads={p['heads']}")
        if p["with_rope"] and (p["hidden"] // p["heads"]) % 2:
            raise InvalidAxisValue(f"with_rope=True needs an even head size "
                                   f"(hidden={p['hidden']}, heads={p['heads']})")
    elif base == "dnn_block":
        cin, cout = p["feature_map"][:2]
        if p["grouped"] and (cin % DNN_GROUPS or cout % DNN_GROUPS):
            raise InvalidAxisValue(f"grouped=True needs channels divisible by {DNN_GROUPS} "
                                   f"(feature_map={list(p['feature_map'])})")


_BUILDERS: dict[str, Callable[[str, dict], DesignConfig]] = {
    "gemm_chain": gemm_chain_design,
    "dnn_block": dnn_block_design,
    "llm_block": llm_block_design,
}


def expand_grid(spec: SweepSpec, validate: bool = True) -> list[DesignConfig]:
    if spec.base not in _BUILDERS:
        raise InvalidAxisValue(f"unknown family {spec.base!r}")
    names = [n for n, _ in spec.axes]
    if len(set(names)) != len(names):
        raise InvalidAxisValue("axis names must be unique")
    for n, values in spec.axes:
        if not values:
            raise InvalidAxisValue(f"axis {n!r} has no values")
    build = _BUILDERS[spec.base]
    configs = []
    for index, point in enumerate(spec.points()):
        try:
            _check_point(spec.base, point)
            cfg = build(f"{spec.base}_{index:05d}", point)
        except KeyError as exc:
            raise InvalidAxisValue(f"{spec.base} needs axis {exc.args[0]!r}") from None
        if validate:
            report = validate_design(cfg)
            if not report.ok:
                raise InvalidAxisValue(f"point {point} yields an invalid design: "
                                       f"{report.diagnostics[0]}")
        configs.append(cfg)
    return configs


def _freeze(v: Any) -> Any:
    return tuple(_freeze(x) for x in v) if isinstance(v, list) else v


def sweep_spec_from_dict(doc: Any) -> SweepSpec:
    if not isinstance(doc, dict) or set(doc) - {"base", "axes"} or "base" not in doc:
        raise SchemaError("", "sweep spec needs exactly 'base' and 'axes'")
    base = SUITE_ALIASES.get(doc["base"], doc["base"])
    if base not in FAMILIES:
        raise SchemaError("base", f"unknown family {doc['base']!r}")
    axes = []
    for i, ax in enumerate(doc.get("axes", [])):
        if not isinstance(ax, dict) or set(ax) != {"name", "values"} or not isinstance(ax["values"], list):
            raise SchemaError(f"axes[{i}]", "expected {\"name\": ..., \"values\": [...]}")
        axes.append((ax["name"], tuple(_freeze(v) for v in ax["values"])))
    return SweepSpec(base, tuple(axes))


def sweep_spec_to_dict(spec: SweepSpec) -> dict:
    def thaw(v):
        return [thaw(x) for x in v] if isinstance(v, tuple) else v
    return {"base": spec.base,
            "axes": [{"name": n, "values": [thaw(v) for v in vals]} for n, vals in spec.axes]}


def write_suite(configs: Sequence[DesignConfig], directory, suite_id: str = "suite") -> dict:
    """One JSON document per design plus ``manifest.json`` (written last)."""
    root = Path(directory)
    root.mkdir(parents=True, exist_ok=True)
    files = {}
    for cfg in configs:
        text = dumps_design(cfg)
        path = root / f"{cfg.name}.json"
        if not (path.exists() and path.read_text(encoding="utf-8") == text):
            path.write_text(text, encoding="utf-8")
        files[path.name] = hashlib.sha256(text.encode()).hexdigest()
    manifest = {"suite": suite_id, "count": len(files), "files": files}
    text = json.dumps(manifest, indent=2, sort_keys=True) + "\n"
    mpath = root / "manifest.json"
    if not (mpath.exists() and mpath.read_text(encoding="utf-8") == text):
        mpath.write_text(text, encoding="utf-8")
    return manifest


def load_suite(directory) -> list[DesignConfig]:
    from .config import load_design

    root = Path(directory)
    manifest_path = root / "manifest.json"
    if manifest_path.exists():
        names = sorted(json.loads(manifest_path.read_text(encoding="utf-8"))["files"])
    else:
        names = sorted(p.name for p in root.glob("*.json"))
    return [load_design(root / n) for n in names if n != "manifest.json"]


def family_of(cfg: DesignConfig) -> str:
    return next((f for f in FAMILIES if cfg.name.startswith(f)), "custom")


def design_dims(cfg: DesignConfig) -> int:
    """Largest dimension of any buffer (used to cap desk-scale sampling)."""
    return max((d for shape in cfg.buffers().values() for d in shape), default=0)


def default_sample(seed: int, count: int, max_dim: int = 64) -> list[DesignConfig]:
    """Random configs across the builtin suites with every buffer dim <= max_dim."""
    import random

    rng = random.Random(seed)
    pools = []
    for spec in builtin_suites().values():
        pools.append([c for c in expand_grid(spec, validate=False) if design_dims(c) <= max_dim])
    quota = [count // len(pools) + (i < count % len(pools)) for i in range(len(pools))]
    picks = [rng.sample(pool, min(q, len(pool))) for pool, q in zip(pools, quota)]
    # interleave families so any prefix stays balanced
    out = []
    for i in range(max(map(len, picks), default=0)):
        out += [p[i] for p in picks if i < len(p)]
    return out
