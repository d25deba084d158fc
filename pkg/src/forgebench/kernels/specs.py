"""Operator parameter records and the kernel catalog.

Every kernel kind is a frozen dataclass.  The same record drives the numeric
oracle (``kernels.ops``) and the C++ emitter (``codegen``), so operand shapes
are derived here and nowhere else.

Operand conventions (row-major):

* linear/gemm      A (m,k), B (k,n) [, bias (n,)]      -> C (m,n)
* linear/matvec    A (m,k), x (k,) [, bias (m,)]       -> y (m,)
* linear/dot       x (k,), y (k,) [, bias (1,)]        -> out (1,)
* linear/chain_xABy x (1,m), A (m,k), B (k,n), y (n,1) -> out (1,1)
* conv             x (in_ch,h,w), w (out_ch,in_ch/groups,K,K) [, bias (out_ch,)] -> y (out_ch,oh,ow)
* norm             batchnorm: x (C,...), mean, var [, gamma, beta] (C,)
                   layernorm: x (...,D) [, gamma, beta (D,)]; rmsnorm: x (...,D) [, gamma (D,)]
* attention        q, k, v (L,d), wq (d,d), wk, wv (d,g*d/h), wo (d,d) -> out (L,d)
* move             load: src (full) -> dst (shape); store: src (shape) -> dst (full)
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
from dataclasses import dataclass
from typing import Any, ClassVar, Optional, Union, get_args, get_origin, get_type_hints

from ..errors import SchemaError

Shape = tuple[int, ...]

LOOP_ORDERS = ("ijk", "ikj", "jik", "jki", "kij", "kji")
ASSOC_ORDERS = ("((xA)B)y", "(xA)(By)", "x((AB)y)", "x(A(By))")
ACTIVATIONS = (
    "relu", "relu6", "sigmoid", "tanh", "elu", "silu",
    "gelu", "hard_sigmoid", "hard_swish", "softmax", "exp",
)


def _coerce(value: Any, typ: Any, path: str) -> Any:
    origin = get_origin(typ)
    if origin is Union:
        inner = [a for a in get_args(typ) if a is not type(None)]
        if value is None:
            return None
        return _coerce(value, inner[0], path)
    if origin is tuple:
        if not isinstance(value, list):
            raise SchemaError(path, "expected a list of integers")
        return tuple(_coerce(v, int, f"{path}[{i}]") for i, v in enumerate(value))
    if typ is bool:
        if not isinstance(value, bool):
            raise SchemaError(path, "expected a boolean")
        return value
    if typ is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise SchemaError(path, "expected an integer")
        return value
    if typ is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise SchemaError(path, "expected a number")
        return float(value)
    if typ is str:
        if not isinstance(value, str):
            raise SchemaError(path, "expected a string")
        return value
    raise TypeError(typ)


@dataclass(frozen=True)
class OperatorSpec:
    """Base for all kernel parameter records."""

    kind: ClassVar[str] = ""
    choices: ClassVar[dict[str, tuple]] = {}
    runtime_fields: ClassVar[tuple[str, ...]] = ()

    @classmethod
    def from_params(cls, params: Any, path: str = "params") -> "OperatorSpec":
        if not isinstance(params, dict):
            raise SchemaError(path, "expected an object")
        hints = get_type_hints(cls)
        fields = {f.name: f for f in dataclasses.fields(cls)}
        for key in params:
            if key not in fields:
                raise SchemaError(f"{path}.{key}", f"unknown field for kernel '{cls.kind}'")
        values = {}
        for name, f in fields.items():
            if name not in params:
                if f.default is dataclasses.MISSING:
                    raise SchemaError(f"{path}.{name}", "missing required field")
                continue
            v = _coerce(params[name], hints[name], f"{path}.{name}")
            if name in cls.choices and v not in cls.choices[name]:
                allowed = ", ".join(map(str, cls.choices[name]))
                raise SchemaError(f"{path}.{name}", f"{v!r} is not one of: {allowed}")
            values[name] = v
        return cls(**values)

    def to_params(self) -> dict:
        out = {}
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            out[f.name] = list(v) if isinstance(v, tuple) else v
        return out

    def static_params(self) -> dict:
        p = self.to_params()
        for name in self.runtime_fields:
            p.pop(name, None)
        return p

    def content_hash(self) -> str:
        blob = json.dumps({"kernel": self.kind, "params": self.static_params()},
                          sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def operands(self) -> tuple[list[tuple[str, Shape]], list[tuple[str, Shape]]]:
        raise NotImplementedError

    def input_shapes(self) -> list[Shape]:
        return [s for _, s in self.operands()[0]]

    def output_shapes(self) -> list[Shape]:
        return [s for _, s in self.operands()[1]]

    def check(self) -> list[str]:
        """Semantic problems with the parameters; empty when consistent."""
        return []

    def ops_per_output(self) -> int:
        """Arithmetic operations feeding one output element (tolerance bound)."""
        return 1


def _positive(spec: OperatorSpec, names: tuple[str, ...]) -> list[str]:
    return [f"{n} must be >= 1 (got {getattr(spec, n)})"
            for n in names if getattr(spec, n) < 1]


def _shape_problems(name: str, shape: Shape, max_rank: int = 4) -> list[str]:
    if not 1 <= len(shape) <= max_rank:
        return [f"{name} rank must be 1..{max_rank}"]
    if any(d < 1 for d in shape):
        return [f"{name} dimensions must be >= 1"]
    return []


@dataclass(frozen=True)
class LinearSpec(OperatorSpec):
    kind: ClassVar[str] = "linear"
    choices: ClassVar[dict] = {
        "variant": ("dot", "matvec", "gemm", "chain_xABy"),
        "loop_order": LOOP_ORDERS,
        "assoc_order": ASSOC_ORDERS,
    }

    variant: str = "gemm"
    m: int = 1
    n: int = 1
    k: int = 1
    bias: bool = False
    loop_order: str = "ijk"
    unroll: tuple[int, ...] = (1, 1, 1)
    inline_mul: bool = False
    assoc_order: str = "((xA)B)y"

    def operands(self):
        m, n, k = self.m, self.n, self.k
        if self.variant == "dot":
            ins = [("x", (k,)), ("y", (k,))]
            outs = [("out", (1,))]
            bias = (1,)
        elif self.variant == "matvec":
            ins = [("A", (m, k)), ("x", (k,))]
            outs = [("y", (m,))]
            bias = (m,)
        elif self.variant == "gemm":
            ins = [("A", (m, k)), ("B", (k, n))]
            outs = [("C", (m, n))]
            bias = (n,)
        else:
            return ([("x", (1, m)), ("A", (m, k)), ("B", (k, n)), ("y", (n, 1))],
                    [("out", (1, 1))])
        if self.bias:
            ins.append(("bias", bias))
        return ins, outs

    def check(self):
        problems = _positive(self, ("m", "n", "k"))
        if len(self.unroll) != 3 or any(u < 1 for u in self.unroll):
            problems.append("unroll must be three factors >= 1")
        if self.variant == "dot" and (self.m != 1 or self.n != 1):
            problems.append("dot requires m = n = 1")
        if self.variant == "matvec" and self.n != 1:
            problems.append("matvec requires n = 1")
        if self.variant == "chain_xABy" and self.bias:
            problems.append("chain_xABy has no bias operand")
        return problems

    def ops_per_output(self):
        if self.variant == "chain_xABy":
            return 2 * (self.m + self.k + self.n)
        return 2 * self.k + int(self.bias)


@dataclass(frozen=True)
class ConvSpec(OperatorSpec):
    kind: ClassVar[str] = "conv"

    in_ch: int
    out_ch: int
    h: int
    w: int
    kernel: int = 3
    stride: int = 1
    padding: int = 0
    groups: int = 1
    bias: bool = False
    unroll_in: int = 1
    unroll_out: int = 1

    @property
    def out_h(self) -> int:
        return (self.h + 2 * self.padding - self.kernel) // self.stride + 1

    @property
    def out_w(self) -> int:
        return (self.w + 2 * self.padding - self.kernel) // self.stride + 1

    def operands(self):
        g = max(self.groups, 1)
        ins = [("x", (self.in_ch, self.h, self.w)),
               ("w", (self.out_ch, self.in_ch // g, self.kernel, self.kernel))]
        if self.bias:
            ins.append(("bias", (self.out_ch,)))
        return ins, [("y", (self.out_ch, self.out_h, self.out_w))]

    def check(self):
        problems = _positive(self, ("in_ch", "out_ch", "h", "w", "kernel", "stride",
                                    "groups", "unroll_in", "unroll_out"))
        if self.padding < 0:
            problems.append("padding must be >= 0")
        if problems:
            return problems
        if self.in_ch % self.groups or self.out_ch % self.groups:
            problems.append(f"channels not divisible by groups "
                            f"(in_ch={self.in_ch}, out_ch={self.out_ch}, groups={self.groups})")
        if self.out_h < 1 or self.out_w < 1:
            problems.append("kernel larger than padded input")
        return problems

    def ops_per_output(self):
        return 2 * (self.in_ch // max(self.groups, 1)) * self.kernel ** 2 + int(self.bias)


@dataclass(frozen=True)
class NormSpec(OperatorSpec):
    kind: ClassVar[str] = "norm"
    choices: ClassVar[dict] = {"norm": ("batchnorm", "layernorm", "rmsnorm")}

    norm: str
    shape: tuple[int, ...]
    epsilon: float = 1e-5
    affine: bool = True

    def operands(self):
        x = ("x", self.shape)
        if self.norm == "batchnorm":
            c = (self.shape[0],) if self.shape else (1,)
            ins = [x, ("mean", c), ("var", c)]
            if self.affine:
                ins += [("gamma", c), ("beta", c)]
        else:
            d = (self.shape[-1],) if self.shape else (1,)
            ins = [x]
            if self.affine:
                ins.append(("gamma", d))
                if self.norm == "layernorm":
                    ins.append(("beta", d))
        return ins, [("y", self.shape)]

    def check(self):
        problems = _shape_problems("shape", self.shape)
        if not self.epsilon > 0:
            problems.append("epsilon must be > 0")
        return problems

    def ops_per_output(self):
        return 4 * self.shape[-1] + 8


@dataclass(frozen=True)
class ActSpec(OperatorSpec):
    kind: ClassVar[str] = "act"
    choices: ClassVar[dict] = {"act": ACTIVATIONS}

    act: str
    shape: tuple[int, ...]

    def operands(self):
        return [("x", self.shape)], [("y", self.shape)]

    def check(self):
        return _shape_problems("shape", self.shape)

    def ops_per_output(self):
        return 3 * self.shape[-1] if self.act == "softmax" else 8


@dataclass(frozen=True)
class AttnSpec(OperatorSpec):
    kind: ClassVar[str] = "attention"

    seq_len: int
    hidden: int
    heads: int = 1
    kv_groups: int = 1
    window: Optional[int] = None
    with_rope: bool = False
    rope_base: float = 10000.0

    @property
    def head_dim(self) -> int:
        return self.hidden // max(self.heads, 1)

    @property
    def kv_dim(self) -> int:
        return self.kv_groups * self.head_dim

    def operands(self):
        L, d = self.seq_len, self.hidden
        return ([("q", (L, d)), ("k", (L, d)), ("v", (L, d)),
                 ("wq", (d, d)), ("wk", (d, self.kv_dim)), ("wv", (d, self.kv_dim)),
                 ("wo", (d, d))],
                [("out", (L, d))])

    def check(self):
        problems = _positive(self, ("seq_len", "hidden", "heads", "kv_groups"))
        if self.window is not None and self.window < 1:
            problems.append("window must be >= 1")
        if problems:
            return problems
        if self.hidden % self.heads:
            problems.append(f"hidden {self.hidden} not divisible by heads {self.heads}")
        if self.heads % self.kv_groups:
            problems.append(f"heads {self.heads} not divisible by kv_groups {self.kv_groups}")
        if self.with_rope and self.head_dim % 2:
            problems.append(f"rope needs an even head_dim (got {self.head_dim})")
        if not self.rope_base > 0:
            problems.append("rope_base must be > 0")
        return problems

    def ops_per_output(self):
        return 6 * self.hidden + 4 * self.seq_len + 16


@dataclass(frozen=True)
class RopeSpec(OperatorSpec):
    kind: ClassVar[str] = "rope"

    seq_len: int
    dim: int
    head_dim: int
    base: float = 10000.0

    def operands(self):
        s = (self.seq_len, self.dim)
        return [("x", s)], [("y", s)]

    def check(self):
        problems = _positive(self, ("seq_len", "dim", "head_dim"))
        if problems:
            return problems
        if self.head_dim % 2:
            problems.append(f"head_dim must be even (got {self.head_dim})")
        if self.dim % self.head_dim:
            problems.append(f"dim {self.dim} not divisible by head_dim {self.head_dim}")
        return problems

    def ops_per_output(self):
        return 4


@dataclass(frozen=True)
class DropoutSpec(OperatorSpec):
    kind: ClassVar[str] = "dropout"

    shape: tuple[int, ...]
    p: float = 0.0
    seed: int = 0

    def operands(self):
        return [("x", self.shape)], [("y", self.shape)]

    def check(self):
        problems = _shape_problems("shape", self.shape)
        if not 0.0 <= self.p < 1.0:
            problems.append(f"dropout probability must be in [0, 1) (got {self.p})")
        if not 0 <= self.seed < 2 ** 64:
            problems.append("seed must fit in 64 unsigned bits")
        return problems


@dataclass(frozen=True)
class PoolSpec(OperatorSpec):
    kind: ClassVar[str] = "pool"
    choices: ClassVar[dict] = {"pool": ("max", "avg")}

    pool: str
    shape: tuple[int, ...]
    kernel: int = 2
    stride: int = 2

    @property
    def out_shape(self) -> Shape:
        c, h, w = self.shape
        return (c, (h - self.kernel) // self.stride + 1, (w - self.kernel) // self.stride + 1)

    def operands(self):
        return [("x", self.shape)], [("y", self.out_shape if len(self.shape) == 3 else self.shape)]

    def check(self):
        problems = _positive(self, ("kernel", "stride"))
        if len(self.shape) != 3 or any(d < 1 for d in self.shape):
            return problems + ["pool shape must be (channels, height, width)"]
        if self.shape[1] < self.kernel or self.shape[2] < self.kernel:
            problems.append("pool window larger than input")
        return problems

    def ops_per_output(self):
        return self.kernel ** 2


@dataclass(frozen=True)
class EltwiseSpec(OperatorSpec):
    kind: ClassVar[str] = "eltwise"
    choices: ClassVar[dict] = {"op": ("add", "mul")}

    op: str
    shape: tuple[int, ...]

    def operands(self):
        return [("a", self.shape), ("b", self.shape)], [("y", self.shape)]

    def check(self):
        return _shape_problems("shape", self.shape)


@dataclass(frozen=True)
class MoveSpec(OperatorSpec):
    kind: ClassVar[str] = "move"
    choices: ClassVar[dict] = {"direction": ("load", "store")}
    runtime_fields: ClassVar[tuple[str, ...]] = ("offset",)

    direction: str
    full: tuple[int, ...]
    shape: tuple[int, ...]
    offset: tuple[int, ...] = ()

    @property
    def origin(self) -> Shape:
        return self.offset or (0,) * len(self.full)

    def operands(self):
        if self.direction == "load":
            return [("src", self.full)], [("dst", self.shape)]
        return [("src", self.shape)], [("dst", self.full)]

    def check(self):
        problems = _shape_problems("full", self.full) + _shape_problems("shape", self.shape)
        if problems:
            return problems
        if len(self.shape) != len(self.full) or len(self.origin) != len(self.full):
            return ["full, shape and offset must have equal rank"]
        for axis, (o, s, f) in enumerate(zip(self.origin, self.shape, self.full)):
            if o < 0 or o + s > f:
                problems.append(f"region out of bounds on axis {axis}: {o}+{s} > {f}")
        return problems


CATALOG: dict[str, type[OperatorSpec]] = {
    cls.kind: cls
    for cls in (LinearSpec, ConvSpec, NormSpec, ActSpec, AttnSpec, RopeSpec,
                DropoutSpec, PoolSpec, EltwiseSpec, MoveSpec)
}


def parse_spec(kernel: str, params: Any, path: str = "params",
               catalog: dict[str, type[OperatorSpec]] = CATALOG) -> OperatorSpec:
    try:
        cls = catalog[kernel]
    except KeyError:
        raise SchemaError(path.rsplit(".", 1)[0] + ".kernel", f"unknown kernel {kernel!r}") from None
    return cls.from_params(params, path)


def numel(shape: Shape) -> int:
    return math.prod(shape)
