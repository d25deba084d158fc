"""Shared-tile planning and emission of modularized designs.

Several programs of one kernel family can be served by a single tile-sized
module: either the componentwise gcd of their dimensions (small module, many
iterations) or the componentwise maximum (large module, one padded pass).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from functools import reduce
from typing import Mapping, Optional, Sequence

from .config import DesignConfig, InterfaceDecl, MemoryDecl, ModuleCall, SynthSettings
from .dtypes import FLOAT32, DataType
from .errors import ArityError, FamilyMismatch, PolicyError, UnsupportedSpec
from .kernels.specs import AttnSpec, ConvSpec, EltwiseSpec, LinearSpec, MoveSpec, OperatorSpec

POLICIES = ("min_gcd", "max_fit", "custom")
Dims = tuple[int, ...]


@dataclass(frozen=True)
class TileSpec:
    tile: Dims
    policy: str = "custom"

    def __post_init__(self):
        if self.policy not in POLICIES:
            raise PolicyError(f"unknown policy {self.policy!r}")
        if not self.tile or any(int(t) < 1 for t in self.tile):
            raise PolicyError(f"tile dims must be >= 1, got {self.tile}")


@dataclass(frozen=True)
class ProgramPlan:
    id: str
    dims: Dims
    grid: Dims
    padding: Dims

    @property
    def iterations(self) -> int:
        return math.prod(self.grid)


@dataclass(frozen=True)
class ModularPlan:
    shared: TileSpec
    programs: tuple[ProgramPlan, ...]

    @property
    def tile_work(self) -> int:
        return math.prod(self.shared.tile)

    def latency(self, program_id: str) -> int:
        """Modeled latency: iterations times tile work units."""
        prog = next(p for p in self.programs if p.id == program_id)
        return prog.iterations * self.tile_work

    def to_dict(self) -> dict:
        return {
            "tile": list(self.shared.tile),
            "policy": self.shared.policy,
            "tile_work": self.tile_work,
            "programs": [
                {"id": p.id, "dims": list(p.dims), "grid": list(p.grid),
                 "padding": list(p.padding), "iterations": p.iterations,
                 "latency": p.iterations * self.tile_work}
                for p in self.programs
            ],
        }

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"


def _check_programs(programs: Sequence[Sequence[int]], minimum: int = 2) -> list[Dims]:
    progs = [tuple(int(d) for d in p) for p in programs]
    if len(progs) < minimum:
        raise ArityError(f"need at least {minimum} programs, got {len(progs)}")
    arity = {len(p) for p in progs}
    if len(arity) != 1:
        raise ArityError(f"programs have mixed arity {sorted(arity)}")
    if any(d < 1 for p in progs for d in p) or 0 in arity:
        raise ArityError("program dims must be positive")
    return progs


def min_tile(programs: Sequence[Sequence[int]]) -> TileSpec:
    progs = _check_programs(programs)
    return TileSpec(tuple(reduce(math.gcd, col) for col in zip(*progs)), "min_gcd")


def max_tile(programs: Sequence[Sequence[int]]) -> TileSpec:
    progs = _check_programs(programs)
    return TileSpec(tuple(max(col) for col in zip(*progs)), "max_fit")


def _grid(program: Dims, tile: TileSpec) -> Dims:
    if len(program) != len(tile.tile):
        raise ArityError(f"program arity {len(program)} differs from tile arity {len(tile.tile)}")
    if tile.policy == "min_gcd" and any(p % t for p, t in zip(program, tile.tile)):
        raise PolicyError(f"gcd tile {tile.tile} does not divide {program}")
    if tile.policy == "max_fit" and any(t < p for p, t in zip(program, tile.tile)):
        raise PolicyError(f"fit tile {tile.tile} is smaller than {program}")
    return tuple(-(-p // t) for p, t in zip(program, tile.tile))


def iteration_count(program: Sequence[int], tile: TileSpec) -> int:
    return math.prod(_grid(tuple(program), tile))


def plan_shared(programs: Sequence[tuple[str, Sequence[int]]], policy: str = "min_gcd",
                tile: Optional[Sequence[int]] = None) -> ModularPlan:
    """Pick the shared tile for ``(id, dims)`` pairs and lay out each program.

    ``policy="custom"`` takes an explicit ``tile``; boundary tiles are padded.
    """
    ids = [pid for pid, _ in programs]
    if len(set(ids)) != len(ids):
        raise ArityError("program ids must be unique")
    dims = [d for _, d in programs]
    if policy == "min_gcd":
        shared = min_tile(dims)
    elif policy == "max_fit":
        shared = max_tile(dims)
    elif policy == "custom":
        if tile is None:
            raise PolicyError("custom policy needs an explicit tile")
        _check_programs(dims, minimum=1)
        shared = TileSpec(tuple(int(t) for t in tile), "custom")
    else:
        raise PolicyError(f"unknown policy {policy!r}")
    plans = []
    for pid, d in zip(ids, dims):
        d = tuple(int(x) for x in d)
        grid = _grid(d, shared)
        padding = tuple(g * t - x for g, t, x in zip(grid, shared.tile, d))
        plans.append(ProgramPlan(pid, d, grid, padding))
    return ModularPlan(shared, tuple(plans))


def program_dims(spec: OperatorSpec) -> Dims:
    """Tiling dimensions of a kernel instance."""
    if isinstance(spec, LinearSpec) and spec.variant == "gemm":
        return (spec.m, spec.k, spec.n)
    if isinstance(spec, ConvSpec):
        return (spec.in_ch, spec.out_ch, spec.out_h, spec.out_w)
    if isinstance(spec, AttnSpec):
        return (spec.heads,)
    raise FamilyMismatch(f"no tiling family for {spec.kind}"
                         + (f"/{spec.variant}" if isinstance(spec, LinearSpec) else ""))


def family_of(spec: OperatorSpec) -> str:
    program_dims(spec)
    return "gemm" if isinstance(spec, LinearSpec) else spec.kind


def plan_for_specs(specs: Mapping[str, OperatorSpec], policy: str = "min_gcd",
                   tile: Optional[Sequence[int]] = None) -> ModularPlan:
    families = {family_of(s) for s in specs.values()}
    if len(families) != 1:
        raise FamilyMismatch(f"programs mix kernel families {sorted(families)}")
    return plan_shared([(pid, program_dims(s)) for pid, s in specs.items()], policy, tile)


# --------------------------------------------------------------------------
# emission


def program_interfaces(pid: str, spec: OperatorSpec) -> tuple[list[InterfaceDecl], list[InterfaceDecl]]:
    ins, outs = spec.operands()
    return ([InterfaceDecl(f"{pid}_{role}", "in", shape) for role, shape in ins],
            [InterfaceDecl(f"{pid}_{role}", "out", shape) for role, shape in outs])


def direct_design(specs: Mapping[str, OperatorSpec], name: str = "direct",
                  data_type: DataType = FLOAT32) -> DesignConfig:
    """Untiled reference: one call per program, same interface names."""
    ifaces, calls = [], []
    for pid, spec in specs.items():
        ins, outs = program_interfaces(pid, spec)
        ifaces += ins + outs
        calls.append(ModuleCall(spec.kind, spec, tuple(i.name for i in ins), tuple(o.name for o in outs)))
    return _finish(name, [], ifaces, calls, data_type)


def _finish(name, memories, ifaces, calls, dt: DataType) -> DesignConfig:
    memories = [replace(m, element=dt) for m in memories]
    ifaces = [replace(i, element=dt) for i in ifaces]
    return DesignConfig(name=name, memories=tuple(memories), interfaces=tuple(ifaces),
                        calls=tuple(calls), synth=SynthSettings(top_name=name, data_type=dt))


class _Builder:
    def __init__(self):
        self.memories: dict[str, MemoryDecl] = {}
        self.calls: list[ModuleCall] = []

    def memory(self, name: str, shape: Dims, zeros: bool = False) -> str:
        if name not in self.memories:
            self.memories[name] = MemoryDecl(name, "on_chip", tuple(shape),
                                             init="zeros" if zeros else "none")
        return name

    def load(self, src: str, full: Dims, offset: Dims, shape: Dims, dst: str) -> None:
        spec = MoveSpec(direction="load", full=tuple(full), shape=tuple(shape), offset=tuple(offset))
        self.calls.append(ModuleCall("move", spec, (src,), (dst,)))

    def store(self, src: str, shape: Dims, full: Dims, offset: Dims, dst: str) -> None:
        spec = MoveSpec(direction="store", full=tuple(full), shape=tuple(shape), offset=tuple(offset))
        self.calls.append(ModuleCall("move", spec, (src,), (dst,)))

    def padded(self, src: str, shape: Dims, full: Dims, offset: Optional[Dims] = None) -> str:
        """Copy ``src`` into a zero-filled buffer of shape ``full``."""
        if tuple(shape) == tuple(full) and not any(offset or ()):
            return src
        dst = self.memory(f"{src}_pad", full, zeros=True)
        self.store(src, shape, full, offset or (0,) * len(full), dst)
        return dst

    def accumulate(self, pid: str, tile_out: str, acc: str, full: Dims, offset: Dims,
                   shape: Dims, first: bool) -> None:
        if first:
            self.store(tile_out, shape, full, offset, acc)
            return
        prev = self.memory(f"{pid}_prev", shape)
        total = self.memory(f"{pid}_sum", shape)
        self.load(acc, full, offset, shape, prev)
        self.calls.append(ModuleCall("eltwise", EltwiseSpec(op="add", shape=tuple(shape)),
                                     (prev, tile_out), (total,)))
        self.store(total, shape, full, offset, acc)


def _round_up(x: int, t: int) -> int:
    return -(-x // t) * t


def _gemm_program(b: _Builder, pid: str, spec: LinearSpec, tile: Dims, kernel: LinearSpec,
                  zero_bias: Optional[str]) -> None:
    m, k, n = spec.m, spec.k, spec.n
    tm, tk, tn = tile
    M, K, N = _round_up(m, tm), _round_up(k, tk), _round_up(n, tn)
    A = b.padded(f"{pid}_A", (m, k), (M, K))
    B = b.padded(f"{pid}_B", (k, n), (K, N))
    bias = b.padded(f"{pid}_bias", (n,), (N,)) if spec.bias else None
    out = f"{pid}_C"
    acc = out if (M, N) == (m, n) else b.memory(f"{pid}_acc", (M, N))
    At, Bt, Ct = b.memory(f"{pid}_At", (tm, tk)), b.memory(f"{pid}_Bt", (tk, tn)), b.memory(f"{pid}_Ct", (tm, tn))
    bt = b.memory(f"{pid}_biast", (tn,)) if bias else None
    for i in range(M // tm):
        for j in range(N // tn):
            for kk in range(K // tk):
                b.load(A, (M, K), (i * tm, kk * tk), (tm, tk), At)
                b.load(B, (K, N), (kk * tk, j * tn), (tk, tn), Bt)
                args = [At, Bt]
                if kernel.bias:
                    if bias and kk == 0:
                        b.load(bias, (N,), (j * tn,), (tn,), bt)
                        args.append(bt)
                    else:
                        args.append(zero_bias)
                b.calls.append(ModuleCall("linear", kernel, tuple(args), (Ct,)))
                b.accumulate(pid, Ct, acc, (M, N), (i * tm, j * tn), (tm, tn), kk == 0)
    if acc != out:
        b.load(acc, (M, N), (0, 0), (m, n), out)


def _conv_program(b: _Builder, pid: str, spec: ConvSpec, tile: Dims, kernel: ConvSpec,
                  zero_bias: Optional[str]) -> None:
    ti, to, th, tw = tile
    s, K, p = spec.stride, spec.kernel, spec.padding
    cin, cout, oh, ow = program_dims(spec)
    CI, CO, OH, OW = _round_up(cin, ti), _round_up(cout, to), _round_up(oh, th), _round_up(ow, tw)
    HP = max((OH - 1) * s + K, spec.h + 2 * p)
    WP = max((OW - 1) * s + K, spec.w + 2 * p)
    x = b.padded(f"{pid}_x", (cin, spec.h, spec.w), (CI, HP, WP), (0, p, p))
    w = b.padded(f"{pid}_w", (cout, cin, K, K), (CO, CI, K, K))
    bias = b.padded(f"{pid}_bias", (cout,), (CO,)) if spec.bias else None
    out = f"{pid}_y"
    acc = out if (CO, OH, OW) == (cout, oh, ow) else b.memory(f"{pid}_acc", (CO, OH, OW))
    hh, ww = kernel.h, kernel.w
    xt = b.memory(f"{pid}_xt", (ti, hh, ww))
    wt = b.memory(f"{pid}_wt", (to, ti, K, K))
    yt = b.memory(f"{pid}_yt", (to, th, tw))
    bt = b.memory(f"{pid}_biast", (to,)) if bias else None
    for oc in range(CO // to):
        for r in range(OH // th):
            for c in range(OW // tw):
                for ic in range(CI // ti):
                    b.load(x, (CI, HP, WP), (ic * ti, r * th * s, c * tw * s), (ti, hh, ww), xt)
                    b.load(w, (CO, CI, K, K), (oc * to, ic * ti, 0, 0), (to, ti, K, K), wt)
                    args = [xt, wt]
                    if kernel.bias:
                        if bias and ic == 0:
                            b.load(bias, (CO,), (oc * to,), (to,), bt)
                            args.append(bt)
                        else:
                            args.append(zero_bias)
                    b.calls.append(ModuleCall("conv", kernel, tuple(args), (yt,)))
                    b.accumulate(pid, yt, acc, (CO, OH, OW), (oc * to, r * th, c * tw), (to, th, tw), ic == 0)
    if acc != out:
        b.load(acc, (CO, OH, OW), (0, 0, 0), (cout, oh, ow), out)


def shared_kernel(plan: ModularPlan, specs: Mapping[str, OperatorSpec]) -> OperatorSpec:
    """The single tile-sized module every program invokes."""
    first = next(iter(specs.values()))
    tile = plan.shared.tile
    any_bias = any(getattr(s, "bias", False) for s in specs.values())
    if isinstance(first, LinearSpec):
        tm, tk, tn = tile
        return LinearSpec(variant="gemm", m=tm, k=tk, n=tn, bias=any_bias,
                          loop_order=first.loop_order, unroll=first.unroll, inline_mul=first.inline_mul)
    if isinstance(first, ConvSpec):
        ti, to, th, tw = tile
        s, K = first.stride, first.kernel
        return ConvSpec(in_ch=ti, out_ch=to, h=(th - 1) * s + K, w=(tw - 1) * s + K, kernel=K,
                        stride=s, padding=0, groups=1, bias=any_bias,
                        unroll_in=first.unroll_in, unroll_out=first.unroll_out)
    raise UnsupportedSpec(f"modular emission is not implemented for {first.kind}; plan only")


def emit_modular_design(plan: ModularPlan, base_specs: Mapping[str, OperatorSpec],
                        name: str = "modular", data_type: DataType = FLOAT32) -> DesignConfig:
    """One shared tile kernel driven by static iteration loops per program.

    Interfaces are ``<id>_<role>`` as in :func:`direct_design`, so both
    designs accept the same bindings.
    """
    if [p.id for p in plan.programs] != list(base_specs):
        raise FamilyMismatch("plan programs and specs differ")
    families = {family_of(s) for s in base_specs.values()}
    if len(families) != 1:
        raise FamilyMismatch(f"programs mix kernel families {sorted(families)}")
    for prog in plan.programs:
        if program_dims(base_specs[prog.id]) != prog.dims:
            raise PolicyError(f"program {prog.id} dims differ from the plan")
    specs = list(base_specs.values())
    if isinstance(specs[0], ConvSpec):
        if any(s.groups != 1 for s in specs):
            raise UnsupportedSpec("grouped convolution cannot be tiled over channels")
        if len({(s.kernel, s.stride) for s in specs}) != 1:
            raise FamilyMismatch("conv programs must share kernel size and stride")

    kernel = shared_kernel(plan, base_specs)
    b = _Builder()
    zero_bias = None
    if getattr(kernel, "bias", False):
        width = kernel.n if isinstance(kernel, LinearSpec) else kernel.out_ch
        zero_bias = b.memory("zero_bias", (width,), zeros=True)
    ifaces: list[InterfaceDecl] = []
    for prog in plan.programs:
        spec = base_specs[prog.id]
        ins, outs = program_interfaces(prog.id, spec)
        ifaces += ins + outs
        if isinstance(spec, LinearSpec):
            _gemm_program(b, prog.id, spec, plan.shared.tile, kernel, zero_bias)
        else:
            _conv_program(b, prog.id, spec, plan.shared.tile, kernel, zero_bias)
    return _finish(name, list(b.memories.values()), ifaces, b.calls, data_type)


# --------------------------------------------------------------------------
# functional reuse


def _rename(cfg: DesignConfig, prefix: str) -> DesignConfig:
    def r(n):
        return f"{prefix}_{n}"
    return replace(
        cfg,
        memories=tuple(replace(m, name=r(m.name)) for m in cfg.memories),
        interfaces=tuple(replace(i, name=r(i.name)) for i in cfg.interfaces),
        calls=tuple(replace(c, inputs=tuple(map(r, c.inputs)), outputs=tuple(map(r, c.outputs)))
                    for c in cfg.calls),
    )


def share_kernel(programs: Mapping[str, DesignConfig], kernel: str,
                 name: str = "shared") -> DesignConfig:
    """Merge designs that are declared to share one ``kernel`` instance.

    Every program must contain calls of that kind with identical static
    parameters; the merged design then instantiates it once.
    """
    hashes = {}
    for pid, cfg in programs.items():
        found = {c.params.content_hash() for c in cfg.calls if c.kernel == kernel}
        if not found:
            raise FamilyMismatch(f"program {pid} has no {kernel!r} call")
        hashes[pid] = found
    common = set.intersection(*hashes.values())
    if not common:
        raise FamilyMismatch(f"programs {sorted(programs)} have no identical {kernel!r} instance")
    dts = {cfg.synth.data_type for cfg in programs.values()}
    if len(dts) != 1:
        raise FamilyMismatch("programs use different data types")
    merged = [_rename(cfg, pid) for pid, cfg in programs.items()]
    return _finish(name, [m for c in merged for m in c.memories],
                   [i for c in merged for i in c.interfaces],
                   [k for c in merged for k in c.calls], dts.pop())


def distinct_kernels(cfg: DesignConfig) -> int:
    return len({(c.kernel, c.params.content_hash()) for c in cfg.calls})
