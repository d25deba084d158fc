"""Whole-design golden execution and test-vector generation."""

from __future__ import annotations

from typing import TYPE_CHECKING, Mapping, Optional

import numpy as np

from ..errors import ForgeBenchError, OracleError, ShapeError
from .ops import as_tensor, evaluate

if TYPE_CHECKING:
    from ..config import DesignConfig


def run_design(cfg: DesignConfig, bindings: Mapping[str, np.ndarray]) -> dict[str, np.ndarray]:
    """Execute the call sequence over a buffer environment.

    Returns every ``out``/``inout`` interface tensor.
    """
    env: dict[str, np.ndarray] = {}
    for iface in cfg.interfaces:
        if iface.direction in ("in", "inout"):
            if iface.name not in bindings:
                raise OracleError(f"missing binding for input interface {iface.name!r}")
            t = as_tensor(bindings[iface.name])
            if t.shape != iface.shape:
                raise ShapeError(f"binding {iface.name!r} has shape {t.shape}, expected {iface.shape}")
            env[iface.name] = t
    for mem in cfg.memories:
        if mem.init == "zeros":
            env[mem.name] = np.zeros(mem.shape)

    for ci, call in enumerate(cfg.calls):
        try:
            missing = [n for n in call.inputs if n not in env]
            if missing:
                raise OracleError(f"buffers {missing} are undefined")
            outs = evaluate(call.params, [env[n] for n in call.inputs],
                            [env.get(n) for n in call.outputs])
        except OracleError as exc:
            if exc.call_index is not None:
                raise
            raise OracleError(str(exc), ci) from exc
        except ForgeBenchError as exc:
            raise OracleError(f"{type(exc).__name__}: {exc}", ci) from exc
        for name, value in zip(call.outputs, outs):
            env[name] = value

    return {i.name: env[i.name] for i in cfg.interfaces
            if i.direction in ("out", "inout") and i.name in env}


def _input_roles(cfg: DesignConfig) -> dict[str, str]:
    roles: dict[str, str] = {}
    for call in cfg.calls:
        names = [n for n, _ in call.params.operands()[0]]
        for buf, role in zip(call.inputs, names):
            roles.setdefault(buf, role)
    return roles


def make_vectors(cfg: DesignConfig, seed: int = 0, integer: bool = False,
                 scale: Optional[float] = None) -> dict[str, np.ndarray]:
    """Random input bindings on the design's data-type grid.

    Variances fed to batchnorm are kept positive.  ``integer=True`` draws
    small integers so that every summation order is exact in float64.
    """
    rng = np.random.default_rng(seed)
    roles = _input_roles(cfg)
    dt = cfg.synth.data_type
    out = {}
    for iface in cfg.interfaces:
        if iface.direction not in ("in", "inout"):
            continue
        role = roles.get(iface.name, "")
        if integer:
            lo = 1 if role == "var" else -4
            t = rng.integers(lo, 5, size=iface.shape).astype(np.float64)
        elif role == "var":
            t = rng.uniform(0.5, 1.5, size=iface.shape)
        else:
            t = rng.uniform(-0.5, 0.5, size=iface.shape) * (scale or 1.0)
        out[iface.name] = dt.quantize(t)
    return out


def ops_count(cfg: DesignConfig) -> int:
    return sum(call.params.ops_per_output() for call in cfg.calls)


def oracle_vectors(cfg: "DesignConfig", seed: int = 0, integer: bool = False) -> dict:
    """Inputs drawn by ``make_vectors`` plus the golden outputs for them."""
    inputs = make_vectors(cfg, seed, integer=integer)
    return {"inputs": inputs, "outputs": run_design(cfg, inputs)}
