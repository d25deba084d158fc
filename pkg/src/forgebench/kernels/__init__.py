"""Operator semantics and the numeric golden model."""

from .design import make_vectors, ops_count, run_design
from .ops import (eval_activation, eval_attention, eval_conv, eval_dropout, eval_elementwise,
                  eval_linear, eval_move, eval_norm, eval_pool, eval_rope, evaluate, softmax)
from .specs import (ACTIVATIONS, ASSOC_ORDERS, CATALOG, LOOP_ORDERS, ActSpec, AttnSpec, ConvSpec,
                    DropoutSpec, EltwiseSpec, LinearSpec, MoveSpec, NormSpec, OperatorSpec, PoolSpec,
                    RopeSpec, parse_spec)

__all__ = [
    "ACTIVATIONS", "ASSOC_ORDERS", "CATALOG", "LOOP_ORDERS",
    "ActSpec", "AttnSpec", "ConvSpec", "DropoutSpec", "EltwiseSpec", "LinearSpec", "MoveSpec",
    "NormSpec", "OperatorSpec", "PoolSpec", "RopeSpec",
    "eval_activation", "eval_attention", "eval_conv", "eval_dropout", "eval_elementwise",
    "eval_linear", "eval_move", "eval_norm", "eval_pool", "eval_rope", "evaluate",
    "make_vectors", "ops_count", "parse_spec", "run_design", "softmax",
]
