import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import propcheck
from conftest import gemm_design
from forgebench.config import validate_design
from forgebench.errors import ArityError, FamilyMismatch, PolicyError, UnsupportedSpec
from forgebench.kernels import AttnSpec, ConvSpec, LinearSpec
from forgebench.kernels.design import make_vectors, run_design
from forgebench.modularize import (TileSpec, direct_design, distinct_kernels, emit_modular_design,
                                   iteration_count, max_tile, min_tile, plan_for_specs, plan_shared,
                                   program_dims, share_kernel)

GEMM_GROUP = [(96, 512, 128), (128, 256, 64), (256, 128, 192)]


def test_gemm_tiles_frozen():
    assert min_tile(GEMM_GROUP).tile == (32, 128, 64)
    assert max_tile(GEMM_GROUP).tile == (256, 512, 192)


def test_two_program_plans_frozen():
    progs = [("a", (128, 64, 64)), ("b", (64, 128, 64))]
    lo = plan_shared(progs, "min_gcd")
    assert lo.shared.tile == (64, 64, 64)
    assert [p.iterations for p in lo.programs] == [2, 2]
    hi = plan_shared(progs, "max_fit")
    assert hi.shared.tile == (128, 128, 64)
    assert [p.padding for p in hi.programs] == [(0, 64, 0), (64, 0, 0)]
    assert hi.latency("a") == 128 * 128 * 64


def test_conv_and_attention_iterations():
    tile = TileSpec((64, 64, 7, 7), "min_gcd")
    counts = [iteration_count(d, tile) for d in [(64, 64, 14, 14), (128, 128, 7, 7), (128, 128, 14, 14)]]
    assert counts == [4, 4, 16]
    plan = plan_shared([("a", (16,)), ("b", (4,))], "min_gcd")
    assert [p.iterations for p in plan.programs] == [4, 1]


def test_errors():
    with pytest.raises(ArityError):
        min_tile([(4, 4)])
    with pytest.raises(ArityError):
        max_tile([(4, 4), (4, 4, 4)])
    with pytest.raises(PolicyError):
        iteration_count((6, 6), TileSpec((4, 4), "min_gcd"))
    with pytest.raises(PolicyError):
        iteration_count((6, 6), TileSpec((4, 4), "max_fit"))
    with pytest.raises(PolicyError):
        plan_shared([("a", (4,)), ("b", (2,))], "custom")
    with pytest.raises(PolicyError):
        plan_shared([("a", (4,)), ("b", (2,))], "fastest")
    with pytest.raises(PolicyError):
        TileSpec((0, 2))
    with pytest.raises(FamilyMismatch):
        plan_for_specs({"a": LinearSpec(variant="gemm", m=2, k=2, n=2),
                        "b": ConvSpec(in_ch=2, out_ch=2, h=4, w=4)})
    with pytest.raises(FamilyMismatch):
        program_dims(LinearSpec(variant="dot", k=4))


def test_custom_policy_pads():
    plan = plan_shared([("a", (5, 7)), ("b", (4, 4))], "custom", tile=(3, 3))
    a, b = plan.programs
    assert a.grid == (2, 3) and a.padding == (1, 2)
    assert b.grid == (2, 2) and b.padding == (2, 2)
    doc = json.loads(plan.dumps())
    assert doc["programs"][0]["latency"] == 6 * 9


def test_attention_is_plan_only():
    specs = {"a": AttnSpec(seq_len=4, hidden=64, heads=16, kv_groups=16),
             "b": AttnSpec(seq_len=4, hidden=16, heads=4, kv_groups=4)}
    plan = plan_for_specs(specs, "min_gcd")
    assert [p.iterations for p in plan.programs] == [4, 1]
    with pytest.raises(UnsupportedSpec):
        emit_modular_design(plan, specs)


def test_grouped_conv_rejected():
    specs = {"a": ConvSpec(in_ch=4, out_ch=4, h=6, w=6, groups=2),
             "b": ConvSpec(in_ch=2, out_ch=2, h=6, w=6)}
    with pytest.raises(UnsupportedSpec):
        emit_modular_design(plan_for_specs(specs, "max_fit"), specs)


def test_conv_kernel_mismatch_rejected():
    specs = {"a": ConvSpec(in_ch=2, out_ch=2, h=6, w=6, kernel=3),
             "b": ConvSpec(in_ch=2, out_ch=2, h=4, w=4, kernel=1)}
    with pytest.raises(FamilyMismatch):
        emit_modular_design(plan_for_specs(specs, "max_fit"), specs)


@pytest.mark.parametrize("policy,tile", [("min_gcd", None), ("max_fit", None), ("custom", (3, 2, 3))])
def test_gemm_modular_matches_direct(policy, tile):
    specs = {"a": LinearSpec(variant="gemm", m=4, k=6, n=6, bias=True),
             "b": LinearSpec(variant="gemm", m=2, k=4, n=3)}
    plan = propcheck.check_modular_fidelity(specs, policy, tile, seed=3)
    modular = emit_modular_design(plan, specs)
    assert validate_design(modular).ok
    linear = {c.params.content_hash() for c in modular.calls if c.kernel == "linear"}
    assert len(linear) == 1


@pytest.mark.parametrize("stride", [1, 2])
def test_conv_modular_matches_direct(stride):
    specs = {"a": ConvSpec(in_ch=4, out_ch=4, h=9, w=9, kernel=3, stride=stride, padding=1),
             "b": ConvSpec(in_ch=2, out_ch=6, h=5, w=5, kernel=3, stride=stride, padding=1, bias=True)}
    for policy in ("min_gcd", "max_fit"):
        propcheck.check_modular_fidelity(specs, policy, None, seed=11)


def test_direct_and_modular_share_interfaces():
    specs = {"x": LinearSpec(variant="gemm", m=4, k=4, n=4), "y": LinearSpec(variant="gemm", m=2, k=2, n=2)}
    direct = direct_design(specs)
    modular = emit_modular_design(plan_for_specs(specs), specs)
    assert {i.name for i in direct.interfaces} == {i.name for i in modular.interfaces}


def test_share_kernel_merges_identical_instances():
    a = gemm_design(name="a", act="relu")
    b = gemm_design(name="b", act="sigmoid")
    merged = share_kernel({"a": a, "b": b}, "linear")
    assert validate_design(merged).ok
    assert distinct_kernels(merged) == 3  # one linear, two activations
    bind = make_vectors(merged, 0)
    out = run_design(merged, bind)
    ref = run_design(a, {"A": bind["a_A"], "B": bind["a_B"]})
    assert np.array_equal(out["a_C"], ref["C"])
    with pytest.raises(FamilyMismatch):
        share_kernel({"a": a, "c": gemm_design(m=3, name="c")}, "linear")


dims3 = st.tuples(*[st.integers(1, 64)] * 3)


@given(st.lists(dims3, min_size=2, max_size=5), st.randoms(use_true_random=False))
def test_tiles_permutation_invariant(progs, rnd):
    shuffled = list(progs)
    rnd.shuffle(shuffled)
    assert min_tile(progs) == min_tile(shuffled)
    assert max_tile(progs) == max_tile(shuffled)
    lo, hi = min_tile(progs).tile, max_tile(progs).tile
    for p in progs:
        assert all(d % t == 0 for d, t in zip(p, lo))
        assert all(t >= d for d, t in zip(p, hi))
        assert iteration_count(p, max_tile(progs)) == 1


@given(st.lists(dims3, min_size=2, max_size=4), st.integers(0, 2), st.integers(1, 4))
def test_iterations_monotone(progs, axis, factor):
    """Scaling one program dim by an integer never reduces its iteration count."""
    tile = min_tile(progs)
    grown = list(progs[0])
    grown[axis] *= factor
    assert iteration_count(grown, tile) == iteration_count(progs[0], tile) * factor
    big = TileSpec(tuple(max(t, 1) for t in tile.tile), "custom")
    assert iteration_count(grown, big) >= iteration_count(progs[0], big)


@settings(max_examples=25)
@given(st.integers(0, 2**31))
def test_random_groups_bit_exact(seed):
    rng = np.random.default_rng(seed)
    specs, policy, tile = propcheck.random_modular_group(rng, max_dim=16)
    propcheck.check_modular_fidelity(specs, policy, tile, seed)
