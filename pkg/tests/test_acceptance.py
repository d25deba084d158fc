"""Acceptance criteria, one test per criterion.

Each test records a PASS/FAIL line that conftest prints in the terminal
summary, so ``pytest -v`` output carries the verdicts at a glance.
"""

import json
import time

import numpy as np
import pytest

import propcheck
from conftest import needs_cxx
from forgebench.cli import main
from forgebench.codegen import compile_and_run, emit_design, write_bundle
from forgebench.kernels.design import oracle_vectors
from forgebench.modularize import TileSpec, iteration_count, max_tile, min_tile, plan_shared
from forgebench.reports import UtilPercent, change_percent, load_reference_rows, sum_totals
from forgebench.sweep import default_sample, design_dims, family_of

RESULTS: dict[int, tuple[bool, str]] = {}
INSTANCES = 100


def record(n: int, ok: bool, detail: str) -> None:
    RESULTS[n] = (ok, detail)
    assert ok, detail


def test_criterion_1_suite_counts(tmp_path):
    t0 = time.monotonic()
    counts = {}
    for alias, suite in (("gemm", "gemm_chain"), ("dnn", "dnn_block"), ("llm", "llm_block")):
        assert main(["sweep", alias, "--out", str(tmp_path)]) == 0
        manifest = json.loads((tmp_path / suite / "manifest.json").read_text())
        counts[alias] = manifest["count"]
    dt = time.monotonic() - t0
    ok = counts == {"gemm": 1920, "dnn": 2304, "llm": 1944} and dt < 60
    record(1, ok, f"counts {counts} in {dt:.1f} s (limit 60 s)")


def test_criterion_2_tiling_math():
    gemm = [(96, 512, 128), (128, 256, 64), (256, 128, 192)]
    conv = [(64, 64, 14, 14), (128, 128, 7, 7), (128, 128, 14, 14)]
    checks = {
        "gemm min": min_tile(gemm).tile == (32, 128, 64),
        "gemm max": max_tile(gemm).tile == (256, 512, 192),
        "conv iterations": [iteration_count(c, TileSpec((64, 64, 7, 7), "min_gcd")) for c in conv] == [4, 4, 16],
        "heads iterations": [p.iterations for p in plan_shared([("a", (16,)), ("b", (4,))]).programs] == [4, 1],
    }
    bad = [k for k, v in checks.items() if not v]
    record(2, not bad, "all exact" if not bad else f"mismatch in {bad}")


def _reference_residuals():
    """Per-cell |computed - printed| for the Total and Change columns."""
    out = []
    for row in load_reference_rows():
        excluded = row.get("excluded", {})
        parts = [UtilPercent(*p) for p in row["parts"]]
        total = sum_totals(parts)
        change = change_percent(UtilPercent(*row["total"]), UtilPercent(*row["after"]))
        for i, comp in enumerate(("lut", "dsp")):
            for col, got, want, tol in (("total", tuple(total)[i], row["total"][i], 0.05),
                                        ("change", change[i], row["change"][i], 0.15)):
                key = f"{col}.{comp}"
                out.append((row["case"], key, abs(got - want), tol, key in excluded))
    return out


def test_criterion_3_reference_arithmetic():
    t0 = time.monotonic()
    cells = _reference_residuals()
    dt = time.monotonic() - t0
    checked = [c for c in cells if not c[4]]
    bad = [f"{case} {key} off by {err:.2f} (tol {tol})" for case, key, err, tol, _ in checked if err > tol]
    skipped = [f"{case} {key}" for case, key, *_ in cells if _[-1]]
    detail = (f"{len(checked) - len(bad)}/{len(checked)} cells within tolerance, excluded {skipped}, "
              f"{dt * 1000:.1f} ms")
    if bad:
        detail += "; failing: " + "; ".join(bad)
    record(3, not bad and dt < 1.0, detail)


@needs_cxx
def test_criterion_4_oracle_codegen_agreement(tmp_path):
    configs = default_sample(seed=4, count=200, max_dim=64)
    assert len({c.name for c in configs}) == 200 and all(design_dims(c) <= 64 for c in configs)
    t0 = time.monotonic()
    failed = []
    for cfg in configs:
        bundle = emit_design(cfg, vectors=oracle_vectors(cfg, seed=0))
        res = compile_and_run(write_bundle(bundle, tmp_path))
        if not res.passed:
            failed.append((cfg.name, res.output.strip().splitlines()[-1:] if res.output else ""))
    dt = time.monotonic() - t0
    fams = {f: sum(family_of(c) == f for c in configs) for f in ("gemm_chain", "dnn_block", "llm_block")}
    record(4, not failed and dt < 600,
           f"{len(configs) - len(failed)}/{len(configs)} bundles pass csim {fams} in {dt:.0f} s (limit 600 s)"
           + (f"; failing {failed[:5]}" if failed else ""))


def test_criterion_5_modular_fidelity():
    t0 = time.monotonic()
    rng = np.random.default_rng(5)
    failed, kinds = [], {}
    for i in range(50):
        specs, policy, tile = propcheck.random_modular_group(rng, max_dim=32)
        kind = type(next(iter(specs.values()))).__name__
        kinds[(kind, policy)] = kinds.get((kind, policy), 0) + 1
        try:
            propcheck.check_modular_fidelity(specs, policy, tile, seed=i)
        except AssertionError as exc:
            failed.append((i, policy, str(exc)))
    dt = time.monotonic() - t0
    record(5, not failed and dt < 120,
           f"{50 - len(failed)}/50 groups bit-exact (integer-valued float64 inputs) in {dt:.1f} s; "
           f"mix {dict(sorted(kinds.items()))}" + (f"; failing {failed[:3]}" if failed else ""))


def _draw_property_instances(rng):
    """Yield (name, thunk) pairs: INSTANCES random instances of each property."""
    for _ in range(INSTANCES):
        m, k, n = rng.integers(1, 9, size=3)
        yield "chain 6x4 invariance", lambda m=m, k=k, n=n: propcheck.check_chain_invariance(m, k, n, rng)
    for _ in range(INSTANCES):
        r, c, s = int(rng.integers(1, 8)), int(rng.integers(1, 65)), float(10 ** rng.uniform(-3, 2.7))
        yield "softmax rows", lambda r=r, c=c, s=s: propcheck.check_softmax_rows(r, c, s, rng)
    for _ in range(INSTANCES):
        L, h, half = (int(v) for v in rng.integers(1, 9, size=3))
        yield "rope norm", lambda L=L, h=h, half=half: propcheck.check_rope_norm(L, h, half, 10000.0, rng)
    for _ in range(INSTANCES):
        cpg, opg, g = (int(v) for v in rng.integers(1, 4, size=3))
        hw, K = int(rng.integers(3, 7)), int(rng.choice([1, 3]))
        yield "grouped conv", lambda a=(cpg, opg, g, hw, K): propcheck.check_grouped_conv(*a, rng)
    for _ in range(INSTANCES):
        L, hd = int(rng.integers(1, 7)), int(rng.choice([2, 4]))
        heads = int(rng.choice([1, 2, 4, 8]))
        ratio = int(rng.choice([r for r in (1, 2, 4) if heads % r == 0]))
        rope = bool(rng.integers(2))
        yield "attention h=g and L=1", lambda a=(L, hd, heads, ratio, rope): \
            propcheck.check_attention_degenerate(*a, rng)


def test_criterion_6_property_suites():
    rng = np.random.default_rng(6)
    counts, failures = {}, {}
    for name, check in _draw_property_instances(rng):
        counts[name] = counts.get(name, 0) + 1
        try:
            check()
        except AssertionError:
            failures[name] = failures.get(name, 0) + 1
    ok = not failures and all(v >= INSTANCES for v in counts.values())
    record(6, ok, ", ".join(f"{k}: {counts[k] - failures.get(k, 0)}/{counts[k]}" for k in counts))


def test_criterion_7_runner_determinism(tmp_path):
    configs = default_sample(seed=7, count=32, max_dim=64)
    snaps, peaks = {}, {}
    for w in (1, 4, 16):
        snaps[w], peaks[w] = propcheck.mock_run_snapshot(configs, tmp_path / f"w{w}", w,
                                                         durations={"csim": 0.005, "synth": 0.005})
    identical = snaps[1] == snaps[4] == snaps[16]
    capped = all(peaks[w] <= w for w in peaks)
    record(7, identical and capped and len(snaps[1]) == 32,
           f"results identical across workers: {identical}; peak concurrency {peaks}")
