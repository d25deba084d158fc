"""``forgebench`` command line.

Exit codes: 0 success, 1 domain failure (invalid design, failed job,
inconsistent programs), 2 parse or environment failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Optional, Sequence

from . import __version__
from .config import (DesignConfig, load_design, parse_run_config, RunConfig, validate_design)
from .errors import (ArityError, BackendUnavailable, ConfigSyntaxError, FamilyMismatch, FormatError,
                     InvalidAxisValue, PolicyError, SchemaError, UnsupportedSpec, ValidationError)

EXIT_OK, EXIT_FAIL, EXIT_ENV = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse already exits 2; keep the message terse
        self.print_usage(sys.stderr)
        self.exit(EXIT_ENV, f"{self.prog}: error: {message}\n")


def _emit(args, human: str, machine: dict) -> None:
    if args.json:
        print(json.dumps(machine, indent=2, sort_keys=True))
    elif human:
        print(human)


def _err(msg: str) -> None:
    print(f"forgebench: {msg}", file=sys.stderr)


def _load(path: str) -> DesignConfig:
    return load_design(path)


# -- subcommands --------------------------------------------------------------

def cmd_validate(args) -> int:
    cfg = _load(args.config)
    report = validate_design(cfg)
    lines = [str(d) for d in report] or [f"{cfg.name}: ok"]
    _emit(args, "\n".join(lines),
          {"design": cfg.name, "ok": report.ok,
           "diagnostics": [{"path": d.path, "message": d.message} for d in report]})
    return EXIT_OK if report.ok else EXIT_FAIL


def cmd_generate(args) -> int:
    from .codegen import emit_design, write_bundle
    from .kernels.design import oracle_vectors

    cfg = _load(args.config)
    report = validate_design(cfg)
    if not report.ok:
        for d in report:
            _err(str(d))
        return EXIT_FAIL
    vectors = None
    if args.with_testbench:
        if not cfg.synth.data_type.checkable:
            _err(f"{cfg.name}: oracle unavailable for data type {cfg.synth.data_type}")
            return EXIT_FAIL
        vectors = oracle_vectors(cfg, seed=args.seed)
    bundle = emit_design(cfg, vectors=vectors)
    root = write_bundle(bundle, args.out)
    if vectors is not None:
        vec_doc = {k: {n: v.tolist() for n, v in d.items()} for k, d in vectors.items()}
        (root / "tb" / "vectors.json").write_text(json.dumps(vec_doc) + "\n", encoding="utf-8")
    files = sorted(u.path for u in bundle.units)
    _emit(args, f"{cfg.name}: wrote {len(files)} files to {root}",
          {"design": cfg.name, "dir": str(root), "files": files})
    return EXIT_OK


def cmd_sweep(args) -> int:
    from .sweep import SUITE_ALIASES, builtin_suites, expand_grid, sweep_spec_from_dict, write_suite

    suites = builtin_suites()
    key = SUITE_ALIASES.get(args.suite, args.suite)
    if key in suites:
        spec, suite_id = suites[key], key
    else:
        path = Path(args.suite)
        if not path.exists():
            _err(f"unknown suite {args.suite!r} (expected gemm, dnn, llm or a spec file)")
            return EXIT_ENV
        try:
            spec = sweep_spec_from_dict(json.loads(path.read_text(encoding="utf-8")))
        except json.JSONDecodeError as exc:
            raise ConfigSyntaxError(exc.msg, exc.lineno, exc.colno) from None
        suite_id = path.stem
    configs = expand_grid(spec)
    manifest = write_suite(configs, Path(args.out) / suite_id, suite_id)
    _emit(args, str(manifest["count"]),
          {"suite": suite_id, "count": manifest["count"], "dir": str(Path(args.out) / suite_id)})
    return EXIT_OK


def _program_specs(doc: dict):
    from .kernels.specs import parse_spec

    specs, dims = {}, []
    for i, prog in enumerate(doc.get("programs", [])):
        if not isinstance(prog, dict) or "id" not in prog:
            raise SchemaError(f"programs[{i}]", "expected an object with an 'id'")
        if "kernel" in prog:
            specs[prog["id"]] = parse_spec(prog["kernel"], prog.get("params", {}), f"programs[{i}].params")
        elif "dims" in prog:
            dims.append((prog["id"], prog["dims"]))
        else:
            raise SchemaError(f"programs[{i}]", "needs 'dims' or 'kernel' and 'params'")
    if specs and dims:
        raise SchemaError("programs", "mix of dims-only and kernel programs")
    return specs, dims


def cmd_modularize(args) -> int:
    from .modularize import (emit_modular_design, plan_for_specs, plan_shared, share_kernel)
    from .config import dumps_design

    path = Path(args.programs)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigSyntaxError(exc.msg, exc.lineno, exc.colno) from None
    if not isinstance(doc, dict):
        raise SchemaError("", "expected a JSON object")
    out = Path(args.out)

    if "share" in doc:
        share = doc["share"]
        designs = {pid: load_design(path.parent / p) for pid, p in share["programs"].items()}
        merged = share_kernel(designs, share["kernel"], doc.get("name", "shared"))
        out.mkdir(parents=True, exist_ok=True)
        (out / f"{merged.name}.json").write_text(dumps_design(merged), encoding="utf-8")
        _emit(args, f"{merged.name}: {len(designs)} programs share {share['kernel']}",
              {"design": merged.name, "kernel": share["kernel"], "programs": sorted(designs)})
        return EXIT_OK

    policy = {"min": "min_gcd", "max": "max_fit", "custom": "custom"}[args.policy]
    tile = args.tile or doc.get("tile")
    specs, dims = _program_specs(doc)
    if specs:
        plan = plan_for_specs(specs, policy, tile)
    else:
        plan = plan_shared(dims, policy, tile)
    out.mkdir(parents=True, exist_ok=True)
    (out / "plan.json").write_text(plan.dumps(), encoding="utf-8")
    written = ["plan.json"]
    if specs:
        try:
            design = emit_modular_design(plan, specs, name=doc.get("name", "modular"))
        except UnsupportedSpec as exc:
            _err(f"design not emitted: {exc}")
        else:
            (out / f"{design.name}.json").write_text(dumps_design(design), encoding="utf-8")
            written.append(f"{design.name}.json")
    lines = [f"tile {tuple(plan.shared.tile)} ({plan.shared.policy})"]
    lines += [f"{p.id}: {p.iterations} iterations, grid {tuple(p.grid)}, padding {tuple(p.padding)}"
              for p in plan.programs]
    _emit(args, "\n".join(lines), {**plan.to_dict(), "written": written})
    return EXIT_OK


def _load_configs(target: Path) -> list[DesignConfig]:
    from .sweep import load_suite

    if target.is_dir():
        return load_suite(target)
    return [load_design(target)]


def cmd_run(args) -> int:
    from .runner import MockBackend, VendorBackend, execute, plan_jobs, write_results, COST_MODEL

    run = RunConfig()
    if args.run_config:
        run = parse_run_config(Path(args.run_config).read_text(encoding="utf-8"))
    backend_name = args.backend or run.backend
    workers = args.workers or run.workers
    configs = _load_configs(Path(args.target))
    bad = [(c.name, d) for c in configs for d in validate_design(c)]
    if bad:
        for name, d in bad:
            _err(f"{name}: {d}")
        return EXIT_FAIL
    backend = MockBackend.from_run_config(run) if backend_name == "mock" else VendorBackend(run)
    out = Path(args.out)
    jobs = plan_jobs(configs, run, out)
    results = execute(jobs, backend, workers, keep_going=args.keep_going)
    extra = {"cost_model": COST_MODEL} if backend_name == "mock" else None
    write_results(results, out / "run_results.json", backend_name, extra)
    failed = [r.name for r in results if not r.passed]
    human = [f"{r.name}: " + " ".join(f"{s}={v}" for s, v in r.stages.items()) for r in results]
    human.append(f"{len(results) - len(failed)}/{len(results)} jobs passed")
    _emit(args, "\n".join(human), {"count": len(results), "failed": failed,
                                    "results": str(out / "run_results.json")})
    return EXIT_OK if not failed else EXIT_FAIL


def _report_for(job: dict, base: Path):
    from .reports import parse_report_file

    paths = [Path(p) if Path(p).is_absolute() else base / p for p in job.get("reports", [])]
    if not paths:
        return None
    impl = [p for p in paths if p.suffix == ".rpt"]
    return parse_report_file((impl or paths)[-1])


def _util_of(item, base: Path, cap):
    from .reports import UtilPercent, parse_report_file, to_percent

    if isinstance(item, str):
        return to_percent(parse_report_file(base / item), cap)
    if isinstance(item, (list, tuple)) and len(item) == 2:
        return UtilPercent(float(item[0]), float(item[1]))
    raise SchemaError("rows", f"expected a report path or [lut_pct, dsp_pct], got {item!r}")


def cmd_report(args) -> int:
    from .reports import (aggregate_suite, builtin_device, load_device, modularization_summary,
                          render_table_md, suite_csv, suite_json)

    cap = load_device(args.device) if args.device else builtin_device()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    machine: dict = {"device": cap.part, "written": []}
    human = []
    if args.results:
        res_dir = Path(args.results)
        res_path = res_dir / "run_results.json" if res_dir.is_dir() else res_dir
        doc = json.loads(res_path.read_text(encoding="utf-8"))
        items = []
        for job in doc["jobs"]:
            report = _report_for(job, res_path.parent)
            items.append((job["name"], report, "pass" if job["passed"] else "fail"))
        rows = aggregate_suite(items, cap)
        (out / "summary.csv").write_text(suite_csv(rows), encoding="utf-8", newline="")
        (out / "summary.json").write_text(suite_json(rows), encoding="utf-8")
        machine["written"] += ["summary.csv", "summary.json"]
        machine["rows"] = len(rows)
        human.append(f"{len(rows)} designs summarized in {out / 'summary.csv'}")
    if args.modular:
        mpath = Path(args.modular)
        mdoc = json.loads(mpath.read_text(encoding="utf-8"))
        mrows = []
        for row in mdoc["rows"]:
            mrows.append(modularization_summary(
                [_util_of(p, mpath.parent, cap) for p in row["parts"]],
                _util_of(row["shared"], mpath.parent, cap),
                _util_of(row["after"], mpath.parent, cap), cap, row.get("case", "")))
        (out / "modular_table.md").write_text(render_table_md(mrows), encoding="utf-8")
        machine["written"].append("modular_table.md")
        machine["modular_rows"] = [
            {"case": r.case, "total": list(r.total), "after": list(r.after), "change": list(r.change)}
            for r in mrows]
        human.append(render_table_md(mrows).rstrip())
    if not args.results and not args.modular:
        _err("nothing to report: give a results directory and/or --modular")
        return EXIT_ENV
    _emit(args, "\n".join(human), machine)
    return EXIT_OK


# -- entry point --------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="forgebench", description="HLS benchmark design generator")
    parser.add_argument("--version", action="version", version=f"forgebench {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--json", action="store_true", help="machine-readable stdout")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("validate", parents=[common], help="check a design config")
    p.add_argument("config")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("generate", parents=[common], help="emit HLS sources for a design")
    p.add_argument("config")
    p.add_argument("--out", required=True)
    p.add_argument("--with-testbench", action="store_true")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("sweep", parents=[common], help="enumerate a benchmark suite")
    p.add_argument("suite", help="gemm, dnn, llm or a sweep spec JSON file")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("modularize", parents=[common], help="plan a shared tile across programs")
    p.add_argument("programs")
    p.add_argument("--policy", choices=("min", "max", "custom"), default="min")
    p.add_argument("--tile", type=int, nargs="+")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_modularize)

    p = sub.add_parser("run", parents=[common], help="run tool flows over designs")
    p.add_argument("target", help="suite directory or a single design config")
    p.add_argument("--run-config")
    p.add_argument("--backend", choices=("mock", "vendor"))
    p.add_argument("--workers", type=int)
    p.add_argument("--keep-going", action="store_true",
                   help="start remaining jobs after a failure (exit status is still 1)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("report", parents=[common], help="summarize run results")
    p.add_argument("results", nargs="?", help="run output directory or run_results.json")
    p.add_argument("--device", help="device capacity file (default: ZCU102)")
    p.add_argument("--modular", help="JSON rows of before/shared/after utilization")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_report)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "workers", None) is not None and args.workers < 1:
        _err("--workers must be >= 1")
        return EXIT_ENV
    try:
        return args.func(args)
    except (ConfigSyntaxError, SchemaError, FormatError, BackendUnavailable, OSError,
            json.JSONDecodeError) as exc:
        _err(f"{type(exc).__name__}: {exc}")
        return EXIT_ENV
    except KeyError as exc:
        _err(f"missing field {exc}")
        return EXIT_ENV
    except ValidationError as exc:
        _err(str(exc))
        return EXIT_FAIL
    except (ArityError, PolicyError, FamilyMismatch, InvalidAxisValue, UnsupportedSpec) as exc:
        _err(f"{type(exc).__name__}: {exc}")
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
