"""Parallel execution of tool flows over many designs.

Jobs run on a bounded FIFO thread pool; stages inside a job run in flow
order and a failing stage marks the remaining ones ``skipped``.
"""

from __future__ import annotations

import json
import math
import os
import shlex
import shutil
import signal
import subprocess
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Protocol, Sequence

from .config import FLOW_ORDER, DesignConfig, RunConfig
from .errors import BackendUnavailable, ToolNotFound
from .kernels.specs import (ActSpec, AttnSpec, ConvSpec, DropoutSpec, EltwiseSpec, LinearSpec,
                            MoveSpec, NormSpec, OperatorSpec, PoolSpec, RopeSpec, numel)
from .reports import PPAReport, render_csynth_xml, render_impl_util

STATUSES = ("pass", "fail", "timeout", "skipped")
TOOL_ENV = "FORGEBENCH_HLS_TOOL"


@dataclass(frozen=True)
class Job:
    name: str
    design: DesignConfig
    bundle_dir: Path
    stages: tuple[str, ...]
    timeout_s: float

    def __post_init__(self):
        bad = [s for s in self.stages if s not in FLOW_ORDER]
        if bad:
            raise ValueError(f"unknown stages {bad}")
        order = [FLOW_ORDER.index(s) for s in self.stages]
        if order != sorted(order):
            raise ValueError(f"stages {self.stages} are out of flow order")
        if self.timeout_s <= 0:
            raise ValueError("timeout must be positive")


@dataclass(frozen=True)
class StageOutcome:
    status: str
    log: str = ""
    reports: tuple[str, ...] = ()


@dataclass
class JobResult:
    name: str
    stages: dict[str, str]
    wall_time_s: float = 0.0
    reports: list[str] = field(default_factory=list)
    log: str = ""

    @property
    def passed(self) -> bool:
        return all(s == "pass" for s in self.stages.values())

    def to_dict(self, with_time: bool = True) -> dict:
        d = {"name": self.name, "stages": dict(self.stages), "passed": self.passed,
             "reports": list(self.reports), "log": self.log}
        if with_time:
            d["wall_time_s"] = round(self.wall_time_s, 6)
        return d


class Backend(Protocol):
    name: str

    def check(self) -> None: ...

    def prepare(self, job: Job) -> None: ...

    def run_stage(self, job: Job, stage: str, timeout_s: float) -> StageOutcome: ...


def plan_jobs(configs: Sequence[DesignConfig], run: RunConfig, out_dir=None) -> list[Job]:
    root = Path(out_dir if out_dir is not None else run.output_dir)
    return [Job(cfg.name, cfg, root / "jobs" / cfg.name, tuple(cfg.synth.flow), run.timeout_s)
            for cfg in configs]


def _excerpt(text: str, limit: int = 2000) -> str:
    return text if len(text) <= limit else "..." + text[-limit:]


def _run_job(job: Job, backend: Backend, stop: Optional[threading.Event] = None) -> JobResult:
    start = time.monotonic()
    statuses = {s: "skipped" for s in job.stages}
    if stop is not None and stop.is_set():
        return JobResult(job.name, statuses, 0.0, [], "not started after an earlier failure")
    reports: list[str] = []
    logs: list[str] = []
    try:
        backend.prepare(job)
        for stage in job.stages:
            out = backend.run_stage(job, stage, job.timeout_s)
            statuses[stage] = out.status
            reports.extend(out.reports)
            if out.log:
                logs.append(f"[{stage}] {out.log.strip()}")
            if out.status != "pass":
                break
    except Exception as exc:  # crash isolation: one job's failure stays local
        failed = next((s for s in job.stages if statuses[s] == "skipped"), None)
        if failed is not None:
            statuses[failed] = "fail"
        logs.append(f"backend error: {type(exc).__name__}: {exc}")
    result = JobResult(job.name, statuses, time.monotonic() - start, reports, _excerpt("\n".join(logs)))
    if stop is not None and not result.passed:
        stop.set()
    return result


def execute(jobs: Sequence[Job], backend: Backend, workers: int = 1,
            keep_going: bool = True) -> list[JobResult]:
    """Run jobs with at most ``workers`` in flight; results keep input order.

    With ``keep_going=False`` jobs not yet started when one fails are
    reported with every stage skipped.
    """
    if workers < 1:
        raise ValueError("workers must be >= 1")
    backend.check()
    if not jobs:
        return []
    stop = None if keep_going else threading.Event()
    with ThreadPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(_run_job, job, backend, stop) for job in jobs]
        return [f.result() for f in futures]


def write_results(results: Sequence[JobResult], path, backend: str = "", extra: Optional[dict] = None) -> Path:
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    jobs = []
    for r in results:
        d = r.to_dict()
        # report paths are stored relative to the results file
        d["reports"] = [os.path.relpath(Path(x).resolve(), p.parent.resolve()) for x in r.reports]
        jobs.append(d)
    doc = {"backend": backend, "count": len(results),
           "passed": sum(r.passed for r in results), "jobs": jobs}
    if extra:
        doc.update(extra)
    p.write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")
    return p


# -- mock backend ------------------------------------------------------------

COST_MODEL = "mock-cost-v1"
LUT_BASE, LUT_PER_LOOP, LUT_PER_MUL = 150, 40, 90
FF_PER_LUT = 1.5
DSP_PER_MUL = {"float32": 3, "fixed": 1, "opaque": 1}
BRAM_BITS = 18432


def _clamp(u: int, bound: int) -> int:
    return max(1, min(u, bound))


def multipliers(spec: OperatorSpec) -> int:
    """Parallel multipliers a kernel instantiates under the cost model."""
    if isinstance(spec, LinearSpec):
        bounds = (spec.m, spec.n, spec.k)
        return math.prod(_clamp(u, b) for u, b in zip(spec.unroll, bounds))
    if isinstance(spec, ConvSpec):
        g = max(spec.groups, 1)
        return _clamp(spec.unroll_in, spec.in_ch // g) * _clamp(spec.unroll_out, spec.out_ch)
    if isinstance(spec, AttnSpec):
        return 1 + spec.with_rope
    if isinstance(spec, NormSpec):
        return 1 + spec.affine
    if isinstance(spec, ActSpec):
        return 0 if spec.act in ("relu", "relu6") else 1
    if isinstance(spec, RopeSpec):
        return 2
    if isinstance(spec, (DropoutSpec,)):
        return 1
    if isinstance(spec, EltwiseSpec):
        return int(spec.op == "mul")
    return 0  # move, pool


def loop_levels(spec: OperatorSpec) -> int:
    if isinstance(spec, LinearSpec):
        return 3
    if isinstance(spec, ConvSpec):
        return 6
    if isinstance(spec, AttnSpec):
        return 5
    if isinstance(spec, RopeSpec):
        return 2
    if isinstance(spec, (NormSpec, ActSpec, DropoutSpec, EltwiseSpec)):
        return len(spec.shape)
    if isinstance(spec, PoolSpec):
        return 5
    if isinstance(spec, MoveSpec):
        return len(spec.shape)
    return 1


def estimate(cfg: DesignConfig) -> PPAReport:
    """Synthetic synthesis estimate; a pure function of the design content.

    Each distinct kernel contributes LUT = 150 + 40*loops + 90*muls and
    DSP = muls * (3 for float32, else 1); FF = 1.5*LUT; BRAM counts the
    18 Kb blocks of on-chip memories; latency sums per-call work divided
    by the kernel's multipliers.
    """
    dt = cfg.synth.data_type
    seen = {}
    for call in cfg.calls:
        seen.setdefault((call.kernel, call.params.content_hash()), call.params)
    lut = dsp = 0
    for spec in seen.values():
        muls = multipliers(spec)
        lut += LUT_BASE + LUT_PER_LOOP * loop_levels(spec) + LUT_PER_MUL * muls
        dsp += muls * DSP_PER_MUL[dt.kind]
    bram = sum(math.ceil(numel(m.shape) * dt.storage_bits / BRAM_BITS)
               for m in cfg.memories if m.space == "on_chip")
    latency = 0
    for call in cfg.calls:
        work = sum(numel(s) for s in call.params.output_shapes()) * max(call.params.ops_per_output(), 1)
        latency += 4 + math.ceil(work / max(multipliers(call.params), 1))
    return PPAReport(cfg.synth.top_name, "synth", lut=lut, ff=int(round(FF_PER_LUT * lut)),
                     dsp=dsp, bram=bram, latency_cycles=latency if cfg.calls else 0,
                     clock_ns=round(min(cfg.synth.clock_period_ns, 6.5), 3))


class MockBackend:
    """Deterministic stand-in for the vendor flow.

    ``durations`` maps stages to sleep seconds; ``fail_stages`` maps design
    names to the stage that should fail; designs listed in ``crash`` raise.
    The backend records its peak number of concurrently running stages.
    """

    name = "mock"

    def __init__(self, durations: Optional[dict] = None, fail_stages: Optional[dict] = None,
                 crash: Sequence[str] = (), write_reports: bool = True):
        self.durations = dict(durations or {})
        self.fail_stages = dict(fail_stages or {})
        self.crash = set(crash)
        self.write_reports = write_reports
        self._lock = threading.Lock()
        self._active = 0
        self.peak = 0

    @classmethod
    def from_run_config(cls, run: RunConfig) -> "MockBackend":
        return cls(run.stage_durations, run.fail_stages)

    def check(self) -> None:
        return None

    def prepare(self, job: Job) -> None:
        if job.name in self.crash:
            raise RuntimeError(f"injected crash in {job.name}")

    def _duration(self, job: Job, stage: str) -> float:
        d = self.durations.get(stage, 0.0)
        return float(d(job) if callable(d) else d)

    def run_stage(self, job: Job, stage: str, timeout_s: float) -> StageOutcome:
        with self._lock:
            self._active += 1
            self.peak = max(self.peak, self._active)
        try:
            duration = self._duration(job, stage)
            if duration > timeout_s:
                time.sleep(timeout_s)
                return StageOutcome("timeout", f"exceeded {timeout_s:g} s")
            if duration:
                time.sleep(duration)
            if self.fail_stages.get(job.name) == stage:
                return StageOutcome("fail", "injected failure")
            return StageOutcome("pass", "", self._reports(job, stage))
        finally:
            with self._lock:
                self._active -= 1

    def _reports(self, job: Job, stage: str) -> tuple[str, ...]:
        if not self.write_reports or stage not in ("synth", "impl"):
            return ()
        report = estimate(job.design)
        rdir = Path(job.bundle_dir) / "reports"
        rdir.mkdir(parents=True, exist_ok=True)
        if stage == "synth":
            path = rdir / "csynth.xml"
            text = render_csynth_xml(report, job.design.synth.part, job.design.synth.clock_period_ns)
        else:
            path = rdir / "impl_util.rpt"
            impl = PPAReport(report.design, "impl", report.lut, report.ff, report.dsp, report.bram)
            text = render_impl_util(impl)
        path.write_text(text, encoding="utf-8")
        return (str(path),)


# -- vendor backend ----------------------------------------------------------

class VendorBackend:
    """Runs the generated TCL through an external HLS tool.

    ``command`` is a template with ``{script}``, ``{workdir}`` and ``{log}``
    placeholders.  The environment variable ``FORGEBENCH_HLS_TOOL`` replaces
    the executable (first word) of the template.
    """

    name = "vendor"

    def __init__(self, run: RunConfig, with_testbench: bool = True):
        self.run = run
        self.with_testbench = with_testbench

    def argv(self, script: str, workdir: str, log: str) -> list[str]:
        words = shlex.split(self.run.command)
        if not words:
            raise ToolNotFound("empty command template")
        tool = os.environ.get(TOOL_ENV)
        if tool:
            words[0] = tool
        return [w.format(script=script, workdir=workdir, log=log) for w in words]

    def command(self, script: str, workdir: str, log: str) -> str:
        return shlex.join(self.argv(script, workdir, log))

    def check(self) -> None:
        exe = self.argv("", "", "")[0]
        if shutil.which(exe) is None:
            raise ToolNotFound(f"HLS tool {exe!r} not found (set {TOOL_ENV} or the run command)")

    def prepare(self, job: Job) -> None:
        from .codegen import emit_design, write_bundle
        from .kernels.design import oracle_vectors

        cfg = job.design
        vectors = None
        if self.with_testbench and cfg.synth.data_type.checkable:
            vectors = oracle_vectors(cfg, seed=0)
        bundle = emit_design(cfg, self.run, vectors)
        write_bundle(bundle, Path(job.bundle_dir).parent)

    def run_stage(self, job: Job, stage: str, timeout_s: float) -> StageOutcome:
        from .codegen import emit_build_script

        workdir = Path(job.bundle_dir)
        unit = emit_build_script(job.design, self.run, stages=[stage])
        script = workdir / "scripts" / f"run_{stage}.tcl"
        script.parent.mkdir(parents=True, exist_ok=True)
        script.write_text(unit.text, encoding="utf-8")
        log = workdir / "logs" / f"{stage}.log"
        log.parent.mkdir(parents=True, exist_ok=True)
        argv = self.argv(str(script), str(workdir), str(log))
        with open(workdir / "logs" / f"{stage}.out", "w", encoding="utf-8") as out:
            proc = subprocess.Popen(argv, cwd=workdir, stdout=out, stderr=subprocess.STDOUT,
                                    start_new_session=True)
            try:
                code = proc.wait(timeout=timeout_s)
            except subprocess.TimeoutExpired:
                try:
                    os.killpg(proc.pid, signal.SIGKILL)
                except ProcessLookupError:
                    pass
                proc.wait()
                return StageOutcome("timeout", f"killed after {timeout_s:g} s")
        text = (workdir / "logs" / f"{stage}.out").read_text(encoding="utf-8", errors="replace")
        if code != 0:
            return StageOutcome("fail", f"exit {code}\n{_excerpt(text, 800)}")
        return StageOutcome("pass", "", self._collect(workdir, stage))

    @staticmethod
    def _collect(workdir: Path, stage: str) -> tuple[str, ...]:
        if stage == "synth":
            found = workdir.glob("*_prj/solution1/syn/report/*csynth.xml")
        elif stage == "impl":
            found = workdir.glob("*_prj/solution1/impl/report/verilog/*utilization*.rpt")
        else:
            return ()
        return tuple(sorted(str(p) for p in found))


def make_backend(run: RunConfig, name: Optional[str] = None):
    kind = name or run.backend
    if kind == "mock":
        return MockBackend.from_run_config(run)
    if kind == "vendor":
        return VendorBackend(run)
    raise BackendUnavailable(f"unknown backend {kind!r}")
