"""PPA report parsing, device-relative utilization and suite aggregation."""

from __future__ import annotations

import csv
import io
import json
import re
import xml.etree.ElementTree as ET
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence, Union

from .errors import FormatError

FORMATS = ("csynth_xml", "impl_util")


@dataclass(frozen=True)
class PPAReport:
    design: str
    stage: str  # "synth" or "impl"
    lut: int
    ff: int
    dsp: int
    bram: int  # 18 Kb blocks
    latency_cycles: Optional[int] = None
    clock_ns: Optional[float] = None
    power_w: Optional[float] = None

    def __post_init__(self):
        for name in ("lut", "ff", "dsp", "bram"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")


@dataclass(frozen=True)
class DeviceCapacity:
    part: str
    lut: int
    ff: int
    dsp: int
    bram: int

    def __post_init__(self):
        for name in ("lut", "ff", "dsp", "bram"):
            if getattr(self, name) <= 0:
                raise ValueError(f"device {name} capacity must be positive")


@dataclass(frozen=True)
class UtilPercent:
    lut_pct: float
    dsp_pct: float

    def display(self) -> str:
        return f"({self.lut_pct:.2f}, {self.dsp_pct:.2f})"

    def __iter__(self):
        return iter((self.lut_pct, self.dsp_pct))


def load_device(path) -> DeviceCapacity:
    """Read a device file; raises FileNotFoundError or FormatError."""
    text = Path(path).read_text(encoding="utf-8")
    try:
        doc = json.loads(text)
        return DeviceCapacity(str(doc["part"]), int(doc["lut"]), int(doc["ff"]),
                              int(doc["dsp"]), int(doc["bram_18k"]))
    except json.JSONDecodeError as exc:
        raise FormatError(str(path), f"not JSON: {exc.msg}") from None
    except KeyError as exc:
        raise FormatError(f"{path}:{exc.args[0]}", "missing field") from None
    except (TypeError, ValueError) as exc:
        raise FormatError(str(path), str(exc)) from None


def builtin_device(name: str = "zcu102") -> DeviceCapacity:
    from importlib import resources

    ref = resources.files("forgebench").joinpath("data", "devices", f"{name}.json")
    with resources.as_file(ref) as p:
        return load_device(p)


# -- csynth XML -----------------------------------------------------------

_RESOURCE_TAGS = {"lut": ("LUT",), "ff": ("FF",), "dsp": ("DSP", "DSP48E"), "bram": ("BRAM_18K",)}


def _xml_int(root: ET.Element, path: str, tags: Sequence[str]) -> int:
    for tag in tags:
        node = root.find(f"{path}/{tag}")
        if node is not None:
            try:
                return int((node.text or "").strip())
            except ValueError:
                raise FormatError(f"profile/{path}/{tag}", f"not an integer: {node.text!r}") from None
    raise FormatError(f"profile/{path}/{tags[0]}", "missing element")


def _parse_csynth(text: str) -> PPAReport:
    try:
        root = ET.fromstring(text)
    except ET.ParseError as exc:
        line, col = exc.position
        raise FormatError(f"line {line}, column {col}", "malformed XML") from None
    if root.tag != "profile":
        raise FormatError(root.tag, "expected <profile> root")
    counts = {k: _xml_int(root, "AreaEstimates/Resources", tags) for k, tags in _RESOURCE_TAGS.items()}
    top = root.findtext("UserAssignments/TopModelName")
    if top is None:
        raise FormatError("profile/UserAssignments/TopModelName", "missing element")

    latency = None
    lat_path = "PerformanceEstimates/SummaryOfOverallLatency/Worst-caseLatency"
    lat = root.findtext(lat_path)
    if lat is not None and lat.strip() not in ("", "undef"):
        try:
            latency = int(lat.strip())
        except ValueError:
            raise FormatError(f"profile/{lat_path}", f"not an integer: {lat!r}") from None
    clock = None
    clk_path = "PerformanceEstimates/SummaryOfTimingAnalysis/EstimatedClockPeriod"
    clk = root.findtext(clk_path)
    if clk is not None and clk.strip():
        try:
            clock = float(clk)
        except ValueError:
            raise FormatError(f"profile/{clk_path}", f"not a number: {clk!r}") from None
    return PPAReport(top.strip(), "synth", latency_cycles=latency, clock_ns=clock, **counts)


def render_csynth_xml(r: PPAReport, part: str = "xczu9eg-ffvb1156-2-e",
                      target_ns: float = 10.0) -> str:
    """csynth-style XML document carrying the fields of ``r``."""
    root = ET.Element("profile")
    ET.SubElement(ET.SubElement(root, "ReportVersion"), "Version").text = "forgebench"
    ua = ET.SubElement(root, "UserAssignments")
    ET.SubElement(ua, "Part").text = part
    ET.SubElement(ua, "TopModelName").text = r.design
    ET.SubElement(ua, "TargetClockPeriod").text = f"{target_ns:.2f}"
    perf = ET.SubElement(root, "PerformanceEstimates")
    timing = ET.SubElement(perf, "SummaryOfTimingAnalysis")
    if r.clock_ns is not None:
        ET.SubElement(timing, "EstimatedClockPeriod").text = repr(float(r.clock_ns))
    lat = ET.SubElement(perf, "SummaryOfOverallLatency")
    ET.SubElement(lat, "Worst-caseLatency").text = (
        "undef" if r.latency_cycles is None else str(r.latency_cycles))
    res = ET.SubElement(ET.SubElement(root, "AreaEstimates"), "Resources")
    for key, tag in (("bram", "BRAM_18K"), ("dsp", "DSP"), ("ff", "FF"), ("lut", "LUT")):
        ET.SubElement(res, tag).text = str(getattr(r, key))
    ET.indent(root)
    return '<?xml version="1.0" encoding="UTF-8"?>\n' + ET.tostring(root, encoding="unicode") + "\n"


# -- implementation utilization text --------------------------------------

_UTIL_ROWS = {
    "lut": ("CLB LUTs", "Slice LUTs"),
    "ff": ("CLB Registers", "Slice Registers"),
    "bram": ("Block RAM Tile",),
    "dsp": ("DSPs",),
}
_ROW_RE = re.compile(r"^\|\s*([^|]+?)\s*\|\s*([0-9.]+)\s*\|")


def _parse_impl(text: str) -> PPAReport:
    design = None
    power = None
    rows: dict[str, str] = {}
    for line in text.splitlines():
        m = re.match(r"^\|\s*Design\s*:\s*(\S+)", line)
        if m:
            design = m.group(1)
            continue
        m = re.match(r"^\|\s*Total On-Chip Power \(W\)\s*\|\s*([0-9.]+)", line)
        if m:
            power = float(m.group(1))
            continue
        m = _ROW_RE.match(line)
        if m:
            rows.setdefault(m.group(1), m.group(2))
    if design is None:
        raise FormatError("header/Design", "missing design line")
    counts = {}
    for key, labels in _UTIL_ROWS.items():
        raw = next((rows[lab] for lab in labels if lab in rows), None)
        if raw is None:
            raise FormatError(f"table/{labels[0]}", "missing row")
        try:
            value = float(raw)
        except ValueError:
            raise FormatError(f"table/{labels[0]}", f"not a number: {raw!r}") from None
        # one Block RAM tile holds two 18 Kb blocks
        counts[key] = int(round(value * 2)) if key == "bram" else int(round(value))
    return PPAReport(design, "impl", power_w=power, **counts)


def render_impl_util(r: PPAReport, cap: Optional[DeviceCapacity] = None) -> str:
    """Vivado ``report_utilization``-style text for ``r``."""
    def row(label, used, avail):
        pct = f"{100 * used / avail:.2f}" if avail else "0.00"
        used_s = f"{used:g}" if isinstance(used, float) else str(used)
        return f"| {label:<26} | {used_s:>6} | {0:>5} | {0:>10} | {avail:>9} | {pct:>5} |"

    cap = cap or DeviceCapacity("xczu9eg-ffvb1156-2-e", 274080, 548160, 2520, 1824)
    sep = "+" + "-" * 28 + "+" + "-" * 8 + "+" + "-" * 7 + "+" + "-" * 12 + "+" + "-" * 11 + "+" + "-" * 7 + "+"
    lines = [
        "Copyright: forgebench mock implementation report",
        "| Tool Version : forgebench",
        f"| Design       : {r.design}",
        f"| Device       : {cap.part}",
        "",
        "1. Utilization",
        "",
        sep,
        f"| {'Site Type':<26} | {'Used':>6} | Fixed | Prohibited | Available | Util% |",
        sep,
        row("CLB LUTs", r.lut, cap.lut),
        row("CLB Registers", r.ff, cap.ff),
        row("Block RAM Tile", r.bram / 2, cap.bram // 2),
        row("DSPs", r.dsp, cap.dsp),
        sep,
    ]
    if r.power_w is not None:
        lines += ["", f"| Total On-Chip Power (W) | {r.power_w} |"]
    return "\n".join(lines) + "\n"


def parse_report(text: str, fmt: str) -> PPAReport:
    if fmt == "csynth_xml":
        return _parse_csynth(text)
    if fmt == "impl_util":
        return _parse_impl(text)
    raise ValueError(f"unknown report format {fmt!r}; expected one of {FORMATS}")


def parse_report_file(path) -> PPAReport:
    p = Path(path)
    fmt = "csynth_xml" if p.suffix == ".xml" else "impl_util"
    return parse_report(p.read_text(encoding="utf-8"), fmt)


# -- utilization arithmetic ------------------------------------------------

def to_percent(r: PPAReport, cap: DeviceCapacity) -> UtilPercent:
    return UtilPercent(100.0 * r.lut / cap.lut, 100.0 * r.dsp / cap.dsp)


def _change(before: float, after: float) -> Optional[float]:
    if before == 0:
        return None
    return 100.0 * (after - before) / before


def change_percent(before: UtilPercent, after: UtilPercent) -> tuple[Optional[float], Optional[float]]:
    """Relative change per component; ``None`` marks a zero baseline."""
    return (_change(before.lut_pct, after.lut_pct), _change(before.dsp_pct, after.dsp_pct))


def format_change(change: Sequence[Optional[float]]) -> str:
    return "(" + ", ".join("undef" if c is None else f"{c:.2f}" for c in change) + ")"


def sum_totals(parts: Iterable[UtilPercent]) -> UtilPercent:
    lut = dsp = 0.0
    for p in parts:
        lut += p.lut_pct
        dsp += p.dsp_pct
    return UtilPercent(lut, dsp)


# -- suite aggregation -----------------------------------------------------

SUITE_COLUMNS = ("design", "status", "lut", "ff", "dsp", "bram", "lut_pct", "dsp_pct",
                 "latency_cycles", "clock_ns")


@dataclass(frozen=True)
class SuiteRow:
    design: str
    status: str
    report: Optional[PPAReport]
    util: Optional[UtilPercent]

    def cells(self) -> dict:
        r, u = self.report, self.util

        def opt(v):
            return "" if v is None else v
        return {
            "design": self.design,
            "status": self.status,
            "lut": opt(r and r.lut), "ff": opt(r and r.ff),
            "dsp": opt(r and r.dsp), "bram": opt(r and r.bram),
            "lut_pct": "" if u is None else f"{u.lut_pct:.4f}",
            "dsp_pct": "" if u is None else f"{u.dsp_pct:.4f}",
            "latency_cycles": opt(r.latency_cycles) if r else "",
            "clock_ns": opt(r.clock_ns) if r else "",
        }


ResultItem = Union[tuple[str, Optional[PPAReport]], tuple[str, Optional[PPAReport], str]]


def aggregate_suite(results: Iterable[ResultItem], cap: DeviceCapacity) -> list[SuiteRow]:
    """Rows sorted by design id. Items are ``(id, report)`` or ``(id, report, status)``."""
    rows = []
    for item in results:
        design, report = item[0], item[1]
        status = item[2] if len(item) > 2 else ("pass" if report is not None else "fail")
        rows.append(SuiteRow(design, status, report, None if report is None else to_percent(report, cap)))
    return sorted(rows, key=lambda r: r.design)


def suite_csv(rows: Sequence[SuiteRow]) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=SUITE_COLUMNS)  # CRLF line ends per RFC 4180
    writer.writeheader()
    for row in rows:
        writer.writerow(row.cells())
    return buf.getvalue()


def suite_json(rows: Sequence[SuiteRow]) -> str:
    out = []
    for row in rows:
        out.append({
            "design": row.design,
            "status": row.status,
            "report": None if row.report is None else asdict(row.report),
            "lut_pct": None if row.util is None else row.util.lut_pct,
            "dsp_pct": None if row.util is None else row.util.dsp_pct,
        })
    return json.dumps(out, indent=2) + "\n"


# -- modularization rows ----------------------------------------------------

@dataclass(frozen=True)
class ModularRow:
    case: str
    parts: tuple[UtilPercent, ...]
    total: UtilPercent
    shared: UtilPercent
    after: UtilPercent
    change: tuple[Optional[float], Optional[float]]
    notes: tuple[str, ...] = field(default_factory=tuple)


def _as_util(x: Union[PPAReport, UtilPercent], cap: Optional[DeviceCapacity]) -> UtilPercent:
    if isinstance(x, UtilPercent):
        return x
    if cap is None:
        raise ValueError("a device capacity is needed to convert report counts")
    return to_percent(x, cap)


def modularization_summary(before: Sequence[Union[PPAReport, UtilPercent]],
                           after_shared: Union[PPAReport, UtilPercent],
                           after_total: Union[PPAReport, UtilPercent],
                           cap: Optional[DeviceCapacity] = None, case: str = "") -> ModularRow:
    if not before:
        raise ValueError("need at least one before report")
    parts = tuple(_as_util(b, cap) for b in before)
    total = sum_totals(parts)
    after = _as_util(after_total, cap)
    return ModularRow(case, parts, total, _as_util(after_shared, cap), after,
                      change_percent(total, after))


def render_table_md(rows: Sequence[ModularRow]) -> str:
    width = max((len(r.parts) for r in rows), default=0)
    head = ["Case"] + [f"P{i + 1}" for i in range(width)] + ["Total", "Shared", "After total", "Change (%, %)"]
    lines = ["| " + " | ".join(head) + " |", "|" + "---|" * len(head)]
    for r in rows:
        parts = [p.display() for p in r.parts] + ["--"] * (width - len(r.parts))
        cells = [r.case, *parts, r.total.display(), r.shared.display(), r.after.display(),
                 format_change(r.change)]
        lines.append("| " + " | ".join(cells) + " |")
    return "\n".join(lines) + "\n"


def load_reference_rows(path=None) -> list[dict]:
    """Reference before/after utilization rows shipped as a fixture."""
    from importlib import resources

    if path is None:
        ref = resources.files("forgebench").joinpath("data", "fixtures", "modular_reference.json")
        return json.loads(ref.read_text(encoding="utf-8"))["rows"]
    return json.loads(Path(path).read_text(encoding="utf-8"))["rows"]
