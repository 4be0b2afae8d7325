"""Post-hoc analyses over turn logs.

Everything here is pure arithmetic over TurnRecords: nuance-usage
percentages against the configured stationary distributions, the
intended-vs-detected tone cross-tabulation, and latency/gap statistics.
Tables render to plain text, csv, or markdown deterministically.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

from .errors import EmptyLogError, LengthMismatchError
from .manager import TurnRecord
from .nuance import NuanceKind, NuanceSpecs, steady_state
from .prompts import RequestKind

TONE_ORDER = ("humorous", "aggressive", "neutral")
GAP_KEYS = ("gap_t2_t1", "gap_t4_t3")


def _mean(xs: Sequence[float]) -> float:
    return sum(xs) / len(xs)


def _pstd(xs: Sequence[float]) -> float:
    m = _mean(xs)
    return math.sqrt(sum((x - m) ** 2 for x in xs) / len(xs))


@dataclass
class UsageReport:
    kind: NuanceKind
    labels: List[str]                 # value labels plus the free/neutral slot
    counts_step1: List[int]
    counts_step2: List[int]
    pct_step1: List[float]
    pct_step2: List[float]
    pct_overall: List[float]          # average of the two step percentages
    stationary: List[float]
    max_abs_deviation: float          # |overall/100 - stationary|, worst component


def _free_label(kind: NuanceKind) -> str:
    return "neutral" if kind is NuanceKind.TONE else "free"


def usage_report(records: Iterable[TurnRecord], specs: NuanceSpecs
                 ) -> Dict[NuanceKind, UsageReport]:
    """Count the flag index sampled at each of the turn's two steps.

    These are the raw chain outcomes; the prompt-effective speech act can
    differ when a question forces the directive act, and that sits in the
    records' directive fields, not here.
    """
    records = [r for r in records if not r.failed]
    if not records:
        raise EmptyLogError("no successful turns to analyze")
    out: Dict[NuanceKind, UsageReport] = {}
    for kind, spec in specs.items():
        size = spec.values.size
        c1 = [0] * size
        c2 = [0] * size
        for r in records:
            c1[int(r.flags_step1[kind.value])] += 1
            c2[int(r.flags_step2[kind.value])] += 1
        n1, n2 = sum(c1), sum(c2)
        p1 = [100.0 * c / n1 for c in c1]
        p2 = [100.0 * c / n2 for c in c2]
        overall = [(a + b) / 2.0 for a, b in zip(p1, p2)]
        stationary = [float(x) for x in steady_state(spec.matrix_first).probs]
        deviation = max(abs(o / 100.0 - s) for o, s in zip(overall, stationary))
        out[kind] = UsageReport(
            kind=kind,
            labels=list(spec.values.values) + [_free_label(kind)],
            counts_step1=c1, counts_step2=c2,
            pct_step1=p1, pct_step2=p2, pct_overall=overall,
            stationary=stationary,
            max_abs_deviation=deviation,
        )
    return out


@dataclass
class ToneConfusion:
    counts: List[List[int]]           # rows: intended, columns: detected
    row_pct: List[List[float]]
    order: Tuple[str, ...] = TONE_ORDER


def tone_confusion(records: Sequence[TurnRecord], intended: Sequence[str]) -> ToneConfusion:
    """Cross-tabulate the tones the script asked for against the tones the
    model reported, one cell per logged turn."""
    if not records:
        raise EmptyLogError("no turns to analyze")
    if len(records) != len(intended):
        raise LengthMismatchError(
            f"{len(records)} turns but {len(intended)} intended-tone annotations")
    index = {t: i for i, t in enumerate(TONE_ORDER)}
    counts = [[0] * 3 for _ in range(3)]
    for record, intent in zip(records, intended):
        if intent not in index:
            raise LengthMismatchError(f"unknown intended tone {intent!r}")
        detected = record.detected_tone if record.detected_tone in index else "neutral"
        counts[index[intent]][index[detected]] += 1
    row_pct = []
    for row in counts:
        total = sum(row)
        row_pct.append([100.0 * c / total if total else 0.0 for c in row])
    return ToneConfusion(counts=counts, row_pct=row_pct)


@dataclass
class LatencyStats:
    mean: float
    std: float
    min: float
    max: float
    count: int


@dataclass
class GapStats:
    mean: float
    std: float
    three_sigma: float   # mean + 3*std, the band drawn on the gap series
    count: int


@dataclass
class LatencyReport:
    per_request: Dict[str, LatencyStats]
    gaps: Dict[str, GapStats]


def latency_report(records: Iterable[TurnRecord]) -> LatencyReport:
    """Descriptive statistics in seconds per request kind, plus the
    inter-utterance gap statistics (t2-t1 and t4-t3)."""
    records = [r for r in records if not r.failed]
    if not records:
        raise EmptyLogError("no successful turns to analyze")
    per_request: Dict[str, LatencyStats] = {}
    for kind in RequestKind:
        xs = [r.latencies_ms[kind.value] / 1000.0
              for r in records if kind.value in r.latencies_ms]
        if not xs:
            continue
        per_request[kind.value] = LatencyStats(
            mean=_mean(xs), std=_pstd(xs), min=min(xs), max=max(xs), count=len(xs))
    gaps: Dict[str, GapStats] = {}
    for key in GAP_KEYS:
        xs = [r.times_s[key] for r in records if key in r.times_s]
        if not xs:
            continue
        m, s = _mean(xs), _pstd(xs)
        gaps[key] = GapStats(mean=m, std=s, three_sigma=m + 3 * s, count=len(xs))
    return LatencyReport(per_request=per_request, gaps=gaps)


@dataclass
class TurnSeries:
    """Per-turn series for external plotting: gap values and tone flag indices."""
    rows: List[dict] = field(default_factory=list)


def turn_series(records: Iterable[TurnRecord]) -> TurnSeries:
    rows = []
    for i, r in enumerate(records):
        rows.append({
            "turn": i,
            "failed": int(r.failed),
            "gap_t2_t1": r.times_s.get("gap_t2_t1", ""),
            "gap_t4_t3": r.times_s.get("gap_t4_t3", ""),
            "tone_step1": r.flags_step1.get("tone", ""),
            "tone_step2": r.flags_step2.get("tone", ""),
            "detected_tone": r.detected_tone,
        })
    return TurnSeries(rows=rows)


# --- rendering ---

def _fmt_pct(x: float) -> str:
    return f"{x:.1f}"


def _fmt_e(x: float) -> str:
    return f"{x:.3f}"


def _table(headers: List[str], rows: List[List[str]], fmt: str) -> str:
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(headers)
        writer.writerows(rows)
        return buf.getvalue()
    if fmt == "markdown":
        lines = ["| " + " | ".join(headers) + " |",
                 "| " + " | ".join("---" for _ in headers) + " |"]
        lines.extend("| " + " | ".join(row) + " |" for row in rows)
        return "\n".join(lines) + "\n"
    widths = [max(len(h), *(len(r[i]) for r in rows)) if rows else len(h)
              for i, h in enumerate(headers)]
    lines = ["  ".join(h.ljust(w) for h, w in zip(headers, widths))]
    lines.extend("  ".join(c.ljust(w) for c, w in zip(row, widths)) for row in rows)
    return "\n".join(lines) + "\n"


def render_usage(reports: Dict[NuanceKind, UsageReport], fmt: str = "plain") -> str:
    chunks = []
    for kind in NuanceKind:
        if kind not in reports:
            continue
        rep = reports[kind]
        headers = [f"{kind.value} nuance", "reply %", "continuation %", "overall %", "stationary"]
        if fmt == "csv":
            rows = [[label,
                     repr(rep.pct_step1[i]), repr(rep.pct_step2[i]),
                     repr(rep.pct_overall[i]), repr(rep.stationary[i])]
                    for i, label in enumerate(rep.labels)]
        else:
            rows = [[label,
                     _fmt_pct(rep.pct_step1[i]), _fmt_pct(rep.pct_step2[i]),
                     _fmt_pct(rep.pct_overall[i]), _fmt_e(rep.stationary[i])]
                    for i, label in enumerate(rep.labels)]
        chunks.append(_table(headers, rows, fmt))
    return "\n".join(chunks)


def render_tone(confusion: ToneConfusion, fmt: str = "plain") -> str:
    headers = ["intended \\ detected %"] + list(confusion.order)
    if fmt == "csv":
        rows = [[intent] + [repr(x) for x in confusion.row_pct[i]]
                for i, intent in enumerate(confusion.order)]
    else:
        rows = [[intent] + [_fmt_pct(x) for x in confusion.row_pct[i]]
                for i, intent in enumerate(confusion.order)]
    return _table(headers, rows, fmt)


def render_latency(report: LatencyReport, fmt: str = "plain") -> str:
    headers = ["request", "mean [s]", "std [s]", "min [s]", "max [s]", "count"]
    fmt_num = repr if fmt == "csv" else (lambda x: f"{x:.3f}")
    rows = [[name, fmt_num(s.mean), fmt_num(s.std), fmt_num(s.min), fmt_num(s.max), str(s.count)]
            for name, s in report.per_request.items()]
    out = _table(headers, rows, fmt)
    gap_headers = ["gap", "mean [s]", "std [s]", "mean+3sigma [s]", "count"]
    gap_rows = [[name, fmt_num(g.mean), fmt_num(g.std), fmt_num(g.three_sigma), str(g.count)]
                for name, g in report.gaps.items()]
    return out + "\n" + _table(gap_headers, gap_rows, fmt)


def render_series(series: TurnSeries, fmt: str = "csv") -> str:
    headers = ["turn", "failed", "gap_t2_t1", "gap_t4_t3",
               "tone_step1", "tone_step2", "detected_tone"]
    rows = [[repr(r[h]) if fmt == "csv" and isinstance(r[h], float) else str(r[h])
             for h in headers] for r in series.rows]
    return _table(headers, rows, fmt)


def emit_tables(usage: Optional[Dict[NuanceKind, UsageReport]] = None,
                tone: Optional[ToneConfusion] = None,
                latency: Optional[LatencyReport] = None,
                series: Optional[TurnSeries] = None,
                fmt: str = "plain") -> str:
    """Render whichever reports were computed, in a fixed order."""
    parts = []
    if usage is not None:
        parts.append(render_usage(usage, fmt))
    if tone is not None:
        parts.append(render_tone(tone, fmt))
    if latency is not None:
        parts.append(render_latency(latency, fmt))
    if series is not None:
        parts.append(render_series(series, fmt))
    return "\n".join(parts)
