import csv
import io
import statistics

import numpy as np
import pytest

from dialogue_engine.errors import EmptyLogError, LengthMismatchError
from dialogue_engine.manager import TurnRecord
from dialogue_engine.nuance import NuanceKind, simulate_flag_indices
from dialogue_engine.reports import (
    emit_tables,
    latency_report,
    render_latency,
    render_tone,
    render_usage,
    tone_confusion,
    turn_series,
    usage_report,
)

KINDS = [k.value for k in NuanceKind]


def synthetic_record(i, step1, step2, latencies=None, times=None, detected="neutral",
                     failed=False):
    return TurnRecord(
        turn=i,
        flags_step1=dict(step1),
        flags_step2=dict(step2),
        detected_tone=detected,
        latencies_ms=latencies or {"topic": 300.0, "reply": 900.0, "continuation": 700.0},
        times_s=times or {"gap_t2_t1": 0.0, "gap_t4_t3": 0.0},
        failed=failed,
    )


def constant_flag_records(n, index=0):
    flags = {k: index for k in KINDS}
    return [synthetic_record(i, flags, flags) for i in range(n)]


# --- usage ---

def test_usage_all_on_one_flag(specs):
    records = constant_flag_records(10)
    reports = usage_report(records, specs)
    for kind, rep in reports.items():
        assert rep.pct_overall[0] == 100.0
        assert sum(rep.counts_step1) == 10
        assert abs(sum(rep.pct_step1) - 100.0) < 0.1
        assert abs(sum(rep.pct_overall) - 100.0) < 0.1


def test_usage_overall_is_average_of_phases(specs):
    # step1 always flag 0, step2 always the free flag
    records = [synthetic_record(i,
                                {k: 0 for k in KINDS},
                                {k: specs[NuanceKind(k)].values.size - 1 for k in KINDS})
               for i in range(8)]
    reports = usage_report(records, specs)
    for kind, rep in reports.items():
        assert rep.pct_step1[0] == 100.0
        assert rep.pct_overall[0] == 50.0
        assert rep.pct_overall[-1] == 50.0


def test_usage_synthetic_chain_matches_stationary(specs):
    # 1e5 chain steps per nuance, split into synthetic two-step records
    reports_in = {}
    records = None
    for kind, spec in specs.items():
        rng = np.random.default_rng(77)
        idx = simulate_flag_indices(spec.matrix_first, spec.values.size - 1, 100_000, rng)
        if records is None:
            records = [TurnRecord(turn=i, flags_step1={}, flags_step2={},
                                  latencies_ms={}, times_s={})
                       for i in range(50_000)]
        for i in range(50_000):
            records[i].flags_step1[kind.value] = int(idx[2 * i])
            records[i].flags_step2[kind.value] = int(idx[2 * i + 1])
    reports = usage_report(records, specs)
    for kind, rep in reports.items():
        assert rep.max_abs_deviation <= 0.01, (kind, rep.max_abs_deviation)


def test_usage_empty_log(specs):
    with pytest.raises(EmptyLogError):
        usage_report([], specs)
    with pytest.raises(EmptyLogError):
        usage_report([synthetic_record(0, {k: 0 for k in KINDS}, {k: 0 for k in KINDS},
                                       failed=True)], specs)


# --- tone confusion ---

def test_confusion_identity_with_echo(specs):
    records = []
    intents = []
    for tone in ("humorous", "aggressive", "neutral"):
        for _ in range(5):
            records.append(synthetic_record(len(records),
                                            {k: 0 for k in KINDS}, {k: 0 for k in KINDS},
                                            detected=tone))
            intents.append(tone)
    confusion = tone_confusion(records, intents)
    for i in range(3):
        assert confusion.row_pct[i][i] == 100.0
        assert abs(sum(confusion.row_pct[i]) - 100.0) < 0.1


def test_confusion_reproduces_reported_rates(specs):
    # intended x detected counts per 100 sentences: 69/2/29, 44/15/41, 1/0/99
    table = {
        "humorous": [("humorous", 69), ("aggressive", 2), ("neutral", 29)],
        "aggressive": [("humorous", 44), ("aggressive", 15), ("neutral", 41)],
        "neutral": [("humorous", 1), ("aggressive", 0), ("neutral", 99)],
    }
    records, intents = [], []
    for intent, cells in table.items():
        for detected, count in cells:
            for _ in range(count):
                records.append(synthetic_record(len(records),
                                                {k: 0 for k in KINDS},
                                                {k: 0 for k in KINDS},
                                                detected=detected))
                intents.append(intent)
    confusion = tone_confusion(records, intents)
    assert confusion.row_pct[0] == [69.0, 2.0, 29.0]
    assert confusion.row_pct[1] == [44.0, 15.0, 41.0]
    assert confusion.row_pct[2] == [1.0, 0.0, 99.0]


def test_confusion_conservation():
    records = constant_flag_records(30)
    intents = ["humorous"] * 10 + ["aggressive"] * 10 + ["neutral"] * 10
    confusion = tone_confusion(records, intents)
    assert sum(sum(row) for row in confusion.counts) == 30


def test_confusion_length_mismatch():
    with pytest.raises(LengthMismatchError):
        tone_confusion(constant_flag_records(3), ["neutral"] * 2)
    with pytest.raises(EmptyLogError):
        tone_confusion([], [])


# --- latency ---

def test_latency_constant_values(specs):
    records = [synthetic_record(i, {k: 0 for k in KINDS}, {k: 0 for k in KINDS},
                                latencies={"reply": 1000.0, "topic": 1000.0,
                                           "continuation": 1000.0})
               for i in range(5)]
    report = latency_report(records)
    stats = report.per_request["reply"]
    assert stats.mean == pytest.approx(1.0)
    assert stats.std == pytest.approx(0.0)
    assert stats.min == stats.max == pytest.approx(1.0)


def test_latency_known_moments_via_independent_oracle():
    values_s = [1.2, 3.4, 0.8, 2.2, 5.0, 1.7, 2.9, 0.9]
    records = [synthetic_record(i, {k: 0 for k in KINDS}, {k: 0 for k in KINDS},
                                latencies={"reply": v * 1000.0})
               for i, v in enumerate(values_s)]
    report = latency_report(records)
    stats = report.per_request["reply"]
    assert stats.mean == pytest.approx(statistics.fmean(values_s), rel=0.05)
    assert stats.std == pytest.approx(statistics.pstdev(values_s), rel=0.05)
    assert stats.min == pytest.approx(min(values_s))
    assert stats.max == pytest.approx(max(values_s))
    assert stats.min <= stats.mean <= stats.max


def test_gap_statistics_and_band():
    gaps = [0.5, 0.7, 0.9]
    records = [synthetic_record(i, {k: 0 for k in KINDS}, {k: 0 for k in KINDS},
                                times={"gap_t2_t1": g, "gap_t4_t3": 0.0})
               for i, g in enumerate(gaps)]
    report = latency_report(records)
    g = report.gaps["gap_t2_t1"]
    assert g.mean == pytest.approx(0.7)
    assert g.three_sigma == pytest.approx(0.7 + 3 * statistics.pstdev(gaps))
    assert report.gaps["gap_t4_t3"].mean == 0.0


def test_latency_empty_log():
    with pytest.raises(EmptyLogError):
        latency_report([])


# --- rendering ---

def test_usage_table_layout(specs):
    reports = usage_report(constant_flag_records(4), specs)
    text = render_usage(reports, "plain")
    assert "diversity nuance" in text
    assert "overall %" in text and "stationary" in text
    md = render_usage(reports, "markdown")
    assert md.count("|") > 10
    assert "100.0" in md


def test_csv_round_trips_numerically(specs):
    reports = usage_report(constant_flag_records(4), specs)
    out = render_usage(reports, "csv")
    rows = list(csv.reader(io.StringIO(out)))
    data_rows = [r for r in rows if len(r) == 5 and r[1] != "reply %"]
    rep = reports[NuanceKind.DIVERSITY]
    parsed = [float(r[3]) for r in data_rows[:4]]
    assert parsed == rep.pct_overall


def test_markdown_decimal_places(specs):
    reports = usage_report(constant_flag_records(4), specs)
    md = render_usage(reports, "markdown")
    # percentages with one decimal, stationary with three
    assert "| 100.0 |" in md
    assert "0.528" in md  # speech-act stationary needs no renormalization


def test_emit_tables_combines_sections(specs):
    records = constant_flag_records(6)
    usage = usage_report(records, specs)
    latency = latency_report(records)
    series = turn_series(records)
    out = emit_tables(usage=usage, latency=latency, series=series, fmt="plain")
    assert "diversity nuance" in out
    assert "mean [s]" in out
    assert "tone_step1" in out
    tone = tone_confusion(records, ["neutral"] * 6)
    both = emit_tables(tone=tone, fmt="markdown")
    assert "intended" in both