"""Replay harness and analysis CLI.

`harness replay` drives a scripted experiment through the engine, either
in-process against the mock backend or over HTTP against a running hub, and
writes one TurnRecord per line. `harness analyze` computes the usage, tone,
latency, and per-turn-series reports from such a log.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Tuple

import numpy as np
import requests

from .config import ServiceConfig, default_config_path, load_config
from .errors import LengthMismatchError, TurnError
from .gateway import ScriptEntry
from .manager import TurnRecord
from .prompts import RequestKind
from .reports import (
    emit_tables,
    latency_report,
    tone_confusion,
    turn_series,
    usage_report,
)
from .state import initial_state
from .topics import TopicGraph

logger = logging.getLogger(__name__)

INTENDED_TONES = ("humorous", "aggressive", "neutral")


@dataclass
class ScriptedExperiment:
    """Pre-written user sentences, each annotated with the tone it was written
    to carry, plus an optional explicit backend script."""
    sentences: List[Tuple[str, str]]
    script: List[ScriptEntry] = field(default_factory=list)
    seed: int = 0

    def __post_init__(self):
        for sentence, tone in self.sentences:
            if not sentence.strip():
                raise ValueError("experiment contains an empty sentence")
            if tone not in INTENDED_TONES:
                raise ValueError(f"unknown intended tone {tone!r}")

    @property
    def intended(self) -> List[str]:
        return [tone for _, tone in self.sentences]

    @classmethod
    def load(cls, path: Path, seed: int = 0) -> "ScriptedExperiment":
        sentences = []
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                row = json.loads(line)
                sentences.append((str(row["sentence"]), str(row["intended_tone"])))
        return cls(sentences=sentences, seed=seed)


_REPLY_SHAPES = [
    "I see what you mean about that.",
    "That is a lovely way to put it, truly.",
    "You make a fair point there, I think.",
    "Well, that gives me something to chew on.",
    "I had not looked at it that way before.",
]
_CONTINUATION_SHAPES = [
    "There is so much more to say about this.",
    "I keep finding new corners of this subject.",
    "Talking with you makes this topic brighter.",
    "Every chat teaches me something new about it.",
]


def build_echo_script(experiment: ScriptedExperiment, graph: Optional[TopicGraph] = None,
                      topic_every: int = 3) -> List[ScriptEntry]:
    """Deterministic mock script for an experiment: each reply echoes the
    turn's intended tone (the oracle for tone detection), topics jump to a
    graph topic every `topic_every` turns, sentiments rotate through the three
    labels, and latencies vary over a plausible range without repeating."""
    entries: List[ScriptEntry] = []
    # Top-level branches stay inside the candidate window wherever the
    # conversation wanders (as children, siblings, or the root's children).
    topic_ids = list(graph.get(graph.root).children) if graph is not None else []
    sentiments = ("positive", "neutral", "negative")
    for i, (_, tone) in enumerate(experiment.sentences):
        reply = f"TONE: {tone}\n{_REPLY_SHAPES[i % len(_REPLY_SHAPES)]}"
        entries.append(ScriptEntry(RequestKind.REPLY, reply,
                                   latency_ms=900.0 + (i * 137) % 2200))
        if topic_ids and topic_every > 0 and i % topic_every == topic_every - 1:
            topic_answer = topic_ids[(i // topic_every) % len(topic_ids)]
        else:
            topic_answer = "NONE"
        entries.append(ScriptEntry(RequestKind.TOPIC, topic_answer,
                                   latency_ms=350.0 + (i * 61) % 900))
        entries.append(ScriptEntry(RequestKind.SENTIMENT, sentiments[i % 3],
                                   latency_ms=300.0 + (i * 53) % 800))
        entries.append(ScriptEntry(RequestKind.CONTINUATION,
                                   _CONTINUATION_SHAPES[i % len(_CONTINUATION_SHAPES)],
                                   latency_ms=700.0 + (i * 101) % 1500))
    return entries


def replay(experiment: ScriptedExperiment, config: ServiceConfig,
           seed: Optional[int] = None, url: Optional[str] = None,
           session_id: str = "replay") -> List[TurnRecord]:
    """Drive one session through every scripted sentence in order. Aborted
    turns are recorded and the replay keeps going. Deterministic for a given
    seed when run in-process against the mock."""
    if url is not None:
        return _replay_http(experiment, url, session_id)

    from .gateway import MockBackend  # local import keeps module load light

    # The hub's configured script is for serving; experiments bring their own
    # or get the tone-echo script, whose detections are the analysis oracle.
    script = experiment.script or build_echo_script(experiment, config.load_graph())
    backend = MockBackend(script, simulate_latency=config.backend.simulate_latency)
    manager = config.build_manager(backend=backend)
    rng = np.random.default_rng(experiment.seed if seed is None else seed)
    state = initial_state(config.nuances, manager.graph.root)

    records: List[TurnRecord] = []
    for i, (sentence, _) in enumerate(experiment.sentences):
        try:
            _, _, _, state, record = manager.run_turn(state, sentence, rng)
        except TurnError as exc:
            record = exc.record or TurnRecord(turn=i, failed=True, error=str(exc))
            logger.warning("turn %d aborted: %s", i, exc)
        record.session_id = session_id
        records.append(record)
    return records


def _replay_http(experiment: ScriptedExperiment, url: str, session_id: str
                 ) -> List[TurnRecord]:
    base = url.rstrip("/")
    state: Optional[dict] = None
    records: List[TurnRecord] = []
    for i, (sentence, _) in enumerate(experiment.sentences):
        try:
            if state is None:
                health = requests.get(f"{base}/v1/health", timeout=10).json()
                state = health["initial_state"]
            first = requests.post(f"{base}/v1/dialogue/first", timeout=60, json={
                "session_id": session_id,
                "client_sentence": sentence,
                "dialogue_state": state,
            })
            first.raise_for_status()
            payload = first.json()
            second = requests.post(f"{base}/v1/dialogue/continuation", timeout=60, json={
                "session_id": session_id,
                "dialogue_state": payload["dialogue_state"],
            })
            second.raise_for_status()
            payload2 = second.json()
            state = payload2["dialogue_state"]
            records.append(TurnRecord.from_dict(payload2["telemetry"]["record"]))
        except requests.RequestException as exc:
            logger.warning("turn %d failed over http: %s", i, exc)
            records.append(TurnRecord(turn=i, session_id=session_id,
                                      user_sentence=sentence, failed=True, error=str(exc)))
    return records


def write_log(records: List[TurnRecord], path: Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(record.to_json_line() + "\n")


def read_log(path: Path) -> List[TurnRecord]:
    records = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                records.append(TurnRecord.from_json_line(line))
    return records


# --- CLI ---

def _cmd_replay(args) -> int:
    config = load_config(args.config)
    experiment = ScriptedExperiment.load(Path(args.script), seed=args.seed or 0)
    url = args.url if args.backend == "http" else None
    if args.backend == "http" and not url:
        print("--backend http requires --url", file=sys.stderr)
        return 2
    records = replay(experiment, config, seed=args.seed, url=url)
    write_log(records, Path(args.out))
    failed = sum(1 for r in records if r.failed)
    print(f"replayed {len(records)} turns ({failed} failed) -> {args.out}")
    return 0


def _cmd_analyze(args) -> int:
    records = read_log(Path(args.log))
    config = load_config(args.config)
    wanted = args.report
    usage = tone = latency = series = None
    if wanted in ("usage", "all"):
        usage = usage_report(records, config.nuances)
    if wanted in ("tone", "all"):
        if not args.script:
            if wanted == "tone":
                print("--report tone requires --script for the intended tones", file=sys.stderr)
                return 2
        else:
            experiment = ScriptedExperiment.load(Path(args.script))
            try:
                tone = tone_confusion(records, experiment.intended)
            except LengthMismatchError as exc:
                print(f"tone report skipped: {exc}", file=sys.stderr)
                if wanted == "tone":
                    return 1
    if wanted in ("latency", "all"):
        latency = latency_report(records)
    if wanted in ("series", "all"):
        series = turn_series(records)
    output = emit_tables(usage=usage, tone=tone, latency=latency, series=series,
                         fmt=args.format)
    if args.out:
        Path(args.out).write_text(output, encoding="utf-8")
    else:
        print(output, end="")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="harness",
                                     description="Replay scripted conversations and analyze the logs")
    sub = parser.add_subparsers(dest="command", required=True)

    rp = sub.add_parser("replay", help="drive a scripted experiment and write a turn log")
    rp.add_argument("--script", required=True, help="JSONL of {sentence, intended_tone}")
    rp.add_argument("--backend", choices=("mock", "http"), default="mock")
    rp.add_argument("--url", help="hub base url for --backend http")
    rp.add_argument("--seed", type=int, default=0)
    rp.add_argument("--out", required=True, help="output turn log (JSONL)")
    rp.add_argument("--config", type=Path, default=default_config_path())
    rp.set_defaults(func=_cmd_replay)

    an = sub.add_parser("analyze", help="compute reports from a turn log")
    an.add_argument("--log", required=True)
    an.add_argument("--report", choices=("usage", "tone", "latency", "series", "all"),
                    default="all")
    an.add_argument("--format", choices=("plain", "csv", "markdown"), default="plain")
    an.add_argument("--script", help="experiment JSONL (for the tone report's intents)")
    an.add_argument("--out", help="write output here instead of stdout")
    an.add_argument("--config", type=Path, default=default_config_path())
    an.set_defaults(func=_cmd_analyze)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
