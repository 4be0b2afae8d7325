"""Turn orchestration.

A turn runs in two phases. Phase one steps every nuance chain, then fires
the topic, (conditionally) sentiment, and reply requests concurrently,
folds the results into the state, and applies the tone override when the
reply detected a humorous or aggressive user. Phase two steps the chains
again (the override consumes the tone's second step), picks the next topic
and sentence type, and generates the continuation.

All timing that feeds the latency metrics is simulated arithmetic over
reported latencies and a words-per-minute utterance model, so replays are
deterministic and fast regardless of scripted delays.
"""

from __future__ import annotations

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, Optional, Tuple

import numpy as np

from .errors import GatewayError, InvalidStateError, TurnError
from .gateway import (
    CompletionRequest,
    CompletionResult,
    parse_sentiment,
    parse_tone_reply,
    parse_topic,
)
from .nuance import (
    DetectedTone,
    FlagVector,
    NuanceKind,
    NuanceSpecs,
    apply_tone_override,
    step_nuance,
)
from .prompts import FillerPool, PromptBuilder, PromptBundle, RequestKind, diversity_cost
from .state import DialogueState, PendingPhaseOne
from .topics import (
    DEFAULT_CANDIDATE_LIMIT,
    DEFAULT_EXHAUSTION_THRESHOLD,
    SentenceType,
    TopicGraph,
    candidate_topics,
    next_topic,
    update_preference,
)

logger = logging.getLogger(__name__)

DEFAULT_SPEECH_RATE_WPM = 170.0
DEFAULT_MODELS = {"cheap": "gpt-3.5-turbo", "capable": "gpt-4-turbo"}


@dataclass
class SpeechRateModel:
    """Utterance duration from text length at a constant words-per-minute rate."""
    wpm: float = DEFAULT_SPEECH_RATE_WPM

    def duration_s(self, text: str) -> float:
        words = len(text.split())
        return words * 60.0 / self.wpm if self.wpm > 0 else 0.0


def _cost_summary(bundle: PromptBundle) -> Dict[str, dict]:
    """Compact diversity-cost dict for response telemetry."""
    report = diversity_cost(bundle)
    out = {kind.value: {"tokens": e.tokens, "fraction": e.fraction}
           for kind, e in report.per_nuance.items()}
    out["tone_detection"] = {"tokens": report.tone_detection.tokens,
                             "fraction": report.tone_detection.fraction}
    out["total_prompt_tokens"] = report.total_prompt_tokens
    return out


@dataclass
class TurnPhaseOneResult:
    reply: str
    detected_tone: DetectedTone
    detected_topic: Optional[str]
    detected_sentiment: Optional[str]
    state: DialogueState
    latencies_ms: Dict[str, float]
    tokens: Dict[str, Dict[str, int]]
    directives_reply: Dict[str, str]
    reply_cost: Dict[str, dict] = field(default_factory=dict)


@dataclass
class TurnPhaseTwoResult:
    continuation: str
    sentence_type: SentenceType
    state: DialogueState
    latency_ms: float
    continuation_cost: Dict[str, dict] = field(default_factory=dict)


@dataclass
class TurnRecord:
    """One line of the structured session log."""
    turn: int
    session_id: str = ""
    user_sentence: str = ""
    filler: str = ""
    reply: str = ""
    continuation: str = ""
    detected_tone: str = DetectedTone.NONE.value
    detected_topic: Optional[str] = None
    detected_sentiment: Optional[str] = None
    sentiment_requested: bool = False
    topic_before: str = ""
    topic_after: str = ""
    sentence_type: Optional[str] = None
    flags_step1: Dict[str, int] = field(default_factory=dict)
    flags_step2: Dict[str, int] = field(default_factory=dict)
    tone_override: Optional[str] = None
    directives_reply: Dict[str, str] = field(default_factory=dict)
    directives_continuation: Dict[str, str] = field(default_factory=dict)
    latencies_ms: Dict[str, float] = field(default_factory=dict)
    tokens: Dict[str, Dict[str, int]] = field(default_factory=dict)
    phase1_latency_ms: float = 0.0
    phase2_latency_ms: float = 0.0
    times_s: Dict[str, float] = field(default_factory=dict)
    failed: bool = False
    error: Optional[str] = None

    def to_dict(self) -> dict:
        return {
            "turn": self.turn,
            "session_id": self.session_id,
            "user_sentence": self.user_sentence,
            "filler": self.filler,
            "reply": self.reply,
            "continuation": self.continuation,
            "detected_tone": self.detected_tone,
            "detected_topic": self.detected_topic,
            "detected_sentiment": self.detected_sentiment,
            "sentiment_requested": self.sentiment_requested,
            "topic_before": self.topic_before,
            "topic_after": self.topic_after,
            "sentence_type": self.sentence_type,
            "flags_step1": dict(self.flags_step1),
            "flags_step2": dict(self.flags_step2),
            "tone_override": self.tone_override,
            "directives_reply": dict(self.directives_reply),
            "directives_continuation": dict(self.directives_continuation),
            "latencies_ms": dict(self.latencies_ms),
            "tokens": {k: dict(v) for k, v in self.tokens.items()},
            "phase1_latency_ms": self.phase1_latency_ms,
            "phase2_latency_ms": self.phase2_latency_ms,
            "times_s": dict(self.times_s),
            "failed": self.failed,
            "error": self.error,
        }

    def to_json_line(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, ensure_ascii=False)

    @classmethod
    def from_dict(cls, data: dict) -> "TurnRecord":
        return cls(**{k: data[k] for k in data if k in cls.__dataclass_fields__})

    @classmethod
    def from_json_line(cls, line: str) -> "TurnRecord":
        return cls.from_dict(json.loads(line))


class DialogueManager:
    """Binds the graph, nuance chains, prompt builder, and backend into the
    two-phase turn protocol. Holds no per-session state: everything mutable
    lives in the DialogueState that travels with each call."""

    def __init__(self, graph: TopicGraph, specs: NuanceSpecs, backend,
                 builder: Optional[PromptBuilder] = None,
                 filler_pool: Optional[FillerPool] = None,
                 models: Optional[Dict[str, str]] = None,
                 speech_rate: Optional[SpeechRateModel] = None,
                 exhaustion_threshold: int = DEFAULT_EXHAUSTION_THRESHOLD,
                 candidate_limit: int = DEFAULT_CANDIDATE_LIMIT,
                 max_output_tokens: int = 120):
        self.graph = graph
        self.specs = specs
        self.backend = backend
        self.builder = builder or PromptBuilder()
        self.filler_pool = filler_pool or FillerPool(["Let me think..."])
        self.models = models or dict(DEFAULT_MODELS)
        self.speech_rate = speech_rate or SpeechRateModel()
        self.exhaustion_threshold = exhaustion_threshold
        self.candidate_limit = candidate_limit
        self.max_output_tokens = max_output_tokens

    # -- nuance stepping --

    def _step_flags(self, state: DialogueState, rng: np.random.Generator,
                    phase: int, skip_tone: bool = False) -> Dict[str, int]:
        """Advance every nuance chain in declared order; pinned nuances hold
        their flag, and the tone chain is skipped when an override already
        supplied its update for this phase."""
        indices: Dict[str, int] = {}
        for kind in NuanceKind:
            flags = state.nuance_flags[kind]
            if kind in state.pinned or (skip_tone and kind is NuanceKind.TONE):
                indices[kind.value] = flags.index
                continue
            spec = self.specs[kind]
            matrix = spec.matrix_first if phase == 1 else spec.matrix_second
            stepped = step_nuance(flags, matrix, rng)
            state.nuance_flags[kind] = stepped
            indices[kind.value] = stepped.index
        return indices

    # -- phase one --

    def handle_first_request(self, state: DialogueState, user_sentence: str,
                             rng: np.random.Generator, filler: str = "") -> TurnPhaseOneResult:
        state.validate()
        if not user_sentence.strip():
            raise InvalidStateError("user sentence is empty")
        work = state.copy()
        work.pending = None

        flags_step1 = self._step_flags(work, rng, phase=1)

        candidates = candidate_topics(self.graph, work.current_topic, self.candidate_limit)
        want_sentiment = work.last_sentence_type is SentenceType.YES_NO_QUESTION

        reply_built = self.builder.build_reply_prompt(work, work.memory, user_sentence)
        bundles = {RequestKind.REPLY: reply_built.bundle}
        if candidates:
            bundles[RequestKind.TOPIC] = self.builder.build_topic_prompt(user_sentence, candidates)
        if want_sentiment:
            bundles[RequestKind.SENTIMENT] = self.builder.build_sentiment_prompt(user_sentence)

        results: Dict[RequestKind, CompletionResult] = {}
        failures: Dict[RequestKind, Exception] = {}
        with ThreadPoolExecutor(max_workers=len(bundles)) as pool:
            futures = {
                kind: pool.submit(self.backend.complete,
                                  CompletionRequest.from_bundle(b, self.models,
                                                                self.max_output_tokens))
                for kind, b in bundles.items()
            }
            for kind, fut in futures.items():
                try:
                    results[kind] = fut.result()
                except GatewayError as exc:
                    failures[kind] = exc

        latencies = {k.value: r.latency_ms for k, r in results.items()}
        tokens = {k.value: {"prompt": r.prompt_tokens, "completion": r.completion_tokens}
                  for k, r in results.items()}

        if RequestKind.REPLY in failures:
            raise TurnError(
                f"reply request failed: {failures[RequestKind.REPLY]}",
                record=TurnRecord(
                    turn=state.turn_counter, user_sentence=user_sentence, filler=filler,
                    topic_before=state.current_topic, flags_step1=flags_step1,
                    sentiment_requested=want_sentiment, latencies_ms=latencies,
                    tokens=tokens, failed=True,
                    error=str(failures[RequestKind.REPLY]),
                ),
            ) from failures[RequestKind.REPLY]
        for kind, exc in failures.items():
            logger.warning("%s request failed, degrading: %s", kind.value, exc)

        try:
            tone_reply = parse_tone_reply(results[RequestKind.REPLY].text)
        except GatewayError as exc:
            raise TurnError(
                f"reply unusable: {exc}",
                record=TurnRecord(
                    turn=state.turn_counter, user_sentence=user_sentence, filler=filler,
                    topic_before=state.current_topic, flags_step1=flags_step1,
                    sentiment_requested=want_sentiment, latencies_ms=latencies,
                    tokens=tokens, failed=True, error=str(exc),
                ),
            ) from exc

        detected_topic = None
        if RequestKind.TOPIC in results:
            detected_topic = parse_topic(results[RequestKind.TOPIC].text, candidates)

        detected_sentiment = None
        if want_sentiment:
            if RequestKind.SENTIMENT in results:
                detected_sentiment = parse_sentiment(results[RequestKind.SENTIMENT].text)
            else:
                detected_sentiment = "neutral"
            update_preference(self.graph, work.prefs, work.current_topic, detected_sentiment)

        detected = tone_reply.detected()
        tone_override = None
        if detected is not DetectedTone.NONE:
            work.nuance_flags[NuanceKind.TONE] = apply_tone_override(
                work.nuance_flags[NuanceKind.TONE], detected)
            tone_override = detected.value

        work.pending = PendingPhaseOne(
            user_sentence=user_sentence,
            filler=filler,
            reply=tone_reply.reply,
            detected_tone=tone_reply.tone,
            detected_topic=detected_topic,
            detected_sentiment=detected_sentiment,
            sentiment_requested=want_sentiment,
            flags_step1=flags_step1,
            tone_override=tone_override,
            latencies_ms=latencies,
            tokens=tokens,
            directives_reply=reply_built.effective_values,
        )
        return TurnPhaseOneResult(
            reply=tone_reply.reply,
            detected_tone=detected,
            detected_topic=detected_topic,
            detected_sentiment=detected_sentiment,
            state=work,
            latencies_ms=latencies,
            tokens=tokens,
            directives_reply=reply_built.effective_values,
            reply_cost=_cost_summary(reply_built.bundle),
        )

    # -- phase two --

    def handle_continuation_request(self, state: DialogueState, rng: np.random.Generator
                                    ) -> Tuple[TurnPhaseTwoResult, TurnRecord]:
        state.validate()
        pending = state.pending
        if pending is None:
            raise InvalidStateError("no completed phase one in this state")
        work = state.copy()

        flags_step2 = self._step_flags(work, rng, phase=2,
                                       skip_tone=pending.tone_override is not None)

        plan_topic, sentence_type = next_topic(
            self.graph, work.coverage, work.prefs, work.current_topic,
            pending.detected_topic, self.exhaustion_threshold)
        label = self.graph.get(plan_topic).label

        built = self.builder.build_continuation_prompt(
            work, work.memory, (plan_topic, sentence_type), topic_label=label)
        request = CompletionRequest.from_bundle(built.bundle, self.models, self.max_output_tokens)
        try:
            result = self.backend.complete(request)
        except GatewayError as exc:
            raise TurnError(
                f"continuation request failed: {exc}",
                record=self._record_from_pending(state, pending, flags_step2,
                                                 failed=True, error=str(exc)),
            ) from exc

        continuation = result.text.strip()
        if not continuation:
            raise TurnError(
                "continuation text is empty",
                record=self._record_from_pending(state, pending, flags_step2,
                                                 failed=True, error="empty continuation"),
            )

        work.current_topic = plan_topic
        work.coverage[plan_topic] = work.coverage.get(plan_topic, 0) + 1
        work.memory.append(f"{pending.reply} {continuation}", pending.user_sentence)
        work.last_sentence_type = sentence_type
        work.turn_counter += 1
        work.pending = None

        record = self._assemble_record(
            state, pending, flags_step2, continuation, sentence_type,
            plan_topic, built.effective_values, result.latency_ms,
            {"prompt": result.prompt_tokens, "completion": result.completion_tokens},
        )
        phase_two = TurnPhaseTwoResult(
            continuation=continuation,
            sentence_type=sentence_type,
            state=work,
            latency_ms=result.latency_ms,
            continuation_cost=_cost_summary(built.bundle),
        )
        return phase_two, record

    # -- record assembly --

    def _record_from_pending(self, state: DialogueState, pending: PendingPhaseOne,
                             flags_step2: Dict[str, int], failed: bool,
                             error: Optional[str]) -> TurnRecord:
        return TurnRecord(
            turn=state.turn_counter,
            user_sentence=pending.user_sentence,
            filler=pending.filler,
            reply=pending.reply,
            detected_tone=pending.detected_tone,
            detected_topic=pending.detected_topic,
            detected_sentiment=pending.detected_sentiment,
            sentiment_requested=pending.sentiment_requested,
            topic_before=state.current_topic,
            flags_step1=dict(pending.flags_step1),
            flags_step2=dict(flags_step2),
            tone_override=pending.tone_override,
            directives_reply=dict(pending.directives_reply),
            latencies_ms=dict(pending.latencies_ms),
            tokens={k: dict(v) for k, v in pending.tokens.items()},
            failed=failed,
            error=error,
        )

    def _assemble_record(self, state: DialogueState, pending: PendingPhaseOne,
                         flags_step2: Dict[str, int], continuation: str,
                         sentence_type: SentenceType, topic_after: str,
                         directives_continuation: Dict[str, str],
                         continuation_latency_ms: float,
                         continuation_tokens: Dict[str, int]) -> TurnRecord:
        record = self._record_from_pending(state, pending, flags_step2, failed=False, error=None)
        record.continuation = continuation
        record.sentence_type = sentence_type.value
        record.topic_after = topic_after
        record.directives_continuation = dict(directives_continuation)
        record.latencies_ms = dict(pending.latencies_ms)
        record.latencies_ms[RequestKind.CONTINUATION.value] = continuation_latency_ms
        record.tokens = {k: dict(v) for k, v in pending.tokens.items()}
        record.tokens[RequestKind.CONTINUATION.value] = dict(continuation_tokens)

        phase1_latency_ms = max(pending.latencies_ms.values()) if pending.latencies_ms else 0.0
        record.phase1_latency_ms = phase1_latency_ms
        record.phase2_latency_ms = continuation_latency_ms

        filler_duration = self.speech_rate.duration_s(pending.filler)
        reply_duration = self.speech_rate.duration_s(pending.reply)
        continuation_duration = self.speech_rate.duration_s(continuation)
        first_arrival = phase1_latency_ms / 1000.0
        t1 = filler_duration
        t2 = max(t1, first_arrival)
        t3 = t2 + reply_duration
        cont_arrival = t2 + continuation_latency_ms / 1000.0
        t4 = max(t3, cont_arrival)
        record.times_s = {
            "t1": t1, "t2": t2, "t3": t3, "t4": t4,
            "filler_duration": filler_duration,
            "reply_duration": reply_duration,
            "continuation_duration": continuation_duration,
            "gap_t2_t1": max(0.0, first_arrival - t1),
            "gap_t4_t3": max(0.0, cont_arrival - t3),
        }
        return record

    # -- whole turn --

    def run_turn(self, state: DialogueState, user_sentence: str, rng: np.random.Generator
                 ) -> Tuple[str, str, str, DialogueState, TurnRecord]:
        """Filler first (it masks the wait), then the two phases. On failure a
        TurnError carries the failed record; the caller's state is untouched."""
        filler = self.filler_pool.pick(rng)
        phase_one = self.handle_first_request(state, user_sentence, rng, filler=filler)
        phase_two, record = self.handle_continuation_request(phase_one.state, rng)
        return filler, phase_one.reply, phase_two.continuation, phase_two.state, record
