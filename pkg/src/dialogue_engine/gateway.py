"""Chat-completion backends and response parsing.

Two backends speak the same interface: a deterministic scriptable mock used
by every test and replay, and an HTTP client for any OpenAI-compatible
chat-completions endpoint. Parsers are strict (exact label after trim and
case-fold) and total: garbage never crashes the pipeline, it degrades to a
logged warning and a safe default.
"""

from __future__ import annotations

import logging
import os
import re
import threading
import time
import unicodedata
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import requests

from .errors import (
    BackendUnreachableError,
    EmptyReplyError,
    GatewayTimeoutError,
    MalformedUpstreamResponseError,
    MockScriptMissError,
)
from .nuance import DetectedTone
from .prompts import (
    ChatMessage,
    PromptBundle,
    RequestKind,
    Role,
    TONE_LINE_PREFIX,
    TOPIC_NONE_SENTINEL,
)
from .tokens import count_tokens
from .topics import SENTIMENT_NEGATIVE, SENTIMENT_NEUTRAL, SENTIMENT_POSITIVE

logger = logging.getLogger(__name__)

DEFAULT_TIMEOUT_S = 20.0
DEFAULT_MAX_OUTPUT_TOKENS = 120
TEMPERATURE_CLASSIFICATION = 0.0
TEMPERATURE_GENERATION = 0.7

# Cheap slot answers the classification requests, capable slot writes prose.
CHEAP_KINDS = (RequestKind.TOPIC, RequestKind.SENTIMENT)


@dataclass
class CompletionRequest:
    kind: RequestKind
    model: str
    messages: List[ChatMessage]
    max_output_tokens: int = DEFAULT_MAX_OUTPUT_TOKENS
    temperature: float = TEMPERATURE_GENERATION

    def __post_init__(self):
        if not self.messages:
            raise ValueError("request must carry at least one message")
        if self.messages[0].role is not Role.SYSTEM:
            raise ValueError("first message must be the system message")

    @classmethod
    def from_bundle(cls, bundle: PromptBundle, models: Dict[str, str],
                    max_output_tokens: int = DEFAULT_MAX_OUTPUT_TOKENS) -> "CompletionRequest":
        cheap = bundle.request_kind in CHEAP_KINDS
        return cls(
            kind=bundle.request_kind,
            model=models["cheap"] if cheap else models["capable"],
            messages=bundle.messages,
            max_output_tokens=max_output_tokens,
            temperature=TEMPERATURE_CLASSIFICATION if cheap else TEMPERATURE_GENERATION,
        )


@dataclass
class CompletionResult:
    text: str
    prompt_tokens: int
    completion_tokens: int
    latency_ms: float

    def __post_init__(self):
        if self.latency_ms < 0:
            raise ValueError("latency must be non-negative")


@dataclass
class ScriptEntry:
    request_kind: RequestKind
    response_text: str = ""
    match: Optional[str] = None
    latency_ms: float = 0.0
    fail: Optional[str] = None  # "timeout" | "unreachable"


@dataclass
class BackendSpec:
    kind: str = "mock"  # "mock" | "http"
    endpoint: str = ""
    credentials_env: str = "OPENAI_API_KEY"
    timeout_s: float = DEFAULT_TIMEOUT_S
    script: List[ScriptEntry] = field(default_factory=list)
    simulate_latency: bool = True


class MockBackend:
    """Replays a script. Entries with a `match` substring act as overrides and
    are never consumed; plain entries rotate per request kind, so a short
    script can serve an arbitrarily long replay deterministically.

    Scripted latency is reported, not slept, unless `simulate_latency` is
    False; replays stay fast while the timing arithmetic downstream sees the
    injected values.
    """

    def __init__(self, script: Sequence[ScriptEntry], simulate_latency: bool = True):
        self.script = list(script)
        self.simulate_latency = simulate_latency
        self._lock = threading.Lock()
        self._cursors: Dict[RequestKind, int] = {}
        self._plain: Dict[RequestKind, List[ScriptEntry]] = {}
        for entry in self.script:
            if entry.match is None:
                self._plain.setdefault(entry.request_kind, []).append(entry)

    def _select(self, request: CompletionRequest) -> ScriptEntry:
        # Match against the latest user message only; system text would
        # false-positive on instruction wording.
        user_texts = [m.content for m in request.messages if m.role is Role.USER]
        text = user_texts[-1] if user_texts else ""
        for entry in self.script:
            if entry.request_kind is request.kind and entry.match is not None \
                    and entry.match in text:
                return entry
        plain = self._plain.get(request.kind)
        if not plain:
            raise MockScriptMissError(f"mock script has no entry for {request.kind.value!r}")
        with self._lock:
            i = self._cursors.get(request.kind, 0)
            self._cursors[request.kind] = i + 1
        return plain[i % len(plain)]

    def complete(self, request: CompletionRequest) -> CompletionResult:
        entry = self._select(request)
        if entry.fail == "timeout":
            raise GatewayTimeoutError(f"mock scripted timeout for {request.kind.value}")
        if entry.fail == "unreachable":
            raise BackendUnreachableError(f"mock scripted unreachable for {request.kind.value}")
        if not self.simulate_latency and entry.latency_ms:
            time.sleep(entry.latency_ms / 1000.0)
        prompt_tokens = sum(count_tokens(m.content) for m in request.messages)
        return CompletionResult(
            text=entry.response_text,
            prompt_tokens=prompt_tokens,
            completion_tokens=count_tokens(entry.response_text),
            latency_ms=float(entry.latency_ms),
        )


class HttpBackend:
    """OpenAI-compatible chat-completions client. One retry on transport
    errors, none on timeouts (the conversation cannot absorb a second wait)."""

    def __init__(self, endpoint: str, credentials_env: str = "OPENAI_API_KEY",
                 timeout_s: float = DEFAULT_TIMEOUT_S):
        self.endpoint = endpoint
        self.credentials_env = credentials_env
        self.timeout_s = timeout_s

    def _headers(self) -> Dict[str, str]:
        headers = {"Content-Type": "application/json"}
        token = os.environ.get(self.credentials_env, "")
        if token:
            headers["Authorization"] = f"Bearer {token}"
        return headers

    def complete(self, request: CompletionRequest) -> CompletionResult:
        body = {
            "model": request.model,
            "messages": [{"role": m.role.value, "content": m.content} for m in request.messages],
            "temperature": request.temperature,
            "max_tokens": request.max_output_tokens,
        }
        start = time.perf_counter()
        response = None
        for attempt in (0, 1):
            try:
                response = requests.post(self.endpoint, json=body, headers=self._headers(),
                                          timeout=self.timeout_s)
                break
            except requests.Timeout as exc:
                raise GatewayTimeoutError(
                    f"{request.kind.value} request timed out after {self.timeout_s}s") from exc
            except requests.RequestException as exc:
                if attempt == 1:
                    raise BackendUnreachableError(str(exc)) from exc
                logger.warning("transport error on %s request, retrying once: %s",
                               request.kind.value, exc)
        latency_ms = (time.perf_counter() - start) * 1000.0
        try:
            payload = response.json()
            text = payload["choices"][0]["message"]["content"]
            usage = payload.get("usage", {})
            prompt_tokens = int(usage.get("prompt_tokens", 0))
            completion_tokens = int(usage.get("completion_tokens", 0))
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise MalformedUpstreamResponseError(f"cannot parse upstream response: {exc}") from exc
        return CompletionResult(
            text=text,
            prompt_tokens=prompt_tokens,
            completion_tokens=completion_tokens,
            latency_ms=latency_ms,
        )


def build_backend(spec: BackendSpec):
    if spec.kind == "mock":
        return MockBackend(spec.script, simulate_latency=spec.simulate_latency)
    if spec.kind == "http":
        return HttpBackend(spec.endpoint, spec.credentials_env, spec.timeout_s)
    raise ValueError(f"unknown backend kind {spec.kind!r}")


def complete(backend, request: CompletionRequest) -> CompletionResult:
    """Run one completion against whichever backend is configured."""
    return backend.complete(request)


# --- parsing ---

def _is_punct(ch: str) -> bool:
    return unicodedata.category(ch).startswith("P")


def _normalize_label(text: str) -> str:
    t = text.strip()
    while t and _is_punct(t[0]):
        t = t[1:]
    while t and _is_punct(t[-1]):
        t = t[:-1]
    return t.strip().casefold()


def parse_topic(text: str, allowed: Sequence[str]) -> Optional[str]:
    """Strict match of the model's answer against the offered topic ids.
    NONE (or anything unrecognized, with a warning) means no topic change; no
    fuzzy extraction, so prompt regressions surface instead of hiding."""
    label = _normalize_label(text)
    if label == TOPIC_NONE_SENTINEL.casefold():
        return None
    by_norm = {_normalize_label(t): t for t in allowed}
    if label in by_norm:
        return by_norm[label]
    logger.warning("topic answer %r matches none of the %d allowed topics", text[:80], len(allowed))
    return None


def parse_sentiment(text: str) -> str:
    label = _normalize_label(text)
    if label in (SENTIMENT_POSITIVE, SENTIMENT_NEGATIVE, SENTIMENT_NEUTRAL):
        return label
    logger.warning("sentiment answer %r is not a permitted label; treating as neutral", text[:80])
    return SENTIMENT_NEUTRAL


@dataclass
class ToneReply:
    tone: str  # humorous | aggressive | neutral
    reply: str

    def detected(self) -> DetectedTone:
        if self.tone == "humorous":
            return DetectedTone.HUMOROUS
        if self.tone == "aggressive":
            return DetectedTone.AGGRESSIVE
        return DetectedTone.NONE


_TONE_RE = re.compile(r"^\s*tone\s*:\s*(humorous|aggressive|neutral)\b\s*(.*)$",
                      re.IGNORECASE)


def parse_tone_reply(text: str) -> ToneReply:
    """Split the reply request's output into the detected-tone line and the
    reply body. A missing or malformed tone line degrades to neutral with the
    whole text kept as the reply."""
    lines = text.split("\n", 1)
    m = _TONE_RE.match(lines[0])
    if m:
        tone = m.group(1).casefold()
        remainder = m.group(2) or ""
        if len(lines) > 1:
            remainder = (remainder + "\n" + lines[1]) if remainder else lines[1]
        remainder = remainder.strip()
        if not remainder:
            raise EmptyReplyError("tone line present but reply body is empty")
        return ToneReply(tone, remainder)
    body = text.strip()
    if not body:
        raise EmptyReplyError("reply text is empty")
    logger.warning("reply lacks a %s line; treating tone as neutral", TONE_LINE_PREFIX)
    return ToneReply("neutral", body)
