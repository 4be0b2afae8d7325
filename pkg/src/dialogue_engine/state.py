"""Client-held dialogue state.

The state travels inside every request envelope (the service keeps nothing
per session), so it serializes to plain JSON-compatible dicts with a schema
version. Between the two hub calls of a turn it also carries the pending
phase-one outcome that the continuation needs.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Optional, Set

from .errors import InvalidStateError
from .nuance import FlagVector, NuanceKind, NuanceSpecs, NuanceValueVector
from .prompts import ConversationMemory
from .topics import SentenceType

STATE_SCHEMA_VERSION = 1


@dataclass
class PendingPhaseOne:
    """Everything the continuation endpoint needs from a completed phase one."""
    user_sentence: str
    filler: str
    reply: str
    detected_tone: str
    detected_topic: Optional[str]
    detected_sentiment: Optional[str]
    sentiment_requested: bool
    flags_step1: Dict[str, int]
    tone_override: Optional[str]
    latencies_ms: Dict[str, float]
    tokens: Dict[str, Dict[str, int]]
    directives_reply: Dict[str, str]

    def to_dict(self) -> dict:
        return {
            "user_sentence": self.user_sentence,
            "filler": self.filler,
            "reply": self.reply,
            "detected_tone": self.detected_tone,
            "detected_topic": self.detected_topic,
            "detected_sentiment": self.detected_sentiment,
            "sentiment_requested": self.sentiment_requested,
            "flags_step1": dict(self.flags_step1),
            "tone_override": self.tone_override,
            "latencies_ms": dict(self.latencies_ms),
            "tokens": {k: dict(v) for k, v in self.tokens.items()},
            "directives_reply": dict(self.directives_reply),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "PendingPhaseOne":
        try:
            return cls(
                user_sentence=str(data["user_sentence"]),
                filler=str(data["filler"]),
                reply=str(data["reply"]),
                detected_tone=str(data["detected_tone"]),
                detected_topic=data.get("detected_topic"),
                detected_sentiment=data.get("detected_sentiment"),
                sentiment_requested=bool(data["sentiment_requested"]),
                flags_step1={str(k): int(v) for k, v in data["flags_step1"].items()},
                tone_override=data.get("tone_override"),
                latencies_ms={str(k): float(v) for k, v in data["latencies_ms"].items()},
                tokens={str(k): {kk: int(vv) for kk, vv in v.items()}
                        for k, v in data["tokens"].items()},
                directives_reply={str(k): str(v) for k, v in data["directives_reply"].items()},
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise InvalidStateError(f"bad pending phase-one payload: {exc}") from exc


@dataclass
class DialogueState:
    current_topic: str
    coverage: Dict[str, int] = field(default_factory=dict)
    prefs: Dict[str, int] = field(default_factory=dict)
    memory: ConversationMemory = field(default_factory=ConversationMemory)
    nuance_values: Dict[NuanceKind, NuanceValueVector] = field(default_factory=dict)
    nuance_flags: Dict[NuanceKind, FlagVector] = field(default_factory=dict)
    last_sentence_type: Optional[SentenceType] = None
    turn_counter: int = 0
    pinned: Set[NuanceKind] = field(default_factory=set)
    pending: Optional[PendingPhaseOne] = None

    def validate(self) -> "DialogueState":
        for kind in NuanceKind:
            if kind not in self.nuance_values or kind not in self.nuance_flags:
                raise InvalidStateError(f"state is missing the {kind.value} nuance")
            values = self.nuance_values[kind]
            flags = self.nuance_flags[kind]
            if flags.size != values.size:
                raise InvalidStateError(
                    f"{kind.value}: flag size {flags.size} != value size {values.size}")
        for tid, n in self.coverage.items():
            if n < 0:
                raise InvalidStateError(f"negative visit count for {tid!r}")
        for tid, score in self.prefs.items():
            if score not in (-1, 0, 1):
                raise InvalidStateError(f"preference for {tid!r} out of range: {score}")
        return self

    def copy(self) -> "DialogueState":
        return DialogueState(
            current_topic=self.current_topic,
            coverage=dict(self.coverage),
            prefs=dict(self.prefs),
            memory=ConversationMemory(list(self.memory.turns)),
            nuance_values={k: v for k, v in self.nuance_values.items()},
            nuance_flags={k: FlagVector.one_hot(k, f.index, f.size)
                          for k, f in self.nuance_flags.items()},
            last_sentence_type=self.last_sentence_type,
            turn_counter=self.turn_counter,
            pinned=set(self.pinned),
            pending=self.pending,
        )

    def to_dict(self) -> dict:
        return {
            "version": STATE_SCHEMA_VERSION,
            "current_topic": self.current_topic,
            "coverage": dict(self.coverage),
            "prefs": dict(self.prefs),
            "memory": [list(t) for t in self.memory.turns],
            "nuance_values": {k.value: list(v.values) for k, v in self.nuance_values.items()},
            "nuance_flags": {k.value: self.nuance_flags[k].index for k in self.nuance_flags},
            "last_sentence_type": self.last_sentence_type.value if self.last_sentence_type else None,
            "turn_counter": self.turn_counter,
            "pinned": sorted(k.value for k in self.pinned),
            "pending": self.pending.to_dict() if self.pending else None,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "DialogueState":
        if not isinstance(data, dict):
            raise InvalidStateError("state payload must be an object")
        version = data.get("version")
        if version != STATE_SCHEMA_VERSION:
            raise InvalidStateError(f"unsupported state schema version: {version!r}")
        try:
            values = {
                NuanceKind(k): NuanceValueVector(NuanceKind(k), [str(x) for x in v])
                for k, v in data["nuance_values"].items()
            }
            flags = {}
            for k, idx in data["nuance_flags"].items():
                kind = NuanceKind(k)
                size = values[kind].size
                idx = int(idx)
                if not 0 <= idx < size:
                    raise InvalidStateError(f"{k}: flag index {idx} out of range")
                flags[kind] = FlagVector.one_hot(kind, idx, size)
            memory = ConversationMemory([(str(a), str(b)) for a, b in data.get("memory", [])])
            lst = data.get("last_sentence_type")
            pending = data.get("pending")
            state = cls(
                current_topic=str(data["current_topic"]),
                coverage={str(k): int(v) for k, v in data.get("coverage", {}).items()},
                prefs={str(k): int(v) for k, v in data.get("prefs", {}).items()},
                memory=memory,
                nuance_values=values,
                nuance_flags=flags,
                last_sentence_type=SentenceType(lst) if lst else None,
                turn_counter=int(data.get("turn_counter", 0)),
                pinned={NuanceKind(k) for k in data.get("pinned", [])},
                pending=PendingPhaseOne.from_dict(pending) if pending else None,
            )
        except InvalidStateError:
            raise
        except (KeyError, TypeError, ValueError) as exc:
            raise InvalidStateError(f"bad state payload: {exc}") from exc
        return state.validate()


def initial_state(specs: NuanceSpecs, start_topic: str) -> DialogueState:
    """Fresh session state: free/neutral flag on every nuance, empty memory
    and ledgers, conversation anchored at the given topic."""
    values = {kind: spec.values for kind, spec in specs.items()}
    flags = {kind: FlagVector.free(kind, spec.values.size) for kind, spec in specs.items()}
    return DialogueState(
        current_topic=start_topic,
        nuance_values=values,
        nuance_flags=flags,
    ).validate()
