"""Prompt assembly for the four model requests.

Templates are plain text resources with {placeholder} lines; the builder
expands them into labeled sections and tracks each section's token span so
the cost metrics can attribute prompt length to individual nuances. The
exact wording is a reconstruction and can be edited without code changes.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import Enum
from importlib import resources
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import yaml

from .errors import (
    DimensionMismatchError,
    EmptyCandidatesError,
    EmptyPoolError,
    EmptySentenceError,
    InvalidStateError,
)
from .nuance import FlagVector, NuanceKind, NuanceValueVector
from .tokens import Tokenizer, count_tokens, reference_tokenize
from .topics import SentenceType

logger = logging.getLogger(__name__)

MEMORY_TURNS = 5

TONE_LINE_PREFIX = "TONE:"
TOPIC_NONE_SENTINEL = "NONE"


class RequestKind(str, Enum):
    TOPIC = "topic"
    SENTIMENT = "sentiment"
    REPLY = "reply"
    CONTINUATION = "continuation"


class Role(str, Enum):
    SYSTEM = "system"
    USER = "user"
    ASSISTANT = "assistant"


@dataclass
class ChatMessage:
    role: Role
    content: str

    def __post_init__(self):
        if not self.content:
            raise ValueError("message content must be non-empty")


class Obligation(str, Enum):
    COMPULSORY = "compulsory"
    OPTIONAL = "optional"
    NEUTRAL_TONE = "neutral_tone"


@dataclass
class NuanceDirective:
    kind: NuanceKind
    text: str
    obligation: Obligation
    value: Optional[str] = None  # the named value for compulsory directives


@dataclass
class PromptSection:
    """One labeled chunk of the system message; span is [start, end) in tokens
    of the reference tokenization of the whole system message."""
    label: str
    kind: Optional[NuanceKind]
    start: int
    end: int

    @property
    def tokens(self) -> int:
        return self.end - self.start


@dataclass
class PromptBundle:
    request_kind: RequestKind
    messages: List[ChatMessage]
    sections: List[PromptSection]

    def __post_init__(self):
        if not self.messages or self.messages[0].role is not Role.SYSTEM:
            raise InvalidStateError("bundle must start with a system message")
        if sum(1 for m in self.messages if m.role is Role.SYSTEM) != 1:
            raise InvalidStateError("bundle must contain exactly one system message")

    @property
    def system_text(self) -> str:
        return self.messages[0].content

    def section(self, label: str) -> Optional[PromptSection]:
        for s in self.sections:
            if s.label == label:
                return s
        return None


class ConversationMemory:
    """Sliding window over the last turns: (dialogue sentence, user sentence)
    pairs, oldest evicted beyond the window."""

    def __init__(self, turns: Optional[Sequence[Tuple[str, str]]] = None,
                 max_turns: int = MEMORY_TURNS):
        self.max_turns = max_turns
        self.turns: List[Tuple[str, str]] = list(turns or [])[-max_turns:]

    def append(self, dialogue_sentence: str, user_sentence: str) -> None:
        self.turns.append((dialogue_sentence, user_sentence))
        if len(self.turns) > self.max_turns:
            del self.turns[: len(self.turns) - self.max_turns]

    def as_messages(self) -> List[ChatMessage]:
        """Chronological messages: within a turn the user spoke first, the
        robot's dialogue sentence answered."""
        out: List[ChatMessage] = []
        for dialogue_sentence, user_sentence in self.turns:
            out.append(ChatMessage(Role.USER, user_sentence))
            out.append(ChatMessage(Role.ASSISTANT, dialogue_sentence))
        return out

    def __len__(self) -> int:
        return len(self.turns)


@dataclass
class FillerPool:
    """Short latency-masking sentences, pre-written offline."""
    sentences: List[str]
    last_used: Optional[int] = None

    def pick(self, rng: np.random.Generator) -> str:
        if not self.sentences:
            raise EmptyPoolError("filler pool is empty")
        if len(self.sentences) == 1:
            self.last_used = 0
            return self.sentences[0]
        candidates = [i for i in range(len(self.sentences)) if i != self.last_used]
        idx = candidates[int(rng.integers(len(candidates)))]
        self.last_used = idx
        return self.sentences[idx]


def pick_filler(pool: FillerPool, rng: np.random.Generator) -> str:
    return pool.pick(rng)


def load_filler_pool(path: Path) -> FillerPool:
    lines = [ln.strip() for ln in Path(path).read_text(encoding="utf-8").splitlines()]
    return FillerPool([ln for ln in lines if ln])


# --- templates ---

_PLACEHOLDERS = ("{tone_detection}", "{nuances}", "{sentence_type}")


def _default_data_dir() -> Path:
    return Path(str(resources.files("dialogue_engine"))) / "data"


@dataclass
class TemplateSet:
    topic: str
    sentiment: str
    reply: str
    continuation: str
    directives: dict

    @classmethod
    def load(cls, templates_dir: Optional[Path] = None) -> "TemplateSet":
        base = Path(templates_dir) if templates_dir else _default_data_dir() / "templates"
        read = lambda name: (base / name).read_text(encoding="utf-8")
        return cls(
            topic=read("topic.txt"),
            sentiment=read("sentiment.txt"),
            reply=read("reply.txt"),
            continuation=read("continuation.txt"),
            directives=yaml.safe_load(read("directives.yaml")),
        )


class PromptBuilder:
    """Stateless assembler; one instance per engine, safe to share."""

    def __init__(self, templates: Optional[TemplateSet] = None,
                 tokenizer: Tokenizer = reference_tokenize):
        self.templates = templates or TemplateSet.load()
        self.tokenizer = tokenizer

    # -- directives --

    def render_directive(self, values: NuanceValueVector, flags: FlagVector) -> NuanceDirective:
        if flags.size != values.size:
            raise DimensionMismatchError(values.size, flags.size, what="flag vector")
        if flags.kind is not values.kind:
            raise DimensionMismatchError(0, 0, what=f"nuance kind ({values.kind} vs {flags.kind})")
        kind = values.kind
        if not flags.is_free:
            value = values.values[flags.index]
            text = self.templates.directives["compulsory"][kind.value].format(value=value)
            return NuanceDirective(kind, text, Obligation.COMPULSORY, value=value)
        if kind is NuanceKind.TONE:
            return NuanceDirective(kind, self.templates.directives["neutral_tone"],
                                   Obligation.NEUTRAL_TONE)
        text = self.templates.directives["optional"][kind.value].format(
            values=", ".join(values.values))
        return NuanceDirective(kind, text, Obligation.OPTIONAL)

    def _forced_directive_speech_act(self) -> NuanceDirective:
        text = self.templates.directives["compulsory"][NuanceKind.SPEECH_ACT.value].format(
            value="directive")
        return NuanceDirective(NuanceKind.SPEECH_ACT, text, Obligation.COMPULSORY,
                               value="directive")

    # -- assembly helpers --

    def _assemble_system(self, segments: List[Tuple[str, Optional[NuanceKind], str]]
                         ) -> Tuple[str, List[PromptSection]]:
        """Join segment texts with newlines and compute token spans. Newline
        joins keep the tokenization of the whole equal to the concatenation of
        the parts, so the spans partition the message exactly."""
        sections: List[PromptSection] = []
        texts: List[str] = []
        cursor = 0
        for label, kind, text in segments:
            text = text.strip()
            if not text:
                continue
            n = count_tokens(text, self.tokenizer)
            sections.append(PromptSection(label, kind, cursor, cursor + n))
            texts.append(text)
            cursor += n
        return "\n".join(texts), sections

    def _expand_template(self, template: str,
                         nuance_segments: List[Tuple[str, Optional[NuanceKind], str]],
                         tone_detection: Optional[str],
                         sentence_type_text: Optional[str],
                         ) -> List[Tuple[str, Optional[NuanceKind], str]]:
        segments: List[Tuple[str, Optional[NuanceKind], str]] = []
        static: List[str] = []

        def flush():
            if static:
                segments.append(("role", None, "\n".join(static)))
                static.clear()

        for line in template.splitlines():
            stripped = line.strip()
            if stripped == "{tone_detection}":
                flush()
                if tone_detection:
                    segments.append(("tone_detection", None, tone_detection))
            elif stripped == "{nuances}":
                flush()
                segments.extend(nuance_segments)
            elif stripped == "{sentence_type}":
                flush()
                if sentence_type_text:
                    segments.append(("sentence_type", None, sentence_type_text))
            else:
                static.append(line)
        flush()
        return segments

    def _nuance_segments(self, state, forced_directive_speech_act: bool
                         ) -> Tuple[List[Tuple[str, Optional[NuanceKind], str]],
                                    Dict[str, str]]:
        try:
            values_by_kind = state.nuance_values
            flags_by_kind = state.nuance_flags
        except AttributeError as exc:
            raise InvalidStateError(f"state lacks nuance fields: {exc}") from None
        segments = []
        effective: Dict[str, str] = {}
        for kind in NuanceKind:
            try:
                values = values_by_kind[kind]
                flags = flags_by_kind[kind]
            except KeyError:
                raise InvalidStateError(f"state is missing the {kind.value} nuance") from None
            if kind is NuanceKind.SPEECH_ACT and forced_directive_speech_act:
                directive = self._forced_directive_speech_act()
            else:
                try:
                    directive = self.render_directive(values, flags)
                except DimensionMismatchError as exc:
                    raise InvalidStateError(str(exc)) from None
            segments.append((f"nuance:{kind.value}", kind, directive.text))
            effective[kind.value] = directive.value if directive.value else "free"
        return segments, effective

    def _memory_messages(self, memory: ConversationMemory) -> List[ChatMessage]:
        window = ConversationMemory(memory.turns, max_turns=MEMORY_TURNS)
        return window.as_messages()

    # -- the four requests --

    def build_topic_prompt(self, user_sentence: str, candidates: Sequence[str]) -> PromptBundle:
        if not candidates:
            raise EmptyCandidatesError("no candidate topics to offer")
        if not user_sentence.strip():
            raise EmptySentenceError("user sentence is empty")
        system, sections = self._assemble_system([("instructions", None, self.templates.topic)])
        user = f"Sentence: {user_sentence}\nAllowed topics: {', '.join(candidates)}"
        return PromptBundle(RequestKind.TOPIC,
                            [ChatMessage(Role.SYSTEM, system), ChatMessage(Role.USER, user)],
                            sections)

    def build_sentiment_prompt(self, user_sentence: str) -> PromptBundle:
        if not user_sentence.strip():
            raise EmptySentenceError("user sentence is empty")
        system, sections = self._assemble_system([("instructions", None, self.templates.sentiment)])
        return PromptBundle(RequestKind.SENTIMENT,
                            [ChatMessage(Role.SYSTEM, system),
                             ChatMessage(Role.USER, user_sentence)],
                            sections)

    def build_reply_prompt(self, state, memory: ConversationMemory,
                           user_sentence: str) -> "BuiltPrompt":
        if not user_sentence.strip():
            raise InvalidStateError("user sentence is empty")
        nuance_segments, effective = self._nuance_segments(state, forced_directive_speech_act=False)
        segments = self._expand_template(
            self.templates.reply, nuance_segments,
            tone_detection=self.templates.directives["tone_detection"],
            sentence_type_text=None)
        system, sections = self._assemble_system(segments)
        messages = [ChatMessage(Role.SYSTEM, system)]
        messages.extend(self._memory_messages(memory))
        messages.append(ChatMessage(Role.USER, user_sentence))
        bundle = PromptBundle(RequestKind.REPLY, messages, sections)
        return BuiltPrompt(bundle, effective)

    def build_continuation_prompt(self, state, memory: ConversationMemory,
                                  plan: Tuple[str, SentenceType],
                                  topic_label: Optional[str] = None) -> "BuiltPrompt":
        topic_id, sentence_type = plan
        label = topic_label or topic_id
        forced = sentence_type in (SentenceType.YES_NO_QUESTION, SentenceType.OPEN_QUESTION)
        nuance_segments, effective = self._nuance_segments(state, forced_directive_speech_act=forced)
        stype_text = self.templates.directives["sentence_type"][sentence_type.value].format(
            topic=label)
        segments = self._expand_template(
            self.templates.continuation, nuance_segments,
            tone_detection=None, sentence_type_text=stype_text)
        system, sections = self._assemble_system(segments)
        messages = [ChatMessage(Role.SYSTEM, system)]
        messages.extend(self._memory_messages(memory))
        pending = getattr(state, "pending", None)
        if pending is not None:
            messages.append(ChatMessage(Role.USER, pending.user_sentence))
            messages.append(ChatMessage(Role.ASSISTANT, pending.reply))
        bundle = PromptBundle(RequestKind.CONTINUATION, messages, sections)
        return BuiltPrompt(bundle, effective)


@dataclass
class BuiltPrompt:
    """A bundle plus the per-nuance value it actually instructed ("free" when
    the model was left to choose). The effective speech act can differ from
    the sampled flag when a question forces the directive act."""
    bundle: PromptBundle
    effective_values: Dict[str, str]


# --- cost accounting ---

@dataclass
class CostEntry:
    tokens: int
    fraction: float


@dataclass
class PromptCostReport:
    per_nuance: Dict[NuanceKind, CostEntry]
    tone_detection: CostEntry
    total_prompt_tokens: int
    system_tokens: int


def diversity_cost(bundle: PromptBundle, tokenizer: Tokenizer = reference_tokenize
                   ) -> PromptCostReport:
    """Token cost of diversity-awareness content: per-nuance section sizes plus
    the tone-detection block, as counts and fractions of the whole prompt."""
    total = sum(count_tokens(m.content, tokenizer) for m in bundle.messages)
    per_nuance: Dict[NuanceKind, CostEntry] = {}
    for kind in NuanceKind:
        section = bundle.section(f"nuance:{kind.value}")
        tokens = section.tokens if section else 0
        per_nuance[kind] = CostEntry(tokens, tokens / total if total else 0.0)
    td = bundle.section("tone_detection")
    td_tokens = td.tokens if td else 0
    system_tokens = count_tokens(bundle.system_text, tokenizer)
    return PromptCostReport(
        per_nuance=per_nuance,
        tone_detection=CostEntry(td_tokens, td_tokens / total if total else 0.0),
        total_prompt_tokens=total,
        system_tokens=system_tokens,
    )
