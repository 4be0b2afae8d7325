import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dialogue_engine.errors import (
    EmptyCandidatesError,
    EmptyPoolError,
    EmptySentenceError,
)
from dialogue_engine.nuance import FlagVector, NuanceKind
from dialogue_engine.prompts import (
    ConversationMemory,
    FillerPool,
    Obligation,
    RequestKind,
    Role,
    diversity_cost,
    pick_filler,
)
from dialogue_engine.state import initial_state
from dialogue_engine.tokens import count_tokens
from dialogue_engine.topics import SentenceType


@pytest.fixture
def state(config, graph):
    return initial_state(config.nuances, graph.root)


def set_flag(state, kind, index):
    size = state.nuance_values[kind].size
    state.nuance_flags[kind] = FlagVector.one_hot(kind, index, size)


def five_turn_memory(extra=0):
    memory = ConversationMemory()
    for i in range(5 + extra):
        memory.append(f"Robot line number {i}, pleasant and short.",
                      f"User line number {i}, equally pleasant.")
    return memory


# --- memory ---

def test_memory_keeps_last_five():
    memory = five_turn_memory(extra=1)
    assert len(memory) == 5
    assert memory.turns[0][0] == "Robot line number 1, pleasant and short."


def test_memory_eviction_order():
    memory = ConversationMemory()
    for i in range(7):
        memory.append(f"d{i}", f"u{i}")
    assert [u for _, u in memory.turns] == ["u2", "u3", "u4", "u5", "u6"]


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 40))
def test_memory_never_exceeds_five(n):
    memory = ConversationMemory()
    for i in range(n):
        memory.append(f"d{i}", f"u{i}")
    assert len(memory) <= 5


# --- directives ---

def test_compulsory_directive_names_the_value(builder, state):
    set_flag(state, NuanceKind.DIVERSITY, 0)
    d = builder.render_directive(state.nuance_values[NuanceKind.DIVERSITY],
                                 state.nuance_flags[NuanceKind.DIVERSITY])
    assert d.obligation is Obligation.COMPULSORY
    assert "Italian" in d.text


def test_free_tone_renders_neutral(builder, state):
    d = builder.render_directive(state.nuance_values[NuanceKind.TONE],
                                 state.nuance_flags[NuanceKind.TONE])
    assert d.obligation is Obligation.NEUTRAL_TONE
    assert "neutral" in d.text


def test_free_place_lists_all_values(builder, state):
    d = builder.render_directive(state.nuance_values[NuanceKind.PLACE],
                                 state.nuance_flags[NuanceKind.PLACE])
    assert d.obligation is Obligation.OPTIONAL
    for value in ("house", "Genoa", "Italy"):
        assert value in d.text


# --- topic / sentiment prompts ---

def test_topic_prompt_carries_candidates(builder):
    bundle = builder.build_topic_prompt("I love my garden", ["gardening", "cooking"])
    assert bundle.request_kind is RequestKind.TOPIC
    assert "gardening" in bundle.messages[1].content
    assert "cooking" in bundle.messages[1].content
    assert "NONE" in bundle.system_text


def test_topic_prompt_preserves_candidate_order(builder):
    candidates = [f"topic_{i:02d}" for i in range(12)]
    bundle = builder.build_topic_prompt("hello there", candidates)
    user = bundle.messages[1].content
    positions = [user.index(c) for c in candidates]
    assert positions == sorted(positions)


def test_topic_prompt_empty_candidates(builder):
    with pytest.raises(EmptyCandidatesError):
        builder.build_topic_prompt("hello", [])


def test_sentiment_prompt_shape(builder):
    bundle = builder.build_sentiment_prompt("Yes, I'd love that!")
    assert [m.role for m in bundle.messages] == [Role.SYSTEM, Role.USER]
    for label in ("positive", "negative", "neutral"):
        assert label in bundle.system_text


def test_sentiment_prompt_empty_sentence(builder):
    with pytest.raises(EmptySentenceError):
        builder.build_sentiment_prompt("   ")


# --- reply prompt ---

def test_reply_prompt_truncates_memory(builder, state):
    memory = five_turn_memory(extra=1)  # six turns recorded
    built = builder.build_reply_prompt(state, memory, "How are you?")
    user_messages = [m for m in built.bundle.messages if m.role is Role.USER]
    assistant_messages = [m for m in built.bundle.messages if m.role is Role.ASSISTANT]
    assert len(assistant_messages) == 5
    assert len(user_messages) == 6  # five memory turns plus the live sentence
    assert "number 0" not in " ".join(m.content for m in built.bundle.messages)


def test_reply_prompt_humorous_tone_is_compulsory(builder, state):
    set_flag(state, NuanceKind.TONE, 0)
    built = builder.build_reply_prompt(state, ConversationMemory(), "Tell me a joke")
    assert "humorous" in built.bundle.system_text
    assert built.effective_values["tone"] == "humorous"


def test_reply_prompt_always_instructs_tone(builder, state):
    built = builder.build_reply_prompt(state, ConversationMemory(), "Hello")
    # free tone flag still yields a mandatory neutral-tone instruction
    assert built.effective_values["tone"] == "free"
    section = built.bundle.section("nuance:tone")
    assert section is not None and section.tokens > 0
    assert "neutral" in built.bundle.system_text


def test_reply_prompt_has_tone_detection_block(builder, state):
    built = builder.build_reply_prompt(state, ConversationMemory(), "Hello")
    td = built.bundle.section("tone_detection")
    assert td is not None and td.tokens > 0
    assert "TONE:" in built.bundle.system_text


def test_reply_sections_partition_system_message(builder, state):
    memory = five_turn_memory()
    built = builder.build_reply_prompt(state, memory, "What about the weather?")
    sections = sorted(built.bundle.sections, key=lambda s: s.start)
    assert sections[0].start == 0
    for before, after in zip(sections, sections[1:]):
        assert before.end == after.start
    assert sections[-1].end == count_tokens(built.bundle.system_text)


def test_reply_prompt_optional_diversity_marked(builder, state):
    built = builder.build_reply_prompt(state, ConversationMemory(), "Hello")
    # all free flags: diversity section exists and lists every value
    assert built.effective_values["diversity"] == "free"
    for value in state.nuance_values[NuanceKind.DIVERSITY].values:
        assert value in built.bundle.system_text


# --- continuation prompt ---

def test_question_forces_directive_speech_act(builder, state):
    set_flag(state, NuanceKind.SPEECH_ACT, 0)  # assertive sampled
    built = builder.build_continuation_prompt(
        state, ConversationMemory(), ("gardening", SentenceType.YES_NO_QUESTION),
        topic_label="gardening")
    assert built.effective_values["speech_act"] == "directive"
    assert "directive" in built.bundle.system_text


def test_statement_keeps_sampled_speech_act(builder, state):
    set_flag(state, NuanceKind.SPEECH_ACT, 1)  # commissive
    built = builder.build_continuation_prompt(
        state, ConversationMemory(), ("gardening", SentenceType.POSITIVE_STATEMENT),
        topic_label="gardening")
    assert built.effective_values["speech_act"] == "commissive"
    assert "commissive" in built.bundle.system_text


def test_exhortative_encourages_new_subject(builder, state):
    built = builder.build_continuation_prompt(
        state, ConversationMemory(), ("gardening", SentenceType.EXHORTATIVE),
        topic_label="gardening")
    assert "new subject" in built.bundle.system_text
    assert "gardening" in built.bundle.system_text


def test_continuation_has_no_tone_detection_block(builder, state):
    built = builder.build_continuation_prompt(
        state, ConversationMemory(), ("gardening", SentenceType.OPEN_QUESTION),
        topic_label="gardening")
    assert built.bundle.section("tone_detection") is None
    # but the tone instruction itself is always present
    assert built.bundle.section("nuance:tone") is not None


# --- filler pool ---

def test_filler_pool_of_one(rng):
    pool = FillerPool(["Only one."])
    assert pick_filler(pool, rng) == "Only one."
    assert pick_filler(pool, rng) == "Only one."


def test_filler_pool_empty(rng):
    with pytest.raises(EmptyPoolError):
        pick_filler(FillerPool([]), rng)


def test_filler_no_consecutive_repeats(config, rng):
    pool = config.load_fillers()
    assert len(pool.sentences) >= 20
    picks = [pick_filler(pool, rng) for _ in range(1000)]
    for a, b in zip(picks, picks[1:]):
        assert a != b


def test_filler_seeded_reproducibility(config):
    pool_a = config.load_fillers()
    pool_b = config.load_fillers()
    seq_a = [pick_filler(pool_a, np.random.default_rng(4))]
    seq_b = [pick_filler(pool_b, np.random.default_rng(4))]
    ra, rb = np.random.default_rng(9), np.random.default_rng(9)
    seq_a += [pick_filler(pool_a, ra) for _ in range(50)]
    seq_b += [pick_filler(pool_b, rb) for _ in range(50)]
    assert seq_a == seq_b


# --- cost accounting ---

def test_cost_zero_for_bundles_without_nuances(builder):
    bundle = builder.build_topic_prompt("hello", ["a", "b"])
    report = diversity_cost(bundle)
    assert all(e.tokens == 0 for e in report.per_nuance.values())
    assert report.tone_detection.tokens == 0


def test_cost_fractions_sum_below_one(builder, state):
    built = builder.build_reply_prompt(state, five_turn_memory(), "A question?")
    report = diversity_cost(built.bundle)
    total_fraction = sum(e.fraction for e in report.per_nuance.values()) \
        + report.tone_detection.fraction
    assert 0 < total_fraction <= 1.0


def test_cost_default_template_ranges(builder, state):
    built = builder.build_reply_prompt(state, five_turn_memory(), "A question?")
    report = diversity_cost(built.bundle)
    for kind, entry in report.per_nuance.items():
        assert 0.005 <= entry.fraction <= 0.15, kind
    sections = {s.label: s.tokens for s in built.bundle.sections}
    assert sections["tone_detection"] == max(sections.values())