import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dialogue_engine.errors import InvalidStateError
from dialogue_engine.nuance import (
    FlagVector,
    NuanceKind,
    NuanceValueVector,
    SPEECH_ACT_VALUES,
    TONE_VALUES,
)
from dialogue_engine.prompts import ConversationMemory
from dialogue_engine.state import DialogueState, PendingPhaseOne, initial_state
from dialogue_engine.topics import SentenceType

TOPIC_IDS = ["everyday_life", "hobbies", "gardening", "cooking", "food", "travel"]


def value_vector(kind, gen):
    if kind is NuanceKind.TONE:
        return NuanceValueVector(kind, TONE_VALUES)
    if kind is NuanceKind.SPEECH_ACT:
        return NuanceValueVector(kind, SPEECH_ACT_VALUES)
    labels = [f"{kind.value[:2]}-{gen.integers(1000)}-{i}" for i in range(3)]
    return NuanceValueVector(kind, labels)


def random_state(seed: int) -> DialogueState:
    gen = np.random.default_rng(seed)
    values = {kind: value_vector(kind, gen) for kind in NuanceKind}
    flags = {kind: FlagVector.one_hot(kind, int(gen.integers(v.size)), v.size)
             for kind, v in values.items()}
    memory = ConversationMemory()
    for i in range(int(gen.integers(0, 7))):
        memory.append(f"robot sentence {seed}-{i}", f"user sentence {seed}-{i}")
    pending = None
    if gen.random() < 0.4:
        pending = PendingPhaseOne(
            user_sentence="a question", filler="hm", reply="a reply",
            detected_tone="humorous", detected_topic=None, detected_sentiment="positive",
            sentiment_requested=True,
            flags_step1={k.value: flags[k].index for k in NuanceKind},
            tone_override="humorous",
            latencies_ms={"reply": 1000.0, "topic": 400.0},
            tokens={"reply": {"prompt": 100, "completion": 20}},
            directives_reply={k.value: "free" for k in NuanceKind},
        )
    return DialogueState(
        current_topic=TOPIC_IDS[int(gen.integers(len(TOPIC_IDS)))],
        coverage={t: int(gen.integers(0, 5)) for t in TOPIC_IDS if gen.random() < 0.5},
        prefs={t: int(gen.integers(-1, 2)) for t in TOPIC_IDS if gen.random() < 0.5},
        memory=memory,
        nuance_values=values,
        nuance_flags=flags,
        last_sentence_type=None if gen.random() < 0.3 else
        list(SentenceType)[int(gen.integers(len(SentenceType)))],
        turn_counter=int(gen.integers(0, 400)),
        pinned={k for k in NuanceKind if gen.random() < 0.2},
        pending=pending,
    )


def states_equal(a: DialogueState, b: DialogueState) -> bool:
    return a.to_dict() == b.to_dict()


def test_round_trip_identity_on_many_generated_states():
    for seed in range(300):
        state = random_state(seed)
        rebuilt = DialogueState.from_dict(state.to_dict())
        assert states_equal(state, rebuilt), f"seed {seed}"


def test_round_trip_survives_json_wire():
    state = random_state(7)
    wire = json.dumps(state.to_dict(), sort_keys=True)
    rebuilt = DialogueState.from_dict(json.loads(wire))
    assert states_equal(state, rebuilt)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_round_trip_property(seed):
    state = random_state(seed)
    assert states_equal(state, DialogueState.from_dict(state.to_dict()))


def test_initial_state_is_free_everywhere(config, graph):
    state = initial_state(config.nuances, graph.root)
    assert state.current_topic == graph.root
    for kind in NuanceKind:
        assert state.nuance_flags[kind].is_free
    assert state.turn_counter == 0
    assert state.last_sentence_type is None
    assert state.pending is None


def test_copy_is_deep_enough(fresh_state):
    clone = fresh_state.copy()
    clone.coverage["x"] = 3
    clone.prefs["y"] = -1
    clone.memory.append("d", "u")
    clone.nuance_flags[NuanceKind.TONE] = FlagVector.one_hot(NuanceKind.TONE, 0, 9)
    assert "x" not in fresh_state.coverage
    assert "y" not in fresh_state.prefs
    assert len(fresh_state.memory) == 0
    assert fresh_state.nuance_flags[NuanceKind.TONE].is_free


def test_bad_payloads_rejected():
    with pytest.raises(InvalidStateError):
        DialogueState.from_dict("not a dict")
    with pytest.raises(InvalidStateError):
        DialogueState.from_dict({"version": 99})
    good = random_state(3).to_dict()
    bad = dict(good)
    bad["nuance_flags"] = dict(good["nuance_flags"])
    bad["nuance_flags"]["tone"] = 99
    with pytest.raises(InvalidStateError):
        DialogueState.from_dict(bad)
    bad = dict(good)
    bad.pop("current_topic")
    with pytest.raises(InvalidStateError):
        DialogueState.from_dict(bad)


def test_version_field_guards_schema():
    state = random_state(11)
    payload = state.to_dict()
    assert payload["version"] == 1