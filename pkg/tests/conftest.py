import numpy as np
import pytest

from dialogue_engine.config import ServiceConfig, default_data_dir, load_config
from dialogue_engine.gateway import MockBackend, ScriptEntry
from dialogue_engine.prompts import PromptBuilder, RequestKind
from dialogue_engine.state import initial_state
from dialogue_engine.topics import load_topic_graph


@pytest.fixture(scope="session")
def config() -> ServiceConfig:
    return load_config()


@pytest.fixture(scope="session")
def specs(config):
    return config.nuances


@pytest.fixture(scope="session")
def graph(config):
    return config.load_graph()


@pytest.fixture(scope="session")
def builder(config) -> PromptBuilder:
    return PromptBuilder(config.load_templates())


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def fresh_state(config, graph):
    return initial_state(config.nuances, graph.root)


@pytest.fixture
def small_graph():
    return load_topic_graph({
        "id": "root", "label": "root", "children": [
            {"id": "a", "label": "topic a", "children": [
                {"id": "a1", "label": "a one"},
                {"id": "a2", "label": "a two"},
            ]},
            {"id": "b", "label": "topic b", "children": [
                {"id": "b1", "label": "b one"},
            ]},
            {"id": "c", "label": "topic c"},
        ],
    })


def neutral_echo_script(n=None):
    """Plain script whose replies always carry a neutral tone (no overrides)."""
    return [
        ScriptEntry(RequestKind.REPLY, "TONE: neutral\nThat sounds lovely to me."),
        ScriptEntry(RequestKind.TOPIC, "NONE"),
        ScriptEntry(RequestKind.SENTIMENT, "neutral"),
        ScriptEntry(RequestKind.CONTINUATION, "Shall we keep talking about it?"),
    ]


@pytest.fixture
def neutral_backend():
    return MockBackend(neutral_echo_script())


def pytest_runtest_logreport(report):
    # One visible pass/fail line per acceptance criterion.
    if report.when == "call" and "test_acceptance" in report.nodeid:
        name = report.nodeid.split("::")[-1]
        print(f"\nACCEPTANCE {name}: {report.outcome.upper()}")
