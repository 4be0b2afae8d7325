"""Nuance-steered dialogue orchestration engine.

Conversation flow follows a topic graph; response style follows per-nuance
Markov chains whose flags ride along in a client-held dialogue state. A
scriptable mock backend stands in for any OpenAI-compatible model, and the
harness replays scripted experiments to reproduce the usage, tone, cost,
and latency analyses.
"""

from .errors import DialogueEngineError
from .nuance import (
    DetectedTone,
    FlagVector,
    NuanceKind,
    NuanceSpec,
    NuanceValueVector,
    ProbabilityVector,
    TransitionMatrix,
    apply_tone_override,
    probability_update,
    rank_one_matrix,
    sample_flag,
    simulate_flag_indices,
    steady_state,
    step_nuance,
    validate_transition_matrix,
)
from .topics import (
    SentenceType,
    Topic,
    TopicGraph,
    candidate_topics,
    load_topic_graph,
    next_topic,
    update_preference,
)
from .prompts import (
    ChatMessage,
    ConversationMemory,
    FillerPool,
    PromptBuilder,
    PromptBundle,
    RequestKind,
    diversity_cost,
    pick_filler,
)
from .tokens import count_tokens, reference_tokenize
from .gateway import (
    BackendSpec,
    CompletionRequest,
    CompletionResult,
    HttpBackend,
    MockBackend,
    ScriptEntry,
    complete,
    parse_sentiment,
    parse_tone_reply,
    parse_topic,
)
from .state import DialogueState, initial_state
from .manager import DialogueManager, SpeechRateModel, TurnRecord
from .config import ServiceConfig, load_config

__version__ = "0.1.0"
