"""Exception types raised across the engine.

Every failure mode that callers are expected to branch on gets its own
class; generic misuse (wrong argument types etc.) raises the usual
built-ins instead.
"""


class DialogueEngineError(Exception):
    """Base class for all engine errors."""


# --- nuance machinery ---

class DimensionMismatchError(DialogueEngineError):
    def __init__(self, expected: int, got: int, what: str = "vector"):
        self.expected = expected
        self.got = got
        super().__init__(f"{what} dimension mismatch: expected {expected}, got {got}")


class NegativeEntryError(DialogueEngineError):
    def __init__(self, row: int, col: int, value: float):
        self.row = row
        self.col = col
        self.value = value
        super().__init__(f"negative matrix entry {value!r} at ({row}, {col})")


class NonStochasticColumnError(DialogueEngineError):
    def __init__(self, index: int, column_sum: float):
        self.index = index
        self.column_sum = column_sum
        super().__init__(f"column {index} sums to {column_sum!r}, expected 1")


class InvalidDistributionError(DialogueEngineError):
    pass


class NoConvergenceError(DialogueEngineError):
    """The chain has no unique stationary distribution reachable by power iteration."""


class NotOverridableToneError(DialogueEngineError):
    pass


# --- topic graph ---

class DuplicateIdError(DialogueEngineError):
    def __init__(self, topic_id: str):
        self.topic_id = topic_id
        super().__init__(f"topic id defined more than once: {topic_id!r}")


class DanglingParentError(DialogueEngineError):
    def __init__(self, topic_id: str):
        self.topic_id = topic_id
        super().__init__(f"topic reference points at an undefined topic: {topic_id!r}")


class CycleDetectedError(DialogueEngineError):
    def __init__(self, topic_id: str):
        self.topic_id = topic_id
        super().__init__(f"topic graph contains a cycle through {topic_id!r}")


class UnknownTopicError(DialogueEngineError):
    def __init__(self, topic_id: str):
        self.topic_id = topic_id
        super().__init__(f"unknown topic: {topic_id!r}")


# --- prompt construction ---

class EmptyCandidatesError(DialogueEngineError):
    pass


class EmptySentenceError(DialogueEngineError):
    pass


class EmptyPoolError(DialogueEngineError):
    pass


class InvalidStateError(DialogueEngineError):
    pass


# --- completion backends ---

class GatewayError(DialogueEngineError):
    """Base class for backend transport and protocol errors."""


class BackendUnreachableError(GatewayError):
    pass


class MockScriptMissError(BackendUnreachableError):
    """The mock script has no entry covering the request."""


class GatewayTimeoutError(GatewayError):
    pass


class MalformedUpstreamResponseError(GatewayError):
    pass


class EmptyReplyError(GatewayError):
    pass


# --- turn orchestration / analysis ---

class TurnError(DialogueEngineError):
    """A turn aborted. Carries the failed turn record for logging."""

    def __init__(self, message: str, record=None):
        self.record = record
        super().__init__(message)


class EmptyLogError(DialogueEngineError):
    pass


class LengthMismatchError(DialogueEngineError):
    pass


class ConfigError(DialogueEngineError):
    pass
