"""Markov machinery for dialogue nuances.

Each nuance (diversity, time, place, tone, speech act) carries an ordered
list of value labels plus one extra unpaired flag meaning "free choice"
(for tone: "stay neutral"). A one-hot flag vector selects the active value;
a column-stochastic transition matrix evolves it between conversation
steps. The stationary distribution of that matrix is the long-run usage
frequency of each value, which the metrics side checks empirically.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional

import numpy as np

from . import _kernels
from .errors import (
    DimensionMismatchError,
    InvalidDistributionError,
    NegativeEntryError,
    NoConvergenceError,
    NonStochasticColumnError,
    NotOverridableToneError,
)

COLUMN_SUM_TOL = 1e-9
STATIONARY_RESIDUAL_TOL = 1e-8
POWER_ITERATION_TOL = 1e-12
POWER_ITERATION_MAX = 10000


class NuanceKind(str, Enum):
    DIVERSITY = "diversity"
    TIME = "time"
    PLACE = "place"
    TONE = "tone"
    SPEECH_ACT = "speech_act"


# Tone and speech-act labels are fixed across deployments; the other three
# nuances take deployment-specific labels (always three of them).
TONE_VALUES = [
    "humorous", "kind", "dramatic", "controversial",
    "aggressive", "teasing", "alarmist", "worried",
]
SPEECH_ACT_VALUES = ["assertive", "commissive", "expressive", "directive"]
PERSONAL_NUANCE_SIZE = 3  # diversity / time / place

TONE_HUMOROUS_INDEX = TONE_VALUES.index("humorous")
TONE_AGGRESSIVE_INDEX = TONE_VALUES.index("aggressive")
SPEECH_ACT_DIRECTIVE_INDEX = SPEECH_ACT_VALUES.index("directive")


class DetectedTone(str, Enum):
    HUMOROUS = "humorous"
    AGGRESSIVE = "aggressive"
    NONE = "none"


@dataclass
class NuanceValueVector:
    """Ordered value labels for one nuance (the flag vector has one extra slot)."""

    kind: NuanceKind
    values: List[str]

    def __post_init__(self):
        if len(self.values) < 1:
            raise ValueError(f"{self.kind.value}: at least one value label required")
        if any(not v.strip() for v in self.values):
            raise ValueError(f"{self.kind.value}: empty value label")
        if len(set(self.values)) != len(self.values):
            raise ValueError(f"{self.kind.value}: duplicate value labels")
        if self.kind is NuanceKind.TONE and self.values != TONE_VALUES:
            raise ValueError(f"tone values must be exactly {TONE_VALUES}")
        if self.kind is NuanceKind.SPEECH_ACT and self.values != SPEECH_ACT_VALUES:
            raise ValueError(f"speech act values must be exactly {SPEECH_ACT_VALUES}")
        if self.kind in (NuanceKind.DIVERSITY, NuanceKind.TIME, NuanceKind.PLACE) \
                and len(self.values) != PERSONAL_NUANCE_SIZE:
            raise ValueError(f"{self.kind.value}: expected {PERSONAL_NUANCE_SIZE} values")

    @property
    def size(self) -> int:
        """Flag-vector dimension: one flag per value plus the unpaired slot."""
        return len(self.values) + 1


@dataclass(eq=False)
class FlagVector:
    """One-hot selector over a nuance's values; the last slot is the unpaired
    free/neutral flag with no value label."""

    kind: NuanceKind
    flags: np.ndarray

    def __post_init__(self):
        self.flags = np.asarray(self.flags, dtype=np.int64)
        if self.flags.ndim != 1:
            raise InvalidDistributionError("flag vector must be one-dimensional")
        if not np.all((self.flags == 0) | (self.flags == 1)):
            raise InvalidDistributionError("flags must be 0 or 1")
        if int(self.flags.sum()) != 1:
            raise InvalidDistributionError("exactly one flag must be set")

    @classmethod
    def one_hot(cls, kind: NuanceKind, index: int, size: int) -> "FlagVector":
        flags = np.zeros(size, dtype=np.int64)
        flags[index] = 1
        return cls(kind, flags)

    @classmethod
    def free(cls, kind: NuanceKind, size: int) -> "FlagVector":
        """The unpaired last flag: model's free choice (neutral, for tone)."""
        return cls.one_hot(kind, size - 1, size)

    @property
    def size(self) -> int:
        return int(self.flags.shape[0])

    @property
    def index(self) -> int:
        return int(np.argmax(self.flags))

    @property
    def is_free(self) -> bool:
        return self.index == self.size - 1

    def __eq__(self, other):
        return (
            isinstance(other, FlagVector)
            and self.kind == other.kind
            and self.size == other.size
            and self.index == other.index
        )


@dataclass(eq=False)
class ProbabilityVector:
    kind: NuanceKind
    probs: np.ndarray

    def __post_init__(self):
        self.probs = np.asarray(self.probs, dtype=np.float64)
        if self.probs.ndim != 1:
            raise InvalidDistributionError("probability vector must be one-dimensional")
        if np.any(self.probs < -COLUMN_SUM_TOL) or np.any(self.probs > 1 + COLUMN_SUM_TOL):
            raise InvalidDistributionError("probabilities must lie in [0, 1]")
        if abs(float(self.probs.sum()) - 1.0) > COLUMN_SUM_TOL:
            raise InvalidDistributionError(
                f"probabilities sum to {float(self.probs.sum())!r}, expected 1"
            )

    @property
    def size(self) -> int:
        return int(self.probs.shape[0])


@dataclass(eq=False)
class TransitionMatrix:
    """Column-stochastic transition matrix; entry (i, j) is the probability of
    moving from flag j to flag i."""

    kind: NuanceKind
    entries: np.ndarray
    _cum_columns: Optional[np.ndarray] = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        self.entries = np.asarray(self.entries, dtype=np.float64)

    @property
    def size(self) -> int:
        return int(self.entries.shape[0])

    @property
    def cum_columns(self) -> np.ndarray:
        """Per-column cumulative sums, cached for fast sampling."""
        if self._cum_columns is None:
            self._cum_columns = np.cumsum(self.entries, axis=0)
        return self._cum_columns


def validate_transition_matrix(matrix: TransitionMatrix) -> TransitionMatrix:
    """Check that the matrix is square with entries in [0, 1] and columns
    summing to 1 within tolerance. Returns the matrix for chaining."""
    entries = matrix.entries
    if entries.ndim != 2 or entries.shape[0] != entries.shape[1]:
        got = entries.shape[1] if entries.ndim == 2 else -1
        raise DimensionMismatchError(entries.shape[0], got, what="transition matrix")
    neg = np.argwhere(entries < 0)
    if neg.size:
        i, j = (int(x) for x in neg[0])
        raise NegativeEntryError(i, j, float(entries[i, j]))
    sums = entries.sum(axis=0)
    bad = np.argwhere(np.abs(sums - 1.0) > COLUMN_SUM_TOL)
    if bad.size:
        j = int(bad[0][0])
        raise NonStochasticColumnError(j, float(sums[j]))
    return matrix


def rank_one_matrix(kind: NuanceKind, stationary: List[float]) -> TransitionMatrix:
    """Build the matrix whose every column equals the given stationary vector
    (renormalized, since published values carry rounding). Its steady state is
    that vector and the next flag is independent of the current one."""
    vec = np.asarray(stationary, dtype=np.float64)
    if np.any(vec < 0):
        raise InvalidDistributionError("stationary vector entries must be non-negative")
    total = float(vec.sum())
    if total <= 0:
        raise InvalidDistributionError("stationary vector must have positive mass")
    vec = vec / total
    entries = np.tile(vec[:, None], (1, vec.shape[0]))
    return validate_transition_matrix(TransitionMatrix(kind, entries))


def probability_update(matrix: TransitionMatrix, flags: FlagVector) -> ProbabilityVector:
    """Next-step distribution: the matrix column selected by the set flag."""
    validate_transition_matrix(matrix)
    if flags.size != matrix.size:
        raise DimensionMismatchError(matrix.size, flags.size, what="flag vector")
    probs = matrix.entries @ flags.flags.astype(np.float64)
    return ProbabilityVector(matrix.kind, probs)


def sample_flag(probs: ProbabilityVector, rng: np.random.Generator) -> FlagVector:
    """Draw a one-hot flag from the distribution with a single uniform draw
    (inverse CDF; boundary ties go to the lower index)."""
    cum = np.cumsum(probs.probs)
    u = float(rng.random())
    index = int(np.searchsorted(cum, u, side="left"))
    index = min(index, probs.size - 1)
    return FlagVector.one_hot(probs.kind, index, probs.size)


def step_nuance(flags: FlagVector, matrix: TransitionMatrix,
                rng: np.random.Generator) -> FlagVector:
    """One evolution step: probability update followed by sampling.

    Consumes exactly one uniform draw from `rng`, which keeps trajectories
    reproducible and lets `simulate_flag_indices` replay the same walk in bulk.
    """
    if flags.size != matrix.size:
        raise DimensionMismatchError(matrix.size, flags.size, what="flag vector")
    cum = matrix.cum_columns[:, flags.index]
    u = float(rng.random())
    index = int(np.searchsorted(cum, u, side="left"))
    index = min(index, matrix.size - 1)
    return FlagVector.one_hot(matrix.kind, index, matrix.size)


def simulate_flag_indices(matrix: TransitionMatrix, start_index: int, steps: int,
                          rng: np.random.Generator) -> np.ndarray:
    """Bulk equivalent of iterating `step_nuance` `steps` times: pre-draws the
    uniforms, then walks the chain in the compiled kernel. Identical
    trajectory to the step-by-step loop for the same rng state."""
    uniforms = rng.random(steps)
    return _kernels.walk_chain(matrix.cum_columns, start_index, uniforms)


def steady_state(matrix: TransitionMatrix) -> ProbabilityVector:
    """Stationary distribution by power iteration from the uniform vector.

    Raises NoConvergenceError both when iteration fails to settle (periodic or
    otherwise non-converging chains) and when the fixed point is not unique
    (e.g. the identity matrix), since an arbitrary pick would silently corrupt
    usage-vs-steady-state comparisons downstream.
    """
    validate_transition_matrix(matrix)
    n = matrix.size
    vec = np.full(n, 1.0 / n)
    for _ in range(POWER_ITERATION_MAX):
        nxt = matrix.entries @ vec
        nxt = nxt / nxt.sum()
        if float(np.max(np.abs(nxt - vec))) < POWER_ITERATION_TOL:
            vec = nxt
            break
        vec = nxt
    else:
        raise NoConvergenceError(
            f"{matrix.kind.value}: power iteration did not converge in {POWER_ITERATION_MAX} steps"
        )
    # Uniqueness: eigenvalue 1 must be simple, i.e. nullity of (T - I) is 1.
    nullity = n - int(np.linalg.matrix_rank(matrix.entries - np.eye(n)))
    if nullity != 1:
        raise NoConvergenceError(
            f"{matrix.kind.value}: stationary distribution is not unique ({nullity} fixed directions)"
        )
    residual = float(np.max(np.abs(matrix.entries @ vec - vec)))
    if residual > STATIONARY_RESIDUAL_TOL:
        raise NoConvergenceError(
            f"{matrix.kind.value}: stationary residual {residual!r} above tolerance"
        )
    return ProbabilityVector(matrix.kind, vec)


def apply_tone_override(tone_flags: FlagVector, detected: DetectedTone) -> FlagVector:
    """Directly set the tone flag for a detected humorous/aggressive user tone,
    bypassing the Markov step."""
    if tone_flags.kind is not NuanceKind.TONE:
        raise NotOverridableToneError(f"only the tone nuance can be overridden, got {tone_flags.kind.value}")
    if detected is DetectedTone.HUMOROUS:
        return FlagVector.one_hot(NuanceKind.TONE, TONE_HUMOROUS_INDEX, tone_flags.size)
    if detected is DetectedTone.AGGRESSIVE:
        return FlagVector.one_hot(NuanceKind.TONE, TONE_AGGRESSIVE_INDEX, tone_flags.size)
    raise NotOverridableToneError("tone 'none' evolves naturally and cannot override")


@dataclass
class NuanceSpec:
    """One nuance's configuration: value labels plus the transition matrices
    used before the first-phase and second-phase prompts (usually the same
    object; phase-specific matrices are a config option)."""

    values: NuanceValueVector
    matrix_first: TransitionMatrix
    matrix_second: TransitionMatrix

    def __post_init__(self):
        for m in (self.matrix_first, self.matrix_second):
            validate_transition_matrix(m)
            if m.size != self.values.size:
                raise DimensionMismatchError(self.values.size, m.size, what="transition matrix")

    @property
    def kind(self) -> NuanceKind:
        return self.values.kind


NuanceSpecs = Dict[NuanceKind, NuanceSpec]
