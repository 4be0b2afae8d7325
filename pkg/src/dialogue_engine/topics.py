"""Topic graph, user preferences, and next-topic selection.

The graph is a rooted tree loaded from a declarative document. Selection is
deterministic: jumps follow the topic detected in the user's sentence;
otherwise the current topic is explored until it has had its configured
share of turns, then the walk moves to the nearest unvisited topic.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional, Tuple

from .errors import (
    CycleDetectedError,
    DanglingParentError,
    DuplicateIdError,
    UnknownTopicError,
)

DEFAULT_EXHAUSTION_THRESHOLD = 3
DEFAULT_CANDIDATE_LIMIT = 12

SENTIMENT_POSITIVE = "positive"
SENTIMENT_NEGATIVE = "negative"
SENTIMENT_NEUTRAL = "neutral"


class SentenceType(str, Enum):
    YES_NO_QUESTION = "yes_no_question"
    POSITIVE_STATEMENT = "positive_statement"
    OPEN_QUESTION = "open_question"
    GOAL_PROPOSAL = "goal_proposal"
    EXHORTATIVE = "exhortative"


@dataclass
class Topic:
    id: str
    label: str
    parent: Optional[str] = None
    children: List[str] = field(default_factory=list)


@dataclass
class TopicGraph:
    topics: Dict[str, Topic]
    root: str

    def get(self, topic_id: str) -> Topic:
        try:
            return self.topics[topic_id]
        except KeyError:
            raise UnknownTopicError(topic_id) from None

    def __contains__(self, topic_id: str) -> bool:
        return topic_id in self.topics

    def __len__(self) -> int:
        return len(self.topics)

    def ancestors(self, topic_id: str) -> List[str]:
        """Parent chain from nearest to root."""
        out = []
        node = self.get(topic_id)
        seen = {topic_id}
        while node.parent is not None:
            if node.parent in seen:
                raise CycleDetectedError(node.parent)
            seen.add(node.parent)
            out.append(node.parent)
            node = self.get(node.parent)
        return out

    def siblings(self, topic_id: str) -> List[str]:
        node = self.get(topic_id)
        if node.parent is None:
            return []
        return [c for c in self.get(node.parent).children if c != topic_id]

    def neighbors(self, topic_id: str) -> List[str]:
        """Tree edges in both directions, children first."""
        node = self.get(topic_id)
        out = list(node.children)
        if node.parent is not None:
            out.append(node.parent)
        return out


def load_topic_graph(document: dict) -> TopicGraph:
    """Build and validate a graph from a nested tree document.

    Each node is {id, label, children[]}; a child may be an inline node object
    or a string id referencing a node defined inline elsewhere in the
    document (references let branches be shared or written flat).
    """
    definitions: Dict[str, Topic] = {}
    child_refs: List[Tuple[str, str]] = []

    def walk(node: dict) -> str:
        if not isinstance(node, dict) or "id" not in node:
            raise DanglingParentError(str(node))
        topic_id = str(node["id"])
        if topic_id in definitions:
            raise DuplicateIdError(topic_id)
        topic = Topic(id=topic_id, label=str(node.get("label", topic_id)))
        definitions[topic_id] = topic
        for child in node.get("children", []) or []:
            if isinstance(child, str):
                child_refs.append((topic_id, child))
                topic.children.append(child)
            else:
                topic.children.append(walk(child))
        return topic_id

    root_id = walk(document)

    for parent_id, ref in child_refs:
        if ref not in definitions:
            raise DanglingParentError(ref)

    # Wire parents and reject multiple parents (which in a tree means a cycle
    # or a diamond, neither of which this graph allows).
    for topic in definitions.values():
        for child_id in topic.children:
            child = definitions[child_id]
            if child.parent is not None:
                raise CycleDetectedError(child_id)
            if child_id == topic.id:
                raise CycleDetectedError(child_id)
            child.parent = topic.id

    graph = TopicGraph(topics=definitions, root=root_id)

    # Every node must hang off the root; anything unreachable implies a cycle
    # among the references.
    reachable = set()
    queue = deque([root_id])
    while queue:
        tid = queue.popleft()
        if tid in reachable:
            raise CycleDetectedError(tid)
        reachable.add(tid)
        queue.extend(definitions[tid].children)
    if len(reachable) != len(definitions):
        missing = sorted(set(definitions) - reachable)[0]
        raise CycleDetectedError(missing)
    if definitions[root_id].parent is not None:
        raise CycleDetectedError(root_id)
    return graph


def candidate_topics(graph: TopicGraph, current: str, limit: int = DEFAULT_CANDIDATE_LIMIT) -> List[str]:
    """Topics offered to the classifier: both more specific and broader ones
    relative to the current topic, capped so the model is not flooded.

    Priority order children > siblings > ancestors; document order within each
    class. The current topic is not listed: the request exists to spot topic
    changes, and "no change" is expressed by the NONE sentinel.
    """
    node = graph.get(current)
    ordered: List[str] = []
    ordered.extend(node.children)
    ordered.extend(graph.siblings(current))
    ordered.extend(graph.ancestors(current))
    seen = set()
    out = []
    for tid in ordered:
        if tid not in seen:
            seen.add(tid)
            out.append(tid)
        if len(out) >= limit:
            break
    return out


def update_preference(graph: TopicGraph, prefs: Dict[str, int], topic_id: str,
                      sentiment: str) -> Dict[str, int]:
    """Fold a detected sentiment into the preference store (last signal wins;
    neutral changes nothing). Returns the store for chaining."""
    graph.get(topic_id)
    if sentiment == SENTIMENT_POSITIVE:
        prefs[topic_id] = 1
    elif sentiment == SENTIMENT_NEGATIVE:
        prefs[topic_id] = -1
    elif sentiment != SENTIMENT_NEUTRAL:
        raise ValueError(f"unknown sentiment {sentiment!r}")
    return prefs


def _score(prefs: Dict[str, int], topic_id: str) -> int:
    return int(prefs.get(topic_id, 0))


def _new_topic_sentence_type(prefs: Dict[str, int], topic_id: str) -> SentenceType:
    """Positive statement for liked topics, yes/no probe otherwise (a disliked
    topic only gets here on a user-driven jump, where re-probing is the safer
    move)."""
    if _score(prefs, topic_id) == 1:
        return SentenceType.POSITIVE_STATEMENT
    return SentenceType.YES_NO_QUESTION


def _structural_next(graph: TopicGraph, coverage: Dict[str, int], prefs: Dict[str, int],
                     current: str) -> Optional[str]:
    """Nearest unvisited topic: children of current, then siblings, then
    breadth-first over tree edges. Within a tier prefer liked topics, then
    lexicographic id; disliked topics only when nothing scored >= 0 is left."""

    def pick(candidates: List[str], allow_disliked: bool) -> Optional[str]:
        pool = [
            t for t in candidates
            if coverage.get(t, 0) == 0 and (allow_disliked or _score(prefs, t) >= 0)
        ]
        if not pool:
            return None
        return sorted(pool, key=lambda t: (-_score(prefs, t), t))[0]

    for allow_disliked in (False, True):
        choice = pick(list(graph.get(current).children), allow_disliked)
        if choice:
            return choice
        choice = pick(graph.siblings(current), allow_disliked)
        if choice:
            return choice
        # breadth-first ring by ring outward from current
        seen = {current}
        ring = [current]
        while ring:
            nxt_ring: List[str] = []
            for tid in ring:
                for nb in graph.neighbors(tid):
                    if nb not in seen:
                        seen.add(nb)
                        nxt_ring.append(nb)
            choice = pick(nxt_ring, allow_disliked)
            if choice:
                return choice
            ring = nxt_ring
    return None


def next_topic(graph: TopicGraph, coverage: Dict[str, int], prefs: Dict[str, int],
               current: str, model_topic: Optional[str] = None,
               exhaustion_threshold: int = DEFAULT_EXHAUSTION_THRESHOLD,
               ) -> Tuple[str, SentenceType]:
    """Choose the continuation's topic and sentence type.

    A topic detected in the user's sentence wins (topic jump). Otherwise the
    current topic keeps being explored (open question / goal proposal,
    alternating) until it has been visited `exhaustion_threshold` times, at
    which point one exhortative turn nudges the user toward a new subject;
    after that the walk moves to the nearest unvisited topic.
    """
    graph.get(current)
    if model_topic is not None:
        graph.get(model_topic)
        if model_topic != current:
            return model_topic, _new_topic_sentence_type(prefs, model_topic)

    visits = int(coverage.get(current, 0))
    if visits < exhaustion_threshold:
        # Alternate, starting with the open question on the first revisit; a
        # never-visited current topic (session start) also opens with one.
        if visits == 0 or visits % 2 == 1:
            return current, SentenceType.OPEN_QUESTION
        return current, SentenceType.GOAL_PROPOSAL
    if visits == exhaustion_threshold:
        return current, SentenceType.EXHORTATIVE

    nxt = _structural_next(graph, coverage, prefs, current)
    if nxt is None:
        # Whole graph covered: fall back to the least-visited other topic.
        others = sorted(
            (t for t in graph.topics if t != current),
            key=lambda t: (coverage.get(t, 0), -_score(prefs, t), t),
        )
        if not others:
            return current, SentenceType.OPEN_QUESTION
        nxt = others[0]
    return nxt, _new_topic_sentence_type(prefs, nxt)
