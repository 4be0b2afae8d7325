"""Service configuration.

One YAML document wires the whole engine: backend, per-nuance labels and
transition matrices, ontology/template/filler resources, and the timing
knobs. Relative resource paths resolve against the config file location;
the packaged default config resolves against the packaged data directory.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Dict, List, Optional

import yaml

from .errors import ConfigError
from .gateway import BackendSpec, ScriptEntry, build_backend
from .manager import DEFAULT_MODELS, DEFAULT_SPEECH_RATE_WPM, DialogueManager, SpeechRateModel
from .nuance import (
    NuanceKind,
    NuanceSpec,
    NuanceSpecs,
    NuanceValueVector,
    SPEECH_ACT_VALUES,
    TONE_VALUES,
    TransitionMatrix,
    rank_one_matrix,
    validate_transition_matrix,
)
from .prompts import FillerPool, PromptBuilder, RequestKind, TemplateSet, load_filler_pool
from .topics import DEFAULT_CANDIDATE_LIMIT, DEFAULT_EXHAUSTION_THRESHOLD, TopicGraph, load_topic_graph


def default_data_dir() -> Path:
    return Path(str(resources.files("dialogue_engine"))) / "data"


def default_config_path() -> Path:
    return default_data_dir() / "config.yaml"


@dataclass
class ServiceConfig:
    listen: str = "127.0.0.1:8750"
    seed: Optional[int] = None
    speech_rate_wpm: float = DEFAULT_SPEECH_RATE_WPM
    log_dir: Path = Path("./session_logs")
    backend: BackendSpec = field(default_factory=BackendSpec)
    models: Dict[str, str] = field(default_factory=lambda: dict(DEFAULT_MODELS))
    max_output_tokens: int = 120
    ontology_path: Path = field(default_factory=lambda: default_data_dir() / "ontology.json")
    templates_dir: Path = field(default_factory=lambda: default_data_dir() / "templates")
    fillers_path: Path = field(default_factory=lambda: default_data_dir() / "fillers.txt")
    exhaustion_threshold: int = DEFAULT_EXHAUSTION_THRESHOLD
    candidate_limit: int = DEFAULT_CANDIDATE_LIMIT
    nuances: NuanceSpecs = field(default_factory=dict)

    def load_graph(self) -> TopicGraph:
        if not self.ontology_path.exists():
            raise ConfigError(f"ontology file not found: {self.ontology_path}")
        with open(self.ontology_path, encoding="utf-8") as fh:
            return load_topic_graph(json.load(fh))

    def load_templates(self) -> TemplateSet:
        if not self.templates_dir.exists():
            raise ConfigError(f"templates directory not found: {self.templates_dir}")
        return TemplateSet.load(self.templates_dir)

    def load_fillers(self) -> FillerPool:
        if not self.fillers_path.exists():
            raise ConfigError(f"filler file not found: {self.fillers_path}")
        return load_filler_pool(self.fillers_path)

    def build_manager(self, backend=None) -> DialogueManager:
        return DialogueManager(
            graph=self.load_graph(),
            specs=self.nuances,
            backend=backend if backend is not None else build_backend(self.backend),
            builder=PromptBuilder(self.load_templates()),
            filler_pool=self.load_fillers(),
            models=dict(self.models),
            speech_rate=SpeechRateModel(self.speech_rate_wpm),
            exhaustion_threshold=self.exhaustion_threshold,
            candidate_limit=self.candidate_limit,
            max_output_tokens=self.max_output_tokens,
        )


def _matrix_from_node(kind: NuanceKind, node: dict, size: int, key: str) -> Optional[TransitionMatrix]:
    raw = node.get(key)
    if raw is None:
        return None
    matrix = validate_transition_matrix(TransitionMatrix(kind, raw))
    if matrix.size != size:
        raise ConfigError(f"{kind.value}: {key} is {matrix.size}x{matrix.size}, expected {size}")
    return matrix


def _nuance_spec(kind: NuanceKind, node: dict) -> NuanceSpec:
    if kind is NuanceKind.TONE:
        labels = TONE_VALUES
    elif kind is NuanceKind.SPEECH_ACT:
        labels = SPEECH_ACT_VALUES
    else:
        labels = [str(v) for v in node.get("values", [])]
        if not labels:
            raise ConfigError(f"{kind.value}: values are required")
    values = NuanceValueVector(kind, labels)
    size = values.size

    base = _matrix_from_node(kind, node, size, "matrix")
    if base is None:
        stationary = node.get("steady_state")
        if stationary is None:
            raise ConfigError(f"{kind.value}: either matrix or steady_state is required")
        if len(stationary) != size:
            raise ConfigError(f"{kind.value}: steady_state has {len(stationary)} entries, expected {size}")
        base = rank_one_matrix(kind, [float(x) for x in stationary])

    first = _matrix_from_node(kind, node, size, "matrix_first") or base
    second = _matrix_from_node(kind, node, size, "matrix_second") or base
    return NuanceSpec(values=values, matrix_first=first, matrix_second=second)


def _script_entries(raw: List[dict]) -> List[ScriptEntry]:
    out = []
    for item in raw:
        out.append(ScriptEntry(
            request_kind=RequestKind(item["request_kind"]),
            response_text=str(item.get("response_text", "")),
            match=item.get("match"),
            latency_ms=float(item.get("latency_ms", 0.0)),
            fail=item.get("fail"),
        ))
    return out


def load_config(path: Optional[Path] = None) -> ServiceConfig:
    config_path = Path(path) if path else default_config_path()
    if not config_path.exists():
        raise ConfigError(f"config file not found: {config_path}")
    with open(config_path, encoding="utf-8") as fh:
        raw = yaml.safe_load(fh) or {}
    base_dir = config_path.parent

    def resolve(p) -> Path:
        p = Path(p)
        return p if p.is_absolute() else (base_dir / p)

    try:
        backend_raw = raw.get("backend", {})
        script: List[ScriptEntry] = []
        if backend_raw.get("script_path"):
            script_file = resolve(backend_raw["script_path"])
            if not script_file.exists():
                raise ConfigError(f"mock script not found: {script_file}")
            with open(script_file, encoding="utf-8") as fh:
                script = _script_entries(yaml.safe_load(fh) or [])
        backend = BackendSpec(
            kind=backend_raw.get("kind", "mock"),
            endpoint=backend_raw.get("endpoint", ""),
            credentials_env=backend_raw.get("credentials_env", "OPENAI_API_KEY"),
            timeout_s=float(backend_raw.get("timeout_s", 20.0)),
            script=script,
            simulate_latency=bool(backend_raw.get("simulate_latency", True)),
        )

        nuances: NuanceSpecs = {}
        nuances_raw = raw.get("nuances", {})
        for kind in NuanceKind:
            node = nuances_raw.get(kind.value)
            if node is None:
                raise ConfigError(f"config is missing the {kind.value} nuance")
            nuances[kind] = _nuance_spec(kind, node)

        topics_raw = raw.get("topics", {})
        config = ServiceConfig(
            listen=str(raw.get("listen", "127.0.0.1:8750")),
            seed=raw.get("seed"),
            speech_rate_wpm=float(raw.get("speech_rate_wpm", DEFAULT_SPEECH_RATE_WPM)),
            log_dir=resolve(raw.get("log_dir", "./session_logs")),
            backend=backend,
            models=dict(raw.get("models", DEFAULT_MODELS)),
            max_output_tokens=int(raw.get("max_output_tokens", 120)),
            ontology_path=resolve(raw["ontology"]) if "ontology" in raw
            else default_data_dir() / "ontology.json",
            templates_dir=resolve(raw["templates_dir"]) if "templates_dir" in raw
            else default_data_dir() / "templates",
            fillers_path=resolve(raw["fillers"]) if "fillers" in raw
            else default_data_dir() / "fillers.txt",
            exhaustion_threshold=int(topics_raw.get("exhaustion_threshold",
                                                    DEFAULT_EXHAUSTION_THRESHOLD)),
            candidate_limit=int(topics_raw.get("candidate_limit", DEFAULT_CANDIDATE_LIMIT)),
            nuances=nuances,
        )
    except ConfigError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad config {config_path}: {exc}") from exc

    # Fail fast on missing resources so the service refuses to boot misconfigured.
    config.load_graph()
    config.load_templates()
    config.load_fillers()
    return config
