"""The hub HTTP service.

Stateless by design: the dialogue state travels inside every envelope, so
any replica can serve any request; the only thing the process writes is an
append-only per-session turn log. Two calls make a turn, mirroring the
client's two waits; concurrent calls for one session are serialized.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import threading
from collections import defaultdict
from pathlib import Path
from typing import List, Optional

import numpy as np
import requests as _requests
from fastapi import FastAPI, HTTPException
from fastapi.middleware.cors import CORSMiddleware
from pydantic import BaseModel

from .config import ServiceConfig, default_config_path, load_config
from .errors import (
    BackendUnreachableError,
    ConfigError,
    GatewayTimeoutError,
    InvalidStateError,
    TurnError,
)
from .manager import DialogueManager, TurnRecord
from .state import DialogueState, initial_state

logger = logging.getLogger(__name__)


class FirstRequestEnvelope(BaseModel):
    session_id: str
    client_sentence: str
    dialogue_state: dict


class SecondRequestEnvelope(BaseModel):
    session_id: str
    dialogue_state: dict


class HubService:
    def __init__(self, config: ServiceConfig, backend=None, seed: Optional[int] = None):
        self.config = config
        self.manager: DialogueManager = config.build_manager(backend=backend)
        effective_seed = seed if seed is not None else config.seed
        self.rng = np.random.default_rng(effective_seed)
        self._locks = defaultdict(threading.Lock)
        self._locks_guard = threading.Lock()
        self.log_dir = Path(config.log_dir)
        self.log_dir.mkdir(parents=True, exist_ok=True)

    def session_lock(self, session_id: str) -> threading.Lock:
        with self._locks_guard:
            return self._locks[session_id]

    def _log_path(self, session_id: str) -> Path:
        safe = "".join(c if c.isalnum() or c in "-_" else "_" for c in session_id) or "session"
        return self.log_dir / f"{safe}.jsonl"

    def append_log(self, session_id: str, kind: str, payload: dict) -> None:
        line = json.dumps({"kind": kind, **payload}, sort_keys=True, ensure_ascii=False)
        with open(self._log_path(session_id), "a", encoding="utf-8") as fh:
            fh.write(line + "\n")

    def initial_state_dict(self) -> dict:
        return initial_state(self.config.nuances, self.manager.graph.root).to_dict()

    def backend_reachable(self) -> bool:
        if self.config.backend.kind != "http":
            return True
        try:
            _requests.head(self.config.backend.endpoint, timeout=2)
            return True
        except _requests.RequestException:
            return False


def _http_error(exc: TurnError) -> HTTPException:
    cause = exc.__cause__
    if isinstance(cause, GatewayTimeoutError):
        return HTTPException(status_code=504, detail=str(exc))
    if isinstance(cause, BackendUnreachableError):
        return HTTPException(status_code=502, detail=str(exc))
    return HTTPException(status_code=502, detail=str(exc))


def build_app(service: HubService) -> FastAPI:
    app = FastAPI(title="dialogue hub")
    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["*"], allow_headers=["*"],
    )

    @app.get("/v1/health")
    def health():
        reachable = service.backend_reachable()
        return {
            "status": "healthy" if reachable else "degraded",
            "backend": service.config.backend.kind,
            "backend_reachable": reachable,
            "topics": len(service.manager.graph),
            "initial_state": service.initial_state_dict(),
        }

    @app.post("/v1/dialogue/first")
    def first(envelope: FirstRequestEnvelope):
        try:
            state = DialogueState.from_dict(envelope.dialogue_state)
        except InvalidStateError as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        with service.session_lock(envelope.session_id):
            filler = service.manager.filler_pool.pick(service.rng)
            try:
                phase_one = service.manager.handle_first_request(
                    state, envelope.client_sentence, service.rng, filler=filler)
            except InvalidStateError as exc:
                raise HTTPException(status_code=400, detail=str(exc))
            except TurnError as exc:
                if exc.record is not None:
                    exc.record.session_id = envelope.session_id
                    service.append_log(envelope.session_id, "turn",
                                       {"record": exc.record.to_dict()})
                raise _http_error(exc)
            service.append_log(envelope.session_id, "phase_one", {
                "turn": state.turn_counter,
                "fragment": phase_one.state.pending.to_dict(),
            })
        return {
            "filler_sentence": filler,
            "reply_sentence": phase_one.reply,
            "dialogue_state": phase_one.state.to_dict(),
            "telemetry": {
                "latencies_ms": phase_one.latencies_ms,
                "tokens": phase_one.tokens,
                "detected_tone": phase_one.detected_tone.value,
                "detected_topic": phase_one.detected_topic,
                "detected_sentiment": phase_one.detected_sentiment,
                "diversity_cost": phase_one.reply_cost,
            },
        }

    @app.post("/v1/dialogue/continuation")
    def continuation(envelope: SecondRequestEnvelope):
        try:
            state = DialogueState.from_dict(envelope.dialogue_state)
        except InvalidStateError as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        if state.pending is None:
            raise HTTPException(status_code=409,
                                detail="no completed phase one in the submitted state")
        with service.session_lock(envelope.session_id):
            try:
                phase_two, record = service.manager.handle_continuation_request(
                    state, service.rng)
            except InvalidStateError as exc:
                raise HTTPException(status_code=409, detail=str(exc))
            except TurnError as exc:
                if exc.record is not None:
                    exc.record.session_id = envelope.session_id
                    service.append_log(envelope.session_id, "turn",
                                       {"record": exc.record.to_dict()})
                raise _http_error(exc)
            record.session_id = envelope.session_id
            service.append_log(envelope.session_id, "turn", {"record": record.to_dict()})
        return {
            "continuation_sentence": phase_two.continuation,
            "dialogue_state": phase_two.state.to_dict(),
            "telemetry": {
                "latency_ms": phase_two.latency_ms,
                "sentence_type": phase_two.sentence_type.value,
                "diversity_cost": phase_two.continuation_cost,
                "record": record.to_dict(),
            },
        }

    return app


def read_session_records(path: Path) -> List[TurnRecord]:
    """Completed TurnRecords from a hub session log (fragments skipped)."""
    records = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            row = json.loads(line)
            if row.get("kind") == "turn":
                records.append(TurnRecord.from_dict(row["record"]))
    return records


def main(argv: Optional[List[str]] = None) -> int:
    parser = argparse.ArgumentParser(prog="dialogue-hub", description="Run the dialogue hub service")
    parser.add_argument("--config", type=Path, default=default_config_path())
    parser.add_argument("--listen", help="host:port (overrides config)")
    parser.add_argument("--backend", choices=("mock", "http"), help="overrides config")
    parser.add_argument("--seed", type=int, help="fix all random sources for reproducible runs")
    args = parser.parse_args(argv)

    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    try:
        config = load_config(args.config)
    except ConfigError as exc:
        print(f"refusing to start: {exc}", file=sys.stderr)
        return 1
    if args.backend:
        config.backend.kind = args.backend
    listen = args.listen or config.listen
    host, _, port = listen.partition(":")
    try:
        service = HubService(config, seed=args.seed)
    except ConfigError as exc:
        print(f"refusing to start: {exc}", file=sys.stderr)
        return 1

    import uvicorn

    app = build_app(service)
    uvicorn.run(app, host=host or "127.0.0.1", port=int(port or 8750), log_level="info")
    return 0


if __name__ == "__main__":
    sys.exit(main())
