"""Live differential-test sessions over HTTP.

Each session wraps one model bank.  State changes are appended to a
per-session JSON-lines event log; replaying the log reproduces the session
exactly, which doubles as the persistence mechanism and an audit trail.
"""

from __future__ import annotations

import json
import os
import threading
import uuid
from dataclasses import dataclass, field
from datetime import datetime, timezone

import numpy as np
from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel

from .acquisition import CandidateGrid, score_grid
from .bank import ModelBank
from .errors import BadsError
from .simulate import (
    DEFAULT_SPREAD_DB,
    HearingLossClass,
    canonical_audiogram,
    generate_reference_exam,
)
from .stimuli import CURRENT_TASK, Observation, ToneStimulus

REFERENCE_SIZE = 50


class ApiError(Exception):
    def __init__(self, status: int, code: str, message: str):
        super().__init__(message)
        self.status = status
        self.code = code
        self.message = message


def _now() -> str:
    return datetime.now(timezone.utc).isoformat()


class ObservationIn(BaseModel):
    freq_hz: float
    intensity_db: float
    task: int = 1
    response: int


class CreateSessionRequest(BaseModel):
    reference_class: str | None = None
    observations: list[ObservationIn] | None = None
    seed: int = 0
    bf_threshold: float = 100.0
    spread: float = DEFAULT_SPREAD_DB


class ResponseIn(BaseModel):
    ordinal: int
    heard: bool


class StatusPatch(BaseModel):
    status: str


@dataclass
class Session:
    id: str
    bank: ModelBank
    grid: CandidateGrid
    bf_threshold: float
    created_at: str
    updated_at: str
    status: str = "active"
    events: list = field(default_factory=list)
    proposed: dict | None = None
    lock: threading.RLock = field(default_factory=threading.RLock, repr=False)

    @property
    def next_ordinal(self) -> int:
        return sum(1 for e in self.events if e["type"] == "response") + 1

    def concluded(self) -> bool:
        return self.status == "concluded"


def _tone_dict(tone: ToneStimulus) -> dict:
    return {"freq_hz": tone.frequency_hz, "intensity_db": tone.intensity_db}


class SessionStore:
    """In-memory sessions backed by append-only JSONL event logs."""

    def __init__(self, data_dir: str):
        self.data_dir = data_dir
        os.makedirs(data_dir, exist_ok=True)
        self._sessions: dict[str, Session] = {}
        self._lock = threading.Lock()

    def _path(self, session_id: str) -> str:
        return os.path.join(self.data_dir, f"{session_id}.jsonl")

    def _append(self, session_id: str, event: dict) -> None:
        with open(self._path(session_id), "a") as fh:
            fh.write(json.dumps(event, sort_keys=True) + "\n")

    # ------------------------------------------------------------ create

    def create(self, req: CreateSessionRequest) -> Session:
        if (req.reference_class is None) == (req.observations is None):
            raise ApiError(
                422,
                "validation_error",
                "provide exactly one of reference_class or observations",
            )
        if req.observations is not None:
            if len(req.observations) != REFERENCE_SIZE:
                raise ApiError(
                    422,
                    "validation_error",
                    f"reference exam must hold exactly {REFERENCE_SIZE} observations, "
                    f"got {len(req.observations)}",
                )
            if any(o.task != 1 for o in req.observations):
                raise ApiError(
                    422, "validation_error", "reference observations must carry task 1"
                )
        created = {
            "type": "created",
            "at": _now(),
            "reference_class": req.reference_class,
            "observations": [o.model_dump() for o in req.observations]
            if req.observations is not None
            else None,
            "seed": req.seed,
            "bf_threshold": req.bf_threshold,
            "spread": req.spread,
        }
        session = self._build(uuid.uuid4().hex, created)
        with self._lock:
            self._sessions[session.id] = session
        self._append(session.id, created)
        return session

    def _build(self, session_id: str, created: dict) -> Session:
        try:
            if created["observations"] is not None:
                observations = [
                    Observation(
                        ToneStimulus(o["freq_hz"], o["intensity_db"], o["task"]),
                        o["response"],
                    )
                    for o in created["observations"]
                ]
                bank = ModelBank.fit_reference(observations)
            else:
                hearing_class = HearingLossClass.parse(created["reference_class"])
                gt = canonical_audiogram(hearing_class, created["spread"])
                exam = generate_reference_exam(gt, created["seed"])
                bank = ModelBank.from_theta(list(exam.observations), exam.map_theta)
        except BadsError as exc:
            raise ApiError(500, "inference_error", str(exc)) from exc
        except (KeyError, ValueError) as exc:
            raise ApiError(422, "validation_error", str(exc)) from exc
        session = Session(
            id=session_id,
            bank=bank,
            grid=CandidateGrid.default(),
            bf_threshold=created["bf_threshold"],
            created_at=created["at"],
            updated_at=created["at"],
            events=[created],
        )
        self._propose(session)
        return session

    # ------------------------------------------------------------ access

    def get(self, session_id: str) -> Session:
        with self._lock:
            session = self._sessions.get(session_id)
        if session is None:
            session = self._load(session_id)
        if session is None:
            raise ApiError(404, "not_found", f"unknown session {session_id}")
        return session

    def _load(self, session_id: str) -> Session | None:
        path = self._path(session_id)
        if not os.path.exists(path):
            return None
        with open(path) as fh:
            events = [json.loads(line) for line in fh if line.strip()]
        if not events or events[0]["type"] != "created":
            return None
        session = self._build(session_id, events[0])
        for event in events[1:]:
            if event["type"] != "response":
                continue
            tone = ToneStimulus(
                event["tone"]["freq_hz"], event["tone"]["intensity_db"], CURRENT_TASK
            )
            self._apply_response(session, tone, bool(event["heard"]), event["at"])
        with self._lock:
            self._sessions[session_id] = session
        return session

    def delete(self, session_id: str) -> None:
        self.get(session_id)
        with self._lock:
            self._sessions.pop(session_id, None)
        path = self._path(session_id)
        if os.path.exists(path):
            os.remove(path)

    # ----------------------------------------------------------- actions

    def _propose(self, session: Session) -> None:
        if session.concluded():
            session.proposed = None
            return
        scores = score_grid(session.bank, session.grid, "bads")
        idx = int(np.argmax(scores))
        session.proposed = {
            "ordinal": session.next_ordinal,
            "tone": _tone_dict(session.grid.stimuli[idx]),
            "score": float(scores[idx]),
            "strategy": "bads",
        }

    def _apply_response(self, session: Session, tone: ToneStimulus, heard: bool, at: str) -> dict:
        try:
            session.bank.update(Observation(tone, int(heard)))
        except BadsError as exc:
            raise ApiError(500, "inference_error", str(exc)) from exc
        log_bf = abs(session.bank.log_bayes_factor)
        event = {
            "type": "response",
            "at": at,
            "ordinal": session.next_ordinal,
            "tone": _tone_dict(tone),
            "heard": heard,
            "posterior": list(session.bank.posterior),
            "log_bf": log_bf,
        }
        session.events.append(event)
        session.updated_at = at
        if log_bf >= np.log(session.bf_threshold):
            session.status = "concluded"
            session.proposed = None
        else:
            self._propose(session)
        return event

    def respond(self, session_id: str, req: ResponseIn) -> Session:
        session = self.get(session_id)
        with session.lock:
            if session.concluded():
                raise ApiError(409, "conflict", "session already concluded")
            if session.proposed is None:
                raise ApiError(409, "conflict", "no tone has been proposed")
            if req.ordinal != session.proposed["ordinal"]:
                raise ApiError(
                    409,
                    "conflict",
                    f"ordinal {req.ordinal} is not the pending ordinal "
                    f"{session.proposed['ordinal']}",
                )
            tone = ToneStimulus(
                session.proposed["tone"]["freq_hz"],
                session.proposed["tone"]["intensity_db"],
                CURRENT_TASK,
            )
            event = self._apply_response(session, tone, req.heard, _now())
            self._append(session.id, event)
        return session

    def conclude(self, session_id: str) -> Session:
        session = self.get(session_id)
        with session.lock:
            if not session.concluded():
                session.status = "concluded"
                session.proposed = None
                session.updated_at = _now()
        return session


# ---------------------------------------------------------------- views


def _decision_view(session: Session) -> dict | None:
    if not session.concluded():
        return None
    decision = session.bank.decision()
    return {
        "winner": decision.winner,
        "bayes_factor": decision.bayes_factor,
        "changed": decision.winner == "different",
    }


def session_summary(session: Session) -> dict:
    return {
        "id": session.id,
        "status": session.status,
        "created_at": session.created_at,
        "updated_at": session.updated_at,
        "bf_threshold": session.bf_threshold,
        "posterior": {
            "same": session.bank.posterior[0],
            "different": session.bank.posterior[1],
        },
        "log_bf": abs(session.bank.log_bayes_factor),
        "bayes_factor": float(np.exp(min(abs(session.bank.log_bayes_factor), 700.0))),
        "responses": session.next_ordinal - 1,
        "decision": _decision_view(session),
        "next_tone": session.proposed,
    }


def session_state(session: Session) -> dict:
    grid = session.grid
    n_int = len(grid.intensities)
    n_freq = len(grid.frequencies)
    p_same = session.bank.predictive_mf_batch(grid.coords).reshape(n_int, n_freq)
    w_g, probs_g = session.bank.predictive_mg_batch(grid.coords)
    p_diff = (w_g @ probs_g).reshape(n_int, n_freq)
    trace = [
        {
            "ordinal": e["ordinal"],
            "tone": e["tone"],
            "heard": e["heard"],
            "posterior": e["posterior"],
            "log_bf": e["log_bf"],
        }
        for e in session.events
        if e["type"] == "response"
    ]
    view = session_summary(session)
    view.update(
        {
            "trace": trace,
            "events": trace,
            "surface": {
                "frequencies_hz": [float(f) for f in np.sort(grid.frequencies)],
                "intensities_db": [float(i) for i in np.sort(grid.intensities)],
                "p_same": p_same.tolist(),
                "p_different": p_diff.tolist(),
            },
        }
    )
    return view


def create_app(data_dir: str = "./bads-sessions", ui_dir: str | None = None) -> FastAPI:
    """Assemble the service; sessions persist under ``data_dir``."""
    app = FastAPI(title="Active differential audiometry service")
    store = SessionStore(data_dir)
    app.state.store = store

    @app.exception_handler(ApiError)
    async def _api_error(_request: Request, exc: ApiError):
        return JSONResponse(
            status_code=exc.status, content={"code": exc.code, "message": exc.message}
        )

    @app.get("/v1/classes")
    def classes():
        table = []
        for member in HearingLossClass:
            gt = canonical_audiogram(member)
            lo, hi = member.pta_range
            table.append(
                {
                    "name": member.value,
                    "pta_range": [lo, None if hi == float("inf") else hi],
                    "anchor_frequencies_hz": list(gt.anchor_frequencies),
                    "anchor_thresholds_db": list(gt.anchor_thresholds),
                }
            )
        return {"classes": table}

    @app.post("/v1/sessions", status_code=201)
    def create_session(req: CreateSessionRequest):
        session = store.create(req)
        return session_summary(session)

    @app.get("/v1/sessions/{session_id}")
    def get_session(session_id: str):
        return session_state(store.get(session_id))

    @app.get("/v1/sessions/{session_id}/next-tone")
    def next_tone(session_id: str):
        session = store.get(session_id)
        with session.lock:
            if session.concluded():
                raise ApiError(409, "conflict", "session already concluded")
            if session.proposed is None:
                store._propose(session)
            return session.proposed

    @app.post("/v1/sessions/{session_id}/responses")
    def submit_response(session_id: str, req: ResponseIn):
        session = store.respond(session_id, req)
        return session_summary(session)

    @app.patch("/v1/sessions/{session_id}")
    def patch_session(session_id: str, patch: StatusPatch):
        if patch.status != "concluded":
            raise ApiError(422, "validation_error", "status can only move to concluded")
        return session_summary(store.conclude(session_id))

    @app.delete("/v1/sessions/{session_id}", status_code=204)
    def delete_session(session_id: str):
        store.delete(session_id)

    if ui_dir is None:
        ui_dir = os.environ.get("BADS_UI_DIR")
    if ui_dir and os.path.isdir(ui_dir):
        app.mount("/", StaticFiles(directory=ui_dir, html=True), name="ui")
    return app
