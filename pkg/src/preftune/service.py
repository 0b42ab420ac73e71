"""HTTP session server for live human-in-the-loop elicitation.

Sessions are event-sourced: every query, response, and recommendation is
appended to one JSONL file per session, and the in-memory state is always
reproducible by replaying responses through the deterministic loop engine.
Mutating calls on one session are serialized by a per-session lock; distinct
sessions are independent.
"""
from __future__ import annotations

import json
import threading
import time
import uuid
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any

import numpy as np

from . import loops
from .acquisition import AcquisitionConfig
from .domain import (
    Configuration,
    ParameterSpace,
    from_native,
    load_preset,
    space_from_dict,
    space_to_dict,
    to_native,
)
from .errors import ConfigError, ContractViolation, ReplayMismatchError, StalledUserError
from .loops import LoopConfig, ModelConfig, Seeds, default_model_config

REPLAY_TOL = 1e-9


# ---------------------------------------------------------------------------
# Session configuration
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SessionConfig:
    space: ParameterSpace
    space_name: str
    loop: LoopConfig
    acq: AcquisitionConfig
    x_ref: Configuration
    operator_label: str = ""

    def to_dict(self) -> dict:
        return {
            "space": space_to_dict(self.space, self.space_name),
            "loop": loops._config_to_dict(self.loop),
            "acq": {
                "q": self.acq.q,
                "mc_samples": self.acq.mc_samples,
                "restarts": self.acq.restarts,
                "raw_candidates": self.acq.raw_candidates,
                "seed": self.acq.seed,
                "refine_steps": self.acq.refine_steps,
            },
            "x_ref": list(self.x_ref.coords),
            "operator_label": self.operator_label,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SessionConfig":
        space = space_from_dict(data["space"])
        return cls(
            space=space,
            space_name=data["space"].get("name", "custom"),
            loop=loops.config_from_dict(data["loop"]),
            acq=AcquisitionConfig(**data["acq"]),
            x_ref=Configuration(tuple(data["x_ref"])),
            operator_label=data.get("operator_label", ""),
        )


def parse_session_request(payload: dict) -> SessionConfig:
    """Build a SessionConfig from an operator-facing request body."""
    try:
        space_in = payload.get("space", "prosthesis4")
        mode = payload.get("mode")
        ppd = payload.get("points_per_dim")
        algorithm = payload["algorithm"]
        if algorithm not in loops.ALGORITHMS:
            raise ConfigError(f"unknown algorithm {algorithm!r}")
        if mode is None:
            mode = "grid" if algorithm == "eubo_linecospar" else "continuous"
            if mode == "grid" and ppd is None:
                ppd = 5  # the discrete human protocol used five nodes per parameter
        if isinstance(space_in, str):
            space = load_preset(space_in, mode=mode, points_per_dim=ppd)
            space_name = space_in
        else:
            data = dict(space_in)
            data["mode"] = mode
            if ppd is not None:
                data["points_per_dim"] = ppd
            elif mode == "continuous":
                data.pop("points_per_dim", None)
            space = space_from_dict(data)
            space_name = data.get("name", "custom")

        seeds = payload.get("seeds", [0, 0, 0])
        loop = LoopConfig(
            algorithm=algorithm,
            n_init_pairs=int(payload.get("n_init_pairs", 5)),
            budget=int(payload.get("budget", payload.get("N", 15))),
            n_stop=int(payload.get("n_stop", 3)),
            stability_fraction=float(payload.get("stability_fraction", 0.10)),
            refit_every_n=int(payload.get("refit_every_n", 1)),
            seeds=Seeds(*[int(s) for s in seeds]),
        )
        acq_in = payload.get("acq", {})
        default_q = 3 if algorithm == "bpe4prost" else 2
        acq = AcquisitionConfig(
            q=int(acq_in.get("q", default_q)),
            mc_samples=int(acq_in.get("mc_samples", 512)),
            restarts=int(acq_in.get("restarts", 8)),
            raw_candidates=int(acq_in.get("raw_candidates", 256)),
            seed=int(acq_in.get("seed", 0)),
        )
        x_ref_in = payload.get("x_ref")
        if x_ref_in is None:
            x_ref = Configuration((0.5,) * space.dimension)
        elif isinstance(x_ref_in, dict):
            values = [x_ref_in[s.name] for s in space.specs]
            x_ref = from_native(space, values)
        else:
            x_ref = from_native(space, x_ref_in)
        return SessionConfig(
            space=space,
            space_name=space_name,
            loop=loop,
            acq=acq,
            x_ref=x_ref,
            operator_label=str(payload.get("operator_label", "")),
        )
    except (KeyError, TypeError, ValueError, ContractViolation, ConfigError) as exc:
        raise ConfigError(str(exc)) from exc


def native_params(space: ParameterSpace, x: Configuration) -> list[dict]:
    values = to_native(space, x)
    return [
        {
            "name": s.name,
            "value": float(v),
            "unit_label": s.unit_label,
            "lower": s.lower,
            "upper": s.upper,
        }
        for s, v in zip(space.specs, values)
    ]


# ---------------------------------------------------------------------------
# Event-sourced sessions
# ---------------------------------------------------------------------------


class _EventLog:
    def __init__(self, path: Path | None):
        self.path = path
        self.events: list[dict] = []

    def append(self, kind: str, payload: dict) -> dict:
        event = {"seq": len(self.events), "ts": time.time(), "kind": kind, **payload}
        self.events.append(event)
        if self.path is not None:
            with open(self.path, "a") as fh:
                fh.write(json.dumps(event) + "\n")
        return event


class LoopSession:
    """One live elicitation trial bound to its append-only event log."""

    def __init__(
        self,
        session_id: str,
        cfg: SessionConfig,
        log_path: Path | None,
        record_created: bool = True,
    ):
        self.id = session_id
        self.cfg = cfg
        self.model_cfg: ModelConfig = default_model_config(
            cfg.loop.algorithm, cfg.space.dimension
        )
        self.log = _EventLog(log_path)
        self.lock = threading.Lock()
        self.status = "running"
        self.state = loops.new_state(cfg.space, cfg.loop)
        self._qcount = 0
        self._current_qid: str | None = None
        self._last_ack: dict | None = None
        if record_created:
            self.log.append(
                "session_created", {"session_id": session_id, "config": cfg.to_dict()}
            )
        self._sync_query()

    # -- internals ----------------------------------------------------------

    def _issue_query(self, pq: loops.PendingQuery) -> None:
        self._qcount += 1
        self._current_qid = f"q{self._qcount}"
        self.log.append(
            "query_issued",
            {
                "query_id": self._current_qid,
                "pair": {
                    "first": list(pq.first.coords),
                    "second": list(pq.second.coords),
                },
                "presentation_order": pq.presentation_order,
                "query_kind": pq.kind,
                "iteration": pq.iteration,
            },
        )
        self.status = "awaiting_response"

    def _sync_query(self) -> None:
        if self.state.pending is None and not self.state.done:
            self.state, _ = loops.advance(
                self.state, self.cfg.space, self.model_cfg, self.cfg.acq
            )
        pq = self.state.pending
        if pq is not None:
            if self._current_qid is None:
                self._issue_query(pq)
            return
        if self.state.done and self.status != "optimization_done":
            self.status = "optimization_done"
            self._current_qid = None
            final = self.state.final_choice
            self.log.append(
                "trial_completed",
                {
                    "stop_reason": self.state.stop_reason,
                    "iterations": self.state.iteration,
                    "final": None if final is None else list(final.coords),
                },
            )

    def _progress(self) -> dict:
        return {
            "phase": self.state.phase,
            "iteration": self.state.iteration,
            "budget": self.cfg.loop.budget,
            "init_pairs_done": self.state.init_pairs_done,
            "n_init_pairs": self.cfg.loop.n_init_pairs,
        }

    # -- public surface -----------------------------------------------------

    def record(self) -> dict:
        return {
            "session_id": self.id,
            "kind": "loop",
            "status": self.status,
            "algorithm": self.cfg.loop.algorithm,
            "operator_label": self.cfg.operator_label,
            "space": space_to_dict(self.cfg.space, self.cfg.space_name),
            "x_ref": native_params(self.cfg.space, self.cfg.x_ref),
            "progress": self._progress(),
            "stop_reason": self.state.stop_reason,
            "events": len(self.log.events),
        }

    def get_query(self) -> dict | None:
        pq = self.state.pending
        if pq is None or self._current_qid is None:
            return None
        shown_first, shown_second = pq.shown
        return {
            "query_id": self._current_qid,
            "option_A": {"params": native_params(self.cfg.space, shown_first)},
            "option_B": {"params": native_params(self.cfg.space, shown_second)},
            "progress": self._progress(),
            "trial": self.id,
        }

    def post_response(self, query_id: str, choice: str) -> dict:
        if choice not in ("A", "B", "no_preference"):
            raise ConfigError(f"choice must be A, B, or no_preference, got {choice!r}")
        if self._last_ack is not None and query_id == self._last_ack["query_id"]:
            if choice == self._last_ack["choice"]:
                return self._last_ack["ack"]
            raise StaleQueryError("query already answered with a different choice")
        if self._current_qid is None:
            raise StaleQueryError(
                f"no pending query (status {self.status}, stop_reason {self.state.stop_reason})"
            )
        if query_id != self._current_qid:
            raise StaleQueryError(f"stale query id {query_id}; pending is {self._current_qid}")
        pq = self.state.pending
        shown_answer = {"A": "first", "B": "second", "no_preference": "no_preference"}[choice]
        winner = pq.winner_from_shown(shown_answer)
        prev_recs = len(self.state.recommendation_history)
        try:
            new_state = loops.respond(
                self.state, self.cfg.space, self.model_cfg, self.cfg.acq, winner
            )
        except StalledUserError as exc:
            raise StalledUserError(str(exc)) from exc
        self.state = new_state
        self.log.append(
            "response",
            {"query_id": query_id, "choice": choice, "algorithm_winner": winner},
        )
        for rec in self.state.recommendation_history[prev_recs:]:
            self.log.append(
                "recommendation",
                {
                    "iteration": rec.iteration,
                    "point": list(rec.point.coords),
                    "mean": rec.posterior_mean,
                },
            )
        answered_qid = self._current_qid
        self._current_qid = None
        self.status = "running"
        self._sync_query()
        ack = {
            "accepted": True,
            "query_id": answered_qid,
            "next_state": self.status,
            "stop_reason": self.state.stop_reason,
        }
        self._last_ack = {"query_id": answered_qid, "choice": choice, "ack": ack}
        return ack

    def estimate(self) -> dict:
        history = self.state.recommendation_history
        if not history:
            raise NoEstimateError("no completed iteration yet")
        last = history[-1]
        return {
            "recommendation": {
                "iteration": last.iteration,
                "params": native_params(self.cfg.space, last.point),
                "posterior_mean": last.posterior_mean,
            },
            "history": [
                {
                    "iteration": r.iteration,
                    "params": native_params(self.cfg.space, r.point),
                    "posterior_mean": r.posterior_mean,
                }
                for r in history
            ],
            "stop_reason": self.state.stop_reason,
            "status": self.status,
        }

    def close(self) -> None:
        if self.status != "closed":
            self.log.append("session_closed", {})
            self.status = "closed"


class StaleQueryError(ContractViolation):
    """Query id does not match the pending query (409-class)."""


class NoEstimateError(ContractViolation):
    """Estimate requested before any completed iteration (409-class)."""


# ---------------------------------------------------------------------------
# Validation rounds
# ---------------------------------------------------------------------------


class ValidationSession:
    """Blinded post-optimization round: each preferred configuration is
    compared against random challengers through the same query surface."""

    CHALLENGERS_PER_TRIAL = 3

    def __init__(
        self,
        round_id: str,
        space: ParameterSpace,
        space_name: str,
        preferred: list[tuple[str, Configuration]],
        seed: int,
        log_path: Path | None,
        record_created: bool = True,
    ):
        self.id = round_id
        self.space = space
        self.space_name = space_name
        self.preferred = preferred
        self.seed = seed
        self.log = _EventLog(log_path)
        self.lock = threading.Lock()
        self.status = "validating"
        self._last_ack: dict | None = None

        rng = np.random.default_rng([seed, 0x7A11])
        pairs = []
        for trial_idx, (src, pref) in enumerate(preferred):
            for _ in range(self.CHALLENGERS_PER_TRIAL):
                challenger = Configuration.from_array(rng.random(space.dimension))
                pairs.append({"trial": src, "trial_index": trial_idx, "preferred": pref, "challenger": challenger})
        order = rng.permutation(len(pairs))
        self.pairs = [pairs[i] for i in order]
        self.presentations = ["swapped" if rng.random() < 0.5 else "as_is" for _ in self.pairs]
        self.cursor = 0
        self.outcomes: list[dict] = []
        if record_created:
            self.log.append(
                "validation_created",
                {
                    "session_id": round_id,
                    "space": space_to_dict(space, space_name),
                    "seed": seed,
                    "preferred": [
                        {"trial": src, "point": list(p.coords)} for src, p in preferred
                    ],
                },
            )
        self._issue_next()

    def _issue_next(self) -> None:
        if self.cursor >= len(self.pairs):
            self.status = "closed"
            self.log.append(
                "session_closed",
                {"recognition_rate": self.recognition_rate(), "answered": self._answered()},
            )
            return
        pair = self.pairs[self.cursor]
        self.log.append(
            "validation_pair_issued",
            {
                "query_id": f"v{self.cursor + 1}",
                "pair": {
                    "preferred": list(pair["preferred"].coords),
                    "challenger": list(pair["challenger"].coords),
                },
                "presentation_order": self.presentations[self.cursor],
                "trial": pair["trial"],
            },
        )

    def _answered(self) -> int:
        return sum(1 for o in self.outcomes if o["answered"])

    def recognition_rate(self) -> float | None:
        answered = self._answered()
        if answered == 0:
            return None
        wins = sum(1 for o in self.outcomes if o["answered"] and o["preferred_won"])
        return wins / answered

    def record(self) -> dict:
        return {
            "session_id": self.id,
            "kind": "validation",
            "status": self.status,
            "pairs_total": len(self.pairs),
            "pairs_answered": len(self.outcomes),
            "recognition_rate": self.recognition_rate(),
            "outcomes": [
                {k: v for k, v in o.items() if k != "pair_index"} for o in self.outcomes
            ],
            "complete": self.cursor >= len(self.pairs),
        }

    def get_query(self) -> dict | None:
        if self.cursor >= len(self.pairs):
            return None
        pair = self.pairs[self.cursor]
        shown = (pair["preferred"], pair["challenger"])
        if self.presentations[self.cursor] == "swapped":
            shown = (shown[1], shown[0])
        return {
            "query_id": f"v{self.cursor + 1}",
            "option_A": {"params": native_params(self.space, shown[0])},
            "option_B": {"params": native_params(self.space, shown[1])},
            "progress": {
                "phase": "validation",
                "iteration": self.cursor,
                "budget": len(self.pairs),
            },
            "trial": self.id,
        }

    def post_response(self, query_id: str, choice: str) -> dict:
        if choice not in ("A", "B", "no_preference"):
            raise ConfigError(f"choice must be A, B, or no_preference, got {choice!r}")
        if self._last_ack is not None and query_id == self._last_ack["query_id"]:
            if choice == self._last_ack["choice"]:
                return self._last_ack["ack"]
            raise StaleQueryError("query already answered with a different choice")
        expected = f"v{self.cursor + 1}"
        if self.cursor >= len(self.pairs) or query_id != expected:
            raise StaleQueryError(f"stale query id {query_id}")
        presentation = self.presentations[self.cursor]
        if choice == "no_preference":
            answered, preferred_won = False, None
        else:
            picked_first_shown = choice == "A"
            preferred_shown_first = presentation == "as_is"
            preferred_won = picked_first_shown == preferred_shown_first
            answered = True
        outcome = {
            "pair_index": self.cursor,
            "trial": self.pairs[self.cursor]["trial"],
            "answered": answered,
            "preferred_won": preferred_won,
        }
        self.outcomes.append(outcome)
        self.log.append(
            "validation_response",
            {
                "query_id": query_id,
                "choice": choice,
                "answered": answered,
                "preferred_won": preferred_won,
            },
        )
        self.cursor += 1
        self._issue_next()
        ack = {
            "accepted": True,
            "query_id": query_id,
            "next_state": self.status,
            "recognition_rate": self.recognition_rate(),
        }
        self._last_ack = {"query_id": query_id, "choice": choice, "ack": ack}
        return ack


# ---------------------------------------------------------------------------
# Store, replay, crash recovery
# ---------------------------------------------------------------------------


class SessionStore:
    def __init__(self, data_dir: str | Path):
        self.data_dir = Path(data_dir)
        self.data_dir.mkdir(parents=True, exist_ok=True)
        self.sessions: dict[str, Any] = {}
        self.lock = threading.Lock()
        for path in sorted(self.data_dir.glob("*.jsonl")):
            try:
                session = load_session_from_log(path)
                self.sessions[session.id] = session
            except Exception:  # unreadable logs are skipped, not fatal
                continue

    def create(self, cfg: SessionConfig) -> LoopSession:
        session_id = "s-" + uuid.uuid4().hex[:12]
        path = self.data_dir / f"{session_id}.jsonl"
        session = LoopSession(session_id, cfg, path)
        with self.lock:
            self.sessions[session_id] = session
        return session

    def create_validation(self, session_ids: list[str], seed: int) -> ValidationSession:
        if not 1 <= len(session_ids) <= 3:
            raise ConfigError("validation takes between 1 and 3 completed trials")
        preferred = []
        space = None
        space_name = "custom"
        for sid in session_ids:
            session = self.get(sid)
            if not isinstance(session, LoopSession):
                raise ConfigError(f"{sid} is not an elicitation session")
            if session.status not in ("optimization_done", "closed") or session.state.final_choice is None:
                raise IncompleteTrialError(f"session {sid} has not completed optimization")
            preferred.append((sid, session.state.final_choice))
            space = session.cfg.space
            space_name = session.cfg.space_name
        round_id = "v-" + uuid.uuid4().hex[:12]
        path = self.data_dir / f"{round_id}.jsonl"
        round_ = ValidationSession(round_id, space, space_name, preferred, seed, path)
        with self.lock:
            self.sessions[round_id] = round_
        return round_

    def get(self, session_id: str):
        session = self.sessions.get(session_id)
        if session is None:
            raise UnknownSessionError(f"unknown session {session_id}")
        return session


class UnknownSessionError(KeyError):
    pass


class IncompleteTrialError(ContractViolation):
    pass


def read_event_log(path: str | Path) -> list[dict]:
    events = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if line:
                events.append(json.loads(line))
    return events


def _replay_loop_session(events: list[dict], log_path: Path | None) -> LoopSession:
    created = events[0]
    cfg = SessionConfig.from_dict(created["config"])
    session = LoopSession(created["session_id"], cfg, None, record_created=False)
    session.log.events = [created]
    for event in events[1:]:
        if event["kind"] == "response":
            ack_qid = event["query_id"]
            if session._current_qid != ack_qid:
                raise ReplayMismatchError(
                    f"log expects query {ack_qid}, engine produced {session._current_qid}"
                )
            session.post_response(ack_qid, event["choice"])
        elif event["kind"] == "session_closed":
            session.close()
    session.log.path = log_path
    return session


def _replay_validation(events: list[dict], log_path: Path | None) -> ValidationSession:
    created = events[0]
    space = space_from_dict(created["space"])
    preferred = [
        (p["trial"], Configuration(tuple(p["point"]))) for p in created["preferred"]
    ]
    round_ = ValidationSession(
        created["session_id"],
        space,
        created["space"].get("name", "custom"),
        preferred,
        created["seed"],
        None,
        record_created=False,
    )
    round_.log.events = [created]
    for event in events[1:]:
        if event["kind"] == "validation_response":
            round_.post_response(event["query_id"], event["choice"])
    round_.log.path = log_path
    return round_


def load_session_from_log(path: str | Path):
    """Rebuild a session by replaying its responses (crash recovery)."""
    events = read_event_log(path)
    if not events:
        raise ReplayMismatchError(f"{path}: empty event log")
    kind = events[0]["kind"]
    if kind == "session_created":
        return _replay_loop_session(events, Path(path))
    if kind == "validation_created":
        return _replay_validation(events, Path(path))
    raise ReplayMismatchError(f"{path}: log does not start with a creation event")


def replay_session(events: list[dict]) -> dict:
    """Re-execute a logged loop session and compare recommendations.

    match is true iff every recomputed recommendation agrees with the logged
    one within 1e-9 (unit-cube coordinates and posterior mean); a truncated
    log is compared on its prefix.
    """
    if not events or events[0]["kind"] != "session_created":
        raise ReplayMismatchError("log does not start with session_created")
    logged_recs = [e for e in events if e["kind"] == "recommendation"]
    session = _replay_loop_session(events, None)
    recomputed = [e for e in session.log.events if e["kind"] == "recommendation"]
    mismatches = []
    for logged, fresh in zip(logged_recs, recomputed):
        point_gap = max(
            abs(a - b) for a, b in zip(logged["point"], fresh["point"])
        )
        mean_gap = abs(logged["mean"] - fresh["mean"])
        if point_gap > REPLAY_TOL or mean_gap > REPLAY_TOL:
            mismatches.append(
                {
                    "iteration": logged["iteration"],
                    "point_gap": point_gap,
                    "mean_gap": mean_gap,
                }
            )
    return {
        "match": not mismatches and len(recomputed) >= len(logged_recs),
        "compared": min(len(logged_recs), len(recomputed)),
        "recommendations": [
            {"iteration": e["iteration"], "point": e["point"], "mean": e["mean"]}
            for e in recomputed
        ],
        "mismatches": mismatches,
    }


# ---------------------------------------------------------------------------
# FastAPI app
# ---------------------------------------------------------------------------


def create_app(data_dir: str | Path):
    from fastapi import Body, FastAPI, HTTPException
    from fastapi.middleware.cors import CORSMiddleware
    from fastapi.responses import JSONResponse

    store = SessionStore(data_dir)
    app = FastAPI(title="preftune session service")
    app.state.store = store
    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["*"], allow_headers=["*"]
    )

    def _get(session_id: str):
        try:
            return store.get(session_id)
        except UnknownSessionError as exc:
            raise HTTPException(status_code=404, detail=str(exc)) from exc

    @app.post("/sessions")
    def create_session(payload: dict = Body(...)):
        try:
            cfg = parse_session_request(payload)
            session = store.create(cfg)
        except ConfigError as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from exc
        return {"session_id": session.id, "status": session.status}

    @app.get("/sessions/{session_id}")
    def get_session(session_id: str):
        return _get(session_id).record()

    @app.get("/sessions/{session_id}/query")
    def get_query(session_id: str):
        session = _get(session_id)
        query = session.get_query()
        if query is None:
            raise HTTPException(
                status_code=409,
                detail={
                    "message": "no pending query",
                    "status": session.status,
                    "stop_reason": getattr(
                        getattr(session, "state", None), "stop_reason", None
                    ),
                },
            )
        return query

    @app.post("/sessions/{session_id}/response")
    def post_response(session_id: str, payload: dict = Body(...)):
        session = _get(session_id)
        query_id = payload.get("query_id")
        choice = payload.get("choice")
        with session.lock:
            try:
                return session.post_response(query_id, choice)
            except StaleQueryError as exc:
                raise HTTPException(status_code=409, detail=str(exc)) from exc
            except StalledUserError as exc:
                raise HTTPException(status_code=409, detail=str(exc)) from exc
            except ConfigError as exc:
                raise HTTPException(status_code=422, detail=str(exc)) from exc

    @app.get("/sessions/{session_id}/estimate")
    def get_estimate(session_id: str):
        session = _get(session_id)
        if not isinstance(session, LoopSession):
            raise HTTPException(status_code=409, detail="validation rounds have no estimate")
        try:
            return session.estimate()
        except NoEstimateError as exc:
            raise HTTPException(status_code=409, detail=str(exc)) from exc

    @app.post("/sessions/{session_id}/close")
    def close_session(session_id: str):
        session = _get(session_id)
        with session.lock:
            session.close()
        return {"session_id": session_id, "status": session.status}

    @app.get("/sessions/{session_id}/events")
    def export_events(session_id: str):
        session = _get(session_id)
        return JSONResponse({"session_id": session_id, "events": session.log.events})

    @app.post("/validation")
    def start_validation(payload: dict = Body(...)):
        session_ids = payload.get("session_ids", [])
        seed = int(payload.get("seed", 0))
        try:
            round_ = store.create_validation(session_ids, seed)
        except IncompleteTrialError as exc:
            raise HTTPException(status_code=409, detail=str(exc)) from exc
        except (ConfigError, UnknownSessionError) as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from exc
        return {
            "session_id": round_.id,
            "status": round_.status,
            "pairs_total": len(round_.pairs),
        }

    @app.get("/validation/{round_id}")
    def get_validation(round_id: str):
        round_ = _get(round_id)
        if not isinstance(round_, ValidationSession):
            raise HTTPException(status_code=422, detail=f"{round_id} is not a validation round")
        return round_.record()

    return app
