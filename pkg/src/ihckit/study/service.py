"""Reader-study state machine and its HTTP JSON API.

The service enforces the two-phase protocol server-side: a rater must
record an initial (blind) annotation for an image before the AI
suggestion can be fetched or a final annotation submitted, and neither
phase accepts a second submission. All writes land in the append-only
event log; every read model is derived from it.

Error mapping: unknown rater/assignment -> 404; protocol violations
(out-of-order phase, duplicate submission, study already complete) ->
409; malformed payloads -> 422.
"""

from __future__ import annotations

import hashlib
import threading
import time
import uuid
from typing import Mapping, Optional

import numpy as np

from ..exceptions import (
    DuplicateSubmission,
    PhaseOrderViolation,
    SchemaError,
    StudyComplete,
    UnknownAssignment,
    UnknownLabel,
    UnknownRater,
)
from ..vocab import TaskId, VocabularyRegistry, default_registry
from .analysis import study_report
from .events import EventLog, StudyConfig, StudyEvent


class StudyService:
    """In-process protocol engine for one study."""

    def __init__(
        self,
        config: StudyConfig,
        log: Optional[EventLog] = None,
        seed: int = 0,
        registry: Optional[VocabularyRegistry] = None,
    ):
        self.config = config
        self.log = log if log is not None else EventLog()
        self.registry = registry or default_registry()
        self._lock = threading.Lock()
        self._sessions: dict[str, str] = {}  # token -> rater
        self._assignments: dict[str, tuple[str, str]] = {}  # id -> (rater, md5)
        # Stable per-rater presentation order: seeded shuffle.
        md5s = [img.md5 for img in config.images]
        self._orders: dict[str, list[str]] = {}
        for rater in config.raters:
            rng = np.random.default_rng(
                [seed, int(hashlib.md5(rater.encode()).hexdigest()[:8], 16)]
            )
            self._orders[rater] = [md5s[i] for i in rng.permutation(len(md5s))]
        # (rater, md5, task, phase) -> label, rebuilt from the log.
        self._recorded: dict[tuple[str, str, TaskId, str], int] = {}
        for event in self.log:
            self._recorded[(event.rater_id, event.md5, event.task, event.phase)] = event.label

    # -- helpers ---------------------------------------------------------

    def _assignment_id(self, rater: str, md5: str) -> str:
        digest = hashlib.md5(f"{self.config.study_id}:{rater}:{md5}".encode()).hexdigest()[:16]
        self._assignments[digest] = (rater, md5)
        return digest

    def _resolve(self, assignment_id: str) -> tuple[str, str]:
        try:
            return self._assignments[assignment_id]
        except KeyError:
            raise UnknownAssignment(f"no assignment {assignment_id!r}") from None

    def _phase_done(self, rater: str, md5: str, phase: str) -> bool:
        return all(
            (rater, md5, task, phase) in self._recorded for task in self.config.tasks
        )

    def _parse_labels(self, labels: Mapping) -> dict[TaskId, int]:
        if not isinstance(labels, Mapping):
            raise SchemaError("labels must be an object of task -> class name")
        out: dict[TaskId, int] = {}
        for task in self.config.tasks:
            if task.value not in labels:
                raise SchemaError(f"missing label for task {task.value!r}")
            out[task] = self.registry[task].index_of(str(labels[task.value]), strict=True)
        extra = set(labels) - {t.value for t in self.config.tasks}
        if extra:
            raise SchemaError(f"unexpected label keys {sorted(extra)}")
        return out

    def _names(self, labels: Mapping[TaskId, int]) -> dict[str, str]:
        return {t.value: self.registry[t].classes[i] for t, i in labels.items()}

    def _progress(self, rater: str) -> dict:
        completed = sum(
            1 for md5 in self._orders[rater] if self._phase_done(rater, md5, "final")
        )
        return {"completed": completed, "total": len(self.config.images)}

    # -- protocol operations ----------------------------------------------

    def create_session(self, rater_id: str) -> dict:
        if rater_id not in self.config.raters:
            raise UnknownRater(f"rater {rater_id!r} is not on the roster")
        token = uuid.uuid4().hex
        with self._lock:
            self._sessions[token] = rater_id
        return {
            "token": token,
            "study_id": self.config.study_id,
            "rater_id": rater_id,
            "tasks": [t.value for t in self.config.tasks],
            "progress": self._progress(rater_id),
        }

    def next_assignment(self, token: str) -> dict:
        rater = self._sessions.get(token)
        if rater is None:
            raise UnknownRater(f"no session {token!r}")
        for md5 in self._orders[rater]:
            if not self._phase_done(rater, md5, "final"):
                return self._assignment_payload(rater, md5)
        raise StudyComplete(f"rater {rater!r} has annotated every image")

    def _assignment_payload(self, rater: str, md5: str) -> dict:
        img = self.config.image(md5)
        return {
            "assignment_id": self._assignment_id(rater, md5),
            "md5": md5,
            "image_url": f"/images/{md5}",
            "marker_gene": img.marker_gene,
            "expected_localization": img.expected_localization,
            "tissue_type": img.tissue_type,
            "cell_type": img.cell_type,
            "tasks": [t.value for t in self.config.tasks],
            "progress": self._progress(rater),
        }

    def submit_phase1(self, assignment_id: str, labels: Mapping) -> dict:
        rater, md5 = self._resolve(assignment_id)
        parsed = self._parse_labels(labels)
        with self._lock:
            if any((rater, md5, t, "initial") in self._recorded for t in self.config.tasks):
                raise DuplicateSubmission(f"initial annotation for {md5} already recorded")
            self._record(rater, md5, parsed, "initial")
        return {"status": "recorded", "phase": "initial", "progress": self._progress(rater)}

    def get_suggestion(self, assignment_id: str) -> dict:
        rater, md5 = self._resolve(assignment_id)
        if not self._phase_done(rater, md5, "initial"):
            raise PhaseOrderViolation(
                "the AI suggestion is only available after the initial annotation"
            )
        return {"labels": self._names(self.config.ai_predictions[md5])}

    def submit_phase2(self, assignment_id: str, labels: Mapping) -> dict:
        rater, md5 = self._resolve(assignment_id)
        parsed = self._parse_labels(labels)
        with self._lock:
            if not self._phase_done(rater, md5, "initial"):
                raise PhaseOrderViolation("final annotation requires a recorded initial one")
            if any((rater, md5, t, "final") in self._recorded for t in self.config.tasks):
                raise DuplicateSubmission(f"final annotation for {md5} already recorded")
            self._record(rater, md5, parsed, "final")
        return {"status": "recorded", "phase": "final", "progress": self._progress(rater)}

    def _record(self, rater: str, md5: str, labels: Mapping[TaskId, int], phase: str) -> None:
        now = time.time()
        for task in self.config.tasks:
            self.log.append(
                StudyEvent(
                    rater_id=rater,
                    md5=md5,
                    task=task,
                    phase=phase,
                    label=labels[task],
                    timestamp=now,
                )
            )
            self._recorded[(rater, md5, task, phase)] = labels[task]

    def assignment_state(self, assignment_id: str) -> dict:
        """Resume view: everything the client may see at its current phase."""
        rater, md5 = self._resolve(assignment_id)
        payload = self._assignment_payload(rater, md5)
        phase1 = {
            t.value: self.registry[t].classes[self._recorded[(rater, md5, t, "initial")]]
            for t in self.config.tasks
            if (rater, md5, t, "initial") in self._recorded
        }
        phase2 = {
            t.value: self.registry[t].classes[self._recorded[(rater, md5, t, "final")]]
            for t in self.config.tasks
            if (rater, md5, t, "final") in self._recorded
        }
        payload["phase1"] = phase1 or None
        payload["phase2"] = phase2 or None
        if self._phase_done(rater, md5, "initial"):
            payload["suggestion"] = self._names(self.config.ai_predictions[md5])
        return payload

    def report(self) -> dict:
        return study_report(self.config, self.log.events())


def create_app(service: StudyService):
    """FastAPI wrapper around a :class:`StudyService`."""
    from fastapi import FastAPI, Request
    from fastapi.responses import JSONResponse, Response

    app = FastAPI(title="reader-study service", version="1")

    def _error(status: int, exc: Exception) -> JSONResponse:
        return JSONResponse(
            status_code=status,
            content={"error": type(exc).__name__, "detail": str(exc)},
        )

    @app.exception_handler(UnknownRater)
    @app.exception_handler(UnknownAssignment)
    async def _not_found(request: Request, exc: Exception):
        return _error(404, exc)

    @app.exception_handler(StudyComplete)
    @app.exception_handler(PhaseOrderViolation)
    @app.exception_handler(DuplicateSubmission)
    async def _conflict(request: Request, exc: Exception):
        return _error(409, exc)

    @app.exception_handler(SchemaError)
    @app.exception_handler(UnknownLabel)
    async def _unprocessable(request: Request, exc: Exception):
        return _error(422, exc)

    @app.post("/sessions")
    async def create_session(payload: dict):
        if "rater_id" not in payload:
            raise SchemaError("payload must carry rater_id")
        return service.create_session(str(payload["rater_id"]))

    @app.get("/sessions/{token}/next")
    async def next_assignment(token: str):
        return service.next_assignment(token)

    @app.post("/assignments/{assignment_id}/phase1")
    async def submit_phase1(assignment_id: str, payload: dict):
        return service.submit_phase1(assignment_id, payload.get("labels") or {})

    @app.get("/assignments/{assignment_id}/suggestion")
    async def get_suggestion(assignment_id: str):
        return service.get_suggestion(assignment_id)

    @app.post("/assignments/{assignment_id}/phase2")
    async def submit_phase2(assignment_id: str, payload: dict):
        return service.submit_phase2(assignment_id, payload.get("labels") or {})

    @app.get("/assignments/{assignment_id}")
    async def assignment_state(assignment_id: str):
        return service.assignment_state(assignment_id)

    @app.get("/studies/{study_id}/report")
    async def report(study_id: str):
        if study_id != service.config.study_id:
            raise UnknownAssignment(f"no study {study_id!r}")
        return service.report()

    @app.get("/images/{md5}")
    async def image(md5: str):
        for img in service.config.images:
            if img.md5 == md5 and img.image_path:
                with open(img.image_path, "rb") as fh:
                    return Response(content=fh.read(), media_type="image/png")
        return _error(404, UnknownAssignment(f"no image {md5!r}"))

    return app
