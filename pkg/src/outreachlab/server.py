"""REST surface over the campaign engine and curation store.

Mutations to one campaign are serialized through a per-campaign lock;
distinct campaigns progress independently. Request bodies carry an optional
logical `now` so the whole service stays simulatable; wall time is only a
fallback.
"""
from __future__ import annotations

import threading
import time
from pathlib import Path
from typing import Optional

from fastapi import FastAPI, HTTPException, Query, Response
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel

from .curation import AlreadyDecided, CurationStore, ReviewDecision
from .domain import CampaignSpec, DomainError, EngagementEvent, Lead
from .engine import CampaignEngine
from .gateway import BackendRegistry, HttpGateway, UsageRecord
from .simulator import LocalDrafter

NOT_FOUND_CODES = {"UNKNOWN_LEAD", "UNKNOWN_MESSAGE", "UNKNOWN_CANDIDATE",
                   "UNKNOWN_ARM", "UNKNOWN_BACKEND", "UNKNOWN_CAMPAIGN"}


class RegistryDrafter:
    """Adapts the HTTP gateway + backend registry to the engine's interface."""

    def __init__(self, registry: BackendRegistry, gateway: Optional[HttpGateway] = None):
        self.registry = registry
        self.gateway = gateway or HttpGateway()

    def complete_chat(self, backend_name: str, messages: list[dict], *,
                      purpose: str, lead_id: Optional[str], now: float) -> tuple[str, UsageRecord]:
        from .gateway import ChatRequest
        cfg = self.registry.get(backend_name)
        resp = self.gateway.complete(cfg, ChatRequest(tuple(messages)),
                                     purpose=purpose, lead_id=lead_id, now=now)
        return resp.text, resp.usage


class CampaignBody(BaseModel):
    spec: dict
    now: Optional[float] = None


class LeadBody(BaseModel):
    lead: dict
    now: Optional[float] = None


class EventBody(BaseModel):
    campaign_id: str
    event: dict
    reply_body: Optional[str] = None


class TickBody(BaseModel):
    now: float


class JobBody(BaseModel):
    context: dict
    teacher_backend: str
    n_candidates: int = 1
    now: Optional[float] = None


class DecisionBody(BaseModel):
    reviewer_id: str
    verdict: str
    quality: int
    relevance: int
    accuracy: int
    edited_text: Optional[str] = None
    decided_at: Optional[float] = None
    version: int = 1


class AppState:
    def __init__(self, drafter=None, state_dir: Optional[str] = None):
        self.drafter = drafter or LocalDrafter()
        self.state_dir = Path(state_dir) if state_dir else None
        if self.state_dir:
            self.state_dir.mkdir(parents=True, exist_ok=True)
        self.campaigns: dict[str, CampaignEngine] = {}
        self.locks: dict[str, threading.Lock] = {}
        self.store = CurationStore(drafter=self.drafter)
        self._registry_lock = threading.Lock()

    def engine(self, campaign_id: str) -> CampaignEngine:
        if campaign_id not in self.campaigns:
            raise DomainError("UNKNOWN_CAMPAIGN", campaign_id)
        return self.campaigns[campaign_id]

    def lock(self, campaign_id: str) -> threading.Lock:
        with self._registry_lock:
            return self.locks.setdefault(campaign_id, threading.Lock())


def _now(value: Optional[float]) -> float:
    return value if value is not None else time.time()


def create_app(state: Optional[AppState] = None, ui_dir: Optional[str] = None) -> FastAPI:
    state = state or AppState()
    app = FastAPI(title="outreachlab")
    app.state.lab = state

    def fail(exc: DomainError):
        status = 404 if exc.code in NOT_FOUND_CODES else 400
        raise HTTPException(status_code=status, detail={"code": exc.code, "message": str(exc)})

    # ---- campaigns ----

    @app.post("/v1/campaigns")
    def create_campaign(body: CampaignBody):
        try:
            spec = CampaignSpec.from_dict(body.spec)
            log_path = (str(state.state_dir / f"{spec.id}.jsonl")
                        if state.state_dir else None)
            engine = CampaignEngine.create(spec, state.drafter, now=_now(body.now),
                                           log_path=log_path)
        except (DomainError, KeyError, ValueError) as exc:
            if isinstance(exc, DomainError):
                fail(exc)
            raise HTTPException(status_code=400, detail={"code": "BAD_SPEC", "message": str(exc)})
        state.campaigns[spec.id] = engine
        return {"id": spec.id,
                "initial_drafts": [{"arm_id": d.arm_id, "status": d.status}
                                   for d in engine.initial_drafts]}

    @app.post("/v1/campaigns/{campaign_id}/leads")
    def add_lead(campaign_id: str, body: LeadBody):
        try:
            engine = state.engine(campaign_id)
            with state.lock(campaign_id):
                action = engine.add_lead(Lead.from_dict(body.lead), now=_now(body.now))
        except DomainError as exc:
            fail(exc)
        return {"lead_id": action.lead_id, "kind": action.kind, "due": action.due}

    @app.post("/v1/events")
    def ingest_event(body: EventBody):
        try:
            engine = state.engine(body.campaign_id)
            event = EngagementEvent.from_dict(body.event)
            with state.lock(body.campaign_id):
                engine.ingest_event(event)
                if body.reply_body and event.kind.value == "reply":
                    engine.ingest_reply_text(event.lead_id, body.reply_body, event.timestamp)
        except DomainError as exc:
            fail(exc)
        return {"ok": True}

    @app.post("/v1/campaigns/{campaign_id}/tick")
    def tick(campaign_id: str, body: TickBody):
        try:
            engine = state.engine(campaign_id)
            with state.lock(campaign_id):
                sent = engine.tick(body.now)
        except DomainError as exc:
            fail(exc)
        return {"sent": [m.to_dict() for m in sent]}

    @app.get("/v1/campaigns/{campaign_id}/state")
    def campaign_state(campaign_id: str):
        try:
            return state.engine(campaign_id).snapshot()
        except DomainError as exc:
            fail(exc)

    @app.get("/v1/campaigns/{campaign_id}/leads/{lead_id}")
    def lead_state(campaign_id: str, lead_id: str):
        try:
            engine = state.engine(campaign_id)
            lead_state = engine.leads.get(lead_id)
            if lead_state is None:
                raise DomainError("UNKNOWN_LEAD", lead_id)
        except DomainError as exc:
            fail(exc)
        return lead_state.to_dict()

    @app.post("/v1/campaigns/{campaign_id}/reply_draft")
    def reply_draft(campaign_id: str, body: LeadBody):
        try:
            engine = state.engine(campaign_id)
            with state.lock(campaign_id):
                msg = engine.draft_reply(body.lead["id"], now=_now(body.now))
        except DomainError as exc:
            fail(exc)
        return msg.to_dict()

    @app.post("/v1/campaigns/{campaign_id}/arms/{arm_id}/pause")
    def pause_arm(campaign_id: str, arm_id: str):
        try:
            with state.lock(campaign_id):
                state.engine(campaign_id).pause_arm(arm_id)
        except DomainError as exc:
            fail(exc)
        return {"paused": sorted(state.engine(campaign_id).paused_arms)}

    @app.post("/v1/campaigns/{campaign_id}/arms/{arm_id}/resume")
    def resume_arm(campaign_id: str, arm_id: str):
        try:
            with state.lock(campaign_id):
                state.engine(campaign_id).resume_arm(arm_id)
        except DomainError as exc:
            fail(exc)
        return {"paused": sorted(state.engine(campaign_id).paused_arms)}

    # ---- curation ----

    @app.post("/v1/jobs")
    def enqueue_job(body: JobBody):
        try:
            job = state.store.enqueue_job(body.context, body.teacher_backend,
                                          body.n_candidates, now=_now(body.now))
        except DomainError as exc:
            fail(exc)
        return job.to_dict()

    @app.get("/v1/review/queue")
    def review_queue(limit: int = Query(default=20, ge=1, le=500)):
        items = state.store.pending(limit)
        out = []
        for cand in items:
            job = state.store.jobs[cand.job_id]
            out.append({
                "candidate_id": cand.id,
                "job_id": cand.job_id,
                "teacher_backend": job.teacher_backend,
                "context": job.prompt_context,
                "text": cand.text,
            })
        return {"items": out}

    @app.post("/v1/review/{candidate_id}/decision")
    def submit_decision(candidate_id: str, body: DecisionBody):
        try:
            decision = ReviewDecision(
                reviewer_id=body.reviewer_id, verdict=body.verdict,
                quality=body.quality, relevance=body.relevance,
                accuracy=body.accuracy, decided_at=_now(body.decided_at),
                version=body.version, edited_text=body.edited_text)
            cand = state.store.submit_decision(candidate_id, decision)
        except AlreadyDecided as exc:
            raise HTTPException(status_code=409, detail={
                "code": "ALREADY_DECIDED",
                "decision": exc.candidate.decision.to_dict(),
            })
        except DomainError as exc:
            fail(exc)
        return cand.to_dict()

    @app.get("/v1/gold/export")
    def export_gold(teacher_backend: Optional[str] = None):
        jsonl, _manifest = state.store.export_gold(teacher_backend=teacher_backend)
        return Response(content=jsonl, media_type="application/jsonl")

    @app.get("/v1/gold/manifest")
    def gold_manifest(teacher_backend: Optional[str] = None):
        _jsonl, manifest = state.store.export_gold(teacher_backend=teacher_backend)
        return manifest

    @app.get("/v1/review/stats")
    def review_stats():
        return state.store.queue_stats()

    if ui_dir and Path(ui_dir).is_dir():
        app.mount("/ui", StaticFiles(directory=ui_dir, html=True), name="ui")

    return app
