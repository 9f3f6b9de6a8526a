"""Per-lead sequence execution: scheduling, drafting, replies, event intake.

Time is injected everywhere (logical clock in seconds); the engine never
reads wall time, so whole campaigns are simulatable and replayable. Every
mutation is appended to a JSONL event log sufficient to rebuild the state
without re-invoking any model backend.
"""
from __future__ import annotations

import bisect
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Protocol

from .domain import (
    AgentMemory,
    CampaignSpec,
    Channel,
    Direction,
    DomainError,
    EngagementEvent,
    EventKind,
    Lead,
    MessageRecord,
    UsageRecord,
    validate_campaign_spec,
)

DONE = "DONE"
PAUSED_FOR_REPLY = "PAUSED_FOR_REPLY"
FAILED = "FAILED"

RETRY_BASE_SECONDS = 30.0
RETRY_FACTOR = 2.0
RETRY_MAX_ATTEMPTS = 5


class Drafter(Protocol):
    def complete_chat(self, backend_name: str, messages: list[dict], *,
                      purpose: str, lead_id: Optional[str], now: float) -> tuple[str, UsageRecord]:
        ...


class EngineError(DomainError):
    pass


@dataclass
class LeadState:
    lead: Lead
    memory: AgentMemory
    cursor: int | str = 0  # step index, DONE, PAUSED_FOR_REPLY, or FAILED
    next_due: Optional[float] = None
    reply_due: Optional[float] = None
    retry_count: int = 0
    outbound_counter: int = 0
    inbound_counter: int = 0
    resume_step: Optional[int] = None  # next unsent step while paused for reply

    def to_dict(self) -> dict:
        return {
            "lead": self.lead.to_dict(),
            "memory": self.memory.to_dict(),
            "cursor": self.cursor,
            "next_due": self.next_due,
            "reply_due": self.reply_due,
            "retry_count": self.retry_count,
            "outbound_counter": self.outbound_counter,
            "inbound_counter": self.inbound_counter,
            "resume_step": self.resume_step,
        }


@dataclass(frozen=True)
class ScheduledAction:
    lead_id: str
    kind: str  # "send_step:<index>" or "send_reply"
    due: float


@dataclass
class InitialDraft:
    arm_id: str
    body: Optional[str]
    status: str  # "stored" or "pending"


class CampaignEngine:
    """Single logical writer for one campaign's state."""

    def __init__(self, spec: CampaignSpec, drafter: Optional[Drafter] = None,
                 researcher=None, log_path: Optional[str] = None):
        violations = validate_campaign_spec(spec)
        if violations:
            raise EngineError(violations[0].code, "; ".join(v.detail for v in violations))
        self.spec = spec
        self.drafter = drafter
        self.researcher = researcher  # callable(lead, goals, now) -> ResearchDossier | None
        self.leads: dict[str, LeadState] = {}
        self._lead_order: list[str] = []  # sorted lead ids, kept via insort
        self.events: list[EngagementEvent] = []
        self._event_keys: set = set()
        self.initial_drafts: list[InitialDraft] = []
        self.paused_arms: set[str] = set()
        self._log_path = Path(log_path) if log_path else None
        self._replaying = False

    # ---- event log ----

    def _log(self, record: dict) -> None:
        if self._log_path and not self._replaying:
            with open(self._log_path, "a") as f:
                f.write(json.dumps(record, sort_keys=True) + "\n")

    # ---- creation ----

    @classmethod
    def create(cls, spec: CampaignSpec, drafter: Optional[Drafter], now: float,
               researcher=None, log_path: Optional[str] = None) -> "CampaignEngine":
        engine = cls(spec, drafter, researcher, log_path)
        engine._log({"op": "create", "spec": spec.to_dict(), "now": now})
        for arm in spec.variant_arms:
            draft = InitialDraft(arm_id=arm.arm_id, body=None, status="pending")
            if drafter is not None:
                try:
                    text, _usage = drafter.complete_chat(
                        arm.backend_name,
                        [{"role": "system", "content": spec.outreach_instructions},
                         {"role": "user",
                          "content": f"Draft the opening {spec.steps[0].channel.value} message for "
                                     f"campaign {spec.name!r}. Value proposition: {spec.value_proposition}"}],
                        purpose="draft", lead_id=None, now=now)
                    draft = InitialDraft(arm_id=arm.arm_id, body=text, status="stored")
                except DomainError:
                    pass  # campaign still created, draft stays pending
            engine.initial_drafts.append(draft)
            engine._log({"op": "initial_draft", "arm_id": draft.arm_id,
                         "body": draft.body, "status": draft.status})
        return engine

    # ---- leads ----

    def add_lead(self, lead: Lead, now: float) -> ScheduledAction:
        if lead.id in self.leads:
            raise EngineError("DUPLICATE_LEAD", f"lead {lead.id!r} already in campaign")
        if lead.arm_id not in {a.arm_id for a in self.spec.variant_arms}:
            raise EngineError("UNKNOWN_ARM", f"arm {lead.arm_id!r} not in campaign")
        memory = AgentMemory(lead_id=lead.id)
        if self.researcher is not None:
            memory.dossier = self.researcher(lead, list(self.spec.research_goals), now)
        state = LeadState(lead=lead, memory=memory, cursor=0,
                          next_due=now + self.spec.steps[0].delay_seconds)
        self.leads[lead.id] = state
        bisect.insort(self._lead_order, lead.id)
        self._log({"op": "add_lead", "lead": lead.to_dict(), "now": now,
                   "dossier": memory.dossier.to_dict() if memory.dossier else None})
        return ScheduledAction(lead_id=lead.id, kind="send_step:0", due=state.next_due)

    # ---- prompt assembly ----

    def _history_messages(self, state: LeadState) -> list[dict]:
        out = []
        for msg in state.memory.all_messages():
            role = "assistant" if msg.direction is Direction.OUTBOUND else "user"
            out.append({"role": role, "content": msg.body})
        return out

    def _step_prompt(self, state: LeadState, step_index: int) -> list[dict]:
        step = self.spec.steps[step_index]
        system = f"{self.spec.outreach_instructions}\n\nStep instructions: {step.instructions}"
        messages = [{"role": "system", "content": system}]
        if state.memory.dossier:
            messages.append({"role": "user",
                             "content": f"Research dossier:\n{state.memory.dossier.summary}"})
        messages.extend(self._history_messages(state))
        messages.append({"role": "user",
                         "content": f"Write the {step.channel.value} message for step {step_index} "
                                    f"to {state.lead.profile.get('name', state.lead.id)}."})
        return messages

    def _reply_prompt(self, state: LeadState) -> list[dict]:
        system = f"{self.spec.outreach_instructions}\n\nCraft the most suitable reply to the lead's latest response."
        messages = [{"role": "system", "content": system}]
        if state.memory.dossier:
            messages.append({"role": "user",
                             "content": f"Research dossier:\n{state.memory.dossier.summary}"})
        messages.extend(self._history_messages(state))
        messages.append({"role": "user", "content": "Write the reply."})
        return messages

    # ---- sending ----

    def _backend_for(self, state: LeadState) -> str:
        for arm in self.spec.variant_arms:
            if arm.arm_id == state.lead.arm_id:
                return arm.backend_name
        raise EngineError("UNKNOWN_ARM", state.lead.arm_id)

    def _send_step(self, state: LeadState, now: float) -> Optional[MessageRecord]:
        step_index = state.cursor
        assert isinstance(step_index, int)
        step = self.spec.steps[step_index]
        backend = self._backend_for(state)
        try:
            text, usage = self.drafter.complete_chat(
                backend, self._step_prompt(state, step_index),
                purpose="draft", lead_id=state.lead.id, now=now)
        except DomainError:
            state.retry_count += 1
            if state.retry_count >= RETRY_MAX_ATTEMPTS:
                state.cursor = FAILED
                state.next_due = None
                self._log({"op": "lead_failed", "lead_id": state.lead.id, "now": now})
            else:
                state.next_due = now + RETRY_BASE_SECONDS * RETRY_FACTOR ** (state.retry_count - 1)
                self._log({"op": "retry_scheduled", "lead_id": state.lead.id,
                           "next_due": state.next_due})
            return None
        state.retry_count = 0
        msg = MessageRecord(
            direction=Direction.OUTBOUND,
            channel=step.channel,
            body=text,
            timestamp=now,
            id=f"{state.lead.id}:out{state.outbound_counter}",
            step_index=step_index,
            subject=f"{self.spec.name} — step {step_index}" if step.channel is Channel.EMAIL else None,
            model_backend=backend,
            usage=usage,
        )
        state.outbound_counter += 1
        state.memory.append_outbound(msg)
        self._advance_cursor(state, step_index, now)
        self._log({"op": "send", "lead_id": state.lead.id, "message": msg.to_dict(),
                   "cursor": state.cursor, "next_due": state.next_due})
        return msg

    def _advance_cursor(self, state: LeadState, sent_index: int, now: float) -> None:
        nxt = sent_index + 1
        if nxt >= len(self.spec.steps):
            state.cursor = DONE
            state.next_due = None
        else:
            state.cursor = nxt
            state.next_due = now + self.spec.steps[nxt].delay_seconds

    def tick(self, now: float) -> list[MessageRecord]:
        """Send every step that is due at `now`. Never sends before due time."""
        sent: list[MessageRecord] = []
        for lead_id in self._lead_order:
            state = self.leads[lead_id]
            if state.lead.arm_id in self.paused_arms:
                continue
            while isinstance(state.cursor, int) and state.next_due is not None and state.next_due <= now:
                msg = self._send_step(state, now)
                if msg is None:
                    break
                sent.append(msg)
        return sent

    # ---- events ----

    def ingest_event(self, event: EngagementEvent) -> None:
        state = self.leads.get(event.lead_id)
        if state is None:
            raise EngineError("UNKNOWN_LEAD", event.lead_id)
        known = {m.id for m in state.memory.history}
        if event.message_ref not in known:
            raise EngineError("UNKNOWN_MESSAGE", event.message_ref)
        if event.kind is not EventKind.DELIVERED:
            delivered = {e.message_ref for e in self.events
                         if e.kind is EventKind.DELIVERED and e.lead_id == event.lead_id}
            if event.message_ref not in delivered:
                raise EngineError("NOT_DELIVERED", event.message_ref)
        if event.kind in (EventKind.OPEN, EventKind.CLICK, EventKind.UNSUBSCRIBE, EventKind.DELIVERED):
            key = event.dedup_key()
            if key in self._event_keys:
                return  # idempotent
            self._event_keys.add(key)
        self.events.append(event)
        self._log({"op": "event", "event": event.to_dict()})

        if event.kind is EventKind.REPLY:
            inbound = MessageRecord(
                direction=Direction.INBOUND,
                channel=Channel.EMAIL,
                body=f"Reply from {event.lead_id} to {event.message_ref}",
                timestamp=event.timestamp,
                id=f"{event.lead_id}:in{state.inbound_counter}",
            )
            state.inbound_counter += 1
            state.memory.append_inbound(inbound)
            self._log({"op": "inbound", "lead_id": event.lead_id, "message": inbound.to_dict()})
            if state.cursor not in (DONE, FAILED):
                if isinstance(state.cursor, int):
                    state.resume_step = state.cursor
                state.cursor = PAUSED_FOR_REPLY
                state.next_due = None
                state.reply_due = event.timestamp
                self._log({"op": "paused", "lead_id": event.lead_id, "reply_due": event.timestamp})
        elif event.kind is EventKind.UNSUBSCRIBE:
            state.cursor = DONE
            state.next_due = None
            state.reply_due = None
            state.resume_step = None
            self._log({"op": "unsubscribed", "lead_id": event.lead_id})

    def ingest_reply_text(self, lead_id: str, body: str, now: float) -> None:
        """Replace the placeholder body of the most recent inbound message."""
        state = self.leads[lead_id]
        if not state.memory.inbound:
            raise EngineError("NO_INBOUND", lead_id)
        last = state.memory.inbound[-1]
        state.memory.inbound[-1] = MessageRecord(
            direction=last.direction, channel=last.channel, body=body,
            timestamp=last.timestamp, id=last.id)
        self._log({"op": "inbound_body", "lead_id": lead_id, "body": body})

    # ---- replies ----

    def draft_reply(self, lead_id: str, now: float) -> MessageRecord:
        state = self.leads.get(lead_id)
        if state is None:
            raise EngineError("UNKNOWN_LEAD", lead_id)
        if state.cursor != PAUSED_FOR_REPLY:
            raise EngineError("WRONG_STATE", f"cursor is {state.cursor}, expected {PAUSED_FOR_REPLY}")
        backend = self._backend_for(state)
        text, usage = self.drafter.complete_chat(
            backend, self._reply_prompt(state), purpose="reply", lead_id=lead_id, now=now)
        msg = MessageRecord(
            direction=Direction.OUTBOUND,
            channel=Channel.EMAIL,
            body=text,
            timestamp=now,
            id=f"{lead_id}:out{state.outbound_counter}",
            step_index=None,
            subject=None,
            model_backend=backend,
            usage=usage,
        )
        state.outbound_counter += 1
        state.memory.append_outbound(msg)
        state.reply_due = None
        resume = state.resume_step
        state.resume_step = None
        if resume is None or resume >= len(self.spec.steps):
            state.cursor = DONE
            state.next_due = None
        else:
            state.cursor = resume
            state.next_due = now + self.spec.steps[resume].delay_seconds
        self._log({"op": "reply_sent", "lead_id": lead_id, "message": msg.to_dict(),
                   "cursor": state.cursor, "next_due": state.next_due})
        return msg

    # ---- operator controls ----

    def pause_arm(self, arm_id: str) -> None:
        if arm_id not in {a.arm_id for a in self.spec.variant_arms}:
            raise EngineError("UNKNOWN_ARM", arm_id)
        self.paused_arms.add(arm_id)
        self._log({"op": "pause_arm", "arm_id": arm_id})

    def resume_arm(self, arm_id: str) -> None:
        self.paused_arms.discard(arm_id)
        self._log({"op": "resume_arm", "arm_id": arm_id})

    # ---- snapshots & replay ----

    def snapshot(self) -> dict:
        return {
            "spec": self.spec.to_dict(),
            "leads": {k: v.to_dict() for k, v in sorted(self.leads.items())},
            "events": [e.to_dict() for e in self.events],
            "initial_drafts": [{"arm_id": d.arm_id, "body": d.body, "status": d.status}
                               for d in self.initial_drafts],
            "paused_arms": sorted(self.paused_arms),
        }

    @classmethod
    def replay(cls, log_path: str) -> "CampaignEngine":
        """Rebuild state from the append-only log without any backend calls."""
        engine: Optional[CampaignEngine] = None
        with open(log_path) as f:
            for line in f:
                rec = json.loads(line)
                op = rec["op"]
                if op == "create":
                    engine = cls(CampaignSpec.from_dict(rec["spec"]))
                    engine._replaying = True
                    continue
                assert engine is not None, "log must start with a create record"
                if op == "initial_draft":
                    engine.initial_drafts.append(
                        InitialDraft(rec["arm_id"], rec["body"], rec["status"]))
                elif op == "add_lead":
                    lead = Lead.from_dict(rec["lead"])
                    memory = AgentMemory(lead_id=lead.id)
                    if rec.get("dossier"):
                        from .domain import ResearchDossier
                        memory.dossier = ResearchDossier.from_dict(rec["dossier"])
                    engine.leads[lead.id] = LeadState(
                        lead=lead, memory=memory, cursor=0,
                        next_due=rec["now"] + engine.spec.steps[0].delay_seconds)
                    bisect.insort(engine._lead_order, lead.id)
                elif op == "send":
                    state = engine.leads[rec["lead_id"]]
                    msg = MessageRecord.from_dict(rec["message"])
                    state.memory.append_outbound(msg)
                    state.outbound_counter += 1
                    state.retry_count = 0
                    state.cursor = rec["cursor"]
                    state.next_due = rec["next_due"]
                elif op == "retry_scheduled":
                    state = engine.leads[rec["lead_id"]]
                    state.retry_count += 1
                    state.next_due = rec["next_due"]
                elif op == "lead_failed":
                    state = engine.leads[rec["lead_id"]]
                    state.cursor = FAILED
                    state.next_due = None
                elif op == "event":
                    event = EngagementEvent.from_dict(rec["event"])
                    if event.kind in (EventKind.OPEN, EventKind.CLICK,
                                      EventKind.UNSUBSCRIBE, EventKind.DELIVERED):
                        engine._event_keys.add(event.dedup_key())
                    engine.events.append(event)
                    if event.kind is EventKind.UNSUBSCRIBE:
                        state = engine.leads[event.lead_id]
                        state.cursor = DONE
                        state.next_due = None
                        state.reply_due = None
                        state.resume_step = None
                elif op == "inbound":
                    state = engine.leads[rec["lead_id"]]
                    state.memory.append_inbound(MessageRecord.from_dict(rec["message"]))
                    state.inbound_counter += 1
                elif op == "inbound_body":
                    state = engine.leads[rec["lead_id"]]
                    last = state.memory.inbound[-1]
                    state.memory.inbound[-1] = MessageRecord(
                        direction=last.direction, channel=last.channel, body=rec["body"],
                        timestamp=last.timestamp, id=last.id)
                elif op == "paused":
                    state = engine.leads[rec["lead_id"]]
                    if isinstance(state.cursor, int):
                        state.resume_step = state.cursor
                    state.cursor = PAUSED_FOR_REPLY
                    state.next_due = None
                    state.reply_due = rec["reply_due"]
                elif op == "reply_sent":
                    state = engine.leads[rec["lead_id"]]
                    msg = MessageRecord.from_dict(rec["message"])
                    state.memory.append_outbound(msg)
                    state.outbound_counter += 1
                    state.reply_due = None
                    state.resume_step = None
                    state.cursor = rec["cursor"]
                    state.next_due = rec["next_due"]
                elif op == "unsubscribed":
                    pass  # handled with the event record
                elif op == "pause_arm":
                    engine.paused_arms.add(rec["arm_id"])
                elif op == "resume_arm":
                    engine.paused_arms.discard(rec["arm_id"])
        if engine is None:
            raise EngineError("EMPTY_LOG", log_path)
        engine._replaying = False
        return engine
