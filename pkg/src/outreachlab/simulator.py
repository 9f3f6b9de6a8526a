"""Deterministic stochastic recipient behavior, standing in for live humans.

Each (seed, lead, message) triple keys its own RNG stream, so adding a lead
never perturbs another lead's draws and runs replay byte-identically.
"""
from __future__ import annotations

import hashlib
import heapq
import json
import random
from dataclasses import dataclass, field
from decimal import Decimal
from importlib import resources
from typing import Optional

from .domain import (
    CampaignSpec,
    DomainError,
    EngagementEvent,
    EventKind,
    Lead,
    MessageRecord,
    UsageRecord,
    assign_arm,
)
from .engine import PAUSED_FOR_REPLY, CampaignEngine
from .gateway import PriceTable, ledger_per_lead
from .metrics import KpiReport, kpi_rates


@dataclass(frozen=True)
class LatencyRange:
    min_seconds: float
    max_seconds: float

    def sample(self, rng: random.Random) -> float:
        return rng.uniform(self.min_seconds, self.max_seconds)


@dataclass(frozen=True)
class BehaviorProfile:
    p_open: float
    p_click_given_open: float
    p_reply_given_open: float
    p_unsub_given_open: float = 0.01
    open_latency: LatencyRange = LatencyRange(300, 86400)
    click_latency: LatencyRange = LatencyRange(10, 3600)
    reply_latency: LatencyRange = LatencyRange(600, 172800)

    def __post_init__(self):
        for p in (self.p_open, self.p_click_given_open,
                  self.p_reply_given_open, self.p_unsub_given_open):
            if not 0.0 <= p <= 1.0:
                raise DomainError("BAD_PROBABILITY", f"probability {p} outside [0, 1]")

    @classmethod
    def from_dict(cls, d: dict) -> "BehaviorProfile":
        lat = d.get("latency", {})

        def rng_of(name, default):
            raw = lat.get(name)
            if not raw:
                return default
            return LatencyRange(float(raw["min_seconds"]), float(raw["max_seconds"]))

        return cls(
            p_open=float(d["p_open"]),
            p_click_given_open=float(d["p_click_given_open"]),
            p_reply_given_open=float(d["p_reply_given_open"]),
            p_unsub_given_open=float(d.get("p_unsub_given_open", 0.01)),
            open_latency=rng_of("open", LatencyRange(300, 86400)),
            click_latency=rng_of("click", LatencyRange(10, 3600)),
            reply_latency=rng_of("reply", LatencyRange(600, 172800)),
        )


def load_bundled_profiles() -> dict[str, BehaviorProfile]:
    """Calibration profiles named after the email-metrics table rows."""
    raw = json.loads(resources.files("outreachlab.fixtures").joinpath("profiles.json").read_text())
    return {k: BehaviorProfile.from_dict(v) for k, v in raw.items()}


def load_profiles(path: str) -> dict[str, BehaviorProfile]:
    with open(path) as f:
        raw = json.load(f)
    return {k: BehaviorProfile.from_dict(v) for k, v in raw.items()}


def _stream(seed: int, lead_id: str, message_id: str) -> random.Random:
    digest = hashlib.sha256(f"{seed}:{lead_id}:{message_id}".encode()).digest()
    return random.Random(int.from_bytes(digest[:8], "big"))


def simulate_message(lead_id: str, message: MessageRecord, profile: BehaviorProfile,
                     seed: int) -> list[EngagementEvent]:
    """Events one recipient produces for one outbound message.

    Delivery is certain; click/reply/unsubscribe only happen after an open.
    """
    if message.direction.value != "outbound":
        raise DomainError("NOT_OUTBOUND", "only outbound messages are simulated")
    rng = _stream(seed, lead_id, message.id)
    t0 = message.timestamp
    events = [EngagementEvent(lead_id, EventKind.DELIVERED, t0, message.id)]
    if rng.random() < profile.p_open:
        t_open = t0 + profile.open_latency.sample(rng)
        events.append(EngagementEvent(lead_id, EventKind.OPEN, t_open, message.id))
        if rng.random() < profile.p_click_given_open:
            events.append(EngagementEvent(
                lead_id, EventKind.CLICK, t_open + profile.click_latency.sample(rng), message.id))
        if rng.random() < profile.p_reply_given_open:
            events.append(EngagementEvent(
                lead_id, EventKind.REPLY, t_open + profile.reply_latency.sample(rng), message.id))
        if rng.random() < profile.p_unsub_given_open:
            events.append(EngagementEvent(
                lead_id, EventKind.UNSUBSCRIBE, t_open + 60.0, message.id))
    return events


class LocalDrafter:
    """Deterministic offline drafting backend with synthetic token accounting."""

    def __init__(self):
        self.usage_log: list[UsageRecord] = []

    def complete_chat(self, backend_name: str, messages: list[dict], *,
                      purpose: str, lead_id: Optional[str], now: float):
        prompt_chars = sum(len(m["content"]) for m in messages)
        tag = hashlib.sha256(
            f"{backend_name}:{purpose}:{lead_id}:{prompt_chars}".encode()).hexdigest()[:8]
        text = f"[{backend_name}/{purpose}/{tag}] Hello {lead_id or 'there'}, following up as discussed."
        usage = UsageRecord(
            prompt_tokens=prompt_chars // 4,
            completion_tokens=len(text) // 4,
            backend_name=backend_name,
            timestamp=now,
            purpose=purpose,
            lead_id=lead_id,
        )
        self.usage_log.append(usage)
        return text, usage


@dataclass
class ExperimentResult:
    kpis: dict[str, KpiReport]
    cost_per_lead: dict[str, Optional[Decimal]]
    events: list[EngagementEvent] = field(default_factory=list)
    engine: Optional[CampaignEngine] = None


DEFAULT_INPUT_PRICE = "2.5"
DEFAULT_OUTPUT_PRICE = "10.0"


def run_experiment(spec: CampaignSpec, n_leads: int,
                   profiles: dict[str, BehaviorProfile], seed: int,
                   prices: Optional[PriceTable] = None) -> ExperimentResult:
    """Full pipeline: add leads, tick to completion, simulate and ingest
    engagement, then aggregate KPIs and ledger costs per arm."""
    for arm in spec.variant_arms:
        if arm.arm_id not in profiles:
            raise DomainError("MISSING_PROFILE", f"no behavior profile for arm {arm.arm_id!r}")
    if prices is None:
        prices = PriceTable()
        for arm in spec.variant_arms:
            prices.set(arm.backend_name, DEFAULT_INPUT_PRICE, DEFAULT_OUTPUT_PRICE)

    drafter = LocalDrafter()
    engine = CampaignEngine.create(spec, drafter, now=0.0)
    arm_of: dict[str, str] = {}

    heap: list[tuple[float, int, str, object]] = []
    seq = 0
    pending_ticks: set[float] = set()  # step delays cluster, so ticks coalesce

    def push(t: float, kind: str, payload=None):
        nonlocal seq
        if kind == "tick":
            if t in pending_ticks:
                return
            pending_ticks.add(t)
        heapq.heappush(heap, (t, seq, kind, payload))
        seq += 1

    for i in range(n_leads):
        lead_id = f"lead-{i:05d}"
        arm_id = assign_arm(lead_id, spec.variant_arms, seed)
        arm_of[lead_id] = arm_id
        action = engine.add_lead(Lead(id=lead_id, profile={"name": lead_id}, arm_id=arm_id), now=0.0)
        push(action.due, "tick")

    all_events: list[EngagementEvent] = []

    def emit(message: MessageRecord, lead_id: str):
        profile = profiles[arm_of[lead_id]]
        for ev in simulate_message(lead_id, message, profile, seed):
            push(ev.timestamp, "event", ev)

    while heap:
        t, _, kind, payload = heapq.heappop(heap)
        if kind == "tick":
            pending_ticks.discard(t)
            for msg in engine.tick(t):
                emit(msg, msg.id.split(":")[0])
                state = engine.leads[msg.id.split(":")[0]]
                if state.next_due is not None:
                    push(state.next_due, "tick")
        else:
            ev: EngagementEvent = payload  # type: ignore[assignment]
            engine.ingest_event(ev)
            all_events.append(ev)
            state = engine.leads[ev.lead_id]
            if ev.kind is EventKind.REPLY and state.cursor == PAUSED_FOR_REPLY:
                reply = engine.draft_reply(ev.lead_id, now=ev.timestamp)
                emit(reply, ev.lead_id)
                if state.next_due is not None:
                    push(state.next_due, "tick")

    kpis: dict[str, KpiReport] = {}
    cost: dict[str, Optional[Decimal]] = {}
    for arm in spec.variant_arms:
        arm_events = [e for e in all_events if arm_of[e.lead_id] == arm.arm_id]
        kpis[arm.arm_id] = kpi_rates(arm_events)
        arm_usage = [u for u in drafter.usage_log
                     if u.lead_id is not None and arm_of.get(u.lead_id) == arm.arm_id]
        _, mean = ledger_per_lead(arm_usage, prices)
        cost[arm.arm_id] = mean
    return ExperimentResult(kpis=kpis, cost_per_lead=cost, events=all_events, engine=engine)
