"""Shared vocabulary types for campaigns, leads, messages, and engagement events.

All types are plain immutable dataclasses with JSON round-trip support.
Validation returns violation lists rather than raising, so callers can
report every problem at once.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field, asdict
from enum import Enum
from typing import Optional

WEIGHT_SUM_TOLERANCE = 1e-9


class Channel(str, Enum):
    EMAIL = "email"
    LINKEDIN = "linkedin"


class Direction(str, Enum):
    OUTBOUND = "outbound"
    INBOUND = "inbound"


class EventKind(str, Enum):
    DELIVERED = "delivered"
    OPEN = "open"
    CLICK = "click"
    REPLY = "reply"
    UNSUBSCRIBE = "unsubscribe"


class DomainError(Exception):
    """Error with a stable machine-readable code."""

    def __init__(self, code: str, message: str = ""):
        super().__init__(message or code)
        self.code = code


@dataclass(frozen=True)
class SequenceStep:
    index: int
    channel: Channel
    delay_seconds: int
    instructions: str

    def to_dict(self) -> dict:
        return {
            "index": self.index,
            "channel": self.channel.value,
            "delay_seconds": self.delay_seconds,
            "instructions": self.instructions,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SequenceStep":
        return cls(
            index=int(d["index"]),
            channel=Channel(d["channel"]),
            delay_seconds=int(d["delay_seconds"]),
            instructions=d["instructions"],
        )


@dataclass(frozen=True)
class VariantArm:
    arm_id: str
    backend_name: str
    weight: float

    def to_dict(self) -> dict:
        return {"arm_id": self.arm_id, "backend_name": self.backend_name, "weight": self.weight}

    @classmethod
    def from_dict(cls, d: dict) -> "VariantArm":
        return cls(arm_id=d["arm_id"], backend_name=d["backend_name"], weight=float(d["weight"]))


@dataclass(frozen=True)
class CampaignSpec:
    id: str
    name: str
    value_proposition: str
    pain_points: tuple[str, ...]
    research_goals: tuple[str, ...]
    outreach_instructions: str
    steps: tuple[SequenceStep, ...]
    variant_arms: tuple[VariantArm, ...]

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "name": self.name,
            "value_proposition": self.value_proposition,
            "pain_points": list(self.pain_points),
            "research_goals": list(self.research_goals),
            "outreach_instructions": self.outreach_instructions,
            "steps": [s.to_dict() for s in self.steps],
            "variant_arms": [a.to_dict() for a in self.variant_arms],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CampaignSpec":
        return cls(
            id=d["id"],
            name=d["name"],
            value_proposition=d["value_proposition"],
            pain_points=tuple(d.get("pain_points", [])),
            research_goals=tuple(d.get("research_goals", [])),
            outreach_instructions=d["outreach_instructions"],
            steps=tuple(SequenceStep.from_dict(s) for s in d["steps"]),
            variant_arms=tuple(VariantArm.from_dict(a) for a in d["variant_arms"]),
        )


@dataclass(frozen=True)
class Lead:
    id: str
    profile: dict[str, str]
    arm_id: str

    def to_dict(self) -> dict:
        return {"id": self.id, "profile": dict(self.profile), "arm_id": self.arm_id}

    @classmethod
    def from_dict(cls, d: dict) -> "Lead":
        return cls(id=d["id"], profile=dict(d["profile"]), arm_id=d["arm_id"])


@dataclass(frozen=True)
class UsageRecord:
    prompt_tokens: int
    completion_tokens: int
    backend_name: str
    timestamp: float
    purpose: str = "draft"  # draft | reply | research
    lead_id: Optional[str] = None

    def __post_init__(self):
        if self.prompt_tokens < 0 or self.completion_tokens < 0:
            raise DomainError("NEGATIVE_TOKENS", "token counts must be >= 0")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "UsageRecord":
        return cls(
            prompt_tokens=int(d["prompt_tokens"]),
            completion_tokens=int(d["completion_tokens"]),
            backend_name=d["backend_name"],
            timestamp=float(d["timestamp"]),
            purpose=d.get("purpose", "draft"),
            lead_id=d.get("lead_id"),
        )


@dataclass(frozen=True)
class MessageRecord:
    direction: Direction
    channel: Channel
    body: str
    timestamp: float
    id: str = ""
    step_index: Optional[int] = None
    subject: Optional[str] = None
    model_backend: Optional[str] = None
    usage: Optional[UsageRecord] = None

    def __post_init__(self):
        object.__setattr__(self, "direction", Direction(self.direction))
        object.__setattr__(self, "channel", Channel(self.channel))
        if self.direction is Direction.OUTBOUND and self.model_backend and self.usage is None:
            raise DomainError("MISSING_USAGE", "outbound record with a backend must carry usage")

    def to_dict(self) -> dict:
        return {
            "direction": self.direction.value,
            "channel": self.channel.value,
            "body": self.body,
            "timestamp": self.timestamp,
            "id": self.id,
            "step_index": self.step_index,
            "subject": self.subject,
            "model_backend": self.model_backend,
            "usage": self.usage.to_dict() if self.usage else None,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MessageRecord":
        return cls(
            direction=Direction(d["direction"]),
            channel=Channel(d["channel"]),
            body=d["body"],
            timestamp=float(d["timestamp"]),
            id=d.get("id", ""),
            step_index=d.get("step_index"),
            subject=d.get("subject"),
            model_backend=d.get("model_backend"),
            usage=UsageRecord.from_dict(d["usage"]) if d.get("usage") else None,
        )


@dataclass(frozen=True)
class EngagementEvent:
    lead_id: str
    kind: EventKind
    timestamp: float
    message_ref: str

    def __post_init__(self):
        object.__setattr__(self, "kind", EventKind(self.kind))

    def dedup_key(self) -> tuple[str, str, str]:
        return (self.lead_id, self.kind.value, self.message_ref)

    def to_dict(self) -> dict:
        return {
            "lead_id": self.lead_id,
            "kind": self.kind.value,
            "timestamp": self.timestamp,
            "message_ref": self.message_ref,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EngagementEvent":
        return cls(
            lead_id=d["lead_id"],
            kind=EventKind(d["kind"]),
            timestamp=float(d["timestamp"]),
            message_ref=d["message_ref"],
        )


@dataclass(frozen=True)
class SourceDocument:
    url: str
    fetched_at: float
    text: str

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "SourceDocument":
        return cls(url=d["url"], fetched_at=float(d["fetched_at"]), text=d["text"])


@dataclass(frozen=True)
class ResearchDossier:
    lead_id: str
    summary: str
    sources: tuple[SourceDocument, ...]
    model_backend: str
    usage: Optional[UsageRecord] = None

    def to_dict(self) -> dict:
        return {
            "lead_id": self.lead_id,
            "summary": self.summary,
            "sources": [s.to_dict() for s in self.sources],
            "model_backend": self.model_backend,
            "usage": self.usage.to_dict() if self.usage else None,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ResearchDossier":
        return cls(
            lead_id=d["lead_id"],
            summary=d["summary"],
            sources=tuple(SourceDocument.from_dict(s) for s in d["sources"]),
            model_backend=d["model_backend"],
            usage=UsageRecord.from_dict(d["usage"]) if d.get("usage") else None,
        )


@dataclass
class AgentMemory:
    """Per-lead conversational state. history/inbound are append-only."""

    lead_id: str
    dossier: Optional[ResearchDossier] = None
    history: list[MessageRecord] = field(default_factory=list)
    inbound: list[MessageRecord] = field(default_factory=list)

    def append_outbound(self, rec: MessageRecord) -> None:
        if self.history and rec.timestamp < self.history[-1].timestamp:
            raise DomainError("TIMESTAMP_ORDER", "history must stay timestamp-ordered")
        self.history.append(rec)

    def append_inbound(self, rec: MessageRecord) -> None:
        if self.inbound and rec.timestamp < self.inbound[-1].timestamp:
            raise DomainError("TIMESTAMP_ORDER", "inbound must stay timestamp-ordered")
        self.inbound.append(rec)

    def all_messages(self) -> list[MessageRecord]:
        """Every message sent or received, oldest first."""
        return sorted(self.history + self.inbound, key=lambda m: (m.timestamp, m.id))

    def to_dict(self) -> dict:
        return {
            "lead_id": self.lead_id,
            "dossier": self.dossier.to_dict() if self.dossier else None,
            "history": [m.to_dict() for m in self.history],
            "inbound": [m.to_dict() for m in self.inbound],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AgentMemory":
        return cls(
            lead_id=d["lead_id"],
            dossier=ResearchDossier.from_dict(d["dossier"]) if d.get("dossier") else None,
            history=[MessageRecord.from_dict(m) for m in d["history"]],
            inbound=[MessageRecord.from_dict(m) for m in d["inbound"]],
        )


@dataclass(frozen=True)
class Violation:
    code: str
    detail: str


def validate_campaign_spec(spec: CampaignSpec) -> list[Violation]:
    """Return every violated invariant; an empty list means the spec is valid."""
    out: list[Violation] = []
    if not spec.steps:
        out.append(Violation("EMPTY_SEQUENCE", "campaign must have at least one step"))
    else:
        for i, step in enumerate(spec.steps):
            if step.index != i:
                out.append(Violation("STEP_INDEX_GAP", f"step at position {i} has index {step.index}"))
            if step.delay_seconds < 0:
                out.append(Violation("NEGATIVE_DELAY", f"step {step.index} delay is negative"))
    if not spec.variant_arms:
        out.append(Violation("NO_ARMS", "at least one variant arm is required"))
    else:
        ids = [a.arm_id for a in spec.variant_arms]
        if len(set(ids)) != len(ids):
            out.append(Violation("DUPLICATE_ARM_ID", "arm ids must be distinct"))
        for a in spec.variant_arms:
            if a.weight <= 0:
                out.append(Violation("ARM_WEIGHT_NONPOSITIVE", f"arm {a.arm_id} weight must be > 0"))
        total = sum(a.weight for a in spec.variant_arms)
        if abs(total - 1.0) > WEIGHT_SUM_TOLERANCE:
            out.append(Violation("ARM_WEIGHT_SUM", f"arm weights sum to {total}, expected 1"))
    return out


def assign_arm(lead_id: str, arms: list[VariantArm] | tuple[VariantArm, ...], seed: int) -> str:
    """Deterministically assign a lead to a variant arm.

    Keyed hash of (seed, lead_id) mapped to cumulative arm weights, so the
    assignment is order-independent and restart-safe.
    """
    if not arms:
        raise DomainError("NO_ARMS", "cannot assign from an empty arm list")
    digest = hashlib.sha256(f"{seed}:{lead_id}".encode()).digest()
    u = int.from_bytes(digest[:8], "big") / 2**64
    total = sum(a.weight for a in arms)
    cumulative = 0.0
    for arm in arms:
        cumulative += arm.weight / total
        if u < cumulative:
            return arm.arm_id
    return arms[-1].arm_id
