"""Human-in-the-loop curation: teacher generation jobs, a review queue,
first-decision-wins review, and gold-dataset export.

Rejected candidates are kept forever; accept-rate reporting and referential
integrity both depend on never deleting anything.
"""
from __future__ import annotations

import json
import threading
import uuid
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Optional

from .domain import DomainError, UsageRecord


class CurationError(DomainError):
    pass


@dataclass(frozen=True)
class ReviewDecision:
    reviewer_id: str
    verdict: str  # accept | accept_with_edit | reject
    quality: int
    relevance: int
    accuracy: int
    decided_at: float
    version: int = 1
    edited_text: Optional[str] = None

    def __post_init__(self):
        if self.verdict not in ("accept", "accept_with_edit", "reject"):
            raise CurationError("BAD_VERDICT", self.verdict)
        if (self.verdict == "accept_with_edit") != (self.edited_text is not None):
            raise CurationError("EDIT_TEXT_MISMATCH",
                                "edited_text required exactly when verdict is accept_with_edit")
        for r in (self.quality, self.relevance, self.accuracy):
            if r not in (1, 2, 3, 4, 5):
                raise CurationError("BAD_RATING", f"ratings must be 1-5, got {r}")

    def to_dict(self) -> dict:
        return {
            "reviewer_id": self.reviewer_id, "verdict": self.verdict,
            "quality": self.quality, "relevance": self.relevance,
            "accuracy": self.accuracy, "decided_at": self.decided_at,
            "version": self.version, "edited_text": self.edited_text,
        }


@dataclass
class Candidate:
    id: str
    job_id: str
    text: str
    usage: Optional[UsageRecord]
    decision: Optional[ReviewDecision] = None

    def to_dict(self) -> dict:
        return {
            "id": self.id, "job_id": self.job_id, "text": self.text,
            "usage": self.usage.to_dict() if self.usage else None,
            "decision": self.decision.to_dict() if self.decision else None,
        }


@dataclass
class GenerationJob:
    id: str
    prompt_context: dict
    teacher_backend: str
    n_candidates: int
    status: str = "pending"  # pending -> generated -> reviewed
    candidate_ids: list[str] = field(default_factory=list)
    failures: int = 0

    def to_dict(self) -> dict:
        return {
            "id": self.id, "prompt_context": self.prompt_context,
            "teacher_backend": self.teacher_backend, "n_candidates": self.n_candidates,
            "status": self.status, "candidate_ids": list(self.candidate_ids),
            "failures": self.failures,
        }


@dataclass(frozen=True)
class GoldPair:
    instruction: str
    input: str
    output: str
    teacher_backend: str
    reviewer_id: str
    job_id: str
    candidate_id: str
    decided_at: float

    def to_jsonl_dict(self) -> dict:
        return {
            "instruction": self.instruction,
            "input": self.input,
            "output": self.output,
            "meta": {
                "teacher_backend": self.teacher_backend,
                "reviewer_id": self.reviewer_id,
                "job_id": self.job_id,
                "decided_at": rfc3339(self.decided_at),
            },
        }


def rfc3339(epoch_seconds: float) -> str:
    return datetime.fromtimestamp(epoch_seconds, tz=timezone.utc).isoformat().replace("+00:00", "Z")


def assemble_instruction(context: dict) -> str:
    return (f"Write a tailored outreach message. Value proposition: "
            f"{context.get('value_proposition', '')}. Instructions: "
            f"{context.get('instructions', '')}")


def assemble_input(context: dict) -> str:
    parts = []
    if context.get("pain_points"):
        parts.append("Pain points: " + "; ".join(context["pain_points"]))
    if context.get("research_goals"):
        parts.append("Research goals: " + "; ".join(context["research_goals"]))
    if context.get("dossier"):
        parts.append("Dossier: " + context["dossier"])
    return "\n".join(parts)


class CurationStore:
    """Thread-safe candidate store with compare-and-set decision writes."""

    def __init__(self, drafter=None):
        self.drafter = drafter
        self._lock = threading.Lock()
        self.jobs: dict[str, GenerationJob] = {}
        self.candidates: dict[str, Candidate] = {}
        self.gold: dict[str, GoldPair] = {}  # keyed by candidate id
        self._order: list[str] = []  # candidate ids, enqueue order

    # ---- generation ----

    def enqueue_job(self, context: dict, teacher_backend: str, n_candidates: int,
                    now: float = 0.0) -> GenerationJob:
        if n_candidates < 1:
            raise CurationError("BAD_N_CANDIDATES", "n_candidates must be >= 1")
        job = GenerationJob(id=f"job-{uuid.uuid4().hex[:12]}",
                            prompt_context=dict(context),
                            teacher_backend=teacher_backend,
                            n_candidates=n_candidates)
        messages = [
            {"role": "system", "content": assemble_instruction(context)},
            {"role": "user", "content": assemble_input(context) or "Write the message."},
        ]
        for i in range(n_candidates):
            try:
                text, usage = self.drafter.complete_chat(
                    teacher_backend, messages, purpose="draft",
                    lead_id=context.get("lead_id"), now=now)
            except DomainError:
                job.failures += 1
                continue
            cand = Candidate(id=f"{job.id}:c{i}", job_id=job.id, text=text, usage=usage)
            with self._lock:
                self.candidates[cand.id] = cand
                self._order.append(cand.id)
            job.candidate_ids.append(cand.id)
        job.status = "generated"
        with self._lock:
            self.jobs[job.id] = job
        return job

    # ---- review ----

    def submit_decision(self, candidate_id: str, decision: ReviewDecision) -> Candidate:
        if decision.version != 1:
            raise CurationError("BAD_VERSION", "only version 1 decisions are accepted")
        with self._lock:
            cand = self.candidates.get(candidate_id)
            if cand is None:
                raise CurationError("UNKNOWN_CANDIDATE", candidate_id)
            if cand.decision is not None:
                # first decision wins; return the stored one to the loser
                raise AlreadyDecided(cand)
            cand.decision = decision
            if decision.verdict in ("accept", "accept_with_edit"):
                job = self.jobs[cand.job_id]
                output = decision.edited_text if decision.verdict == "accept_with_edit" else cand.text
                self.gold[cand.id] = GoldPair(
                    instruction=assemble_instruction(job.prompt_context),
                    input=assemble_input(job.prompt_context),
                    output=output,
                    teacher_backend=job.teacher_backend,
                    reviewer_id=decision.reviewer_id,
                    job_id=job.id,
                    candidate_id=cand.id,
                    decided_at=decision.decided_at,
                )
            return cand

    def pending(self, limit: Optional[int] = None) -> list[Candidate]:
        """Undecided candidates, oldest first."""
        with self._lock:
            out = [self.candidates[cid] for cid in self._order
                   if self.candidates[cid].decision is None]
        return out[:limit] if limit else out

    # ---- export & stats ----

    def export_gold(self, teacher_backend: Optional[str] = None,
                    since: Optional[float] = None,
                    until: Optional[float] = None) -> tuple[str, dict]:
        """Gold pairs as JSONL text plus a manifest; byte-idempotent."""
        with self._lock:
            pairs = list(self.gold.values())
            decided = [c for c in self.candidates.values() if c.decision is not None]
        if teacher_backend:
            pairs = [p for p in pairs if p.teacher_backend == teacher_backend]
        if since is not None:
            pairs = [p for p in pairs if p.decided_at >= since]
        if until is not None:
            pairs = [p for p in pairs if p.decided_at < until]
        pairs.sort(key=lambda p: (p.decided_at, p.candidate_id))
        lines = [json.dumps(p.to_jsonl_dict(), sort_keys=True) for p in pairs]
        per_reviewer: dict[str, int] = {}
        for p in pairs:
            per_reviewer[p.reviewer_id] = per_reviewer.get(p.reviewer_id, 0) + 1
        manifest = {
            "count": len(pairs),
            "reviewer_breakdown": dict(sorted(per_reviewer.items())),
            "accept_rate": (len([c for c in decided
                                 if c.decision.verdict != "reject"]) / len(decided)
                            if decided else None),
        }
        return "\n".join(lines) + ("\n" if lines else ""), manifest

    def queue_stats(self) -> dict:
        with self._lock:
            cands = list(self.candidates.values())
        decided = [c for c in cands if c.decision is not None]
        per_reviewer: dict[str, int] = {}
        for c in decided:
            per_reviewer[c.decision.reviewer_id] = per_reviewer.get(c.decision.reviewer_id, 0) + 1

        def mean(vals):
            return sum(vals) / len(vals) if vals else None

        return {
            "pending_review": len(cands) - len(decided),
            "decided": len(decided),
            "per_reviewer": dict(sorted(per_reviewer.items())),
            "mean_quality": mean([c.decision.quality for c in decided]),
            "mean_relevance": mean([c.decision.relevance for c in decided]),
            "mean_accuracy": mean([c.decision.accuracy for c in decided]),
        }


class AlreadyDecided(CurationError):
    """Raised on a second decision; carries the winning candidate."""

    def __init__(self, candidate: Candidate):
        super().__init__("ALREADY_DECIDED", f"candidate {candidate.id} already decided")
        self.candidate = candidate
