"""Text-generation metrics and engagement KPIs.

ROUGE-L uses LCS-based precision/recall with a beta-weighted F-measure
(beta = 1.2 by default, weighting recall). BERTScore operates on injected
embeddings so the matching math is testable without any model. The
factual-accuracy extractor is rule-based and pluggable.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Sequence

import numpy as np

from .domain import DomainError, EngagementEvent, EventKind, SourceDocument

DEFAULT_BETA = 1.2

_TOKEN_RE = re.compile(r"[a-z0-9]+|[^\w\s]")


def tokenize(text: str) -> list[str]:
    """Reference tokenizer: lowercase, split on whitespace and punctuation."""
    return _TOKEN_RE.findall(text.lower())


class MetricError(DomainError):
    pass


# ---------------------------------------------------------------- ROUGE-L


@dataclass(frozen=True)
class RougeResult:
    precision: float
    recall: float
    f_measure: float
    beta: float
    lcs_length: int


def lcs_length(a: Sequence[str], b: Sequence[str]) -> int:
    """Longest common subsequence length, O(len(a)*len(b))."""
    if not a or not b:
        return 0
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0] * (len(b) + 1)
        for j, y in enumerate(b):
            cur[j + 1] = prev[j] + 1 if x == y else max(prev[j + 1], cur[j])
        prev = cur
    return prev[-1]


def rouge_l(candidate: Sequence[str], reference: Sequence[str],
            beta: float = DEFAULT_BETA) -> RougeResult:
    if not reference:
        raise MetricError("EMPTY_REFERENCE", "reference must be non-empty")
    if beta <= 0:
        raise MetricError("BAD_BETA", "beta must be positive")
    if not candidate:
        return RougeResult(0.0, 0.0, 0.0, beta, 0)
    lcs = lcs_length(candidate, reference)
    p = lcs / len(candidate)
    r = lcs / len(reference)
    if p == 0.0 and r == 0.0:
        f = 0.0
    else:
        f = (1 + beta**2) * r * p / (r + beta**2 * p)
    return RougeResult(p, r, f, beta, lcs)


# -------------------------------------------------------------- BERTScore


@dataclass(frozen=True)
class EmbeddedSeq:
    tokens: tuple[str, ...]
    vectors: np.ndarray  # (n_tokens, dim)
    idf: np.ndarray  # (n_tokens,)

    @classmethod
    def build(cls, tokens: Sequence[str], vectors, idf=None) -> "EmbeddedSeq":
        vecs = np.asarray(vectors, dtype=float)
        if vecs.ndim != 2 or vecs.shape[0] != len(tokens):
            raise MetricError("SHAPE_MISMATCH", "need one vector per token")
        if idf is None:
            weights = np.ones(len(tokens))
        else:
            weights = np.asarray(idf, dtype=float)
            if weights.shape != (len(tokens),):
                raise MetricError("SHAPE_MISMATCH", "need one idf weight per token")
            if (weights < 0).any():
                raise MetricError("NEGATIVE_IDF", "idf weights must be non-negative")
        return cls(tuple(tokens), vecs, weights)


@dataclass(frozen=True)
class BertScoreResult:
    precision: float
    recall: float
    f1: float
    baseline: float = 0.0
    rescaled: Optional[tuple[float, float, float]] = None


def _normalize(vectors: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(vectors, axis=1, keepdims=True)
    if (norms == 0).any():
        raise MetricError("ZERO_NORM", "embedding vectors must have nonzero norm")
    return vectors / norms


def bert_score(candidate: EmbeddedSeq, reference: EmbeddedSeq,
               baseline: float = 0.0) -> BertScoreResult:
    """Greedy max-cosine matching with idf weighting on both sides."""
    if len(candidate.tokens) == 0 or len(reference.tokens) == 0:
        raise MetricError("EMPTY_SEQUENCE", "both sequences must be non-empty")
    if candidate.vectors.shape[1] != reference.vectors.shape[1]:
        raise MetricError("DIM_MISMATCH", "embedding dimensions differ")
    c = _normalize(candidate.vectors)
    r = _normalize(reference.vectors)
    sim = c @ r.T  # (n_cand, n_ref)
    cand_best = sim.max(axis=1)
    ref_best = sim.max(axis=0)
    cw = candidate.idf
    rw = reference.idf
    if cw.sum() == 0 or rw.sum() == 0:
        raise MetricError("ZERO_IDF_MASS", "idf weights sum to zero")
    p = float((cw * cand_best).sum() / cw.sum())
    rec = float((rw * ref_best).sum() / rw.sum())
    f1 = 0.0 if p + rec == 0 else 2 * p * rec / (p + rec)
    result = BertScoreResult(p, rec, f1, baseline=baseline)
    if baseline != 0.0:
        rescaled = tuple(rescale_baseline(v, baseline) for v in (p, rec, f1))
        result = BertScoreResult(p, rec, f1, baseline=baseline, rescaled=rescaled)
    return result


def rescale_baseline(score: float, b: float) -> float:
    """Map raw similarity into a more interpretable range: (score - b)/(1 - b)."""
    if b >= 1.0:
        raise MetricError("BAD_BASELINE", "baseline must be < 1")
    return (score - b) / (1.0 - b)


def idf_weights(token_docs: list[list[str]], tokens: Sequence[str]) -> np.ndarray:
    """log((N+1)/(df+1)) over a reference corpus of tokenized documents."""
    n = len(token_docs)
    doc_sets = [set(d) for d in token_docs]
    return np.array([math.log((n + 1) / (sum(t in s for s in doc_sets) + 1)) for t in tokens])


# ------------------------------------------------------- factual accuracy


class ClaimLabel(str, Enum):
    SUPPORTED = "supported"
    CONTRADICTED = "contradicted"
    UNVERIFIABLE = "unverifiable"


@dataclass(frozen=True)
class ClaimVerdict:
    claim: str
    label: ClaimLabel
    source_ref: Optional[str] = None

    def __post_init__(self):
        if self.label in (ClaimLabel.SUPPORTED, ClaimLabel.CONTRADICTED) and not self.source_ref:
            raise MetricError("MISSING_SOURCE_REF", "supported/contradicted verdicts need a source")


NOT_APPLICABLE = "NOT_APPLICABLE"


def factual_accuracy(claims: list[ClaimVerdict]):
    """Supported / (supported + contradicted) * 100; unverifiable excluded."""
    supported = sum(1 for c in claims if c.label is ClaimLabel.SUPPORTED)
    contradicted = sum(1 for c in claims if c.label is ClaimLabel.CONTRADICTED)
    verifiable = supported + contradicted
    if verifiable == 0:
        return NOT_APPLICABLE
    return 100.0 * supported / verifiable


_NUMBER_RE = re.compile(r"[$€£]?\d[\d,]*(?:\.\d+)?[%]?(?:[kmbKMB](?![a-z]))?")
_DATE_RE = re.compile(r"\b(?:\d{4}-\d{2}-\d{2}|\d{1,2}/\d{1,2}/\d{2,4}|(?:19|20)\d{2})\b")
_PROPER_RE = re.compile(r"\b(?:[A-Z][a-zA-Z0-9&'.-]*)(?:\s+[A-Z][a-zA-Z0-9&'.-]*)+\b")


def _fold(text: str) -> str:
    """Normalize for matching: lowercase, strip punctuation, collapse space."""
    return re.sub(r"\s+", " ", re.sub(r"[^\w$%]", " ", text.lower())).strip()


def _entity_anchor(output: str, span_start: int) -> Optional[str]:
    """Nearest capitalized word before the span; ties a number to its subject."""
    head = output[:span_start]
    caps = re.findall(r"\b[A-Z][a-zA-Z0-9&'.-]*\b", head)
    return caps[-1] if caps else None


def extract_claims(output: str, sources: list[SourceDocument]) -> list[ClaimVerdict]:
    """Rule-based claim extraction + verification against fetched sources.

    Claims are numeric tokens, date-shaped tokens, and capitalized multi-word
    spans. A claim is supported when its folded form appears in a source;
    a numeric claim is contradicted when the same anchor entity appears in a
    source next to a different number of the same shape.
    """
    folded_sources = [(s.url, _fold(s.text)) for s in sources]
    verdicts: list[ClaimVerdict] = []
    seen: set[str] = set()

    spans: list[tuple[str, int, bool]] = []  # (text, start, is_numeric)
    for m in _NUMBER_RE.finditer(output):
        spans.append((m.group(), m.start(), True))
    for m in _DATE_RE.finditer(output):
        spans.append((m.group(), m.start(), True))
    for m in _PROPER_RE.finditer(output):
        spans.append((m.group(), m.start(), False))

    for text, start, is_numeric in sorted(spans, key=lambda t: t[1]):
        folded = _fold(text)
        if not folded or folded in seen:
            continue
        seen.add(folded)
        supported_by = next((url for url, body in folded_sources if folded in body), None)
        if supported_by:
            verdicts.append(ClaimVerdict(text, ClaimLabel.SUPPORTED, supported_by))
            continue
        if is_numeric:
            anchor = _entity_anchor(output, start)
            if anchor:
                anchor_folded = _fold(anchor)
                contradicted_by = None
                for url, body in folded_sources:
                    for pos in _find_all(body, anchor_folded):
                        window = body[pos:pos + len(anchor_folded) + 80]
                        if _NUMBER_RE.search(window.replace(anchor_folded, "", 1)):
                            contradicted_by = url
                            break
                    if contradicted_by:
                        break
                if contradicted_by:
                    verdicts.append(ClaimVerdict(text, ClaimLabel.CONTRADICTED, contradicted_by))
                    continue
        verdicts.append(ClaimVerdict(text, ClaimLabel.UNVERIFIABLE))
    return verdicts


def _find_all(haystack: str, needle: str):
    start = 0
    while True:
        pos = haystack.find(needle, start)
        if pos < 0:
            return
        yield pos
        start = pos + 1


# ----------------------------------------------------------------- KPIs


@dataclass(frozen=True)
class KpiReport:
    delivered: int
    opens: int
    clicks: int
    replies: int
    unsubscribes: int
    open_rate: float
    ctr: float
    reply_rate: float
    unsub_rate: float

    def to_dict(self) -> dict:
        return {
            "delivered": self.delivered, "opens": self.opens, "clicks": self.clicks,
            "replies": self.replies, "unsubscribes": self.unsubscribes,
            "open_rate": self.open_rate, "ctr": self.ctr,
            "reply_rate": self.reply_rate, "unsub_rate": self.unsub_rate,
        }


def kpi_rates(events: list[EngagementEvent]) -> KpiReport:
    """Engagement rates against delivered count, deduplicated per idempotency rule."""
    seen: set = set()
    counts = {k: 0 for k in EventKind}
    for e in events:
        if e.kind in (EventKind.DELIVERED, EventKind.OPEN, EventKind.CLICK, EventKind.UNSUBSCRIBE):
            key = e.dedup_key()
            if key in seen:
                continue
            seen.add(key)
        counts[e.kind] += 1
    delivered = counts[EventKind.DELIVERED]
    if delivered == 0:
        raise MetricError("NO_DELIVERIES", "cannot compute rates with zero delivered messages")
    rate = lambda n: 100.0 * n / delivered
    return KpiReport(
        delivered=delivered,
        opens=counts[EventKind.OPEN],
        clicks=counts[EventKind.CLICK],
        replies=counts[EventKind.REPLY],
        unsubscribes=counts[EventKind.UNSUBSCRIBE],
        open_rate=rate(counts[EventKind.OPEN]),
        ctr=rate(counts[EventKind.CLICK]),
        reply_rate=rate(counts[EventKind.REPLY]),
        unsub_rate=rate(counts[EventKind.UNSUBSCRIBE]),
    )
