"""Human-evaluation arithmetic and inter-rater reliability statistics."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

from .domain import DomainError


class StatsError(DomainError):
    pass


@dataclass(frozen=True)
class RatingRecord:
    item_id: str
    rater_id: str
    rating: int

    def __post_init__(self):
        if self.rating not in (1, 2, 3, 4, 5):
            raise StatsError("BAD_RATING", f"rating must be 1-5, got {self.rating}")


@dataclass(frozen=True)
class ChecklistSpec:
    components: tuple[tuple[str, float], ...]  # (name, weight)

    def __post_init__(self):
        total = sum(w for _, w in self.components)
        if abs(total - 1.0) > 1e-9:
            raise StatsError("WEIGHT_SUM", f"component weights sum to {total}, expected 1")
        for name, w in self.components:
            if w <= 0:
                raise StatsError("BAD_WEIGHT", f"component {name!r} weight must be > 0")


# The seven checklist components, equal weight unless a config overrides.
DEFAULT_CHECKLIST = ChecklistSpec(tuple(
    (name, 1.0 / 7.0) for name in (
        "executive_summary", "company_background", "market_analysis",
        "competitors", "finance", "strategy", "supporting_data",
    )
))


@dataclass(frozen=True)
class AgreementResult:
    statistic: str  # cohen_kappa | krippendorff_alpha | pearson_r
    value: float


def rating_to_percent(rating: int) -> float:
    if rating not in (1, 2, 3, 4, 5):
        raise StatsError("BAD_RATING", f"rating must be 1-5, got {rating}")
    return (rating - 1) / 4 * 100.0


def item_relevance(records: Sequence[RatingRecord]) -> float:
    """Mean per-rater percent score for one item."""
    if not records:
        raise StatsError("EMPTY_RATINGS", "need at least one rating")
    return sum(rating_to_percent(r.rating) for r in records) / len(records)


def completeness_score(present: set[str], spec: ChecklistSpec = DEFAULT_CHECKLIST) -> float:
    names = {name for name, _ in spec.components}
    unknown = present - names
    if unknown:
        raise StatsError("UNKNOWN_COMPONENT", f"not in checklist: {sorted(unknown)}")
    return 100.0 * sum(w for name, w in spec.components if name in present)


def cohen_kappa(confusion: Sequence[Sequence[float]]) -> AgreementResult:
    """Chance-corrected agreement from a square co-count matrix."""
    n = len(confusion)
    if any(len(row) != n for row in confusion):
        raise StatsError("NOT_SQUARE", "confusion matrix must be square")
    total = sum(sum(row) for row in confusion)
    if total <= 0:
        raise StatsError("EMPTY_MATRIX", "total count must be > 0")
    p_o = sum(confusion[i][i] for i in range(n)) / total
    row = [sum(confusion[i][j] for j in range(n)) for i in range(n)]
    col = [sum(confusion[i][j] for i in range(n)) for j in range(n)]
    p_e = sum(row[i] * col[i] for i in range(n)) / total**2
    if p_e == 1.0:
        raise StatsError("DEGENERATE", "expected agreement is 1; kappa undefined")
    return AgreementResult("cohen_kappa", (p_o - p_e) / (1 - p_e))


def krippendorff_alpha(records: Sequence[RatingRecord], metric: str = "interval") -> AgreementResult:
    """Coincidence-matrix alpha with nominal or interval distance."""
    if metric not in ("nominal", "interval"):
        raise StatsError("BAD_METRIC", metric)
    by_item: dict[str, list[int]] = {}
    for rec in records:
        by_item.setdefault(rec.item_id, []).append(rec.rating)
    units = {k: v for k, v in by_item.items() if len(v) >= 2}
    if len(units) < 2:
        raise StatsError("TOO_FEW_UNITS", "need >= 2 items with >= 2 ratings each")

    values = sorted({v for ratings in units.values() for v in ratings})
    if len(values) < 2:
        raise StatsError("DEGENERATE", "all pairable values identical; alpha undefined")
    idx = {v: i for i, v in enumerate(values)}
    k = len(values)

    coincidence = [[0.0] * k for _ in range(k)]
    for ratings in units.values():
        m = len(ratings)
        for i, a in enumerate(ratings):
            for j, b in enumerate(ratings):
                if i != j:
                    coincidence[idx[a]][idx[b]] += 1.0 / (m - 1)

    n_total = sum(sum(row) for row in coincidence)
    marginals = [sum(row) for row in coincidence]

    def delta2(a: int, b: int) -> float:
        if metric == "nominal":
            return 0.0 if values[a] == values[b] else 1.0
        return (values[a] - values[b]) ** 2

    d_o = sum(coincidence[a][b] * delta2(a, b) for a in range(k) for b in range(k)) / n_total
    d_e = sum(marginals[a] * marginals[b] * delta2(a, b)
              for a in range(k) for b in range(k)) / (n_total * (n_total - 1))
    if d_e == 0:
        raise StatsError("DEGENERATE", "expected disagreement is zero; alpha undefined")
    return AgreementResult("krippendorff_alpha", 1.0 - d_o / d_e)


def pearson_r(x: Sequence[float], y: Sequence[float]) -> AgreementResult:
    if len(x) != len(y) or len(x) < 2:
        raise StatsError("BAD_LENGTH", "need equal-length sequences of size >= 2")
    n = len(x)
    mx = sum(x) / n
    my = sum(y) / n
    sxx = sum((a - mx) ** 2 for a in x)
    syy = sum((b - my) ** 2 for b in y)
    if sxx == 0 or syy == 0:
        raise StatsError("ZERO_VARIANCE", "both sequences need nonzero variance")
    sxy = sum((a - mx) * (b - my) for a, b in zip(x, y))
    return AgreementResult("pearson_r", sxy / math.sqrt(sxx * syy))
