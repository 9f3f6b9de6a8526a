"""Uniform client over OpenAI-compatible chat-completion backends.

Covers both remote teacher APIs and locally served fine-tuned models; the
wire shape is POST {base_url}/chat/completions with model/messages/
temperature, usage read back from the response. Token usage is appended to
a concurrent ledger and priced with exact decimal arithmetic.
"""
from __future__ import annotations

import json
import os
import random
import threading
import time
from dataclasses import dataclass, field
from decimal import Decimal
from typing import Callable, Optional

import httpx

from .domain import DomainError, UsageRecord

MILLION = Decimal(1_000_000)


class GatewayError(DomainError):
    pass


@dataclass(frozen=True)
class BackendConfig:
    name: str
    base_url: str
    model: str
    temperature: float = 0.7
    timeout_seconds: float = 30.0
    max_concurrency: int = 4
    api_key_env: Optional[str] = None

    def __post_init__(self):
        if self.max_concurrency < 1:
            raise DomainError("BAD_CONCURRENCY", "max_concurrency must be >= 1")
        if not 0.0 <= self.temperature <= 2.0:
            raise DomainError("BAD_TEMPERATURE", "temperature must be in [0, 2]")

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "base_url": self.base_url,
            "model": self.model,
            "temperature": self.temperature,
            "timeout_seconds": self.timeout_seconds,
            "max_concurrency": self.max_concurrency,
            "api_key_env": self.api_key_env,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "BackendConfig":
        return cls(
            name=d["name"],
            base_url=d["base_url"],
            model=d["model"],
            temperature=float(d.get("temperature", 0.7)),
            timeout_seconds=float(d.get("timeout_seconds", 30.0)),
            max_concurrency=int(d.get("max_concurrency", 4)),
            api_key_env=d.get("api_key_env"),
        )


@dataclass(frozen=True)
class ChatRequest:
    messages: tuple[dict, ...]  # {"role": ..., "content": ...}

    def __post_init__(self):
        if not self.messages:
            raise DomainError("EMPTY_MESSAGES", "chat request needs at least one message")
        if self.messages[0]["role"] not in ("system", "user"):
            raise DomainError("BAD_FIRST_ROLE", "first message must be system or user")


@dataclass(frozen=True)
class ChatResponse:
    text: str
    usage: UsageRecord


@dataclass(frozen=True)
class Price:
    input_per_million: Decimal
    output_per_million: Decimal

    def __post_init__(self):
        if self.input_per_million < 0 or self.output_per_million < 0:
            raise DomainError("NEGATIVE_PRICE", "prices must be >= 0")


class PriceTable:
    """Per-backend token prices, currency per 1e6 tokens."""

    def __init__(self, prices: dict[str, Price] | None = None):
        self._prices = dict(prices or {})

    def set(self, backend_name: str, input_per_million, output_per_million) -> None:
        self._prices[backend_name] = Price(Decimal(str(input_per_million)), Decimal(str(output_per_million)))

    def get(self, backend_name: str) -> Price:
        if backend_name not in self._prices:
            raise GatewayError("UNKNOWN_BACKEND", f"no prices for backend {backend_name!r}")
        return self._prices[backend_name]

    @classmethod
    def from_dict(cls, d: dict) -> "PriceTable":
        table = cls()
        for name, p in d.items():
            table.set(name, p["input_price"], p["output_price"])
        return table


def cost_of(usage: UsageRecord, prices: PriceTable) -> Decimal:
    """Exact decimal cost of one usage record."""
    p = prices.get(usage.backend_name)
    return (
        Decimal(usage.prompt_tokens) * p.input_per_million
        + Decimal(usage.completion_tokens) * p.output_per_million
    ) / MILLION


def ledger_per_lead(records: list[UsageRecord], prices: PriceTable) -> tuple[dict[str, Decimal], Optional[Decimal]]:
    """Sum cost per lead_id; returns (per-lead map, mean across leads or None)."""
    per_lead: dict[str, Decimal] = {}
    for rec in records:
        key = rec.lead_id or ""
        per_lead[key] = per_lead.get(key, Decimal(0)) + cost_of(rec, prices)
    if not per_lead:
        return {}, None
    mean = sum(per_lead.values(), Decimal(0)) / Decimal(len(per_lead))
    return per_lead, mean


class UsageLedger:
    """Append-only concurrent usage log."""

    def __init__(self):
        self._lock = threading.Lock()
        self._records: list[UsageRecord] = []

    def append(self, rec: UsageRecord) -> None:
        with self._lock:
            self._records.append(rec)

    def records(self) -> list[UsageRecord]:
        with self._lock:
            return list(self._records)

    def per_lead(self, prices: PriceTable) -> tuple[dict[str, Decimal], Optional[Decimal]]:
        return ledger_per_lead(self.records(), prices)


RETRYABLE_STATUSES = {429, 500, 502, 503, 504}
MAX_ATTEMPTS = 3


class HttpGateway:
    """Chat-completion client with bounded concurrency and retry on 429/5xx."""

    def __init__(
        self,
        ledger: Optional[UsageLedger] = None,
        transport: Optional[httpx.BaseTransport] = None,
        sleep: Callable[[float], None] = time.sleep,
        rng: Optional[random.Random] = None,
    ):
        self.ledger = ledger or UsageLedger()
        self._transport = transport
        self._sleep = sleep
        self._rng = rng or random.Random()
        self._semaphores: dict[str, threading.BoundedSemaphore] = {}
        self._sem_lock = threading.Lock()

    def _semaphore(self, cfg: BackendConfig) -> threading.BoundedSemaphore:
        with self._sem_lock:
            if cfg.name not in self._semaphores:
                self._semaphores[cfg.name] = threading.BoundedSemaphore(cfg.max_concurrency)
            return self._semaphores[cfg.name]

    def complete(self, cfg: BackendConfig, req: ChatRequest, *, purpose: str = "draft",
                 lead_id: Optional[str] = None, now: Optional[float] = None) -> ChatResponse:
        payload = {
            "model": cfg.model,
            "messages": list(req.messages),
            "temperature": cfg.temperature,
        }
        headers = {}
        if cfg.api_key_env:
            key = os.environ.get(cfg.api_key_env)
            if key:
                headers["Authorization"] = f"Bearer {key}"
        last_status = None
        with self._semaphore(cfg):
            with httpx.Client(base_url=cfg.base_url, transport=self._transport,
                              timeout=cfg.timeout_seconds) as client:
                for attempt in range(1, MAX_ATTEMPTS + 1):
                    try:
                        resp = client.post("/chat/completions", json=payload, headers=headers)
                    except httpx.TimeoutException as exc:
                        raise GatewayError("TIMEOUT", str(exc)) from exc
                    if resp.status_code == 200:
                        return self._parse(cfg, resp.json(), purpose, lead_id, now)
                    last_status = resp.status_code
                    if resp.status_code not in RETRYABLE_STATUSES:
                        raise GatewayError("BACKEND_ERROR", f"status {resp.status_code}")
                    if attempt < MAX_ATTEMPTS:
                        backoff = (2 ** (attempt - 1)) * (0.5 + self._rng.random())
                        self._sleep(backoff)
        raise GatewayError("EXHAUSTED_RETRIES", f"gave up after {MAX_ATTEMPTS} attempts, last status {last_status}")

    def _parse(self, cfg: BackendConfig, body: dict, purpose: str, lead_id: Optional[str],
               now: Optional[float]) -> ChatResponse:
        try:
            text = body["choices"][0]["message"]["content"]
            usage_raw = body.get("usage", {})
        except (KeyError, IndexError) as exc:
            raise GatewayError("BACKEND_ERROR", f"malformed response body: {exc}") from exc
        usage = UsageRecord(
            prompt_tokens=int(usage_raw.get("prompt_tokens", 0)),
            completion_tokens=int(usage_raw.get("completion_tokens", 0)),
            backend_name=cfg.name,
            timestamp=now if now is not None else time.time(),
            purpose=purpose,
            lead_id=lead_id,
        )
        self.ledger.append(usage)
        return ChatResponse(text=text, usage=usage)


@dataclass
class BackendRegistry:
    """Backends plus prices, loadable from one JSON config file."""

    backends: dict[str, BackendConfig] = field(default_factory=dict)
    prices: PriceTable = field(default_factory=PriceTable)

    def get(self, name: str) -> BackendConfig:
        if name not in self.backends:
            raise GatewayError("UNKNOWN_BACKEND", f"backend {name!r} not registered")
        return self.backends[name]

    @classmethod
    def from_file(cls, path: str) -> "BackendRegistry":
        with open(path) as f:
            raw = json.load(f)
        backends = {b["name"]: BackendConfig.from_dict(b) for b in raw.get("backends", [])}
        prices = PriceTable.from_dict(raw.get("prices", {}))
        return cls(backends=backends, prices=prices)
