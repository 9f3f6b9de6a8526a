"""Per-lead market research: fetch source pages, strip markup, summarize.

The reference fetcher is plain HTTP GET (plus file:// and a local corpus
directory for deterministic tests). Headless-browser automation is a
pluggable fetcher interface left to callers.
"""
from __future__ import annotations

import hashlib
import re
import time
from html.parser import HTMLParser
from pathlib import Path
from typing import Callable, Optional
from urllib.parse import urlparse

import httpx

from .domain import DomainError, ResearchDossier, SourceDocument, Lead

# Dossier summaries are capped so they fit the smallest 8K-context models.
DEFAULT_MAX_DOSSIER_TOKENS = 2000
CHARS_PER_TOKEN_ESTIMATE = 4

_SKIP_TAGS = {"script", "style", "noscript", "head", "title"}


class ResearchError(DomainError):
    pass


class _TextExtractor(HTMLParser):
    def __init__(self):
        super().__init__()
        self.chunks: list[str] = []
        self._skip_depth = 0

    def handle_starttag(self, tag, attrs):
        if tag in _SKIP_TAGS:
            self._skip_depth += 1

    def handle_endtag(self, tag):
        if tag in _SKIP_TAGS and self._skip_depth > 0:
            self._skip_depth -= 1

    def handle_data(self, data):
        if self._skip_depth == 0 and data.strip():
            self.chunks.append(data.strip())


def strip_markup(html: str) -> str:
    """Extract visible text from markup, collapsing whitespace."""
    parser = _TextExtractor()
    parser.feed(html)
    return re.sub(r"\s+", " ", " ".join(parser.chunks)).strip()


def url_hash(url: str) -> str:
    return hashlib.sha256(url.encode()).hexdigest()[:16]


class Fetcher:
    """Fetches a URL and returns a markup-stripped SourceDocument.

    Supports http(s), file:// paths, and corpus:// URLs resolved against a
    local corpus directory laid out as {corpus_dir}/{url-hash}.html.
    """

    def __init__(self, corpus_dir: Optional[str] = None,
                 client: Optional[httpx.Client] = None,
                 clock: Callable[[], float] = time.time):
        self.corpus_dir = Path(corpus_dir) if corpus_dir else None
        self._client = client
        self._clock = clock

    def fetch(self, url: str) -> SourceDocument:
        parsed = urlparse(url)
        if not parsed.scheme:
            raise ResearchError("FETCH_FAILED", f"not a valid URL: {url!r}")
        if parsed.scheme == "file":
            html = Path(parsed.path).read_text()
        elif self.corpus_dir is not None:
            path = self.corpus_dir / f"{url_hash(url)}.html"
            if not path.exists():
                raise ResearchError("FETCH_FAILED", f"404: no corpus entry for {url}")
            html = path.read_text()
        else:
            client = self._client or httpx.Client()
            resp = client.get(url)
            if resp.status_code != 200:
                raise ResearchError("FETCH_FAILED", f"{resp.status_code}: {url}")
            html = resp.text
        text = strip_markup(html)
        if not text:
            raise ResearchError("EMPTY_EXTRACTION", f"no text nodes in {url}")
        return SourceDocument(url=url, fetched_at=self._clock(), text=text)


def research_lead(
    lead: Lead,
    goals: list[str],
    source_urls: list[str],
    fetcher: Fetcher,
    drafter,
    backend_name: str,
    *,
    now: Optional[float] = None,
    max_dossier_tokens: int = DEFAULT_MAX_DOSSIER_TOKENS,
) -> ResearchDossier:
    """Build a research dossier for one lead from the given source URLs.

    `drafter` is anything with complete_chat(backend_name, messages, purpose,
    lead_id, now) -> (text, UsageRecord). Sources that fail to fetch are
    dropped; if all fail the call errors.
    """
    sources: list[SourceDocument] = []
    for url in source_urls:
        try:
            sources.append(fetcher.fetch(url))
        except ResearchError:
            continue
    if not sources:
        raise ResearchError("NO_SOURCES", "every source fetch failed")

    max_chars = max_dossier_tokens * CHARS_PER_TOKEN_ESTIMATE
    goal_block = "\n".join(f"- {g}" for g in goals)
    source_block = "\n\n".join(f"[{s.url}]\n{s.text}" for s in sources)
    messages = [
        {"role": "system",
         "content": "Summarize the sources into a market-research dossier for the lead. "
                    "Only use facts present in the sources."},
        {"role": "user",
         "content": f"Lead: {lead.profile}\nResearch goals:\n{goal_block}\n\nSources:\n{source_block}"},
    ]
    summary, usage = drafter.complete_chat(
        backend_name, messages, purpose="research", lead_id=lead.id, now=now)
    return ResearchDossier(
        lead_id=lead.id,
        summary=summary[:max_chars],
        sources=tuple(sources),
        model_backend=backend_name,
        usage=usage,
    )
