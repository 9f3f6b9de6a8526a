/**
 * Pure HTML renderers. Every number shown comes verbatim from an API
 * payload; nothing here recomputes a rate or a cost.
 */
import type { LeadState, MessageRecord, ReviewStats } from "./api.js";
import type { CardState } from "./state.js";
import { canSubmit } from "./state.js";

export function escapeHtml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

export function renderEmptyQueue(): string {
  return `<div class="empty-state">No candidates waiting for review.</div>`;
}

export function renderErrorBanner(message: string): string {
  return `<div class="error-banner" role="alert">${escapeHtml(message)}` +
    `<button class="retry" data-action="retry">Retry</button></div>`;
}

function ratingInput(cardId: string, which: string, value: number): string {
  return `<label>${which}
    <input type="number" min="1" max="5" value="${value}"
      data-card="${escapeHtml(cardId)}" data-rating="${which}"></label>`;
}

export function renderCard(card: CardState): string {
  const id = card.item.candidate_id;
  const disabled = canSubmit(card) ? "" : " disabled";
  const verdict = (v: string) =>
    `<button data-card="${escapeHtml(id)}" data-verdict="${v}"` +
    `${card.verdict === v ? ' class="selected"' : ""}>${v.replace(/_/g, " ")}</button>`;
  return `<article class="card" data-candidate="${escapeHtml(id)}" tabindex="0">
  <header>
    <span class="backend">${escapeHtml(card.item.teacher_backend)}</span>
    <span class="job">${escapeHtml(card.item.job_id)}</span>
  </header>
  <pre class="candidate-text">${escapeHtml(card.item.text)}</pre>
  <textarea class="edit-buffer" data-card="${escapeHtml(id)}"
    aria-label="edited draft">${escapeHtml(card.editBuffer)}</textarea>
  <div class="verdicts">${verdict("accept")}${verdict("accept_with_edit")}${verdict("reject")}</div>
  <div class="ratings">
    ${ratingInput(id, "quality", card.quality)}
    ${ratingInput(id, "relevance", card.relevance)}
    ${ratingInput(id, "accuracy", card.accuracy)}
  </div>
  <button class="submit" data-card="${escapeHtml(id)}" data-action="submit"${disabled}>Submit</button>
</article>`;
}

export function renderQueue(cards: CardState[]): string {
  if (cards.length === 0) return renderEmptyQueue();
  return cards.map(renderCard).join("\n");
}

export function renderStats(stats: ReviewStats): string {
  const mean = (v: number | null) => (v === null ? "–" : String(v));
  return `<dl class="stats">
  <dt>Pending</dt><dd>${stats.pending_review}</dd>
  <dt>Decided</dt><dd>${stats.decided}</dd>
  <dt>Mean quality</dt><dd>${mean(stats.mean_quality)}</dd>
  <dt>Mean relevance</dt><dd>${mean(stats.mean_relevance)}</dd>
  <dt>Mean accuracy</dt><dd>${mean(stats.mean_accuracy)}</dd>
</dl>`;
}

export interface ArmKpis {
  arm_id: string;
  open_rate: number;
  ctr: number;
  reply_rate: number;
  unsub_rate: number;
  mean_cost_per_lead: string | null;
  paused: boolean;
}

export function renderKpiCard(kpis: ArmKpis): string {
  return `<section class="kpi-card${kpis.paused ? " paused" : ""}" data-arm="${escapeHtml(kpis.arm_id)}">
  <h3>${escapeHtml(kpis.arm_id)}${kpis.paused ? " (paused)" : ""}</h3>
  <ul>
    <li>open ${kpis.open_rate}%</li>
    <li>ctr ${kpis.ctr}%</li>
    <li>reply ${kpis.reply_rate}%</li>
    <li>unsub ${kpis.unsub_rate}%</li>
    <li>cost/lead ${kpis.mean_cost_per_lead === null ? "–" : "$" + kpis.mean_cost_per_lead}</li>
  </ul>
  <button data-arm="${escapeHtml(kpis.arm_id)}" data-action="${kpis.paused ? "resume" : "pause"}">
    ${kpis.paused ? "Resume" : "Pause"}</button>
</section>`;
}

export function timelineEntries(lead: LeadState): MessageRecord[] {
  return [...lead.memory.history, ...lead.memory.inbound].sort(
    (a, b) => a.timestamp - b.timestamp || a.id.localeCompare(b.id),
  );
}

export function renderTimeline(lead: LeadState): string {
  const rows = timelineEntries(lead)
    .map(
      (m) => `<li class="${m.direction}">
    <span class="t">${m.timestamp}</span>
    <span class="dir">${m.direction}</span>
    <span class="body">${escapeHtml(m.body)}</span>
  </li>`,
    )
    .join("\n");
  return `<ol class="timeline" data-lead="${escapeHtml(lead.lead.id)}">${rows}</ol>`;
}
