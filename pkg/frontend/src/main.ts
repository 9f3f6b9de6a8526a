/**
 * Browser entry point: wires the pure state machine and renderers to the
 * DOM. Served by the backend under /ui, so the API is same-origin.
 */
import { ApiClient, ApiError } from "./api.js";
import {
  applyKey,
  canSubmit,
  CardState,
  newCard,
  removeCard,
  setEditBuffer,
  setRating,
  setVerdict,
  toPayload,
  Verdict,
} from "./state.js";
import { renderErrorBanner, renderQueue, renderStats } from "./render.js";

const api = new ApiClient("");
let cards: CardState[] = [];

function reviewerId(): string {
  const input = document.querySelector<HTMLInputElement>("#reviewer-id");
  return input?.value.trim() || "anonymous";
}

function queueRoot(): HTMLElement {
  return document.querySelector("#queue") as HTMLElement;
}

function statsRoot(): HTMLElement {
  return document.querySelector("#stats") as HTMLElement;
}

function paint(): void {
  queueRoot().innerHTML = renderQueue(cards);
}

async function refreshStats(): Promise<void> {
  try {
    statsRoot().innerHTML = renderStats(await api.reviewStats());
  } catch {
    // stats are advisory; the queue keeps working without them
  }
}

async function refreshQueue(): Promise<void> {
  try {
    const { items } = await api.fetchQueue(20);
    const open = new Map(cards.map((c) => [c.item.candidate_id, c]));
    cards = items.map((item) => open.get(item.candidate_id) ?? newCard(item));
    paint();
  } catch (err) {
    queueRoot().innerHTML = renderErrorBanner(
      err instanceof Error ? err.message : "service unreachable",
    );
  }
  void refreshStats();
}

function updateCard(candidateId: string, fn: (c: CardState) => CardState): void {
  cards = cards.map((c) => (c.item.candidate_id === candidateId ? fn(c) : c));
  paint();
}

async function submit(candidateId: string): Promise<void> {
  const card = cards.find((c) => c.item.candidate_id === candidateId);
  if (!card || !canSubmit(card)) return;
  const payload = toPayload(card);
  try {
    await api.postDecision(candidateId, {
      reviewerId: reviewerId(),
      verdict: payload.verdict,
      quality: payload.quality,
      relevance: payload.relevance,
      accuracy: payload.accuracy,
      editedText: payload.editedText,
    });
  } catch (err) {
    if (!(err instanceof ApiError && err.code === "ALREADY_DECIDED")) throw err;
    // someone else won; fall through and drop the card either way
  }
  cards = removeCard(cards, candidateId);
  paint();
  void refreshStats();
}

document.addEventListener("click", (event) => {
  const target = event.target as HTMLElement;
  if (target.dataset.action === "retry") void refreshQueue();
  const cardId = target.dataset.card;
  if (!cardId) return;
  if (target.dataset.verdict) {
    updateCard(cardId, (c) => setVerdict(c, target.dataset.verdict as Verdict));
  } else if (target.dataset.action === "submit") {
    void submit(cardId);
  }
});

document.addEventListener("input", (event) => {
  const target = event.target as HTMLElement;
  const cardId = target.dataset.card;
  if (!cardId) return;
  if (target instanceof HTMLTextAreaElement) {
    updateCard(cardId, (c) => setEditBuffer(c, target.value));
  } else if (target instanceof HTMLInputElement && target.dataset.rating) {
    updateCard(cardId, (c) =>
      setRating(c, target.dataset.rating as "quality" | "relevance" | "accuracy",
        Number(target.value)),
    );
  }
});

document.addEventListener("keydown", (event) => {
  const focused = (event.target as HTMLElement).closest?.(".card") as HTMLElement | null;
  if (!focused || event.target instanceof HTMLTextAreaElement) return;
  const candidateId = focused.dataset.candidate;
  if (!candidateId) return;
  const card = cards.find((c) => c.item.candidate_id === candidateId);
  if (!card) return;
  const result = applyKey(card, event.key);
  if (result.submit) {
    void submit(candidateId);
  } else if (result.card !== card) {
    updateCard(candidateId, () => result.card);
    event.preventDefault();
  }
});

void refreshQueue();
setInterval(() => void refreshQueue(), 5000);
