/**
 * Pure review-queue state machine. All the rules that decide whether a
 * decision may be submitted live here so they are testable without a DOM.
 */
import type { QueueItem } from "./api.js";

export type Verdict = "accept" | "accept_with_edit" | "reject";

export interface CardState {
  item: QueueItem;
  verdict: Verdict | null;
  editBuffer: string;
  quality: number;
  relevance: number;
  accuracy: number;
}

export function newCard(item: QueueItem): CardState {
  return {
    item,
    verdict: null,
    editBuffer: item.text,
    quality: 3,
    relevance: 3,
    accuracy: 3,
  };
}

export function setVerdict(card: CardState, verdict: Verdict): CardState {
  return { ...card, verdict };
}

export function setRating(
  card: CardState,
  which: "quality" | "relevance" | "accuracy",
  value: number,
): CardState {
  if (!Number.isInteger(value) || value < 1 || value > 5) return card;
  return { ...card, [which]: value };
}

export function setEditBuffer(card: CardState, text: string): CardState {
  return { ...card, editBuffer: text };
}

/** Submit stays disabled until a verdict is chosen; an edit verdict also
 * needs a non-empty buffer that actually differs from the candidate. */
export function canSubmit(card: CardState): boolean {
  if (card.verdict === null) return false;
  if (card.verdict === "accept_with_edit") {
    return card.editBuffer.trim().length > 0 && card.editBuffer !== card.item.text;
  }
  return true;
}

export interface DecisionPayload {
  verdict: Verdict;
  quality: number;
  relevance: number;
  accuracy: number;
  editedText?: string;
}

export function toPayload(card: CardState): DecisionPayload {
  if (!canSubmit(card)) throw new Error("decision is not submittable yet");
  const verdict = card.verdict as Verdict;
  return {
    verdict,
    quality: card.quality,
    relevance: card.relevance,
    accuracy: card.accuracy,
    ...(verdict === "accept_with_edit" ? { editedText: card.editBuffer } : {}),
  };
}

/** Keyboard-only review flow: one key per action on the focused card. */
export const KEY_BINDINGS: Record<string, { kind: "verdict"; verdict: Verdict } | { kind: "submit" }> = {
  a: { kind: "verdict", verdict: "accept" },
  e: { kind: "verdict", verdict: "accept_with_edit" },
  r: { kind: "verdict", verdict: "reject" },
  Enter: { kind: "submit" },
};

export function applyKey(card: CardState, key: string): { card: CardState; submit: boolean } {
  const binding = KEY_BINDINGS[key];
  if (!binding) return { card, submit: false };
  if (binding.kind === "verdict") return { card: setVerdict(card, binding.verdict), submit: false };
  return { card, submit: canSubmit(card) };
}

/** Drop a card after a local decision or a server-side ALREADY_DECIDED. */
export function removeCard(cards: CardState[], candidateId: string): CardState[] {
  return cards.filter((c) => c.item.candidate_id !== candidateId);
}
