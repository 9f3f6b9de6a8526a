/**
 * Typed client for the campaign + curation REST API.
 *
 * Every response is validated with zod before it reaches view code, so the
 * UI can never silently render a shape the service did not send.
 */
import { z } from "zod";

export const QueueItem = z.object({
  candidate_id: z.string(),
  job_id: z.string(),
  teacher_backend: z.string(),
  context: z.record(z.unknown()),
  text: z.string(),
});
export type QueueItem = z.infer<typeof QueueItem>;

export const QueueResponse = z.object({ items: z.array(QueueItem) });

export const Decision = z.object({
  reviewer_id: z.string(),
  verdict: z.enum(["accept", "accept_with_edit", "reject"]),
  quality: z.number().int().min(1).max(5),
  relevance: z.number().int().min(1).max(5),
  accuracy: z.number().int().min(1).max(5),
  decided_at: z.number(),
  version: z.number().int(),
  edited_text: z.string().nullable(),
});
export type Decision = z.infer<typeof Decision>;

export const ReviewStats = z.object({
  pending_review: z.number().int(),
  decided: z.number().int(),
  per_reviewer: z.record(z.number().int()),
  mean_quality: z.number().nullable(),
  mean_relevance: z.number().nullable(),
  mean_accuracy: z.number().nullable(),
});
export type ReviewStats = z.infer<typeof ReviewStats>;

export const GoldMeta = z.object({
  teacher_backend: z.string(),
  reviewer_id: z.string(),
  job_id: z.string(),
  decided_at: z.string().regex(/Z$/, "decided_at must be RFC 3339 UTC"),
});

export const GoldPair = z.object({
  instruction: z.string(),
  input: z.string(),
  output: z.string(),
  meta: GoldMeta,
});
export type GoldPair = z.infer<typeof GoldPair>;

export const MessageRecord = z.object({
  direction: z.enum(["outbound", "inbound"]),
  channel: z.enum(["email", "linkedin"]),
  body: z.string(),
  timestamp: z.number(),
  id: z.string(),
  step_index: z.number().nullable(),
  subject: z.string().nullable(),
  model_backend: z.string().nullable(),
  usage: z.record(z.unknown()).nullable(),
});
export type MessageRecord = z.infer<typeof MessageRecord>;

export const LeadState = z.object({
  lead: z.object({ id: z.string(), profile: z.record(z.string()), arm_id: z.string() }),
  cursor: z.union([z.number(), z.string()]),
  next_due: z.number().nullable(),
  memory: z.object({
    lead_id: z.string(),
    dossier: z.record(z.unknown()).nullable(),
    history: z.array(MessageRecord),
    inbound: z.array(MessageRecord),
  }),
}).passthrough();
export type LeadState = z.infer<typeof LeadState>;

export const TickResponse = z.object({ sent: z.array(MessageRecord) });
export const PauseResponse = z.object({ paused: z.array(z.string()) });

export const CampaignState = z.object({
  spec: z.record(z.unknown()),
  leads: z.record(z.unknown()),
  paused_arms: z.array(z.string()).optional(),
}).passthrough();

export interface DecisionInput {
  reviewerId: string;
  verdict: "accept" | "accept_with_edit" | "reject";
  quality: number;
  relevance: number;
  accuracy: number;
  editedText?: string;
  decidedAt?: number;
}

export class ApiError extends Error {
  constructor(
    public status: number,
    public code: string,
    message: string,
    public detail?: unknown,
  ) {
    super(message);
  }
}

async function parseFailure(resp: Response): Promise<ApiError> {
  let code = "HTTP_ERROR";
  let detail: unknown;
  let message = `${resp.status} ${resp.statusText}`;
  try {
    const body = await resp.json();
    detail = body.detail;
    if (body.detail && typeof body.detail === "object" && "code" in body.detail) {
      code = String(body.detail.code);
      message = String(body.detail.message ?? message);
    }
  } catch {
    // non-JSON error body; keep the HTTP status text
  }
  return new ApiError(resp.status, code, message, detail);
}

export class ApiClient {
  constructor(
    private baseUrl: string,
    private fetchImpl: typeof fetch = fetch,
  ) {}

  private async request(path: string, init?: RequestInit): Promise<Response> {
    const resp = await this.fetchImpl(`${this.baseUrl}${path}`, init);
    if (!resp.ok) throw await parseFailure(resp);
    return resp;
  }

  private async getJson<T>(path: string, schema: z.ZodType<T>): Promise<T> {
    const resp = await this.request(path);
    return schema.parse(await resp.json());
  }

  private async postJson<T>(path: string, body: unknown, schema: z.ZodType<T>): Promise<T> {
    const resp = await this.request(path, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(body),
    });
    return schema.parse(await resp.json());
  }

  fetchQueue(limit = 20): Promise<{ items: QueueItem[] }> {
    return this.getJson(`/v1/review/queue?limit=${limit}`, QueueResponse);
  }

  async postDecision(candidateId: string, input: DecisionInput): Promise<void> {
    await this.postJson(
      `/v1/review/${encodeURIComponent(candidateId)}/decision`,
      {
        reviewer_id: input.reviewerId,
        verdict: input.verdict,
        quality: input.quality,
        relevance: input.relevance,
        accuracy: input.accuracy,
        edited_text: input.editedText ?? null,
        decided_at: input.decidedAt ?? null,
        version: 1,
      },
      z.object({}).passthrough(),
    );
  }

  reviewStats(): Promise<ReviewStats> {
    return this.getJson("/v1/review/stats", ReviewStats);
  }

  async exportGold(): Promise<GoldPair[]> {
    const resp = await this.request("/v1/gold/export");
    const text = await resp.text();
    return text
      .split("\n")
      .filter((line) => line.trim().length > 0)
      .map((line) => GoldPair.parse(JSON.parse(line)));
  }

  enqueueJob(context: Record<string, unknown>, teacherBackend: string, n: number) {
    return this.postJson(
      "/v1/jobs",
      { context, teacher_backend: teacherBackend, n_candidates: n, now: 0 },
      z.object({ id: z.string(), candidate_ids: z.array(z.string()) }).passthrough(),
    );
  }

  createCampaign(spec: Record<string, unknown>, now = 0) {
    return this.postJson(
      "/v1/campaigns",
      { spec, now },
      z.object({ id: z.string() }).passthrough(),
    );
  }

  addLead(campaignId: string, lead: Record<string, unknown>, now = 0) {
    return this.postJson(
      `/v1/campaigns/${campaignId}/leads`,
      { lead, now },
      z.object({ lead_id: z.string() }).passthrough(),
    );
  }

  tick(campaignId: string, now: number) {
    return this.postJson(`/v1/campaigns/${campaignId}/tick`, { now }, TickResponse);
  }

  pauseArm(campaignId: string, armId: string) {
    return this.postJson(`/v1/campaigns/${campaignId}/arms/${armId}/pause`, {}, PauseResponse);
  }

  resumeArm(campaignId: string, armId: string) {
    return this.postJson(`/v1/campaigns/${campaignId}/arms/${armId}/resume`, {}, PauseResponse);
  }

  leadState(campaignId: string, leadId: string): Promise<LeadState> {
    return this.getJson(`/v1/campaigns/${campaignId}/leads/${leadId}`, LeadState);
  }

  campaignState(campaignId: string) {
    return this.getJson(`/v1/campaigns/${campaignId}/state`, CampaignState);
  }
}
