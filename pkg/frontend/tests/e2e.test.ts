/**
 * End-to-end review loop against a live backend process. These tests spawn
 * the Python service on a random port and drive it through the same client
 * the browser code uses.
 */
import { spawn, ChildProcess } from "node:child_process";
import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { ApiClient } from "../src/api.js";
import { newCard, setEditBuffer, setVerdict, toPayload } from "../src/state.js";

const PORT = 8301 + Math.floor(Math.random() * 500);
const BASE = `http://127.0.0.1:${PORT}`;

let server: ChildProcess;
const client = new ApiClient(BASE);

async function waitForServer(timeoutMs = 20000): Promise<void> {
  const deadline = Date.now() + timeoutMs;
  while (Date.now() < deadline) {
    try {
      const resp = await fetch(`${BASE}/v1/review/stats`);
      if (resp.ok) return;
    } catch {
      // not up yet
    }
    await new Promise((r) => setTimeout(r, 200));
  }
  throw new Error("backend did not come up in time");
}

beforeAll(async () => {
  server = spawn("outreachlab", ["serve", "--port", String(PORT)], {
    stdio: "ignore",
  });
  await waitForServer();
}, 30000);

afterAll(() => {
  server?.kill("SIGTERM");
});

const CONTEXT = {
  value_proposition: "saves time",
  instructions: "be concise",
  pain_points: ["slow pipelines"],
  dossier: "Acme raised $12M in 2021.",
};

describe("scripted review session", () => {
  it("10 candidates with 3 edits and 2 rejects export exactly 8 gold pairs", async () => {
    const job = await client.enqueueJob(CONTEXT, "backend-a", 10);
    expect(job.candidate_ids).toHaveLength(10);

    const { items } = await client.fetchQueue(20);
    const mine = items.filter((i) => i.job_id === job.id);
    expect(mine).toHaveLength(10);

    // drive decisions through the same state machine the UI uses
    const editedTexts = ["hand edit one", "hand edit two", "hand edit three"];
    for (let i = 0; i < mine.length; i++) {
      let card = newCard(mine[i]!);
      if (i < 3) {
        card = setEditBuffer(setVerdict(card, "accept_with_edit"), editedTexts[i]!);
      } else if (i < 5) {
        card = setVerdict(card, "reject");
      } else {
        card = setVerdict(card, "accept");
      }
      const payload = toPayload(card);
      await client.postDecision(card.item.candidate_id, {
        reviewerId: "rev-e2e",
        verdict: payload.verdict,
        quality: payload.quality,
        relevance: payload.relevance,
        accuracy: payload.accuracy,
        editedText: payload.editedText,
        decidedAt: 1000 + i,
      });
    }

    const pairs = (await client.exportGold()).filter((p) => p.meta.job_id === job.id);
    expect(pairs).toHaveLength(8);
    const exportedOutputs = pairs.map((p) => p.output);
    for (const text of editedTexts) {
      expect(exportedOutputs).toContain(text);
    }
    // accepted candidates keep the teacher text untouched
    expect(exportedOutputs.filter((o) => !editedTexts.includes(o))).toHaveLength(5);

    // the stats endpoint counts decisions, rejects included
    const stats = await client.reviewStats();
    expect(stats.per_reviewer["rev-e2e"]).toBe(10);
  }, 30000);

  it("second decision on the same candidate gets the stored winner", async () => {
    const job = await client.enqueueJob(CONTEXT, "backend-a", 1);
    const cid = job.candidate_ids[0]!;
    const decide = (reviewer: string) =>
      client.postDecision(cid, {
        reviewerId: reviewer, verdict: "accept",
        quality: 4, relevance: 4, accuracy: 4,
      });
    await decide("rev-first");
    await expect(decide("rev-second")).rejects.toMatchObject({
      status: 409,
      code: "ALREADY_DECIDED",
    });
  });
});

const SPEC = {
  id: `camp-e2e-${PORT}`,
  name: "e2e campaign",
  value_proposition: "saves time",
  pain_points: ["slow pipelines"],
  research_goals: ["recent funding"],
  outreach_instructions: "be concise",
  steps: [
    { index: 0, channel: "email", delay_seconds: 0, instructions: "intro" },
    { index: 1, channel: "linkedin", delay_seconds: 86400, instructions: "follow up" },
  ],
  variant_arms: [{ arm_id: "a", backend_name: "backend-a", weight: 1.0 }],
};

describe("operator controls", () => {
  it("pause halts sends and resume continues from the stored cursor", async () => {
    const campaign = await client.createCampaign(SPEC, 0);
    await client.addLead(campaign.id, { id: "l1", profile: { name: "Ada" }, arm_id: "a" }, 0);

    await client.pauseArm(campaign.id, "a");
    const paused = await client.tick(campaign.id, 10);
    expect(paused.sent).toHaveLength(0);

    const resumed = await client.resumeArm(campaign.id, "a");
    expect(resumed.paused).toHaveLength(0);
    const after = await client.tick(campaign.id, 20);
    expect(after.sent).toHaveLength(1);
    expect(after.sent[0]!.step_index).toBe(0);

    const lead = await client.leadState(campaign.id, "l1");
    expect(lead.memory.history).toHaveLength(1);
    expect(lead.cursor).toBe(1);
  });
});
