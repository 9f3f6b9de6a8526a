import random

import pytest

from outreachlab.domain import (
    EngagementEvent,
    EventKind,
    Lead,
    Direction,
)
from outreachlab.engine import (
    DONE,
    FAILED,
    PAUSED_FOR_REPLY,
    RETRY_BASE_SECONDS,
    CampaignEngine,
    EngineError,
)
from conftest import EchoDrafter, FailingDrafter, make_spec, DAY


def lead(i, arm="a"):
    return Lead(id=f"l{i}", profile={"name": f"Lead {i}"}, arm_id=arm)


class TestCreateCampaign:
    def test_valid_spec_creates_with_initial_draft_per_arm(self, spec, drafter):
        engine = CampaignEngine.create(spec, drafter, now=0.0)
        assert engine.leads == {}
        assert len(engine.initial_drafts) == 2
        assert all(d.status == "stored" for d in engine.initial_drafts)

    def test_invalid_spec_rejected(self, drafter):
        with pytest.raises(EngineError) as exc:
            CampaignEngine.create(make_spec(delays=()), drafter, now=0.0)
        assert exc.value.code == "EMPTY_SEQUENCE"

    def test_mock_draft_body_stored_verbatim(self, spec):
        engine = CampaignEngine.create(spec, EchoDrafter("fixed text"), now=0.0)
        assert [d.body for d in engine.initial_drafts] == ["fixed text", "fixed text"]

    def test_gateway_failure_leaves_draft_pending(self, spec):
        engine = CampaignEngine.create(spec, FailingDrafter(failures=99), now=0.0)
        assert [d.status for d in engine.initial_drafts] == ["pending", "pending"]


class TestAddLead:
    def test_step_zero_delay_zero(self, drafter):
        engine = CampaignEngine.create(make_spec(delays=(0, DAY)), drafter, now=0.0)
        action = engine.add_lead(lead(1), now=0.0)
        assert action.due == 0.0

    def test_step_zero_delay_one_day(self, drafter):
        engine = CampaignEngine.create(make_spec(delays=(DAY, DAY)), drafter, now=0.0)
        action = engine.add_lead(lead(1), now=0.0)
        assert action.due == DAY

    def test_duplicate_lead(self, spec, drafter):
        engine = CampaignEngine.create(spec, drafter, now=0.0)
        engine.add_lead(lead(1), now=0.0)
        with pytest.raises(EngineError) as exc:
            engine.add_lead(lead(1), now=1.0)
        assert exc.value.code == "DUPLICATE_LEAD"

    def test_researcher_dossier_stored(self, spec, drafter):
        from outreachlab.domain import ResearchDossier

        def researcher(l, goals, now):
            return ResearchDossier(lead_id=l.id, summary="dossier!", sources=(),
                                   model_backend="backend-a")

        engine = CampaignEngine.create(spec, drafter, now=0.0, researcher=researcher)
        engine.add_lead(lead(1), now=0.0)
        assert engine.leads["l1"].memory.dossier.summary == "dossier!"


class TestTick:
    def test_never_sends_before_due(self, drafter):
        engine = CampaignEngine.create(make_spec(delays=(0, 2 * DAY)), drafter, now=0.0)
        engine.add_lead(lead(1), now=0.0)
        sent = engine.tick(DAY)
        assert [m.step_index for m in sent] == [0]
        assert engine.leads["l1"].cursor == 1

    def test_two_ticks_send_both_steps_in_order(self, drafter):
        engine = CampaignEngine.create(make_spec(delays=(0, 2 * DAY)), drafter, now=0.0)
        engine.add_lead(lead(1), now=0.0)
        engine.tick(0.0)
        engine.tick(2 * DAY)
        history = engine.leads["l1"].memory.history
        assert [m.step_index for m in history] == [0, 1]
        assert history[0].timestamp <= history[1].timestamp
        assert engine.leads["l1"].cursor == DONE

    def test_all_done_tick_is_noop(self, drafter):
        engine = CampaignEngine.create(make_spec(delays=(0,)), drafter, now=0.0)
        engine.add_lead(lead(1), now=0.0)
        engine.tick(0.0)
        assert engine.tick(DAY) == []

    def test_prompt_contains_spec_and_step_instructions(self, spec):
        drafter = EchoDrafter("body")
        engine = CampaignEngine.create(spec, drafter, now=0.0)
        engine.add_lead(lead(1), now=0.0)
        drafter.calls.clear()
        engine.tick(0.0)
        system = drafter.calls[0]["messages"][0]["content"]
        assert "be concise and specific" in system
        assert "step 0 instructions" in system

    def test_gateway_failure_schedules_backoff_then_failed(self, spec):
        failing = FailingDrafter(failures=99)
        engine = CampaignEngine.create(make_spec(delays=(0, DAY)), failing, now=0.0)
        engine.add_lead(lead(1), now=0.0)
        t = 0.0
        for attempt in range(5):
            engine.tick(t)
            state = engine.leads["l1"]
            if state.cursor == FAILED:
                break
            assert state.next_due == pytest.approx(t + RETRY_BASE_SECONDS * 2**attempt)
            t = state.next_due
        assert engine.leads["l1"].cursor == FAILED
        assert engine.leads["l1"].memory.history == []

    def test_recovery_after_transient_failure(self):
        failing = FailingDrafter(failures=2)
        engine = CampaignEngine.create(make_spec(delays=(0,)), failing, now=0.0)
        engine.add_lead(lead(1), now=0.0)
        engine.tick(0.0)
        engine.tick(engine.leads["l1"].next_due)
        engine.tick(engine.leads["l1"].next_due)
        assert engine.leads["l1"].cursor == DONE
        assert len(engine.leads["l1"].memory.history) == 1


def deliver_and(engine, lead_id, msg_id, kind, t):
    engine.ingest_event(EngagementEvent(lead_id, EventKind.DELIVERED, t, msg_id))
    if kind is not EventKind.DELIVERED:
        engine.ingest_event(EngagementEvent(lead_id, kind, t, msg_id))


class TestIngestEvent:
    def test_reply_pauses_sequence(self, drafter):
        engine = CampaignEngine.create(make_spec(delays=(0, 2 * DAY)), drafter, now=0.0)
        engine.add_lead(lead(1), now=0.0)
        (msg,) = engine.tick(0.0)
        deliver_and(engine, "l1", msg.id, EventKind.REPLY, 100.0)
        state = engine.leads["l1"]
        assert state.cursor == PAUSED_FOR_REPLY
        assert state.next_due is None
        assert engine.tick(5 * DAY) == []  # pending step cancelled

    def test_unsubscribe_stops_all_sends(self, drafter):
        engine = CampaignEngine.create(make_spec(delays=(0, DAY, DAY)), drafter, now=0.0)
        engine.add_lead(lead(1), now=0.0)
        (msg,) = engine.tick(0.0)
        deliver_and(engine, "l1", msg.id, EventKind.UNSUBSCRIBE, 50.0)
        assert engine.leads["l1"].cursor == DONE
        for i in range(10):
            assert engine.tick((i + 1) * DAY) == []

    def test_duplicate_open_is_idempotent(self, drafter):
        engine = CampaignEngine.create(make_spec(delays=(0,)), drafter, now=0.0)
        engine.add_lead(lead(1), now=0.0)
        (msg,) = engine.tick(0.0)
        deliver_and(engine, "l1", msg.id, EventKind.OPEN, 10.0)
        before = engine.snapshot()
        engine.ingest_event(EngagementEvent("l1", EventKind.OPEN, 10.0, msg.id))
        assert engine.snapshot() == before

    def test_unknown_lead_and_message(self, drafter):
        engine = CampaignEngine.create(make_spec(delays=(0,)), drafter, now=0.0)
        engine.add_lead(lead(1), now=0.0)
        with pytest.raises(EngineError):
            engine.ingest_event(EngagementEvent("ghost", EventKind.OPEN, 0.0, "x"))
        with pytest.raises(EngineError):
            engine.ingest_event(EngagementEvent("l1", EventKind.OPEN, 0.0, "no-such-msg"))

    def test_open_requires_prior_delivery(self, drafter):
        engine = CampaignEngine.create(make_spec(delays=(0,)), drafter, now=0.0)
        engine.add_lead(lead(1), now=0.0)
        (msg,) = engine.tick(0.0)
        with pytest.raises(EngineError) as exc:
            engine.ingest_event(EngagementEvent("l1", EventKind.OPEN, 1.0, msg.id))
        assert exc.value.code == "NOT_DELIVERED"


class TestDraftReply:
    def test_reply_resumes_at_next_step(self, drafter):
        engine = CampaignEngine.create(make_spec(delays=(0, 2 * DAY)), drafter, now=0.0)
        engine.add_lead(lead(1), now=0.0)
        (msg,) = engine.tick(0.0)
        deliver_and(engine, "l1", msg.id, EventKind.REPLY, 100.0)
        engine.draft_reply("l1", now=200.0)
        state = engine.leads["l1"]
        assert state.cursor == 1
        assert state.next_due == 200.0 + 2 * DAY  # sequence clock restarts at reply time

    def test_reply_when_done_is_wrong_state(self, drafter):
        engine = CampaignEngine.create(make_spec(delays=(0,)), drafter, now=0.0)
        engine.add_lead(lead(1), now=0.0)
        engine.tick(0.0)
        with pytest.raises(EngineError) as exc:
            engine.draft_reply("l1", now=1.0)
        assert exc.value.code == "WRONG_STATE"

    def test_reply_prompt_contains_full_history_in_order(self):
        drafter = EchoDrafter()  # echoes, so each step body is distinct
        engine = CampaignEngine.create(make_spec(delays=(0, 10, 2 * DAY)), drafter, now=0.0)
        engine.add_lead(lead(1), now=0.0)
        engine.tick(0.0)
        engine.tick(10.0)
        (m0, m1) = engine.leads["l1"].memory.history
        deliver_and(engine, "l1", m0.id, EventKind.DELIVERED, 0.0)
        deliver_and(engine, "l1", m1.id, EventKind.REPLY, 100.0)
        drafter.calls.clear()
        engine.draft_reply("l1", now=150.0)
        contents = [m["content"] for m in drafter.calls[0]["messages"]]
        i0 = next(i for i, c in enumerate(contents) if c == m0.body)
        i1 = next(i for i, c in enumerate(contents) if c == m1.body)
        inbound = engine.leads["l1"].memory.inbound[0]
        i2 = next(i for i, c in enumerate(contents) if c == inbound.body)
        assert i0 < i1 < i2


class TestPauseArm:
    def test_paused_arm_skips_sends(self, spec, drafter):
        engine = CampaignEngine.create(spec, drafter, now=0.0)
        engine.add_lead(lead(1, arm="a"), now=0.0)
        engine.add_lead(lead(2, arm="b"), now=0.0)
        engine.pause_arm("a")
        sent = engine.tick(0.0)
        assert {m.id.split(":")[0] for m in sent} == {"l2"}
        engine.resume_arm("a")
        sent = engine.tick(0.0)
        assert {m.id.split(":")[0] for m in sent} == {"l1"}


def run_random_trace(seed, log_path=None):
    """Drive an engine with a random but reproducible event trace."""
    rng = random.Random(seed)
    delays = tuple(rng.choice([0, 3600, DAY, 2 * DAY]) for _ in range(rng.randint(1, 5)))
    delays = (rng.choice([0, 3600]),) + delays[1:]
    spec = make_spec(delays=delays, arms=(
        __import__("outreachlab.domain", fromlist=["VariantArm"]).VariantArm("a", "backend-a", 1.0),))
    drafter = EchoDrafter("body")
    engine = CampaignEngine.create(spec, drafter, now=0.0, log_path=log_path)
    n_leads = rng.randint(1, 4)
    for i in range(n_leads):
        engine.add_lead(lead(i, arm="a"), now=0.0)
    t = 0.0
    unsubscribed = set()
    for _ in range(rng.randint(3, 15)):
        t += rng.choice([0, 1800, 3600, DAY, 2 * DAY])
        action = rng.random()
        if action < 0.5:
            engine.tick(t)
        else:
            candidates = [(lid, m) for lid, s in engine.leads.items()
                          for m in s.memory.history]
            if not candidates:
                continue
            lid, msg = rng.choice(candidates)
            kind = rng.choice([EventKind.OPEN, EventKind.CLICK,
                               EventKind.REPLY, EventKind.UNSUBSCRIBE])
            engine.ingest_event(EngagementEvent(lid, EventKind.DELIVERED, t, msg.id))
            engine.ingest_event(EngagementEvent(lid, kind, t, msg.id))
            if kind is EventKind.UNSUBSCRIBE:
                unsubscribed.add((lid, t))
            if kind is EventKind.REPLY and engine.leads[lid].cursor == PAUSED_FOR_REPLY:
                engine.draft_reply(lid, now=t)
    engine.tick(t + 30 * DAY)
    return engine, unsubscribed


class TestSafetyProperties:
    def test_randomized_traces(self):
        for seed in range(200):
            engine, unsubscribed = run_random_trace(seed)
            for lid, state in engine.leads.items():
                step_msgs = [m for m in state.memory.history if m.step_index is not None]
                indices = [m.step_index for m in step_msgs]
                # strictly increasing step order
                assert indices == sorted(set(indices)), (seed, lid, indices)
                # no sends after unsubscribe
                for ulid, ut in unsubscribed:
                    if ulid == lid:
                        assert all(m.timestamp <= ut for m in state.memory.history), (seed, lid)

    def test_memory_completeness(self):
        for seed in range(50):
            engine, _ = run_random_trace(seed)
            for state in engine.leads.values():
                ids = [m.id for m in state.memory.all_messages()]
                assert len(ids) == len(set(ids))

    def test_determinism(self):
        for seed in range(30):
            a, _ = run_random_trace(seed)
            b, _ = run_random_trace(seed)
            assert a.snapshot() == b.snapshot()

    def test_replay_reconstructs_state(self, tmp_path):
        for seed in range(30):
            log = tmp_path / f"trace-{seed}.jsonl"
            engine, _ = run_random_trace(seed, log_path=str(log))
            replayed = CampaignEngine.replay(str(log))
            assert replayed.snapshot() == engine.snapshot()
