import pytest

from outreachlab.domain import CampaignSpec, Channel, SequenceStep, UsageRecord, VariantArm

DAY = 86400


class EchoDrafter:
    """Deterministic drafter returning a fixed or derived body, for tests."""

    def __init__(self, text=None):
        self.text = text
        self.calls = []

    def complete_chat(self, backend_name, messages, *, purpose, lead_id, now):
        self.calls.append({"backend": backend_name, "messages": messages,
                           "purpose": purpose, "lead_id": lead_id, "now": now})
        body = self.text if self.text is not None else messages[-1]["content"]
        usage = UsageRecord(prompt_tokens=sum(len(m["content"]) for m in messages) // 4,
                            completion_tokens=len(body) // 4,
                            backend_name=backend_name, timestamp=now,
                            purpose=purpose, lead_id=lead_id)
        return body, usage


class FailingDrafter:
    """Fails the first `failures` calls, then delegates to EchoDrafter."""

    def __init__(self, failures, text="ok"):
        self.failures = failures
        self.inner = EchoDrafter(text)
        self.attempts = 0

    def complete_chat(self, backend_name, messages, **kwargs):
        self.attempts += 1
        if self.attempts <= self.failures:
            from outreachlab.gateway import GatewayError
            raise GatewayError("BACKEND_ERROR", "injected failure")
        return self.inner.complete_chat(backend_name, messages, **kwargs)


def make_spec(delays=(0, 3 * DAY, 4 * DAY, 4 * DAY), arms=None, spec_id="camp-1"):
    """Canonical 4-step campaign shape used across the suite."""
    if arms is None:
        arms = (VariantArm("a", "backend-a", 0.5), VariantArm("b", "backend-b", 0.5))
    steps = tuple(
        SequenceStep(index=i,
                     channel=Channel.EMAIL if i % 2 == 0 else Channel.LINKEDIN,
                     delay_seconds=d, instructions=f"step {i} instructions")
        for i, d in enumerate(delays)
    )
    return CampaignSpec(
        id=spec_id, name="desk campaign", value_proposition="saves time",
        pain_points=("slow pipelines",), research_goals=("recent funding",),
        outreach_instructions="be concise and specific",
        steps=steps, variant_arms=tuple(arms),
    )


@pytest.fixture
def spec():
    return make_spec()


@pytest.fixture
def one_arm_spec():
    return make_spec(arms=(VariantArm("solo", "backend-a", 1.0),))


@pytest.fixture
def drafter():
    return EchoDrafter("drafted body")
