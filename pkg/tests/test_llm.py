import json

import numpy as np
import pytest

from persona_synth.errors import (
    ConfigurationError,
    DistributionParseError,
    PromptError,
    TransportError,
)
from persona_synth.ingest import GroupedDistribution
from persona_synth.llm import (
    API_KEY_ENV,
    DEFAULT_TEMPLATES,
    LlmClient,
    PromptTemplate,
    canonical_request,
    default_template,
    parse_distribution,
    render_prompt,
    request_hash,
)
from persona_synth.respond import BackendConfig
from persona_synth.schema import Question

QUESTION = Question(
    id="walking",
    text="For everyday trips, I like to go on foot.",
    responses=("Completely Agree", "Rather Agree", "Partly Agree",
               "Rather Disagree", "Completely Disagree"),
    group_attribute="Age Group",
)

PERSONA = {
    "Age Group": "18--29",
    "Education Level": "High",
    "Main Activity": "Student",
    "Economic Status": "Low",
    "Household Type": "Young singles",
}

STATS = GroupedDistribution(
    question_id="walking",
    group_attribute="Age Group",
    groups=("18--29", "30--39"),
    responses=QUESTION.responses,
    shares=np.array([
        [0.35, 0.25, 0.20, 0.12, 0.08],
        [0.30, 0.26, 0.21, 0.14, 0.09],
    ]),
)

STATS_TINY = GroupedDistribution(
    question_id="q",
    group_attribute="Age Group",
    groups=("young", "old"),
    responses=("a", "b"),
    shares=np.array([[0.6, 0.4], [0.5, 0.5]]),
)


def llm_cfg(**kw):
    defaults = dict(kind="llm", tier="naive", model="test-model",
                    base_url="https://example.invalid")
    defaults.update(kw)
    return BackendConfig(**defaults)


class MockTransport:
    def __init__(self, replies=None, failures=0):
        self.replies = list(replies or [])
        self.failures = failures
        self.calls = 0

    def __call__(self, request):
        self.calls += 1
        if self.failures > 0:
            self.failures -= 1
            raise TransportError("mock failure")
        if self.replies:
            return self.replies.pop(0)
        return "Completely Agree: 60\nRather Agree: 25\nPartly Agree: 10\n" \
               "Rather Disagree: 4\nCompletely Disagree: 1"


class TestRenderPrompt:
    def test_naive_template_has_no_persona_or_stats_section(self):
        prompt = render_prompt(default_template("naive", persona_based=False), QUESTION)
        assert QUESTION.text in prompt
        for option in QUESTION.responses:
            assert option in prompt
        assert "18--29" not in prompt
        assert "Expected statistics" not in prompt

    def test_guided_persona_template_embeds_everything(self):
        prompt = render_prompt(
            default_template("guided", persona_based=True),
            QUESTION,
            persona=PERSONA,
            stats=STATS,
        )
        for label in PERSONA.values():
            assert label in prompt
        # every target percentage appears verbatim
        for share in STATS.shares.reshape(-1):
            assert f"{share * 100:.2f}%" in prompt

    def test_unknown_placeholder_raises(self):
        template = PromptTemplate(tier="naive", text="{question} {wat}")
        with pytest.raises(PromptError, match="wat"):
            render_prompt(template, QUESTION)

    def test_missing_persona_context_raises(self):
        template = default_template("naive", persona_based=True)
        with pytest.raises(PromptError, match="persona"):
            render_prompt(template, QUESTION)

    def test_missing_stats_context_raises(self):
        template = default_template("guided", persona_based=False)
        with pytest.raises(PromptError, match="statistics"):
            render_prompt(template, QUESTION, persona=PERSONA)

    def test_rendering_is_deterministic(self):
        template = default_template("guided", persona_based=True)
        a = render_prompt(template, QUESTION, persona=PERSONA, stats=STATS)
        b = render_prompt(template, QUESTION, persona=PERSONA, stats=STATS)
        assert a == b

    def test_every_tier_has_a_default_template(self):
        assert set(DEFAULT_TEMPLATES) == {
            "naive", "structured", "guided",
            "naive-persona", "structured-persona", "guided-persona",
        }


class TestComplete:
    def test_cache_hit_skips_transport(self, tmp_path):
        transport = MockTransport()
        client = LlmClient(llm_cfg(), transport=transport, cache_dir=tmp_path)
        first = client.complete("hello")
        assert transport.calls == 1
        second = client.complete("hello")
        assert transport.calls == 1  # zero additional network activity
        assert second.response_text == first.response_text
        assert second.request_hash == first.request_hash

    def test_cache_key_stable_across_client_instances(self, tmp_path):
        transport = MockTransport()
        client1 = LlmClient(llm_cfg(), transport=transport, cache_dir=tmp_path)
        exchange = client1.complete("hello")
        # a fresh client (new "process") reuses the same entry
        client2 = LlmClient(llm_cfg(), transport=transport, cache_dir=tmp_path)
        again = client2.complete("hello")
        assert transport.calls == 1
        assert again.request_hash == exchange.request_hash

    def test_decoding_parameters_change_the_cache_key(self):
        base = canonical_request(llm_cfg(), "hello")
        warmer = canonical_request(llm_cfg(temperature=0.9), "hello")
        assert request_hash(base) != request_hash(warmer)

    def test_retry_then_succeed_counts_retries(self, tmp_path):
        sleeps = []
        transport = MockTransport(failures=2)
        client = LlmClient(llm_cfg(), transport=transport, cache_dir=tmp_path,
                           sleep=sleeps.append)
        exchange = client.complete("hello")
        assert exchange.retries == 2
        assert transport.calls == 3
        assert sleeps == [0.5, 1.0]  # exponential backoff

    def test_exhausted_retries_raise_transport_error(self, tmp_path):
        transport = MockTransport(failures=10)
        client = LlmClient(llm_cfg(max_retries=2), transport=transport,
                           cache_dir=tmp_path, sleep=lambda s: None)
        with pytest.raises(TransportError, match="2 retries"):
            client.complete("hello")
        assert transport.calls == 3  # initial attempt + 2 retries

    def test_missing_credential_fails_before_any_network(self, tmp_path, monkeypatch):
        monkeypatch.delenv(API_KEY_ENV, raising=False)
        client = LlmClient(llm_cfg(), cache_dir=tmp_path)  # no transport injected
        with pytest.raises(ConfigurationError, match=API_KEY_ENV):
            client.complete("hello")

    def test_cached_entry_needs_no_credential(self, tmp_path, monkeypatch):
        transport = MockTransport()
        LlmClient(llm_cfg(), transport=transport, cache_dir=tmp_path).complete("hello")
        monkeypatch.delenv(API_KEY_ENV, raising=False)
        client = LlmClient(llm_cfg(), cache_dir=tmp_path)
        exchange = client.complete("hello")  # served from cache, no transport
        assert exchange.response_text

    def test_complete_many_dedupes_identical_prompts(self, tmp_path):
        transport = MockTransport(replies=["same"] * 10)
        client = LlmClient(llm_cfg(), transport=transport, cache_dir=tmp_path,
                           max_inflight=3)
        prompts = ["a", "b", "a", "a", "b"]
        exchanges = client.complete_many(prompts)
        assert transport.calls == 2  # one per unique prompt
        assert [e.prompt for e in exchanges] == prompts

    def test_guided_persona_run_makes_one_call_per_persona(self, tmp_path):
        # end to end through the profile generator: at most one network call
        # per unique (persona, question) pair, and none at all on a rerun
        from persona_synth.personas import enumerate_personas
        from persona_synth.respond import generate_profiles
        from persona_synth.schema import Attribute, AttributeSchema

        schema = AttributeSchema(
            attributes=(
                Attribute("Age Group", ("young", "old")),
                Attribute("Income", ("low", "high")),
            )
        )
        table = enumerate_personas(schema)
        question = Question(id="q", text="?", responses=("a", "b"),
                            group_attribute="Age Group")
        reply = "a: 60\nb: 40"
        transport = MockTransport(replies=[reply] * 50)
        cfg = llm_cfg(tier="guided")
        client = LlmClient(cfg, transport=transport, cache_dir=tmp_path)
        generate_profiles(table, question, cfg, client=client, stats=STATS_TINY)
        assert transport.calls == table.n
        generate_profiles(table, question, cfg, client=client, stats=STATS_TINY)
        assert transport.calls == table.n  # rerun fully served from cache

    def test_exchange_persisted_as_json(self, tmp_path):
        transport = MockTransport()
        client = LlmClient(llm_cfg(), transport=transport, cache_dir=tmp_path)
        exchange = client.complete("hello")
        doc = json.loads(client.cache.path_for(exchange.request_hash).read_text())
        assert doc["prompt"] == "hello"
        assert doc["model"] == "test-model"
        assert doc["parse_status"] == "unparsed"
        client.record_parse_status(exchange, "ok")
        doc = json.loads(client.cache.path_for(exchange.request_hash).read_text())
        assert doc["parse_status"] == "ok"


class TestParseDistribution:
    def test_percent_lines(self):
        raw = ("Completely Agree: 60\nRather Agree: 25\nPartly Agree: 10\n"
               "Rather Disagree: 4\nCompletely Disagree: 1")
        np.testing.assert_allclose(
            parse_distribution(raw, QUESTION), [0.60, 0.25, 0.10, 0.04, 0.01]
        )

    def test_json_payload_with_percent_signs(self):
        raw = json.dumps({
            "Completely Agree": "60%", "Rather Agree": "25%", "Partly Agree": "10%",
            "Rather Disagree": "4%", "Completely Disagree": "1%",
        })
        np.testing.assert_allclose(
            parse_distribution(raw, QUESTION), [0.60, 0.25, 0.10, 0.04, 0.01]
        )

    def test_fenced_json_fractions(self):
        raw = ("```json\n" + json.dumps({
            "Completely Agree": 0.6, "Rather Agree": 0.25, "Partly Agree": 0.1,
            "Rather Disagree": 0.04, "Completely Disagree": 0.01,
        }) + "\n```")
        np.testing.assert_allclose(
            parse_distribution(raw, QUESTION), [0.60, 0.25, 0.10, 0.04, 0.01]
        )

    def test_near_unit_total_renormalized(self):
        raw = ("Completely Agree: 59.5\nRather Agree: 25\nPartly Agree: 10\n"
               "Rather Disagree: 4\nCompletely Disagree: 1")
        parsed = parse_distribution(raw, QUESTION)  # totals 99.5%
        assert parsed.sum() == pytest.approx(1.0, abs=1e-12)
        np.testing.assert_allclose(parsed, np.array([59.5, 25, 10, 4, 1]) / 99.5)

    def test_out_of_band_total_rejected(self):
        raw = ("Completely Agree: 50\nRather Agree: 25\nPartly Agree: 10\n"
               "Rather Disagree: 4\nCompletely Disagree: 1")
        with pytest.raises(DistributionParseError, match="outside"):
            parse_distribution(raw, QUESTION)

    def test_missing_option_rejected(self):
        raw = ("Completely Agree: 60\nRather Agree: 25\nPartly Agree: 10\n"
               "Rather Disagree: 5")
        with pytest.raises(DistributionParseError) as err:
            parse_distribution(raw, QUESTION)
        assert err.value.raw == raw

    def test_negative_share_rejected(self):
        raw = json.dumps({
            "Completely Agree": 105, "Rather Agree": -5, "Partly Agree": 0,
            "Rather Disagree": 0, "Completely Disagree": 0,
        })
        with pytest.raises(DistributionParseError, match="negative"):
            parse_distribution(raw, QUESTION)

    def test_parse_never_returns_invalid_distribution(self):
        # fuzz: output is either a valid probability vector or an error
        rng = np.random.default_rng(29)
        for _ in range(200):
            shares = rng.random(5) * rng.choice([1.0, 50.0])
            raw = "\n".join(
                f"{opt}: {val:.3f}" for opt, val in zip(QUESTION.responses, shares)
            )
            try:
                parsed = parse_distribution(raw, QUESTION)
            except DistributionParseError:
                continue
            assert np.all(parsed >= 0)
            assert parsed.sum() == pytest.approx(1.0, abs=1e-9)
