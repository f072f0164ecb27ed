import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from adnotate.detector import NgramTfidfVectorizer, SponsoredContentDetector
from adnotate.errors import (
    CredentialError,
    ExplanationUnavailableError,
    FormatError,
    TransportError,
)
from adnotate.explainer import (
    ChatCompletionClient,
    EndpointConfig,
    Explanation,
    ExplanationSource,
    ImpliedLabel,
    build_prompt,
    completion_cache_key,
    default_recipe,
    explain_post,
    load_explanations,
    load_recipe,
    local_explain,
    parse_explanation,
    save_recipe,
    serialize_explanation,
    strip_label_line,
    write_explanations,
)

from .httpfixture import FixtureEndpoint

# the explanation format the endpoint is instructed to produce
SAMPLE_RESPONSE = (
    "Key indicators: '@BRAND', 'LTK'.\n"
    "The post promotes a fashion brand and features a discount code,\n"
    "indicating a partnership. Additionally, it features a @shop.LTK\n"
    "link, a platform for paid partnerships.\n"
    "Likely sponsored"
)


def endpoint_config(base_url, **overrides):
    defaults = dict(
        base_url=base_url, model="test-model", backoff_base=0.001, timeout=5.0
    )
    defaults.update(overrides)
    return EndpointConfig(**defaults)


@pytest.fixture
def api_key(monkeypatch):
    monkeypatch.setenv("ADNOTATE_API_KEY", "test-key")


class TestBuildPrompt:
    def test_contains_instructions_examples_and_caption(self):
        recipe = default_recipe()
        prompt = build_prompt("new @brand drop, use code X", recipe)
        assert recipe.system_instructions in prompt
        assert recipe.few_shot_examples[0][0] in prompt
        assert recipe.positive_bias_clause in prompt
        assert prompt.rstrip().endswith("Caption: new @brand drop, use code X")

    def test_indicators_requested_before_label(self):
        instructions = default_recipe().system_instructions.lower()
        assert instructions.index("key indicator") < instructions.index("label")

    def test_zero_shot_variant_omits_example_block(self):
        recipe = default_recipe()
        zero_shot = type(recipe)(
            system_instructions=recipe.system_instructions,
            few_shot_examples=(),
            label_phrasings=recipe.label_phrasings,
            positive_bias_clause=recipe.positive_bias_clause,
        )
        prompt = build_prompt("x", zero_shot)
        assert recipe.few_shot_examples[0][0] not in prompt

    def test_identical_inputs_identical_bytes(self):
        recipe = default_recipe()
        assert build_prompt("same", recipe) == build_prompt("same", recipe)


class TestRecipe:
    def test_default_recipe_has_examples(self):
        assert len(default_recipe().few_shot_examples) >= 1

    def test_digest_changes_with_few_shot_edit(self):
        recipe = default_recipe()
        edited = type(recipe)(
            system_instructions=recipe.system_instructions,
            few_shot_examples=recipe.few_shot_examples[:-1] + (
                ("different caption", "Key indicators: none.\nDifferent.\nNot sponsored"),
            ),
            label_phrasings=recipe.label_phrasings,
            positive_bias_clause=recipe.positive_bias_clause,
        )
        assert recipe.digest() != edited.digest()

    def test_cache_key_injective_over_inputs(self):
        recipe = default_recipe()
        keys = {
            completion_cache_key("p1", recipe, "m1"),
            completion_cache_key("p2", recipe, "m1"),
            completion_cache_key("p1", recipe, "m2"),
        }
        assert len(keys) == 3

    def test_recipe_file_round_trip(self, tmp_path):
        recipe = default_recipe()
        path = tmp_path / "recipe.json"
        save_recipe(recipe, path)
        assert load_recipe(path) == recipe


class TestParseExplanation:
    def test_sample_explanation_block(self):
        explanation = parse_explanation(SAMPLE_RESPONSE, "p1")
        assert explanation.key_indicators == ("@BRAND", "LTK")
        assert explanation.implied_label is ImpliedLabel.LIKELY_SPONSORED
        assert explanation.source is ExplanationSource.REMOTE
        assert "discount code" in explanation.rationale

    def test_no_indicators_phrase(self):
        raw = "Key indicators: none.\nNothing promotional here.\nLikely not sponsored"
        explanation = parse_explanation(raw, "p2")
        assert explanation.key_indicators == ()
        assert explanation.implied_label is ImpliedLabel.LIKELY_NOT_SPONSORED

    def test_plain_label_phrasings(self):
        raw = "Key indicators: 'x'.\nBecause.\nSponsored"
        assert parse_explanation(raw, "p").implied_label is ImpliedLabel.SPONSORED
        raw = "Key indicators: 'x'.\nBecause.\nNot sponsored."
        assert parse_explanation(raw, "p").implied_label is ImpliedLabel.NON_SPONSORED

    def test_label_match_is_case_insensitive(self):
        raw = "Key indicators: none.\nWhy not.\nLIKELY SPONSORED"
        assert parse_explanation(raw, "p").implied_label is ImpliedLabel.LIKELY_SPONSORED

    def test_garbage_raises_format_error(self):
        with pytest.raises(FormatError):
            parse_explanation("complete nonsense with no structure", "p")

    def test_empty_raises_format_error(self):
        with pytest.raises(FormatError):
            parse_explanation("   \n ", "p")

    def test_missing_rationale_raises(self):
        with pytest.raises(FormatError):
            parse_explanation("Key indicators: 'x'.\nSponsored", "p")

    @settings(max_examples=120, deadline=None)
    @given(
        indicators=st.lists(
            st.text(alphabet="abc@LTK123 ", min_size=1, max_size=12).filter(
                lambda s: s.strip() == s and s
            ),
            max_size=4,
        ),
        rationale=st.text(alphabet="abcdefg ,.", min_size=1, max_size=60).filter(
            lambda s: s.strip()
        ),
        label=st.sampled_from(list(ImpliedLabel)),
    )
    def test_serialize_parse_round_trip(self, indicators, rationale, label):
        original = Explanation(
            post_id="p",
            key_indicators=tuple(indicators),
            rationale=rationale.strip(),
            implied_label=label,
            source=ExplanationSource.REMOTE,
        )
        parsed = parse_explanation(serialize_explanation(original), "p")
        assert parsed.key_indicators == original.key_indicators
        assert parsed.implied_label == original.implied_label
        assert parsed.rationale == original.rationale


class TestStripLabelLine:
    def test_removes_trailing_label(self):
        assert strip_label_line(SAMPLE_RESPONSE).rstrip().endswith("paid partnerships.")

    def test_keeps_text_without_label(self):
        text = "Key indicators: 'x'.\nReasoning text."
        assert strip_label_line(text) == text


class TestCompletionClient:
    def test_success_returns_content(self, api_key):
        with FixtureEndpoint([(200, SAMPLE_RESPONSE)]) as endpoint:
            client = ChatCompletionClient(endpoint_config(endpoint.base_url))
            assert client.complete("prompt") == SAMPLE_RESPONSE
            assert len(endpoint.requests) == 1
            assert endpoint.requests[0]["model"] == "test-model"

    def test_two_transient_failures_then_success(self, api_key):
        script = [(500, None), (503, None), (200, SAMPLE_RESPONSE)]
        with FixtureEndpoint(script) as endpoint:
            client = ChatCompletionClient(endpoint_config(endpoint.base_url))
            assert client.complete("prompt") == SAMPLE_RESPONSE
            assert len(endpoint.requests) == 3

    def test_retries_exhausted_raises_transport_error(self, api_key):
        with FixtureEndpoint([(500, None)]) as endpoint:
            client = ChatCompletionClient(
                endpoint_config(endpoint.base_url, max_retries=2)
            )
            with pytest.raises(TransportError):
                client.complete("prompt")
            assert len(endpoint.requests) == 3

    def test_invalid_credential_fails_without_retry(self, api_key):
        with FixtureEndpoint([(401, None)]) as endpoint:
            client = ChatCompletionClient(endpoint_config(endpoint.base_url))
            with pytest.raises(CredentialError):
                client.complete("prompt")
            assert len(endpoint.requests) == 1

    def test_missing_env_credential(self, monkeypatch):
        monkeypatch.delenv("ADNOTATE_API_KEY", raising=False)
        client = ChatCompletionClient(endpoint_config("http://127.0.0.1:9"))
        with pytest.raises(CredentialError):
            client.complete("prompt")

    def test_unreachable_endpoint_raises_transport_error(self, api_key):
        client = ChatCompletionClient(
            endpoint_config("http://127.0.0.1:9", max_retries=1)
        )
        with pytest.raises(TransportError):
            client.complete("prompt")

    def test_cache_hit_makes_no_network_call(self, api_key, tmp_path):
        with FixtureEndpoint([(200, SAMPLE_RESPONSE)]) as endpoint:
            client = ChatCompletionClient(
                endpoint_config(endpoint.base_url, cache_dir=tmp_path / "cache")
            )
            first = client.complete("prompt", cache_key="k1")
            second = client.complete("prompt", cache_key="k1")
            assert first == second == SAMPLE_RESPONSE
            assert len(endpoint.requests) == 1

    def test_cache_is_keyed(self, api_key, tmp_path):
        with FixtureEndpoint([(200, "A"), (200, "B")]) as endpoint:
            client = ChatCompletionClient(
                endpoint_config(endpoint.base_url, cache_dir=tmp_path / "cache")
            )
            assert client.complete("p1", cache_key="k1") == "A"
            assert client.complete("p2", cache_key="k2") == "B"
            assert client.complete("p1", cache_key="k1") == "A"
            assert len(endpoint.requests) == 2

    def test_token_bucket_paces_requests(self):
        import time

        from adnotate.explainer import _TokenBucket

        bucket = _TokenBucket(rate=100.0, capacity=1.0)
        bucket.acquire()
        started = time.monotonic()
        bucket.acquire()
        assert time.monotonic() - started >= 0.005


def hand_detector(weights, intercept=0.0, docs=None):
    """Detector with a hand-set weight vector over a tiny fitted vocabulary."""
    docs = docs or ["alpha beta gamma", "alpha beta gamma"]
    detector = SponsoredContentDetector(min_df=1, ngram_range=(1, 1))
    vectorizer = NgramTfidfVectorizer(min_df=1, ngram_range=(1, 1)).fit(docs)
    detector.vectorizer_ = vectorizer
    from adnotate.detector import LogisticRegressionGD

    logreg = LogisticRegressionGD()
    logreg.coef_ = np.asarray(weights, dtype=float)
    logreg.intercept_ = intercept
    logreg.classes_ = np.array([0, 1])
    detector.logreg_ = logreg
    return detector


class TestLocalExplain:
    def test_single_positive_token(self):
        detector = hand_detector([1.5], docs=["brandword", "brandword"])
        explanation = local_explain(detector, "brandword", post_id="p")
        assert explanation.key_indicators == ("brandword",)
        assert explanation.implied_label is ImpliedLabel.SPONSORED
        assert explanation.source is ExplanationSource.LOCAL_FALLBACK

    def test_zero_vector_uses_bias_sign(self):
        detector = hand_detector([1.0, 1.0, 1.0], intercept=-0.4)
        explanation = local_explain(detector, "nothing known here")
        assert explanation.key_indicators == ()
        assert explanation.implied_label is ImpliedLabel.NON_SPONSORED
        positive = hand_detector([1.0, 1.0, 1.0], intercept=0.4)
        assert local_explain(positive, "zzz").implied_label is ImpliedLabel.SPONSORED

    def test_hand_model_contribution_order(self):
        # |w * x| with equal features ranks f1 (2), f2 (-1), f3 (0.5)
        detector = hand_detector([2.0, -1.0, 0.5])
        explanation = local_explain(detector, "alpha beta gamma")
        assert explanation.key_indicators == ("alpha", "beta", "gamma")
        assert explanation.implied_label is ImpliedLabel.SPONSORED

    def test_k_limits_indicators(self):
        detector = hand_detector([2.0, -1.0, 0.5])
        explanation = local_explain(detector, "alpha beta gamma", k=2)
        assert explanation.key_indicators == ("alpha", "beta")

    def test_indicators_always_present_in_caption(self):
        rng = np.random.default_rng(2)
        words = ["alpha", "beta", "gamma", "delta", "promo", "code"]
        docs = [" ".join(rng.choice(words, size=5)) for _ in range(20)]
        labels = rng.integers(0, 2, size=20)
        labels[0], labels[1] = 0, 1
        detector = SponsoredContentDetector(min_df=1).fit(docs, labels)
        for caption in docs[:10]:
            explanation = local_explain(detector, caption)
            window = " ".join(f" {caption} ".split())
            for indicator in explanation.key_indicators:
                assert indicator in window

    def test_rationale_names_score(self):
        detector = hand_detector([2.0, -1.0, 0.5])
        explanation = local_explain(detector, "alpha beta gamma")
        assert explanation.rationale


class TestExplainPost:
    def test_healthy_endpoint_gives_remote(self, api_key, tmp_path):
        with FixtureEndpoint([(200, SAMPLE_RESPONSE)]) as endpoint:
            client = ChatCompletionClient(endpoint_config(endpoint.base_url))
            explanation = explain_post("p", "caption text", default_recipe(), client=client)
            assert explanation.source is ExplanationSource.REMOTE

    def test_dead_endpoint_with_model_falls_back(self, api_key):
        client = ChatCompletionClient(
            endpoint_config("http://127.0.0.1:9", max_retries=0)
        )
        detector = hand_detector([1.0], docs=["brandword", "brandword"])
        explanation = explain_post(
            "p", "brandword", default_recipe(), client=client, detector=detector
        )
        assert explanation.source is ExplanationSource.LOCAL_FALLBACK

    def test_unparseable_response_falls_back(self, api_key):
        with FixtureEndpoint([(200, "no structure at all")]) as endpoint:
            client = ChatCompletionClient(endpoint_config(endpoint.base_url))
            detector = hand_detector([1.0], docs=["brandword", "brandword"])
            explanation = explain_post(
                "p", "brandword", default_recipe(), client=client, detector=detector
            )
            assert explanation.source is ExplanationSource.LOCAL_FALLBACK

    def test_dead_endpoint_without_model_raises(self, api_key):
        client = ChatCompletionClient(
            endpoint_config("http://127.0.0.1:9", max_retries=0)
        )
        with pytest.raises(ExplanationUnavailableError):
            explain_post("p", "caption", default_recipe(), client=client)

    def test_nothing_configured_raises(self):
        with pytest.raises(ExplanationUnavailableError):
            explain_post("p", "caption", default_recipe())


class TestExplanationFiles:
    def test_round_trip(self, tmp_path):
        explanations = [
            Explanation("p1", ("a", "b"), "why", ImpliedLabel.LIKELY_SPONSORED,
                        ExplanationSource.REMOTE),
            Explanation("p2", (), "fallback", ImpliedLabel.NON_SPONSORED,
                        ExplanationSource.LOCAL_FALLBACK),
        ]
        path = tmp_path / "explanations.jsonl"
        write_explanations(explanations, path)
        assert load_explanations(path) == explanations
