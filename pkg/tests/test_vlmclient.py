"""Prompt rendering, transport behavior, answer parsing, mock oracle."""

import json
from types import SimpleNamespace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import vap.vlmclient as vlm
from vap import (
    Blocked,
    ChatRequest,
    Frame,
    PromptTemplate,
    QAItem,
    RateLimited,
    TEMPLATES,
    TemplateArityMismatch,
    TransportError,
    Unauthorized,
    Unparseable,
    complete,
    mock_oracle,
    parse_answer,
    render_prompt,
)
from vap.errors import MissingPlaceholder
from vap.vlmclient import ImageSegment, TextSegment, request_hash


def make_item(n_options=5, answer=2, item_id="q1"):
    return QAItem(item_id=item_id, video_id="v0", question="what happened?",
                  options=tuple(f"option {i}" for i in range(n_options)),
                  answer=answer)


def make_frames(indices):
    out = []
    for i in indices:
        px = np.full((8, 8, 3), (i * 37) % 256, dtype=np.uint8)
        out.append(Frame(index=i, pixels=px, timestamp_s=float(i)))
    return out


class FakeResponse:
    def __init__(self, status_code, payload=None, text=""):
        self.status_code = status_code
        self._payload = payload
        self.text = text

    def json(self):
        if self._payload is None:
            raise ValueError("not json")
        return self._payload


def ok_payload(text, finish="stop"):
    return {"choices": [{"finish_reason": finish,
                         "message": {"content": text}}]}


class TestTemplates:
    def test_catalog(self):
        expected = {"egoschema", "nextqa_video", "nextqa_frames", "anet_word",
                    "clevrer_mcq", "clevrer_binary", "generation_conditioning"}
        assert set(TEMPLATES) == expected

    def test_bodies_have_core_placeholders(self):
        for t in TEMPLATES.values():
            assert "{video}" in t.body, t.template_id
            assert "{question}" in t.body, t.template_id


class TestRenderPrompt:
    def test_images_inserted_in_index_order(self):
        frames = make_frames([5, 1, 3])
        req = render_prompt(TEMPLATES["egoschema"], make_item(), frames)
        images = [s for s in req.segments if isinstance(s, ImageSegment)]
        assert len(images) == 3
        expected = [vlm._frame_png(f) for f in sorted(frames, key=lambda f: f.index)]
        assert [s.png for s in images] == expected

    def test_text_surrounds_images(self):
        req = render_prompt(TEMPLATES["egoschema"], make_item(), make_frames([0]))
        assert isinstance(req.segments[0], TextSegment)
        assert isinstance(req.segments[1], ImageSegment)
        assert isinstance(req.segments[2], TextSegment)
        tail = req.segments[2].text
        assert "what happened?" in tail
        assert "(3) option 3" in tail

    def test_video_first_template_starts_with_image(self):
        item = make_item(n_options=0, answer="yes")
        req = render_prompt(TEMPLATES["anet_word"], item, make_frames([0, 1]))
        assert isinstance(req.segments[0], ImageSegment)
        assert isinstance(req.segments[-1], TextSegment)

    def test_variable_options_block(self):
        item = QAItem(item_id="c1", video_id="v", question="which collide?",
                      options=("a", "b", "c"), answer=frozenset({0, 2}))
        req = render_prompt(TEMPLATES["clevrer_mcq"], item, make_frames([0]))
        tail = next(s.text for s in req.segments[::-1]
                    if isinstance(s, TextSegment))
        assert "(0) a" in tail and "(2) c" in tail

    def test_fixed_slot_arity_enforced(self):
        with pytest.raises(TemplateArityMismatch):
            render_prompt(TEMPLATES["egoschema"], make_item(n_options=3),
                          make_frames([0]))

    def test_variable_template_needs_options(self):
        item = make_item(n_options=0, answer="yes")
        with pytest.raises(TemplateArityMismatch):
            render_prompt(TEMPLATES["clevrer_mcq"], item, make_frames([0]))

    def test_custom_template_missing_video(self):
        t = PromptTemplate("broken", "Question: {question}", 0, "word")
        with pytest.raises(MissingPlaceholder):
            render_prompt(t, make_item(n_options=0, answer="x"), make_frames([0]))


class TestRequestHash:
    def test_stable_for_equal_content(self):
        a = render_prompt(TEMPLATES["egoschema"], make_item(), make_frames([0, 1]))
        b = render_prompt(TEMPLATES["egoschema"], make_item(), make_frames([0, 1]))
        assert request_hash(a) == request_hash(b)
        assert len(request_hash(a)) == 64

    def test_sensitive_to_text_images_and_model(self):
        base = render_prompt(TEMPLATES["egoschema"], make_item(), make_frames([0]))
        other_q = render_prompt(
            TEMPLATES["egoschema"],
            QAItem("q1", "v0", "did it fall?", make_item().options, 2),
            make_frames([0]))
        other_img = render_prompt(TEMPLATES["egoschema"], make_item(),
                                  make_frames([1]))
        other_model = ChatRequest(segments=base.segments, model_id="m2")
        hashes = {request_hash(base), request_hash(other_q),
                  request_hash(other_img), request_hash(other_model)}
        assert len(hashes) == 4


class TestComplete:
    def make_req(self):
        return render_prompt(TEMPLATES["egoschema"], make_item(), make_frames([0]))

    def test_fixture_replay_without_network(self, tmp_path):
        req = self.make_req()
        fixture = tmp_path / f"{request_hash(req)}.json"
        fixture.write_text(json.dumps({"text": "Final Answer: (2)"}))
        out = complete(req, endpoint=None, fixtures_dir=tmp_path)
        assert out == "Final Answer: (2)"

    def test_no_endpoint_no_fixture(self, tmp_path):
        with pytest.raises(TransportError):
            complete(self.make_req(), endpoint=None, fixtures_dir=tmp_path)

    def test_live_response_recorded_then_replayed(self, tmp_path, monkeypatch):
        calls = []

        def fake_post(url, json=None, headers=None, timeout=None):
            calls.append(url)
            return FakeResponse(200, ok_payload("Final Answer: (1)"))

        monkeypatch.setattr(vlm.requests, "post", fake_post)
        req = self.make_req()
        out = complete(req, endpoint="http://llm", auth="sekret",
                       fixtures_dir=tmp_path)
        assert out == "Final Answer: (1)"
        assert len(calls) == 1
        # second call replays the recording, no network
        monkeypatch.setattr(vlm.requests, "post",
                            lambda *a, **k: pytest.fail("network touched"))
        assert complete(req, endpoint="http://llm",
                        fixtures_dir=tmp_path) == "Final Answer: (1)"

    def test_record_false_leaves_no_fixture(self, tmp_path, monkeypatch):
        monkeypatch.setattr(vlm.requests, "post",
                            lambda *a, **k: FakeResponse(200, ok_payload("x")))
        complete(self.make_req(), endpoint="http://llm",
                 fixtures_dir=tmp_path, record=False)
        assert list(tmp_path.iterdir()) == []

    def test_auth_header(self, monkeypatch):
        seen = {}

        def fake_post(url, json=None, headers=None, timeout=None):
            seen.update(headers)
            return FakeResponse(200, ok_payload("ok"))

        monkeypatch.setattr(vlm.requests, "post", fake_post)
        complete(self.make_req(), endpoint="http://llm", auth="tok123")
        assert seen["Authorization"] == "Bearer tok123"

    def test_429_then_200_retries(self, monkeypatch):
        responses = [FakeResponse(429), FakeResponse(200, ok_payload("fine"))]
        monkeypatch.setattr(vlm.requests, "post",
                            lambda *a, **k: responses.pop(0))
        out = complete(self.make_req(), endpoint="http://llm", backoff_s=0.0)
        assert out == "fine"
        assert not responses

    def test_persistent_429_raises_rate_limited(self, monkeypatch):
        monkeypatch.setattr(vlm.requests, "post",
                            lambda *a, **k: FakeResponse(429))
        with pytest.raises(RateLimited):
            complete(self.make_req(), endpoint="http://llm",
                     max_retries=2, backoff_s=0.0)

    def test_500_then_200_retries(self, monkeypatch):
        responses = [FakeResponse(503), FakeResponse(200, ok_payload("ok"))]
        monkeypatch.setattr(vlm.requests, "post",
                            lambda *a, **k: responses.pop(0))
        assert complete(self.make_req(), endpoint="http://llm",
                        backoff_s=0.0) == "ok"

    def test_401_is_immediate(self, monkeypatch):
        calls = []

        def fake_post(*a, **k):
            calls.append(1)
            return FakeResponse(401)

        monkeypatch.setattr(vlm.requests, "post", fake_post)
        with pytest.raises(Unauthorized):
            complete(self.make_req(), endpoint="http://llm", backoff_s=0.0)
        assert len(calls) == 1

    def test_content_filter_returns_blocked(self, monkeypatch):
        monkeypatch.setattr(
            vlm.requests, "post",
            lambda *a, **k: FakeResponse(
                200, ok_payload(None, finish="content_filter")))
        out = complete(self.make_req(), endpoint="http://llm")
        assert isinstance(out, Blocked)
        assert out.reason == "content_filter"

    def test_empty_content_returns_blocked(self, monkeypatch):
        monkeypatch.setattr(vlm.requests, "post",
                            lambda *a, **k: FakeResponse(200, ok_payload("")))
        out = complete(self.make_req(), endpoint="http://llm")
        assert isinstance(out, Blocked)
        assert out.reason == "empty"

    def test_malformed_payload(self, monkeypatch):
        monkeypatch.setattr(vlm.requests, "post",
                            lambda *a, **k: FakeResponse(200, {"nope": 1}))
        with pytest.raises(TransportError):
            complete(self.make_req(), endpoint="http://llm")


class TestParseAnswer:
    def test_egoschema_parenthesized_digit(self):
        assert parse_answer("Final Answer: (3)", "egoschema").choice == 3

    def test_egoschema_last_marker_wins(self):
        text = "Maybe Final Answer: (1). On reflection, Final Answer: (2)"
        assert parse_answer(text, "egoschema").choice == 2

    def test_egoschema_case_and_colon_flexible(self):
        assert parse_answer("final answer 4", "egoschema").choice == 4

    def test_egoschema_garbage(self):
        with pytest.raises(Unparseable):
            parse_answer("I am not sure about this video.", "egoschema")

    def test_egoschema_out_of_range_digit(self):
        with pytest.raises(Unparseable):
            parse_answer("Final Answer: (7)", "egoschema")

    def test_nextqa_first_standalone_digit(self):
        assert parse_answer("2", "nextqa").choice == 2
        assert parse_answer("The answer is 3.", "nextqa").choice == 3

    def test_nextqa_ignores_multidigit_numbers(self):
        with pytest.raises(Unparseable):
            parse_answer("I counted 10 objects", "nextqa")

    def test_clevrer_comma_list(self):
        parsed = parse_answer("Final Answer: 0, 2", "clevrer_mcq")
        assert parsed.kind == "multi_choice"
        assert parsed.choices == frozenset({0, 2})

    def test_clevrer_empty_list_is_explicit_no_answer(self):
        parsed = parse_answer("Final Answer:", "clevrer_mcq")
        assert parsed.choices == frozenset()

    def test_clevrer_only_first_line_counts(self):
        parsed = parse_answer("Final Answer: 1, 2\nbut maybe 3", "clevrer_mcq")
        assert parsed.choices == frozenset({1, 2})

    def test_clevrer_needs_marker(self):
        with pytest.raises(Unparseable):
            parse_answer("0, 2", "clevrer_mcq")

    def test_word_simple(self):
        assert parse_answer("yes", "word").word == "yes"

    def test_word_two_word_cap_and_casefold(self):
        assert parse_answer("Red car, definitely.", "word").word == "red car"

    def test_word_empty_is_unparseable(self):
        with pytest.raises(Unparseable):
            parse_answer("", "word")

    def test_unknown_protocol(self):
        with pytest.raises(Unparseable):
            parse_answer("anything", "not_a_protocol")


class TestMockOracle:
    def windows(self, *pairs):
        return [SimpleNamespace(start=a, end=b) for a, b in pairs]

    def test_hit_inside_window_answers_correctly(self):
        item = make_item(answer=3)
        out = mock_oracle(item, [10], self.windows((8, 12)))
        assert parse_answer(out, "egoschema").choice == 3

    def test_window_end_is_exclusive(self):
        item = make_item(answer=3)
        out = mock_oracle(item, [12], self.windows((8, 12)))
        assert parse_answer(out, "egoschema").choice != 3

    def test_miss_is_deterministic_and_wrong(self):
        item = make_item(answer=2)
        outs = {mock_oracle(item, [0], self.windows((8, 12))) for _ in range(5)}
        assert len(outs) == 1
        assert parse_answer(outs.pop(), "egoschema").choice != 2

    def test_miss_varies_by_item_id(self):
        choices = {
            parse_answer(
                mock_oracle(make_item(answer=2, item_id=f"q{i}"), [0],
                            self.windows((8, 12))),
                "egoschema").choice
            for i in range(30)
        }
        assert len(choices) > 1
        assert 2 not in choices

    def test_single_option_item_stays_total(self):
        item = QAItem("solo", "v", "?", ("only",), 0)
        out = mock_oracle(item, [0], self.windows((8, 12)))
        assert parse_answer(out, "egoschema").choice == 0

    def test_accepts_annotation_like_truth(self):
        truth = SimpleNamespace(windows=self.windows((2, 4)))
        item = make_item(answer=1)
        out = mock_oracle(item, [3], truth)
        assert parse_answer(out, "egoschema").choice == 1

    @given(st.integers(0, 4), st.text("abcdef0123456789", min_size=1,
                                      max_size=12))
    @settings(max_examples=60)
    def test_output_always_parseable(self, answer, item_id):
        item = make_item(answer=answer, item_id=item_id)
        out = mock_oracle(item, [0], self.windows((50, 60)))
        parsed = parse_answer(out, "egoschema")
        assert 0 <= parsed.choice <= 4
