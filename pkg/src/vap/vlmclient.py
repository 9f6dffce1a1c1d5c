"""Prompt templates, chat transport, answer parsing, and the mock oracle.

Requests are interleaved text/image segments. The transport speaks an
OpenAI-style chat completions dialect; a fixtures directory can record and
replay responses keyed by a request hash so evaluation runs offline.
"""

from __future__ import annotations

import base64
import hashlib
import io
import json
import logging
import random
import re
import time
from dataclasses import dataclass, field
from pathlib import Path

import requests

from .errors import (
    MissingPlaceholder,
    RateLimited,
    TemplateArityMismatch,
    TransportError,
    Unauthorized,
    Unparseable,
)

log = logging.getLogger("vap.vlmclient")

ENDPOINT_ENV = "VAP_VLM_ENDPOINT"
MODEL_ENV = "VAP_VLM_MODEL"
KEY_ENV = "VAP_VLM_KEY"


@dataclass(frozen=True)
class PromptTemplate:
    """A chat prompt body with placeholders.

    ``option_slots`` is the number of fixed numbered-option placeholders
    (0 for free-text answers, -1 for a variable-length {options} block).
    ``protocol`` names the answer format parse_answer expects back.
    """

    template_id: str
    body: str
    option_slots: int
    protocol: str


_EGOSCHEMA_BODY = """\
You will be given a question about a video and five possible answer options, \
where C refers to the person wearing the camera. You will be provided frames \
from the video, sampled evenly across the video.
{video}
Question: {question}
Possible answer choices:
(0) {option0}
(1) {option1}
(2) {option2}
(3) {option3}
(4) {option4}
After explaining your reasoning, output the final answer in the format \
"Final Answer: (X)", where X is the correct digit choice. Never say "unknown" \
or "unsure", or "None", instead provide your most likely guess."""

_NEXTQA_VIDEO_BODY = """\
You are provided with a video followed by a question and choices. Answer the \
question providing only the number of the correct choice.
{video}
{question}
0. {option0}
1. {option1}
2. {option2}
3. {option3}
4. {option4}"""

_NEXTQA_FRAMES_BODY = """\
These are frames from a video that I want to upload. Answer the question \
providing only the number of the correct choice.
{video}
{question}
0. {option0}
1. {option1}
2. {option2}
3. {option3}
4. {option4}"""

_ANET_WORD_BODY = """\
{video}
Answer the following question about the video using only a word or two. \
Never say "unknown", "N/A" or "unsure", instead provide your most likely \
guess. Note that "where" questions refer to locations and not relative \
positions. Answer binary questions with yes or no.
Question: {question} Answer:"""

_CLEVRER_MCQ_BODY = """\
You will be provided frames from a video, sampled evenly across the video. \
You will also be given a question about the video and an enumerated list of \
options. Select all options that are correct. After explaining your \
reasoning, output your final answer in the format "Final Answer: {comma \
separated list of correct option numbers}". At least one option is correct, \
so always pick the option(s) that are most likely to be correct even if no \
option seems entirely correct.
{video}
Question: {question}
Options:
{options}"""

_CLEVRER_BINARY_BODY = """\
You will be provided frames from a video, sampled evenly across the video. \
Answer the question about the video using only a word or number. Never say \
"unknown", "N/A" or "unsure", instead provide your most likely guess. Answer \
binary questions with yes or no.
{video}
Question: {question} Answer:"""

_GENERATION_BODY = """\
You are an advanced video generation model designed to predict plausible \
future video dynamics. You are given a small set of frames sampled from a \
video together with a question about that video and its candidate answers. \
Generate the full sequence of frames the video most plausibly contains, \
paying particular attention to motion, object interactions, and any events \
the question asks about. Keep the scene, camera framing, and visual style of \
the provided frames. The frames you generate should form a temporally \
coherent video in which objects move continuously unless an abrupt event is \
clearly implied.
{video}
Question: {question}
Candidate answers:
{options}"""


TEMPLATES: dict[str, PromptTemplate] = {
    t.template_id: t for t in (
        PromptTemplate("egoschema", _EGOSCHEMA_BODY, 5, "egoschema"),
        PromptTemplate("nextqa_video", _NEXTQA_VIDEO_BODY, 5, "nextqa"),
        PromptTemplate("nextqa_frames", _NEXTQA_FRAMES_BODY, 5, "nextqa"),
        PromptTemplate("anet_word", _ANET_WORD_BODY, 0, "word"),
        PromptTemplate("clevrer_mcq", _CLEVRER_MCQ_BODY, -1, "clevrer_mcq"),
        PromptTemplate("clevrer_binary", _CLEVRER_BINARY_BODY, 0, "word"),
        PromptTemplate("generation_conditioning", _GENERATION_BODY, -1, "none"),
    )
}


@dataclass(frozen=True)
class TextSegment:
    text: str


@dataclass(frozen=True)
class ImageSegment:
    png: bytes


@dataclass(eq=False)
class ChatRequest:
    segments: list  # TextSegment | ImageSegment, in order
    model_id: str
    temperature: float | None = None
    top_p: float | None = None


def _frame_png(frame) -> bytes:
    from PIL import Image
    buf = io.BytesIO()
    Image.fromarray(frame.pixels).save(buf, format="PNG")
    return buf.getvalue()


def render_prompt(template: PromptTemplate, item, frames,
                  model_id: str = "") -> ChatRequest:
    """Fill a template with an item's question/options and the frame images.

    Frames are inserted at the {video} position in ascending index order.
    Fixed-slot templates demand exactly that many options.
    """
    body = template.body
    for ph in ("{video}", "{question}"):
        if ph not in body:
            raise MissingPlaceholder(f"template {template.template_id} lacks {ph}")

    options = list(getattr(item, "options", []) or [])
    if template.option_slots > 0:
        if len(options) != template.option_slots:
            raise TemplateArityMismatch(
                f"template {template.template_id} needs {template.option_slots} "
                f"options, item {getattr(item, 'item_id', '?')} has {len(options)}")
        for i in range(template.option_slots):
            ph = f"{{option{i}}}"
            if ph not in body:
                raise MissingPlaceholder(f"template {template.template_id} lacks {ph}")
            body = body.replace(ph, options[i])
    elif template.option_slots < 0:
        if not options:
            raise TemplateArityMismatch(
                f"template {template.template_id} needs at least one option")
        if "{options}" not in body:
            raise MissingPlaceholder(f"template {template.template_id} lacks {{options}}")
        block = "\n".join(f"({i}) {opt}" for i, opt in enumerate(options))
        body = body.replace("{options}", block)

    body = body.replace("{question}", str(item.question))

    ordered = sorted(frames, key=lambda f: f.index)
    before, _, after = body.partition("{video}")
    segments: list = []
    if before.strip():
        segments.append(TextSegment(before.rstrip("\n")))
    for f in ordered:
        segments.append(ImageSegment(_frame_png(f)))
    if after.strip():
        segments.append(TextSegment(after.lstrip("\n")))
    if not segments:
        raise MissingPlaceholder("rendered prompt is empty")
    return ChatRequest(segments=segments, model_id=model_id)


def render_generation_prompt(item) -> str:
    """Text-only conditioning prompt handed to the dynamics predictor."""
    template = TEMPLATES["generation_conditioning"]
    options = list(getattr(item, "options", []) or ["(open answer)"])
    block = "\n".join(f"({i}) {opt}" for i, opt in enumerate(options))
    body = template.body.replace("{options}", block)
    body = body.replace("{question}", str(item.question))
    body = body.replace("{video}", "[initial frames provided separately]")
    return body


# --- transport ------------------------------------------------------------------


class Blocked:
    """Sentinel return value when the provider refused the request content."""

    def __init__(self, reason: str = "content_filter"):
        self.reason = reason

    def __repr__(self):
        return f"Blocked({self.reason!r})"


def request_hash(req: ChatRequest) -> str:
    parts = []
    for seg in req.segments:
        if isinstance(seg, TextSegment):
            parts.append({"text": seg.text})
        else:
            parts.append({"image_sha256": hashlib.sha256(seg.png).hexdigest()})
    canon = json.dumps({
        "model": req.model_id,
        "temperature": req.temperature,
        "top_p": req.top_p,
        "segments": parts,
    }, sort_keys=True)
    return hashlib.sha256(canon.encode()).hexdigest()


def _to_openai_body(req: ChatRequest) -> dict:
    content = []
    for seg in req.segments:
        if isinstance(seg, TextSegment):
            content.append({"type": "text", "text": seg.text})
        else:
            uri = "data:image/png;base64," + base64.b64encode(seg.png).decode("ascii")
            content.append({"type": "image_url", "image_url": {"url": uri}})
    body = {
        "model": req.model_id,
        "messages": [{"role": "user", "content": content}],
    }
    # absent means provider default
    if req.temperature is not None:
        body["temperature"] = req.temperature
    if req.top_p is not None:
        body["top_p"] = req.top_p
    return body


def complete(req: ChatRequest, endpoint: str | None, auth: str | None = None, *,
             fixtures_dir: str | Path | None = None, record: bool = True,
             max_retries: int = 5, backoff_s: float = 0.5,
             timeout_s: float = 120.0):
    """Run one chat completion. Returns the response text, or Blocked.

    With a fixtures directory, a previously recorded response for the same
    request hash is replayed without touching the network; live responses
    are recorded there for next time.
    """
    fixture_path = None
    if fixtures_dir is not None:
        fixture_path = Path(fixtures_dir) / f"{request_hash(req)}.json"
        if fixture_path.exists():
            obj = json.loads(fixture_path.read_text(encoding="utf-8"))
            return obj["text"]

    if not endpoint:
        raise TransportError(
            "no endpoint configured and no recorded fixture for this request")

    headers = {"Content-Type": "application/json"}
    if auth:
        headers["Authorization"] = f"Bearer {auth}"
    body = _to_openai_body(req)

    delay = backoff_s
    last_status = None
    for attempt in range(max_retries):
        try:
            resp = requests.post(endpoint, json=body, headers=headers,
                                 timeout=timeout_s)
        except requests.RequestException as e:
            raise TransportError(f"completion request failed: {e}") from e

        if resp.status_code in (401, 403):
            raise Unauthorized(f"endpoint rejected credentials ({resp.status_code})")
        if resp.status_code == 429 or resp.status_code >= 500:
            last_status = resp.status_code
            if attempt < max_retries - 1:
                log.warning("completion got %d, retry %d/%d", resp.status_code,
                            attempt + 1, max_retries)
                time.sleep(delay)
                delay *= 2
                continue
            if resp.status_code == 429:
                raise RateLimited(f"still throttled after {max_retries} attempts")
            raise TransportError(f"server error {resp.status_code} after retries")
        if resp.status_code != 200:
            raise TransportError(f"unexpected status {resp.status_code}: {resp.text[:200]}")

        try:
            payload = resp.json()
            choice = payload["choices"][0]
            finish = choice.get("finish_reason")
            message = choice.get("message") or {}
            text = message.get("content")
        except (ValueError, KeyError, IndexError, TypeError) as e:
            raise TransportError(f"malformed completion payload: {e}") from e

        if finish == "content_filter" or text is None or text == "":
            return Blocked("content_filter" if finish == "content_filter" else "empty")

        if fixture_path is not None and record:
            fixture_path.parent.mkdir(parents=True, exist_ok=True)
            fixture_path.write_text(json.dumps({"text": text}), encoding="utf-8")
        return text

    raise TransportError(f"unreachable retry state (last status {last_status})")


# --- answer parsing ----------------------------------------------------------------


@dataclass(frozen=True)
class ParsedAnswer:
    kind: str  # "single_choice" | "multi_choice" | "word"
    choice: int | None = None
    choices: frozenset[int] = frozenset()
    word: str | None = None
    raw: str = ""


_FINAL_ANSWER = re.compile(r"final\s*answer\s*:?", re.IGNORECASE)
_LONE_DIGIT = re.compile(r"(?<![\d.])([0-4])(?!\d)")


def parse_answer(text: str, protocol: str) -> ParsedAnswer:
    """Extract a structured answer from model output.

    egoschema: digit 0-4 after the last "Final Answer" marker.
    nextqa: first standalone digit 0-4 anywhere.
    clevrer_mcq: comma-separated option numbers after the last marker
    (an empty list parses as an explicit no-answer).
    word: first one or two words, lowercased, punctuation stripped.
    """
    if protocol == "egoschema":
        matches = list(_FINAL_ANSWER.finditer(text))
        if not matches:
            raise Unparseable("no Final Answer marker")
        tail = text[matches[-1].end():]
        m = re.search(r"\d", tail)
        if not m:
            raise Unparseable("no digit after Final Answer marker")
        digit = int(m.group())
        if not 0 <= digit <= 4:
            raise Unparseable(f"choice {digit} outside 0-4")
        return ParsedAnswer(kind="single_choice", choice=digit, raw=text)

    if protocol == "nextqa":
        m = _LONE_DIGIT.search(text)
        if not m:
            raise Unparseable("no standalone digit 0-4")
        return ParsedAnswer(kind="single_choice", choice=int(m.group(1)), raw=text)

    if protocol == "clevrer_mcq":
        matches = list(_FINAL_ANSWER.finditer(text))
        if not matches:
            raise Unparseable("no Final Answer marker")
        tail = text[matches[-1].end():].splitlines()[0] if text[matches[-1].end():] else ""
        nums = frozenset(int(t) for t in re.findall(r"\d+", tail))
        return ParsedAnswer(kind="multi_choice", choices=nums, raw=text)

    if protocol == "word":
        words = re.findall(r"[A-Za-z0-9']+", text)
        if not words:
            raise Unparseable("no word characters in output")
        return ParsedAnswer(kind="word", word=" ".join(words[:2]).lower(), raw=text)

    raise Unparseable(f"unknown protocol {protocol!r}")


# --- mock oracle --------------------------------------------------------------------


def _stable_seed(s: str) -> int:
    return int.from_bytes(hashlib.sha256(s.encode()).digest()[:8], "big")


def mock_oracle(item, selected, truth) -> str:
    """Stand-in answering model for offline runs.

    Answers correctly iff any selected index falls inside one of the item's
    ground-truth surprise windows; otherwise picks a deterministic wrong
    option. Output always follows the "Final Answer: (X)" format.
    """
    windows = getattr(truth, "windows", truth)
    hit = any(w.start <= idx < w.end for idx in selected for w in windows)
    correct = int(item.answer)
    if hit:
        choice = correct
        note = "The selected frames cover the unexpected moment."
    else:
        pool = [i for i in range(len(item.options)) if i != correct]
        rng = random.Random(_stable_seed(item.item_id))
        choice = rng.choice(pool) if pool else correct
        note = "The selected frames look uneventful, so this is a guess."
    return f"{note}\nFinal Answer: ({choice})"
