"""Chat-completion transport with retries, plus an offline fixture backend."""

from __future__ import annotations

import base64
import json
import logging
import os
import threading
import time
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from string import Template
from typing import Callable, Protocol, Sequence

import httpx

log = logging.getLogger(__name__)

TEMPLATE_IDS = ("articulation", "joint_parameters", "physics")
TEMPLATE_VERSION = "v1"
SYSTEM_PROMPT = "You annotate 3D assets for robot simulation. Reply with one JSON object and nothing else."


class AnnotationError(RuntimeError):
    """Base class for annotation failures."""


class TransportError(AnnotationError):
    """The service could not be reached, or kept failing, within the retry budget."""

    def __init__(self, message: str, attempts: int):
        super().__init__(message)
        self.attempts = attempts


class ReplyParseError(AnnotationError):
    """The reply was not a single JSON object."""

    def __init__(self, message: str, raw: str):
        super().__init__(message)
        self.raw = raw


@dataclass(frozen=True)
class AnnotationClientConfig:
    endpoint: str = "https://api.openai.com/v1/chat/completions"
    api_key_env: str = "TWINFORGE_API_KEY"
    model: str = "gpt-4o"
    max_retries: int = 2
    timeout: float = 60.0  # seconds per attempt
    max_in_flight: int = 4
    backoff_initial: float = 1.0  # seconds before the first retry
    backoff_max: float = 30.0

    def __post_init__(self):
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")
        if not self.timeout > 0:
            raise ValueError("timeout must be > 0")
        if self.max_in_flight < 1:
            raise ValueError("max_in_flight must be >= 1")
        if self.backoff_initial < 0 or self.backoff_max < self.backoff_initial:
            raise ValueError("backoff must satisfy 0 <= backoff_initial <= backoff_max")


def load_template(template_id: str, version: str = TEMPLATE_VERSION) -> Template:
    if template_id not in TEMPLATE_IDS:
        raise KeyError(f"unknown prompt template {template_id!r}")
    text = resources.files("twinforge.annotation").joinpath("prompts", f"{template_id}.{version}.txt").read_text("utf-8")
    return Template(text)


@dataclass(frozen=True)
class ChatRequest:
    template: str
    prompt: str
    images: tuple[bytes, ...]  # PNG payloads

    def body(self, model: str) -> dict:
        content: list[dict] = [{"type": "text", "text": self.prompt}]
        for png in self.images:
            url = "data:image/png;base64," + base64.b64encode(png).decode("ascii")
            content.append({"type": "image_url", "image_url": {"url": url}})
        return {
            "model": model,
            "temperature": 0,
            "response_format": {"type": "json_object"},
            "messages": [
                {"role": "system", "content": SYSTEM_PROMPT},
                {"role": "user", "content": content},
            ],
        }


def render_request(template_id: str, images: Sequence[bytes], **fields: str) -> ChatRequest:
    prompt = load_template(template_id).substitute(**fields)
    return ChatRequest(template_id, prompt, tuple(images))


class Backend(Protocol):
    def complete(self, request: ChatRequest) -> str: ...


def backoff_delays(cfg: AnnotationClientConfig) -> list[float]:
    """Sleep before each retry: doubling from backoff_initial, capped at backoff_max."""
    return [min(cfg.backoff_initial * 2**k, cfg.backoff_max) for k in range(cfg.max_retries)]


class HttpBackend:
    """Posts chat-completion requests; safe to share between threads."""

    RETRY_STATUS = {408, 409, 429, 500, 502, 503, 504}

    def __init__(
        self,
        cfg: AnnotationClientConfig,
        transport: httpx.BaseTransport | None = None,
        sleep: Callable[[float], None] = time.sleep,
    ):
        self.cfg = cfg
        self._client = httpx.Client(timeout=cfg.timeout, transport=transport)
        self._slots = threading.BoundedSemaphore(cfg.max_in_flight)
        self._sleep = sleep

    def close(self) -> None:
        self._client.close()

    def _headers(self) -> dict[str, str]:
        key = os.environ.get(self.cfg.api_key_env)
        if not key:
            raise AnnotationError(f"credential environment variable {self.cfg.api_key_env} is not set")
        return {"Authorization": f"Bearer {key}", "Content-Type": "application/json"}

    def complete(self, request: ChatRequest) -> str:
        headers = self._headers()
        body = request.body(self.cfg.model)
        delays = backoff_delays(self.cfg)
        attempts = 0
        last = ""
        while True:
            attempts += 1
            with self._slots:
                try:
                    resp = self._client.post(self.cfg.endpoint, json=body, headers=headers)
                except httpx.TransportError as exc:  # includes timeouts
                    resp = None
                    last = f"{type(exc).__name__}: {exc}"
            if resp is not None:
                if resp.status_code == 200:
                    return _reply_text(resp)
                last = f"HTTP {resp.status_code}"
                if resp.status_code not in self.RETRY_STATUS:
                    raise TransportError(f"request rejected with {last}", attempts)
            if attempts > len(delays):
                raise TransportError(f"giving up after {attempts} attempts: {last}", attempts)
            log.warning("annotation request failed (%s); retrying in %.1fs", last, delays[attempts - 1])
            self._sleep(delays[attempts - 1])


def _reply_text(resp: httpx.Response) -> str:
    try:
        return resp.json()["choices"][0]["message"]["content"]
    except (ValueError, KeyError, IndexError, TypeError) as exc:
        raise ReplyParseError(f"unexpected response envelope: {exc}", resp.text) from exc


@dataclass(frozen=True)
class MockEntry:
    template: str
    match: str  # case-insensitive substring of the rendered prompt; empty matches anything
    reply: object  # JSON value, or a raw string sent verbatim


class MockBackend:
    """Answers from canned fixtures; the first entry whose template and match fit wins."""

    def __init__(self, entries: Sequence[MockEntry]):
        self.entries = list(entries)
        self.requests: list[ChatRequest] = []

    @classmethod
    def from_json(cls, data: list) -> MockBackend:
        if not isinstance(data, list):
            raise ValueError("mock fixture must be a JSON array")
        entries = []
        for i, item in enumerate(data):
            if not isinstance(item, dict) or set(item) != {"template", "match", "reply"}:
                raise ValueError(f"mock fixture entry {i} must have exactly template, match and reply")
            entries.append(MockEntry(str(item["template"]), str(item["match"]), item["reply"]))
        return cls(entries)

    @classmethod
    def from_file(cls, path: str | os.PathLike) -> MockBackend:
        return cls.from_json(json.loads(Path(path).read_text("utf-8")))

    def complete(self, request: ChatRequest) -> str:
        self.requests.append(request)
        prompt = request.prompt.lower()
        for e in self.entries:
            if e.template == request.template and e.match.lower() in prompt:
                return e.reply if isinstance(e.reply, str) else json.dumps(e.reply)
        raise AnnotationError(f"no mock fixture for template {request.template!r} matching this prompt")


def bundled_mock() -> MockBackend:
    """Fixture replies covering the toy assets shipped with the package."""
    text = resources.files("twinforge.annotation").joinpath("mock_fixture.json").read_text("utf-8")
    return MockBackend.from_json(json.loads(text))


class AnnotationClient:
    def __init__(self, backend: Backend, model: str = "mock"):
        self.backend = backend
        self.model = model

    def ask(self, template_id: str, images: Sequence[bytes], **fields: str) -> dict:
        request = render_request(template_id, images, **fields)
        raw = self.backend.complete(request)
        return parse_reply(raw)


def _reject_constant(name: str):
    raise ValueError(f"non-standard JSON constant {name}")


def parse_reply(raw: str) -> dict:
    try:
        value = json.loads(raw, parse_constant=_reject_constant)
    except (ValueError, TypeError) as exc:
        raise ReplyParseError(f"reply is not valid JSON: {exc}", str(raw)) from exc
    if not isinstance(value, dict):
        raise ReplyParseError("reply must be a single JSON object", raw)
    return value
