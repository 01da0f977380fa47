"""Chat-completion gateway, SQL extraction, and the offline scripted provider."""

from __future__ import annotations

import hashlib
import json
import os
import re
import threading
import time
from dataclasses import dataclass
from pathlib import Path

import httpx

from castle.errors import (AuthenticationError, ExtractionError, GatewayConfigError, GatewayError,
                           GatewayTimeout, MissingFixtureError, TransportError)

API_KEY_ENV = "CASTLE_LLM_API_KEY"


@dataclass(frozen=True)
class ModelRequest:
    model_name: str
    prompt: str
    temperature: float = 0.0
    max_tokens: int = 2048
    timeout: float = 60.0
    template_id: str = ""
    instruction_id: str = ""

    def __post_init__(self):
        if not self.prompt:
            raise GatewayConfigError("prompt is empty")
        if not 0.0 <= self.temperature <= 1.0:
            raise GatewayConfigError(f"temperature {self.temperature} outside [0, 1]")
        if self.max_tokens <= 0:
            raise GatewayConfigError("max_tokens must be positive")


@dataclass(frozen=True)
class ModelResponse:
    raw_text: str
    provider: str
    latency: float = 0.0
    token_usage: dict | None = None


@dataclass(frozen=True)
class SqlText:
    statement: str
    source_span: tuple = (0, 0)


def digest(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def fixture_key(template_id: str, instruction_id: str, prompt: str) -> str:
    """Fixture file stem for a request; the prompt is part of the key on purpose."""
    blob = json.dumps([template_id, instruction_id, prompt], ensure_ascii=False)
    return digest(blob)[:16]


# -- extraction ---------------------------------------------------------------------

_FENCE = re.compile(r"```[^\n`]*\n(.*?)```", re.S)
_VERB = re.compile(r"(?<![\w\"])(UPDATE|CREATE|SELECT|WITH)\b")
_VERB_LINE = re.compile(r"(?im)^[ \t]*(update|create|select|with)\b")


def extract_sql(response: ModelResponse | str) -> SqlText:
    """First fenced block, else the longest suffix starting with a SQL verb.

    Anything after the final semicolon of an unfenced statement is dropped.
    """
    raw = response.raw_text if isinstance(response, ModelResponse) else response
    m = _FENCE.search(raw)
    if m:
        body = m.group(1)
        start = m.start(1) + (len(body) - len(body.lstrip()))
        stmt = body.strip()
        if stmt:
            return SqlText(stmt, (start, start + len(stmt)))
    m = _VERB.search(raw) or _VERB_LINE.search(raw)
    if not m:
        raise ExtractionError("no SQL statement found in model response", raw)
    start = m.start(1)
    tail = raw[start:]
    if ";" in tail:
        tail = tail[:tail.rindex(";") + 1]
    stmt = tail.rstrip()
    if "```" in stmt:
        stmt = stmt[:stmt.index("```")].rstrip()
    return SqlText(stmt, (start, start + len(stmt)))


# -- audit log ----------------------------------------------------------------------

class AuditLog:
    """Append-only JSON-lines sink; writes are serialized by a lock."""

    def __init__(self, path: str | Path | None = None):
        self.path = Path(path) if path else None
        self.records: list = []
        self._lock = threading.Lock()
        if self.path:
            self.path.parent.mkdir(parents=True, exist_ok=True)

    def append(self, record: dict) -> None:
        line = json.dumps(record, ensure_ascii=False, sort_keys=True)
        with self._lock:
            self.records.append(record)
            if self.path:
                with self.path.open("a", encoding="utf-8") as fh:
                    fh.write(line + "\n")

    @staticmethod
    def read(path: str | Path) -> list:
        with open(path, encoding="utf-8") as fh:
            return [json.loads(line) for line in fh if line.strip()]


# -- providers ----------------------------------------------------------------------

class Provider:
    name = "provider"

    def __init__(self, audit: AuditLog | None = None):
        self.audit = audit if audit is not None else AuditLog()

    def _call(self, request: ModelRequest) -> tuple:
        raise NotImplementedError

    def complete(self, request: ModelRequest) -> ModelResponse:
        t0 = time.perf_counter()
        status = "ok"
        text, usage = "", None
        try:
            text, usage = self._call(request)
            return ModelResponse(text, self.name, time.perf_counter() - t0, usage)
        except GatewayError as exc:
            status = type(exc).__name__
            raise
        finally:
            self.audit.append({
                "provider": self.name,
                "model": request.model_name,
                "template_id": request.template_id,
                "instruction_id": request.instruction_id,
                "prompt": request.prompt,
                "prompt_digest": digest(request.prompt),
                "response_digest": digest(text),
                "latency": round(time.perf_counter() - t0, 6),
                "status": status,
            })


class ScriptedProvider(Provider):
    """Answers from ``<fixture_dir>/<fixture_key>.txt``; misses are errors, never guesses."""

    name = "scripted"

    def __init__(self, fixture_dir: str | Path, audit: AuditLog | None = None):
        super().__init__(audit)
        self.fixture_dir = Path(fixture_dir)

    def path_for(self, request: ModelRequest) -> Path:
        return self.fixture_dir / f"{fixture_key(request.template_id, request.instruction_id, request.prompt)}.txt"

    def _call(self, request: ModelRequest) -> tuple:
        path = self.path_for(request)
        if not path.exists():
            raise MissingFixtureError(
                f"no scripted response for template={request.template_id!r} "
                f"instruction={request.instruction_id!r}",
                diagnostics={"expected_path": str(path)})
        return path.read_text(encoding="utf-8"), None


def write_fixture(fixture_dir: str | Path, template_id: str, instruction_id: str, prompt: str,
                  response: str) -> Path:
    path = Path(fixture_dir) / f"{fixture_key(template_id, instruction_id, prompt)}.txt"
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(response, encoding="utf-8")
    return path


class ChatCompletionProvider(Provider):
    """OpenAI-compatible ``/chat/completions`` client with bounded retries."""

    name = "openai-compatible"

    def __init__(self, endpoint: str, *, api_key: str | None = None, retries: int = 2,
                 backoff: float = 0.5, client: httpx.Client | None = None,
                 audit: AuditLog | None = None, sleep=time.sleep):
        super().__init__(audit)
        if not endpoint:
            raise GatewayConfigError("endpoint URL is not configured")
        api_key = api_key if api_key is not None else os.environ.get(API_KEY_ENV)
        if not api_key:
            raise GatewayConfigError(f"environment variable {API_KEY_ENV} is not set")
        self.url = endpoint if endpoint.rstrip("/").endswith("/chat/completions") \
            else endpoint.rstrip("/") + "/chat/completions"
        self.api_key = api_key
        self.retries = retries
        self.backoff = backoff
        self.client = client or httpx.Client()
        self.sleep = sleep

    def _call(self, request: ModelRequest) -> tuple:
        payload = {
            "model": request.model_name,
            "messages": [{"role": "user", "content": request.prompt}],
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        }
        headers = {"Authorization": f"Bearer {self.api_key}"}
        last: GatewayError | None = None
        for attempt in range(self.retries + 1):
            if attempt:
                self.sleep(self.backoff * 2 ** (attempt - 1))
            try:
                resp = self.client.post(self.url, json=payload, headers=headers,
                                        timeout=request.timeout)
            except httpx.TimeoutException as exc:
                last = GatewayTimeout(f"request timed out after {request.timeout}s",
                                      diagnostics={"attempt": attempt + 1, "error": str(exc)})
                continue
            except httpx.TransportError as exc:
                last = TransportError(f"transport failure: {exc}",
                                      diagnostics={"attempt": attempt + 1, "url": self.url})
                continue
            diag = {"status": resp.status_code, "attempt": attempt + 1, "body": resp.text[:500]}
            if resp.status_code in (401, 403):
                raise AuthenticationError(f"authentication rejected ({resp.status_code})", diagnostics=diag)
            if resp.status_code == 429 or resp.status_code >= 500:
                last = TransportError(f"provider returned {resp.status_code}", diagnostics=diag)
                continue
            if resp.status_code >= 400:
                raise GatewayError(f"provider returned {resp.status_code}", diagnostics=diag)
            try:
                body = resp.json()
                text = body["choices"][0]["message"]["content"]
            except (ValueError, KeyError, IndexError, TypeError) as exc:
                raise GatewayError(f"malformed provider response: {exc}", diagnostics=diag) from None
            return text, body.get("usage")
        assert last is not None
        last.message += f" after {self.retries + 1} attempts"
        raise last


def make_provider(kind: str, *, fixture_dir=None, endpoint=None, retries: int = 2,
                  audit: AuditLog | None = None) -> Provider:
    if kind == "scripted":
        if not fixture_dir:
            raise GatewayConfigError("scripted provider needs a fixture directory")
        return ScriptedProvider(fixture_dir, audit)
    if kind in ("openai", "live", "openai-compatible"):
        return ChatCompletionProvider(endpoint or "", retries=retries, audit=audit)
    raise GatewayConfigError(f"unknown provider {kind!r}")
