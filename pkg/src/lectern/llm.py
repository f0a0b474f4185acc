"""Client for a locally served LLM (Ollama-style ``/api/generate``).

Everything that talks to the model goes through :class:`LlmGateway`, which
always sends an explicit context window, times each call, and raises
:class:`LlmUnavailable` for transport problems. Structured replies go through
:func:`decode_structured`, which tolerates the schema drift small models
produce (aliased field names, bare strings inside object arrays) but rejects
output that echoes prompt placeholders.
"""

from __future__ import annotations

import json
import logging
import os
import re
import threading
import time
from dataclasses import dataclass, field, replace
from typing import Any, Callable, Sequence

import httpx

log = logging.getLogger(__name__)

DEFAULT_CONTEXT_TOKENS = 16384
MIN_ANALYSIS_CONTEXT = 4096
SYNTHESIS_TEMPERATURE = 0.6
ANALYSIS_TEMPERATURE = 0.2
FAST_RESPONSE_FLOOR_S = 5.0
FAST_RESPONSE_MIN_PROMPT_CHARS = 20_000
TIMESTAMP_SLACK_S = 60.0

DEFAULT_PLACEHOLDERS = ("H:MM:SS", "example.com", "MM:SS")

# decode note kinds
PLACEHOLDER_HIT = "placeholder_hit"
FIELD_ALIAS_USED = "field_alias_used"
REPAIRED = "repaired"
FAST_RESPONSE_WARNING = "fast_response_warning"
BARE_STRING_DROPPED = "bare_string_dropped"
ITEM_DROPPED = "item_dropped"


class LlmError(Exception):
    """Base class for gateway failures."""


class LlmUnavailable(LlmError):
    """The inference server could not be reached (refused, timed out, 5xx)."""


class MalformedOutput(LlmError):
    """The server answered, but the reply is not decodable."""


class PlaceholderError(MalformedOutput):
    """The reply contains a literal copied from the prompt's schema example."""

    def __init__(self, literal: str, where: str):
        super().__init__(f"placeholder literal {literal!r} found at {where}")
        self.literal = literal
        self.where = where


class SchemaError(MalformedOutput):
    """Valid JSON that lacks a required field under every accepted name."""

    def __init__(self, field_name: str, detail: str = "missing"):
        super().__init__(f"field {field_name!r}: {detail}")
        self.field_name = field_name


@dataclass(frozen=True)
class DecodeNote:
    kind: str
    detail: str = ""

    def to_dict(self) -> dict[str, str]:
        return {"kind": self.kind, "detail": self.detail}


@dataclass(frozen=True)
class GatewayConfig:
    base_url: str = "http://127.0.0.1:11434"
    model_name: str = "llama3.1:8b"
    context_tokens: int = DEFAULT_CONTEXT_TOKENS
    temperature: float = SYNTHESIS_TEMPERATURE
    request_timeout: float = 300.0
    retry_count: int = 1
    lanes: int = 1
    fast_response_floor: float = FAST_RESPONSE_FLOOR_S

    def __post_init__(self) -> None:
        if self.context_tokens < 1:
            raise ValueError("context_tokens must be positive")
        if not 0.0 <= self.temperature <= 2.0:
            raise ValueError("temperature must lie in [0, 2]")
        if self.retry_count < 0 or self.lanes < 1:
            raise ValueError("retry_count must be >= 0 and lanes >= 1")

    @classmethod
    def from_env(cls, base: GatewayConfig | None = None) -> GatewayConfig:
        cfg = base or cls()
        url = os.environ.get("LECTERN_LLM_URL")
        model = os.environ.get("LECTERN_LLM_MODEL")
        if url:
            cfg = replace(cfg, base_url=url)
        if model:
            cfg = replace(cfg, model_name=model)
        return cfg


@dataclass
class LlmExchange:
    prompt_chars: int
    response_text: str = ""
    elapsed: float = 0.0
    decode_notes: list[DecodeNote] = field(default_factory=list)
    num_ctx: int = 0

    def note(self, kind: str, detail: str = "") -> None:
        self.decode_notes.append(DecodeNote(kind, detail))


class LlmGateway:
    """Serialised access to one inference endpoint.

    ``lanes`` bounds concurrent requests (1 by default). ``clock`` is
    injectable so elapsed-time diagnostics can be tested without sleeping.
    """

    def __init__(
        self,
        config: GatewayConfig,
        *,
        transport: httpx.BaseTransport | None = None,
        clock: Callable[[], float] = time.monotonic,
    ):
        self.config = config
        self._clock = clock
        self._lanes = threading.BoundedSemaphore(config.lanes)
        self._client = httpx.Client(
            base_url=config.base_url.rstrip("/"),
            timeout=config.request_timeout,
            transport=transport,
        )

    def close(self) -> None:
        self._client.close()

    def __enter__(self) -> LlmGateway:
        return self

    def __exit__(self, *exc: object) -> None:
        self.close()

    def available(self) -> bool:
        try:
            return self._client.get("/api/tags", timeout=min(5.0, self.config.request_timeout)).status_code == 200
        except httpx.HTTPError:
            return False

    def generate(
        self,
        system_prompt: str,
        user_prompt: str,
        json_mode: bool = False,
        *,
        temperature: float | None = None,
        context_tokens: int | None = None,
        model: str | None = None,
    ) -> tuple[str, LlmExchange]:
        cfg = self.config
        num_ctx = context_tokens or cfg.context_tokens
        body: dict[str, Any] = {
            "model": model or cfg.model_name,
            "prompt": user_prompt,
            "system": system_prompt,
            "stream": False,
            "options": {
                "num_ctx": num_ctx,
                "temperature": cfg.temperature if temperature is None else temperature,
            },
        }
        if json_mode:
            body["format"] = "json"
        exchange = LlmExchange(prompt_chars=len(system_prompt) + len(user_prompt), num_ctx=num_ctx)

        last_exc: Exception | None = None
        with self._lanes:
            for attempt in range(cfg.retry_count + 1):
                started = self._clock()
                try:
                    resp = self._client.post("/api/generate", json=body)
                except httpx.TransportError as exc:
                    last_exc = exc
                    log.warning("LLM request failed (attempt %d): %s", attempt + 1, exc)
                    continue
                exchange.elapsed = max(0.0, self._clock() - started)
                if resp.status_code >= 500:
                    last_exc = LlmUnavailable(f"server returned HTTP {resp.status_code}")
                    continue
                if resp.status_code != 200:
                    raise LlmUnavailable(f"server returned HTTP {resp.status_code}: {resp.text[:200]}")
                break
            else:
                raise LlmUnavailable(f"{cfg.base_url} unreachable: {last_exc}") from last_exc

        try:
            payload = resp.json()
            text = payload["response"]
        except (ValueError, KeyError, TypeError) as exc:
            raise MalformedOutput("reply lacks a 'response' string") from exc
        if not isinstance(text, str):
            raise MalformedOutput("reply 'response' is not a string")
        exchange.response_text = text
        if exchange.elapsed < cfg.fast_response_floor and exchange.prompt_chars > FAST_RESPONSE_MIN_PROMPT_CHARS:
            exchange.note(
                FAST_RESPONSE_WARNING,
                f"{exchange.elapsed:.1f}s for a {exchange.prompt_chars}-char prompt; input may have been truncated",
            )
            log.warning("suspiciously fast LLM reply (%.1fs, %d chars)", exchange.elapsed, exchange.prompt_chars)
        return text, exchange


def generate(
    config: GatewayConfig, system_prompt: str, user_prompt: str, json_mode: bool = False
) -> tuple[str, LlmExchange]:
    """One-off call without keeping a gateway around."""
    with LlmGateway(config) as gw:
        return gw.generate(system_prompt, user_prompt, json_mode)


# -- structured decoding -----------------------------------------------------------

TIMESTAMP_RE = re.compile(r"^(0|[1-9]\d*):([0-5]\d):([0-5]\d)$")
KINDS = ("string", "array", "object", "timestamp", "number")


@dataclass(frozen=True)
class FieldSpec:
    """One expected field. ``items`` describes array elements: ``"string"``,
    or a nested :class:`SchemaSpec` for arrays of objects."""

    name: str
    kind: str = "string"
    aliases: tuple[str, ...] = ()
    required: bool = True
    items: SchemaSpec | str | None = None
    default: Any = None

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise ValueError(f"unknown field kind {self.kind!r}")


@dataclass(frozen=True)
class SchemaSpec:
    required_fields: tuple[FieldSpec, ...]
    placeholder_blacklist: tuple[str, ...] = DEFAULT_PLACEHOLDERS


def _strip_fences(raw: str) -> str:
    s = raw.strip()
    if s.startswith("```"):
        s = re.sub(r"^```[a-zA-Z]*\s*", "", s)
        s = re.sub(r"\s*```$", "", s)
    return s


def _find_placeholder(value: Any, blacklist: Sequence[str], where: str) -> tuple[str, str] | None:
    if isinstance(value, str):
        for lit in blacklist:
            if lit in value:
                return lit, where
    elif isinstance(value, dict):
        for k, v in value.items():
            hit = _find_placeholder(v, blacklist, f"{where}.{k}")
            if hit:
                return hit
    elif isinstance(value, list):
        for i, v in enumerate(value):
            hit = _find_placeholder(v, blacklist, f"{where}[{i}]")
            if hit:
                return hit
    return None


class _ItemRejected(Exception):
    pass


def _coerce(value: Any, spec: FieldSpec, where: str, notes: list[DecodeNote]) -> Any:
    kind = spec.kind
    if kind == "string":
        if not isinstance(value, str):
            raise _ItemRejected(f"{where}: expected string")
        return value.strip()
    if kind == "number":
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise _ItemRejected(f"{where}: expected number")
        return value
    if kind == "timestamp":
        if not isinstance(value, str) or not TIMESTAMP_RE.match(value.strip()):
            raise _ItemRejected(f"{where}: {value!r} is not H:MM:SS")
        return value.strip()
    if kind == "object":
        if not isinstance(value, dict):
            raise _ItemRejected(f"{where}: expected object")
        if isinstance(spec.items, SchemaSpec):
            return _decode_object(value, spec.items, where, notes)
        return value
    # array
    if isinstance(value, (str, dict)):
        value = [value]
    if not isinstance(value, list):
        raise _ItemRejected(f"{where}: expected array")
    out = []
    for i, item in enumerate(value):
        at = f"{where}[{i}]"
        if isinstance(spec.items, SchemaSpec):
            if not isinstance(item, dict):
                notes.append(DecodeNote(BARE_STRING_DROPPED if isinstance(item, str) else ITEM_DROPPED, at))
                continue
            try:
                out.append(_decode_object(item, spec.items, at, notes))
            except (_ItemRejected, SchemaError) as exc:
                notes.append(DecodeNote(ITEM_DROPPED, str(exc)))
        elif spec.items == "string":
            if isinstance(item, str) and item.strip():
                out.append(item.strip())
            else:
                notes.append(DecodeNote(ITEM_DROPPED, f"{at}: expected string"))
        else:
            out.append(item)
    return out


def _decode_object(
    obj: dict[str, Any], schema: SchemaSpec, where: str, notes: list[DecodeNote]
) -> dict[str, Any]:
    record: dict[str, Any] = {}
    for spec in schema.required_fields:
        if spec.name in obj:
            key = spec.name
        else:
            key = next((a for a in spec.aliases if a in obj), None)
            if key is not None:
                notes.append(DecodeNote(FIELD_ALIAS_USED, f"{where}: {key} -> {spec.name}"))
        if key is None or obj[key] is None:
            if spec.required:
                raise SchemaError(spec.name if where == "$" else f"{where}.{spec.name}")
            record[spec.name] = spec.default() if callable(spec.default) else spec.default
            continue
        try:
            record[spec.name] = _coerce(obj[key], spec, f"{where}.{spec.name}", notes)
        except _ItemRejected as exc:
            if where == "$":
                raise SchemaError(spec.name, str(exc)) from None
            raise
    return record


def decode_structured(raw: str, schema: SchemaSpec) -> tuple[dict[str, Any], list[DecodeNote]]:
    """Parse and validate a JSON reply against ``schema``.

    Returns the record keyed by primary field names plus the notes collected
    along the way. Raises :class:`MalformedOutput` for undecodable text,
    :class:`PlaceholderError` when any value contains a blacklisted literal,
    and :class:`SchemaError` when a required top-level field is absent.
    """
    try:
        data = json.loads(_strip_fences(raw))
    except (json.JSONDecodeError, TypeError) as exc:
        raise MalformedOutput(f"reply is not valid JSON: {exc}") from None
    if not isinstance(data, dict):
        raise MalformedOutput(f"reply is JSON {type(data).__name__}, expected an object")
    hit = _find_placeholder(data, schema.placeholder_blacklist, "$")
    if hit:
        raise PlaceholderError(*hit)
    notes: list[DecodeNote] = []
    return _decode_object(data, schema, "$", notes), notes


PLACEHOLDER_REMINDER = (
    "Your previous reply could not be used. Reply with JSON only, following the "
    "requested fields exactly. Do NOT use placeholder text: every timestamp must "
    "be a real time from the transcript, such as \"0:15:42\"."
)


def structured_call(
    gateway: LlmGateway,
    system_prompt: str,
    user_prompt: str,
    schema: SchemaSpec,
    *,
    temperature: float = ANALYSIS_TEMPERATURE,
    context_tokens: int | None = None,
) -> tuple[dict[str, Any], LlmExchange]:
    """JSON-mode call with one re-prompt on placeholder or malformed output."""
    prompt = user_prompt
    for attempt in (1, 2):
        raw, exchange = gateway.generate(
            system_prompt, prompt, json_mode=True, temperature=temperature, context_tokens=context_tokens
        )
        try:
            record, notes = decode_structured(raw, schema)
        except MalformedOutput as exc:
            if isinstance(exc, PlaceholderError):
                exchange.note(PLACEHOLDER_HIT, str(exc))
            if attempt == 2:
                raise
            log.info("re-prompting after unusable reply: %s", exc)
            prompt = f"{user_prompt}\n\n{PLACEHOLDER_REMINDER}"
            continue
        exchange.decode_notes.extend(notes)
        if attempt == 2:
            exchange.note(REPAIRED, "accepted after one re-prompt")
        return record, exchange
    raise AssertionError("unreachable")


class TimestampRejected(ValueError):
    pass


def format_timestamp(seconds: float) -> str:
    total = int(round(seconds))
    return f"{total // 3600}:{total % 3600 // 60:02d}:{total % 60:02d}"


def validate_timestamp(value: str, transcript_duration: float | None) -> int:
    """``"0:15:42"`` -> 942, rejecting malformed or fabricated times.

    A time more than 60 s past the end of the transcript is treated as
    fabricated. ``transcript_duration=None`` skips the bound.
    """
    m = TIMESTAMP_RE.match(value.strip()) if isinstance(value, str) else None
    if not m:
        raise TimestampRejected(f"{value!r} does not match H:MM:SS")
    seconds = int(m.group(1)) * 3600 + int(m.group(2)) * 60 + int(m.group(3))
    if transcript_duration is not None and seconds > transcript_duration + TIMESTAMP_SLACK_S:
        raise TimestampRejected(
            f"{value} lies beyond the transcript end ({format_timestamp(transcript_duration)})"
        )
    return seconds
