"""Chat-completion client: prompt templating, cached transport, strict parsing.

The transport is a callable ``request dict -> response text`` so tests can
substitute a mock. Exchanges are cached on disk, one JSON file per request
hash, written atomically (write-then-rename); the hash is a pure function of
(model, rendered prompt, decoding parameters), so identical requests hit the
same cache entry across process restarts and large batches are resumable.
"""

from __future__ import annotations

import json
import os
import re
import string
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from hashlib import sha256
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np

from .errors import (
    ConfigurationError,
    DistributionParseError,
    PromptError,
    TransportError,
)
from .ingest import GroupedDistribution
from .respond import BackendConfig
from .schema import Question

API_KEY_ENV = "PERSONA_SYNTH_API_KEY"

# Accepted unit-sum bands for parsed replies: fractions or percentages.
FRACTION_BAND = (0.98, 1.02)
PERCENT_BAND = (98.0, 102.0)

Transport = Callable[[dict], str]


@dataclass(frozen=True)
class PromptTemplate:
    """Template text for one method tier, with named placeholders.

    Recognized placeholders: ``{question}``, ``{options}``, ``{persona}``,
    ``{stats}``. Rendering fails if a placeholder cannot be filled from the
    provided context, so no prompt ever leaves with a hole in it.
    """

    tier: str
    text: str


_COMMON_FOOTER = (
    "Answer with one line per option in the exact form 'Option: share%'. "
    "Shares must sum to 100."
)

DEFAULT_TEMPLATES: dict[str, PromptTemplate] = {
    "naive": PromptTemplate(
        tier="naive",
        text=(
            "Generate a population based on general demographic knowledge.\n"
            "Estimate the share of each response to the survey question below "
            "for that population.\n\nQuestion: {question}\nOptions: {options}\n\n"
            + _COMMON_FOOTER
        ),
    ),
    "structured": PromptTemplate(
        tier="structured",
        text=(
            "The population structure is aligned with official demographic "
            "benchmarks.\nEstimate the share of each response to the survey "
            "question below for that population.\n\nQuestion: {question}\n"
            "Options: {options}\n\n" + _COMMON_FOOTER
        ),
    ),
    "guided": PromptTemplate(
        tier="guided",
        text=(
            "The population structure is aligned with official demographic "
            "benchmarks, and responses should match the expected statistics "
            "below.\n\nExpected statistics:\n{stats}\n\nQuestion: {question}\n"
            "Options: {options}\n\n" + _COMMON_FOOTER
        ),
    ),
    "naive-persona": PromptTemplate(
        tier="naive",
        text=(
            "Simulate mobility preferences while maintaining realistic "
            "correlations between age, household type and economic status.\n"
            "You are answering as a person with this profile:\n{persona}\n\n"
            "Question: {question}\nOptions: {options}\n\n" + _COMMON_FOOTER
        ),
    ),
    "structured-persona": PromptTemplate(
        tier="structured",
        text=(
            "Simulate mobility preferences while maintaining realistic "
            "correlations between age, household type and economic status. "
            "Persona weights are aligned with official demographic benchmarks.\n"
            "You are answering as a person with this profile:\n{persona}\n\n"
            "Question: {question}\nOptions: {options}\n\n" + _COMMON_FOOTER
        ),
    ),
    "guided-persona": PromptTemplate(
        tier="guided",
        text=(
            "Simulate mobility preferences while maintaining realistic "
            "correlations between age, household type and economic status. "
            "Persona weights are aligned with official demographic benchmarks, "
            "and responses should match the expected statistics below.\n\n"
            "Expected statistics:\n{stats}\n\n"
            "You are answering as a person with this profile:\n{persona}\n\n"
            "Question: {question}\nOptions: {options}\n\n" + _COMMON_FOOTER
        ),
    ),
}

_KNOWN_PLACEHOLDERS = {"question", "options", "persona", "stats"}


def default_template(tier: str, persona_based: bool) -> PromptTemplate:
    key = f"{tier}-persona" if persona_based else tier
    try:
        return DEFAULT_TEMPLATES[key]
    except KeyError:
        raise ConfigurationError(f"no default template for {key!r}") from None


def format_persona(persona: Mapping[str, str]) -> str:
    return "\n".join(f"- {name}: {label}" for name, label in persona.items())


def format_stats(stats: GroupedDistribution) -> str:
    """Target statistics rendered verbatim as percentages, one group per line."""
    lines = []
    for g, row in zip(stats.groups, stats.shares):
        cells = ", ".join(
            f"{resp}: {share * 100:.2f}%" for resp, share in zip(stats.responses, row)
        )
        lines.append(f"{stats.group_attribute} {g}: {cells}")
    return "\n".join(lines)


def render_prompt(
    template: PromptTemplate,
    question: Question,
    persona: Mapping[str, str] | None = None,
    stats: GroupedDistribution | None = None,
) -> str:
    """Deterministic substitution of the template's placeholders."""
    fields = {
        name
        for _, name, _, _ in string.Formatter().parse(template.text)
        if name is not None
    }
    unknown = fields - _KNOWN_PLACEHOLDERS
    if unknown:
        raise PromptError(f"template has unknown placeholder(s): {sorted(unknown)}")
    context: dict[str, str] = {
        "question": question.text,
        "options": ", ".join(question.responses),
    }
    if "persona" in fields:
        if persona is None:
            raise PromptError("template needs a persona but none was provided")
        context["persona"] = format_persona(persona)
    if "stats" in fields:
        if stats is None:
            raise PromptError("template needs expected statistics but none were provided")
        context["stats"] = format_stats(stats)
    return template.text.format(**context)


def canonical_request(cfg: BackendConfig, prompt: str) -> dict:
    """The wire payload; every field participates in the cache key."""
    return {
        "model": cfg.model,
        "messages": [{"role": "user", "content": prompt}],
        "temperature": cfg.temperature,
        "max_tokens": cfg.max_tokens,
    }


def request_hash(request: dict) -> str:
    return sha256(json.dumps(request, sort_keys=True).encode("utf-8")).hexdigest()


@dataclass
class LlmExchange:
    """One request/response pair with its cache identity and parse outcome."""

    request_hash: str
    model: str
    prompt: str
    response_text: str
    parse_status: str = "unparsed"
    timestamp: float = 0.0
    retries: int = 0

    def to_doc(self) -> dict:
        return {
            "request_hash": self.request_hash,
            "model": self.model,
            "prompt": self.prompt,
            "response_text": self.response_text,
            "parse_status": self.parse_status,
            "timestamp": self.timestamp,
            "retries": self.retries,
        }

    @classmethod
    def from_doc(cls, doc: Mapping) -> "LlmExchange":
        return cls(**{k: doc[k] for k in (
            "request_hash", "model", "prompt", "response_text", "parse_status",
            "timestamp", "retries",
        )})


class DiskCache:
    """One JSON document per exchange, named by request hash."""

    def __init__(self, directory: str | Path):
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)

    def path_for(self, key: str) -> Path:
        return self.directory / f"{key}.json"

    def load(self, key: str) -> LlmExchange | None:
        path = self.path_for(key)
        if not path.exists():
            return None
        return LlmExchange.from_doc(json.loads(path.read_text(encoding="utf-8")))

    def store(self, exchange: LlmExchange) -> None:
        path = self.path_for(exchange.request_hash)
        tmp = path.with_suffix(".tmp")
        tmp.write_text(json.dumps(exchange.to_doc(), indent=2, sort_keys=True),
                       encoding="utf-8")
        os.replace(tmp, path)


class HttpTransport:
    """POSTs chat-completion requests with the credential from the environment.

    The credential is read at construction time, before any network activity.
    """

    def __init__(self, base_url: str, timeout: float = 60.0,
                 api_key: str | None = None):
        self.base_url = base_url.rstrip("/")
        self.timeout = timeout
        self.api_key = api_key if api_key is not None else os.environ.get(API_KEY_ENV)
        if not self.api_key:
            raise ConfigurationError(
                f"no API credential: set {API_KEY_ENV} in the environment"
            )

    def __call__(self, request: dict) -> str:
        import requests

        try:
            response = requests.post(
                f"{self.base_url}/chat/completions",
                json=request,
                headers={"Authorization": f"Bearer {self.api_key}"},
                timeout=self.timeout,
            )
        except requests.RequestException as exc:
            raise TransportError(f"endpoint unreachable: {exc}") from exc
        if response.status_code != 200:
            raise TransportError(f"endpoint returned HTTP {response.status_code}")
        try:
            return response.json()["choices"][0]["message"]["content"]
        except (KeyError, IndexError, ValueError) as exc:
            raise TransportError(f"malformed completion payload: {exc}") from exc


class LlmClient:
    """Caching, retrying front end over a transport.

    Retries use exponential backoff (``backoff * 2**attempt``); the sleep
    function is injectable for tests. At most ``max_inflight`` transport
    calls run concurrently in :meth:`complete_many`, and duplicate prompts
    within a batch collapse to a single call.
    """

    def __init__(
        self,
        cfg: BackendConfig,
        transport: Transport | None = None,
        cache_dir: str | Path | None = None,
        max_inflight: int = 4,
        backoff: float = 0.5,
        sleep: Callable[[float], None] = time.sleep,
    ):
        self.cfg = cfg
        self._transport = transport
        directory = cache_dir or cfg.cache_dir
        self.cache = DiskCache(directory) if directory else None
        self.max_inflight = max_inflight
        self.backoff = backoff
        self.sleep = sleep

    def _resolve_transport(self) -> Transport:
        # Lazy: a fully cached run needs neither credential nor endpoint.
        if self._transport is None:
            if not self.cfg.base_url:
                raise ConfigurationError("llm backend requires base_url")
            self._transport = HttpTransport(self.cfg.base_url)
        return self._transport

    def complete(self, prompt: str) -> LlmExchange:
        request = canonical_request(self.cfg, prompt)
        key = request_hash(request)
        if self.cache is not None:
            cached = self.cache.load(key)
            if cached is not None:
                return cached
        transport = self._resolve_transport()
        failures = 0
        while True:
            try:
                text = transport(request)
                break
            except TransportError:
                failures += 1
                if failures > self.cfg.max_retries:
                    raise TransportError(
                        f"giving up after {self.cfg.max_retries} retries"
                    ) from None
                self.sleep(self.backoff * 2 ** (failures - 1))
        exchange = LlmExchange(
            request_hash=key,
            model=self.cfg.model or "",
            prompt=prompt,
            response_text=text,
            parse_status="unparsed",
            timestamp=time.time(),
            retries=failures,
        )
        if self.cache is not None:
            self.cache.store(exchange)
        return exchange

    def complete_many(self, prompts: Sequence[str]) -> list[LlmExchange]:
        unique: dict[str, str] = {}
        keys = []
        for prompt in prompts:
            key = request_hash(canonical_request(self.cfg, prompt))
            keys.append(key)
            unique.setdefault(key, prompt)
        results: dict[str, LlmExchange] = {}
        with ThreadPoolExecutor(max_workers=self.max_inflight) as pool:
            for key, exchange in zip(
                unique, pool.map(self.complete, unique.values())
            ):
                results[key] = exchange
        return [results[key] for key in keys]

    def record_parse_status(self, exchange: LlmExchange, status: str) -> None:
        exchange.parse_status = status
        if self.cache is not None:
            self.cache.store(exchange)


def _strip_fences(text: str) -> str:
    text = text.strip()
    if text.startswith("```"):
        lines = text.splitlines()
        if len(lines) >= 3 and lines[-1].strip().startswith("```"):
            text = "\n".join(lines[1:-1]).strip()
    return text


def _number(value) -> float:
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        return float(value)
    if isinstance(value, str):
        return float(value.strip().rstrip("%").strip())
    raise ValueError(f"not a number: {value!r}")


def parse_distribution(raw: str, question: Question) -> np.ndarray:
    """Extract one share per response option from a structured reply.

    Accepts a JSON object mapping option labels to numbers, or one
    ``Option: share`` line per option. Percentages and fractions are both
    accepted; the vector is renormalized when its total lies within
    [0.98, 1.02] (or [98, 102] for percentages) and rejected otherwise.
    """
    text = _strip_fences(raw)
    values: dict[str, float] = {}
    obj = None
    try:
        obj = json.loads(text)
    except json.JSONDecodeError:
        match = re.search(r"\{.*\}", text, flags=re.DOTALL)
        if match:
            try:
                obj = json.loads(match.group(0))
            except json.JSONDecodeError:
                obj = None
    if isinstance(obj, Mapping):
        for option in question.responses:
            if option not in obj:
                raise DistributionParseError(
                    f"reply is missing option {option!r}", raw=raw
                )
            try:
                values[option] = _number(obj[option])
            except ValueError as exc:
                raise DistributionParseError(str(exc), raw=raw) from None
    else:
        for option in question.responses:
            pattern = re.compile(
                rf"^\s*[-*]?\s*{re.escape(option)}\s*[:=]\s*([0-9]+(?:\.[0-9]+)?)\s*%?\s*$",
                flags=re.MULTILINE,
            )
            matches = pattern.findall(text)
            if len(matches) != 1:
                raise DistributionParseError(
                    f"expected exactly one line for option {option!r}, "
                    f"found {len(matches)}",
                    raw=raw,
                )
            values[option] = float(matches[0])

    shares = np.array([values[option] for option in question.responses])
    if np.any(shares < 0):
        raise DistributionParseError("negative share in reply", raw=raw)
    total = float(shares.sum())
    if FRACTION_BAND[0] <= total <= FRACTION_BAND[1]:
        return shares / total
    if PERCENT_BAND[0] <= total <= PERCENT_BAND[1]:
        return shares / total
    raise DistributionParseError(
        f"shares total {total:.4f}, outside the accepted bands "
        f"{FRACTION_BAND} and {PERCENT_BAND}",
        raw=raw,
    )
