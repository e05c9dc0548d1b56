"""Text-generation backends behind one request/reply interface.

Four roles exist: schema filtering, query building, pseudo-question
generation and structure synthesis.  Real serving goes through an
OpenAI-compatible chat-completions endpoint; tests and desk runs use the
deterministic doubles here (echo, template questions, and a gold-replay
oracle that can simulate learning windows and forgetting).

Input length is capped in whitespace tokens as a tokenizer-free
approximation; over-length prompts fail before any network call.
"""

from __future__ import annotations

import random
import re
import threading
import time
from dataclasses import dataclass, field
from typing import Callable, Mapping, Protocol

import httpx

from .errors import BackendError, OracleError, PromptTooLongError

ROLE_FILTER = "schema-filter"
ROLE_BUILDER = "query-builder"
ROLE_QUESTION = "question-generator"
ROLE_SYNTH = "structure-synthesizer"
ROLES = (ROLE_FILTER, ROLE_BUILDER, ROLE_QUESTION, ROLE_SYNTH)

MAX_OUTPUT_TOKENS = 256
MAX_INPUT_TOKENS = 1024


@dataclass(frozen=True)
class GenRequest:
    role: str
    prompt: str
    max_tokens: int = MAX_OUTPUT_TOKENS
    temperature: float = 0.0


@dataclass(frozen=True)
class GenReply:
    text: str
    finish_reason: str = "stop"
    latency_s: float = 0.0


class Backend(Protocol):
    identifier: str

    def generate(self, req: GenRequest) -> GenReply: ...


class EchoBackend:
    """Returns canned text; per-role strings or a single string for all."""

    def __init__(self, replies: str | Mapping[str, str] | Callable[[GenRequest], str]):
        self.replies = replies
        self.identifier = "echo"

    def generate(self, req: GenRequest) -> GenReply:
        if callable(self.replies):
            return GenReply(text=self.replies(req))
        if isinstance(self.replies, str):
            return GenReply(text=self.replies)
        if req.role not in self.replies:
            raise BackendError(f"echo backend has no reply for role {req.role!r}")
        return GenReply(text=self.replies[req.role])


class HttpChatBackend:
    """OpenAI-compatible chat-completions client with bounded retries.

    Transport failures and 429/5xx responses retry with exponential backoff;
    other HTTP errors are permanent and fail immediately.
    """

    TRANSIENT_STATUS = (429, 500, 502, 503, 504)

    def __init__(
        self,
        endpoint: str,
        model: str,
        api_key: str = "",
        timeout: float = 30.0,
        max_retries: int = 3,
        backoff_s: float = 0.5,
    ):
        self.endpoint = endpoint.rstrip("/")
        self.model = model
        self.api_key = api_key
        self.timeout = timeout
        self.max_retries = max_retries
        self.backoff_s = backoff_s
        self.identifier = f"http:{model}"

    def _post(self, payload: dict) -> httpx.Response:
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        return httpx.post(
            f"{self.endpoint}/v1/chat/completions",
            json=payload,
            headers=headers,
            timeout=self.timeout,
        )

    def generate(self, req: GenRequest) -> GenReply:
        payload = {
            "model": self.model,
            "messages": [{"role": "user", "content": req.prompt}],
            "temperature": req.temperature,
            "max_tokens": req.max_tokens,
        }
        last_error: Exception | None = None
        start = time.monotonic()
        for attempt in range(self.max_retries + 1):
            if attempt:
                time.sleep(self.backoff_s * (2 ** (attempt - 1)))
            try:
                resp = self._post(payload)
            except httpx.TransportError as exc:
                last_error = exc
                continue
            if resp.status_code in self.TRANSIENT_STATUS:
                last_error = BackendError(f"transient status {resp.status_code}")
                continue
            if resp.status_code != 200:
                raise BackendError(f"backend returned {resp.status_code}: {resp.text[:200]}")
            body = resp.json()
            try:
                choice = body["choices"][0]
                text = choice["message"]["content"]
                finish = choice.get("finish_reason", "stop")
            except (KeyError, IndexError, TypeError) as exc:
                raise BackendError(f"malformed completion payload: {exc}") from exc
            return GenReply(text=text, finish_reason=finish,
                            latency_s=time.monotonic() - start)
        raise BackendError(f"transport failed after {self.max_retries + 1} tries: {last_error}")


@dataclass(frozen=True)
class OracleRecord:
    sample_id: str
    task_name: str
    question: str
    outputs: Mapping[str, str]  # role -> gold text


class OracleBackend:
    """Replays gold outputs for known samples, with simulated forgetting.

    A request is matched to its sample by locating the sample's question
    inside the prompt (questions must be unique across the indexed corpus;
    the longest match wins).  Samples of tasks inside the learning window
    answer with gold text, flipped to a corrupted variant with probability
    ``p`` per sample; samples outside the window always answer corrupted.
    Corruption deterministically substitutes a different same-task sample's
    gold output, seeded by ``f"{seed}:{sample_id}"``.
    """

    def __init__(self, records: list[OracleRecord], p: float = 0.0, seed: int = 0,
                 window: set[str] | None = None):
        self.records = list(records)
        self.p = p
        self.seed = seed
        self.window = set(window) if window is not None else {r.task_name for r in records}
        self.identifier = f"oracle:p={p}:seed={seed}"

    def set_window(self, task_names) -> None:
        self.window = set(task_names)

    def _match(self, prompt: str) -> OracleRecord:
        best: OracleRecord | None = None
        for rec in self.records:
            if rec.question and rec.question in prompt:
                if best is None or len(rec.question) > len(best.question):
                    best = rec
        if best is None:
            raise OracleError("request does not contain any known sample's question")
        return best

    def _corrupted(self, rec: OracleRecord, role: str) -> str:
        rng = random.Random(f"{self.seed}:{rec.sample_id}:alt")
        pool = [
            r for r in self.records
            if r.task_name == rec.task_name and r.sample_id != rec.sample_id
            and role in r.outputs
        ]
        if not pool:
            return f"__forgotten__ {rec.outputs.get(role, '')}"
        return pool[rng.randrange(len(pool))].outputs[role]

    def generate(self, req: GenRequest) -> GenReply:
        rec = self._match(req.prompt)
        if req.role not in rec.outputs:
            raise OracleError(f"sample {rec.sample_id} has no gold for role {req.role!r}")
        gold = rec.outputs[req.role]
        if rec.task_name in self.window:
            if self.p > 0:
                coin = random.Random(f"{self.seed}:{rec.sample_id}:coin").random()
                if coin < self.p:
                    return GenReply(text=self._corrupted(rec, req.role))
            return GenReply(text=gold)
        return GenReply(text=self._corrupted(rec, req.role))


_OP_WORDS = {
    ">": "greater than", "<": "less than", "=": "equal to", "!=": "not equal to",
    ">=": "at least", "<=": "at most",
}

_COUNT_SQL_RE = re.compile(
    r"select count\(\*\) from (\S+) where (\S+) (>=|<=|!=|>|<|=) (\S+)$", re.I
)
_SEXPR_JOIN_RE = re.compile(r"\(AND (\S+) \(JOIN (\S+) (\S+)\)\)$")
_TOP_INTENT_RE = re.compile(r"\[IN:(\S+)")

# per-language question templates for the deterministic mock generator
QUESTION_TEMPLATES = {
    "sql_count": "How many rows of {table} have {column} {op} {value}?",
    "sql": "Which rows of {table} match the given conditions?",
    "sexpr_join": "Which {cls} is connected to {entity} via {relation}?",
    "sexpr": "Which entities does the expression over {head} describe?",
    "sparql": "What values of {var} satisfy the graph pattern over {relation}?",
    "top": "As a user, request {intent} with the given details.",
}


class TemplateQuestionBackend:
    """Deterministic pseudo-question generator for tests and desk runs.

    Pulls the query text back out of the question-generation prompt and
    expands a fixed per-language template.
    """

    identifier = "template-questions"

    def generate(self, req: GenRequest) -> GenReply:
        if req.role != ROLE_QUESTION:
            raise BackendError(f"template backend only serves {ROLE_QUESTION!r}")
        m = re.search(r"question:\n(.*?)\n\nschema:\n", req.prompt, re.S)
        if not m:
            raise BackendError("prompt does not follow the question-generation template")
        return GenReply(text=question_for_query(m.group(1).strip()))


def question_for_query(query: str) -> str:
    m = _COUNT_SQL_RE.match(query.strip())
    if m:
        table, column, op, value = m.groups()
        return QUESTION_TEMPLATES["sql_count"].format(
            table=table, column=column, op=_OP_WORDS[op], value=value.strip("'")
        )
    text = query.strip()
    if text.startswith("("):
        j = _SEXPR_JOIN_RE.match(text)
        if j:
            return QUESTION_TEMPLATES["sexpr_join"].format(
                cls=j.group(1), relation=j.group(2), entity=j.group(3)
            )
        head = text.split()[0].lstrip("(")
        return QUESTION_TEMPLATES["sexpr"].format(head=head)
    if text.upper().startswith(("PREFIX", "SELECT")):
        rel = "the schema"
        for tok in text.split():
            if ":" in tok and not tok.startswith("?") and "<" not in tok \
                    and not tok.upper().startswith(("PREFIX", "SELECT", "WHERE")):
                rel = tok
                break
        var = next((t for t in text.split() if t.startswith("?")), "?x")
        return QUESTION_TEMPLATES["sparql"].format(var=var, relation=rel)
    if text.startswith("["):
        im = _TOP_INTENT_RE.search(text)
        intent = im.group(1).rstrip("]") if im else "the intent"
        return QUESTION_TEMPLATES["top"].format(intent=intent)
    table = "the table"
    toks = text.split()
    if "from" in [t.lower() for t in toks]:
        table = toks[[t.lower() for t in toks].index("from") + 1]
    return QUESTION_TEMPLATES["sql"].format(table=table)


class GenerationClient:
    """Routes requests by role, enforces limits, bounds in-flight calls."""

    def __init__(
        self,
        role_backends: Mapping[str, Backend],
        max_input_tokens: int = MAX_INPUT_TOKENS,
        max_concurrency: int = 4,
    ):
        self.role_backends = dict(role_backends)
        self.max_input_tokens = max_input_tokens
        self._sem = threading.BoundedSemaphore(max_concurrency)

    def backend_for(self, role: str) -> Backend:
        try:
            return self.role_backends[role]
        except KeyError:
            raise BackendError(f"no backend configured for role {role!r}") from None

    def generate(self, req: GenRequest) -> GenReply:
        backend = self.backend_for(req.role)
        n_tokens = len(req.prompt.split())
        if n_tokens > self.max_input_tokens:
            raise PromptTooLongError(
                f"prompt has {n_tokens} tokens, limit {self.max_input_tokens}"
            )
        with self._sem:
            return backend.generate(req)

    @property
    def identifiers(self) -> dict[str, str]:
        return {role: b.identifier for role, b in self.role_backends.items()}
