"""Chat-completion endpoint evaluation: dispatch, parsing, aggregation.

Speaks the common ``POST {base_url}/chat/completions`` JSON dialect.
Transport failures retry with exponential backoff and full jitter; runs
evaluate records through a bounded worker pool, reassemble outcomes in
input order, and always persist raw completions so a run can be re-scored
offline without touching the endpoint again.
"""

from __future__ import annotations

import json
import os
import re
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional

from . import metrics
from ._retry import RetryableFailure, run_with_retries
from .errors import ProtocolError, TransportError

PARSED = "parsed"
FALLBACK_PARSED = "fallback-parsed"
UNPARSEABLE = "unparseable"

_LABEL_SYNONYMS = {
    "successful": 1,
    "unsuccessful": 0,
    "yes": 1,
    "no": 0,
    "1": 1,
    "0": 0,
}

_PRIMARY_RE = re.compile(
    r"\bprediction\s*:\s*\W*?(unsuccessful|successful|yes|no|1|0)\b",
    re.IGNORECASE | re.DOTALL,
)
_JUSTIFICATION_RE = re.compile(r"\bjustification\s*:\s*(.*)\Z", re.IGNORECASE | re.DOTALL)
# Fallback scan only trusts the two canonical label words; yes/no/1/0 are
# too common in free text outside the prediction slot.
_FALLBACK_RE = re.compile(r"\b(unsuccessful|successful)\b", re.IGNORECASE)


@dataclass(frozen=True)
class EndpointConfig:
    base_url: str
    model: str
    api_key_env: str = ""
    temperature: float = 0.0
    max_completion_tokens: int = 128
    timeout_s: float = 60.0
    max_retries: int = 3
    max_in_flight: int = 4

    def validate(self) -> None:
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.max_in_flight < 1:
            raise ValueError("max_in_flight must be >= 1")
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")


@dataclass(frozen=True)
class ParsedResponse:
    label: Optional[int]
    justification: Optional[str]
    raw: str
    parse_status: str

    def to_dict(self) -> dict:
        return {
            "label": self.label,
            "justification": self.justification,
            "parse_status": self.parse_status,
        }


@dataclass(frozen=True)
class CompletionResult:
    text: str
    attempts: int
    latency_ms: float


@dataclass(frozen=True)
class EvalOutcome:
    org_id: str
    true_label: int
    response: ParsedResponse
    correct: int
    latency_ms: float
    attempts: int


@dataclass
class EvalResult:
    outcomes: list
    report: metrics.ClassificationReport
    parse_failures: int
    transport_failures: int = 0


def _default_transport(url, payload, timeout_s, headers):
    import requests

    try:
        resp = requests.post(url, json=payload, timeout=timeout_s, headers=headers)
    except requests.RequestException as exc:
        raise RetryableFailure(str(exc))
    return resp.status_code, resp.text


def chat_complete(
    endpoint: EndpointConfig,
    messages,
    transport=None,
    sleep=time.sleep,
    rng=None,
) -> CompletionResult:
    """Request one completion; returns the first choice's message content.

    Retries timeouts, connection failures, 429 and 5xx with exponential
    backoff (base 1 s, factor 2, full jitter) up to ``max_retries`` extra
    attempts; other 4xx fail immediately. A well-formed transport answer
    that is not the expected JSON shape raises ProtocolError.
    """
    endpoint.validate()
    if not messages:
        raise ValueError("messages must be non-empty")
    transport = transport or _default_transport
    url = endpoint.base_url.rstrip("/") + "/chat/completions"
    payload = {
        "model": endpoint.model,
        "messages": list(messages),
        "temperature": endpoint.temperature,
        "max_tokens": endpoint.max_completion_tokens,
    }
    headers = {"Content-Type": "application/json"}
    if endpoint.api_key_env:
        key = os.environ.get(endpoint.api_key_env, "")
        if key:
            headers["Authorization"] = f"Bearer {key}"

    def send():
        return transport(url, payload, endpoint.timeout_s, headers)

    started = time.monotonic()
    _, body, attempt_log = run_with_retries(
        send, endpoint.max_retries, sleep=sleep, rng=rng
    )
    latency_ms = (time.monotonic() - started) * 1000.0
    try:
        obj = json.loads(body)
        content = obj["choices"][0]["message"]["content"]
    except (json.JSONDecodeError, KeyError, IndexError, TypeError) as exc:
        raise ProtocolError(f"malformed chat-completion response: {exc}")
    if not isinstance(content, str):
        raise ProtocolError("completion content is not a string")
    return CompletionResult(text=content, attempts=len(attempt_log), latency_ms=latency_ms)


def parse_response(raw: str) -> ParsedResponse:
    """Decode a completion into (label, justification).

    Primary grammar: case-insensitive ``prediction:`` immediately followed
    by a label word (successful/unsuccessful, yes/no, 1/0), then an optional
    ``justification:`` capturing the remainder. Fallback: the first
    standalone canonical label word anywhere. Unparseable is a value, not
    an error.
    """
    m = _PRIMARY_RE.search(raw)
    if m:
        label = _LABEL_SYNONYMS[m.group(1).lower()]
        jm = _JUSTIFICATION_RE.search(raw, m.end())
        justification = jm.group(1).strip() if jm else None
        if justification == "":
            justification = None
        return ParsedResponse(
            label=label, justification=justification, raw=raw, parse_status=PARSED
        )
    fm = _FALLBACK_RE.search(raw)
    if fm:
        label = _LABEL_SYNONYMS[fm.group(1).lower()]
        return ParsedResponse(
            label=label, justification=None, raw=raw, parse_status=FALLBACK_PARSED
        )
    return ParsedResponse(label=None, justification=None, raw=raw, parse_status=UNPARSEABLE)


def _record_payload_messages(record) -> list:
    return [{"role": m.role, "content": m.content} for m in record.messages]


def run_eval(
    endpoint: EndpointConfig,
    records,
    transport=None,
    audit_path=None,
    sleep=time.sleep,
    rng=None,
) -> EvalResult:
    """Evaluate every record against the endpoint.

    At most ``endpoint.max_in_flight`` requests are outstanding at once;
    outcomes come back in input order regardless of completion order.
    Per-record transport failures are tallied and scored as unparseable
    (hence incorrect), never aborting the run. When ``audit_path`` is set,
    one JSONL line per record persists the request, raw completion and
    parse for offline re-scoring.
    """
    endpoint.validate()
    records = list(records)
    if not records:
        raise ValueError("no records to evaluate")
    for record in records:
        if record.label not in (0, 1):
            raise ValueError("records must carry a true 0/1 label for scoring")

    results: list = [None] * len(records)
    transport_failures_lock = threading.Lock()
    transport_failures = [0]

    def one(index: int, record) -> None:
        started = time.monotonic()
        try:
            completion = chat_complete(
                endpoint,
                _record_payload_messages(record),
                transport=transport,
                sleep=sleep,
                rng=rng,
            )
            parsed = parse_response(completion.text)
            attempts = completion.attempts
            latency_ms = completion.latency_ms
        except (TransportError, ProtocolError) as exc:
            parsed = ParsedResponse(
                label=None,
                justification=None,
                raw=f"<transport failure: {exc}>",
                parse_status=UNPARSEABLE,
            )
            attempts = len(getattr(exc, "attempts", []) or []) or 1
            latency_ms = (time.monotonic() - started) * 1000.0
            with transport_failures_lock:
                transport_failures[0] += 1
        true_label = int(record.label)
        correct = 1 if parsed.label == true_label else 0
        results[index] = EvalOutcome(
            org_id=str(record.metadata.get("org_id", index)),
            true_label=true_label,
            response=parsed,
            correct=correct,
            latency_ms=latency_ms,
            attempts=attempts,
        )

    with ThreadPoolExecutor(max_workers=endpoint.max_in_flight) as pool:
        futures = [pool.submit(one, i, r) for i, r in enumerate(records)]
        for future in futures:
            future.result()

    preds = []
    labels = []
    parse_failures = 0
    for outcome in results:
        labels.append(outcome.true_label)
        if outcome.response.label is None:
            parse_failures += 1
            # Unparseable answers are scored as the wrong label rather than
            # dropped, so they depress accuracy as they should.
            preds.append(1 - outcome.true_label)
        else:
            preds.append(outcome.response.label)
    eval_report = metrics.report(metrics.confusion(preds, labels))

    if audit_path is not None:
        with open(audit_path, "w", encoding="utf-8") as fh:
            for record, outcome in zip(records, results):
                fh.write(
                    json.dumps(
                        {
                            "org_id": outcome.org_id,
                            "request": _record_payload_messages(record),
                            "raw": outcome.response.raw,
                            "parsed": outcome.response.to_dict(),
                            "latency_ms": outcome.latency_ms,
                        },
                        ensure_ascii=False,
                    )
                    + "\n"
                )

    return EvalResult(
        outcomes=results,
        report=eval_report,
        parse_failures=parse_failures,
        transport_failures=transport_failures[0],
    )


def score_audit_log(audit_path, labels_by_org) -> EvalResult:
    """Re-score a persisted audit log offline.

    ``labels_by_org`` maps org_id -> true 0/1 label (e.g. from the dataset
    JSONL the run was built from). Raw completions are re-parsed, so parser
    improvements apply retroactively.
    """
    outcomes = []
    preds, labels = [], []
    parse_failures = 0
    with open(audit_path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            entry = json.loads(line)
            org_id = entry["org_id"]
            if org_id not in labels_by_org:
                raise ValueError(f"no label for org_id {org_id!r} in the dataset")
            true_label = int(labels_by_org[org_id])
            parsed = parse_response(entry["raw"])
            if parsed.label is None:
                parse_failures += 1
                preds.append(1 - true_label)
            else:
                preds.append(parsed.label)
            labels.append(true_label)
            outcomes.append(
                EvalOutcome(
                    org_id=org_id,
                    true_label=true_label,
                    response=parsed,
                    correct=1 if parsed.label == true_label else 0,
                    latency_ms=float(entry.get("latency_ms", 0.0)),
                    attempts=0,
                )
            )
    if not outcomes:
        raise ValueError(f"audit log {audit_path} is empty")
    return EvalResult(
        outcomes=outcomes,
        report=metrics.report(metrics.confusion(preds, labels)),
        parse_failures=parse_failures,
    )
