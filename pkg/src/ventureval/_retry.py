"""Retry loop with exponential backoff and full jitter.

Shared by the chat-completion client and the HTTP embedding provider so
both follow one policy: retry on connection failures, timeouts, 429 and
5xx; fail immediately on any other 4xx.
"""

from __future__ import annotations

import random
import time

from .errors import TransportError

BACKOFF_BASE_S = 1.0
BACKOFF_FACTOR = 2.0

RETRYABLE_STATUS = frozenset({429, 500, 502, 503, 504})


def _is_retryable(status: int) -> bool:
    return status in RETRYABLE_STATUS or status >= 500


class RetryableFailure(Exception):
    """Raised by a transport for network-level failures worth retrying."""


def run_with_retries(send, max_retries, sleep=time.sleep, rng=None):
    """Call ``send()`` until it yields a non-retryable outcome.

    ``send`` returns ``(status, body)``; it may raise RetryableFailure for
    connection-level problems. Makes at most ``max_retries + 1`` attempts.
    Returns ``(status, body, attempt_log)`` on success; raises TransportError
    with the attempt log otherwise.
    """
    rng = rng or random.Random()
    attempt_log = []
    total = max_retries + 1
    for attempt in range(1, total + 1):
        try:
            status, body = send()
        except RetryableFailure as exc:
            attempt_log.append({"attempt": attempt, "error": str(exc)})
            status = None
        else:
            attempt_log.append({"attempt": attempt, "status": status})
            if status == 200:
                return status, body, attempt_log
            if not _is_retryable(status):
                raise TransportError(
                    f"non-retryable HTTP status {status}: {body[:200]}",
                    attempts=attempt_log,
                )
        if attempt < total:
            delay = BACKOFF_BASE_S * (BACKOFF_FACTOR ** (attempt - 1)) * rng.random()
            attempt_log[-1]["backoff_s"] = round(delay, 6)
            sleep(delay)
    raise TransportError(
        f"retries exhausted after {total} attempts", attempts=attempt_log
    )
