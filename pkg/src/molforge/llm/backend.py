"""HTTP transport to an OpenAI-compatible server, with retries on throttling and server errors."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Callable, Protocol

import httpx

log = logging.getLogger(__name__)

RETRY_STATUS = frozenset({429, 500, 502, 503, 504})


class GatewayError(RuntimeError):
    pass


class TransportError(GatewayError):
    pass


class RateLimited(GatewayError):
    pass


class MalformedResponse(GatewayError):
    pass


class Backend(Protocol):
    def post(self, path: str, payload: dict) -> dict: ...


def backoff_delay(attempt: int, base: float, cap: float) -> float:
    return min(cap, base * 2**attempt)


@dataclass
class HttpBackend:
    base_url: str
    api_key: str | None = None
    timeout: float = 120.0
    max_retries: int = 4
    backoff_base: float = 0.5
    backoff_cap: float = 8.0
    sleep: Callable[[float], None] = time.sleep
    transport: httpx.BaseTransport | None = None
    _client: httpx.Client | None = field(default=None, init=False, repr=False)

    @property
    def client(self) -> httpx.Client:
        if self._client is None:
            headers = {"Authorization": f"Bearer {self.api_key}"} if self.api_key else {}
            self._client = httpx.Client(
                base_url=self.base_url.rstrip("/"),
                headers=headers,
                timeout=self.timeout,
                transport=self.transport,
            )
        return self._client

    def close(self):
        if self._client is not None:
            self._client.close()
            self._client = None

    def post(self, path: str, payload: dict) -> dict:
        last: GatewayError | None = None
        for attempt in range(self.max_retries + 1):
            if attempt:
                delay = backoff_delay(attempt - 1, self.backoff_base, self.backoff_cap)
                log.warning("retrying %s after %s (attempt %d, sleeping %.2fs)", path, last, attempt, delay)
                self.sleep(delay)
            try:
                response = self.client.post(path, json=payload)
            except httpx.TransportError as exc:
                last = TransportError(f"{path}: {exc}")
                continue
            if response.status_code == 429:
                last = RateLimited(f"{path}: HTTP 429")
                continue
            if response.status_code in RETRY_STATUS:
                last = TransportError(f"{path}: HTTP {response.status_code}")
                continue
            if response.status_code >= 400:
                raise TransportError(f"{path}: HTTP {response.status_code}: {response.text[:200]}")
            try:
                body = response.json()
            except ValueError as exc:
                raise MalformedResponse(f"{path}: response is not JSON") from exc
            if not isinstance(body, dict):
                raise MalformedResponse(f"{path}: response is not a JSON object")
            return body
        raise last
