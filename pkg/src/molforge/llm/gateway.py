"""Cached, concurrency-bounded access to teacher and scorer models."""

from __future__ import annotations

import threading
from dataclasses import dataclass, field

from .backend import Backend, MalformedResponse
from .cache import ResponseCache, request_key
from .types import ChatPrompt, EmptyContinuation, ScoredText


@dataclass
class Gateway:
    """One model behind one backend.

    ``network_calls`` counts requests that missed the cache.
    """

    backend: Backend
    model: str
    cache: ResponseCache = field(default_factory=ResponseCache)
    max_in_flight: int = 8
    network_calls: int = 0

    def __post_init__(self):
        self._slots = threading.BoundedSemaphore(self.max_in_flight)
        self._count_lock = threading.Lock()

    def _request(self, path: str, payload: dict) -> dict:
        key = request_key({"path": path, "payload": payload})
        cached = self.cache.get(key)
        if cached is not None:
            return cached
        with self._slots:
            response = self.backend.post(path, payload)
        with self._count_lock:
            self.network_calls += 1
        self.cache.put(key, {"path": path, "payload": payload}, response)
        return response

    def chat_complete(self, prompt: ChatPrompt) -> str:
        p = prompt.params
        payload = {
            "model": self.model,
            "messages": prompt.as_dicts(),
            "temperature": p.temperature,
            "top_p": p.top_p,
            "top_k": p.top_k,
            "max_tokens": p.max_new_tokens,
            "n": p.num_return_sequences,
        }
        body = self._request("/chat/completions", payload)
        try:
            content = body["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise MalformedResponse(f"chat response lacks choices[0].message.content: {exc!r}") from exc
        if not isinstance(content, str):
            raise MalformedResponse("chat response content is not a string")
        return content

    def score_continuation(self, condition: str, continuation: str) -> ScoredText:
        """Log-probabilities of the tokens of ``continuation`` given ``condition``.

        Uses prompt echo: the server returns per-token logprobs for the whole
        prompt, and the tokens overlapping the continuation span are kept.
        """
        if not continuation:
            raise EmptyContinuation("continuation is empty")
        text = condition + continuation
        payload = {
            "model": self.model,
            "prompt": text,
            "echo": True,
            "logprobs": 1,
            "max_tokens": 1,
            "temperature": 0.0,
        }
        body = self._request("/completions", payload)
        try:
            lp = body["choices"][0]["logprobs"]
            tokens, values, offsets = lp["tokens"], lp["token_logprobs"], lp["text_offset"]
        except (KeyError, IndexError, TypeError) as exc:
            raise MalformedResponse(f"completion response lacks echoed logprobs: {exc!r}") from exc
        if not len(tokens) == len(values) == len(offsets):
            raise MalformedResponse("logprob arrays differ in length")
        start, end = len(condition), len(text)
        selected = []
        for tok, value, off in zip(tokens, values, offsets):
            if off >= end or off + len(tok) <= start:
                continue
            if value is None:
                raise MalformedResponse("continuation token without a logprob")
            selected.append(min(0.0, float(value)))
        if not selected:
            raise MalformedResponse("no echoed tokens cover the continuation")
        return ScoredText(continuation, tuple(selected))
