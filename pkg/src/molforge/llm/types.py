"""Prompt, generation-parameter and scored-text value types."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

ROLES = ("system", "user", "assistant")


class EmptyContinuation(ValueError):
    pass


@dataclass(frozen=True)
class GenerationParams:
    temperature: float = 0.75
    top_p: float = 0.85
    top_k: int = 40
    max_new_tokens: int = 512
    num_return_sequences: int = 1

    def __post_init__(self):
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if not 0 < self.top_p <= 1:
            raise ValueError("top_p must lie in (0, 1]")
        if self.top_k < 1 or self.max_new_tokens < 1 or self.num_return_sequences < 1:
            raise ValueError("top_k, max_new_tokens and num_return_sequences must be positive")


@dataclass(frozen=True)
class Message:
    role: str
    content: str

    def __post_init__(self):
        if self.role not in ROLES:
            raise ValueError(f"unknown role {self.role!r}")


@dataclass(frozen=True)
class ChatPrompt:
    """A system message followed by alternating user and assistant turns."""

    messages: tuple[Message, ...]
    params: GenerationParams = field(default_factory=GenerationParams)

    def __post_init__(self):
        object.__setattr__(self, "messages", tuple(self.messages))
        if not self.messages or self.messages[0].role != "system":
            raise ValueError("first message must have role 'system'")
        for k, msg in enumerate(self.messages[1:]):
            expected = "user" if k % 2 == 0 else "assistant"
            if msg.role != expected:
                raise ValueError(f"message {k + 1} has role {msg.role!r}, expected {expected!r}")

    @classmethod
    def build(cls, system: str, user: str, params: GenerationParams | None = None) -> "ChatPrompt":
        return cls((Message("system", system), Message("user", user)), params or GenerationParams())

    def as_dicts(self) -> list[dict]:
        return [{"role": m.role, "content": m.content} for m in self.messages]

    def canonical(self) -> str:
        """Stable serialization used in cache keys."""
        return json.dumps(
            {"messages": self.as_dicts(), "params": asdict(self.params)},
            sort_keys=True,
            separators=(",", ":"),
            ensure_ascii=False,
        )


@dataclass(frozen=True)
class ScoredText:
    text: str
    logprobs: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "logprobs", tuple(float(x) for x in self.logprobs))
        if any(x > 0 for x in self.logprobs):
            raise ValueError("log probabilities must be <= 0")

    @property
    def token_count(self) -> int:
        return len(self.logprobs)


def mean_nll(scored: ScoredText) -> float:
    if scored.token_count == 0:
        raise EmptyContinuation("cannot score an empty continuation")
    return -math.fsum(scored.logprobs) / scored.token_count


def perplexity(scored: ScoredText) -> float:
    """exp of the per-token mean negative log-likelihood."""
    return math.exp(mean_nll(scored))
