"""Teacher and scorer model access over an OpenAI-compatible wire protocol."""

from .backend import Backend, GatewayError, HttpBackend, MalformedResponse, RateLimited, TransportError
from .cache import ResponseCache, request_key
from .gateway import Gateway
from .mock import MockBackend
from .types import (
    ChatPrompt,
    EmptyContinuation,
    GenerationParams,
    Message,
    ScoredText,
    mean_nll,
    perplexity,
)

__all__ = [
    "Backend",
    "ChatPrompt",
    "EmptyContinuation",
    "Gateway",
    "GatewayError",
    "GenerationParams",
    "HttpBackend",
    "MalformedResponse",
    "Message",
    "MockBackend",
    "RateLimited",
    "ResponseCache",
    "ScoredText",
    "TransportError",
    "mean_nll",
    "perplexity",
    "request_key",
]
