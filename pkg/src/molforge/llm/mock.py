"""In-process stand-ins for teacher and scorer servers.

Both speak the same JSON shapes as an OpenAI-compatible server, so the
gateway's parsing and caching paths run unchanged in offline mode.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Callable

from ..chem import SmilesError, parse_smiles
from ..fingerprints import fnv1a_64, load_structural_keys, structural_keys
from .backend import TransportError

_INPUT_LINE = re.compile(r"^(Molecule SMILES|Caption): (.+)$", re.MULTILINE)
_SCORER_TOKEN = re.compile(r"\s*\S+")


def _describe_smiles(smiles: str) -> str:
    try:
        graph = parse_smiles(smiles)
    except SmilesError:
        return "The SMILES could not be read, so no substructures can be aligned."
    keys = load_structural_keys()
    labels = [keys[i].label for i in structural_keys(graph).on_bits()]
    heavy = sum(1 for a in graph.atoms if a.element != "H")
    lines = [f"The molecule has {heavy} heavy atoms."]
    lines += [f"Structural feature '{label}' should be reflected in the description." for label in labels[:8]]
    return "\n".join(lines)


def _describe_caption(caption: str) -> str:
    words = [w.strip(".,;") for w in caption.split()]
    salient = sorted({w for w in words if len(w) > 6}, key=lambda w: (-len(w), w))[:5]
    lines = [f"The phrase '{w}' constrains the structure to write." for w in salient]
    return "\n".join(lines) or "The caption gives no specific structural hints."


@dataclass
class MockBackend:
    """Deterministic teacher (chat) and scorer (echo logprobs) responses.

    ``uniform_logprob`` makes every scored token carry the same value;
    ``fail_when`` lets tests inject transport failures for chosen payloads.
    """

    uniform_logprob: float | None = None
    fail_when: Callable[[str, dict], bool] | None = None

    def post(self, path: str, payload: dict) -> dict:
        if self.fail_when is not None and self.fail_when(path, payload):
            raise TransportError(f"{path}: injected failure")
        if path == "/chat/completions":
            return self._chat(payload)
        if path == "/completions":
            return self._score(payload)
        raise TransportError(f"{path}: not served by the mock backend")

    def _chat(self, payload: dict) -> dict:
        user = [m["content"] for m in payload["messages"] if m["role"] == "user"][-1]
        found = _INPUT_LINE.findall(user)
        if not found:
            text = "No input was found in the request."
        elif found[-1][0] == "Molecule SMILES":
            text = _describe_smiles(found[-1][1].strip())
        else:
            text = _describe_caption(found[-1][1].strip())
        if len(found) > 1:
            # reflection: a reordered, slightly pruned rewrite of the zero-shot answer
            lines = text.splitlines()
            lines.sort(key=lambda ln: fnv1a_64(user + ln))
            text = "\n".join(lines[: max(1, len(lines) - 1)])
        return {
            "id": f"mock-{fnv1a_64(user):016x}",
            "object": "chat.completion",
            "model": payload.get("model", "mock"),
            "choices": [{"index": 0, "message": {"role": "assistant", "content": text}, "finish_reason": "stop"}],
        }

    def _score(self, payload: dict) -> dict:
        text = payload["prompt"]
        tokens, offsets, values = [], [], []
        prev = ""
        for m in _SCORER_TOKEN.finditer(text):
            tokens.append(m.group())
            offsets.append(m.start())
            if self.uniform_logprob is not None:
                values.append(self.uniform_logprob)
            else:
                values.append(-(0.05 + 3.0 * (fnv1a_64(prev + "\x00" + m.group().strip()) % 10000) / 10000))
            prev = m.group().strip()
        if values:
            values[0] = None
        tokens.append(" <eos>")
        offsets.append(len(text))
        values.append(-0.1)
        return {
            "object": "text_completion",
            "model": payload.get("model", "mock"),
            "choices": [
                {
                    "index": 0,
                    "text": text + " <eos>",
                    "logprobs": {"tokens": tokens, "token_logprobs": values, "text_offset": offsets},
                    "finish_reason": "length",
                }
            ],
        }
