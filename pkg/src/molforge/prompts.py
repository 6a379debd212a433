"""Prompt template loading and rendering.

Template files are plain text: a ``version: N`` header, then ``[section]``
blocks (``system``, ``user``, ``example``, ``condition``) holding
``string.Template`` bodies.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from string import Template

DIRECTIONS = ("mol2cap", "cap2mol")

_SECTION_RE = re.compile(r"^\[(\w+)\]$")

VOCABULARY = {
    "mol2cap": {
        "source_label": "Molecule SMILES",
        "target_label": "Caption",
        "source_name": "molecule SMILES",
        "target_name": "caption",
        "unit_name": "substructures",
        "unit_short": "substructure",
        "task_instruction": "Write a caption describing the given molecule.",
    },
    "cap2mol": {
        "source_label": "Caption",
        "target_label": "Molecule SMILES",
        "source_name": "caption",
        "target_name": "molecule SMILES",
        "unit_name": "phrases",
        "unit_short": "phrase",
        "task_instruction": "Write the SMILES of the molecule described by the given caption.",
    },
}


@dataclass(frozen=True)
class PromptTemplate:
    name: str
    version: int
    sections: dict[str, str]

    def render(self, section: str, direction: str, **values) -> str:
        if direction not in VOCABULARY:
            raise ValueError(f"unknown direction {direction!r}")
        if section not in self.sections:
            raise KeyError(f"template {self.name!r} has no [{section}] section")
        return Template(self.sections[section]).substitute(VOCABULARY[direction], **values)


def parse_template(name: str, text: str) -> PromptTemplate:
    lines = text.splitlines()
    header = next((ln for ln in lines if ln.strip()), "")
    m = re.fullmatch(r"version:\s*(\d+)", header.strip())
    if m is None:
        raise ValueError(f"template {name!r} must start with a 'version: N' line")
    sections: dict[str, list[str]] = {}
    current = None
    for line in lines[lines.index(header) + 1 :]:
        sm = _SECTION_RE.match(line.strip())
        if sm:
            current = sections.setdefault(sm.group(1), [])
        elif current is not None:
            current.append(line)
    return PromptTemplate(name, int(m.group(1)), {k: "\n".join(v).strip("\n") for k, v in sections.items()})


@lru_cache(maxsize=None)
def load_template(name: str) -> PromptTemplate:
    text = resources.files("molforge.templates").joinpath(f"{name}.txt").read_text("utf-8")
    return parse_template(name, text)


def template_versions() -> dict[str, int]:
    names = ["zero_shot", "reflection", "score", "naive_sft", "instruction", "icmt", "cot_icmt"]
    return {n: load_template(n).version for n in names}
