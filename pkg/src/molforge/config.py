"""Run configuration: defaults, config file, environment and flags, in rising precedence."""

from __future__ import annotations

import copy
import difflib
import json
import os
from dataclasses import dataclass, field, fields, is_dataclass
from pathlib import Path
from typing import Any, Mapping

import yaml

from .llm import GenerationParams
from .prompts import DIRECTIONS

ENV_TEACHER = "MOLFORGE_ENDPOINT"
ENV_SCORER = "MOLFORGE_SCORER_ENDPOINT"
ENV_API_KEY = "MOLFORGE_API_KEY"


class ConfigError(ValueError):
    pass


class UnknownKey(ConfigError):
    pass


class ConfigTypeError(ConfigError, TypeError):
    pass


@dataclass
class EndpointConfig:
    endpoint: str | None = None
    model: str = "default"
    timeout: float = 120.0
    max_retries: int = 4


@dataclass
class GenerationConfig:
    temperature: float = 0.75
    top_p: float = 0.85
    top_k: int = 40
    max_new_tokens: int = 512
    num_return_sequences: int = 1

    def params(self) -> GenerationParams:
        return GenerationParams(**{f.name: getattr(self, f.name) for f in fields(self)})


@dataclass
class RetrievalConfig:
    n_examples: int = 2
    k1: float = 1.5
    b: float = 0.75
    provider: str = "fingerprint"
    embedding_endpoint: str | None = None
    dimension: int = 2048


@dataclass
class PipelineConfig:
    max_workers: int = 8
    max_in_flight: int = 8
    failure_threshold: float = 0.05
    directions: list = field(default_factory=lambda: list(DIRECTIONS))
    allow_missing_k1: bool = False


@dataclass
class RunConfig:
    dataset: str | None = None
    run_dir: str = "runs/default"
    seed: int = 0
    mock: bool = False
    teacher: EndpointConfig = field(default_factory=EndpointConfig)
    scorer: EndpointConfig = field(default_factory=EndpointConfig)
    generation: GenerationConfig = field(default_factory=GenerationConfig)
    retrieval: RetrievalConfig = field(default_factory=RetrievalConfig)
    pipeline: PipelineConfig = field(default_factory=PipelineConfig)
    api_key: str | None = None

    def snapshot(self) -> dict:
        """Plain-dict view with secrets removed, suitable for a manifest."""
        data = to_dict(self)
        data.pop("api_key", None)
        return data

    @property
    def run_path(self) -> Path:
        return Path(self.run_dir)

    def validate(self, needs_dataset: bool = False, needs_teacher: bool = False, needs_scorer: bool = False):
        if needs_dataset:
            if not self.dataset:
                raise ConfigError("no dataset path configured (use --dataset or the 'dataset' key)")
            if not Path(self.dataset).is_file():
                raise ConfigError(f"dataset file {self.dataset!r} does not exist")
        if not self.mock:
            if needs_teacher and not self.teacher.endpoint:
                raise ConfigError(f"teacher endpoint missing: set {ENV_TEACHER} or teacher.endpoint, or use --mock")
            if needs_scorer and not (self.scorer.endpoint or self.teacher.endpoint):
                raise ConfigError(f"scorer endpoint missing: set {ENV_SCORER} or scorer.endpoint, or use --mock")
        unknown = set(self.pipeline.directions) - set(DIRECTIONS)
        if unknown:
            raise ConfigError(f"unknown directions {sorted(unknown)}")
        if not 0 <= self.pipeline.failure_threshold <= 1:
            raise ConfigError("pipeline.failure_threshold must lie in [0, 1]")
        if self.retrieval.n_examples < 1:
            raise ConfigError("retrieval.n_examples must be >= 1")
        if self.retrieval.provider not in ("fingerprint", "remote"):
            raise ConfigError("retrieval.provider must be 'fingerprint' or 'remote'")
        try:
            self.generation.params()
        except ValueError as exc:
            raise ConfigError(f"generation: {exc}") from exc


def to_dict(obj) -> Any:
    if is_dataclass(obj):
        return {f.name: to_dict(getattr(obj, f.name)) for f in fields(obj)}
    if isinstance(obj, list):
        return [to_dict(x) for x in obj]
    return obj


def _check_type(path: str, value, default):
    if default is None:
        if value is not None and not isinstance(value, str):
            raise ConfigTypeError(f"{path}: expected a string, got {type(value).__name__}")
        return value
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigTypeError(f"{path}: expected true/false, got {value!r}")
        return value
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigTypeError(f"{path}: expected an integer, got {value!r}")
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigTypeError(f"{path}: expected a number, got {value!r}")
        return float(value)
    if isinstance(default, list):
        if not isinstance(value, list):
            raise ConfigTypeError(f"{path}: expected a list, got {value!r}")
        return value
    if not isinstance(value, type(default)):
        raise ConfigTypeError(f"{path}: expected {type(default).__name__}, got {value!r}")
    return value


def _apply(target, data: Mapping, prefix: str = ""):
    names = {f.name: f for f in fields(target)}
    for key, value in data.items():
        path = f"{prefix}{key}"
        if key not in names:
            close = difflib.get_close_matches(key, names, n=1)
            hint = f"; did you mean {prefix}{close[0]!r}?" if close else ""
            raise UnknownKey(f"unknown config key {path!r}{hint}")
        current = getattr(target, key)
        if is_dataclass(current):
            if not isinstance(value, Mapping):
                raise ConfigTypeError(f"{path}: expected a mapping")
            _apply(current, value, path + ".")
        else:
            setattr(target, key, _check_type(path, value, current))


def _nest(dotted: Mapping[str, Any]) -> dict:
    out: dict = {}
    for key, value in dotted.items():
        node = out
        parts = key.split(".")
        for part in parts[:-1]:
            node = node.setdefault(part, {})
        node[parts[-1]] = value
    return out


def parse_override(text: str) -> tuple[str, Any]:
    """``key.path=value`` with the value read as YAML (numbers, booleans, lists)."""
    if "=" not in text:
        raise ConfigError(f"override {text!r} must look like key=value")
    key, raw = text.split("=", 1)
    return key.strip(), yaml.safe_load(raw) if raw.strip() else None


def env_overrides(env: Mapping[str, str]) -> dict:
    dotted = {}
    if env.get(ENV_TEACHER):
        dotted["teacher.endpoint"] = env[ENV_TEACHER]
    if env.get(ENV_SCORER):
        dotted["scorer.endpoint"] = env[ENV_SCORER]
    if env.get(ENV_API_KEY):
        dotted["api_key"] = env[ENV_API_KEY]
    return _nest(dotted)


def read_config_file(path: str | Path) -> dict:
    text = Path(path).read_text(encoding="utf-8")
    try:
        data = json.loads(text) if str(path).endswith(".json") else yaml.safe_load(text)
    except (json.JSONDecodeError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot parse config file {path}: {exc}") from exc
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError(f"config file {path} must hold a mapping")
    return data


def load_config(
    path: str | Path | None = None,
    env: Mapping[str, str] | None = None,
    flags: Mapping[str, Any] | None = None,
) -> RunConfig:
    """Merge defaults < file < environment < flags; ``flags`` uses dotted keys."""
    config = RunConfig()
    if path is not None:
        if not Path(path).is_file():
            raise ConfigError(f"config file {path} does not exist")
        _apply(config, read_config_file(path))
    _apply(config, env_overrides(os.environ if env is None else env))
    if flags:
        _apply(config, _nest({k: v for k, v in flags.items() if v is not None}))
    if config.scorer.endpoint is None:
        config.scorer.endpoint = config.teacher.endpoint
    return copy.deepcopy(config)
