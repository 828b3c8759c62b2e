"""Pipeline configuration: dataset presets, config files, environment,
and flag overrides.

Precedence, highest first: explicit flags > config file > environment
variables > preset defaults. Presets pin the constants each benchmark was
tuned with; `config-dump` prints the fully resolved result.
"""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

from .errors import ConfigError

try:  # 3.11+
    import tomllib as _toml
except ModuleNotFoundError:  # pragma: no cover - depends on interpreter
    import tomli as _toml


@dataclass(frozen=True)
class GatewaySettings:
    llm_url: str | None = None
    llm_model: str = "default-model"
    llm_key: str | None = None
    cache_dir: str | None = None
    mock_rules: str | None = None
    embed_url: str | None = None
    embed_mock_dim: int = 16
    max_retries: int = 3
    concurrency: int = 4


@dataclass(frozen=True)
class PipelineConfig:
    dataset_preset: str = "custom"
    retriever: str = "sparse"  # "sparse" | "dense"
    k1: float = 0.9
    b: float = 0.4
    binary_threshold: int = 1
    query_token_limit: int = 32
    input_token_limit: int = 512
    passage_token_limit: int = 384
    temperature: float = 0.7
    fusion_alpha: float = 1.0
    ndcg_cutoff: int = 3
    recall_cutoff: int = 10
    retrieval_depth: int = 100
    candidate_count: int = 5
    seed: int | None = None
    stemmer: str = "porter"
    stopword_list: str = "english"
    gateway: GatewaySettings = field(default_factory=GatewaySettings)

    def to_dict(self) -> dict:
        data = asdict(self)
        data["gateway"] = asdict(self.gateway)
        return data

    def dump_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


# constants each benchmark is evaluated with
PRESETS: dict[str, dict] = {
    "topiocqa": {"k1": 0.9, "b": 0.4, "binary_threshold": 1},
    "qrecc": {"k1": 0.82, "b": 0.68, "binary_threshold": 1},
    "cast19": {"k1": 0.9, "b": 0.4, "binary_threshold": 1},
    "cast20": {"k1": 0.9, "b": 0.4, "binary_threshold": 2},
    "cast21": {"k1": 0.9, "b": 0.4, "binary_threshold": 2},
    "custom": {},
}

_ENV_KEYS = {
    "CHIQ_LLM_URL": ("gateway", "llm_url"),
    "CHIQ_LLM_MODEL": ("gateway", "llm_model"),
    "CHIQ_LLM_KEY": ("gateway", "llm_key"),
    "CHIQ_CACHE_DIR": ("gateway", "cache_dir"),
}

_GATEWAY_FIELDS = {f.name for f in fields(GatewaySettings)}
_PIPELINE_FIELDS = {f.name for f in fields(PipelineConfig)} - {"gateway"}


def _read_config_file(path: str | Path) -> dict:
    path = Path(path)
    if path.suffix.lower() == ".toml":
        with path.open("rb") as fh:
            return _toml.load(fh)
    with path.open("r", encoding="utf-8") as fh:
        return json.load(fh)


def _apply(config: PipelineConfig, values: dict, origin: str) -> PipelineConfig:
    gateway_updates = dict(values.pop("gateway", {}))
    plain: dict = {}
    for key, value in values.items():
        if value is None:
            continue
        if key in _PIPELINE_FIELDS:
            plain[key] = value
        elif key in _GATEWAY_FIELDS:
            gateway_updates.setdefault(key, value)
        else:
            raise ConfigError(f"unknown configuration key {key!r} ({origin})")
    if gateway_updates:
        unknown = set(gateway_updates) - _GATEWAY_FIELDS
        if unknown:
            raise ConfigError(f"unknown gateway keys {sorted(unknown)} ({origin})")
        gateway_updates = {k: v for k, v in gateway_updates.items() if v is not None}
        plain["gateway"] = replace(config.gateway, **gateway_updates)
    return replace(config, **plain)


def resolve_config(
    preset: str = "custom",
    config_file: str | Path | None = None,
    overrides: dict | None = None,
    env: dict | None = None,
) -> PipelineConfig:
    """Layer preset defaults, environment, file values, and flag overrides
    into one effective configuration."""
    if preset not in PRESETS:
        raise ConfigError(f"unknown preset {preset!r}; choose from {sorted(PRESETS)}")
    config = PipelineConfig(dataset_preset=preset)
    config = _apply(config, dict(PRESETS[preset]), f"preset {preset}")

    env = os.environ if env is None else env
    env_values: dict = {}
    for var, (_, key) in _ENV_KEYS.items():
        if env.get(var):
            env_values.setdefault("gateway", {})[key] = env[var]
    if env_values:
        config = _apply(config, env_values, "environment")

    if config_file is not None:
        file_values = _read_config_file(config_file)
        if not isinstance(file_values, dict):
            raise ConfigError(f"config file {config_file} must hold a table/object")
        config = _apply(config, file_values, str(config_file))

    if overrides:
        config = _apply(config, dict(overrides), "flags")
    return config
