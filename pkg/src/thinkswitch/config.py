"""Run configuration: one declarative YAML/JSON file plus command-line overrides.

Every tunable constant (entropy thresholds, escalation rule, judge budget,
reward weights, preset parameters) lives here with its published default.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Mapping

import yaml

from thinkswitch.core import ThinkingMode
from thinkswitch.gateway import JUDGE_MAX_TOKENS, EndpointConfig
from thinkswitch.profiles import SHIPPED_PROFILES, ModelProfile, get_profile, profile_from_dict
from thinkswitch.rft import ALPHA, BETA, GROUP_SIZE, ROLLOUT_TEMPERATURE, RFTConfig


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class EscalationConfig:
    min_count: int = 3
    min_fraction: float = 0.05
    threshold: float | None = None  # None: the profile's tau
    logprob_k: int | None = None  # None: the profile's k


@dataclass(frozen=True)
class RFTSettings:
    strategy: str = "pt"
    K: int = 4
    modes: tuple[str, ...] | None = None
    temperature: float = ROLLOUT_TEMPERATURE
    alpha: float = ALPHA
    beta: float = BETA
    group_size: int = GROUP_SIZE
    grpo: bool = True
    grpo_source: str = "fresh"
    formats: tuple[str, ...] = ("sft", "dpo", "grpo-log")

    def to_rft_config(self, concurrency: int) -> RFTConfig:
        return RFTConfig(
            strategy=self.strategy,
            K=self.K,
            modes=None if self.modes is None else tuple(ThinkingMode.parse(m) for m in self.modes),
            temperature=self.temperature,
            alpha=self.alpha,
            beta=self.beta,
            group_size=self.group_size,
            grpo=self.grpo and "grpo-log" in self.formats,
            grpo_source=self.grpo_source,
            concurrency=concurrency,
        )


@dataclass(frozen=True)
class RunConfig:
    endpoint: EndpointConfig | None = None
    profile: str = "qwen3.5"
    profile_overrides: Mapping[str, Any] = field(default_factory=dict)
    custom_profiles: Mapping[str, Mapping[str, Any]] = field(default_factory=dict)
    strategies: tuple[str, ...] = ("full_think",)
    presets: Mapping[str, Mapping[str, Any]] = field(default_factory=dict)
    datasets: tuple[str, ...] = ()
    concurrency: int = 8
    baseline: str = "full_think"
    out: str = "results"
    judge_endpoint: EndpointConfig | None = None
    judge_profile: str | None = None
    external_grader: str | None = None
    external_timeout: float = 60.0
    seed: int = 0
    prompt_set: str | None = None
    max_output_tokens: int | None = None
    judge_max_tokens: int = JUDGE_MAX_TOKENS
    temperature: float = 0.0
    escalation: EscalationConfig = field(default_factory=EscalationConfig)
    rft: RFTSettings = field(default_factory=RFTSettings)

    def __post_init__(self) -> None:
        if self.concurrency < 1:
            raise ConfigError("concurrency must be >= 1")

    def resolve_profile(self, name: str | None = None) -> ModelProfile:
        name = name or self.profile
        try:
            if name in self.custom_profiles:
                return profile_from_dict({"name": name, **self.custom_profiles[name]})
            profile = get_profile(name)
        except (KeyError, ValueError, TypeError) as exc:
            known = sorted({*SHIPPED_PROFILES, *self.custom_profiles})
            raise ConfigError(f"{exc.args[0] if exc.args else exc} (profiles: {', '.join(known)})") from None
        if name == self.profile and self.profile_overrides:
            try:
                profile = profile.with_overrides(**self.profile_overrides)
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"bad profile override: {exc}") from None
        return profile


def _endpoint(raw: Any, seed: int) -> EndpointConfig | None:
    if raw is None:
        return None
    if isinstance(raw, str):
        return EndpointConfig(base_url=raw, model=None, seed=seed)
    if not isinstance(raw, dict):
        raise ConfigError("endpoint must be a URL or a mapping")
    try:
        return EndpointConfig.from_dict({"seed": seed, **raw})
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad endpoint config: {exc}") from None


def _subconfig(cls: type, raw: Any, where: str) -> Any:
    if raw is None:
        return cls()
    if not isinstance(raw, dict):
        raise ConfigError(f"{where} must be a mapping")
    names = {f.name for f in fields(cls)}
    unknown = set(raw) - names
    if unknown:
        raise ConfigError(f"unknown {where} key(s): {', '.join(sorted(unknown))}")
    data = dict(raw)
    for key in ("modes", "formats"):
        if isinstance(data.get(key), list):
            data[key] = tuple(data[key])
    return cls(**data)


_TOP_KEYS = {
    "endpoint", "profile", "profile_overrides", "profiles", "strategy", "strategies", "presets", "dataset",
    "datasets", "concurrency", "baseline", "out", "judge_endpoint", "judge_profile", "external_grader",
    "external_timeout", "seed", "prompt_set", "max_output_tokens", "judge_max_tokens", "temperature",
    "escalation", "rft",
}


def _as_tuple(v: Any) -> tuple[str, ...]:
    if v is None:
        return ()
    if isinstance(v, str):
        return (v,)
    return tuple(str(x) for x in v)


def config_from_mapping(raw: Mapping[str, Any]) -> RunConfig:
    unknown = set(raw) - _TOP_KEYS
    if unknown:
        raise ConfigError(f"unknown config key(s): {', '.join(sorted(unknown))}")
    seed = int(raw.get("seed", 0))
    strategies = _as_tuple(raw.get("strategies")) + _as_tuple(raw.get("strategy"))
    datasets = _as_tuple(raw.get("datasets")) + _as_tuple(raw.get("dataset"))
    kwargs: dict[str, Any] = {
        "endpoint": _endpoint(raw.get("endpoint"), seed),
        "judge_endpoint": _endpoint(raw.get("judge_endpoint"), seed),
        "escalation": _subconfig(EscalationConfig, raw.get("escalation"), "escalation"),
        "rft": _subconfig(RFTSettings, raw.get("rft"), "rft"),
        "profile_overrides": dict(raw.get("profile_overrides") or {}),
        "custom_profiles": dict(raw.get("profiles") or {}),
        "presets": dict(raw.get("presets") or {}),
        "seed": seed,
    }
    if strategies:
        kwargs["strategies"] = strategies
    if datasets:
        kwargs["datasets"] = datasets
    for key in ("profile", "concurrency", "baseline", "out", "judge_profile", "external_grader",
                "external_timeout", "prompt_set", "max_output_tokens", "judge_max_tokens", "temperature"):
        if key in raw and raw[key] is not None:
            kwargs[key] = raw[key]
    try:
        return RunConfig(**kwargs)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


def load_config(path: str | Path | None) -> RunConfig:
    if path is None:
        return RunConfig()
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror or exc}") from None
    try:
        raw = json.loads(text) if path.suffix == ".json" else yaml.safe_load(text)
    except (ValueError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot parse config {path}: {exc}") from None
    if raw is None:
        return RunConfig()
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return config_from_mapping(raw)


def load_endpoint_arg(value: str, seed: int = 0) -> EndpointConfig:
    """``--endpoint`` accepts a base URL or a YAML/JSON file describing the endpoint."""
    p = Path(value)
    if p.suffix in (".yaml", ".yml", ".json") and p.exists():
        text = p.read_text(encoding="utf-8")
        try:
            raw = json.loads(text) if p.suffix == ".json" else yaml.safe_load(text)
        except (ValueError, yaml.YAMLError) as exc:
            raise ConfigError(f"cannot parse endpoint file {p}: {exc}") from None
        ep = _endpoint(raw, seed)
        assert ep is not None
        return ep
    if not value.startswith(("http://", "https://")):
        raise ConfigError(f"--endpoint must be an http(s) URL or a .yaml/.json file, got {value!r}")
    return EndpointConfig(base_url=value, model=None, seed=seed)


def with_overrides(cfg: RunConfig, **changes: Any) -> RunConfig:
    """Apply non-None overrides (typically from command-line flags)."""
    return replace(cfg, **{k: v for k, v in changes.items() if v is not None})
