"""TOML configuration for the command-line toolchain.

One file drives every module. Validation collects all violations at once;
unknown sections or keys are rejected. API keys never live in the file:
they come from SPECFORGE_API_KEY_<ENDPOINT_NAME> environment variables.
"""

from __future__ import annotations

import hashlib
import json
import os
import re
import sys
from dataclasses import dataclass
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .client import REASONING_EFFORTS, ModelEndpoint
from .corpus import SPLIT_BOUNDARIES
from .decontam import NORMALIZE_FLAGS
from .harness import REDUCTIONS

API_KEY_ENV_PREFIX = "SPECFORGE_API_KEY_"


class ConfigError(ValueError):
    def __init__(self, violations: list[str]):
        self.violations = violations
        super().__init__("invalid configuration:\n" + "\n".join(f"  - {v}" for v in violations))


def _is_number(value) -> bool:
    return isinstance(value, (int, float)) and not isinstance(value, bool)


# section -> field -> (default, checker); checker returns an error string or None
def _positive_int(name):
    def check(v):
        if not isinstance(v, int) or isinstance(v, bool) or v < 1:
            return f"{name} must be a positive integer"
        return None

    return check


def _nonneg_int(name):
    def check(v):
        if not isinstance(v, int) or isinstance(v, bool) or v < 0:
            return f"{name} must be a non-negative integer"
        return None

    return check


def _nonneg_number(name):
    def check(v):
        if not _is_number(v) or v < 0:
            return f"{name} must be a number >= 0"
        return None

    return check


def _positive_number(name):
    def check(v):
        if not _is_number(v) or v <= 0:
            return f"{name} must be a number > 0"
        return None

    return check


def _string(name):
    def check(v):
        if not isinstance(v, str) or not v:
            return f"{name} must be a non-empty string"
        return None

    return check


def _choice(name, options):
    def check(v):
        if v not in options:
            return f"{name} must be one of {sorted(options)}"
        return None

    return check


def _string_list(name):
    def check(v):
        if not isinstance(v, list) or not all(isinstance(x, str) for x in v):
            return f"{name} must be a list of strings"
        return None

    return check


def _unit_interval(name):
    def check(v):
        if not _is_number(v) or not 0 < v <= 1:
            return f"{name} must be in (0, 1]"
        return None

    return check


_ENDPOINT_FIELDS = {
    "base_url": (None, _string("base_url")),
    "model_name": (None, _string("model_name")),
    "timeout_s": (60.0, _positive_number("timeout_s")),
    "max_retries": (3, _nonneg_int("max_retries")),
}

_SCHEMA = {
    "corpus": {
        "root": (".", _string("root")),
        "include": (["**/*.md", "**/*.txt"], _string_list("include")),
    },
    "chunking": {
        "max_chars": (8_000, _positive_int("max_chars")),
        "overlap_chars": (800, _nonneg_int("overlap_chars")),
        "split_boundary": ("sentence", _choice("split_boundary", SPLIT_BOUNDARIES)),
    },
    "pipeline": {
        "summary_endpoint": ("", _string("summary_endpoint")),
        "generator_endpoint": ("", _string("generator_endpoint")),
        "qc_endpoint": ("", _string("qc_endpoint")),
        "n_pairs": (5, _positive_int("n_pairs")),
        "concurrency": (4, _positive_int("concurrency")),
        "temperature": (0.7, _nonneg_number("temperature")),
        "qc_temperature": (0.0, _nonneg_number("qc_temperature")),
        "max_output_tokens": (2048, _positive_int("max_output_tokens")),
        "qc_max_output_tokens": (1024, _positive_int("qc_max_output_tokens")),
        "summary_input_max_chars": (24_000, _positive_int("summary_input_max_chars")),
        "prompts_dir": ("", lambda v: None if isinstance(v, str) else "prompts_dir must be a string"),
    },
    "decontamination": {
        "fuzzy_threshold": (0.80, _unit_interval("fuzzy_threshold")),
        "normalize": (list(NORMALIZE_FLAGS), _string_list("normalize")),
        "action": ("remove_train", _choice("action", ("remove_train", "report_only"))),
    },
    "eval": {
        "candidate_endpoint": ("", _string("candidate_endpoint")),
        "judge_endpoint": ("", _string("judge_endpoint")),
        "epochs": (0, _nonneg_int("epochs")),  # 0: use the task default
        "reasoning_effort": ("medium", _choice("reasoning_effort", REASONING_EFFORTS)),
        "reduction": ("mean", _choice("reduction", REDUCTIONS)),
        "concurrency": (4, _positive_int("concurrency")),
        "temperature": (-1.0, lambda v: None if _is_number(v) else "temperature must be a number"),
        "max_output_tokens": (1024, _positive_int("max_output_tokens")),
        "seed_base": (0, _nonneg_int("seed_base")),
        "lenient_grades": (False, lambda v: None if isinstance(v, bool) else "lenient_grades must be a boolean"),
    },
    "pricing": {
        "input_usd_per_mtok": (1.25, _nonneg_number("input_usd_per_mtok")),
        "output_usd_per_mtok": (10.0, _nonneg_number("output_usd_per_mtok")),
    },
    "cost": {
        "scenarios": (
            [],
            lambda v: None
            if isinstance(v, list) and all(isinstance(x, dict) for x in v)
            else "scenarios must be an array of tables",
        ),
    },
    "bench": {
        "endpoint": ("", _string("endpoint")),
        "prompt_tokens": (512, _positive_int("prompt_tokens")),
        "gen_tokens": (128, _positive_int("gen_tokens")),
        "trials": (5, _positive_int("trials")),
        "warmup_trials": (1, _nonneg_int("warmup_trials")),
        "hardware_label": ("local", _string("hardware_label")),
    },
    "runs": {
        "dir": ("runs", _string("dir")),
    },
}


@dataclass
class AppConfig:
    """Validated, fully defaulted configuration."""

    endpoints: dict[str, dict]
    sections: dict[str, dict]
    config_hash: str
    source_path: str = ""

    def section(self, name: str) -> dict:
        return self.sections[name]

    def endpoint(self, name: str) -> ModelEndpoint:
        if name not in self.endpoints:
            raise ConfigError([f"endpoint {name!r} is not defined under [endpoints]"])
        spec = self.endpoints[name]
        return ModelEndpoint(
            base_url=spec["base_url"],
            model_name=spec["model_name"],
            api_key=api_key_for(name),
            timeout_s=spec["timeout_s"],
            max_retries=spec["max_retries"],
        )


def api_key_for(endpoint_name: str) -> str | None:
    env_name = API_KEY_ENV_PREFIX + re.sub(r"[^A-Za-z0-9]", "_", endpoint_name).upper()
    return os.environ.get(env_name) or None


def _validate_endpoints(raw: dict, violations: list[str]) -> dict[str, dict]:
    endpoints: dict[str, dict] = {}
    table = raw.get("endpoints", {})
    if not isinstance(table, dict):
        violations.append("[endpoints] must be a table of named endpoints")
        return endpoints
    for name, spec in table.items():
        if not isinstance(spec, dict):
            violations.append(f"endpoints.{name} must be a table")
            continue
        resolved = {}
        for key, value in spec.items():
            if key == "api_key":
                violations.append(
                    f"endpoints.{name}.api_key: secrets are not allowed in config files; "
                    f"set {API_KEY_ENV_PREFIX}{name.upper()} instead"
                )
                continue
            if key not in _ENDPOINT_FIELDS:
                violations.append(f"endpoints.{name}.{key}: unknown key")
                continue
            error = _ENDPOINT_FIELDS[key][1](value)
            if error:
                violations.append(f"endpoints.{name}.{key}: {error}")
            resolved[key] = value
        for key, (default, _) in _ENDPOINT_FIELDS.items():
            if key not in resolved:
                if default is None:
                    violations.append(f"endpoints.{name}.{key}: required key missing")
                else:
                    resolved[key] = default
        endpoints[name] = resolved
    return endpoints


def validate_config(raw: dict) -> tuple[dict[str, dict], dict[str, dict], list[str]]:
    violations: list[str] = []
    endpoints = _validate_endpoints(raw, violations)
    sections: dict[str, dict] = {}
    for section_name, fields in _SCHEMA.items():
        section_raw = raw.get(section_name, {})
        if not isinstance(section_raw, dict):
            violations.append(f"[{section_name}] must be a table")
            section_raw = {}
        resolved = {}
        for key, value in section_raw.items():
            if key not in fields:
                violations.append(f"{section_name}.{key}: unknown key")
                continue
            error = fields[key][1](value)
            if error:
                violations.append(f"{section_name}.{key}: {error}")
            resolved[key] = value
        for key, (default, _) in fields.items():
            resolved.setdefault(key, default)
        sections[section_name] = resolved
    for key in raw:
        if key not in _SCHEMA and key != "endpoints":
            violations.append(f"[{key}]: unknown section")
    chunking = sections["chunking"]
    if (
        isinstance(chunking["overlap_chars"], int)
        and isinstance(chunking["max_chars"], int)
        and chunking["max_chars"] > 0  # avoid cascading onto an already-invalid max
        and chunking["overlap_chars"] >= chunking["max_chars"]
    ):
        violations.append("chunking.overlap_chars must be < chunking.max_chars")
    for section_name, key in (
        ("pipeline", "summary_endpoint"),
        ("pipeline", "generator_endpoint"),
        ("pipeline", "qc_endpoint"),
        ("eval", "candidate_endpoint"),
        ("eval", "judge_endpoint"),
        ("bench", "endpoint"),
    ):
        ref = sections[section_name][key]
        if ref and ref not in endpoints:
            violations.append(f"{section_name}.{key}: references undefined endpoint {ref!r}")
    return endpoints, sections, violations


def load_config(path: str | Path) -> AppConfig:
    """Parse and validate; raises ConfigError listing every violation.

    The config hash covers the fully defaulted semantic content, so
    comments and formatting cannot change it.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"config file not found: {path}")
    with open(path, "rb") as fh:
        try:
            raw = tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError([f"TOML parse error: {exc}"]) from exc
    endpoints, sections, violations = validate_config(raw)
    if violations:
        raise ConfigError(violations)
    semantic = {"endpoints": endpoints, **sections}
    config_hash = hashlib.sha256(
        json.dumps(semantic, sort_keys=True, default=str).encode()
    ).hexdigest()[:16]
    return AppConfig(
        endpoints=endpoints, sections=sections, config_hash=config_hash, source_path=str(path)
    )
