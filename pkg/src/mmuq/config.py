"""Run configuration: JSON loading, schema validation, and hashing.

A run config names the backend for each role, the perturbation plan, and
the knobs of the downstream tasks. Validation happens against a JSON
schema before any object is built, so a malformed config fails with a
:class:`ConfigError` carrying a JSON pointer to the offending field.
Secrets stay out of configs: backends name the environment variable that
holds their key.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, fields, replace
from pathlib import Path
from typing import Any, Mapping

import jsonschema

from ._version import VERSION
from .backends import BackendRoleSet
from .errors import ConfigError, InvalidPlanError, InvariantViolation, MissingFileError
from .perturb import DEFAULT_PARAMS, PerturbParams, PerturbationPlan

_RETRY_SCHEMA = {
    "type": "object",
    "properties": {
        "max_attempts": {"type": "integer", "minimum": 1},
        "backoff_base_ms": {"type": "number", "minimum": 0},
    },
    "additionalProperties": False,
}

_BACKEND_SCHEMA = {
    "type": "object",
    "properties": {
        "kind": {"enum": ["http_chat", "command", "mock"]},
        "model": {"type": "string"},
        "base_url": {"type": "string"},
        "api_key_env": {"type": "string"},
        "temperature": {"type": "number", "minimum": 0},
        "timeout": {"type": "number", "exclusiveMinimum": 0},
        "max_inflight": {"type": "integer", "minimum": 1},
        "retry": _RETRY_SCHEMA,
        "judge_template": {"type": "string"},
        "program": {"type": "array", "items": {"type": "string"}, "minItems": 1},
        "fixtures": {"type": "object"},
        "seed": {"type": "integer"},
    },
    "required": ["kind"],
    "additionalProperties": False,
}

_KIND_NAME_SCHEMA = {"type": "string"}

_PLAN_SCHEMA = {
    "type": "object",
    "properties": {
        "sample_count": {"type": "integer", "minimum": 1},
        "kinds": {
            "type": "object",
            "properties": {
                "text": _KIND_NAME_SCHEMA,
                "image": _KIND_NAME_SCHEMA,
                "audio": _KIND_NAME_SCHEMA,
                "video": _KIND_NAME_SCHEMA,
                "point_cloud": _KIND_NAME_SCHEMA,
            },
            "additionalProperties": False,
        },
        "pairing_order": {"enum": ["progressive", "random", "shifted"]},
        "seed": {"type": "integer"},
    },
    "additionalProperties": False,
}

_PARAMS_SCHEMA = {
    "type": "object",
    "properties": {
        f.name: {"type": "number", "minimum": 0} for f in fields(PerturbParams)
    },
    "additionalProperties": False,
}

CONFIG_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "properties": {
        "seed": {"type": "integer"},
        "roles": {
            "type": "object",
            "properties": {
                "responder": _BACKEND_SCHEMA,
                "captioner": _BACKEND_SCHEMA,
                "equivalence_judge": _BACKEND_SCHEMA,
                "grader": _BACKEND_SCHEMA,
            },
            "required": ["responder"],
            "additionalProperties": False,
        },
        "plan": _PLAN_SCHEMA,
        "perturb_params": _PARAMS_SCHEMA,
        "clustering": {"enum": ["semantic", "lexical"]},
        "grader": {"enum": ["exact", "backend"]},
        "bin_count": {"type": "integer", "minimum": 1},
        "top_fraction": {"type": "number", "minimum": 0, "maximum": 1},
        "max_steps": {"type": "integer", "minimum": 1},
        "parallelism": {"type": "integer", "minimum": 1},
    },
    "required": ["seed", "roles"],
    "additionalProperties": False,
}


def _pointer(error: jsonschema.ValidationError) -> str:
    return "/" + "/".join(str(p) for p in error.absolute_path)


def validate_config_doc(doc: Any) -> None:
    """Check a raw config document against the schema."""
    validator = jsonschema.Draft202012Validator(CONFIG_SCHEMA)
    errors = sorted(validator.iter_errors(doc), key=lambda e: list(e.absolute_path))
    if errors:
        best = jsonschema.exceptions.best_match(errors)
        raise ConfigError(
            f"invalid config at {_pointer(best)}: {best.message}",
            pointer=_pointer(best),
        )


def config_hash(doc: Any) -> str:
    """SHA-256 of the canonical JSON form of a config document."""
    canon = json.dumps(doc, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class RunConfig:
    """Everything one pipeline run needs, plus the hash of its source."""

    seed: int
    roles: BackendRoleSet
    plan: PerturbationPlan
    clustering: str = "semantic"
    grader: str = "exact"
    bin_count: int = 10
    top_fraction: float = 0.5
    max_steps: int = 5
    parallelism: int = 1
    digest: str = ""

    @classmethod
    def from_dict(cls, doc: Mapping) -> "RunConfig":
        validate_config_doc(dict(doc))
        seed = int(doc["seed"])
        params = DEFAULT_PARAMS
        if "perturb_params" in doc:
            params = replace(DEFAULT_PARAMS, **dict(doc["perturb_params"]))
        plan_doc = dict(doc.get("plan", {}))
        plan_doc.setdefault("seed", seed)
        try:
            roles = BackendRoleSet.from_dict(doc["roles"])
            plan = PerturbationPlan.from_dict(plan_doc, params=params)
        except (InvariantViolation, InvalidPlanError) as e:
            raise ConfigError(str(e)) from e
        return cls(
            seed=seed,
            roles=roles,
            plan=plan,
            clustering=str(doc.get("clustering", "semantic")),
            grader=str(doc.get("grader", "exact")),
            bin_count=int(doc.get("bin_count", 10)),
            top_fraction=float(doc.get("top_fraction", 0.5)),
            max_steps=int(doc.get("max_steps", 5)),
            parallelism=int(doc.get("parallelism", 1)),
            digest=config_hash(doc),
        )

    def with_seed(self, seed: int) -> "RunConfig":
        return replace(self, seed=seed, plan=self.plan.with_seed(seed))

    def metadata(self) -> dict:
        """Reproducibility stamp embedded in every output file."""
        return {"config_hash": self.digest, "seed": self.seed, "version": VERSION}


def load_config(path: str | Path) -> RunConfig:
    """Load and validate a JSON run config."""
    path = Path(path)
    if not path.exists():
        raise MissingFileError(f"no such config: {path}")
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except (json.JSONDecodeError, UnicodeDecodeError) as e:
        raise ConfigError(f"{path}: not valid JSON: {e}") from e
    return RunConfig.from_dict(doc)
