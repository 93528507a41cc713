"""Scenario files: commented JSON describing a scene and its ablation stages.

A scenario is ordinary JSON except that lines whose first non-blank
characters are ``//`` are dropped before parsing.  Every key is checked
against the domain's defaults; a typo anywhere fails loading with the
full dotted path of the offending key.

Ablation stages apply cumulatively: each stage's ``overrides`` (dotted
paths into scene/operation/perturbation) and ``disable`` entries stack
on top of all earlier stages.
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field, fields

from .robustness import PerturbationSpec
from .domains import bottle, nut

__all__ = [
    "ConfigError",
    "Stage",
    "Scenario",
    "ResolvedStage",
    "load_scenario",
    "parse_scenario",
    "resolve_stage",
]

_DOMAINS = {
    "bottle-cap": bottle,
    "nut-fastening": nut,
}

_TOP_KEYS = {
    "domain", "seed", "scene", "operation", "perturbation", "budget",
    "disable", "ablation",
}
_BUDGET_DEFAULTS = {"max_levels": 8, "max_expansions": 200_000}
_PERTURBATION_DEFAULTS = {
    f.name: getattr(PerturbationSpec(), f.name) for f in fields(PerturbationSpec)
}


class ConfigError(ValueError):
    """Scenario file problem; the message names the dotted key path."""


@dataclass(frozen=True)
class Stage:
    name: str
    overrides: dict = field(default_factory=dict)
    disable: tuple = ()


@dataclass(frozen=True)
class Scenario:
    domain: str
    seed: int
    scene: dict
    operation: dict
    perturbation: dict
    budget: dict
    disable: tuple
    stages: tuple


@dataclass(frozen=True)
class ResolvedStage:
    """One stage with every override already applied."""

    name: str
    domain: str
    seed: int
    scene: dict
    operation: dict
    spec: PerturbationSpec
    budget: dict
    disable: tuple


def _strip_comments(text: str) -> str:
    lines = [ln for ln in text.splitlines() if not ln.lstrip().startswith("//")]
    return "\n".join(lines)


def _check_keys(given: dict, allowed, path: str):
    for key in given:
        if key not in allowed:
            raise ConfigError(f"unknown key '{path}.{key}'" if path else f"unknown key '{key}'")


def _merge_section(defaults: dict, given: dict, path: str) -> dict:
    _check_keys(given, defaults, path)
    merged = copy.deepcopy(defaults)
    for key, value in given.items():
        base = merged[key]
        if isinstance(base, dict):
            if not isinstance(value, dict):
                raise ConfigError(f"'{path}.{key}' must be an object")
            merged[key] = _merge_section(base, value, f"{path}.{key}")
        else:
            merged[key] = _checked_value(base, value, f"{path}.{key}")
    return merged


def _checked_value(base, value, path: str):
    if isinstance(base, bool) or isinstance(value, bool):
        if not (isinstance(base, bool) and isinstance(value, bool)):
            raise ConfigError(f"'{path}' must be {type(base).__name__}")
        return value
    if isinstance(base, (int, float)):
        if not isinstance(value, (int, float)):
            raise ConfigError(f"'{path}' must be a number")
        return value
    if isinstance(base, str):
        if not isinstance(value, str):
            raise ConfigError(f"'{path}' must be a string")
        return value
    if isinstance(base, list):
        if not isinstance(value, list):
            raise ConfigError(f"'{path}' must be a list")
        return copy.deepcopy(value)
    raise ConfigError(f"'{path}' has unsupported type")


def _check_disable(names, module, path: str) -> tuple:
    if not isinstance(names, list):
        raise ConfigError(f"'{path}' must be a list")
    known = set(module.STRATEGIES) | set(module.ROUTES)
    for name in names:
        if name not in known:
            raise ConfigError(f"'{path}' names unknown strategy or route '{name}'")
    return tuple(names)


def _check_stage(raw, module, index: int) -> Stage:
    if not isinstance(raw, dict):
        raise ConfigError(f"'ablation.stages[{index}]' must be an object")
    _check_keys(raw, {"name", "overrides", "disable"}, f"ablation.stages[{index}]")
    if "name" not in raw or not isinstance(raw["name"], str):
        raise ConfigError(f"'ablation.stages[{index}].name' is required")
    overrides = raw.get("overrides", {})
    if not isinstance(overrides, dict):
        raise ConfigError(f"'ablation.stages[{index}].overrides' must be an object")
    for key in overrides:
        root = key.split(".", 1)[0]
        if root not in ("scene", "operation", "perturbation"):
            raise ConfigError(
                f"'ablation.stages[{index}].overrides' path '{key}' must start with "
                "scene., operation., or perturbation."
            )
    disable = _check_disable(
        raw.get("disable", []), module, f"ablation.stages[{index}].disable"
    )
    return Stage(raw["name"], dict(overrides), disable)


def parse_scenario(text: str) -> Scenario:
    try:
        raw = json.loads(_strip_comments(text))
    except json.JSONDecodeError as err:
        raise ConfigError(f"not valid JSON: {err}") from err
    if not isinstance(raw, dict):
        raise ConfigError("scenario must be a JSON object")
    _check_keys(raw, _TOP_KEYS, "")
    domain = raw.get("domain")
    if domain not in _DOMAINS:
        raise ConfigError(
            f"'domain' must be one of {sorted(_DOMAINS)}, got {domain!r}"
        )
    module = _DOMAINS[domain]
    seed = raw.get("seed", 0)
    if not isinstance(seed, int) or isinstance(seed, bool) or seed < 0:
        raise ConfigError("'seed' must be a nonnegative integer")
    scene = _merge_section(module.SCENE_DEFAULTS, raw.get("scene", {}), "scene")
    operation = _merge_section(
        module.OPERATION_DEFAULTS, raw.get("operation", {}), "operation"
    )
    perturbation = _merge_section(
        _PERTURBATION_DEFAULTS, raw.get("perturbation", {}), "perturbation"
    )
    budget = _merge_section(_BUDGET_DEFAULTS, raw.get("budget", {}), "budget")
    disable = _check_disable(raw.get("disable", []), module, "disable")
    if "arms" in scene:
        for arm in scene["arms"]:
            if arm not in scene["arm_bases"]:
                raise ConfigError(f"'scene.arms' names unknown arm '{arm}'")
    stages_raw = raw.get("ablation", {})
    if not isinstance(stages_raw, dict):
        raise ConfigError("'ablation' must be an object")
    _check_keys(stages_raw, {"stages"}, "ablation")
    stages = tuple(
        _check_stage(s, module, i)
        for i, s in enumerate(stages_raw.get("stages", []))
    )
    if not stages:
        stages = (Stage("full"),)
    return Scenario(domain, seed, scene, operation, perturbation, budget, disable, stages)


def load_scenario(path: str) -> Scenario:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_scenario(fh.read())


def _apply_override(sections: dict, dotted: str, value):
    parts = dotted.split(".")
    node = sections
    for part in parts[:-1]:
        if not isinstance(node, dict) or part not in node:
            raise ConfigError(f"override path '{dotted}' does not exist")
        node = node[part]
    leaf = parts[-1]
    if not isinstance(node, dict) or leaf not in node:
        raise ConfigError(f"override path '{dotted}' does not exist")
    node[leaf] = _checked_value(node[leaf], value, dotted)


def resolve_stage(scenario: Scenario, index: int) -> ResolvedStage:
    """Configuration with stages ``0..index`` applied cumulatively."""
    if not 0 <= index < len(scenario.stages):
        raise ConfigError(f"stage index {index} out of range")
    sections = {
        "scene": copy.deepcopy(scenario.scene),
        "operation": copy.deepcopy(scenario.operation),
        "perturbation": copy.deepcopy(scenario.perturbation),
    }
    disable = list(scenario.disable)
    for stage in scenario.stages[: index + 1]:
        for dotted, value in stage.overrides.items():
            _apply_override(sections, dotted, value)
        for name in stage.disable:
            if name not in disable:
                disable.append(name)
    if "arms" in sections["scene"]:
        for arm in sections["scene"]["arms"]:
            if arm not in sections["scene"]["arm_bases"]:
                raise ConfigError(f"'scene.arms' names unknown arm '{arm}'")
    return ResolvedStage(
        name=scenario.stages[index].name,
        domain=scenario.domain,
        seed=scenario.seed,
        scene=sections["scene"],
        operation=sections["operation"],
        spec=PerturbationSpec(**sections["perturbation"]),
        budget=dict(scenario.budget),
        disable=tuple(disable),
    )
