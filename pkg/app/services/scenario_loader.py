"""
TOML scenario and design files.

Syntax errors keep the TOML line, validation errors keep the dotted field
path; both surface as ScenarioConfigError (exit code 2).
"""
from __future__ import annotations

import logging
import re
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, Optional, Type, TypeVar, Union

from pydantic import BaseModel, ValidationError

from app.core.errors import InvalidInputError, ScenarioConfigError
from app.models.schemas import DesignFile, RuleSpec, ScenarioFile, SimConfig
from app.services import corpus
from app.services.trigger import TriggerRule

logger = logging.getLogger(__name__)

M = TypeVar("M", bound=BaseModel)

_LINE_RE = re.compile(r"line (\d+)")


def _field_path(err: ValidationError, prefix: str = "") -> str:
    first = err.errors()[0]
    path = ".".join(str(part) for part in first["loc"])
    return f"{prefix}.{path}" if prefix and path else (prefix or path)


def _validation_message(err: ValidationError) -> str:
    first = err.errors()[0]
    extra = f" (+{err.error_count() - 1} more)" if err.error_count() > 1 else ""
    return f"{first['msg']}{extra}"


def read_toml(path: Union[str, Path]) -> Dict[str, Any]:
    path = Path(path)
    try:
        with path.open("rb") as fh:
            return tomllib.load(fh)
    except FileNotFoundError:
        raise ScenarioConfigError(f"config file not found: {path}") from None
    except tomllib.TOMLDecodeError as e:
        line = getattr(e, "lineno", None)
        if line is None:
            match = _LINE_RE.search(str(e))
            line = int(match.group(1)) if match else None
        logger.error(f"CONFIG REJECTED: {path}: {e}")
        raise ScenarioConfigError(f"{path.name}: {e}", line=line) from None


def parse_model(model: Type[M], data: Dict[str, Any], source: str = "config", prefix: str = "") -> M:
    try:
        return model.model_validate(data)
    except ValidationError as e:
        field = _field_path(e, prefix)
        logger.error(f"CONFIG REJECTED: {source}: field '{field}': {_validation_message(e)}")
        raise ScenarioConfigError(f"{source}: {_validation_message(e)}", field=field) from None


def load_scenario_file(path: Union[str, Path]) -> ScenarioFile:
    return parse_model(ScenarioFile, read_toml(path), source=Path(path).name)


def load_design_file(path: Union[str, Path]) -> DesignFile:
    return parse_model(DesignFile, read_toml(path), source=Path(path).name)


# --- resolution --------------------------------------------------------------

@dataclass(frozen=True)
class LoadedScenario:
    file: ScenarioFile
    scenario: corpus.Scenario
    rule: TriggerRule
    sim: SimConfig


def build_scenario(name: str, params: Optional[Dict[str, Any]] = None, inline=None) -> corpus.Scenario:
    if name == "inline":
        if inline is None:
            raise ScenarioConfigError("scenario 'inline' requires an [inline] table", field="inline")
        return corpus.from_inline(inline)
    if name not in corpus.registry():
        raise ScenarioConfigError(
            f"unknown scenario '{name}'; available: {sorted(corpus.registry())}", field="scenario"
        )
    try:
        return corpus.get_scenario(name, **(params or {}))
    except InvalidInputError as e:
        raise ScenarioConfigError(str(e), field="params") from None


def _pick(value, default, name: str, variant: str):
    if value is not None:
        return value
    if default is None:
        raise ScenarioConfigError(f"{variant} rule needs '{name}' (scenario has no default)", field=f"rule.{name}")
    return default


def rule_from_spec(scenario: corpus.Scenario, spec: RuleSpec) -> TriggerRule:
    """Scenario default rule with any parameters of ``spec`` overriding it."""
    certs = scenario.certs
    if spec.variant == "static":
        return TriggerRule.static(certs)
    if spec.variant == "tabuada":
        return TriggerRule.tabuada(certs, c=spec.c)
    default = scenario.rules.get(spec.variant)
    if spec.variant == "continuous":
        return TriggerRule.continuous(
            certs,
            _pick(spec.kappa, getattr(default, "kappa", None), "kappa", "continuous"),
            _pick(spec.zeta, getattr(default, "zeta", None), "zeta", "continuous"),
        )
    return TriggerRule.discrete(
        certs,
        _pick(spec.kappa_hat, getattr(default, "kappa_hat", None), "kappa_hat", "discrete"),
        _pick(spec.theta, getattr(default, "theta", None), "theta", "discrete"),
        _pick(spec.delta, getattr(default, "delta", None), "delta", "discrete"),
    )


def resolve(file: ScenarioFile, seed: Optional[int] = None) -> LoadedScenario:
    scenario = build_scenario(file.scenario, dict(file.params), file.inline)
    rule = rule_from_spec(scenario, file.rule)
    overrides = dict(file.sim)
    if seed is not None:
        overrides["seed"] = seed
    merged = {**scenario.sim_defaults.model_dump(), **overrides}
    sim = parse_model(SimConfig, merged, source=f"scenario '{scenario.name}'", prefix="sim")
    logger.info(f"Scenario loaded: {scenario.name} rule={rule.kind.value} t_end={sim.t_end:g} seed={sim.seed}")
    return LoadedScenario(file=file, scenario=scenario, rule=rule, sim=sim)


def load(path: Union[str, Path], seed: Optional[int] = None) -> LoadedScenario:
    return resolve(load_scenario_file(path), seed=seed)
