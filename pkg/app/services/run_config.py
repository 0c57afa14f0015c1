"""Run configuration: flat dot-namespaced JSON merged over defaults and validated."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Literal, Mapping, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from app.core.errors import ConfigError
from app.services.alternating_projections import ApConfig, LineSearchSpec
from app.services.array_model import AngleGrid, ApertureGeometry, build_grid, rectangular_aperture
from app.services.scene_sim import ApertureEmbedding, NoiseSpec, Scenario, Source
from app.services.stage1_lift import Stage1Config

LOGGER = logging.getLogger(__name__)

Extent = Tuple[float, float]
Axis = Tuple[float, float, float]

# scenario.frequency_hz and scenario.sources have no default and must be supplied.
DEFAULT_RUN_CONFIG: Dict[str, Any] = {
    "scenario.rows": 7,
    "scenario.cols": 7,
    "scenario.spacing_wavelengths": 0.5,
    "scenario.aperture_x_axis": [-1.0, 0.0, 0.0],
    "scenario.aperture_y_axis": [0.0, 0.0, -1.0],
    "scenario.boresight_axis": [0.0, 1.0, 0.0],
    "noise.sigma": 0.0,
    "noise.seed": None,
    "stage1_grid.rows": 11,
    "stage1_grid.cols": 11,
    "stage1_grid.u_extent": [-1.0, 1.0],
    "stage1_grid.v_extent": [-1.0, 1.0],
    "stage2_grid.rows": 21,
    "stage2_grid.cols": 21,
    "stage2_grid.u_extent": [-1.0, 1.0],
    "stage2_grid.v_extent": [-1.0, 1.0],
    "stage1.l1_weight": 1.0,
    "stage1.power_iters": 1000,
    "stage1.power_tol": 1e-12,
    "ap.k_hat": 2,
    "ap.nu": None,
    "ap.n_cg": 20,
    "ap.n_ap": 50,
    "ap.stop_tol": None,
    "ap.phase_update": "accumulate",
    "ap.stage2_l1_weight": 0.0,
    "line_search.initial_step": 0.1,
    "line_search.growth": 2.0,
    "line_search.tol": 1e-8,
    "line_search.max_evals": 80,
    "lp.tol": 1e-8,
    "lp.max_iter": 100,
    "output.directory": "runs/latest",
    "output.emit_svg": True,
    "seed": 0,
}

SOLVER_SECTIONS = ("stage1_grid", "stage2_grid", "stage1", "ap", "line_search", "lp")


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


class SourceModel(_Section):
    position_mm: Axis
    power_db: float


class ScenarioModel(_Section):
    frequency_hz: float = Field(..., gt=0, description="Carrier frequency in Hz.")
    rows: int = Field(..., ge=1)
    cols: int = Field(..., ge=1)
    spacing_wavelengths: float = Field(..., gt=0, description="Element spacing in wavelengths.")
    sources: List[SourceModel] = Field(..., min_length=1)
    aperture_x_axis: Axis
    aperture_y_axis: Axis
    boresight_axis: Axis

    @model_validator(mode="after")
    def _orthonormal_axes(self) -> "ScenarioModel":
        basis = np.array([self.aperture_x_axis, self.aperture_y_axis, self.boresight_axis], dtype=float)
        if not np.allclose(basis @ basis.T, np.eye(3), atol=1e-9):
            raise ValueError("aperture axes and boresight must be orthonormal")
        return self


class NoiseModel(_Section):
    sigma: float = Field(..., ge=0)
    seed: Optional[int] = Field(None, ge=0, description="Falls back to the top-level seed.")


class GridModel(_Section):
    rows: int = Field(..., ge=1)
    cols: int = Field(..., ge=1)
    u_extent: Extent
    v_extent: Extent

    @field_validator("u_extent", "v_extent")
    @classmethod
    def _within_visible(cls, value: Extent) -> Extent:
        lo, hi = value
        if not (-1.0 <= lo <= hi <= 1.0):
            raise ValueError("extent must be an interval [lo, hi] within [-1, 1]")
        return value

    def build(self) -> AngleGrid:
        return build_grid(self.rows, self.cols, self.u_extent, self.v_extent)


class Stage1Model(_Section):
    l1_weight: float = Field(..., ge=0)
    power_iters: int = Field(..., ge=1)
    power_tol: float = Field(..., gt=0)


class ApModel(_Section):
    k_hat: int = Field(..., ge=1)
    nu: Optional[float] = Field(None, gt=0)
    n_cg: int = Field(..., ge=1)
    n_ap: int = Field(..., ge=1)
    stop_tol: Optional[float] = Field(None, gt=0)
    phase_update: Literal["accumulate", "replace"]
    stage2_l1_weight: float = Field(..., ge=0)


class LineSearchModel(_Section):
    initial_step: float = Field(..., gt=0)
    growth: float = Field(..., gt=1)
    tol: float = Field(..., gt=0)
    max_evals: int = Field(..., ge=3)


class LpModel(_Section):
    tol: float = Field(..., gt=0)
    max_iter: int = Field(..., ge=1)


class OutputModel(_Section):
    directory: str
    emit_svg: bool


class SolverSections(_Section):
    """Everything the retrieval itself needs; shared by the CLI and the HTTP surface."""

    stage1_grid: GridModel
    stage2_grid: GridModel
    stage1: Stage1Model
    ap: ApModel
    line_search: LineSearchModel
    lp: LpModel

    def ap_config(self) -> ApConfig:
        return ApConfig(
            k_hat=self.ap.k_hat,
            nu=self.ap.nu,
            n_cg=self.ap.n_cg,
            n_ap=self.ap.n_ap,
            stop_tol=self.ap.stop_tol,
            phase_update=self.ap.phase_update,
            stage2_l1_weight=self.ap.stage2_l1_weight,
            line_search=LineSearchSpec(**self.line_search.model_dump()),
            lp_tol=self.lp.tol,
            lp_max_iter=self.lp.max_iter,
        )

    def stage1_config(self) -> Stage1Config:
        return Stage1Config(**self.stage1.model_dump())


class RunConfig(SolverSections):
    scenario: ScenarioModel
    noise: NoiseModel
    output: OutputModel
    seed: int = Field(..., ge=0)

    @property
    def noise_seed(self) -> int:
        return self.noise.seed if self.noise.seed is not None else self.seed

    def geometry(self) -> ApertureGeometry:
        sc = self.scenario
        return rectangular_aperture(sc.rows, sc.cols, sc.spacing_wavelengths, sc.frequency_hz)

    def scenario_model(self) -> Scenario:
        sc = self.scenario
        return Scenario(
            sources=[Source(position_mm=s.position_mm, power_db=s.power_db) for s in sc.sources],
            geometry=self.geometry(),
            embedding=ApertureEmbedding(
                x_axis=sc.aperture_x_axis, y_axis=sc.aperture_y_axis, boresight=sc.boresight_axis
            ),
            noise=NoiseSpec(sigma=self.noise.sigma, seed=self.noise_seed),
        )

    def flat(self) -> Dict[str, Any]:
        return flatten(self.model_dump(mode="json"))


# ---------------------------------------------------------------------------
# Flat <-> nested
# ---------------------------------------------------------------------------


def flatten(nested: Mapping[str, Any]) -> Dict[str, Any]:
    flat: Dict[str, Any] = {}
    for key, value in nested.items():
        if isinstance(value, Mapping):
            for inner, item in value.items():
                flat[f"{key}.{inner}"] = item
        else:
            flat[key] = value
    return dict(sorted(flat.items()))


def unflatten(flat: Mapping[str, Any]) -> Dict[str, Any]:
    nested: Dict[str, Any] = {}
    for key, value in flat.items():
        section, _, name = key.partition(".")
        if name:
            nested.setdefault(section, {})[name] = value
        else:
            nested[section] = value
    return nested


def _violations(exc: ValidationError) -> List[str]:
    messages = []
    for error in exc.errors():
        location = ".".join(str(part) for part in error["loc"])
        messages.append(f"{location}: {error['msg']}")
    return messages


def _unknown_keys(flat: Mapping[str, Any], allowed_sections: Tuple[str, ...]) -> List[str]:
    unknown = []
    for key in flat:
        section, _, name = key.partition(".")
        known = key in DEFAULT_RUN_CONFIG or key in ("scenario.frequency_hz", "scenario.sources")
        if not known or section not in allowed_sections:
            unknown.append(f"{key}: unknown configuration key")
    return unknown


def resolve_config(user: Mapping[str, Any]) -> RunConfig:
    """Merge ``user`` over :data:`DEFAULT_RUN_CONFIG` and validate."""

    unknown = _unknown_keys(user, SOLVER_SECTIONS + ("scenario", "noise", "output", "seed"))
    merged = {**DEFAULT_RUN_CONFIG, **user}
    try:
        config = RunConfig.model_validate(unflatten(merged))
    except ValidationError as exc:
        violations = unknown + _violations(exc)
        raise ConfigError(f"{len(violations)} configuration violation(s)", violations) from exc
    if unknown:
        raise ConfigError(f"{len(unknown)} configuration violation(s)", unknown)
    return config


def resolve_solver_overrides(overrides: Mapping[str, Any]) -> SolverSections:
    """Solver-only sections for callers that bring their own geometry and measurements."""

    unknown = _unknown_keys(overrides, SOLVER_SECTIONS)
    merged = {
        key: value
        for key, value in {**DEFAULT_RUN_CONFIG, **overrides}.items()
        if key.partition(".")[0] in SOLVER_SECTIONS
    }
    try:
        sections = SolverSections.model_validate(unflatten(merged))
    except ValidationError as exc:
        violations = unknown + _violations(exc)
        raise ConfigError(f"{len(violations)} configuration violation(s)", violations) from exc
    if unknown:
        raise ConfigError(f"{len(unknown)} configuration violation(s)", unknown)
    return sections


def read_config_file(path: Path) -> Dict[str, Any]:
    path = Path(path).expanduser()
    try:
        with path.resolve().open("r", encoding="utf-8") as handle:
            data = json.load(handle)
    except FileNotFoundError as exc:
        raise ConfigError(f"Config file not found: {path}", [f"{path}: file not found"]) from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"Config file is not valid JSON: {path}", [f"{path}: {exc}"]) from exc
    if not isinstance(data, dict):
        raise ConfigError("Config must be a JSON object of flat keys", ["<root>: expected an object"])
    return data


def load_run_config(
    path: Path,
    overrides: Optional[Mapping[str, Any]] = None,
    base: Optional[Mapping[str, Any]] = None,
) -> RunConfig:
    """File keys win over ``base``; ``overrides`` win over both."""

    user = {**(base or {}), **read_config_file(path), **(overrides or {})}
    return resolve_config(user)


# ---------------------------------------------------------------------------
# Validation report
# ---------------------------------------------------------------------------


@dataclass
class ValidationReport:
    ok: bool
    violations: List[str] = field(default_factory=list)
    warnings: List[str] = field(default_factory=list)
    effective: Dict[str, Any] = field(default_factory=dict)

    def to_payload(self) -> Dict[str, Any]:
        return {
            "status": "ok" if self.ok else "invalid",
            "violations": self.violations,
            "warnings": self.warnings,
            "effective": self.effective,
        }


def policy_warnings(config: RunConfig) -> List[str]:
    warnings = []
    s1, s2 = config.stage1_grid, config.stage2_grid
    if s1.rows * s1.cols > s2.rows * s2.cols:
        warnings.append(
            f"stage1 grid ({s1.rows}x{s1.cols}) is larger than stage2 grid ({s2.rows}x{s2.cols})"
        )
    if config.ap.k_hat != len(config.scenario.sources):
        warnings.append(
            f"ap.k_hat={config.ap.k_hat} differs from the {len(config.scenario.sources)} simulated sources"
        )
    return warnings


def validate_config(user: Mapping[str, Any]) -> ValidationReport:
    """Schema and range check without running anything."""

    try:
        config = resolve_config(user)
    except ConfigError as exc:
        return ValidationReport(ok=False, violations=exc.violations)
    warnings = policy_warnings(config)
    for message in warnings:
        LOGGER.warning(message)
    return ValidationReport(ok=True, warnings=warnings, effective=config.flat())
