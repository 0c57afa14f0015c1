"""Schemas for the simulation and retrieval endpoints."""

from __future__ import annotations

from typing import Any, Dict, List, Optional, Tuple

from pydantic import BaseModel, Field


class SourcePayload(BaseModel):
    position_mm: Tuple[float, float, float] = Field(..., description="Scene position (X, Y, Z) in millimeters.")
    power_db: float = Field(..., description="Source power in dB.")


class ApertureSpec(BaseModel):
    frequency_hz: float = Field(..., gt=0, description="Carrier frequency in Hz.")
    rows: int = Field(7, ge=1, le=64)
    cols: int = Field(7, ge=1, le=64)
    spacing_wavelengths: float = Field(0.5, gt=0, description="Element spacing in wavelengths.")


class SimulateRequest(ApertureSpec):
    sources: List[SourcePayload] = Field(..., min_length=1)
    noise_sigma: float = Field(0.0, ge=0, description="Standard deviation of additive intensity noise.")
    noise_seed: int = Field(0, ge=0)


class Direction(BaseModel):
    u: float
    v: float


class SimulateResponse(BaseModel):
    positions_m: List[Tuple[float, float]]
    intensity: List[float]
    phase_true: List[float]
    source_directions: List[Direction]


class RetrievalRequest(ApertureSpec):
    intensity: List[float] = Field(..., min_length=1, description="Measured intensities, row-major.")
    overrides: Dict[str, Any] = Field(
        default_factory=dict,
        description="Flat solver keys (stage1_grid.*, stage2_grid.*, stage1.*, ap.*, line_search.*, lp.*).",
    )


class RetrievalResponse(BaseModel):
    phases: List[float]
    magnitudes: List[float]
    delta_trace: List[float]
    converged: bool
    iterations: int
    stage1_delta: Optional[float] = None
    lambda_max: Optional[float] = None
