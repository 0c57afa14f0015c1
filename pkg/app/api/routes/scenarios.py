"""Scene simulation endpoints."""

from __future__ import annotations

import logging

from fastapi import APIRouter, HTTPException, status

from app import schemas
from app.core.errors import InvalidInputError
from app.services.array_model import rectangular_aperture
from app.services.scene_sim import NoiseSpec, Scenario, Source, simulate_received, source_direction
from app.services.stage1_lift import phase_angle

router = APIRouter(prefix="/scenarios", tags=["scenarios"])

logger = logging.getLogger(__name__)


@router.post("/simulate", response_model=schemas.SimulateResponse)
def simulate_scenario(payload: schemas.SimulateRequest) -> schemas.SimulateResponse:
    """Simulate probe intensities for point sources in front of a rectangular aperture."""

    try:
        geometry = rectangular_aperture(
            payload.rows, payload.cols, payload.spacing_wavelengths, payload.frequency_hz
        )
        scenario = Scenario(
            sources=[Source(position_mm=s.position_mm, power_db=s.power_db) for s in payload.sources],
            geometry=geometry,
            noise=NoiseSpec(sigma=payload.noise_sigma, seed=payload.noise_seed),
        )
        measurements = simulate_received(scenario)
        directions = [source_direction(scenario, source) for source in scenario.sources]
    except InvalidInputError as exc:
        raise HTTPException(status_code=status.HTTP_422_UNPROCESSABLE_ENTITY, detail=str(exc)) from exc

    logger.info("Simulated %s elements for %s sources", measurements.size, len(payload.sources))
    return schemas.SimulateResponse(
        positions_m=[(float(x), float(y)) for x, y in geometry.positions],
        intensity=measurements.intensity.tolist(),
        phase_true=phase_angle(measurements.b_true).tolist(),
        source_directions=[schemas.Direction(u=u, v=v) for u, v in directions],
    )
