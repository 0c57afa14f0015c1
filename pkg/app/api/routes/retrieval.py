"""Phase retrieval endpoints."""

from __future__ import annotations

import logging

from fastapi import APIRouter, Depends, HTTPException, status

from app import schemas
from app.core.config import Settings, get_settings
from app.core.errors import ConfigError, InvalidInputError, SolverError
from app.services.array_model import rectangular_aperture
from app.services.experiment import retrieve
from app.services.run_config import resolve_solver_overrides
from app.services.scene_sim import Measurements

router = APIRouter(prefix="/retrieval", tags=["retrieval"])

logger = logging.getLogger(__name__)


@router.post("/run", response_model=schemas.RetrievalResponse)
def run_retrieval(
    payload: schemas.RetrievalRequest,
    settings: Settings = Depends(get_settings),
) -> schemas.RetrievalResponse:
    """Recover aperture phases from intensity-only measurements."""

    overrides = {"lp.tol": settings.lp_tol, "lp.max_iter": settings.lp_max_iter, **payload.overrides}
    try:
        solver = resolve_solver_overrides(overrides)
        geometry = rectangular_aperture(
            payload.rows, payload.cols, payload.spacing_wavelengths, payload.frequency_hz
        )
        lifted_variables = 2 * solver.stage1_grid.build().size ** 2
        if lifted_variables > settings.max_stage1_variables:
            raise InvalidInputError(
                f"Stage-1 grid needs {lifted_variables} lifted variables "
                f"(limit {settings.max_stage1_variables})"
            )
        measurements = Measurements.from_intensity(payload.intensity)
        retrieval = retrieve(geometry, measurements, solver)
    except ConfigError as exc:
        raise HTTPException(
            status_code=status.HTTP_422_UNPROCESSABLE_ENTITY,
            detail={"message": str(exc), "violations": exc.violations},
        ) from exc
    except InvalidInputError as exc:
        raise HTTPException(status_code=status.HTTP_422_UNPROCESSABLE_ENTITY, detail=str(exc)) from exc
    except SolverError as exc:
        logger.error("Retrieval failed: %s", exc)
        raise HTTPException(status_code=status.HTTP_500_INTERNAL_SERVER_ERROR, detail=exc.to_payload()) from exc

    estimate = retrieval.estimate
    stage1 = estimate.stage1
    return schemas.RetrievalResponse(
        phases=estimate.phases.tolist(),
        magnitudes=measurements.magnitude.tolist(),
        delta_trace=list(estimate.delta_trace),
        converged=estimate.converged,
        iterations=estimate.iterations,
        stage1_delta=stage1.delta if stage1 else None,
        lambda_max=stage1.eigenvalue if stage1 else None,
    )
