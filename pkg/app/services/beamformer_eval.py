"""Beamformed images, peak tables, beamwidths and phase-error metrics."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from app.core.errors import InvalidInputError
from app.services.array_model import (
    AngleGrid,
    ApertureGeometry,
    ManifoldMatrix,
    alias_representatives,
)
from app.services.stage1_lift import phase_angle

LOGGER = logging.getLogger(__name__)

DB_FLOOR = -80.0

_NEIGHBOUR_OFFSETS = [(dr, dc) for dr in (-1, 0, 1) for dc in (-1, 0, 1) if (dr, dc) != (0, 0)]


@dataclass(frozen=True)
class BeamImage:
    grid: AngleGrid
    values: np.ndarray  # dB relative to the peak, floored
    linear: np.ndarray  # |a^H b|**2
    alias_of: Optional[np.ndarray] = None  # representative cell per cell

    @property
    def peak_index(self) -> int:
        return int(np.argmax(self.linear))


@dataclass(frozen=True)
class Peak:
    u: float
    v: float
    level_db: float
    index: int


@dataclass(frozen=True)
class PeakList:
    peaks: List[Peak]
    requested: int

    @property
    def insufficient(self) -> bool:
        return len(self.peaks) < self.requested


@dataclass(frozen=True)
class Beamwidth:
    """Null-to-null widths in sine space; the first-null distance is half of each."""

    du: float
    dv: float

    @property
    def first_null_u(self) -> float:
        return self.du / 2.0

    @property
    def first_null_v(self) -> float:
        return self.dv / 2.0


@dataclass
class PhaseReport:
    phi_star: float
    errors: np.ndarray
    max_error: float
    rms_error: float
    conjugated: bool
    alternative_rms: float
    unwrapped_true: np.ndarray = field(repr=False)
    unwrapped_est: np.ndarray = field(repr=False)

    def summary(self) -> dict:
        return {
            "phi_star": self.phi_star,
            "max_error_rad": self.max_error,
            "rms_error_rad": self.rms_error,
            "conjugated": self.conjugated,
            "other_branch_rms_rad": self.alternative_rms,
        }


def beamform_image(manifold: ManifoldMatrix, b: np.ndarray) -> BeamImage:
    """Conventional beamformer |a(u, v)^H b|^2 over the manifold's grid."""

    b = np.asarray(b, dtype=complex)
    A = manifold.matrix
    if b.shape != (A.shape[0],):
        raise InvalidInputError(f"Field of shape {b.shape} does not match {A.shape[0]} elements")
    if not np.any(b):
        raise InvalidInputError("Cannot beamform an all-zero field")
    response = A.conj().T @ b
    linear = response.real ** 2 + response.imag ** 2
    peak = float(np.max(linear))
    with np.errstate(divide="ignore"):
        values = 10.0 * np.log10(linear / peak)
    values = np.maximum(values, DB_FLOOR)
    return BeamImage(
        grid=manifold.grid, values=values, linear=linear, alias_of=alias_representatives(manifold)
    )


def find_peaks(image: BeamImage, count: int) -> PeakList:
    """Local maxima over the 8-neighbourhood of the (row, col) grid layout.

    Cells that alias an earlier cell count once, under the lower index.
    """

    if count < 1:
        raise InvalidInputError("Peak count must be at least 1")
    grid = image.grid
    rows, cols = grid.indices[:, 0], grid.indices[:, 1]
    layout = np.full((grid.rows + 2, grid.cols + 2), np.nan)
    layout[rows + 1, cols + 1] = image.linear

    at_least_all = np.ones(grid.size, dtype=bool)
    above_some = np.zeros(grid.size, dtype=bool)
    has_neighbour = np.zeros(grid.size, dtype=bool)
    for dr, dc in _NEIGHBOUR_OFFSETS:
        neighbour = layout[rows + 1 + dr, cols + 1 + dc]
        present = ~np.isnan(neighbour)
        has_neighbour |= present
        at_least_all &= ~present | (image.linear >= np.where(present, neighbour, 0.0))
        above_some |= present & (image.linear > np.where(present, neighbour, 0.0))

    is_peak = at_least_all & (above_some | ~has_neighbour)
    candidates = np.flatnonzero(is_peak)
    ordered = []
    seen = set()
    for j in sorted(candidates, key=lambda c: (-image.linear[c], c)):
        direction = int(image.alias_of[j]) if image.alias_of is not None else int(j)
        if direction in seen:
            continue
        seen.add(direction)
        ordered.append(direction)
        if len(ordered) == count:
            break
    peaks = [
        Peak(u=float(grid.u[j]), v=float(grid.v[j]), level_db=float(image.values[j]), index=int(j))
        for j in ordered
    ]
    if len(peaks) < count:
        LOGGER.warning("Requested %s peaks but only %s local maxima exist", count, len(peaks))
    return PeakList(peaks=peaks, requested=count)


def beamwidth(geom: ApertureGeometry) -> Beamwidth:
    if geom.shape is None or geom.spacing is None:
        raise InvalidInputError("Beamwidth is only defined for rectangular apertures")
    rows, cols = geom.shape
    du = 2.0 * geom.wavelength / (cols * geom.spacing)
    dv = 2.0 * geom.wavelength / (rows * geom.spacing)
    return Beamwidth(du=du, dv=dv)


def wrap_phase(x: np.ndarray) -> np.ndarray:
    """Wrap to (-pi, pi]."""

    return math.pi - np.mod(math.pi - np.asarray(x, dtype=float), 2.0 * math.pi)


def _branch(b_est: np.ndarray, b_true: np.ndarray) -> Tuple[float, np.ndarray]:
    phi = float(np.angle(np.vdot(b_true, b_est)))
    errors = wrap_phase(phase_angle(b_est * np.exp(-1j * phi)) - phase_angle(b_true))
    return phi, errors


def _rms(values: np.ndarray) -> float:
    return float(np.sqrt(np.mean(values ** 2)))


def align_global_phase(b_est: np.ndarray, b_true: np.ndarray) -> Tuple[float, PhaseReport]:
    """Least-squares global phase alignment, also trying the conjugated estimate."""

    b_est = np.asarray(b_est, dtype=complex)
    b_true = np.asarray(b_true, dtype=complex)
    if b_est.shape != b_true.shape or b_est.ndim != 1:
        raise InvalidInputError("Estimated and true fields must be vectors of equal length")
    if not np.any(b_true) or not np.any(b_est):
        raise InvalidInputError("Phase alignment needs nonzero fields")

    phi, errors = _branch(b_est, b_true)
    phi_c, errors_c = _branch(b_est.conj(), b_true)
    rms, rms_c = _rms(errors), _rms(errors_c)
    conjugated = rms_c < rms
    if conjugated:
        LOGGER.info("Conjugated estimate aligns better (rms %.4f < %.4f)", rms_c, rms)
        phi, errors, rms, rms_c = phi_c, errors_c, rms_c, rms
        aligned = b_est.conj() * np.exp(-1j * phi)
    else:
        aligned = b_est * np.exp(-1j * phi)

    report = PhaseReport(
        phi_star=phi,
        errors=errors,
        max_error=float(np.max(np.abs(errors))),
        rms_error=rms,
        conjugated=bool(conjugated),
        alternative_rms=rms_c,
        unwrapped_true=np.unwrap(phase_angle(b_true)),
        unwrapped_est=np.unwrap(phase_angle(aligned)),
    )
    return phi, report


def compare_peaks(
    reference: Sequence[Peak], estimate: Sequence[Peak], width: Beamwidth
) -> List[dict]:
    """Match each reference peak to the nearest estimated peak and test both beamwidth bounds."""

    rows = []
    for ref in reference:
        if not estimate:
            rows.append({"u": ref.u, "v": ref.v, "matched": False, "strict": False, "generous": False})
            continue
        nearest = min(estimate, key=lambda p: ((p.u - ref.u) ** 2 + (p.v - ref.v) ** 2, p.index))
        du = abs(nearest.u - ref.u)
        dv = abs(nearest.v - ref.v)
        rows.append(
            {
                "u": ref.u,
                "v": ref.v,
                "matched": True,
                "est_u": nearest.u,
                "est_v": nearest.v,
                "offset_u": du,
                "offset_v": dv,
                "strict": du <= width.first_null_u and dv <= width.first_null_v,
                "generous": du <= width.du and dv <= width.dv,
            }
        )
    return rows
