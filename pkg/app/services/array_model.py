"""Aperture geometry, sine-space search grids and the array manifold matrix."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple

import numpy as np

from app.core.errors import InvalidInputError

LOGGER = logging.getLogger(__name__)

SPEED_OF_LIGHT = 299_792_458.0  # m/s
VISIBLE_TOLERANCE = 1e-12
ALIAS_TOLERANCE = 1e-9


def wavelength_from_frequency(frequency_hz: float) -> float:
    """Free-space wavelength in meters for a carrier frequency in hertz."""

    if not math.isfinite(frequency_hz) or frequency_hz <= 0:
        raise InvalidInputError(f"Carrier frequency must be positive, got {frequency_hz!r}")
    return SPEED_OF_LIGHT / frequency_hz


# ---------------------------------------------------------------------------
# Geometry
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ApertureGeometry:
    """Element positions (meters, aperture plane) and the carrier they are sampled at.

    ``shape`` and ``spacing`` are only set for rectangular apertures built by
    :func:`rectangular_aperture`; elements are then ordered row-major with the
    column index running along ``x``.
    """

    positions: np.ndarray
    wavelength: float
    frequency: float
    shape: Optional[Tuple[int, int]] = None
    spacing: Optional[float] = None
    wavenumber: float = field(init=False)

    def __post_init__(self) -> None:
        positions = np.asarray(self.positions, dtype=float)
        if positions.ndim != 2 or positions.shape[1] != 2 or positions.shape[0] < 1:
            raise InvalidInputError("Aperture positions must be a non-empty (N, 2) array")
        if not np.all(np.isfinite(positions)):
            raise InvalidInputError("Aperture positions must be finite")
        if not (math.isfinite(self.wavelength) and self.wavelength > 0):
            raise InvalidInputError(f"Wavelength must be positive, got {self.wavelength!r}")
        positions.setflags(write=False)
        object.__setattr__(self, "positions", positions)
        object.__setattr__(self, "wavenumber", 2.0 * math.pi / self.wavelength)
        if self.duplicate_count:
            LOGGER.warning("Aperture contains %s duplicate element positions", self.duplicate_count)

    @classmethod
    def from_frequency(
        cls, positions: Sequence[Sequence[float]], frequency_hz: float
    ) -> "ApertureGeometry":
        return cls(
            positions=np.asarray(positions, dtype=float),
            wavelength=wavelength_from_frequency(frequency_hz),
            frequency=frequency_hz,
        )

    @property
    def num_elements(self) -> int:
        return int(self.positions.shape[0])

    @property
    def duplicate_count(self) -> int:
        unique = np.unique(self.positions, axis=0)
        return int(self.positions.shape[0] - unique.shape[0])

    def diagnostics(self) -> dict:
        return {
            "num_elements": self.num_elements,
            "wavelength_m": self.wavelength,
            "wavenumber_rad_per_m": self.wavenumber,
            "duplicate_positions": self.duplicate_count,
        }


def rectangular_aperture(
    rows: int, cols: int, spacing_wavelengths: float, frequency_hz: float
) -> ApertureGeometry:
    """Planar ``rows`` x ``cols`` aperture centered at the origin."""

    if rows < 1 or cols < 1:
        raise InvalidInputError("Aperture needs at least one row and one column")
    if not spacing_wavelengths > 0:
        raise InvalidInputError("Element spacing must be positive")
    wavelength = wavelength_from_frequency(frequency_hz)
    spacing = spacing_wavelengths * wavelength
    xs = (np.arange(cols) - (cols - 1) / 2.0) * spacing
    ys = (np.arange(rows) - (rows - 1) / 2.0) * spacing
    grid_y, grid_x = np.meshgrid(ys, xs, indexing="ij")
    positions = np.column_stack([grid_x.ravel(), grid_y.ravel()])
    return ApertureGeometry(
        positions=positions,
        wavelength=wavelength,
        frequency=frequency_hz,
        shape=(rows, cols),
        spacing=spacing,
    )


# ---------------------------------------------------------------------------
# Sine-space grid
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AngleGrid:
    """Visible (u, v) directions of a uniform rows x cols sine-space grid.

    ``indices`` keeps the (row, col) cell of every retained angle so that
    neighbourhood operations survive the visible-region filter.
    """

    angles: np.ndarray
    indices: np.ndarray
    rows: int
    cols: int
    u_extent: Tuple[float, float]
    v_extent: Tuple[float, float]

    @property
    def size(self) -> int:
        return int(self.angles.shape[0])

    @property
    def u(self) -> np.ndarray:
        return self.angles[:, 0]

    @property
    def v(self) -> np.ndarray:
        return self.angles[:, 1]


def _axis(count: int, extent: Tuple[float, float]) -> np.ndarray:
    lo, hi = float(extent[0]), float(extent[1])
    if count == 1:
        return np.array([(lo + hi) / 2.0])
    return np.linspace(lo, hi, count)


def build_grid(
    rows: int,
    cols: int,
    u_extent: Tuple[float, float] = (-1.0, 1.0),
    v_extent: Tuple[float, float] = (-1.0, 1.0),
) -> AngleGrid:
    """Uniform sine-space grid, row-major (v along rows, u along columns), visible region only."""

    if rows < 1 or cols < 1:
        raise InvalidInputError("Grid needs at least one row and one column")
    for name, extent in (("u", u_extent), ("v", v_extent)):
        lo, hi = extent
        if not (-1.0 <= lo <= 1.0 and -1.0 <= hi <= 1.0) or lo > hi:
            raise InvalidInputError(f"{name} extent {extent!r} must be an interval within [-1, 1]")

    us = _axis(cols, u_extent)
    vs = _axis(rows, v_extent)
    row_idx, col_idx = np.meshgrid(np.arange(rows), np.arange(cols), indexing="ij")
    row_idx = row_idx.ravel()
    col_idx = col_idx.ravel()
    u = us[col_idx]
    v = vs[row_idx]
    visible = u * u + v * v <= 1.0 + VISIBLE_TOLERANCE
    if not np.any(visible):
        raise InvalidInputError("Angle grid is empty after visible-region filtering")

    angles = np.column_stack([u[visible], v[visible]])
    indices = np.column_stack([row_idx[visible], col_idx[visible]])
    angles.setflags(write=False)
    indices.setflags(write=False)
    return AngleGrid(
        angles=angles,
        indices=indices,
        rows=rows,
        cols=cols,
        u_extent=(float(u_extent[0]), float(u_extent[1])),
        v_extent=(float(v_extent[0]), float(v_extent[1])),
    )


# ---------------------------------------------------------------------------
# Steering vectors and the manifold
# ---------------------------------------------------------------------------


def _check_visible(u: float, v: float) -> None:
    if not (math.isfinite(u) and math.isfinite(v)):
        raise InvalidInputError(f"Direction ({u!r}, {v!r}) is not finite")
    if u * u + v * v > 1.0 + VISIBLE_TOLERANCE:
        raise InvalidInputError(f"Direction ({u}, {v}) lies outside the visible region")


def steering_vector(geom: ApertureGeometry, u: float, v: float) -> np.ndarray:
    """a(u, v)[n] = exp(j k (x_n u + y_n v))."""

    _check_visible(u, v)
    x = geom.positions[:, 0]
    y = geom.positions[:, 1]
    return np.exp(1j * (geom.wavenumber * (x * u + y * v)))


@dataclass(frozen=True)
class ManifoldMatrix:
    """N x K matrix A whose columns are steering vectors over ``grid``."""

    matrix: np.ndarray
    geometry: ApertureGeometry
    grid: AngleGrid

    @property
    def shape(self) -> Tuple[int, int]:
        return self.matrix.shape  # type: ignore[return-value]


def build_manifold(geom: ApertureGeometry, grid: AngleGrid) -> ManifoldMatrix:
    for u, v in grid.angles:
        _check_visible(float(u), float(v))
    x = geom.positions[:, 0]
    y = geom.positions[:, 1]
    phase = geom.wavenumber * (np.outer(x, grid.u) + np.outer(y, grid.v))
    matrix = np.exp(1j * phase)
    matrix.setflags(write=False)
    return ManifoldMatrix(matrix=matrix, geometry=geom, grid=grid)


def element_row(manifold: ManifoldMatrix, i: int) -> np.ndarray:
    """f_i: the electrical angle vector of element ``i`` over the whole grid."""

    n = manifold.matrix.shape[0]
    if not 0 <= i < n:
        raise InvalidInputError(f"Element index {i} out of range [0, {n})")
    return manifold.matrix[i, :].copy()


def alias_representatives(manifold: ManifoldMatrix) -> np.ndarray:
    """Lowest grid index whose column equals column j up to a global phase.

    At lambda/2 spacing the columns at u = -1 and u = +1 coincide, so two cells can
    carry one physical direction.
    """

    A = manifold.matrix
    n, k = A.shape
    gram = np.abs(A.conj().T @ A)
    same = gram >= n * (1.0 - ALIAS_TOLERANCE)
    representatives = np.argmax(same, axis=0)
    aliased = int(np.count_nonzero(representatives != np.arange(k)))
    if aliased:
        LOGGER.debug("%s of %s grid columns alias an earlier column", aliased, k)
    return representatives
