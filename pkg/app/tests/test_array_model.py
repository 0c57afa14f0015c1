"""Tests for aperture geometry, angle grids and the manifold matrix."""

from __future__ import annotations

import logging
import math

import numpy as np
import pytest

from app.core.errors import InvalidInputError
from app.services.array_model import (
    SPEED_OF_LIGHT,
    ApertureGeometry,
    alias_representatives,
    build_grid,
    build_manifold,
    element_row,
    rectangular_aperture,
    steering_vector,
    wavelength_from_frequency,
)


def test_wavelength_at_forty_gigahertz() -> None:
    assert wavelength_from_frequency(40e9) == pytest.approx(SPEED_OF_LIGHT / 40e9)
    assert wavelength_from_frequency(40e9) == pytest.approx(7.4948e-3, rel=1e-4)


@pytest.mark.parametrize("frequency", [0.0, -1.0, math.inf, math.nan])
def test_wavelength_rejects_bad_frequency(frequency: float) -> None:
    with pytest.raises(InvalidInputError):
        wavelength_from_frequency(frequency)


def test_rectangular_aperture_is_centered_and_row_major(aperture: ApertureGeometry) -> None:
    spacing = aperture.wavelength / 2
    assert aperture.num_elements == 49
    assert aperture.shape == (7, 7)
    assert aperture.spacing == pytest.approx(spacing)
    np.testing.assert_allclose(aperture.positions.mean(axis=0), [0.0, 0.0], atol=1e-15)
    np.testing.assert_allclose(aperture.positions[1] - aperture.positions[0], [spacing, 0.0])
    np.testing.assert_allclose(aperture.positions[7] - aperture.positions[0], [0.0, spacing])
    np.testing.assert_allclose(aperture.positions[24], [0.0, 0.0], atol=1e-15)


def test_positions_are_read_only(aperture: ApertureGeometry) -> None:
    with pytest.raises(ValueError):
        aperture.positions[0, 0] = 1.0


def test_duplicate_positions_are_counted_and_logged(caplog: pytest.LogCaptureFixture) -> None:
    with caplog.at_level(logging.WARNING):
        geom = ApertureGeometry.from_frequency([[0.0, 0.0], [0.0, 0.0], [1e-3, 0.0]], 40e9)
    assert geom.duplicate_count == 1
    assert "duplicate" in caplog.text


def test_single_cell_grid_sits_at_extent_midpoint() -> None:
    grid = build_grid(1, 1)
    np.testing.assert_array_equal(grid.angles, [[0.0, 0.0]])
    grid = build_grid(1, 1, (0.2, 0.4), (-0.6, -0.2))
    np.testing.assert_allclose(grid.angles, [[0.3, -0.4]])


def test_full_grid_keeps_visible_region_only() -> None:
    grid = build_grid(3, 3)
    # corners (+-1, +-1) are invisible
    assert grid.size == 5
    assert np.all(np.sum(grid.angles ** 2, axis=1) <= 1.0 + 1e-12)
    np.testing.assert_array_equal(grid.indices[:, 0], [0, 1, 1, 1, 2])


def test_grid_is_row_major_with_u_along_columns() -> None:
    grid = build_grid(2, 3, (-0.5, 0.5), (-0.25, 0.25))
    np.testing.assert_allclose(grid.u, [-0.5, 0.0, 0.5, -0.5, 0.0, 0.5])
    np.testing.assert_allclose(grid.v, [-0.25, -0.25, -0.25, 0.25, 0.25, 0.25])


@pytest.mark.parametrize(
    "rows, cols, u_extent, v_extent",
    [
        (0, 3, (-1.0, 1.0), (-1.0, 1.0)),
        (3, 3, (-1.5, 1.0), (-1.0, 1.0)),
        (3, 3, (0.5, -0.5), (-1.0, 1.0)),
        (1, 1, (1.0, 1.0), (1.0, 1.0)),
    ],
)
def test_invalid_grids_are_rejected(rows, cols, u_extent, v_extent) -> None:
    with pytest.raises(InvalidInputError):
        build_grid(rows, cols, u_extent, v_extent)


def test_steering_vector_has_unit_modulus_and_conjugate_symmetry(aperture: ApertureGeometry) -> None:
    a = steering_vector(aperture, 0.3, -0.4)
    np.testing.assert_allclose(np.abs(a), 1.0, atol=1e-12)
    np.testing.assert_allclose(steering_vector(aperture, -0.3, 0.4), a.conj(), atol=1e-12)
    np.testing.assert_allclose(steering_vector(aperture, 0.0, 0.0), np.ones(49))


def test_steering_vector_rejects_invisible_direction(aperture: ApertureGeometry) -> None:
    with pytest.raises(InvalidInputError):
        steering_vector(aperture, 0.9, 0.9)


def test_manifold_columns_are_steering_vectors(aperture: ApertureGeometry) -> None:
    grid = build_grid(5, 5)
    manifold = build_manifold(aperture, grid)
    assert manifold.shape == (49, grid.size)
    np.testing.assert_allclose(np.abs(manifold.matrix), 1.0, atol=1e-12)
    for j in (0, grid.size // 2, grid.size - 1):
        u, v = grid.angles[j]
        np.testing.assert_allclose(manifold.matrix[:, j], steering_vector(aperture, u, v), atol=1e-12)


def test_manifold_is_deterministic(aperture: ApertureGeometry) -> None:
    grid = build_grid(11, 11)
    first = build_manifold(aperture, grid).matrix
    second = build_manifold(aperture, grid).matrix
    assert np.array_equal(first, second)


def test_element_row_returns_a_copy(small_manifold) -> None:
    row = element_row(small_manifold, 3)
    np.testing.assert_array_equal(row, small_manifold.matrix[3])
    row[0] = 0.0
    assert small_manifold.matrix[3, 0] != 0.0


@pytest.mark.parametrize("index", [-1, 49])
def test_element_row_rejects_out_of_range(small_manifold, index: int) -> None:
    with pytest.raises(InvalidInputError):
        element_row(small_manifold, index)


def test_grid_edges_alias_at_half_wavelength(aperture: ApertureGeometry) -> None:
    manifold = build_manifold(aperture, build_grid(21, 21))
    representatives = alias_representatives(manifold)
    grid = manifold.grid
    top, bottom = _nearest_cell(grid, 0.0, -1.0), _nearest_cell(grid, 0.0, 1.0)
    assert representatives[bottom] == top
    assert representatives[top] == top
    centre = _nearest_cell(grid, 0.0, 0.0)
    assert representatives[centre] == centre


def test_small_grid_has_no_aliases(small_manifold) -> None:
    np.testing.assert_array_equal(alias_representatives(small_manifold), np.arange(9))


def _nearest_cell(grid, u: float, v: float) -> int:
    return int(np.argmin(np.hypot(grid.u - u, grid.v - v)))
