"""Shared fixtures for the phase retrieval tests."""

from __future__ import annotations

import pytest

from app.services.array_model import ApertureGeometry, build_grid, build_manifold, rectangular_aperture

FREQUENCY_HZ = 40e9


@pytest.fixture
def aperture() -> ApertureGeometry:
    return rectangular_aperture(7, 7, 0.5, FREQUENCY_HZ)


@pytest.fixture
def small_manifold(aperture: ApertureGeometry):
    """3 x 3 grid over [-0.5, 0.5]^2: no aliased columns at half-wavelength spacing."""

    return build_manifold(aperture, build_grid(3, 3, (-0.5, 0.5), (-0.5, 0.5)))
