"""Tests for scene simulation and intensity measurements."""

from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from app.core.errors import InvalidInputError
from app.services.array_model import ApertureGeometry
from app.services.scene_sim import (
    ApertureEmbedding,
    Measurements,
    NoiseSpec,
    Scenario,
    Source,
    at_splitting_to_field,
    dipole_ratio_from_moment,
    field_to_splitting,
    intensity_from_field,
    reference_sources,
    simulate_received,
    source_direction,
)


def _scenario(aperture: ApertureGeometry, sources, noise: NoiseSpec = NoiseSpec()) -> Scenario:
    return Scenario(sources=sources, geometry=aperture, noise=noise)


def test_source_power_conversion() -> None:
    assert Source((0.0, 1000.0, 0.0), 10.0).power_linear == pytest.approx(10.0)
    assert Source((0.0, 1000.0, 0.0), 0.0).power_linear == pytest.approx(1.0)
    np.testing.assert_allclose(Source((1.0, 2.0, 3.0), 0.0).position_m, [1e-3, 2e-3, 3e-3])


def test_reference_source_directions(aperture: ApertureGeometry) -> None:
    scenario = _scenario(aperture, reference_sources())
    first, second = (source_direction(scenario, s) for s in scenario.sources)
    assert first == pytest.approx((-0.3633, 0.6269), abs=1e-3)
    assert second == pytest.approx((0.4119, 0.0), abs=1e-3)


def test_single_source_has_constant_intensity(aperture: ApertureGeometry) -> None:
    measurements = simulate_received(_scenario(aperture, [Source((0.0, 3000.0, 0.0), 10.0)]))
    np.testing.assert_allclose(measurements.intensity, 10.0, rtol=1e-12)
    np.testing.assert_allclose(measurements.magnitude, np.sqrt(10.0), rtol=1e-12)
    assert measurements.has_truth


def test_intensity_scales_with_source_power(aperture: ApertureGeometry) -> None:
    low = simulate_received(_scenario(aperture, [Source((500.0, 3000.0, 200.0), 10.0)]))
    high = simulate_received(_scenario(aperture, [Source((500.0, 3000.0, 200.0), 20.0)]))
    np.testing.assert_allclose(high.intensity, 10.0 * low.intensity, rtol=1e-12)


def test_two_sources_interfere(aperture: ApertureGeometry) -> None:
    measurements = simulate_received(_scenario(aperture, reference_sources()))
    amplitude = np.sqrt(10.0) + np.sqrt(10.0 ** 0.8)
    assert measurements.intensity.max() <= amplitude ** 2 + 1e-9
    assert measurements.intensity.std() > 0.1


@given(st.floats(min_value=-np.pi, max_value=np.pi))
@settings(max_examples=50, deadline=None)
def test_intensity_is_invariant_to_global_phase(phi: float) -> None:
    rng = np.random.default_rng(7)
    b = rng.normal(size=12) + 1j * rng.normal(size=12)
    np.testing.assert_allclose(intensity_from_field(b * np.exp(1j * phi)), intensity_from_field(b), rtol=1e-12)


def test_noiseless_simulation_ignores_seed(aperture: ApertureGeometry) -> None:
    sources = reference_sources()
    first = simulate_received(_scenario(aperture, sources, NoiseSpec(sigma=0.0, seed=1)))
    second = simulate_received(_scenario(aperture, sources, NoiseSpec(sigma=0.0, seed=2)))
    assert np.array_equal(first.intensity, second.intensity)


def test_noise_is_seeded_and_clamped(aperture: ApertureGeometry) -> None:
    sources = reference_sources()
    first = simulate_received(_scenario(aperture, sources, NoiseSpec(sigma=5.0, seed=3)))
    again = simulate_received(_scenario(aperture, sources, NoiseSpec(sigma=5.0, seed=3)))
    other = simulate_received(_scenario(aperture, sources, NoiseSpec(sigma=5.0, seed=4)))
    assert np.array_equal(first.intensity, again.intensity)
    assert not np.array_equal(first.intensity, other.intensity)
    assert np.all(first.intensity >= 0.0)
    np.testing.assert_allclose(first.magnitude, np.sqrt(first.intensity))


def test_source_on_element_is_rejected(aperture: ApertureGeometry) -> None:
    # the centre element of an odd aperture sits at the scene origin
    with pytest.raises(InvalidInputError):
        simulate_received(_scenario(aperture, [Source((0.0, 0.0, 0.0), 0.0)]))


def test_source_at_origin_has_no_direction(aperture: ApertureGeometry) -> None:
    scenario = _scenario(aperture, [Source((0.0, 0.0, 0.0), 0.0)])
    with pytest.raises(InvalidInputError):
        source_direction(scenario, scenario.sources[0])


def test_scenario_needs_sources(aperture: ApertureGeometry) -> None:
    with pytest.raises(InvalidInputError):
        _scenario(aperture, [])


def test_embedding_must_be_orthonormal() -> None:
    with pytest.raises(InvalidInputError):
        ApertureEmbedding(x_axis=(1.0, 0.0, 0.0), y_axis=(1.0, 0.0, 0.0), boresight=(0.0, 1.0, 0.0))


@pytest.mark.parametrize("sigma", [-1.0, float("nan")])
def test_noise_sigma_must_be_non_negative(sigma: float) -> None:
    with pytest.raises(InvalidInputError):
        NoiseSpec(sigma=sigma)


def test_measurements_from_intensity() -> None:
    measurements = Measurements.from_intensity([4.0, 9.0, 0.0])
    np.testing.assert_allclose(measurements.magnitude, [2.0, 3.0, 0.0])
    assert measurements.size == 3
    assert not measurements.has_truth
    with pytest.raises(InvalidInputError):
        Measurements.from_intensity([1.0, -0.5])
    with pytest.raises(InvalidInputError):
        Measurements.from_intensity([1.0, float("inf")])


def test_autler_townes_conversion() -> None:
    assert at_splitting_to_field(10e6, 5e6) == pytest.approx(2.0)
    assert field_to_splitting(2.0, 5e6) == pytest.approx(10e6)
    ratio = dipole_ratio_from_moment(6.62607015e-34 * 1e7)
    assert ratio == pytest.approx(1e7)
    with pytest.raises(InvalidInputError):
        at_splitting_to_field(-1.0, 5e6)
    with pytest.raises(InvalidInputError):
        dipole_ratio_from_moment(0.0)
