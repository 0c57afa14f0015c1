"""Tests for the sparse projection, the unit-modulus ascent and the outer loop."""

from __future__ import annotations

import math

import numpy as np
import pytest

from app.core.errors import InvalidInputError, SolverError
from app.services.alternating_projections import (
    ApConfig,
    LineSearchSpec,
    loading_factor,
    line_search,
    output_power,
    phase_update,
    power_gradient,
    prune_to_sparsity,
    replace_phase,
    run_pipeline,
    stage2_project,
    stage3_cg,
)
from app.services.array_model import build_grid, build_manifold
from app.services.scene_sim import Measurements, Scenario, Source, simulate_received
from app.services.stage1_lift import Stage1Config


def _hermitian(rng: np.random.Generator, n: int) -> np.ndarray:
    X = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    return X @ X.conj().T


def _unit(rng: np.random.Generator, n: int) -> np.ndarray:
    return np.exp(1j * rng.uniform(-np.pi, np.pi, size=n))


# ---------------------------------------------------------------------------
# Pruning and Stage 2
# ---------------------------------------------------------------------------


def test_prune_keeps_largest_entries() -> None:
    s = np.array([0.1, -3.0, 2.0j, 0.5])
    np.testing.assert_array_equal(prune_to_sparsity(s, 2), [0.0, -3.0, 2.0j, 0.0])


def test_prune_ties_keep_lower_index() -> None:
    s = np.array([1.0, 1.0j, -1.0, 0.5])
    np.testing.assert_array_equal(prune_to_sparsity(s, 2), [1.0, 1.0j, 0.0, 0.0])


def test_prune_with_large_budget_is_identity() -> None:
    s = np.array([1.0, 2.0])
    np.testing.assert_array_equal(prune_to_sparsity(s, 5), s)
    with pytest.raises(InvalidInputError):
        prune_to_sparsity(s, 0)


def test_stage2_recovers_exact_sparse_field(small_manifold) -> None:
    s_true = np.zeros(9, dtype=complex)
    s_true[1] = 2.0 * np.exp(0.4j)
    s_true[6] = 1.0 * np.exp(-1.1j)
    b = small_manifold.matrix @ s_true
    s_proj, delta = stage2_project(small_manifold, b, k_hat=2)
    assert delta == pytest.approx(0.0, abs=1e-6)
    np.testing.assert_allclose(s_proj, s_true, atol=1e-6)


def test_stage2_prunes_to_requested_sparsity(small_manifold) -> None:
    rng = np.random.default_rng(2)
    b = rng.normal(size=49) + 1j * rng.normal(size=49)
    s_proj, delta = stage2_project(small_manifold, b, k_hat=3)
    assert np.count_nonzero(s_proj) <= 3
    assert delta > 0


def test_stage2_checks_field_shape(small_manifold) -> None:
    with pytest.raises(InvalidInputError):
        stage2_project(small_manifold, np.ones(5), k_hat=1)


def test_phase_rules_keep_magnitudes(small_manifold) -> None:
    rng = np.random.default_rng(4)
    magnitudes = rng.uniform(0.5, 2.0, size=49)
    s = np.zeros(9, dtype=complex)
    s[4] = 1.0 + 1.0j
    replaced = replace_phase(magnitudes, small_manifold, s)
    np.testing.assert_allclose(np.abs(replaced), magnitudes, rtol=1e-14)
    np.testing.assert_allclose(np.angle(replaced), -np.pi / 4, atol=1e-12)

    previous = magnitudes * np.exp(0.2j)
    accumulated = phase_update(previous, small_manifold, s)
    np.testing.assert_allclose(np.abs(accumulated), magnitudes, rtol=1e-14)
    np.testing.assert_allclose(np.angle(accumulated), 0.2 - np.pi / 4, atol=1e-12)


def test_zero_model_leaves_phase_untouched(small_manifold) -> None:
    previous = np.full(49, np.exp(0.7j))
    updated = phase_update(previous, small_manifold, np.zeros(9))
    np.testing.assert_allclose(updated, previous)


# ---------------------------------------------------------------------------
# Stage 3
# ---------------------------------------------------------------------------


@pytest.mark.parametrize("seed", range(50))
def test_gradient_matches_finite_differences(seed: int) -> None:
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 9))
    R = _hermitian(rng, n)
    w = _unit(rng, n)
    h = rng.normal(size=n)
    eps = 1e-6
    plus = output_power(np.exp(-1j * eps * h) * w, R)
    minus = output_power(np.exp(1j * eps * h) * w, R)
    numeric = (plus - minus) / (2 * eps)
    analytic = float(np.vdot(w, w).real) * float(power_gradient(w, R) @ h)
    assert analytic == pytest.approx(numeric, rel=1e-5, abs=1e-6 * np.linalg.norm(R))


def test_gradient_vanishes_at_matched_weights() -> None:
    b = np.exp(1j * np.array([0.3, -1.2, 2.5]))
    R = np.outer(b, b.conj())
    np.testing.assert_allclose(power_gradient(b, R), 0.0, atol=1e-12)


def test_gradient_rejects_non_hermitian() -> None:
    with pytest.raises(InvalidInputError):
        power_gradient(np.ones(2), np.array([[1.0, 1.0], [0.0, 1.0]]))


def test_line_search_finds_analytic_step() -> None:
    b = np.array([1.0, np.exp(1j * np.pi / 4)])
    R = np.outer(b, b.conj())
    w = np.ones(2, dtype=complex)
    g = power_gradient(w, R)
    c = math.sin(math.pi / 4)
    np.testing.assert_allclose(g, [c, -c], atol=1e-12)
    t = line_search(w, g, R, LineSearchSpec())
    assert t == pytest.approx(math.pi / (8 * c), abs=1e-6)
    rotated = np.exp(-1j * t * g) * w
    assert output_power(rotated, R) == pytest.approx(4.0, abs=1e-10)


def test_line_search_returns_zero_without_ascent() -> None:
    b = np.array([1.0, 1.0j])
    R = np.outer(b, b.conj())
    w = b.copy()
    assert line_search(w, np.array([1.0, -1.0]), R, LineSearchSpec()) == 0.0
    assert line_search(w, np.zeros(2), R, LineSearchSpec()) == 0.0


def test_line_search_never_decreases_power() -> None:
    rng = np.random.default_rng(11)
    for _ in range(20):
        R = _hermitian(rng, 5)
        w = _unit(rng, 5)
        g = power_gradient(w, R)
        t = line_search(w, g, R, LineSearchSpec())
        assert output_power(np.exp(-1j * t * g) * w, R) >= output_power(w, R) - 1e-12


def test_stage3_is_monotone_and_keeps_unit_modulus(small_manifold) -> None:
    rng = np.random.default_rng(8)
    b1 = rng.uniform(0.5, 2.0, size=49) * _unit(rng, 49)
    s = np.zeros(9, dtype=complex)
    s[0] = 1.0
    result = stage3_cg(b1, s, small_manifold, ApConfig(n_cg=15))
    np.testing.assert_allclose(np.abs(result.w), 1.0, atol=1e-12)
    trace = np.asarray(result.power_trace)
    assert np.all(np.diff(trace) >= -1e-9 * trace[0])
    assert trace[-1] > trace[0]
    bound = float(np.sum(np.abs(b1))) ** 2 + loading_factor(b1, None) * 49
    assert trace[-1] <= bound * (1 + 1e-12)


def test_stage3_is_stationary_when_weights_already_match(small_manifold) -> None:
    s = np.zeros(9, dtype=complex)
    s[4] = 1.0
    b1 = np.full(49, 2.0, dtype=complex)
    result = stage3_cg(b1, s, small_manifold, ApConfig())
    assert result.stationary
    assert result.iterations == 0
    np.testing.assert_allclose(result.w, np.ones(49))


def test_loading_factor_defaults() -> None:
    assert loading_factor(np.ones(4), 0.5) == 0.5
    assert loading_factor(np.full(4, 10.0), None) == pytest.approx(1e-4)
    assert loading_factor(np.zeros(4), None) == pytest.approx(1e-6)


@pytest.mark.parametrize(
    "kwargs",
    [{"k_hat": 0}, {"nu": 0.0}, {"n_cg": 0}, {"phase_update": "mixed"}, {"stop_tol": -1.0}],
)
def test_ap_config_validation(kwargs) -> None:
    with pytest.raises(InvalidInputError):
        ApConfig(**kwargs)


# ---------------------------------------------------------------------------
# Whole pipeline
# ---------------------------------------------------------------------------


def test_pipeline_recovers_single_source_phases(aperture) -> None:
    scenario = Scenario(sources=[Source((0.0, 3000.0, 0.0), 10.0)], geometry=aperture)
    measurements = simulate_received(scenario)
    manifold_s1 = build_manifold(aperture, build_grid(1, 1))
    manifold_s2 = build_manifold(aperture, build_grid(3, 3, (-0.5, 0.5), (-0.5, 0.5)))
    estimate = run_pipeline(manifold_s1, manifold_s2, measurements, ApConfig(k_hat=1, n_cg=10, n_ap=5))

    np.testing.assert_array_max_ulp(np.abs(estimate.b_final), measurements.magnitude, maxulp=4)
    assert estimate.converged
    assert estimate.iterations <= 5
    assert len(estimate.delta_trace) == estimate.iterations
    assert max(estimate.delta_trace) == pytest.approx(0.0, abs=1e-5)

    b_true = measurements.b_true
    phi = np.angle(np.vdot(b_true, estimate.b_final))
    errors = np.angle(estimate.b_final * np.exp(-1j * phi) / b_true)
    assert np.max(np.abs(errors)) < 0.1


def test_pipeline_replace_rule_runs(aperture) -> None:
    scenario = Scenario(sources=[Source((0.0, 3000.0, 0.0), 10.0)], geometry=aperture)
    measurements = simulate_received(scenario)
    manifold_s1 = build_manifold(aperture, build_grid(1, 1))
    manifold_s2 = build_manifold(aperture, build_grid(3, 3, (-0.5, 0.5), (-0.5, 0.5)))
    config = ApConfig(k_hat=1, n_cg=5, n_ap=3, phase_update="replace")
    estimate = run_pipeline(manifold_s1, manifold_s2, measurements, config)
    np.testing.assert_array_max_ulp(np.abs(estimate.b_final), measurements.magnitude, maxulp=4)
    assert len(estimate.history) == estimate.iterations


def test_pipeline_zero_intensity_short_circuits(aperture) -> None:
    manifold = build_manifold(aperture, build_grid(3, 3, (-0.5, 0.5), (-0.5, 0.5)))
    estimate = run_pipeline(manifold, manifold, Measurements.from_intensity(np.zeros(49)), ApConfig())
    np.testing.assert_array_equal(estimate.b_final, np.zeros(49))
    assert estimate.delta_trace == [0.0]
    assert estimate.converged
    assert estimate.stage1 is None


def test_pipeline_rejects_mismatched_manifold(aperture, small_manifold) -> None:
    with pytest.raises(InvalidInputError):
        run_pipeline(small_manifold, small_manifold, Measurements.from_intensity(np.ones(3)), ApConfig())


def test_lp_failure_surfaces_stage_and_iteration(aperture, monkeypatch: pytest.MonkeyPatch) -> None:
    from app.services import alternating_projections

    def failing(*_args, **_kwargs):
        raise SolverError("projection LP ended with status max_iterations", stage="stage2")

    monkeypatch.setattr(alternating_projections, "stage2_project", failing)
    manifold_s1 = build_manifold(aperture, build_grid(1, 1))
    measurements = Measurements.from_intensity(np.full(49, 10.0))
    with pytest.raises(SolverError) as info:
        run_pipeline(manifold_s1, manifold_s1, measurements, ApConfig(k_hat=1), Stage1Config())
    assert info.value.stage == "stage2"
    assert info.value.iteration == 1
    assert info.value.to_payload()["category"] == "solver"
