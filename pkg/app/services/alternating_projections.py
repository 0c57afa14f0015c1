"""Stages 2 and 3: sparse source projection and unit-modulus power maximization.

Phase weights ``w`` live in the conjugate domain: a weight vector matched to an
aperture field ``b`` has phases ``-angle(b)``, and every outer iteration feeds
``|b| * exp(-j angle(w))`` back as the next field estimate. Stage 3 rotates the
weights with ``w <- exp(-j t diag(h)) w``; gradients are taken in that phase
coordinate so ``t >= 0`` along the gradient is an ascent.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from app.core.errors import InvalidInputError, SolverError
from app.services.array_model import ManifoldMatrix
from app.services.lp_solver import DEFAULT_MAX_ITER, DEFAULT_TOL, LpStatus, solve_lp
from app.services.scene_sim import Measurements, intensity_from_field
from app.services.stage1_lift import (
    LiftedSolution,
    Stage1Config,
    minimax_program,
    phase_angle,
    solve_stage1,
)

LOGGER = logging.getLogger(__name__)

PHASE_RULES = ("accumulate", "replace")
GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0
AUTO_NU_FACTOR = 1e-6
AUTO_STOP_FACTOR = 1e-8


# ---------------------------------------------------------------------------
# Configuration and state
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LineSearchSpec:
    initial_step: float = 0.1
    growth: float = 2.0
    tol: float = 1e-8
    max_evals: int = 80

    def __post_init__(self) -> None:
        if not self.initial_step > 0:
            raise InvalidInputError("line_search.initial_step must be positive")
        if not self.growth > 1:
            raise InvalidInputError("line_search.growth must be > 1")
        if not self.tol > 0:
            raise InvalidInputError("line_search.tol must be positive")
        if self.max_evals < 3:
            raise InvalidInputError("line_search.max_evals must be at least 3")


@dataclass(frozen=True)
class ApConfig:
    """Alternating-projection settings. ``nu`` / ``stop_tol`` of None scale with the data."""

    k_hat: int = 2
    nu: Optional[float] = None
    n_cg: int = 20
    n_ap: int = 50
    stop_tol: Optional[float] = None
    phase_update: str = "accumulate"
    stage2_l1_weight: float = 0.0
    line_search: LineSearchSpec = field(default_factory=LineSearchSpec)
    lp_tol: float = DEFAULT_TOL
    lp_max_iter: int = DEFAULT_MAX_ITER

    def __post_init__(self) -> None:
        if self.k_hat < 1:
            raise InvalidInputError("k_hat must be at least 1")
        if self.nu is not None and not self.nu > 0:
            raise InvalidInputError("nu must be positive")
        if self.n_cg < 1 or self.n_ap < 1:
            raise InvalidInputError("n_cg and n_ap must be at least 1")
        if self.stop_tol is not None and not self.stop_tol > 0:
            raise InvalidInputError("stop_tol must be positive")
        if self.phase_update not in PHASE_RULES:
            raise InvalidInputError(f"phase_update must be one of {PHASE_RULES}")
        if self.stage2_l1_weight < 0:
            raise InvalidInputError("stage2_l1_weight must be non-negative")
        if not self.lp_tol > 0 or self.lp_max_iter < 1:
            raise InvalidInputError("lp tolerance must be positive and max_iter >= 1")


@dataclass
class ApState:
    b_dagger: np.ndarray
    s_proj: np.ndarray
    w: np.ndarray
    delta_trace: List[float] = field(default_factory=list)
    power_trace: List[float] = field(default_factory=list)


@dataclass
class OuterIteration:
    iteration: int
    delta: float
    pruned_residual: float
    power: float
    cg_iterations: int
    seconds: float


@dataclass
class PhaseEstimate:
    b_final: np.ndarray
    delta_trace: List[float]
    converged: bool
    iterations: int
    history: List[OuterIteration] = field(default_factory=list)
    stage1: Optional[LiftedSolution] = None
    state: Optional[ApState] = None

    @property
    def phases(self) -> np.ndarray:
        return phase_angle(self.b_final)


@dataclass
class Stage3Result:
    w: np.ndarray
    power_trace: List[float]
    iterations: int
    stationary: bool


# ---------------------------------------------------------------------------
# Stage 2
# ---------------------------------------------------------------------------


def prune_to_sparsity(s: np.ndarray, k_hat: int) -> np.ndarray:
    """Zero all but the ``k_hat`` largest-modulus entries; ties keep the lower index."""

    if k_hat < 1:
        raise InvalidInputError("k_hat must be at least 1")
    s = np.asarray(s, dtype=complex)
    if k_hat >= s.shape[0]:
        return s.copy()
    order = np.argsort(-np.abs(s), kind="stable")
    pruned = np.zeros_like(s)
    keep = order[:k_hat]
    pruned[keep] = s[keep]
    return pruned


def stage2_project(
    manifold: ManifoldMatrix,
    b_est: np.ndarray,
    k_hat: int,
    lp_tol: float = DEFAULT_TOL,
    lp_max_iter: int = DEFAULT_MAX_ITER,
    l1_weight: float = 0.0,
) -> Tuple[np.ndarray, float]:
    """Minimax fit A s ~ b_est over the real embedding, then keep the K_hat strongest angles."""

    A = manifold.matrix
    b_est = np.asarray(b_est, dtype=complex)
    if b_est.shape != (A.shape[0],):
        raise InvalidInputError(f"b_est has shape {b_est.shape}, expected ({A.shape[0]},)")
    K = A.shape[1]
    A_tilde = np.block([[A.real, -A.imag], [A.imag, A.real]])
    b_tilde = np.concatenate([b_est.real, b_est.imag])
    program = minimax_program(A_tilde, b_tilde, l1_weight)
    solution = solve_lp(program, tol=lp_tol, max_iter=lp_max_iter)
    if solution.status is not LpStatus.OPTIMAL:
        raise SolverError(f"projection LP ended with status {solution.status.value}", stage="stage2")
    x = program.recover(solution.x)
    s = x[:K] + 1j * x[K : 2 * K]
    delta = float(max(x[-1], 0.0))
    return prune_to_sparsity(s, k_hat), delta


def phase_update(
    b_prev_dagger: np.ndarray, manifold: ManifoldMatrix, s_proj: np.ndarray
) -> np.ndarray:
    """b1 = b_prev * exp(-j angle(A s_proj)); zero model entries leave the phase untouched."""

    model = manifold.matrix @ np.asarray(s_proj, dtype=complex)
    return np.asarray(b_prev_dagger, dtype=complex) * np.exp(-1j * phase_angle(model))


def replace_phase(
    magnitudes: np.ndarray, manifold: ManifoldMatrix, s_proj: np.ndarray
) -> np.ndarray:
    """b1 = |b| * exp(-j angle(A s_proj))."""

    model = manifold.matrix @ np.asarray(s_proj, dtype=complex)
    return np.asarray(magnitudes, dtype=float) * np.exp(-1j * phase_angle(model))


# ---------------------------------------------------------------------------
# Stage 3
# ---------------------------------------------------------------------------


def output_power(w: np.ndarray, R: np.ndarray) -> float:
    """P(w) = w^H R w for Hermitian R."""

    Rh = (R + R.conj().T) / 2.0
    return float(np.real(np.vdot(w, Rh @ w)))


def _check_hermitian(R: np.ndarray) -> None:
    scale = max(1.0, float(np.linalg.norm(R)))
    if float(np.linalg.norm(R - R.conj().T)) > 1e-9 * scale:
        raise InvalidInputError("R must be Hermitian")


def power_gradient(w: np.ndarray, R: np.ndarray) -> np.ndarray:
    """Gradient of P in the phase coordinates of ``exp(-j t diag(h)) w``.

    Equals ``Im(diag(C)) / (w^H w)`` with the commutator
    ``C = (w w^H)(R - P_s I) - (R - P_s I)(w w^H)`` and the Rayleigh quotient
    ``P_s = w^H R w / w^H w``; the identity term cancels on the diagonal so only
    ``R w`` is formed.
    """

    w = np.asarray(w, dtype=complex)
    R = np.asarray(R, dtype=complex)
    _check_hermitian(R)
    norm2 = float(np.real(np.vdot(w, w)))
    if norm2 == 0.0:
        raise InvalidInputError("Weight vector must be nonzero")
    return 2.0 * np.imag(w * np.conj(R @ w)) / norm2


def _rotate(w: np.ndarray, t: float, h: np.ndarray) -> np.ndarray:
    return np.exp(-1j * t * h) * w


def line_search(w: np.ndarray, h_dir: np.ndarray, R: np.ndarray, spec: LineSearchSpec) -> float:
    """Approximate argmax over t >= 0 of P(exp(-j t diag(h)) w); 0 when no ascent exists."""

    h_dir = np.asarray(h_dir, dtype=float)
    scale = float(np.max(np.abs(h_dir))) if h_dir.size else 0.0
    if scale == 0.0:
        return 0.0
    slope = float(power_gradient(w, R) @ h_dir)
    if not slope > 0.0:
        return 0.0

    evaluated = {0.0: output_power(w, R)}

    def phi(t: float) -> float:
        if t not in evaluated:
            evaluated[t] = output_power(_rotate(w, t, h_dir), R)
        return evaluated[t]

    # bracket
    lo, mid = 0.0, spec.initial_step / scale
    hi = mid
    if phi(mid) < evaluated[0.0]:
        lo, hi = 0.0, mid
    else:
        while len(evaluated) < spec.max_evals:
            hi = mid * spec.growth
            if phi(hi) < phi(mid):
                break
            lo, mid = mid, hi

    # golden section on [lo, hi]
    tol = spec.tol / scale
    a, b = lo, hi
    x1 = b - GOLDEN * (b - a)
    x2 = a + GOLDEN * (b - a)
    while b - a > tol and len(evaluated) < spec.max_evals:
        if phi(x1) >= phi(x2):
            b, x2 = x2, x1
            x1 = b - GOLDEN * (b - a)
        else:
            a, x1 = x1, x2
            x2 = a + GOLDEN * (b - a)

    best = max(evaluated, key=lambda t: (evaluated[t], -t))
    return float(best)


def loading_factor(b1_dagger: np.ndarray, nu: Optional[float]) -> float:
    if nu is not None:
        return float(nu)
    n = b1_dagger.shape[0]
    auto = AUTO_NU_FACTOR * float(np.real(np.vdot(b1_dagger, b1_dagger))) / n
    return auto if auto > 0 else AUTO_NU_FACTOR


def stage3_cg(
    b1_dagger: np.ndarray,
    s_proj: np.ndarray,
    manifold: ManifoldMatrix,
    config: ApConfig,
) -> Stage3Result:
    """Polak-Ribiere conjugate gradient ascent of w^H R w over unit-modulus w."""

    b1 = np.asarray(b1_dagger, dtype=complex)
    n = b1.shape[0]
    if manifold.matrix.shape[0] != n:
        raise InvalidInputError("b1_dagger does not match the manifold")
    R = np.outer(b1, b1.conj()) + loading_factor(b1, config.nu) * np.eye(n)
    w = np.exp(-1j * phase_angle(manifold.matrix @ np.asarray(s_proj, dtype=complex)))

    power_trace = [output_power(w, R)]
    g = power_gradient(w, R)
    h = g.copy()
    stationary = False
    iterations = 0
    for iterations in range(1, config.n_cg + 1):
        g_norm2 = float(g @ g)
        if g_norm2 == 0.0:
            stationary = True
            iterations -= 1
            break
        t = line_search(w, h, R, config.line_search)
        if t == 0.0 and not np.array_equal(h, g):
            h = g.copy()
            t = line_search(w, h, R, config.line_search)
        if t == 0.0:
            stationary = True
            iterations -= 1
            break
        w = _rotate(w, t, h)
        w = w / np.abs(w)
        g_next = power_gradient(w, R)
        gamma = float((g_next - g) @ g_next) / g_norm2
        h = g_next + gamma * h
        if float(h @ g_next) <= 0.0:
            h = g_next.copy()
        g = g_next
        power_trace.append(output_power(w, R))

    if stationary:
        LOGGER.debug("Stage 3 reached a stationary point after %s iterations", iterations)
    return Stage3Result(w=w, power_trace=power_trace, iterations=iterations, stationary=stationary)


# ---------------------------------------------------------------------------
# Whole algorithm
# ---------------------------------------------------------------------------


def run_pipeline(
    manifold_s1: ManifoldMatrix,
    manifold_s2: ManifoldMatrix,
    measurements: Measurements,
    config: ApConfig,
    stage1: Optional[Stage1Config] = None,
) -> PhaseEstimate:
    """Stage 1 initialization followed by N_ap rounds of Stage 2 / Stage 3."""

    stage1 = stage1 or Stage1Config()
    magnitudes = measurements.magnitude
    n = measurements.size
    for manifold in (manifold_s1, manifold_s2):
        if manifold.matrix.shape[0] != n:
            raise InvalidInputError("Manifold rows do not match the number of measurements")

    if not np.any(measurements.intensity):
        LOGGER.info("All intensities are zero; returning the zero field")
        return PhaseEstimate(
            b_final=np.zeros(n, dtype=complex),
            delta_trace=[0.0],
            converged=True,
            iterations=0,
        )

    lifted = solve_stage1(
        manifold_s1,
        measurements,
        l1_weight=stage1.l1_weight,
        power_iters=stage1.power_iters,
        power_tol=stage1.power_tol,
        lp_tol=config.lp_tol,
        lp_max_iter=config.lp_max_iter,
    )
    stop_tol = (
        config.stop_tol
        if config.stop_tol is not None
        else AUTO_STOP_FACTOR * float(np.max(measurements.intensity))
    )

    b_est = lifted.b_est
    state = ApState(
        b_dagger=lifted.b0_dagger,
        s_proj=np.zeros(manifold_s2.shape[1], dtype=complex),
        w=np.exp(-1j * phase_angle(lifted.b_est)),
    )
    history: List[OuterIteration] = []
    converged = False
    iteration = 0
    for iteration in range(1, config.n_ap + 1):
        started = time.perf_counter()
        try:
            s_proj, delta = stage2_project(
                manifold_s2,
                b_est,
                config.k_hat,
                lp_tol=config.lp_tol,
                lp_max_iter=config.lp_max_iter,
                l1_weight=config.stage2_l1_weight,
            )
            if config.phase_update == "accumulate":
                b1 = phase_update(state.b_dagger, manifold_s2, s_proj)
            else:
                b1 = replace_phase(magnitudes, manifold_s2, s_proj)
            cg = stage3_cg(b1, s_proj, manifold_s2, config)
        except SolverError as exc:
            raise SolverError(exc.detail, stage=exc.stage, iteration=iteration) from exc
        except InvalidInputError as exc:
            raise SolverError(str(exc), stage="stage3", iteration=iteration) from exc

        model = intensity_from_field(manifold_s2.matrix @ s_proj)
        pruned_residual = float(np.max(np.abs(measurements.intensity - model)))
        state.s_proj = s_proj
        state.w = cg.w
        state.b_dagger = magnitudes * np.exp(-1j * phase_angle(cg.w))
        state.delta_trace.append(delta)
        state.power_trace.append(cg.power_trace[-1])
        b_est = state.b_dagger

        record = OuterIteration(
            iteration=iteration,
            delta=delta,
            pruned_residual=pruned_residual,
            power=cg.power_trace[-1],
            cg_iterations=cg.iterations,
            seconds=time.perf_counter() - started,
        )
        history.append(record)
        LOGGER.info(
            "outer iter=%s delta=%.6e pruned_residual=%.6e power=%.6e",
            iteration, delta, pruned_residual, record.power,
        )
        if iteration > 1 and abs(delta - state.delta_trace[-2]) < stop_tol:
            converged = True
            break

    return PhaseEstimate(
        b_final=magnitudes * np.exp(-1j * phase_angle(state.w)),
        delta_trace=list(state.delta_trace),
        converged=converged,
        iterations=iteration,
        history=history,
        stage1=lifted,
        state=state,
    )
