"""Stage 1: lifted minimax LP, relaxed matrix recovery and rank-one initialization.

Vectorization is column-major throughout: entry (i, j) of a K x K matrix sits at
index ``i + j * K``. Row k of the lifted operator is vec(f_k f_k^H)^T where f_k is
row k of the manifold, so that ``A_hat @ vec(s s^H) = |A s|**2``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import NamedTuple, Optional, Tuple, Union

import numpy as np

from app.core.errors import InvalidInputError, SolverError
from app.services.array_model import ManifoldMatrix
from app.services.lp_solver import (
    DEFAULT_MAX_ITER,
    DEFAULT_TOL,
    LinearProgram,
    LpSolution,
    LpStatus,
    l1_augment,
    solve_lp,
)
from app.services.scene_sim import Measurements

LOGGER = logging.getLogger(__name__)

HERMITIAN_TOL = 1e-9
PERTURBATION = 1e-3
DEFAULT_POWER_ITERS = 1000
DEFAULT_POWER_TOL = 1e-12


def phase_angle(values: np.ndarray) -> np.ndarray:
    """Elementwise argument with the convention angle(0) = 0 (also for signed zeros)."""

    values = np.asarray(values, dtype=complex)
    return np.where(values == 0, 0.0, np.angle(values))


# ---------------------------------------------------------------------------
# Lifted operator
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LiftedOperator:
    A_hat: np.ndarray
    A_bar: Optional[np.ndarray] = None
    b_bar: Optional[np.ndarray] = None

    @property
    def num_angles(self) -> int:
        return int(round(np.sqrt(self.A_hat.shape[1])))

    @property
    def num_rows(self) -> int:
        return int(self.A_hat.shape[0])

    @property
    def is_embedded(self) -> bool:
        return self.A_bar is not None and self.b_bar is not None


def lift_rows(manifold: Union[ManifoldMatrix, np.ndarray]) -> LiftedOperator:
    A = manifold.matrix if isinstance(manifold, ManifoldMatrix) else np.asarray(manifold, complex)
    if A.ndim != 2 or A.size == 0:
        raise InvalidInputError("Manifold must be a non-empty 2-D matrix")
    n, k = A.shape
    # [row, j, i] = conj(f_j) f_i, flattened C-order over (j, i) -> index i + j*K
    lifted = (A.conj()[:, :, None] * A[:, None, :]).reshape(n, k * k)
    return LiftedOperator(A_hat=lifted)


def real_embed(
    lifted: Union[LiftedOperator, np.ndarray], intensities: np.ndarray
) -> LiftedOperator:
    """[[Re, -Im], [Im, Re]] embedding with right-hand side [b**2; 0]."""

    A_hat = lifted.A_hat if isinstance(lifted, LiftedOperator) else np.asarray(lifted, complex)
    b2 = np.asarray(intensities, dtype=float)
    if A_hat.ndim != 2 or b2.shape != (A_hat.shape[0],):
        raise InvalidInputError(
            f"Intensity vector of shape {b2.shape} does not match lifted operator {A_hat.shape}"
        )
    A_bar = np.block([[A_hat.real, -A_hat.imag], [A_hat.imag, A_hat.real]])
    b_bar = np.concatenate([b2, np.zeros_like(b2)])
    return LiftedOperator(A_hat=A_hat, A_bar=A_bar, b_bar=b_bar)


def minimax_program(A_bar: np.ndarray, b_bar: np.ndarray, l1_weight: float = 0.0) -> LinearProgram:
    """min delta s.t. |A_bar x - b_bar| <= delta elementwise, x free, delta >= 0.

    The last variable is delta. With ``l1_weight > 0`` the objective gains
    ``l1_weight * ||[x; delta]||_1``.
    """

    rows, cols = A_bar.shape
    if b_bar.shape != (rows,):
        raise InvalidInputError("Right-hand side does not match the constraint matrix")
    ones = np.ones((rows, 1))
    G = np.block([[A_bar, -ones], [-A_bar, -ones]])
    h = np.concatenate([b_bar, -b_bar])
    c = np.zeros(cols + 1)
    c[-1] = 1.0
    lower = np.full(cols + 1, -np.inf)
    lower[-1] = 0.0
    program = LinearProgram(c=c, G=G, h=h, lower=lower)
    return l1_augment(program, l1_weight) if l1_weight > 0 else program


def assemble_stage1_lp(op: LiftedOperator, l1_weight: float = 1.0) -> LinearProgram:
    if not op.is_embedded:
        raise InvalidInputError("Lifted operator must be real-embedded before assembling the LP")
    if l1_weight < 0:
        raise InvalidInputError("l1_weight must be non-negative")
    if op.A_bar.shape != (2 * op.num_rows, 2 * op.A_hat.shape[1]):
        raise InvalidInputError("Embedded operator dimensions do not match the lifted rows")
    return minimax_program(op.A_bar, op.b_bar, l1_weight)


def recover_S(s_bar: np.ndarray, K: int) -> np.ndarray:
    s_bar = np.asarray(s_bar, dtype=float)
    if s_bar.shape != (2 * K * K,):
        raise InvalidInputError(f"Expected {2 * K * K} lifted coordinates, got {s_bar.shape}")
    half = K * K
    s_hat = s_bar[:half] + 1j * s_bar[half:]
    S = s_hat.reshape((K, K), order="F")
    return (S + S.conj().T) / 2.0


# ---------------------------------------------------------------------------
# Rank-one extraction
# ---------------------------------------------------------------------------


class RankOneResult(NamedTuple):
    s_opt: np.ndarray
    eigenvalue: float
    vector: np.ndarray
    iterations: int
    converged: bool


def _fix_phase(v: np.ndarray) -> np.ndarray:
    pivot = v[int(np.argmax(np.abs(v)))]
    if pivot == 0:
        return v
    return v * (abs(pivot) / pivot)


def rank_one_extract(
    S: np.ndarray, iters: int = DEFAULT_POWER_ITERS, tol: float = DEFAULT_POWER_TOL
) -> RankOneResult:
    """Dominant eigenpair of a Hermitian matrix by shifted power iteration."""

    S = np.asarray(S, dtype=complex)
    if S.ndim != 2 or S.shape[0] != S.shape[1]:
        raise InvalidInputError("S must be square")
    if iters < 1:
        raise InvalidInputError("Power iteration needs at least one iteration")
    K = S.shape[0]
    scale = float(np.linalg.norm(S))
    if float(np.linalg.norm(S - S.conj().T)) > HERMITIAN_TOL * max(scale, 1.0):
        raise InvalidInputError("S is not Hermitian")
    if scale == 0.0:
        zeros = np.zeros(K, dtype=complex)
        return RankOneResult(zeros, 0.0, zeros.copy(), 0, True)

    shifted = S + scale * np.eye(K)
    v = np.zeros(K, dtype=complex)
    v[0] = 1.0
    v = v + PERTURBATION * (1.0 + 0.5j) * np.linspace(1.0, 2.0, K)
    v /= np.linalg.norm(v)

    converged = False
    iteration = 0
    for iteration in range(1, iters + 1):
        nxt = shifted @ v
        norm = np.linalg.norm(nxt)
        if norm == 0.0:
            break
        nxt = _fix_phase(nxt / norm)
        change = float(np.linalg.norm(nxt - v))
        v = nxt
        if change <= tol:
            converged = True
            break

    if not converged:
        LOGGER.warning("Power iteration did not converge in %s iterations", iters)
    v = _fix_phase(v)
    eigenvalue = float(np.real(v.conj() @ S @ v))
    s_opt = np.sqrt(max(eigenvalue, 0.0)) * v
    return RankOneResult(s_opt, eigenvalue, v, iteration, converged)


def stage1_initialize(
    manifold: ManifoldMatrix, s_opt: np.ndarray, magnitudes: np.ndarray
) -> Tuple[np.ndarray, np.ndarray]:
    """b_est = A s_opt and b0 = |b| * exp(-j angle(b_est))."""

    A = manifold.matrix
    s_opt = np.asarray(s_opt, dtype=complex)
    magnitudes = np.asarray(magnitudes, dtype=float)
    if s_opt.shape != (A.shape[1],) or magnitudes.shape != (A.shape[0],):
        raise InvalidInputError("s_opt / magnitudes do not match the manifold dimensions")
    b_est = A @ s_opt
    b0 = magnitudes * np.exp(-1j * phase_angle(b_est))
    return b_est, b0


# ---------------------------------------------------------------------------
# Whole stage
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Stage1Config:
    l1_weight: float = 1.0
    power_iters: int = DEFAULT_POWER_ITERS
    power_tol: float = DEFAULT_POWER_TOL

    def __post_init__(self) -> None:
        if self.l1_weight < 0:
            raise InvalidInputError("stage1 l1_weight must be non-negative")
        if self.power_iters < 1 or not self.power_tol > 0:
            raise InvalidInputError("power iteration needs iters >= 1 and tol > 0")


@dataclass
class LiftedSolution:
    S: np.ndarray
    delta: float
    s_opt: np.ndarray
    eigenvalue: float
    b_est: np.ndarray
    b0_dagger: np.ndarray
    lp: LpSolution
    power_converged: bool

    def diagnostics(self) -> dict:
        return {
            "delta": self.delta,
            "lambda_max": self.eigenvalue,
            "lp_status": self.lp.status.value,
            "lp_iterations": self.lp.iterations,
            "lp_objective": self.lp.objective,
            "lp_regularized": self.lp.regularized,
            "power_iteration_converged": self.power_converged,
        }


def solve_stage1(
    manifold: ManifoldMatrix,
    measurements: Measurements,
    l1_weight: float = 1.0,
    power_iters: int = DEFAULT_POWER_ITERS,
    power_tol: float = DEFAULT_POWER_TOL,
    lp_tol: float = DEFAULT_TOL,
    lp_max_iter: int = DEFAULT_MAX_ITER,
) -> LiftedSolution:
    n, K = manifold.shape
    if measurements.size != n:
        raise InvalidInputError(
            f"{measurements.size} measurements for a manifold with {n} elements"
        )
    op = real_embed(lift_rows(manifold), measurements.intensity)
    program = assemble_stage1_lp(op, l1_weight)
    LOGGER.info(
        "Stage 1 LP: %s variables, %s constraints (K=%s)",
        program.num_variables, program.num_constraints, K,
    )
    solution = solve_lp(program, tol=lp_tol, max_iter=lp_max_iter)
    if solution.status is not LpStatus.OPTIMAL:
        raise SolverError(f"lifted LP ended with status {solution.status.value}", stage="stage1")

    x = program.recover(solution.x)
    delta = float(max(x[-1], 0.0))
    S = recover_S(x[:-1], K)
    extraction = rank_one_extract(S, iters=power_iters, tol=power_tol)
    b_est, b0 = stage1_initialize(manifold, extraction.s_opt, measurements.magnitude)
    LOGGER.info("Stage 1 done: delta=%.6e lambda_max=%.6e", delta, extraction.eigenvalue)
    return LiftedSolution(
        S=S,
        delta=delta,
        s_opt=extraction.s_opt,
        eigenvalue=extraction.eigenvalue,
        b_est=b_est,
        b0_dagger=b0,
        lp=solution,
        power_converged=extraction.converged,
    )
