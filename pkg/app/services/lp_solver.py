"""Dense primal-dual interior-point solver for inequality-form linear programs.

Problems have the form::

    minimize    c^T x
    subject to  G x <= h
                x_i >= lower_i      (lower_i = -inf marks a free variable)

The solver is a Mehrotra predictor-corrector path-following method. Newton
systems are reduced to the constraint dimension ``m``: bounded variables are
eliminated through their diagonal barrier block and free variables are first
compressed onto the row space of their constraint columns with a thin SVD
(the null-space component moves neither the constraints nor the cost). This
keeps the per-iteration cost at O(m^2 n + m^3) for the short, wide programs
produced by the lifting stage.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import List, Optional, Sequence, Tuple

import numpy as np
import scipy.linalg as sla

from app.core.errors import InvalidInputError

LOGGER = logging.getLogger(__name__)

DEFAULT_TOL = 1e-8
DEFAULT_MAX_ITER = 100
STEP_FRACTION = 0.995
REGULARIZATION = 1e-10
CERTIFICATE_TOL = 1e-6
DIVERGENCE_SCALE = 1e8
STALL_STEP = 1e-12
CLASSIFY_LIMIT = 4000


class LpStatus(str, Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"
    MAX_ITERATIONS = "max_iterations"


# ---------------------------------------------------------------------------
# Problem and solution containers
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class VariableMap:
    """Recovers parent variables from a split program: x_i = x'[i] - x'[negative[i]]."""

    parent: "LinearProgram"
    negative: np.ndarray  # index of the q-part of each parent variable, -1 when not split


@dataclass(frozen=True)
class LinearProgram:
    c: np.ndarray
    G: np.ndarray
    h: np.ndarray
    lower: np.ndarray
    origin: Optional[VariableMap] = None

    def __post_init__(self) -> None:
        c = np.asarray(self.c, dtype=float)
        G = np.asarray(self.G, dtype=float)
        h = np.asarray(self.h, dtype=float)
        lower = np.asarray(self.lower, dtype=float)
        if c.ndim != 1 or G.ndim != 2 or h.ndim != 1 or lower.ndim != 1:
            raise InvalidInputError("LP data must be vectors c, h, lower and a matrix G")
        m, n = G.shape
        if m < 1 or n < 1:
            raise InvalidInputError("LP needs at least one variable and one constraint")
        if c.shape[0] != n or lower.shape[0] != n or h.shape[0] != m:
            raise InvalidInputError(
                f"Inconsistent LP dimensions: c={c.shape}, G={G.shape}, h={h.shape}, lower={lower.shape}"
            )
        if not (np.all(np.isfinite(c)) and np.all(np.isfinite(G)) and np.all(np.isfinite(h))):
            raise InvalidInputError("LP data must be finite")
        if np.any(np.isnan(lower)) or np.any(lower == np.inf):
            raise InvalidInputError("Lower bounds must be finite or -inf")
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "G", G)
        object.__setattr__(self, "h", h)
        object.__setattr__(self, "lower", lower)

    @classmethod
    def build(
        cls,
        c: Sequence[float],
        G: Sequence[Sequence[float]],
        h: Sequence[float],
        lower: Optional[Sequence[float]] = None,
    ) -> "LinearProgram":
        c_arr = np.asarray(c, dtype=float)
        bounds = np.full(c_arr.shape[0], -np.inf) if lower is None else np.asarray(lower, float)
        return cls(c=c_arr, G=np.atleast_2d(np.asarray(G, dtype=float)), h=np.asarray(h, float), lower=bounds)

    @property
    def num_variables(self) -> int:
        return int(self.G.shape[1])

    @property
    def num_constraints(self) -> int:
        return int(self.G.shape[0])

    def recover(self, x: np.ndarray) -> np.ndarray:
        """Map a solution of this program back to the original (unsplit) variables."""

        if self.origin is None:
            return x
        negative = self.origin.negative
        parent_x = x[: negative.shape[0]].copy()
        split = negative >= 0
        parent_x[split] -= x[negative[split]]
        return self.origin.parent.recover(parent_x)


@dataclass
class IterationRecord:
    iteration: int
    primal_objective: float
    dual_objective: float
    primal_residual: float
    dual_residual: float
    gap: float
    mu: float
    step_primal: float
    step_dual: float


@dataclass
class LpSolution:
    x: np.ndarray
    objective: float
    status: LpStatus
    iterations: int
    primal_residual: float
    dual_residual: float
    gap: float
    dual_objective: float
    z: np.ndarray
    history: List[IterationRecord] = field(default_factory=list)
    regularized: bool = False

    @property
    def is_optimal(self) -> bool:
        return self.status is LpStatus.OPTIMAL

    def residual_table(self) -> List[dict]:
        return [vars(record).copy() for record in self.history]


# ---------------------------------------------------------------------------
# l1 regularization by variable splitting
# ---------------------------------------------------------------------------


def l1_augment(
    lp: LinearProgram, weight: float, indices: Optional[Sequence[int]] = None
) -> LinearProgram:
    """Add ``weight * sum |x_i|`` over ``indices`` (all variables by default).

    Free variables are split as x_i = p_i - q_i with p_i, q_i >= 0; variables
    already bounded below by zero simply pick up ``weight`` in their cost. A
    negative finite lower bound is split as well and kept as an explicit row.
    """

    if weight < 0:
        raise InvalidInputError("l1 weight must be non-negative")
    if weight == 0:
        return lp

    n = lp.num_variables
    selected = np.zeros(n, dtype=bool)
    selected[np.arange(n) if indices is None else np.asarray(indices, dtype=int)] = True

    c = lp.c.copy()
    lower = lp.lower.copy()
    split = selected & (lower < 0)
    nonneg = selected & ~split
    c[nonneg] += weight

    split_idx = np.flatnonzero(split)
    q_count = split_idx.shape[0]
    negative = np.full(n, -1, dtype=int)
    negative[split_idx] = n + np.arange(q_count)

    c_new = np.concatenate([c, -lp.c[split_idx] + weight])
    c_new[split_idx] = lp.c[split_idx] + weight
    G_new = np.hstack([lp.G, -lp.G[:, split_idx]])
    h_new = lp.h
    lower_new = np.concatenate([lower, np.zeros(q_count)])
    lower_new[split_idx] = 0.0

    finite_negative = split_idx[np.isfinite(lp.lower[split_idx])]
    if finite_negative.size:
        rows = np.zeros((finite_negative.size, G_new.shape[1]))
        for row, i in enumerate(finite_negative):
            rows[row, i] = -1.0
            rows[row, negative[i]] = 1.0
        G_new = np.vstack([G_new, rows])
        h_new = np.concatenate([h_new, -lp.lower[finite_negative]])

    return LinearProgram(
        c=c_new,
        G=G_new,
        h=h_new,
        lower=lower_new,
        origin=VariableMap(parent=lp, negative=negative),
    )


# ---------------------------------------------------------------------------
# Interior point solver
# ---------------------------------------------------------------------------


def _factor(matrix: np.ndarray) -> Tuple[object, bool]:
    """Cholesky factor with diagonal regularization fallback."""

    try:
        return ("cho", sla.cho_factor(matrix, lower=True, check_finite=False)), False
    except (sla.LinAlgError, ValueError):
        scale = max(1.0, float(np.linalg.norm(matrix, ord=np.inf)))
        shifted = matrix + REGULARIZATION * scale * np.eye(matrix.shape[0])
        try:
            return ("cho", sla.cho_factor(shifted, lower=True, check_finite=False)), True
        except (sla.LinAlgError, ValueError):
            LOGGER.warning("Normal equations singular; falling back to least squares")
            return ("lstsq", shifted), True


def _solve(factor: object, rhs: np.ndarray) -> np.ndarray:
    kind, data = factor  # type: ignore[misc]
    if kind == "cho":
        return sla.cho_solve(data, rhs, check_finite=False)
    return sla.lstsq(data, rhs, check_finite=False)[0]


def _max_step(values: np.ndarray, steps: np.ndarray) -> float:
    negative = steps < 0
    if not np.any(negative):
        return 1.0
    return float(min(1.0, np.min(-values[negative] / steps[negative])))


class InteriorPointSolver:
    """One solve at a time; the instance holds the iterate of the current solve."""

    def __init__(
        self, tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER, classify: bool = True
    ) -> None:
        if not tol > 0:
            raise InvalidInputError("Solver tolerance must be positive")
        if max_iter < 1:
            raise InvalidInputError("max_iter must be at least 1")
        self.tol = tol
        self.max_iter = max_iter
        self.classify = classify
        self.regularized = False

    # -- reduction ---------------------------------------------------------

    def solve(self, lp: LinearProgram) -> LpSolution:
        free = lp.lower == -np.inf
        bounded = ~free
        G_F = lp.G[:, free]
        c_F = lp.c[free]
        G_B = lp.G[:, bounded]
        c_B = lp.c[bounded]
        l_B = lp.lower[bounded]

        if G_F.shape[1]:
            U, sig, Vt = np.linalg.svd(G_F, full_matrices=False)
            cutoff = (sig[0] if sig.size else 0.0) * max(G_F.shape) * np.finfo(float).eps
            rank = int(np.sum(sig > cutoff))
            V = Vt[:rank].T
            G_y = U[:, :rank] * sig[:rank]
            c_y = V.T @ c_F
            c_perp = c_F - V @ c_y
        else:
            rank = 0
            V = np.zeros((0, 0))
            G_y = np.zeros((lp.num_constraints, 0))
            c_y = np.zeros(0)
            c_perp = np.zeros(0)

        null_cost = bool(c_perp.size) and float(np.max(np.abs(c_perp))) > 1e-9 * (
            1.0 + float(np.max(np.abs(c_F)))
        )
        h_shift = lp.h - G_B @ l_B
        offset = float(c_B @ l_B)

        y, t, z, status, iterations, history = self._iterate(G_y, G_B, c_y, c_B, h_shift, offset)

        x = np.empty(lp.num_variables)
        x[free] = V @ y if rank else 0.0
        x[bounded] = l_B + t

        if null_cost and status is LpStatus.OPTIMAL:
            LOGGER.info("Cost has a component along free directions that leave G x unchanged")
            status = LpStatus.UNBOUNDED

        small = lp.num_variables + lp.num_constraints <= CLASSIFY_LIMIT
        if status is LpStatus.MAX_ITERATIONS and self.classify and small:
            status = self._classify(lp)

        residual = lp.G @ x - lp.h
        primal_res = float(np.max(np.maximum(residual, 0.0))) if residual.size else 0.0
        objective = float(lp.c @ x)
        dual_objective = float(-lp.h @ z + l_B @ (c_B + G_B.T @ z)) if l_B.size else float(-lp.h @ z)
        last = history[-1] if history else None
        return LpSolution(
            x=x,
            objective=objective,
            status=status,
            iterations=iterations,
            primal_residual=primal_res,
            dual_residual=last.dual_residual if last else float("nan"),
            gap=last.gap if last else float("nan"),
            dual_objective=dual_objective,
            z=z,
            history=history,
            regularized=self.regularized,
        )

    # -- path following ----------------------------------------------------

    def _iterate(
        self,
        G_y: np.ndarray,
        G_B: np.ndarray,
        c_y: np.ndarray,
        c_B: np.ndarray,
        h: np.ndarray,
        offset: float,
    ):
        m = h.shape[0]
        r = G_y.shape[1]
        nb = G_B.shape[1]
        h_scale = 1.0 + float(np.max(np.abs(h)))
        c_scale = 1.0 + max(
            float(np.max(np.abs(c_y))) if r else 0.0,
            float(np.max(np.abs(c_B))) if nb else 0.0,
        )
        divergence = DIVERGENCE_SCALE * max(h_scale, c_scale)

        y = np.zeros(r)
        t = np.ones(nb)
        s = np.maximum(h - G_B @ t, 1.0)
        z = np.full(m, c_scale)
        w = np.full(nb, c_scale)
        self.regularized = False

        history: List[IterationRecord] = []
        status = LpStatus.MAX_ITERATIONS
        iteration = 0
        for iteration in range(1, self.max_iter + 1):
            r_y = c_y + G_y.T @ z
            r_t = c_B + G_B.T @ z - w
            r_p = G_y @ y + G_B @ t + s - h
            pobj = float(c_y @ y + c_B @ t) + offset
            dobj = float(-h @ z) + offset
            mu = float(s @ z + t @ w) / (m + nb)
            p_res = float(np.max(np.abs(r_p))) / h_scale
            d_res = max(
                float(np.max(np.abs(r_y))) if r else 0.0,
                float(np.max(np.abs(r_t))) if nb else 0.0,
            ) / c_scale
            gap = abs(pobj - dobj) / (1.0 + abs(pobj))

            if p_res <= self.tol and d_res <= self.tol and gap <= self.tol:
                status = LpStatus.OPTIMAL
                history.append(IterationRecord(iteration, pobj, dobj, p_res, d_res, gap, mu, 0.0, 0.0))
                break

            certificate = self._certificate(G_y, G_B, c_y, c_B, h, y, t, z, w, divergence)
            if certificate is not None:
                status = certificate
                history.append(IterationRecord(iteration, pobj, dobj, p_res, d_res, gap, mu, 0.0, 0.0))
                break

            d = w / t
            omega = s / z
            M = (G_B / d) @ G_B.T
            M[np.diag_indices_from(M)] += omega
            factor_m, reg_m = _factor(M)
            factor_q = None
            Minv_Gy = None
            if r:
                Minv_Gy = _solve(factor_m, G_y)
                factor_q, reg_q = _factor(G_y.T @ Minv_Gy)
                reg_m = reg_m or reg_q
            self.regularized = self.regularized or reg_m

            def newton(r_sz: np.ndarray, r_tw: np.ndarray):
                rho_t = -r_t + r_tw / t
                rho_p = -r_p - r_sz / z - G_B @ (rho_t / d)
                if r:
                    dy = _solve(factor_q, -r_y + Minv_Gy.T @ rho_p)
                    dz = _solve(factor_m, G_y @ dy - rho_p)
                else:
                    dy = np.zeros(0)
                    dz = -_solve(factor_m, rho_p)
                dt = (rho_t - G_B.T @ dz) / d
                ds = (r_sz - s * dz) / z
                dw = (r_tw - w * dt) / t
                return dy, dt, ds, dz, dw

            # predictor
            dy, dt, ds, dz, dw = newton(-s * z, -t * w)
            alpha_p = min(_max_step(s, ds), _max_step(t, dt))
            alpha_d = min(_max_step(z, dz), _max_step(w, dw))
            mu_aff = float(
                (s + alpha_p * ds) @ (z + alpha_d * dz) + (t + alpha_p * dt) @ (w + alpha_d * dw)
            ) / (m + nb)
            sigma = min(1.0, (mu_aff / mu) ** 3) if mu > 0 else 0.0

            # corrector
            dy, dt, ds, dz, dw = newton(
                sigma * mu - s * z - ds * dz,
                sigma * mu - t * w - dt * dw,
            )
            alpha_p = STEP_FRACTION * min(_max_step(s, ds), _max_step(t, dt))
            alpha_d = STEP_FRACTION * min(_max_step(z, dz), _max_step(w, dw))

            candidate = (y + alpha_p * dy, t + alpha_p * dt, s + alpha_p * ds, z + alpha_d * dz, w + alpha_d * dw)
            if not all(np.all(np.isfinite(part)) for part in candidate):
                LOGGER.warning("Interior point iterate became non-finite at iteration %s", iteration)
                break
            y, t, s, z, w = candidate

            history.append(
                IterationRecord(iteration, pobj, dobj, p_res, d_res, gap, mu, alpha_p, alpha_d)
            )
            LOGGER.debug(
                "ip iter=%s pobj=%.6e dobj=%.6e pres=%.2e dres=%.2e gap=%.2e mu=%.2e",
                iteration, pobj, dobj, p_res, d_res, gap, mu,
            )
            if max(alpha_p, alpha_d) < STALL_STEP:
                LOGGER.debug("Interior point stalled at iteration %s", iteration)
                break

        if status is LpStatus.MAX_ITERATIONS:
            final = self._certificate(G_y, G_B, c_y, c_B, h, y, t, z, w, 0.0)
            if final is not None:
                status = final

        return y, t, z, status, iteration, history

    def _classify(self, lp: LinearProgram) -> LpStatus:
        """Decide between infeasible, unbounded and slow for a program the path did not finish.

        Both auxiliary programs are feasible and bounded by construction: a
        phase-one program minimizing the uniform constraint violation, and a
        box-limited search for a descent ray of the recession cone.
        """

        inner = InteriorPointSolver(tol=self.tol, max_iter=self.max_iter, classify=False)
        n, m = lp.num_variables, lp.num_constraints

        phase_one = LinearProgram(
            c=np.concatenate([np.zeros(n), [1.0]]),
            G=np.hstack([lp.G, -np.ones((m, 1))]),
            h=lp.h,
            lower=np.concatenate([lp.lower, [0.0]]),
        )
        violation = inner.solve(phase_one)
        h_scale = 1.0 + float(np.max(np.abs(lp.h)))
        if violation.is_optimal and violation.x[-1] > CERTIFICATE_TOL * h_scale:
            LOGGER.info("Phase-one violation %.3e: program is infeasible", violation.x[-1])
            return LpStatus.INFEASIBLE

        free = lp.lower == -np.inf
        eye = np.eye(n)
        ray = LinearProgram(
            c=lp.c,
            G=np.vstack([lp.G, eye, -eye[free]]),
            h=np.concatenate([np.zeros(m), np.ones(n), np.ones(int(free.sum()))]),
            lower=np.where(free, -np.inf, 0.0),
        )
        descent = inner.solve(ray)
        c_scale = 1.0 + float(np.max(np.abs(lp.c)))
        if descent.is_optimal and descent.objective < -CERTIFICATE_TOL * c_scale:
            LOGGER.info("Descent ray with cost %.3e: program is unbounded", descent.objective)
            return LpStatus.UNBOUNDED
        return LpStatus.MAX_ITERATIONS

    @staticmethod
    def _certificate(G_y, G_B, c_y, c_B, h, y, t, z, w, threshold: float) -> Optional[LpStatus]:
        """Detect an unbounded ray or a Farkas infeasibility certificate."""

        primal_norm = max(
            float(np.max(np.abs(y))) if y.size else 0.0,
            float(np.max(np.abs(t))) if t.size else 0.0,
        )
        if primal_norm > threshold and primal_norm > 0:
            dy = y / primal_norm
            dt = t / primal_norm
            direction_cost = float(c_y @ dy + c_B @ dt)
            if (
                np.all(G_y @ dy + G_B @ dt <= CERTIFICATE_TOL)
                and direction_cost < -CERTIFICATE_TOL
            ):
                return LpStatus.UNBOUNDED

        dual_norm = max(
            float(np.max(np.abs(z))) if z.size else 0.0,
            float(np.max(np.abs(w))) if w.size else 0.0,
        )
        if dual_norm > threshold and dual_norm > 0:
            dz = z / dual_norm
            dw = w / dual_norm
            stationarity = max(
                float(np.max(np.abs(G_y.T @ dz))) if y.size else 0.0,
                float(np.max(np.abs(G_B.T @ dz - dw))) if t.size else 0.0,
            )
            if stationarity <= CERTIFICATE_TOL and float(h @ dz) < -CERTIFICATE_TOL:
                return LpStatus.INFEASIBLE
        return None


def solve_lp(lp: LinearProgram, tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER) -> LpSolution:
    """Solve ``lp`` and report x in the variables of the program as given."""

    return InteriorPointSolver(tol=tol, max_iter=max_iter).solve(lp)
