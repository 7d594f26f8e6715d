"""Box-constrained quadratic program for correlated estimators.

On the box ``0 <= w <= p`` the worst-case MSE is the quadratic

    f(w) = w' (D + C + B^2 J) w - 2 B^2 s 1'w + B^2 s^2,

with ``D`` the diagonal of variances, ``C`` the covariances, ``J`` the all-ones
matrix and ``s = sum(p)``. It is minimized by cyclic exact coordinate descent.
After every sweep a subspace step (solve the stationarity system on the
coordinates strictly inside the box, others held fixed) is attempted and kept
only if it stays in the box and lowers ``f``. This keeps descent monotone and
turns the linear tail of coordinate descent into a handful of sweeps.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .closed_form import Solution
from .core import Problem, worst_case_mse
from .errors import InvalidB, NegativeCovarianceUnsupported, NotConverged, OutOfBox

__all__ = ["QpSettings", "solve_qp", "kkt_residual", "qp_objective", "qp_gradient"]


@dataclass(frozen=True)
class QpSettings:
    max_sweeps: int = 100_000
    tol_w: float = 1e-12
    tol_kkt: float = 1e-10

    def __post_init__(self):
        if self.max_sweeps < 1 or self.tol_w <= 0 or self.tol_kkt <= 0:
            raise ValueError("QpSettings fields must be positive")


def _hessian_half(problem: Problem) -> np.ndarray:
    return problem.cov_matrix + problem.B**2


def qp_objective(problem: Problem, w) -> float:
    """The box quadratic; equals ``worst_case_mse(problem, w).total`` whenever ``w <= p``."""
    w = np.asarray(w, dtype=np.float64)
    H = _hessian_half(problem)
    B2, s = problem.B**2, problem.s
    return float(w @ H @ w - 2.0 * B2 * s * w.sum() + B2 * s * s)


def qp_gradient(problem: Problem, w) -> np.ndarray:
    w = np.asarray(w, dtype=np.float64)
    return 2.0 * (_hessian_half(problem) @ w - problem.B**2 * problem.s)


def _projected_residual(grad: np.ndarray, w: np.ndarray, p: np.ndarray) -> float:
    at_upper = w >= p
    at_lower = (w <= 0) & ~at_upper
    r = np.abs(grad)
    # at w = p descent needs grad <= 0, at w = 0 it needs grad >= 0
    r = np.where(at_upper, np.maximum(0.0, grad), r)
    r = np.where(at_lower, np.maximum(0.0, -grad), r)
    # a zero-width coordinate (p_g = 0) is fixed
    r = np.where(p == 0, 0.0, r)
    return float(r.max())


def kkt_residual(problem: Problem, w) -> float:
    """Max-norm projected-gradient residual of the box QP at ``w``.

    ``|grad_g|`` for interior coordinates, ``max(0, grad_g)`` at ``w_g = p_g``
    and ``max(0, -grad_g)`` at ``w_g = 0``.
    """
    w = np.asarray(w, dtype=np.float64).reshape(-1)
    p = problem.p
    if w.shape != p.shape:
        raise OutOfBox(f"w has length {w.shape[0]}, expected {p.shape[0]}")
    if np.any(w < 0) or np.any(w > p):
        raise OutOfBox("w lies outside the box 0 <= w <= p")
    return _projected_residual(qp_gradient(problem, w), w, p)


def _subspace_step(H, b, w, p):
    free = (w > 0) & (w < p)
    if not free.any():
        return None
    fixed = ~free
    rhs = b - H[np.ix_(free, fixed)] @ w[fixed]
    Hff = H[np.ix_(free, free)]
    try:
        z = np.linalg.solve(Hff, rhs)
    except np.linalg.LinAlgError:
        z = np.linalg.lstsq(Hff, rhs, rcond=None)[0]
    if not np.all(np.isfinite(z)):
        return None
    pf = p[free]
    # tiny excursions from rounding are clipped; real ones are rejected
    slack = 1e-12 * np.maximum(1.0, pf)
    if np.any(z < -slack) or np.any(z > pf + slack):
        return None
    cand = w.copy()
    cand[free] = np.clip(z, 0.0, pf)
    return cand


def _f(H, b, c, w):
    return float(w @ H @ w - 2.0 * b * w.sum() + c)


def solve_qp(problem: Problem, settings: QpSettings | None = None) -> Solution:
    """Minimax weights with (nonnegative) covariances over ``0 <= w <= p``.

    Starts from ``p / 2`` and sweeps coordinates in index order. Stops once
    the projected KKT residual is below ``tol_kkt`` or a sweep moves no
    coordinate by more than ``tol_w``. Raises :class:`NotConverged` (with the
    best iterate attached) if the residual is still above ``tol_kkt`` at that
    point. Singular Hessians are accepted; the optimum may then be a face and
    one optimal point is returned.
    """
    settings = settings or QpSettings()
    if math.isinf(problem.B) or not problem.B > 0:
        raise InvalidB(f"solve_qp needs a finite positive B, got {problem.B}")
    if problem.covariances is not None and np.any(problem.covariances < 0):
        raise NegativeCovarianceUnsupported("minimax reduction to the box requires nonnegative covariances")

    p = problem.p
    G = problem.G
    H = _hessian_half(problem)
    diag = np.diag(H).copy()
    b = problem.B**2 * problem.s
    c = b * problem.s

    w = p / 2.0
    hw = H @ w  # maintained: H @ w
    f_cur = _f(H, b, c, w)
    residual = math.inf
    sweeps = 0
    for sweeps in range(1, settings.max_sweeps + 1):
        max_change = 0.0
        for g in range(G):
            new = w[g] - (hw[g] - b) / diag[g]
            new = min(max(new, 0.0), p[g])
            d = new - w[g]
            if d != 0.0:
                w[g] = new
                hw += d * H[:, g]
                max_change = max(max_change, abs(d))
        f_cur = _f(H, b, c, w)

        cand = _subspace_step(H, b, w, p)
        if cand is not None:
            f_cand = _f(H, b, c, cand)
            if f_cand <= f_cur:
                max_change = max(max_change, float(np.abs(cand - w).max()))
                w, f_cur = cand, f_cand
        hw = H @ w

        residual = _projected_residual(2.0 * (hw - b), w, p)
        if residual <= settings.tol_kkt or max_change <= settings.tol_w:
            break

    solution = _package(problem, w, residual, sweeps)
    if residual > settings.tol_kkt:
        raise NotConverged(
            f"KKT residual {residual:.3g} > {settings.tol_kkt:.3g} after {sweeps} sweeps",
            solution=solution,
        )
    return solution


def _package(problem: Problem, w: np.ndarray, residual: float, sweeps: int) -> Solution:
    p = problem.p
    grad = qp_gradient(problem, w)
    at_upper = w >= p
    at_lower = (w <= 0) & ~at_upper
    # box multipliers: upper bound takes -grad/2, lower bound grad/2 (objective scaled by 1/2)
    mu = np.where(at_upper, np.maximum(0.0, -grad / 2.0), 0.0)
    return Solution(
        w=w.copy(),
        mse=worst_case_mse(problem, w),
        kkt_residual=residual,
        multipliers=mu,
        active_set={
            "lower": [int(i) for i in np.flatnonzero(at_lower)],
            "upper": [int(i) for i in np.flatnonzero(at_upper)],
        },
        sweeps=sweeps,
    )
