"""Closed-form minimax weights for uncorrelated estimators.

Groups are ranked by ``p_g * var_g``. The optimum keeps ``w_g = p_g`` for the
precisely estimated groups at the front of that ranking and sets
``w_g = K / var_g`` for the rest, where ``K`` is a common constant determined
by where the cut is placed. The cut is found by evaluating the worst-case MSE
of each admissible candidate.

Index conventions: ``h`` and ``g_bar`` are 1-based positions in the sorted
order (``h = G + 1`` means no group is shrunk). ``Solution.permutation`` holds
0-based original indices, ``permutation[k]`` being the group at sorted
position ``k + 1``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .core import MseDecomposition, Problem, worst_case_mse
from .errors import CorrelatedProblem, IndexOutOfRange, InvalidB

__all__ = [
    "Solution",
    "sort_groups",
    "g_bar",
    "candidate_weights",
    "solve_minimax",
    "scan_gbar_check",
    "stationarity_residual",
]


@dataclass(frozen=True, eq=False)
class Solution:
    w: np.ndarray
    mse: MseDecomposition
    kkt_residual: float
    multipliers: np.ndarray
    h_star: int | None = None
    permutation: np.ndarray | None = None
    active_set: dict[str, list[int]] | None = None
    sweeps: int | None = None
    extra: dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {"w": self.w.tolist()}
        if self.h_star is not None:
            out["h_star"] = int(self.h_star)
        if self.active_set is not None:
            out["active_set"] = {k: list(v) for k, v in self.active_set.items()}
        out["mse"] = self.mse.to_dict()
        out["kkt_residual"] = self.kkt_residual
        out["multipliers"] = self.multipliers.tolist()
        return out


def sort_groups(problem: Problem) -> np.ndarray:
    """Stable ascending order of ``p_g * var_g`` (0-based original indices)."""
    return np.argsort(problem.p * problem.variances, kind="stable")


def _suffix_sums(x: np.ndarray) -> np.ndarray:
    # accumulated from the last group backwards
    return np.cumsum(x[::-1])[::-1]


def _sorted_arrays(problem: Problem):
    perm = sort_groups(problem)
    return perm, problem.p[perm], problem.variances[perm]


def _shrink_constants(p: np.ndarray, v: np.ndarray, B: float) -> np.ndarray:
    """``K_h = sum_{g>=h} p_g / (1/B^2 + sum_{g>=h} 1/v_g)`` for every h (sorted order)."""
    inv_b2 = 0.0 if math.isinf(B) else 1.0 / B**2
    return _suffix_sums(p) / (inv_b2 + _suffix_sums(1.0 / v))


def g_bar(problem: Problem) -> int:
    """Smallest sorted position g with ``K_g <= p_g var_g`` (1-based).

    Always defined: the inequality holds at g = G.
    """
    _, p, v = _sorted_arrays(problem)
    holds = _shrink_constants(p, v, problem.B) <= p * v
    # g = G holds analytically; guard against a last-ulp miss
    holds[-1] = True
    return int(np.argmax(holds)) + 1


def candidate_weights(problem: Problem, h: int) -> np.ndarray:
    """Candidate ``w_h`` in *sorted* order: ``p_g`` before position h, ``K_h / var_g`` from h on.

    ``B = inf`` is accepted (the ``1/B^2`` term vanishes).
    """
    G = problem.G
    if not 1 <= h <= G:
        raise IndexOutOfRange(f"h must lie in 1..{G}, got {h}")
    _, p, v = _sorted_arrays(problem)
    K = _shrink_constants(p, v, problem.B)[h - 1]
    w = p.copy()
    w[h - 1 :] = K / v[h - 1 :]
    return w


def scan_gbar_check(problem: Problem) -> bool:
    """True iff ``{g : sum_{g'>=g} p / sum_{g'>=g} 1/v <= p_g v_g}`` is an upper interval of positions.

    This is the monotonicity behind the backward scan for ``g_bar``; note the
    inequality has no ``1/B^2`` term. Used for property testing only.
    """
    _, p, v = _sorted_arrays(problem)
    # equality at g = G; compare with a relative slack
    holds = _suffix_sums(p) / _suffix_sums(1.0 / v) <= p * v * (1 + 1e-12)
    if not holds.any():
        return False
    first = int(np.argmax(holds))
    return bool(holds[first:].all())


def _multipliers(problem: Problem, w: np.ndarray) -> np.ndarray:
    K = problem.B**2 * (problem.s - w.sum())
    return np.maximum(0.0, K - problem.p * problem.variances)


def stationarity_residual(problem: Problem, w: np.ndarray, mu: np.ndarray) -> float:
    """Max violation of the KKT system of ``min sum w^2 v + B^2 (s - sum w)^2`` s.t. ``w <= p``.

    Covers stationarity ``w_g v_g - B^2 (s - sum w) + mu_g = 0``, complementary
    slackness ``mu_g (w_g - p_g) = 0``, primal feasibility and ``mu >= 0``.
    """
    K = problem.B**2 * (problem.s - w.sum())
    stat = np.abs(w * problem.variances - K + mu)
    slack = np.abs(mu * (w - problem.p))
    primal = np.maximum(0.0, w - problem.p)
    dual = np.maximum(0.0, -mu)
    return float(max(stat.max(), slack.max(), primal.max(), dual.max()))


def solve_minimax(problem: Problem) -> Solution:
    """Minimax weights for an uncorrelated problem.

    Evaluates the worst-case MSE of each candidate ``w_h`` for
    ``h = g_bar, ..., G`` and keeps the smallest (ties go to the smaller h).
    Works for both scales; in the absolute scale the variances are the
    actual estimator variances.

    With ``B = inf`` the answer is ``w = p`` (no shrinkage), returned with
    ``h_star = G + 1`` and zero multipliers.
    """
    if problem.has_covariances:
        raise CorrelatedProblem("problem has nonzero covariances; use qp.solve_qp")
    B = problem.B
    if not B > 0:
        raise InvalidB(f"B must be positive, got {B}")
    G = problem.G
    perm = sort_groups(problem)

    if math.isinf(B):
        w = problem.p.copy()
        mu = np.zeros(G)
        return Solution(
            w=w,
            mse=worst_case_mse(problem, w),
            kkt_residual=0.0,
            multipliers=mu,
            h_star=G + 1,
            permutation=perm,
        )

    p_sorted = problem.p[perm]
    start = g_bar(problem)
    best_h, best_w, best_total = None, None, math.inf
    for h in range(start, G + 1):
        w_sorted = np.minimum(candidate_weights(problem, h), p_sorted)
        w = np.empty(G)
        w[perm] = w_sorted
        total = worst_case_mse(problem, w).total
        if total < best_total:
            best_h, best_w, best_total = h, w, total

    mu = _multipliers(problem, best_w)
    return Solution(
        w=best_w,
        mse=worst_case_mse(problem, best_w),
        kkt_residual=stationarity_residual(problem, best_w, mu),
        multipliers=mu,
        h_star=best_h,
        permutation=perm,
    )
