"""Brute-force grid search over the box ``prod_g [0, p_g]``.

Only meant for small G as an independent check of the solvers. The
objective is evaluated directly from the worst-case MSE formula (variance
plus ``B^2 (sum |w - p|)^2``), not through the solvers' quadratic form.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .core import Problem
from .errors import ResolutionTooCoarse, TooManyGroups

__all__ = ["GridSpec", "grid_search", "axis_lattice"]

MAX_GROUPS = 5
# points evaluated per vectorized block
_BLOCK = 1 << 22


@dataclass(frozen=True)
class GridSpec:
    resolution: float = 1e-3
    refine: bool = False

    def __post_init__(self):
        if not self.resolution > 0:
            raise ValueError("resolution must be positive")


def axis_lattice(p_g: float, r: float) -> np.ndarray:
    """``{0, r, 2r, ...}`` below ``p_g``, with ``p_g`` itself always appended."""
    if p_g == 0:
        return np.zeros(1)
    n = int(math.floor(p_g / r + 1e-9))
    pts = np.arange(n + 1) * r
    pts = pts[pts < p_g]
    return np.append(pts, p_g)


def _objective_tail(problem: Problem, lead: np.ndarray, axes: list[np.ndarray]) -> np.ndarray:
    """Objective on ``lead`` (fixed leading coordinates) x the mesh of the last axes."""
    k = lead.shape[0]
    G = problem.G
    v, p, B = problem.variances, problem.p, problem.B
    C = problem.covariances
    mesh = list(np.meshgrid(*axes, indexing="ij")) if axes else []
    shape = mesh[0].shape if mesh else ()
    var = np.full(shape, float(np.sum(lead**2 * v[:k])))
    l1 = np.full(shape, float(np.sum(np.abs(lead - p[:k]))))
    for j, m in enumerate(mesh):
        g = k + j
        var = var + m * m * v[g]
        l1 = l1 + np.abs(m - p[g])
    if C is not None:
        coords = list(lead) + mesh
        for g in range(G):
            for h in range(g + 1, G):
                if C[g, h] != 0:
                    var = var + 2.0 * C[g, h] * coords[g] * coords[h]
    return var + B * B * l1 * l1


def _polish(problem: Problem, w: np.ndarray, sweeps: int = 200) -> np.ndarray:
    """Plain coordinate descent from a grid point, each step a clamped scalar minimization."""
    M = problem.cov_matrix
    B2, s, p = problem.B**2, problem.s, problem.p
    w = w.copy()
    for _ in range(sweeps):
        for g in range(problem.G):
            rest = float(M[g] @ w - M[g, g] * w[g])
            other = float(w.sum() - w[g])
            # d/dw_g [M_gg w^2 + 2 w rest + B^2 (s - other - w)^2] = 0
            x = (B2 * (s - other) - rest) / (M[g, g] + B2)
            w[g] = min(max(x, 0.0), p[g])
    return w


def grid_search(problem: Problem, spec: GridSpec | None = None) -> tuple[np.ndarray, float]:
    """Exhaustive minimum of the worst-case MSE on the lattice; returns ``(w, objective)``.

    Ties go to the lexicographically smallest lattice point. With
    ``spec.refine`` the best point is polished by coordinate descent and the
    better of the two is returned.
    """
    spec = spec or GridSpec()
    G = problem.G
    if G > MAX_GROUPS:
        raise TooManyGroups(f"grid search is limited to G <= {MAX_GROUPS}, got {G}")
    r = spec.resolution
    if r > problem.s / 2:
        raise ResolutionTooCoarse(f"resolution {r} exceeds half the total share {problem.s}")
    if not math.isfinite(problem.B):
        raise ValueError("grid search needs a finite B")

    axes = [axis_lattice(float(pg), r) for pg in problem.p]
    # vectorize over as many trailing axes as fit in one block
    n_tail = 0
    size = 1
    for ax in reversed(axes):
        if size * ax.size > _BLOCK and n_tail > 0:
            break
        size *= ax.size
        n_tail += 1
    head, tail = axes[: G - n_tail], axes[G - n_tail :]

    best_val, best_w = math.inf, None
    for lead in itertools.product(*head):
        lead = np.asarray(lead, dtype=np.float64)
        vals = _objective_tail(problem, lead, tail)
        idx = int(np.argmin(vals))
        val = float(vals.reshape(-1)[idx])
        if val < best_val:
            pos = np.unravel_index(idx, vals.shape)
            best_w = np.concatenate([lead, [ax[i] for ax, i in zip(tail, pos)]])
            best_val = val

    if spec.refine:
        polished = _polish(problem, best_w)
        pval = float(_objective_tail(problem, polished, []))
        if pval < best_val:
            best_w, best_val = polished, pval
    return best_w, best_val
