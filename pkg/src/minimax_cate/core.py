"""Problem representation and worst-case MSE of linear combinations.

A problem collects everything a solver needs: the estimand weights ``p``
(population shares), the variance profile of the group-level estimators,
optional covariances, and the bound ``B`` on every group effect.

Two scales are supported:

``"sigma"``
    variances are the known factors ``v_g`` of ``V(tau_hat_g) <= sigma^2 v_g``,
    covariances are the factors ``c_gg'``, ``B`` is in outcome-sd units, and all
    MSE figures are reported divided by ``sigma^2``.
``"absolute"``
    variances and covariances are the actual moments and ``B`` bounds
    ``|tau_g|`` directly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

from .errors import (
    AsymmetricCovariance,
    LengthMismatch,
    NegativeCovariance,
    NegativeShare,
    NonPositiveB,
    NonPositiveVariance,
    NotPSD,
)

__all__ = [
    "Problem",
    "MseDecomposition",
    "validate_problem",
    "worst_case_mse",
    "adversarial_cates",
    "estimate",
    "exact_mse",
    "PSD_TOL",
]

SCALES = ("sigma", "absolute")
PSD_TOL = -1e-10


def _readonly(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Problem:
    """A validated minimax problem. Build it with :func:`validate_problem`."""

    p: np.ndarray
    variances: np.ndarray
    B: float
    scale: str = "sigma"
    covariances: np.ndarray | None = None
    sigma: float | None = None

    @property
    def G(self) -> int:
        return self.p.shape[0]

    @property
    def s(self) -> float:
        """Total estimand weight (1 for the ATE/ATT decompositions)."""
        return float(self.p.sum())

    @property
    def has_covariances(self) -> bool:
        return self.covariances is not None and bool(np.any(self.covariances != 0))

    @property
    def cov_matrix(self) -> np.ndarray:
        """Full variance-covariance matrix ``diag(variances) + C``."""
        m = np.diag(self.variances)
        if self.covariances is not None:
            m = m + self.covariances
        return m

    def permuted(self, perm: Sequence[int]) -> "Problem":
        """Problem with groups reordered so that new group k is old group ``perm[k]``."""
        perm = np.asarray(perm)
        cov = None
        if self.covariances is not None:
            cov = self.covariances[np.ix_(perm, perm)]
        return validate_problem(
            self.p[perm],
            self.variances[perm],
            self.B,
            covariances=cov,
            scale=self.scale,
            sigma=self.sigma,
            allow_negative_covariances=True,
        )

    def replace_B(self, B: float) -> "Problem":
        return validate_problem(
            self.p,
            self.variances,
            B,
            covariances=self.covariances,
            scale=self.scale,
            sigma=self.sigma,
            allow_negative_covariances=True,
        )

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {
            "p": self.p.tolist(),
            "variances": {"scale": self.scale, "values": self.variances.tolist()},
        }
        if self.covariances is not None:
            out["covariances"] = self.covariances.tolist()
        out["B"] = "inf" if math.isinf(self.B) else self.B
        if self.sigma is not None:
            out["sigma"] = self.sigma
        return out

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "Problem":
        var = d["variances"]
        B = d["B"]
        B = math.inf if isinstance(B, str) and B.lower() == "inf" else float(B)
        return validate_problem(
            d["p"],
            var["values"],
            B,
            covariances=d.get("covariances"),
            scale=var.get("scale", "sigma"),
            sigma=d.get("sigma"),
        )


def validate_problem(
    p,
    variances,
    B: float,
    covariances=None,
    scale: str = "sigma",
    sigma: float | None = None,
    allow_negative_covariances: bool = False,
) -> Problem:
    """Check shapes and sign constraints and return an immutable :class:`Problem`.

    ``B`` may be ``math.inf`` (the unrestricted-effects limit). Negative
    covariances are refused unless ``allow_negative_covariances`` is set; they
    are fine for evaluating a worst-case MSE but not for minimax solving.
    """
    if scale not in SCALES:
        raise ValueError(f"scale must be one of {SCALES}, got {scale!r}")
    p = np.array(p, dtype=np.float64).reshape(-1)
    v = np.array(variances, dtype=np.float64).reshape(-1)
    G = p.shape[0]
    if G == 0:
        raise LengthMismatch("at least one group is required")
    if v.shape[0] != G:
        raise LengthMismatch(f"p has {G} entries but variances has {v.shape[0]}")
    if not np.all(np.isfinite(p)) or np.any(p < 0):
        raise NegativeShare("shares p must be finite and nonnegative")
    if p.sum() <= 0:
        raise NegativeShare("shares p must have a positive total")
    if not np.all(np.isfinite(v)) or np.any(v <= 0):
        raise NonPositiveVariance("all variances must be finite and strictly positive")

    B = float(B)
    if math.isnan(B) or B <= 0:
        raise NonPositiveB(f"B must be positive, got {B}")

    if sigma is not None:
        sigma = float(sigma)
        if not (sigma > 0 and math.isfinite(sigma)):
            raise ValueError(f"sigma must be a positive finite number, got {sigma}")

    C = None
    if covariances is not None:
        C = np.array(covariances, dtype=np.float64)
        if C.shape != (G, G):
            raise LengthMismatch(f"covariances must be {G}x{G}, got {C.shape}")
        if not np.all(np.isfinite(C)):
            raise AsymmetricCovariance("covariances must be finite")
        if not np.array_equal(C, C.T):
            if not np.allclose(C, C.T, rtol=0, atol=1e-12 * max(1.0, np.abs(C).max())):
                raise AsymmetricCovariance("covariance matrix is not symmetric")
            C = (C + C.T) / 2
        if np.any(np.diag(C) != 0):
            raise AsymmetricCovariance("covariance matrix must have a zero diagonal")
        if not allow_negative_covariances and np.any(C < 0):
            raise NegativeCovariance("covariances must be nonnegative")
        full = np.diag(v) + C
        min_eig = float(np.linalg.eigvalsh(full)[0])
        if min_eig < PSD_TOL:
            raise NotPSD(f"diag(variances) + C is not PSD (smallest eigenvalue {min_eig:.3g})")
        C = _readonly(C)

    return Problem(p=_readonly(p), variances=_readonly(v), B=B, scale=scale, covariances=C, sigma=sigma)


@dataclass(frozen=True)
class MseDecomposition:
    """Worst-case MSE split into its variance and squared-bias parts.

    ``scale`` is ``"sigma2"`` when the figures are MSE / sigma^2.
    ``absolute_total`` is filled in for sigma-relative problems that carry a sigma.
    """

    variance_term: float
    bias_sq_term: float
    total: float
    scale: str
    absolute_total: float | None = field(default=None)

    def to_dict(self) -> dict[str, Any]:
        out = {
            "variance": self.variance_term,
            "bias_sq": self.bias_sq_term,
            "total": self.total,
            "scale": self.scale,
        }
        if self.absolute_total is not None:
            out["absolute_total"] = self.absolute_total
        return out


def _as_weights(problem: Problem, w) -> np.ndarray:
    w = np.asarray(w, dtype=np.float64).reshape(-1)
    if w.shape[0] != problem.G:
        raise LengthMismatch(f"weights have length {w.shape[0]}, problem has G={problem.G}")
    if not np.all(np.isfinite(w)):
        raise ValueError("weights must be finite")
    return w


def variance_term(problem: Problem, w) -> float:
    w = _as_weights(problem, w)
    var = float(np.dot(w * w, problem.variances))
    if problem.covariances is not None:
        var += float(w @ problem.covariances @ w)
    return var


def worst_case_mse(problem: Problem, w) -> MseDecomposition:
    """Sharp upper bound on the MSE of ``sum_g w_g tau_hat_g`` as an estimator of ``sum_g p_g tau_g``.

    variance = sum_g w_g^2 var_g + sum_{g != g'} w_g w_g' cov_gg'
    bias^2   = B^2 (sum_g |w_g - p_g|)^2
    """
    w = _as_weights(problem, w)
    var = variance_term(problem, w)
    l1 = float(np.abs(w - problem.p).sum())
    # inf * 0 must read as zero bias when w == p
    bias_sq = 0.0 if l1 == 0.0 else problem.B**2 * l1**2
    total = var + bias_sq
    if problem.scale == "sigma":
        abs_total = None if problem.sigma is None else total * problem.sigma**2
        return MseDecomposition(var, bias_sq, total, "sigma2", abs_total)
    return MseDecomposition(var, bias_sq, total, "absolute")


def adversarial_cates(problem: Problem, w) -> np.ndarray:
    """Group effects at which :func:`worst_case_mse` is attained.

    ``tau_g = +bound`` where ``w_g >= p_g`` (ties included) and ``-bound``
    elsewhere. For sigma-relative problems the bound is ``sigma * B`` if the
    problem carries a sigma, otherwise the values are in sigma units.
    """
    w = _as_weights(problem, w)
    bound = problem.B
    if problem.scale == "sigma" and problem.sigma is not None:
        bound = problem.sigma * problem.B
    return np.where(w >= problem.p, bound, -bound)


def exact_mse(problem: Problem, w, tau, cov=None) -> float:
    """MSE of the linear combination for given effects ``tau`` and estimator covariance.

    ``cov`` defaults to the problem's variance profile taken at its bound.
    Same units as ``tau`` squared (for sigma problems pass tau in sigma units
    to compare with :func:`worst_case_mse`).
    """
    w = _as_weights(problem, w)
    tau = np.asarray(tau, dtype=np.float64)
    if tau.shape != w.shape:
        raise LengthMismatch("tau and w must have the same length")
    cov = problem.cov_matrix if cov is None else np.asarray(cov, dtype=np.float64)
    bias = float(np.dot(w - problem.p, tau))
    return float(w @ cov @ w) + bias**2


def estimate(w, tau_hats) -> float:
    """The linear combination ``sum_g w_g tau_hat_g``."""
    w = np.asarray(w, dtype=np.float64).reshape(-1)
    t = np.asarray(tau_hats, dtype=np.float64).reshape(-1)
    if w.shape != t.shape:
        raise LengthMismatch(f"weights ({w.shape[0]}) and estimates ({t.shape[0]}) differ in length")
    return float(np.dot(w, t))
