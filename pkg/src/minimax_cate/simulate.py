"""Seeded Monte-Carlo checks of the worst-case MSE bounds.

Replications are processed in fixed-size blocks. Block ``b`` draws from its
own generator seeded by ``SeedSequence(seed, spawn_key=(b,))`` and block
summaries are merged in block order, so a report depends only on
``(design, config)``: not on the number of worker threads.

Outcomes are normal with standard deviation ``sigma``. Only first and second
moments enter an MSE, so normality is enough to sit exactly at the
variance bounds.
"""

from __future__ import annotations

import csv
import io
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable, Mapping

import numpy as np

from .core import adversarial_cates, estimate
from .designs import (
    DidDesign,
    RctDesign,
    did_linear_representation,
    did_to_problem,
    fe_weights,
    rct_to_problem,
    treated_cells,
)
from .errors import InvalidConfig, LengthMismatch, SingularDesign

__all__ = [
    "McConfig",
    "EstimatorStats",
    "McReport",
    "simulate_rct",
    "simulate_did",
    "ols_fe_equivalence",
    "fe_regression_coefficient",
    "THREADS_ENV",
]

THREADS_ENV = "MINIMAX_CATE_THREADS"
TAU_RULES = ("zero", "explicit", "adversarial")


@dataclass(frozen=True)
class McConfig:
    """Monte-Carlo settings.

    ``tau_rule``: ``"zero"``; ``"explicit"`` with ``tau`` in outcome units; or
    ``"adversarial"``, which places every group effect at ``+-sigma*B`` with the
    signs that maximize the bias of ``w_ref``. ``B`` is required for the
    adversarial rule and for ``check_bounds``.
    """

    reps: int
    seed: int
    estimators: Mapping[str, Any]
    sigma: float = 1.0
    tau_rule: str = "zero"
    tau: Any = None
    w_ref: Any = None
    B: float | None = None
    check_bounds: bool = True
    block_size: int = 8192
    workers: int | None = None

    def __post_init__(self):
        if int(self.reps) != self.reps or self.reps < 1:
            raise InvalidConfig("reps must be a positive integer")
        if not 0 <= int(self.seed) < 2**64:
            raise InvalidConfig("seed must be a 64-bit unsigned integer")
        if not (self.sigma > 0 and math.isfinite(self.sigma)):
            raise InvalidConfig("sigma must be positive")
        if self.tau_rule not in TAU_RULES:
            raise InvalidConfig(f"tau_rule must be one of {TAU_RULES}")
        if self.tau_rule == "explicit" and self.tau is None:
            raise InvalidConfig("explicit tau_rule needs tau")
        if self.tau_rule == "adversarial" and (self.w_ref is None or self.B is None):
            raise InvalidConfig("adversarial tau_rule needs w_ref and B")
        if self.tau_rule == "adversarial" and not math.isfinite(self.B):
            raise InvalidConfig("adversarial tau_rule needs a finite B")
        if self.block_size < 1:
            raise InvalidConfig("block_size must be positive")
        est = self.estimators
        if not isinstance(est, Mapping):
            names = [n for n, _ in est]
            if len(set(names)) != len(names):
                raise InvalidConfig("estimator names must be distinct")
            est = dict(est)
        if not est:
            raise InvalidConfig("at least one estimator is required")
        est = {str(k): np.asarray(w, dtype=np.float64) for k, w in est.items()}
        object.__setattr__(self, "estimators", est)

    def echo(self) -> dict[str, Any]:
        return {
            "reps": int(self.reps),
            "seed": int(self.seed),
            "sigma": self.sigma,
            "tau_rule": self.tau_rule,
            "B": self.B,
            "block_size": self.block_size,
            "estimators": {k: w.tolist() for k, w in self.estimators.items()},
        }


@dataclass(frozen=True)
class EstimatorStats:
    bias: float
    variance: float
    mse: float
    mse_se: float
    bias_se: float

    def to_dict(self) -> dict[str, float]:
        return {
            "bias": self.bias,
            "variance": self.variance,
            "mse": self.mse,
            "mse_se": self.mse_se,
            "bias_se": self.bias_se,
        }


@dataclass(frozen=True, eq=False)
class McReport:
    estimators: dict[str, EstimatorStats]
    reps: int
    seed: int
    config: dict[str, Any]
    tau: np.ndarray
    estimand: float
    tau_hat_mean: np.ndarray
    tau_hat_cov: np.ndarray
    extra: dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        return {
            "reps": self.reps,
            "seed": self.seed,
            "config": self.config,
            "tau": self.tau.tolist(),
            "estimand": self.estimand,
            "estimators": {k: s.to_dict() for k, s in self.estimators.items()},
            "tau_hat_mean": self.tau_hat_mean.tolist(),
            "tau_hat_cov": self.tau_hat_cov.tolist(),
        }

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["estimator", "bias", "variance", "mse", "mse_se", "bias_se", "reps", "seed"])
        for name, s in self.estimators.items():
            writer.writerow(
                [name] + [format(x, ".17g") for x in (s.bias, s.variance, s.mse, s.mse_se, s.bias_se)]
                + [self.reps, self.seed]
            )
        return buf.getvalue()


# --------------------------------------------------------------------------
# moment accumulation (Chan et al. pairwise merge, fixed order)


class _Moments:
    """Count, mean and centered second moment of a stream of row vectors."""

    def __init__(self, dim: int, cross: bool = False):
        self.n = 0
        self.mean = np.zeros(dim)
        self.m2 = np.zeros((dim, dim)) if cross else np.zeros(dim)
        self.cross = cross

    def add_block(self, x: np.ndarray) -> None:
        m = x.shape[0]
        mean_b = x.mean(axis=0)
        d = x - mean_b
        m2_b = d.T @ d if self.cross else np.einsum("ij,ij->j", d, d)
        if self.n == 0:
            self.n, self.mean, self.m2 = m, mean_b, m2_b
            return
        n = self.n + m
        delta = mean_b - self.mean
        if self.cross:
            corr = np.outer(delta, delta) * (self.n * m / n)
        else:
            corr = delta * delta * (self.n * m / n)
        self.mean = self.mean + delta * (m / n)
        self.m2 = self.m2 + m2_b + corr
        self.n = n


def _workers(config: McConfig) -> int:
    if config.workers is not None:
        return max(1, int(config.workers))
    raw = os.environ.get(THREADS_ENV)
    if raw:
        try:
            return max(1, int(raw))
        except ValueError:
            pass
    return 1


def _run(
    config: McConfig,
    draw: Callable[[np.random.Generator, int], np.ndarray],
    tau: np.ndarray,
    estimand: float,
    G: int,
) -> McReport:
    names = list(config.estimators)
    W = np.column_stack([config.estimators[k] for k in names])
    if W.shape[0] != G:
        raise LengthMismatch(f"estimator weights must have length {G}")

    sizes = [config.block_size] * (config.reps // config.block_size)
    if config.reps % config.block_size:
        sizes.append(config.reps % config.block_size)

    def block(b: int):
        rng = np.random.default_rng(np.random.SeedSequence(int(config.seed), spawn_key=(b,)))
        tau_hat = draw(rng, sizes[b])
        err = tau_hat @ W - estimand
        return tau_hat, err

    err_m = _Moments(len(names))
    sq_m = _Moments(len(names))
    th_m = _Moments(G, cross=True)
    n_workers = _workers(config)
    if n_workers > 1:
        with ThreadPoolExecutor(max_workers=n_workers) as pool:
            results = pool.map(block, range(len(sizes)))
            for tau_hat, err in results:
                err_m.add_block(err)
                sq_m.add_block(err * err)
                th_m.add_block(tau_hat)
    else:
        for b in range(len(sizes)):
            tau_hat, err = block(b)
            err_m.add_block(err)
            sq_m.add_block(err * err)
            th_m.add_block(tau_hat)

    n = config.reps
    ddof = max(n - 1, 1)
    stats = {}
    for k, name in enumerate(names):
        stats[name] = EstimatorStats(
            bias=float(err_m.mean[k]),
            variance=float(err_m.m2[k] / n),
            mse=float(sq_m.mean[k]),
            mse_se=float(math.sqrt(sq_m.m2[k] / ddof / n)),
            bias_se=float(math.sqrt(err_m.m2[k] / ddof / n)),
        )
    return McReport(
        estimators=stats,
        reps=n,
        seed=int(config.seed),
        config=config.echo(),
        tau=tau,
        estimand=estimand,
        tau_hat_mean=th_m.mean,
        tau_hat_cov=th_m.m2 / ddof,
    )


def _resolve_tau(config: McConfig, problem) -> np.ndarray:
    G = problem.G
    if config.tau_rule == "zero":
        return np.zeros(G)
    if config.tau_rule == "explicit":
        tau = np.asarray(config.tau, dtype=np.float64).reshape(-1)
        if tau.shape[0] != G:
            raise LengthMismatch(f"tau has length {tau.shape[0]}, expected {G}")
        if config.check_bounds and config.B is not None:
            bound = config.sigma * config.B
            if np.any(np.abs(tau) > bound * (1 + 1e-12)):
                raise InvalidConfig(f"explicit tau exceeds the bound sigma*B = {bound}")
        return tau
    return adversarial_cates(problem, config.w_ref)


def simulate_rct(design: RctDesign, config: McConfig) -> McReport:
    """Monte-Carlo replications of a stratified experiment.

    Each replication draws every unit's outcome, adds the (stratum-homogeneous)
    effect to treated units and forms the within-stratum differences in
    means. The estimand is ``sum_g p_g tau_g`` with ``p`` the stratum shares.
    """
    problem = rct_to_problem(design, config.B if config.B is not None else 1.0, sigma=config.sigma)
    tau = _resolve_tau(config, problem)
    p = design.shares
    n0 = design.n0.astype(int)
    n1 = design.n1.astype(int)
    G = len(n0)
    # columns: stratum 0 controls, stratum 0 treated, stratum 1 controls, ...
    starts = np.cumsum(np.column_stack([n0, n1]).reshape(-1))
    starts = np.concatenate([[0], starts[:-1]])
    total = int(n0.sum() + n1.sum())
    sigma = config.sigma

    def draw(rng: np.random.Generator, m: int) -> np.ndarray:
        y = rng.standard_normal((m, total)) * sigma
        sums = np.add.reduceat(y, starts, axis=1)
        means0 = sums[:, 0::2] / n0
        means1 = sums[:, 1::2] / n1
        return means1 + tau - means0

    return _run(config, draw, tau, float(np.dot(p, tau)), G)


def simulate_did(design: DidDesign, config: McConfig, p: Any = None) -> McReport:
    """Monte-Carlo replications of a staggered-adoption panel.

    The untreated outcome grid is i.i.d. normal(0, sigma^2); treated cells get
    their effect added and every cell estimator is computed from its linear
    representation. ``p`` are the estimand weights over cells (default uniform).
    The report's ``tau_hat_cov`` is the empirical covariance of the cell
    estimators, to be compared with ``sigma^2 * did_covariance(design)``.
    """
    A = did_linear_representation(design)
    G = A.shape[0]
    problem = did_to_problem(design, config.B if config.B is not None else 1.0, p_override=p, sigma=config.sigma)
    tau = _resolve_tau(config, problem)
    shift = np.zeros(A.shape[1])
    for g, (i, t) in enumerate(treated_cells(design)):
        shift[design.column(i, t)] = tau[g]
    At = np.ascontiguousarray(A.T)
    sigma = config.sigma

    def draw(rng: np.random.Generator, m: int) -> np.ndarray:
        y = rng.standard_normal((m, A.shape[1])) * sigma + shift
        return y @ At

    return _run(config, draw, tau, float(np.dot(problem.p, tau)), G)


# --------------------------------------------------------------------------
# fixed-effects regression identity


def fe_regression_coefficient(design: RctDesign, seed: int, sigma: float = 1.0, tau=None):
    """Simulate one dataset; return (OLS treatment coefficient with strata FE, per-stratum estimates)."""
    rng = np.random.default_rng(seed)
    G = len(design.strata)
    tau = rng.normal(size=G) if tau is None else np.asarray(tau, dtype=np.float64)
    rows_y, rows_d, rows_g = [], [], []
    tau_hat = np.empty(G)
    for g, s in enumerate(design.strata):
        mu = rng.normal()  # stratum intercept shared by both arms
        y0 = mu + rng.normal(scale=sigma, size=s.n0)
        y1 = mu + tau[g] + rng.normal(scale=sigma, size=s.n1)
        tau_hat[g] = y1.mean() - y0.mean()
        rows_y.extend(y0)
        rows_y.extend(y1)
        rows_d.extend([0.0] * s.n0 + [1.0] * s.n1)
        rows_g.extend([g] * (s.n0 + s.n1))
    y = np.asarray(rows_y)
    d = np.asarray(rows_d)
    grp = np.asarray(rows_g)
    X = np.column_stack([np.ones_like(d), d] + [(grp == g).astype(float) for g in range(1, G)])
    coef, _, rank, _ = np.linalg.lstsq(X, y, rcond=None)
    if rank < X.shape[1]:
        raise SingularDesign("fixed-effects design matrix is rank deficient")
    return float(coef[1]), tau_hat


def ols_fe_equivalence(design: RctDesign, seed: int, rtol: float = 1e-8) -> bool:
    """Check that OLS with strata fixed effects equals the ``fe_weights`` combination on one dataset."""
    beta, tau_hat = fe_regression_coefficient(design, seed)
    combo = estimate(fe_weights(design), tau_hat)
    return bool(abs(beta - combo) <= rtol * max(abs(beta), abs(combo), 1e-300))
