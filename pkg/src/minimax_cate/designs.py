"""Problem builders for stratified experiments and staggered-adoption DID panels.

Stratified RCT
    One group per stratum. ``p_g`` is the stratum's share of units and
    ``v_g = 1/n0_g + 1/n1_g`` (controls, treated), the sigma-relative variance
    of the within-stratum difference in means.

Staggered DID
    One group per treated (unit, period) cell. Each cell effect is estimated by
    the long difference

        tau_hat_it = Y_it - Y_i,t_i-1 - mean_{j in C_t} (Y_jt - Y_j,t_i-1)

    with ``t_i`` the unit's first treated period and ``C_t`` the control set
    (never-treated units, or units not yet treated at t). With independent
    homoscedastic untreated outcomes the covariance of the cell estimators is
    ``sigma^2 A A'`` where the rows of ``A`` are the estimators' coefficients on
    the outcome grid.

Periods are numbered 1..T. Grid columns are ordered unit-major:
column ``unit_index * T + (t - 1)``.
"""

from __future__ import annotations

import csv
import io
import os
from collections import defaultdict
from dataclasses import dataclass
from typing import Any, Iterable, Sequence

import numpy as np

from .core import Problem, validate_problem
from .errors import EmptyControlSet, EmptyStratum, InvalidDesign, LengthMismatch, NonNestedControls

__all__ = [
    "Stratum",
    "RctDesign",
    "Unit",
    "DidDesign",
    "rct_to_problem",
    "psm_weights",
    "fe_weights",
    "treated_cells",
    "control_set",
    "did_linear_representation",
    "did_covariance",
    "did_to_problem",
    "did_design_from_panel",
]

NEVER = None
CONTROL_RULES = ("never", "notyet")
COVARIANCE_MODES = ("linear", "paper")


# --------------------------------------------------------------------------
# stratified RCT


@dataclass(frozen=True)
class Stratum:
    n0: int  # controls
    n1: int  # treated


@dataclass(frozen=True)
class RctDesign:
    strata: tuple[Stratum, ...]

    def __post_init__(self):
        strata = tuple(s if isinstance(s, Stratum) else Stratum(*s) for s in self.strata)
        object.__setattr__(self, "strata", strata)
        if not strata:
            raise EmptyStratum("design needs at least one stratum")
        for k, s in enumerate(strata):
            if int(s.n0) != s.n0 or int(s.n1) != s.n1:
                raise InvalidDesign(f"stratum {k}: counts must be integers")
            if s.n0 < 1 or s.n1 < 1:
                raise EmptyStratum(f"stratum {k} needs at least one treated and one control unit")

    @property
    def n0(self) -> np.ndarray:
        return np.array([s.n0 for s in self.strata], dtype=np.float64)

    @property
    def n1(self) -> np.ndarray:
        return np.array([s.n1 for s in self.strata], dtype=np.float64)

    @property
    def shares(self) -> np.ndarray:
        n = self.n0 + self.n1
        return n / n.sum()

    @property
    def v(self) -> np.ndarray:
        return 1.0 / self.n0 + 1.0 / self.n1

    def to_dict(self) -> dict[str, Any]:
        return {"strata": [{"n0": s.n0, "n1": s.n1} for s in self.strata]}

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "RctDesign":
        return cls(tuple(Stratum(int(s["n0"]), int(s["n1"])) for s in d["strata"]))


def rct_to_problem(design: RctDesign, B: float, sigma: float | None = None) -> Problem:
    """Sigma-relative, uncorrelated problem of a stratified experiment."""
    return validate_problem(design.shares, design.v, B, scale="sigma", sigma=sigma)


def psm_weights(design: RctDesign) -> np.ndarray:
    """Population-share weights (the unbiased aggregation)."""
    return design.shares


def fe_weights(design: RctDesign) -> np.ndarray:
    """Weights reproducing the treatment coefficient of OLS with strata fixed effects.

    Proportional to ``(1/n0_g + 1/n1_g)^-1``.
    """
    prec = 1.0 / design.v
    return prec / prec.sum()


# --------------------------------------------------------------------------
# staggered DID


@dataclass(frozen=True)
class Unit:
    id: Any
    t_first: int | None  # None = never treated


@dataclass(frozen=True)
class DidDesign:
    """Staggered-adoption panel.

    ``control_rule`` is ``"never"`` (C_t = never-treated units) or ``"notyet"``
    (C_t = units with ``t < t_first``, never-treated included).
    ``covariance_mode`` is ``"linear"`` (exact Gram matrix of the estimator
    rows) or ``"paper"`` (the closed-form cell covariance expressions).
    """

    T: int
    units: tuple[Unit, ...]
    control_rule: str = "notyet"
    covariance_mode: str = "linear"

    def __post_init__(self):
        units = tuple(u if isinstance(u, Unit) else Unit(*u) for u in self.units)
        object.__setattr__(self, "units", units)
        if self.control_rule not in CONTROL_RULES:
            raise InvalidDesign(f"control_rule must be one of {CONTROL_RULES}")
        if self.covariance_mode not in COVARIANCE_MODES:
            raise InvalidDesign(f"covariance_mode must be one of {COVARIANCE_MODES}")
        if int(self.T) != self.T or self.T < 2:
            raise InvalidDesign("T must be an integer >= 2")
        ids = [u.id for u in units]
        if len(set(ids)) != len(ids):
            raise InvalidDesign("unit ids must be distinct")
        for u in units:
            if u.t_first is not None and not (2 <= u.t_first <= self.T):
                raise InvalidDesign(f"unit {u.id!r}: t_first must lie in 2..{self.T} or be never")
        if not any(u.t_first is not None for u in units):
            raise InvalidDesign("design has no treated cell")
        _check_controls(self)

    @property
    def n_units(self) -> int:
        return len(self.units)

    def column(self, unit_index: int, t: int) -> int:
        return unit_index * self.T + (t - 1)

    def to_dict(self) -> dict[str, Any]:
        return {
            "T": self.T,
            "units": [
                {"id": u.id, "t_first": "never" if u.t_first is None else u.t_first} for u in self.units
            ],
            "control_rule": self.control_rule,
            "covariance_mode": self.covariance_mode,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "DidDesign":
        units = []
        for u in d["units"]:
            tf = u["t_first"]
            units.append(Unit(u["id"], None if tf == "never" or tf is None else int(tf)))
        return cls(
            T=int(d["T"]),
            units=tuple(units),
            control_rule=d.get("control_rule", "notyet"),
            covariance_mode=d.get("covariance_mode", "linear"),
        )


def control_set(design: DidDesign, t: int) -> list[int]:
    """Indices of the control units at period t."""
    if design.control_rule == "never":
        return [k for k, u in enumerate(design.units) if u.t_first is None]
    return [k for k, u in enumerate(design.units) if u.t_first is None or t < u.t_first]


def _check_controls(design: DidDesign) -> None:
    periods = sorted({t for _, t in treated_cells(design)})
    prev = None
    for t in range(1, design.T + 1):
        cur = set(control_set(design, t))
        if prev is not None and not cur <= prev:
            raise NonNestedControls(f"C_{t} is not a subset of C_{t - 1}")
        prev = cur
    for t in periods:
        if not control_set(design, t):
            raise EmptyControlSet(f"no control units at period {t}")


def treated_cells(design: DidDesign) -> list[tuple[int, int]]:
    """Treated (unit index, period) cells, unit-major then period; this fixes the group order."""
    cells = []
    for k, u in enumerate(design.units):
        if u.t_first is not None:
            cells.extend((k, t) for t in range(u.t_first, design.T + 1))
    return cells


def did_linear_representation(design: DidDesign) -> np.ndarray:
    """Coefficient matrix (cells x grid) of the cell estimators on the outcome grid."""
    cells = treated_cells(design)
    A = np.zeros((len(cells), design.n_units * design.T))
    for r, (i, t) in enumerate(cells):
        base = design.units[i].t_first - 1
        ctrl = control_set(design, t)
        if not ctrl:
            raise EmptyControlSet(f"no control units at period {t}")
        A[r, design.column(i, t)] += 1.0
        A[r, design.column(i, base)] -= 1.0
        share = 1.0 / len(ctrl)
        for j in ctrl:
            A[r, design.column(j, t)] -= share
            A[r, design.column(j, base)] += share
    return A


def _paper_covariance(design: DidDesign) -> np.ndarray:
    cells = treated_cells(design)
    G = len(cells)
    M = np.zeros((G, G))
    n_ctrl = {t: len(control_set(design, t)) for _, t in cells}
    for a, (i, t) in enumerate(cells):
        for b, (j, s) in enumerate(cells):
            later = max(t, s)
            inv_n = 1.0 / n_ctrl[later]
            same_cohort = design.units[i].t_first == design.units[j].t_first
            if i == j and t == s:
                M[a, b] = 2.0 * (1.0 + inv_n)
            elif i == j:
                M[a, b] = 1.0 + inv_n
            elif t == s:
                M[a, b] = inv_n * (1.0 + same_cohort)
            else:
                M[a, b] = inv_n * same_cohort
    return M


def did_covariance(design: DidDesign, mode: str | None = None) -> np.ndarray:
    """Sigma-relative covariance matrix of the cell estimators (diagonal included)."""
    mode = mode or design.covariance_mode
    if mode == "linear":
        A = did_linear_representation(design)
        return A @ A.T
    if mode == "paper":
        return _paper_covariance(design)
    raise InvalidDesign(f"unknown covariance mode {mode!r}")


def did_to_problem(
    design: DidDesign,
    B: float,
    p_override: Sequence[float] | None = None,
    sigma: float | None = None,
) -> Problem:
    """Sigma-relative problem over the treated cells; ``p`` defaults to ``1/G`` each.

    With several adoption cohorts the exact covariance can be negative: a
    cell observed at period ``t`` and a later cohort whose baseline period is
    ``t`` load on the same control outcomes with opposite signs. Such problems
    are accepted here (they can be evaluated) but ``qp.solve_qp`` refuses them.
    """
    M = did_covariance(design)
    G = M.shape[0]
    if p_override is None:
        p = np.full(G, 1.0 / G)
    else:
        p = np.asarray(p_override, dtype=np.float64)
        if p.shape != (G,):
            raise LengthMismatch(f"p_override has length {p.shape[0] if p.ndim else 0}, design has {G} cells")
    v = np.diag(M).copy()
    C = M - np.diag(v)
    return validate_problem(
        p, v, B, covariances=C, scale="sigma", sigma=sigma, allow_negative_covariances=True
    )


def _rows_from_panel(source) -> Iterable[dict[str, str]]:
    if isinstance(source, (str, os.PathLike)) and os.path.exists(source):
        with open(source, newline="") as fh:
            yield from csv.DictReader(fh)
    elif isinstance(source, str):
        yield from csv.DictReader(io.StringIO(source))
    else:
        yield from source


def did_design_from_panel(
    source,
    control_rule: str = "notyet",
    covariance_mode: str = "linear",
) -> DidDesign:
    """Infer first treatment dates from a ``unit,period,treated`` panel.

    ``source`` is a CSV path, CSV text, or an iterable of row dicts. Periods
    may be any sortable integers; they are mapped to 1..T in order. Treatment
    must be absorbing (once on, on in every later observed period) and the
    panel must be balanced.
    """
    status: dict[str, dict[int, int]] = defaultdict(dict)
    order: list[str] = []
    for row in _rows_from_panel(source):
        try:
            unit = str(row["unit"]).strip()
            period = int(row["period"])
            treated = int(float(row["treated"]))
        except (KeyError, ValueError) as exc:
            raise InvalidDesign(f"bad panel row {row!r}") from exc
        if treated not in (0, 1):
            raise InvalidDesign(f"treated must be 0/1, got {treated}")
        if unit not in status:
            order.append(unit)
        if period in status[unit]:
            raise InvalidDesign(f"duplicate row for unit {unit}, period {period}")
        status[unit][period] = treated
    if not order:
        raise InvalidDesign("empty panel")

    periods = sorted({t for s in status.values() for t in s})
    rank = {t: k + 1 for k, t in enumerate(periods)}
    units = []
    for unit in order:
        obs = status[unit]
        if sorted(obs) != periods:
            raise InvalidDesign(f"unit {unit} is not observed in every period")
        seq = [obs[t] for t in periods]
        first = next((k for k, d in enumerate(seq) if d), None)
        if first is not None and not all(seq[first:]):
            raise InvalidDesign(f"unit {unit}: treatment is not absorbing")
        if first == 0:
            raise InvalidDesign(f"unit {unit} is treated in the first period; no baseline")
        units.append(Unit(unit, None if first is None else rank[periods[first]]))
    return DidDesign(T=len(periods), units=tuple(units), control_rule=control_rule, covariance_mode=covariance_mode)
