"""Butcher tableaux, fixed-step integration and the built-in method library.

Tableau entries are exact rationals so they can feed the B-series machinery
without rounding; stage evaluation during integration is plain binary64.
Time-dependent problems are handled by autonomization (time as the last state
component), which lets analysis and integration share one code path.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Optional

import numpy as np

from . import _kernels
from .bseries import modified_equation_coeffs, rk_bseries
from .trees import BLT2, BLT3, BLT4, BUSHY3, BUSHY4, LEAF, TAU4B, TAU4C

__all__ = [
    "ButcherTableau",
    "OdeSystem",
    "Trajectory",
    "DivergenceError",
    "DegenerateParameterError",
    "step",
    "integrate",
    "builtin_methods",
    "get_method",
    "design_tuned_3stage",
    "tuned_condition_value",
    "METHOD_ORDERS",
]


class DivergenceError(RuntimeError):
    """A trajectory produced non-finite values."""

    def __init__(self, message, step_index=None):
        super().__init__(message)
        self.step_index = step_index


class DegenerateParameterError(ValueError):
    """A method-family parameter for which the defining system is singular."""


def _frac_matrix(rows):
    return tuple(tuple(Fraction(x) for x in row) for row in rows)


class ButcherTableau:
    """Explicit Runge-Kutta tableau (A, b, c) with exact-rational entries."""

    def __init__(self, name, A, b, c):
        self.name = name
        self.A = _frac_matrix(A)
        self.b = tuple(Fraction(x) for x in b)
        self.c = tuple(Fraction(x) for x in c)
        self.stages = len(self.b)
        self._weight_cache = {}
        if len(self.A) != self.stages or len(self.c) != self.stages:
            raise ValueError("A, b, c must share the stage count")
        for i, row in enumerate(self.A):
            if len(row) != self.stages:
                raise ValueError("A must be square")
            if any(row[j] != 0 for j in range(i, self.stages)):
                raise ValueError(f"{name}: tableau must be strictly lower triangular")
            if sum(row[:i], Fraction(0)) != self.c[i]:
                raise ValueError(f"{name}: row sums of A must equal c")
        self.A_f = np.array([[float(x) for x in row] for row in self.A])
        self.b_f = np.array([float(x) for x in self.b])
        self.c_f = np.array([float(x) for x in self.c])

    def __repr__(self):
        return f"ButcherTableau({self.name!r}, stages={self.stages})"


@dataclass(frozen=True)
class FastOde:
    """Dispatch record for the compiled integration kernels."""

    rhs_id: int
    params: np.ndarray


@dataclass
class OdeSystem:
    """Autonomous first-order system with right-hand side and Jacobian."""

    dimension: int
    rhs: Callable[[np.ndarray], np.ndarray]
    jacobian: Optional[Callable[[np.ndarray], np.ndarray]] = None
    name: str = ""
    fast: Optional[FastOde] = None

    def check_jacobian(self, state, rel_tol=1e-6, scale=1e-6):
        """Central finite-difference consistency check of the Jacobian."""
        state = np.asarray(state, dtype=float)
        J = self.jacobian(state)
        num = np.empty_like(J)
        for j in range(self.dimension):
            e = np.zeros(self.dimension)
            e[j] = scale * max(1.0, abs(state[j]))
            num[:, j] = (self.rhs(state + e) - self.rhs(state - e)) / (2 * e[j])
        denom = max(1.0, np.max(np.abs(J)))
        return np.max(np.abs(J - num)) / denom < rel_tol


@dataclass
class Trajectory:
    """Uniformly sampled states, possibly strided."""

    t0: float
    h: float
    stride: int
    states: np.ndarray  # (n_samples, d)

    @property
    def times(self):
        return self.t0 + self.h * self.stride * np.arange(self.states.shape[0])

    @property
    def final(self):
        return self.states[-1]

    def __len__(self):
        return self.states.shape[0]


def step(tableau: ButcherTableau, ode: OdeSystem, y, h: float):
    """One explicit RK step from state ``y``."""
    y = np.asarray(y, dtype=float)
    s = tableau.stages
    K = np.empty((s, y.size))
    for i in range(s):
        u = y + h * (tableau.A_f[i, :i] @ K[:i]) if i else y.copy()
        K[i] = ode.rhs(u)
    out = y + h * (tableau.b_f @ K)
    if not np.all(np.isfinite(out)):
        raise DivergenceError(f"non-finite state after one step of {tableau.name}")
    return out


def integrate(
    tableau: ButcherTableau,
    ode: OdeSystem,
    y0,
    t0: float,
    h: float,
    t_end: float,
    stride: int = 1,
) -> Trajectory:
    """Fixed-step integration from ``t0`` to (just past) ``t_end``.

    Takes floor((t_end - t0)/h) steps and records every ``stride``-th state
    (the initial state is always sample 0).  Divergence is reported with the
    failing step index.
    """
    if h <= 0:
        raise ValueError("step size must be positive")
    if stride < 1:
        raise ValueError("stride must be >= 1")
    y0 = np.asarray(y0, dtype=float)
    n_steps = int(np.floor((t_end - t0) / h + 1e-9))
    n_samples = n_steps // stride
    out = np.empty((n_samples + 1, y0.size))

    if ode.fast is not None:
        m = _kernels.integrate_kernel(
            ode.fast.rhs_id,
            ode.fast.params,
            tableau.A_f,
            tableau.b_f,
            tableau.c_f,
            y0,
            h,
            n_steps,
            stride,
            out,
        )
        if m < 0:
            raise DivergenceError(
                f"{tableau.name} diverged on {ode.name} at step {-m}", step_index=-m
            )
        return Trajectory(t0, h, stride, out[: m + 1])

    out[0] = y0
    y = y0.copy()
    m = 0
    for k in range(n_steps):
        y = step(tableau, ode, y, h)
        if (k + 1) % stride == 0:
            m += 1
            out[m] = y
            if not np.all(np.isfinite(y)):
                raise DivergenceError(
                    f"{tableau.name} diverged on {ode.name} at step {k + 1}",
                    step_index=k + 1,
                )
    return Trajectory(t0, h, stride, out[: m + 1])


# --- method library ----------------------------------------------------------

_F = Fraction


def builtin_methods() -> list[ButcherTableau]:
    """The four built-in explicit methods (exact tableaux)."""
    runge2 = ButcherTableau(
        "runge2",
        A=[[0, 0], [_F(1, 2), 0]],
        b=[0, 1],
        c=[0, _F(1, 2)],
    )
    heun3 = ButcherTableau(
        "heun3",
        A=[[0, 0, 0], [_F(1, 3), 0, 0], [0, _F(2, 3), 0]],
        b=[_F(1, 4), 0, _F(3, 4)],
        c=[0, _F(1, 3), _F(2, 3)],
    )
    tuned3 = ButcherTableau(
        "tuned3",
        A=[[0, 0, 0], [1, 0, 0], [_F(9, 4), _F(-3, 4), 0]],
        b=[_F(7, 18), _F(5, 6), _F(-2, 9)],
        c=[0, 1, _F(3, 2)],
    )
    rk4 = ButcherTableau(
        "rk4",
        A=[
            [0, 0, 0, 0],
            [_F(1, 2), 0, 0, 0],
            [0, _F(1, 2), 0, 0],
            [0, 0, 1, 0],
        ],
        b=[_F(1, 6), _F(1, 3), _F(1, 3), _F(1, 6)],
        c=[0, _F(1, 2), _F(1, 2), 1],
    )
    for tab in (runge2, heun3, tuned3, rk4):
        assert sum(tab.b, Fraction(0)) == 1
    return [runge2, heun3, tuned3, rk4]


METHOD_ORDERS = {"runge2": 2, "heun3": 3, "tuned3": 3, "rk4": 4}


def get_method(name: str) -> ButcherTableau:
    for tab in builtin_methods():
        if tab.name == name:
            return tab
    raise ValueError(f"unknown method {name!r}; known: {sorted(METHOD_ORDERS)}")


# --- the tuned three-stage family --------------------------------------------

# A third-order 3-stage method whose modified vector field additionally
# satisfies  3 b([..]) - 3 b([[.].]-shape) + b([[..]]) - 4 b(chain-4) = 0.
# With c1 = 0 and the row-sum convention the five conditions collapse to
#   c3 = 1 + 1/(2 c2),
# leaving c2 as the free parameter; b and A follow from the order-3 system.


def design_tuned_3stage(c2) -> ButcherTableau:
    """Member of the one-parameter tuned family with second abscissa ``c2``.

    Degenerate parameters (for which the defining linear systems are
    singular) are rejected.
    """
    c2 = Fraction(c2)
    if c2 == 0:
        raise DegenerateParameterError("c2 = 0 collapses the second stage")
    c3 = 1 + Fraction(1, 2 * c2)
    if c3 == c2 or c3 == 0:
        raise DegenerateParameterError(f"c2 = {c2} makes the quadrature weights singular")
    b2 = Fraction(3 * c3 - 2, 1) / (6 * c2 * (c3 - c2))
    b3 = Fraction(2 - 3 * c2, 1) / (6 * c3 * (c3 - c2))
    if b3 == 0:
        raise DegenerateParameterError(f"c2 = {c2} gives b3 = 0; the chained stage drops out")
    b1 = 1 - b2 - b3
    a32 = Fraction(1, 6 * c2 * b3)
    tab = ButcherTableau(
        f"tuned3[c2={c2}]",
        A=[[0, 0, 0], [c2, 0, 0], [c3 - a32, a32, 0]],
        b=[b1, b2, b3],
        c=[0, c2, c3],
    )
    _check_tuned_conditions(tab)
    return tab


def _check_tuned_conditions(tab: ButcherTableau):
    b = modified_equation_coeffs(rk_bseries(tab, 4))
    conds = [
        b[LEAF] - 1,
        b[BLT2],
        b[BUSHY3],
        b[BLT3],
        3 * b[BUSHY4] - 3 * b[TAU4B] + b[TAU4C] - 4 * b[BLT4],
    ]
    if any(c != 0 for c in conds):
        raise DegenerateParameterError(f"{tab.name}: tuned conditions not met: {conds}")


def tuned_condition_value(b_map) -> Fraction:
    """The order-4 combination that the tuned family annihilates."""
    return 3 * b_map[BUSHY4] - 3 * b_map[TAU4B] + b_map[TAU4C] - 4 * b_map[BLT4]
