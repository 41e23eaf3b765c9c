"""Oscillatory test problems and their large-time structure.

Two families live here:

* the power-law oscillator ``y'' + t^nu * y^n = 0`` (odd ``n`` > 1,
  ``nu > -(n+3)/2``), written as the autonomous first-order system
  ``y1' = y2, y2' = -y3^nu y1^n, y3' = 1``.  Its solutions oscillate with
  slowly varying amplitude; for large ``t`` they follow
  ``y(t) ~ (1+2g)^(2/(n-1)) c1^(2/(n-1)) t^(-g) w_n(c1 t^(1+2g) + c2)``
  with ``g = nu/(n+3)``, where ``w_n`` solves ``u'' + u^n = 0`` with
  ``u(0) = 0, u'(0) = 1`` (odd and periodic).  The pair ``(c1, c2)`` are
  action-angle parameters fitted from a trajectory.

* the nonautonomous linear oscillator ``y'' + g(t) y = 0`` with the
  Liouville-Green (WKB) asymptotic solution ``Lambda(t) R(theta(t)) s0``,
  ``theta = integral of sqrt(g)``.

The module also evaluates the elementary differentials of the power-law
system exactly: every differential is a polynomial in (y1, y2, y3), built
once per tree by a recursion over the tree shape and reused by the
sensitivity integrators.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from fractions import Fraction
from functools import lru_cache
from typing import Callable, Optional

import numpy as np

from ._kernels import RHS_PLANE_OSC, RHS_POWER_OSC
from .rk import FastOde, OdeSystem, Trajectory, get_method, integrate
from .trees import RootedTree

__all__ = [
    "DomainError",
    "FitError",
    "ResolutionError",
    "EmdenFowlerProblem",
    "ReferenceOscillation",
    "LinearOscillatorProblem",
    "ef_system",
    "airy_system",
    "make_airy_problem",
    "wn_build",
    "fit_action_angle",
    "xt_map",
    "solution_amplitude",
    "elementary_differential",
    "differential_monomials",
    "compile_differentials",
    "liouville_green",
    "lg_parameters",
    "parse_problem_spec",
]


class DomainError(ValueError):
    """Evaluation outside the validity region (e.g. t below t_min)."""


class FitError(RuntimeError):
    """A trajectory did not expose enough structure to fit."""


class ResolutionError(RuntimeError):
    """The reference oscillation table failed its accuracy guard."""


# --- problems ----------------------------------------------------------------


@dataclass(frozen=True)
class EmdenFowlerProblem:
    """Oscillatory power-law problem ``y'' + t^nu y^n = 0``."""

    n: int = 3
    nu: float = 1.0
    y0: float = 1.0
    y0p: float = 0.0

    def __post_init__(self):
        if self.n < 3 or self.n % 2 == 0:
            raise ValueError(f"n must be an odd integer >= 3, got {self.n}")
        if not self.nu > -(self.n + 3) / 2:
            raise ValueError(f"nu must exceed -(n+3)/2 = {-(self.n + 3) / 2}")

    @property
    def gamma(self) -> float:
        return self.nu / (self.n + 3)

    @property
    def amplitude_prefactor(self) -> float:
        """(1+2g)^(2/(n-1)), the scale factor of the asymptotic solution."""
        return (1.0 + 2.0 * self.gamma) ** (2.0 / (self.n - 1))

    def initial_state(self):
        return np.array([self.y0, self.y0p, 0.0])


def _power_law_rhs(n, nu):
    def rhs(y):
        y1, y2, y3 = y
        if y3 < 0 and nu != int(nu):
            raise DomainError(f"t^({nu}) undefined for t = {y3} < 0")
        return np.array([y2, -(y3**nu) * y1**n, 1.0])

    return rhs


def _power_law_jacobian(n, nu):
    def jac(y):
        y1, y2, y3 = y
        if y3 < 0 and nu != int(nu):
            raise DomainError(f"t^({nu}) undefined for t = {y3} < 0")
        d_dy3 = -nu * (y3 ** (nu - 1)) * y1**n if nu != 0 else 0.0
        return np.array(
            [
                [0.0, 1.0, 0.0],
                [-n * (y3**nu) * y1 ** (n - 1), 0.0, d_dy3],
                [0.0, 0.0, 0.0],
            ]
        )

    return jac


def _power_law_system(n, nu, name) -> OdeSystem:
    return OdeSystem(
        dimension=3,
        rhs=_power_law_rhs(n, nu),
        jacobian=_power_law_jacobian(n, nu),
        name=name,
        fast=FastOde(RHS_POWER_OSC, np.array([float(n), float(nu)])),
    )


def ef_system(problem: EmdenFowlerProblem) -> OdeSystem:
    """The autonomized first-order system of a power-law problem."""
    return _power_law_system(problem.n, problem.nu, f"emden:n={problem.n},nu={problem.nu:g}")


def airy_system() -> OdeSystem:
    """Autonomized ``y'' + t y = 0`` (the n = nu = 1 power-law case)."""
    return _power_law_system(1, 1.0, "airy")


# --- exact elementary differentials of the power-law system ------------------

# A differential is a triple of polynomials in (y1, y2, y3), each stored as
# {(e1, e2, e3): Fraction}.  The recursion over the tree shape:
#   component 1:  F1(.) = y2,  F1([tau]) = F2(tau),  zero for >= 2 children;
#   component 3:  F3(.) = 1, zero otherwise;
#   component 2:  a vertex with m children, l of them leaves, sends j of the
#   leaves into time-derivative slots (only leaves can: F3 vanishes on
#   anything larger) and the rest into space-derivative slots:
#     F2 = - sum_j  C(l, j) * n_(m-j) * nu_(j)
#            * y3^(nu-j) * y1^(n-m+j) * y2^(l-j) * prod F1(non-leaf children)
#   with falling factorials n_(k), nu_(j); n_(k) = 0 for k > n truncates.
# Setting include_time_derivatives=False keeps only j = 0, the form in which
# the large-time growth rates are usually derived.


def _poly_mul(p, q):
    out = {}
    for (a1, a2, a3), ca in p.items():
        for (b1, b2, b3), cb in q.items():
            key = (a1 + b1, a2 + b2, a3 + b3)
            out[key] = out.get(key, Fraction(0)) + ca * cb
    return {k: v for k, v in out.items() if v != 0}


def _falling(x: Fraction, k: int) -> Fraction:
    out = Fraction(1)
    for i in range(k):
        out *= x - i
    return out


@lru_cache(maxsize=None)
def differential_monomials(tree: RootedTree, n: int, nu_num: int, nu_den: int,
                           include_time_derivatives: bool = True):
    """Exact monomial form of the elementary differential of a tree.

    Returns three dicts {(e1, e2, e3): Fraction}; e3 is a Fraction when nu is
    not an integer.  ``nu = nu_num / nu_den`` must be rational.
    """
    nu = Fraction(nu_num, nu_den)
    if not tree.children:
        return (
            {(0, 1, 0): Fraction(1)},
            {(n, 0, nu): Fraction(-1)},
            {(0, 0, 0): Fraction(1)},
        )

    kids = tree.children
    m = len(kids)
    leaves = [c for c in kids if not c.children]
    non_leaves = [c for c in kids if c.children]
    ell = len(leaves)

    # component 1
    if m == 1:
        comp1 = differential_monomials(kids[0], n, nu_num, nu_den,
                                       include_time_derivatives)[1]
    else:
        comp1 = {}

    # component 2
    prod_nl = {(0, 0, 0): Fraction(1)}
    for c in non_leaves:
        f1 = differential_monomials(c, n, nu_num, nu_den, include_time_derivatives)[0]
        prod_nl = _poly_mul(prod_nl, f1)
        if not prod_nl:
            break
    comp2 = {}
    if prod_nl:
        j_max = ell if include_time_derivatives else 0
        for j in range(j_max + 1):
            k = m - j
            if k > n:
                continue
            cf = math.comb(ell, j) * _falling(Fraction(n), k) * _falling(nu, j)
            if cf == 0:
                continue
            base = {(n - k, ell - j, nu - j): -cf}
            for key, val in _poly_mul(base, prod_nl).items():
                comp2[key] = comp2.get(key, Fraction(0)) + val
        comp2 = {kk: vv for kk, vv in comp2.items() if vv != 0}

    return comp1, comp2, {}


def _nu_as_fraction(nu) -> Fraction:
    f = Fraction(nu).limit_denominator(10**6)
    if abs(float(f) - float(nu)) > 1e-12:
        raise ValueError(f"nu = {nu} is not (close to) rational; exact differentials unavailable")
    return f


def elementary_differential(problem: EmdenFowlerProblem, tree: RootedTree, state,
                            include_time_derivatives: bool = True) -> np.ndarray:
    """Evaluate the elementary differential of ``tree`` at a state."""
    nu = _nu_as_fraction(problem.nu)
    polys = differential_monomials(tree, problem.n, nu.numerator, nu.denominator,
                                   include_time_derivatives)
    y1, y2, y3 = float(state[0]), float(state[1]), float(state[2])
    out = np.zeros(3)
    for comp, poly in enumerate(polys):
        acc = 0.0
        for (e1, e2, e3), cf in poly.items():
            if e3 and y3 <= 0:
                if y3 < 0 and Fraction(e3).denominator != 1:
                    raise DomainError(f"t^{e3} undefined at t = {y3}")
                term3 = 0.0 if e3 > 0 else float("inf")
            else:
                term3 = y3 ** float(e3)
            acc += float(cf) * (y1**e1) * (y2**e2) * term3
        out[comp] = acc
    return out


def compile_differentials(trees, n: int, nu) -> tuple:
    """Flatten the differentials of several trees into kernel-ready arrays.

    Requires integer ``nu`` (all exponents must be integral).  Returns
    (coef, e1, e2, e3, ptr) with three monomial runs per tree.
    """
    nu_frac = _nu_as_fraction(nu)
    if nu_frac.denominator != 1 or nu_frac < 0:
        raise ValueError("the compiled sensitivity kernel needs a nonnegative integer nu")
    coef, e1, e2, e3, ptr = [], [], [], [], [0]
    for tree in trees:
        polys = differential_monomials(tree, n, nu_frac.numerator, 1)
        for poly in polys:
            for (a, b, c), cf in sorted(poly.items()):
                coef.append(float(cf))
                e1.append(a)
                e2.append(b)
                e3.append(int(c))
            ptr.append(len(coef))
    return (
        np.array(coef, dtype=np.float64),
        np.array(e1, dtype=np.int64),
        np.array(e2, dtype=np.int64),
        np.array(e3, dtype=np.int64),
        np.array(ptr, dtype=np.int64),
    )


# --- the reference oscillation w_n -------------------------------------------


@dataclass(frozen=True)
class ReferenceOscillation:
    """One period of w_n with Hermite-interpolated evaluators.

    ``w_nodes``/``wp_nodes`` sample (w, w') on a uniform grid over one period
    ``[0, 4K]``.  ``chi`` is the mean of w^2 over the period.  ``c1``/``c2``
    are the fitted action-angle parameters of a particular trajectory; they
    default to (1, 0) until :func:`fit_action_angle` supplies them.
    """

    n: int
    period4K: float
    chi: float
    w_nodes: np.ndarray
    wp_nodes: np.ndarray
    max_abs_w: float
    c1: float = 1.0
    c2: float = 0.0

    def with_fit(self, c1: float, c2: float) -> "ReferenceOscillation":
        return replace(self, c1=c1, c2=c2)

    def _locate(self, x):
        x = np.asarray(x, dtype=float)
        res = self.w_nodes.shape[0] - 1
        hh = self.period4K / res
        u = np.mod(x, self.period4K)
        i = np.minimum((u / hh).astype(np.int64), res - 1)
        th = u / hh - i
        return i, th, hh

    def w(self, x):
        """w_n at phase x (periodic)."""
        i, th, hh = self._locate(x)
        p0, p1 = self.w_nodes[i], self.w_nodes[i + 1]
        m0, m1 = hh * self.wp_nodes[i], hh * self.wp_nodes[i + 1]
        return _hermite(th, p0, m0, p1, m1)

    def wp(self, x):
        """w_n' at phase x (periodic)."""
        i, th, hh = self._locate(x)
        p0, p1 = self.wp_nodes[i], self.wp_nodes[i + 1]
        m0 = -hh * self.w_nodes[i] ** self.n
        m1 = -hh * self.w_nodes[i + 1] ** self.n
        return _hermite(th, p0, m0, p1, m1)

    def phase(self, t, gamma=None):
        """c1 * t^(1+2*gamma) + c2 for the fitted parameters."""
        if gamma is None:
            raise ValueError("pass the problem gamma explicitly")
        return self.c1 * np.asarray(t, dtype=float) ** (1.0 + 2.0 * gamma) + self.c2


def _hermite(th, p0, m0, p1, m1):
    t2 = th * th
    t3 = t2 * th
    return (
        (2 * t3 - 3 * t2 + 1) * p0
        + (t3 - 2 * t2 + th) * m0
        + (-2 * t3 + 3 * t2) * p1
        + (t3 - t2) * m1
    )


def _plane_oscillator(n) -> OdeSystem:
    def rhs(y):
        return np.array([y[1], -(y[0] ** n)])

    return OdeSystem(
        dimension=2,
        rhs=rhs,
        jacobian=lambda y: np.array([[0.0, 1.0], [-n * y[0] ** (n - 1), 0.0]]),
        name=f"u''=-u^{n}",
        fast=FastOde(RHS_PLANE_OSC, np.array([float(n)])),
    )


def wn_build(n: int, resolution: int = 2**14, drift_guard: float = 1e-9) -> ReferenceOscillation:
    """Tabulate one period of w_n: u'' + u^n = 0, u(0) = 0, u'(0) = 1.

    The period is located by bracketing the second upward zero crossing of u
    and refining on the Hermite interpolant; the table is then re-integrated
    at exactly ``resolution`` steps per period.  An energy-residual guard
    rejects insufficient resolution.
    """
    if n < 3 or n % 2 == 0:
        raise ValueError("n must be an odd integer >= 3")
    ode = _plane_oscillator(n)
    rk4 = get_method("rk4")

    # bracket the period: integrate well past the a-priori bound and look for
    # the first upward zero crossing after leaving the initial one
    h0 = 1e-3
    probe = integrate(rk4, ode, [0.0, 1.0], 0.0, h0, 16.0)
    u, up = probe.states[:, 0], probe.states[:, 1]
    cross = np.where((u[:-1] < 0.0) & (u[1:] >= 0.0) & (up[1:] > 0.0))[0]
    if cross.size == 0:
        raise ResolutionError("failed to bracket the period of w_n")
    k = cross[0]
    # Hermite root refinement inside the bracketing step
    from scipy.optimize import brentq

    period = brentq(
        lambda th: _hermite(th, u[k], h0 * up[k], u[k + 1], h0 * up[k + 1]),
        0.0,
        1.0,
        xtol=1e-15,
    )
    period = (k + period) * h0

    hh = period / resolution
    table = integrate(rk4, ode, [0.0, 1.0], 0.0, hh, period + 0.5 * hh)
    w = table.states[: resolution + 1, 0].copy()
    wp = table.states[: resolution + 1, 1].copy()

    energy_residual = np.abs(wp**2 + 2.0 * w ** (n + 1) / (n + 1) - 1.0)
    if energy_residual.max() > drift_guard:
        raise ResolutionError(
            f"energy drift {energy_residual.max():.2e} exceeds {drift_guard:.0e}; "
            "increase the resolution"
        )

    chi = float(np.mean(w[:-1] ** 2))
    return ReferenceOscillation(
        n=n,
        period4K=float(period),
        chi=chi,
        w_nodes=w,
        wp_nodes=wp,
        max_abs_w=float(np.max(np.abs(w))),
    )


# --- action-angle fit and the parameter-to-solution map ----------------------


def _plane_coordinates(problem: EmdenFowlerProblem, traj: Trajectory):
    """Transform trajectory samples to the (u, u') coordinates in which the
    oscillation has frozen amplitude; drops samples with t < 1."""
    g = problem.gamma
    B = problem.amplitude_prefactor
    t = traj.times
    keep = t >= 1.0
    t = t[keep]
    y1 = traj.states[keep, 0]
    y2 = traj.states[keep, 1]
    s = t ** (1.0 + 2.0 * g)
    u = y1 * t**g / B
    up = (y2 * t**g + g * t ** (g - 1.0) * y1) / (B * (1.0 + 2.0 * g) * t ** (2.0 * g))
    return s, u, up


def fit_action_angle(
    problem: EmdenFowlerProblem,
    traj: Trajectory,
    ref: ReferenceOscillation,
    last_periods: int = 3,
    fit_fraction: float = 0.6,
) -> tuple[float, float]:
    """Fit the action-angle parameters (c1, c2) of a trajectory.

    The amplitude comes from the (adiabatically invariant) plane energy
    E = u^(n+1)/(n+1) + u'^2/2 averaged over the last few periods:
    c1 = (2E)^((n-1)/(2(n+1))).  The phase is pinned by regressing the upward
    zero crossings of u against multiples of the period, which also sharpens
    c1 far beyond what the energy average can deliver (the regression sees
    hundreds of oscillations, the energy only the local amplitude).
    """
    n = problem.n
    s, u, up = _plane_coordinates(problem, traj)
    if s.size < 16:
        raise FitError("trajectory too short to fit (need samples with t >= 1)")

    lo = int(s.size * (1.0 - fit_fraction))
    su, uu, _ = s[lo:], u[lo:], up[lo:]
    crossings = np.where((uu[:-1] < 0.0) & (uu[1:] >= 0.0))[0]
    if crossings.size < 4:
        raise FitError("trajectory is not oscillatory enough to fit a phase")
    s_star = su[crossings] - uu[crossings] * (su[crossings + 1] - su[crossings]) / (
        uu[crossings + 1] - uu[crossings]
    )
    kk = np.arange(s_star.size)
    A = np.vstack([s_star, np.ones_like(s_star)]).T
    sol, *_ = np.linalg.lstsq(A, ref.period4K * kk, rcond=None)
    c1 = float(sol[0])
    if c1 <= 0:
        raise FitError("phase regression produced a nonpositive frequency")
    c2 = float(np.mod(sol[1], ref.period4K))

    # energy-based amplitude over the last few periods, as a consistency check
    span = last_periods * ref.period4K / c1
    tail = s >= s[-1] - span
    E = np.mean(u[tail] ** (n + 1) / (n + 1) + 0.5 * up[tail] ** 2)
    c1_energy = (2.0 * E) ** ((n - 1) / (2.0 * (n + 1)))
    if abs(c1_energy / c1 - 1.0) > 0.05:
        raise FitError(
            f"phase ({c1:.6g}) and energy ({c1_energy:.6g}) amplitudes disagree; "
            "trajectory may not have reached the adiabatic regime"
        )
    return c1, c2


T_MIN = 1.0


def xt_map(problem: EmdenFowlerProblem, ref: ReferenceOscillation, t: float):
    """The map from (c1, c2) to the solution 2-vector at time t, with its
    Jacobian and inverse Jacobian.  Uses the (c1, c2) stored on ``ref``."""
    if t < T_MIN:
        raise DomainError(f"t = {t} below t_min = {T_MIN}")
    g = problem.gamma
    n = problem.n
    q = 2.0 / (n - 1)
    B1 = (1.0 + 2.0 * g) ** q
    B2 = (1.0 + 2.0 * g) ** (1.0 + q)
    c1, c2 = ref.c1, ref.c2
    tau = c1 * t ** (1.0 + 2.0 * g) + c2
    w = float(ref.w(tau))
    wp = float(ref.wp(tau))
    wpp = -(w**n)

    x1 = B1 * c1**q * t**-g * w
    x2 = B2 * c1 ** (1.0 + q) * t**g * wp
    val = np.array([x1, x2])

    dtau_dc1 = t ** (1.0 + 2.0 * g)
    jac = np.array(
        [
            [
                B1 * t**-g * (q * c1 ** (q - 1.0) * w + c1**q * wp * dtau_dc1),
                B1 * c1**q * t**-g * wp,
            ],
            [
                B2 * t**g * ((1.0 + q) * c1**q * wp + c1 ** (1.0 + q) * wpp * dtau_dc1),
                B2 * c1 ** (1.0 + q) * t**g * wpp,
            ],
        ]
    )
    det = jac[0, 0] * jac[1, 1] - jac[0, 1] * jac[1, 0]
    if abs(det) < 1e-300:
        raise DomainError(f"parameter-space map is singular at t = {t}")
    inv = np.array([[jac[1, 1], -jac[0, 1]], [-jac[1, 0], jac[0, 0]]]) / det
    return val, jac, inv


def solution_amplitude(problem: EmdenFowlerProblem, ref: ReferenceOscillation, t):
    """Envelope of the first solution component at large t."""
    q = 2.0 / (problem.n - 1)
    return (
        problem.amplitude_prefactor
        * ref.c1**q
        * np.asarray(t, dtype=float) ** -problem.gamma
        * ref.max_abs_w
    )


# --- linear oscillators ------------------------------------------------------


@dataclass
class LinearOscillatorProblem:
    """y'' + g(t) y = 0 with Liouville-Green data.

    ``s0`` parametrizes the asymptotic solution Lambda(t) R(theta(t)) s0.
    ``theta`` must be the integral of sqrt(g) from 0 (or a fixed reference
    point).  ``g_power_integral(p, a, b)`` integrates g^p over [a, b]; the
    default uses adaptive quadrature.
    """

    g: Callable[[float], float]
    theta: Callable[[float], float]
    y0: float
    y0p: float
    s0: np.ndarray = field(default_factory=lambda: np.array([1.0, 0.0]))
    t_min: float = 1.0
    name: str = "linosc"
    g_power_integral: Optional[Callable[[float, float, float], float]] = None

    def __post_init__(self):
        if self.g_power_integral is None:
            from scipy.integrate import quad

            def gp(p, a, b):
                val, _ = quad(lambda s: self.g(s) ** p, a, b, limit=400)
                return val

            self.g_power_integral = gp


def make_airy_problem(y0: float, y0p: float, s0=None) -> LinearOscillatorProblem:
    """y'' + t y = 0; theta(t) = (2/3) t^(3/2), power integrals closed form."""

    def gpi(p, a, b):
        return (b ** (p + 1.0) - a ** (p + 1.0)) / (p + 1.0)

    return LinearOscillatorProblem(
        g=lambda t: t,
        theta=lambda t: (2.0 / 3.0) * t**1.5,
        y0=y0,
        y0p=y0p,
        s0=np.array([1.0, 0.0]) if s0 is None else np.asarray(s0, dtype=float),
        name="airy",
        g_power_integral=gpi,
    )


def _rotation(theta):
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, s], [-s, c]])


def liouville_green(problem: LinearOscillatorProblem, t: float):
    """Asymptotic solution pair (y, yR) at time t.

    ``y = Lambda R(theta) s0`` and ``yR = Lambda R(theta + pi/2) s0`` is the
    companion solution with opposite phase; Lambda = diag(g^-1/4, g^1/4).
    """
    gval = problem.g(t)
    if gval <= 0:
        raise DomainError(f"g({t}) = {gval} <= 0; oscillatory form invalid")
    lam = np.array([gval**-0.25, gval**0.25])
    th = problem.theta(t)
    y = lam * (_rotation(th) @ problem.s0)
    yR = lam * (_rotation(th + 0.5 * np.pi) @ problem.s0)
    return y, yR


def lg_parameters(problem: LinearOscillatorProblem, t: float, state) -> np.ndarray:
    """Pull a phase-space state back to the Liouville-Green parameter plane."""
    gval = problem.g(t)
    if gval <= 0:
        raise DomainError(f"g({t}) = {gval} <= 0")
    lam_inv = np.array([gval**0.25, gval**-0.25])
    return _rotation(-problem.theta(t)) @ (lam_inv * np.asarray(state, dtype=float))


# --- problem-spec strings (CLI) ----------------------------------------------


def parse_problem_spec(spec: str):
    """Parse ``emden:n=3,nu=1`` / ``airy`` into a problem object."""
    spec = spec.strip()
    if spec == "airy":
        return make_airy_problem(1.0, 0.0)
    if spec.startswith("emden"):
        kwargs = {}
        if ":" in spec:
            for item in spec.split(":", 1)[1].split(","):
                if not item:
                    continue
                key, _, val = item.partition("=")
                key = key.strip()
                if key == "n":
                    kwargs["n"] = int(val)
                elif key == "nu":
                    kwargs["nu"] = float(val)
                elif key in ("y0", "y0p"):
                    kwargs[key] = float(val)
                else:
                    raise ValueError(f"unknown emden parameter {key!r}")
        return EmdenFowlerProblem(**kwargs)
    raise ValueError(f"unknown problem spec {spec!r} (expected 'emden:...' or 'airy')")
