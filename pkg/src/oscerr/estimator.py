"""Global-error estimation: elementary integrals, the error series, the
closed-form estimates for the cubic power-law oscillator, and the
measured-vs-estimated comparison harness.

The error of a method of order p with modified-field coefficients b admits

    E_h(t) = sum over trees of order >= 2 of
             h^(rho-1) * b(tau) * alpha(tau)/rho(tau)! * I_tau(t)

up to O(h^(2p)), where the elementary integral I_tau propagates the
elementary differential of tau through the variational flow,

    I_tau(t) = integral of DPhi_s^t F(tau)(y(s)) ds.

Rather than storing dense variational flows, each I_tau is obtained from the
equivalent initial-value problem I' = J(y) I + F(tau)(y), I(t0) = 0,
integrated alongside the trajectory (the variational flow satisfies exactly
this linear equation).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Mapping

import numpy as np

from . import _kernels
from .bseries import CoefficientMap, CoverageError
from .oscillators import (
    EmdenFowlerProblem,
    LinearOscillatorProblem,
    ReferenceOscillation,
    compile_differentials,
    liouville_green,
    xt_map,
)
from .rk import ButcherTableau, OdeSystem, Trajectory, get_method
from .trees import RootedTree, chain, trees_upto

__all__ = [
    "ElementaryIntegralSample",
    "ErrorMeasurement",
    "EnvelopeFit",
    "EstimateTerm",
    "ErrorEstimate",
    "elementary_integrals_numeric",
    "elementary_integral_numeric",
    "error_series",
    "closed_form_error_estimate",
    "closed_form_estimate_ef",
    "closed_form_envelope_ef",
    "CLOSED_FORM_COEFFS",
    "linosc_estimate",
    "reference_trajectory",
    "measure_global_error",
    "parameter_space_error",
    "peak_envelope",
    "envelope_fit",
    "detect_breakdown",
]


@dataclass(frozen=True)
class ElementaryIntegralSample:
    """Samples of one elementary integral along a trajectory."""

    tree: RootedTree
    times: np.ndarray
    values: np.ndarray  # (n_samples, d)


def elementary_integrals_numeric(
    system: OdeSystem,
    trees: Iterable[RootedTree],
    n: int,
    nu,
    y0,
    t0: float,
    t_end: float,
    h_fine: float,
    sample_dt: float,
    tableau: ButcherTableau | None = None,
) -> tuple[Trajectory, dict[RootedTree, ElementaryIntegralSample]]:
    """Integrate a batch of elementary integrals alongside the trajectory.

    All trees share the Jacobian and the trajectory, so the whole batch is one
    stacked linear system; the driving fields are the compiled monomial forms
    of the elementary differentials of the power-law oscillator family.
    """
    trees = list(trees)
    if tableau is None:
        tableau = get_method("rk4")
    y0 = np.asarray(y0, dtype=float)
    stride = _stride_for(sample_dt, h_fine)
    n_steps = int(np.floor((t_end - t0) / h_fine + 1e-9))
    n_samples = n_steps // stride

    coef, e1, e2, e3, ptr = compile_differentials(trees, n, nu)
    out_y = np.empty((n_samples + 1, 3))
    out_I = np.empty((n_samples + 1, 3, len(trees)))
    wrote = _kernels.elint_kernel(
        tableau.A_f,
        tableau.b_f,
        tableau.c_f,
        n,
        int(nu),
        y0,
        h_fine,
        n_steps,
        stride,
        coef,
        e1,
        e2,
        e3,
        ptr,
        out_y,
        out_I,
    )
    if wrote < 0:
        from .rk import DivergenceError

        raise DivergenceError(f"sensitivity integration diverged at step {-wrote}",
                              step_index=-wrote)
    times = t0 + h_fine * stride * np.arange(wrote + 1)
    traj = Trajectory(t0, h_fine, stride, out_y[: wrote + 1])
    samples = {
        tree: ElementaryIntegralSample(tree, times, out_I[: wrote + 1, :, j])
        for j, tree in enumerate(trees)
    }
    return traj, samples


def elementary_integral_numeric(
    problem: EmdenFowlerProblem,
    tree: RootedTree,
    y0,
    t0: float,
    t_end: float,
    h_fine: float,
    sample_dt: float,
) -> ElementaryIntegralSample:
    """Single-tree convenience wrapper around the batch integrator."""
    from .oscillators import ef_system

    _, samples = elementary_integrals_numeric(
        ef_system(problem), [tree], problem.n, problem.nu, y0, t0, t_end, h_fine, sample_dt
    )
    return samples[tree]


def error_series(
    b: CoefficientMap,
    integrals: Mapping[RootedTree, ElementaryIntegralSample],
    h: float,
    truncation_order: int,
) -> tuple[np.ndarray, np.ndarray]:
    """The finite error series on the sample grid of the integrals.

    Sums h^(rho-1) b(tau) alpha(tau)/rho! I_tau over all trees with
    2 <= rho <= truncation_order; no remainder term is modelled.
    """
    needed = [t for t in trees_upto(truncation_order) if t.order >= 2]
    missing = [t for t in needed if t not in integrals]
    if missing:
        raise CoverageError(f"missing elementary integrals for trees {[str(t) for t in missing]}")
    times = None
    total = None
    for tree in needed:
        sample = integrals[tree]
        if times is None:
            times = sample.times
            total = np.zeros_like(sample.values)
        elif sample.times.shape != times.shape or not np.allclose(sample.times, times):
            raise ValueError("elementary integrals must share one sample grid")
        weight = float(Fraction(b[tree] * tree.alpha, math.factorial(tree.order)))
        if weight:
            total += (h ** (tree.order - 1) * weight) * sample.values
    return times, total


# --- closed-form estimates for y'' + t y^3 = 0 --------------------------------

_F = Fraction

# Per method: list of (h_power, (coef1, c1_pow, chi_pow, t_exp), (coef2, ...)).
# Component 1 oscillates like w'(phase), component 2 like w(phase)^3.
#
# The rational coefficients are stated in the classical elliptic-function
# normalization, where the reference shape is the literal sd(. | 1/2) of
# period 4K(1/2).  The energy-normalized oscillation w built by wn_build is
# sd rescaled by lam = 2^(1/4) in argument and 1/lam in amplitude, so the
# conversions below apply: c1_sd = lam * c1, chi_sd = lam^2 * chi,
# sd'(phase_sd) = w'(phase_w), sd(phase_sd)^3 = lam^3 * w(phase_w)^3.
_SD_STRETCH = 2.0**0.25

CLOSED_FORM_COEFFS = {
    "runge2": [
        (2, (_F(4, 15), 4, 1, _F(11, 6)), (_F(-8, 45), 5, 1, _F(13, 6))),
        (3, (_F(256, 6237), 6, 0, _F(7, 2)), (_F(-512, 18711), 7, 0, _F(23, 6))),
    ],
    "heun3": [
        (3, (_F(-512, 35721), 6, 0, _F(7, 2)), (_F(1024, 107163), 7, 0, _F(23, 6))),
        (4, (_F(50208, 229635), 6, 0, _F(5, 2)), (_F(-60416, 688905), 7, 0, _F(17, 6))),
        (5, (_F(557056, 34543665), 8, 1, _F(25, 6)), (_F(-1114112, 103630995), 9, 1, _F(9, 2))),
    ],
    "tuned3": [
        (4, (_F(-5008, 25515), 6, 0, _F(5, 2)), (_F(10016, 76545), 7, 0, _F(17, 6))),
        (5, (_F(-78848, 1279395), 8, 1, _F(25, 6)), (_F(157696, 3838185), 9, 1, _F(9, 2))),
    ],
}


def _require_cubic(problem: EmdenFowlerProblem):
    if problem.n != 3 or problem.nu != 1.0:
        raise ValueError("closed-form estimates are built in only for n = 3, nu = 1")


@dataclass(frozen=True)
class EstimateTerm:
    """One power of h in an error estimate.

    ``amplitudes(t)`` returns the smooth signed per-component amplitudes (an
    (n, 2) array); ``phase_shape`` names the oscillation carried by each
    component: 'sd_prime'/'sd_cubed' for the cubic oscillator forms,
    'generic' when no closed shape is attached.
    """

    h_power: int
    amplitudes: "object"
    phase_shape: tuple[str, str]


@dataclass(frozen=True)
class ErrorEstimate:
    """A priori error estimate as a sum of h-power terms with oscillatory
    shapes; valid for t >= valid_from."""

    terms: tuple[EstimateTerm, ...]
    problem: EmdenFowlerProblem
    ref: ReferenceOscillation
    valid_from: float = 1.0

    def _shapes(self, t):
        phase = self.ref.c1 * t ** (1.0 + 2.0 * self.problem.gamma) + self.ref.c2
        return {
            "sd_prime": self.ref.wp(phase),
            "sd_cubed": _SD_STRETCH**3 * self.ref.w(phase) ** 3,
        }

    def evaluate(self, h: float, times, leading_only: bool = False):
        """Signed two-component estimate at the given times (phase included)."""
        t = np.asarray(times, dtype=float)
        shapes = self._shapes(t)
        out = np.zeros(t.shape + (2,))
        for term in self._selected(leading_only):
            amp = term.amplitudes(t)
            for comp in (0, 1):
                out[..., comp] += h**term.h_power * amp[..., comp] * shapes[term.phase_shape[comp]]
        return out

    def envelope(self, h: float, times, leading_only: bool = False):
        """Peak amplitude of the estimate, per component."""
        t = np.asarray(times, dtype=float)
        peak = {
            "sd_prime": 1.0,
            "sd_cubed": (_SD_STRETCH * self.ref.max_abs_w) ** 3,
        }
        acc = np.zeros(t.shape + (2,))
        for term in self._selected(leading_only):
            amp = term.amplitudes(t)
            for comp in (0, 1):
                acc[..., comp] += h**term.h_power * amp[..., comp] * peak[term.phase_shape[comp]]
        return np.abs(acc)

    def _selected(self, leading_only):
        return self.terms[:1] if leading_only else self.terms


def closed_form_error_estimate(
    method_id: str,
    problem: EmdenFowlerProblem,
    ref: ReferenceOscillation,
) -> ErrorEstimate:
    """The built-in closed-form estimate of a method on y'' + t y^3 = 0."""
    _require_cubic(problem)
    if method_id not in CLOSED_FORM_COEFFS:
        raise ValueError(f"no closed-form estimate for {method_id!r}; "
                         f"known: {sorted(CLOSED_FORM_COEFFS)}")
    root2 = math.sqrt(2.0)
    c1_sd = _SD_STRETCH * ref.c1
    chi_sd = _SD_STRETCH**2 * ref.chi
    terms = []
    for h_power, term1, term2 in CLOSED_FORM_COEFFS[method_id]:
        consts = []
        exps = []
        for coef, c1_pow, chi_pow, t_exp in (term1, term2):
            consts.append(float(coef) * root2 * c1_sd**c1_pow * chi_sd**chi_pow)
            exps.append(float(t_exp))

        def amplitudes(t, consts=tuple(consts), exps=tuple(exps)):
            t = np.asarray(t, dtype=float)
            return np.stack([c * t**e for c, e in zip(consts, exps)], axis=-1)

        terms.append(EstimateTerm(h_power, amplitudes, ("sd_prime", "sd_cubed")))
    return ErrorEstimate(tuple(terms), problem, ref)


def closed_form_estimate_ef(
    method_id: str,
    problem: EmdenFowlerProblem,
    ref: ReferenceOscillation,
    h: float,
    times,
    leading_only: bool = False,
):
    """Signed two-component estimate at the given times (phase included)."""
    return closed_form_error_estimate(method_id, problem, ref).evaluate(h, times, leading_only)


def closed_form_envelope_ef(
    method_id: str,
    problem: EmdenFowlerProblem,
    ref: ReferenceOscillation,
    h: float,
    times,
    leading_only: bool = False,
):
    """Envelope (peak amplitude) of the estimate, per component."""
    return closed_form_error_estimate(method_id, problem, ref).envelope(h, times, leading_only)


# --- linear oscillators --------------------------------------------------------


def linosc_estimate(
    problem: LinearOscillatorProblem,
    b: CoefficientMap,
    p: int,
    h: float,
    times,
    t0: float = 0.0,
):
    """Error estimate for y'' + g(t) y = 0 from the tall-tree series.

    Two bracketed sums: even powers h^(2r), p <= 2r < 2p, weighted by
    (-1)^r b(chain(2r+1))/(2r+1)! times the integral of g^(r+1/2), carried by
    the opposite-phase solution yR; odd powers h^(2r+1) weighted by
    (-1)^(r+1) b(chain(2r+2))/(2r+2)! times the integral of g^(r+1), carried
    by the solution y itself.
    """
    times = np.atleast_1d(np.asarray(times, dtype=float))
    out = np.empty((times.size, 2))
    even_terms = []
    odd_terms = []
    for r in range(0, p + 1):
        if p <= 2 * r < 2 * p:
            w = (-1.0) ** r * float(b[chain(2 * r + 1)]) / math.factorial(2 * r + 1)
            even_terms.append((r, w))
        if p <= 2 * r + 1 < 2 * p:
            w = (-1.0) ** (r + 1) * float(b[chain(2 * r + 2)]) / math.factorial(2 * r + 2)
            odd_terms.append((r, w))
    for i, t in enumerate(times):
        y, yR = liouville_green(problem, t)
        acc = np.zeros(2)
        for r, w in even_terms:
            if w:
                acc += w * h ** (2 * r) * problem.g_power_integral(r + 0.5, t0, t) * yR
        for r, w in odd_terms:
            if w:
                acc += w * h ** (2 * r + 1) * problem.g_power_integral(r + 1.0, t0, t) * y
        out[i] = acc
    return out if out.shape[0] > 1 else out[0]


# --- measurement ----------------------------------------------------------------


@dataclass
class ErrorMeasurement:
    """Pointwise difference between a method run and a reference run."""

    times: np.ndarray
    errors: np.ndarray  # (n, d): method minus reference
    method_states: np.ndarray
    reference_states: np.ndarray


def _stride_for(sample_dt, h):
    stride = int(round(sample_dt / h))
    if stride < 1 or abs(stride * h - sample_dt) > 1e-9 * max(1.0, abs(sample_dt)):
        raise ValueError(f"sample_dt = {sample_dt} is not an integer multiple of h = {h}")
    return stride


def reference_trajectory(
    ode: OdeSystem,
    y0,
    t0: float,
    t_end: float,
    sample_dt: float,
    reference: ButcherTableau | None = None,
    h_ref: float = 1e-4,
) -> Trajectory:
    """Fine-step reference run, reusable across several method comparisons."""
    from .rk import integrate

    if reference is None:
        reference = get_method("rk4")
    return integrate(reference, ode, y0, t0, h_ref, t_end, stride=_stride_for(sample_dt, h_ref))


def measure_global_error(
    tableau: ButcherTableau,
    ode: OdeSystem,
    y0,
    t0: float,
    h: float,
    t_end: float,
    sample_dt: float,
    reference: ButcherTableau | None = None,
    h_ref: float = 1e-4,
    ref_traj: Trajectory | None = None,
) -> ErrorMeasurement:
    """Run the method and a fine-step reference on one grid and subtract.

    The reference defaults to the classical fourth-order method at
    h_ref = 1e-4; the reference step must be at most h/10.  A precomputed
    reference trajectory on the same sample grid may be passed to amortize
    the fine run across several methods.
    """
    from .rk import integrate

    if ref_traj is not None:
        h_ref = ref_traj.h
    if reference is None:
        reference = get_method("rk4")
    # ratio 5 is the coarsest pairing the standard protocol uses
    # (h = 1/2000 against the 1e-4 reference)
    if not (h_ref <= h / 5 or (tableau is reference and h_ref == h)):
        raise ValueError(f"reference step {h_ref} must be <= h/5 = {h / 5}")
    traj_m = integrate(tableau, ode, y0, t0, h, t_end, stride=_stride_for(sample_dt, h))
    if ref_traj is None:
        ref_traj = reference_trajectory(ode, y0, t0, t_end, sample_dt, reference, h_ref)
    elif abs(ref_traj.h * ref_traj.stride - sample_dt) > 1e-9 * max(1.0, sample_dt):
        raise ValueError("precomputed reference does not live on the requested sample grid")
    nsh = min(len(traj_m), len(ref_traj))
    errors = traj_m.states[:nsh] - ref_traj.states[:nsh]
    return ErrorMeasurement(
        times=traj_m.times[:nsh],
        errors=errors,
        method_states=traj_m.states[:nsh],
        reference_states=ref_traj.states[:nsh],
    )


def parameter_space_error(
    problem: EmdenFowlerProblem,
    ref: ReferenceOscillation,
    times,
    errors,
    t_min: float = 1.0,
):
    """Pull phase-space errors back to (action, angle) errors via the inverse
    Jacobian of the parameter-to-solution map.  Samples with t < t_min or a
    singular map are returned as NaN."""
    times = np.asarray(times, dtype=float)
    errors = np.asarray(errors, dtype=float)
    out = np.full((times.size, 2), np.nan)
    for i, t in enumerate(times):
        if t < t_min:
            continue
        try:
            _, _, inv = xt_map(problem, ref, t)
        except Exception:
            continue
        out[i] = inv @ errors[i, :2]
    return out


# --- envelopes -------------------------------------------------------------------


@dataclass(frozen=True)
class EnvelopeFit:
    amplitude: float
    exponent: float
    n_peaks: int
    window: tuple[float, float]


def peak_envelope(times, values):
    """Local maxima of |values| with parabolic refinement.

    Returns (peak_times, peak_heights); endpoints are never peaks.
    """
    t = np.asarray(times, dtype=float)
    v = np.abs(np.asarray(values, dtype=float))
    core = (v[1:-1] >= v[:-2]) & (v[1:-1] >= v[2:])
    idx = np.where(core)[0] + 1
    # drop flat-plateau duplicates
    idx = idx[(v[idx] > 0)]
    if idx.size == 0:
        return np.empty(0), np.empty(0)
    vm, v0, vp = v[idx - 1], v[idx], v[idx + 1]
    denom = vm - 2 * v0 + vp
    shift = np.where(np.abs(denom) > 1e-300, 0.5 * (vm - vp) / denom, 0.0)
    shift = np.clip(shift, -0.5, 0.5)
    heights = v0 - 0.25 * (vm - vp) * shift
    dt = np.where(idx + 1 < t.size, t[np.minimum(idx + 1, t.size - 1)] - t[idx], 0.0)
    peak_t = t[idx] + shift * dt
    return peak_t, heights


def envelope_fit(times, values, window, min_peaks: int = 10) -> EnvelopeFit:
    """Least-squares power law through the oscillation peaks in a window."""
    from .oscillators import FitError

    pt, ph = peak_envelope(times, values)
    keep = (pt >= window[0]) & (pt <= window[1]) & (ph > 0)
    pt, ph = pt[keep], ph[keep]
    if pt.size < min_peaks:
        raise FitError(f"need at least {min_peaks} peaks in {window}, found {pt.size}")
    A = np.vstack([np.log(pt), np.ones_like(pt)]).T
    sol, *_ = np.linalg.lstsq(A, np.log(ph), rcond=None)
    return EnvelopeFit(
        amplitude=float(np.exp(sol[1])),
        exponent=float(sol[0]),
        n_peaks=int(pt.size),
        window=(float(window[0]), float(window[1])),
    )


def detect_breakdown(peak_times, peak_heights, amplitude_fn, threshold: float = 1.0):
    """First peak time at which the error envelope reaches ``threshold`` times
    the local solution amplitude, or None."""
    for t, pk in zip(peak_times, peak_heights):
        if pk >= threshold * float(amplitude_fn(t)):
            return float(t)
    return None
