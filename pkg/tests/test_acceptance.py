"""Acceptance suite.

One test per acceptance criterion, each printing a single summary line
(visible with ``pytest -v -s tests/test_acceptance.py``).  Every tolerance is
fixed here; the heavy shared artifacts (reference trajectories, batched
sensitivity integrals) come from the session fixtures in conftest.py.
"""

import math
import time
from fractions import Fraction

import numpy as np
import pytest
import sympy as sp
from scipy.special import airy as airy_fn

from helpers import random_polynomial_field, symbolic_bseries, truncate_h
from oscerr.bseries import CoefficientMap, lie_derivative, modified_equation_coeffs, rk_bseries
from oscerr.elliptic import w3_period_agm, w3_sd_agm
from oscerr.estimator import (
    closed_form_envelope_ef,
    detect_breakdown,
    envelope_fit,
    measure_global_error,
    peak_envelope,
)
from oscerr.oscillators import airy_system, make_airy_problem, solution_amplitude
from oscerr.rk import design_tuned_3stage, get_method, tuned_condition_value
from oscerr.trees import (
    BLT2,
    BLT3,
    BLT4,
    BUSHY3,
    BUSHY4,
    LEAF,
    TAU4B,
    TAU4C,
    trees_upto,
)

F = Fraction


def _report(num, ok, detail):
    print(f"CRITERION {num:2d} [{'PASS' if ok else 'FAIL'}] {detail}")


def test_criterion_01_modified_equation_exact():
    """Exact modified-field coefficients of the second-order Runge method."""
    t0 = time.perf_counter()
    b = modified_equation_coeffs(rk_bseries(get_method("runge2"), 4))
    expected = {
        LEAF: F(1), BLT2: F(0), BUSHY3: F(-1, 4), BLT3: F(-1),
        BUSHY4: F(0), TAU4B: F(0), BLT4: F(3), TAU4C: F(3, 2),
    }
    ok = all(b[t] == v for t, v in expected.items())
    elapsed = time.perf_counter() - t0
    _report(1, ok and elapsed < 1.0, f"rational equality on 8 trees, {elapsed:.3f}s")
    assert ok
    assert elapsed < 1.0


def test_criterion_02_order_conditions_exact():
    """a = 1 below the order and the modified field vanishes there."""
    t0 = time.perf_counter()
    ok = True
    for name, p in (("runge2", 2), ("heun3", 3), ("tuned3", 3), ("rk4", 4)):
        a = rk_bseries(get_method(name), p)
        ok &= all(a[t] == 1 for t in trees_upto(p))
        b = modified_equation_coeffs(a)
        ok &= all(b[t] == 0 for t in trees_upto(p) if t.order >= 2)
    elapsed = time.perf_counter() - t0
    _report(2, ok and elapsed < 1.0, f"four methods, {elapsed:.3f}s")
    assert ok
    assert elapsed < 1.0


def test_criterion_03_tuned_condition():
    """The order-4 combination vanishes exactly on the tuned family and
    equals -21/2 for the second-order Runge method."""
    vals = []
    for c2 in (1, F(1, 2), 2, F(3, 4), F(-1, 3), F(5, 7)):
        tab = design_tuned_3stage(c2)
        b = modified_equation_coeffs(rk_bseries(tab, 4))
        vals.append(tuned_condition_value(b))
    b_tuned = modified_equation_coeffs(rk_bseries(get_method("tuned3"), 4))
    b_runge = modified_equation_coeffs(rk_bseries(get_method("runge2"), 4))
    ok = (
        all(v == 0 for v in vals)
        and tuned_condition_value(b_tuned) == 0
        and tuned_condition_value(b_runge) == F(-21, 2)
    )
    _report(3, ok, f"family members {len(vals)}, runge2 value {tuned_condition_value(b_runge)}")
    assert ok


def test_criterion_04_lie_derivative_symbolic_oracle():
    """Edge-cut Lie derivative equals symbolic differentiation of truncated
    series on a random planar polynomial field, exactly."""
    t0 = time.perf_counter()
    import random

    rng = random.Random(20211219)
    max_order = 4
    ys, field = random_polynomial_field(rng, dim=2, degree=2)
    h = sp.Symbol("h")
    b = CoefficientMap.from_callable(
        lambda t: F(rng.randint(-3, 3), rng.randint(1, 4)), max_order
    )
    c = CoefficientMap.from_callable(
        lambda t: F(rng.randint(-3, 3), rng.randint(1, 4)), max_order,
        empty_value=F(1, 2),
    )
    Bc = symbolic_bseries(c, ys, field, max_order, h)
    Bb = symbolic_bseries(b, ys, field, max_order, h)
    rhs = symbolic_bseries(lie_derivative(b, c), ys, field, max_order, h)
    ok = True
    for i in range(2):
        lhs = sum(sp.diff(Bc[i], ys[j]) * Bb[j] for j in range(2))
        ok &= sp.simplify(truncate_h(sp.expand(lhs - rhs[i]), h, max_order)) == 0
    elapsed = time.perf_counter() - t0
    _report(4, ok and elapsed < 10.0, f"exact match to order 4, {elapsed:.2f}s")
    assert ok
    assert elapsed < 10.0


# The classical leading-order constants of the elementary integrals, stated in
# the literal sd(.|1/2) normalization (amplitude c1_sd = 2^(1/4) c1, mean
# square chi_sd = sqrt(2) chi, shapes sd' and sd^3).
INTEGRAL_TABLE = {
    "chain2": (BLT2, (F(-128, 675), 4, 1, F(17, 6)), (F(256, 2025), 5, 1, F(19, 6))),
    "bushy3": (BUSHY3, (F(-32, 135), 4, 1, F(11, 6)), (F(64, 405), 5, 1, F(13, 6))),
    "chain3": (BLT3, (F(-208, 135), 4, 1, F(11, 6)), (F(416, 405), 5, 1, F(13, 6))),
    "bushy4": (BUSHY4, (F(-4096, 14553), 6, 0, F(7, 2)), (F(8192, 43659), 7, 0, F(23, 6))),
    "branch4": (TAU4B, (F(4096, 43659), 6, 0, F(7, 2)), (F(-8192, 130977), 7, 0, F(23, 6))),
    "fork4": (TAU4C, (F(-4096, 43659), 6, 0, F(7, 2)), (F(8192, 130977), 7, 0, F(23, 6))),
    "chain4": (BLT4, (F(16384, 43659), 6, 0, F(7, 2)), (F(-32768, 130977), 7, 0, F(23, 6))),
}


def test_criterion_05_elementary_integral_constants(ef_prob, elint_batch, fitted_ref):
    """Numeric elementary integrals against the classical leading-order
    constants, row by row, 5 percent averaged over t in [200, 1000].

    Known deviation, kept honest rather than hidden: the two odd-order rows
    (bushy3/chain3) do not meet the listed constants along the true
    trajectory.  Three independent routes agree on this: (i) the even-order
    rows match the same pipeline to ~1e-4; (ii) the truncated error series
    built from these integrals reproduces the directly measured global error
    to ~1e-4 relative; (iii) quadrature along the frozen asymptotic form with
    the approximate flow does reproduce the listed odd-row constants.  The
    listed odd-row values hold only for that asymptotic model: at
    gamma = 1/6 the corrections the model drops (relative size t^(-4/3))
    re-enter the odd-order cancellation residuals at leading order, because a
    non-oscillatory integrand correction of size s^(k-4/3) integrates to
    t^(k-1/3), exactly the order of the oscillatory leading residual.
    Measured ratios: chain3 ~ 0.93, bushy3 ~ 0 of the listed constants.
    """
    traj, integrals = elint_batch
    times = traj.times
    m = (times >= 200.0) & (times <= 1000.0)
    t = times[m]
    c1, c2 = fitted_ref.c1, fitted_ref.c2
    phase = c1 * t ** (4 / 3) + c2
    basis = {
        0: lambda e: t ** float(e) * fitted_ref.wp(phase),
        1: lambda e: t ** float(e) * 2**0.75 * fitted_ref.w(phase) ** 3,
    }
    c1_sd = 2**0.25 * c1
    chi_sd = 2**0.5 * fitted_ref.chi
    failures = []
    for name, (tree, row1, row2) in INTEGRAL_TABLE.items():
        for comp, (coef, c1_pow, chi_pow, t_exp) in ((0, row1), (1, row2)):
            expected = float(coef) * math.sqrt(2.0) * c1_sd**c1_pow * chi_sd**chi_pow
            base = basis[comp](t_exp)
            fitted = float(np.dot(integrals[tree].values[m, comp], base) / np.dot(base, base))
            dev = abs(fitted / expected - 1.0)
            line = f"  {name} comp{comp + 1}: fitted/listed = {fitted / expected:+.4f}"
            print(line)
            if dev > 0.05:
                failures.append(f"{name} comp{comp + 1} off by {dev:.1%}")
    _report(5, not failures, f"{14 - len(failures)}/14 rows within 5%")
    assert not failures, "; ".join(failures)


def test_criterion_06_scalar_multiple_relation(elint_batch):
    """4 I(bushy4) = -12 I(branch4) = 12 I(fork4) = -3 I(chain4), within 2%
    componentwise on t in [100, 500]."""
    traj, integrals = elint_batch
    times = traj.times
    m = (times >= 100.0) & (times <= 500.0)
    scaled = [
        4.0 * integrals[BUSHY4].values[m],
        -12.0 * integrals[TAU4B].values[m],
        12.0 * integrals[TAU4C].values[m],
        -3.0 * integrals[BLT4].values[m],
    ]
    worst = 0.0
    for other in scaled[1:]:
        for comp in (0, 1):
            rel = np.linalg.norm(other[:, comp] - scaled[0][:, comp]) / np.linalg.norm(
                scaled[0][:, comp]
            )
            worst = max(worst, rel)
    ok = worst < 0.02
    _report(6, ok, f"worst componentwise deviation {worst:.2e}")
    assert ok


def test_criterion_07_estimate_vs_measurement(ef_prob, fitted_ref, runge2_measurement_2000):
    """Second-order Runge at h = 1/1000 on [0, 2000]: the two-term envelope
    matches the measured envelope within 20% RMS on [50, 1000], the
    leading-term-only envelope fails by 2x before t = 2000, and breakdown is
    detected at 1200 +- 150."""
    h = 1e-3
    meas = runge2_measurement_2000
    pk_t, pk_v = peak_envelope(meas.times, meas.errors[:, 0])
    m = (pk_t >= 50.0) & (pk_t <= 1000.0)
    env = closed_form_envelope_ef("runge2", ef_prob, fitted_ref, h, pk_t[m])[:, 0]
    rms = float(np.sqrt(np.mean((pk_v[m] / env - 1.0) ** 2)))

    lead = closed_form_envelope_ef("runge2", ef_prob, fitted_ref, h, pk_t,
                                   leading_only=True)[:, 0]
    ratio = pk_v / np.maximum(lead, 1e-300)
    crossing = None
    lo = pk_t[0]
    while lo + 40.0 <= pk_t[-1]:
        mm = (pk_t >= lo) & (pk_t < lo + 40.0)
        if mm.sum() >= 5 and np.median(ratio[mm]) >= 2.0:
            crossing = lo + 20.0
            break
        lo += 40.0

    breakdown = detect_breakdown(
        pk_t, pk_v, lambda tq: solution_amplitude(ef_prob, fitted_ref, tq), 1.0
    )
    ok = (
        rms <= 0.20
        and crossing is not None
        and crossing < 2000.0
        and breakdown is not None
        and 1050.0 <= breakdown <= 1350.0
    )
    _report(7, ok, f"RMS {rms:.1%}, leading-only 2x at t~{crossing}, breakdown {breakdown:.0f}")
    assert rms <= 0.20
    assert crossing is not None and crossing < 2000.0
    assert breakdown is not None and 1050.0 <= breakdown <= 1350.0


def test_criterion_08_method_comparison(ef_prob, ef_sys, fitted_ref, ef_reference_2000):
    """At h = 1/2000 the endpoint-window envelopes order as
    tuned3 < heun3 < runge2; heun3 matches its closed form within 20% and
    tuned3 within a factor of two."""
    h = 1.0 / 2000.0
    peaks = {}
    for name in ("runge2", "heun3", "tuned3"):
        meas = measure_global_error(
            get_method(name), ef_sys, ef_prob.initial_state(), 0.0, h, 2000.0, 0.02,
            ref_traj=ef_reference_2000,
        )
        pk_t, pk_v = peak_envelope(meas.times, meas.errors[:, 0])
        m = (pk_t >= 1500.0) & (pk_t <= 2000.0)
        peaks[name] = (pk_t[m], pk_v[m])
    med = {name: float(np.median(v)) for name, (_, v) in peaks.items()}
    ordering = med["tuned3"] < med["heun3"] < med["runge2"]

    he_t, he_v = peaks["heun3"]
    he_env = closed_form_envelope_ef("heun3", ef_prob, fitted_ref, h, he_t)[:, 0]
    he_rms = float(np.sqrt(np.mean((he_v / he_env - 1.0) ** 2)))

    tu_t, tu_v = peaks["tuned3"]
    tu_env = closed_form_envelope_ef("tuned3", ef_prob, fitted_ref, h, tu_t)[:, 0]
    tu_ratio = tu_v / tu_env
    tu_ok = bool(np.all((tu_ratio >= 0.5) & (tu_ratio <= 2.0)))

    ok = ordering and he_rms <= 0.20 and tu_ok
    _report(
        8,
        ok,
        f"medians {med['tuned3']:.2e} < {med['heun3']:.2e} < {med['runge2']:.2e}, "
        f"heun RMS {he_rms:.1%}, tuned ratio [{tu_ratio.min():.2f}, {tu_ratio.max():.2f}]",
    )
    assert ordering
    assert he_rms <= 0.20
    assert tu_ok


def test_criterion_09_airy_error_envelope():
    """Second-order Runge on y'' + t y = 0 at h = 1e-3: the amplitude-scaled
    error envelope is (h^2/30) t^(5/2) within 15% on [20, 200] when the
    asymptotic amplitude of the initial data is 1/2, and the fitted envelope
    exponent is 2.5 +- 0.08."""
    amp = math.sqrt(math.pi) / 2  # special-function solution with amplitude 1/2
    ai, aip, _, _ = airy_fn(-1.0)
    y0 = np.array([amp * ai, -amp * aip, 1.0])
    h = 1e-3
    meas = measure_global_error(
        get_method("runge2"), airy_system(), y0, 1.0, h, 200.0, 0.005, h_ref=1e-4
    )
    m = (meas.times >= 20.0) & (meas.times <= 200.0)
    t = meas.times[m]
    scaled = t**0.25 * meas.errors[m, 0]
    pk_t, pk_v = peak_envelope(t, scaled)
    predicted = h**2 * pk_t**2.5 / 30.0
    worst = float(np.max(np.abs(pk_v / predicted - 1.0)))
    fit = envelope_fit(t, scaled, (20.0, 200.0))
    ok = worst <= 0.15 and abs(fit.exponent - 2.5) <= 0.08
    _report(9, ok, f"max envelope deviation {worst:.1%}, exponent {fit.exponent:.4f}")
    assert worst <= 0.15
    assert abs(fit.exponent - 2.5) <= 0.08


def test_criterion_10_reference_oscillation_oracles(wn3):
    """Table vs the elliptic-function route: values at 100 random points,
    the period, and the energy identity."""
    rng = np.random.default_rng(123)
    x = rng.uniform(0.0, wn3.period4K, 100)
    dev = float(np.max(np.abs(wn3.w(x) - w3_sd_agm(x))))
    period_err = abs(wn3.period4K / w3_period_agm() - 1.0)
    energy = float(
        np.max(np.abs(wn3.wp_nodes**2 + 2.0 * wn3.w_nodes**4 / 4.0 - 1.0))
    )
    ok = dev < 1e-8 and period_err < 1e-8 and energy < 1e-10
    _report(10, ok, f"value dev {dev:.1e}, period dev {period_err:.1e}, energy {energy:.1e}")
    assert dev < 1e-8
    assert period_err < 1e-8
    assert energy < 1e-10
