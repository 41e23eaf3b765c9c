"""B-series coefficient algebra: elementary weights, Lie derivatives and
modified-equation coefficients.

Every coefficient is an exact ``Fraction``; nothing in this module touches
floating point.  A coefficient function is represented by a
:class:`CoefficientMap`, which assigns a rational to the empty tree and to
every rooted tree up to a stated order.  Queries above the covered order
raise instead of silently returning zero.

The Lie derivative is computed with an edge-cut sum in the density
normalization ``c_hat(tau) = c(tau) / gamma(tau)``:

    (d_b c)_hat(theta) = c(empty) * b_hat(theta)
                         + sum over edge cuts of theta of
                           c_hat(remainder) * b_hat(pendant)

In this normalization every edge of a concrete representative counts once;
the symmetry factors that would otherwise appear cancel against the
automorphism counts hidden in gamma.  The weights are cross-validated by the
test suite against direct symbolic differentiation of B-series on a random
polynomial vector field and against the known modified-equation coefficients
of the second-order Runge method.
"""

from __future__ import annotations

import math
from fractions import Fraction
from typing import Callable, Iterable

from .trees import LEAF, RootedTree, edge_cuts, trees_upto

__all__ = [
    "CoefficientMap",
    "CoverageError",
    "InconsistentMethodError",
    "exact_solution_coeffs",
    "elementary_weight",
    "rk_bseries",
    "lie_derivative",
    "modified_equation_coeffs",
    "method_order",
    "local_error_coeffs",
]


class CoverageError(KeyError):
    """A coefficient map was queried beyond the orders it covers."""


class InconsistentMethodError(ValueError):
    """The B-series does not describe a consistent one-step method."""


class CoefficientMap:
    """Map from rooted trees (plus the empty tree) to exact rationals."""

    __slots__ = ("empty_value", "max_order", "_entries")

    def __init__(self, empty_value, entries: dict[RootedTree, Fraction], max_order: int):
        self.empty_value = Fraction(empty_value)
        self.max_order = max_order
        self._entries = dict(entries)
        for tree in trees_upto(max_order):
            self._entries.setdefault(tree, Fraction(0))

    @classmethod
    def from_callable(cls, fn: Callable[[RootedTree], Fraction], max_order: int, empty_value=0):
        return cls(empty_value, {t: Fraction(fn(t)) for t in trees_upto(max_order)}, max_order)

    def __getitem__(self, tree: RootedTree) -> Fraction:
        if tree.order > self.max_order:
            raise CoverageError(
                f"coefficient map covers order <= {self.max_order}, "
                f"queried tree of order {tree.order}"
            )
        return self._entries[tree]

    def items(self) -> Iterable[tuple[RootedTree, Fraction]]:
        return self._entries.items()

    def replace(self, tree: RootedTree, value) -> "CoefficientMap":
        """Copy of the map with one entry changed."""
        entries = dict(self._entries)
        entries[tree] = Fraction(value)
        return CoefficientMap(self.empty_value, entries, self.max_order)

    def __eq__(self, other):
        return (
            isinstance(other, CoefficientMap)
            and self.empty_value == other.empty_value
            and self.max_order == other.max_order
            and self._entries == other._entries
        )

    def __repr__(self):
        return f"CoefficientMap(empty={self.empty_value}, max_order={self.max_order})"


def exact_solution_coeffs(max_order: int) -> CoefficientMap:
    """Coefficients of the exact flow: 1 on the empty tree and on every tree."""
    return CoefficientMap.from_callable(lambda t: Fraction(1), max_order, empty_value=1)


# --- elementary weights -----------------------------------------------------


def elementary_weight(tableau, tree: RootedTree) -> Fraction:
    """Tableau-dependent weight phi(tau) of a rooted tree.

    Computed with the classical recursion over subtrees: the stage vector of a
    tree is the componentwise product over its children of A times the child's
    stage vector, with the stage vector of the single vertex being the vector
    of ones; phi contracts the root's product with the weight vector b.
    """
    prod = _stage_product(tableau, tree.children)
    return sum((bi * pi for bi, pi in zip(tableau.b, prod)), Fraction(0))


def _stage_product(tableau, children):
    s = tableau.stages
    prod = [Fraction(1)] * s
    for child in children:
        sv = _stage_vector(tableau, child)
        prod = [p * v for p, v in zip(prod, sv)]
    return prod


def _stage_vector(tableau, tree):
    cache = tableau._weight_cache
    sv = cache.get(tree)
    if sv is None:
        prod = _stage_product(tableau, tree.children)
        sv = tuple(
            sum((tableau.A[i][j] * prod[j] for j in range(i)), Fraction(0))
            for i in range(tableau.stages)
        )
        cache[tree] = sv
    return sv


def rk_bseries(tableau, max_order: int) -> CoefficientMap:
    """B-series coefficients of an explicit Runge-Kutta method.

    a(empty) = 1 and a(tau) = gamma(tau) * phi(tau).
    """
    return CoefficientMap.from_callable(
        lambda t: t.gamma * elementary_weight(tableau, t), max_order, empty_value=1
    )


# --- Lie derivative and the modified equation -------------------------------


def lie_derivative(b: CoefficientMap, c: CoefficientMap) -> CoefficientMap:
    """Coefficients of the time derivative of the series of ``c`` along the
    flow of the vector field with series ``b``.

    ``b`` must vanish on the empty tree.  The result covers the smaller of the
    two input orders and is zero on the empty tree.
    """
    if b.empty_value != 0:
        raise ValueError("vector-field coefficients must vanish on the empty tree")
    max_order = min(b.max_order, c.max_order)
    entries = {}
    for theta in trees_upto(max_order):
        acc = c.empty_value * Fraction(b[theta], theta.gamma)
        for remainder, pendant in edge_cuts(theta):
            cr = c[remainder]
            bp = b[pendant]
            if cr and bp:
                acc += Fraction(cr, remainder.gamma) * Fraction(bp, pendant.gamma)
        entries[theta] = acc * theta.gamma
    return CoefficientMap(0, entries, max_order)


def modified_equation_coeffs(a: CoefficientMap, max_order: int | None = None) -> CoefficientMap:
    """Coefficients of the modified vector field of a one-step method.

    Defined by the recursion b(empty) = 0, b(.) = 1 and, for trees of order
    two and up,

        b(tau) = a(tau) - sum_{j=2}^{rho(tau)} (1/j!) (d_b^{j-1} b)(tau).

    The recursion is well founded: every application of the Lie derivative to
    a coefficient map vanishing on the empty tree only consumes entries of
    strictly lower order.
    """
    if max_order is None:
        max_order = a.max_order
    if max_order > a.max_order:
        raise CoverageError(
            f"method coefficients cover order <= {a.max_order}, requested {max_order}"
        )
    if a[LEAF] != 1:
        raise InconsistentMethodError("a(.) must be 1 for a consistent method")

    bvals: dict[RootedTree, Fraction] = {LEAF: Fraction(1)}
    # der_cache[(j, theta)] holds (d_b^j b)(theta); j = 0 is b itself.
    der_cache: dict[tuple[int, RootedTree], Fraction] = {}

    def der(j: int, theta: RootedTree) -> Fraction:
        if j == 0:
            return bvals[theta]
        key = (j, theta)
        val = der_cache.get(key)
        if val is None:
            acc = Fraction(0)
            for remainder, pendant in edge_cuts(theta):
                dr = der(j - 1, remainder)
                bp = bvals[pendant]
                if dr and bp:
                    acc += Fraction(dr, remainder.gamma) * Fraction(bp, pendant.gamma)
            val = acc * theta.gamma
            der_cache[key] = val
        return val

    for rho in range(2, max_order + 1):
        for theta in [t for t in trees_upto(rho) if t.order == rho]:
            val = a[theta]
            for j in range(2, rho + 1):
                val -= Fraction(1, math.factorial(j)) * der(j - 1, theta)
            bvals[theta] = val

    return CoefficientMap(0, bvals, max_order)


def method_order(a: CoefficientMap) -> int:
    """Largest p with a(tau) = 1 for every tree of order at most p.

    Raises :class:`CoverageError` when the map is exact on all covered orders,
    since then the order cannot be certified from the available coverage.
    """
    for rho in range(1, a.max_order + 1):
        if any(a[t] != 1 for t in trees_upto(rho) if t.order == rho):
            return rho - 1
    raise CoverageError(
        f"all covered orders (<= {a.max_order}) match the exact flow; "
        "extend the coverage to certify the order"
    )


def local_error_coeffs(a: CoefficientMap, max_order: int | None = None) -> CoefficientMap:
    """Entrywise difference between the method series and the exact flow."""
    if max_order is None:
        max_order = a.max_order
    entries = {t: a[t] - 1 for t in trees_upto(max_order)}
    return CoefficientMap(0, entries, max_order)
