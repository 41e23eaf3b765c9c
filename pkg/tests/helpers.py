"""Independent oracles used by the tests.

Everything here deliberately avoids the package's own combinatorial shortcuts:
the labelling counter enumerates permutations, and the Lie-derivative oracle
differentiates truncated series of an explicit polynomial vector field with
sympy.  They exist to cross-check the production formulas, so they must not
share code with them.
"""

from __future__ import annotations

import itertools
import random
from fractions import Fraction

import sympy as sp

from oscerr.trees import RootedTree, trees_upto


def vertex_parents(tree: RootedTree):
    """Parent indices of a concrete representative (root = 0, parent -1)."""
    parents = [-1]

    def walk(node, my_index):
        for child in node.children:
            child_index = len(parents)
            parents.append(my_index)
            walk(child, child_index)

    walk(tree, 0)
    return parents


def count_monotone_labellings(tree: RootedTree) -> int:
    """Brute force: labellings of the vertices with 1..rho, increasing along
    every edge away from the root, counted up to tree automorphism (dedupe by
    the canonical form of the labelled tree)."""
    parents = vertex_parents(tree)
    rho = len(parents)

    def labelled_canonical(labels):
        children = [[] for _ in range(rho)]
        for i in range(1, rho):
            children[parents[i]].append(i)

        def canon(i):
            return (labels[i], tuple(sorted(canon(j) for j in children[i])))

        return canon(0)

    seen = set()
    for perm in itertools.permutations(range(1, rho + 1)):
        if perm[0] != 1:
            continue
        if all(perm[parents[i]] < perm[i] for i in range(1, rho)):
            seen.add(labelled_canonical(perm))
    return len(seen)


# --- symbolic B-series machinery over a polynomial vector field ---------------


def random_polynomial_field(rng: random.Random, dim: int = 2, degree: int = 2):
    """Polynomial vector field with small random rational coefficients."""
    ys = sp.symbols(f"y1:{dim + 1}")
    field = []
    monomials = [
        m
        for m in itertools.product(range(degree + 1), repeat=dim)
        if sum(m) <= degree
    ]
    for _ in range(dim):
        expr = sp.Integer(0)
        for powers in monomials:
            c = sp.Rational(rng.randint(-3, 3), rng.randint(1, 3))
            term = c
            for y, p in zip(ys, powers):
                term *= y**p
            expr += term
        field.append(sp.expand(expr))
    return ys, field


def symbolic_elementary_differential(tree: RootedTree, ys, field):
    """F(tau) by definition: the tree-indexed nested derivative of the field,
    computed by differentiating along dummy directions."""
    if not tree.children:
        return list(field)
    child_fields = [symbolic_elementary_differential(c, ys, field) for c in tree.children]
    eps = sp.symbols(f"e1:{len(child_fields) + 1}")
    shifted = [
        y + sum(e * cf[i] for e, cf in zip(eps, child_fields))
        for i, y in enumerate(ys)
    ]
    out = []
    for comp in field:
        expr = comp.subs(dict(zip(ys, shifted)), simultaneous=True)
        for e in eps:
            expr = sp.diff(expr, e)
        out.append(sp.expand(expr.subs({e: 0 for e in eps})))
    return out


def _rat(x) -> sp.Rational:
    f = Fraction(x)
    return sp.Rational(f.numerator, f.denominator)


def symbolic_bseries(coeffs, ys, field, max_order, h):
    """B(c, y) truncated at max_order, as sympy expressions."""
    dim = len(ys)
    out = [_rat(coeffs.empty_value) * y for y in ys]
    for tree in trees_upto(max_order):
        c = coeffs[tree]
        if c == 0:
            continue
        w = sp.Integer(tree.alpha) * _rat(c) / sp.factorial(tree.order)
        F = symbolic_elementary_differential(tree, ys, field)
        for i in range(dim):
            out[i] += h ** tree.order * w * F[i]
    return [sp.expand(e) for e in out]


def truncate_h(expr, h, max_order):
    """Drop powers of h above max_order."""
    expr = sp.expand(expr)
    out = sp.Integer(0)
    poly = sp.Poly(expr, h)
    for (power,), coef in poly.terms():
        if power <= max_order:
            out += coef * h**power
    return sp.expand(out)
