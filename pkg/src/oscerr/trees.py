"""Canonical rooted trees and the combinatorial statistics used by B-series.

A rooted tree is stored in a canonical form: the children of every vertex are
sorted in descending order of their canonical encodings, so two trees are
isomorphic exactly when their encodings (level sequences) are equal.  All the
statistics consumed by the coefficient recursions -- order ``rho``, monotone
labelling count ``alpha``, symmetry ``sigma``, density ``gamma`` and the
odd-height vertex count ``d_prime`` -- are computed once at construction time;
trees are immutable and freely shareable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache

__all__ = [
    "RootedTree",
    "TreeStats",
    "LEAF",
    "BLT2",
    "BUSHY3",
    "BLT3",
    "BUSHY4",
    "TAU4B",
    "TAU4C",
    "BLT4",
    "enumerate_trees",
    "trees_upto",
    "stats",
    "edge_cuts",
    "parse_tree",
    "chain",
]


class RootedTree:
    """Immutable unlabelled rooted tree in canonical form."""

    __slots__ = (
        "children",
        "order",
        "encoding",
        "gamma",
        "sigma",
        "d_prime",
        "_n_even",
        "_hash",
    )

    def __init__(self, children=()):
        kids = sorted(children, key=lambda t: t.encoding, reverse=True)
        self.children = tuple(kids)
        self.order = 1 + sum(c.order for c in kids)

        enc = [0]
        for c in kids:
            enc.extend(d + 1 for d in c.encoding)
        self.encoding = tuple(enc)

        # density: gamma(tau) = rho(tau) * prod gamma(tau_i)
        g = self.order
        for c in kids:
            g *= c.gamma
        self.gamma = g

        # symmetry: prod sigma(tau_i) * prod (multiplicity of distinct child)!
        s = 1
        run = 1
        for i, c in enumerate(kids):
            s *= c.sigma
            if i > 0 and kids[i - 1].encoding == c.encoding:
                run += 1
            else:
                run = 1
            s *= run
        self.sigma = s

        # vertex counts by height parity, relative to this root (root = even)
        self._n_even = 1 + sum(c.d_prime for c in kids)
        self.d_prime = sum(c._n_even for c in kids)

        self._hash = hash(self.encoding)

    @property
    def alpha(self):
        """Number of monotone labellings, rho! / (sigma * gamma)."""
        a = Fraction(math.factorial(self.order), self.sigma * self.gamma)
        assert a.denominator == 1
        return int(a)

    def __eq__(self, other):
        return isinstance(other, RootedTree) and self.encoding == other.encoding

    def __hash__(self):
        return self._hash

    def __lt__(self, other):
        return self.encoding < other.encoding

    def __repr__(self):
        return f"RootedTree({self!s})"

    def __str__(self):
        if not self.children:
            return "."
        return "[" + "".join(str(c) for c in self.children) + "]"


LEAF = RootedTree()


@dataclass(frozen=True)
class TreeStats:
    rho: int
    alpha: int
    sigma: int
    gamma_density: int
    d_prime: int


def stats(tree: RootedTree) -> TreeStats:
    """All five statistics of a canonical tree."""
    return TreeStats(
        rho=tree.order,
        alpha=tree.alpha,
        sigma=tree.sigma,
        gamma_density=tree.gamma,
        d_prime=tree.d_prime,
    )


MAX_ORDER = 10


def enumerate_trees(max_order: int) -> list[list[RootedTree]]:
    """All rooted trees up to ``max_order``, grouped by order.

    Returns a list whose entry at index ``k-1`` holds every isomorphism class
    of order ``k`` exactly once, in a deterministic order (descending
    canonical encoding within each order).
    """
    if not 1 <= max_order <= MAX_ORDER:
        raise ValueError(f"max_order must be in 1..{MAX_ORDER}, got {max_order}")
    return [list(_trees_of_order(k)) for k in range(1, max_order + 1)]


def trees_upto(max_order: int) -> list[RootedTree]:
    """Flat list of all trees with order <= max_order."""
    return [t for group in enumerate_trees(max_order) for t in group]


@lru_cache(maxsize=None)
def _trees_of_order(k: int) -> tuple[RootedTree, ...]:
    if k == 1:
        return (LEAF,)
    # candidate children, fixed total order so every multiset is built once
    pool = []
    for j in range(k - 1, 0, -1):
        pool.extend(_trees_of_order(j))
    out = []

    def build(remaining, start, chosen):
        if remaining == 0:
            out.append(RootedTree(chosen))
            return
        for i in range(start, len(pool)):
            t = pool[i]
            if t.order <= remaining:
                build(remaining - t.order, i, chosen + [t])

    build(k - 1, 0, [])
    out.sort(key=lambda t: t.encoding, reverse=True)
    return tuple(out)


@lru_cache(maxsize=None)
def edge_cuts(tree: RootedTree) -> tuple[tuple[RootedTree, RootedTree], ...]:
    """One (remainder, pendant) pair per edge of a concrete representative.

    The pendant is the subtree hanging below the cut edge, the remainder is
    the tree with that subtree removed.  Repeated pairs appear once per edge
    (multiset semantics).  The single vertex has no edges.
    """
    cuts = []
    kids = tree.children
    for i, child in enumerate(kids):
        rest = kids[:i] + kids[i + 1 :]
        cuts.append((RootedTree(rest), child))
        for inner_rem, pendant in edge_cuts(child):
            cuts.append((RootedTree(rest + (inner_rem,)), pendant))
    return tuple(cuts)


def parse_tree(text: str) -> RootedTree:
    """Parse the bracket encoding produced by ``str(tree)``.

    ``.`` is the single vertex, ``[...]`` a vertex with the bracketed children,
    e.g. ``[[.].]`` is the order-4 tree whose root carries one chain of two
    vertices and one leaf.
    """
    text = text.strip()
    pos = 0

    def node():
        nonlocal pos
        if pos >= len(text):
            raise ValueError(f"unexpected end of tree encoding: {text!r}")
        ch = text[pos]
        if ch == ".":
            pos += 1
            return LEAF
        if ch != "[":
            raise ValueError(f"unexpected {ch!r} at position {pos} in {text!r}")
        pos += 1
        kids = []
        while pos < len(text) and text[pos] != "]":
            kids.append(node())
        if pos >= len(text):
            raise ValueError(f"unbalanced brackets in {text!r}")
        pos += 1
        return RootedTree(kids)

    result = node()
    if pos != len(text):
        raise ValueError(f"trailing input in tree encoding {text!r}")
    return result


# Frequently used small trees (chains and the bushy order-3/4 shapes).
def chain(order: int) -> RootedTree:
    """The tall branchless tree with ``order`` vertices."""
    t = LEAF
    for _ in range(order - 1):
        t = RootedTree([t])
    return t


BLT2 = chain(2)
BUSHY3 = RootedTree([LEAF, LEAF])
BLT3 = chain(3)
BUSHY4 = RootedTree([LEAF, LEAF, LEAF])
TAU4B = RootedTree([LEAF, BLT2])
TAU4C = RootedTree([BUSHY3])
BLT4 = chain(4)
