"""Codeword-length functional: Kraft-feasible lengths and Huffman expected length.

All lengths are in bits. Symbols with zero probability get an infinite length
and never enter the Huffman merge; a distribution concentrated on one symbol
costs nothing to describe.
"""

from __future__ import annotations

import heapq
import itertools
import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .errors import SpecError

_PROB_TOL = 1e-9


@dataclass(frozen=True)
class LengthFunction:
    lengths: tuple
    expected_length: float

    def __post_init__(self):
        if not kraft_check(self.lengths):
            raise ValueError(f"lengths {self.lengths} violate Kraft's inequality")


def _check_dist(dist) -> np.ndarray:
    p = np.asarray(dist, dtype=float)
    if p.ndim != 1 or p.size == 0:
        raise SpecError("dist", "expected a nonempty probability vector")
    if not np.all(np.isfinite(p)) or np.any(p < 0):
        raise SpecError("dist", "entries must be finite and nonnegative")
    if abs(p.sum() - 1.0) > _PROB_TOL:
        raise SpecError("dist", f"sums to {p.sum()!r}, not 1")
    return p


def kraft_check(lengths) -> bool:
    """True iff the finite entries of ``lengths`` satisfy Kraft's inequality."""
    total = 0.0
    for length in lengths:
        if math.isinf(length):
            continue
        if length < 0 or int(length) != length:
            raise ValueError(f"invalid codeword length {length!r}")
        total += 2.0 ** (-int(length))
    return total <= 1.0 + 1e-15


def huffman_lengths(weights) -> tuple:
    """Canonical Huffman code lengths for nonnegative ``weights``.

    The two lightest nodes are merged first; equal weights are ordered by the
    smallest symbol index a node contains. Zero-weight symbols get ``inf``; a
    single positive symbol gets length 0.
    """
    w = [float(v) for v in weights]
    support = [i for i, v in enumerate(w) if v > 0]
    lengths = [math.inf] * len(w)
    if len(support) == 1:
        lengths[support[0]] = 0
        return tuple(lengths)
    depth = {i: 0 for i in support}
    heap = [(w[i], i, (i,)) for i in support]
    heapq.heapify(heap)
    while len(heap) > 1:
        wa, ka, ma = heapq.heappop(heap)
        wb, kb, mb = heapq.heappop(heap)
        for i in ma + mb:
            depth[i] += 1
        heapq.heappush(heap, (wa + wb, min(ka, kb), ma + mb))
    for i, d in depth.items():
        lengths[i] = d
    return tuple(lengths)


def huffman_expected_length(dist) -> LengthFunction:
    """Huffman-optimal length function for ``dist`` and its expected length.

    The expectation is summed exactly and rounded once, so equal optima
    computed by different routes compare equal as floats.
    """
    p = _check_dist(dist)
    lengths = huffman_lengths(p)
    return LengthFunction(lengths, _exact_mean(p, lengths))


def _exact_mean(p, lengths):
    return float(sum(Fraction(float(pi)) * int(li) for pi, li in zip(p, lengths) if pi > 0))


def huffman_cost(weights: np.ndarray) -> np.ndarray:
    """Batched Huffman cost over the last axis of unnormalized ``weights``.

    Returns, for every row, the sum of internal-node weights of a Huffman
    tree built on the row's positive entries. That equals (row total) times
    the expected Huffman length of the normalized row, so summing the result
    over conditioning rows of a joint table gives the conditional expected
    length directly. Rows with at most one positive entry cost 0.
    """
    a = np.asarray(weights, dtype=float)
    lead = a.shape[:-1]
    n = a.shape[-1]
    a = a.reshape(-1, n)
    a = np.where(a > 0, a, np.inf)
    total = np.zeros(a.shape[0])
    for _ in range(n - 1):
        a.sort(axis=1)
        first, second = a[:, 0], a[:, 1]
        merge = np.isfinite(second)
        merged = first + second
        total += np.where(merge, merged, 0.0)
        head = np.where(merge, merged, first)
        a = np.column_stack([head, a[:, 2:], np.full(a.shape[0], np.inf)])
    return total.reshape(lead)


def conditional_expected_length(joint) -> float:
    """Expected Huffman length of Y given Z from a joint table ``P(y, z)``.

    Conditioning states with zero probability contribute nothing.
    """
    j = np.asarray(joint, dtype=float)
    if j.ndim != 2:
        raise SpecError("joint", "expected a 2-D table P(y, z)")
    _check_dist(j.ravel())
    return float(sum(
        j[:, z].sum() * huffman_expected_length(j[:, z] / j[:, z].sum()).expected_length
        for z in range(j.shape[1]) if j[:, z].sum() > 0
    ))


def oracle_min_expected_length(dist, max_support: int = 8) -> float:
    """Brute-force minimum of sum p(y) l(y) over Kraft-feasible integer lengths.

    Lengths range over 1..n on the support (n = support size). Every multiset
    of lengths is tried and paired shortest-with-most-probable, which is the
    best assignment of a fixed multiset.
    """
    p = _check_dist(dist)
    support = sorted((v for v in p if v > 0), reverse=True)
    n = len(support)
    if n > max_support:
        raise SpecError("dist", f"support size {n} exceeds oracle limit {max_support}")
    if n == 1:
        return 0.0
    exact = [Fraction(float(v)) for v in support]
    best = None
    for combo in itertools.combinations_with_replacement(range(1, n + 1), n):
        if sum(Fraction(1, 2 ** c) for c in combo) > 1:
            continue
        value = sum(pi * li for pi, li in zip(exact, combo))
        if best is None or value < best:
            best = value
    return float(best)


def joint_conditional_length(joint: np.ndarray, target_axes, cond_axes) -> float:
    """Expected Huffman length of the ``target_axes`` variables given ``cond_axes``.

    ``joint`` is a probability table; axes not listed are marginalized out.
    Used to state the length inequalities between different conditionings.
    """
    j = np.asarray(joint, dtype=float)
    keep = tuple(cond_axes) + tuple(target_axes)
    drop = tuple(a for a in range(j.ndim) if a not in keep)
    m = j.sum(axis=drop) if drop else j
    remaining = [a for a in range(j.ndim) if a in keep]
    perm = [remaining.index(a) for a in keep]
    m = np.transpose(m, perm)
    ncond = int(np.prod([j.shape[a] for a in cond_axes])) if cond_axes else 1
    return float(huffman_cost(m.reshape(ncond, -1)).sum())
