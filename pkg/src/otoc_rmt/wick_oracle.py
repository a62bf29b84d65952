"""Brute-force pairing oracle for products of propagator factors.

Every moment of the Gaussian mixing matrix decomposes into perfect matchings
of the 2k matrix-element slots.  Each matching contributes a product of
Kronecker constraints on the reference-level indices and, per linked group of
factors, one exact Gaussian integral over the shared running eigenvalue.
This module enumerates all matchings, flags the chord-crossing and connected
ones, and evaluates moments and averaged traces pattern by pattern, with no
quadrature error.  It is the numerical authority for the closed forms in
``analytic`` (including the sign of the energy-difference coupling) and for
the 1/N suppression of crossing patterns and of trace-factorization
corrections.
"""
from __future__ import annotations

import string
from dataclasses import dataclass

import numpy as np

__all__ = [
    "ContractionPattern",
    "TraceSpec",
    "enumerate_pairings",
    "exact_moment",
    "exact_trace_moment",
    "trace_moment_terms",
    "trace_product_correlated",
    "variance_decomposition",
    "VarianceDecomposition",
]

MAX_ORDER = 5


@dataclass(frozen=True)
class ContractionPattern:
    """A perfect matching of the 2k factor slots.

    Slot 2j is the left (row) element of factor j, slot 2j+1 the right
    (column) element; slots are read in trace order around a circle.
    ``crossing`` marks intersecting chords; ``connected`` marks matchings
    that link all factors into a single component.
    """

    k: int
    pairing: tuple

    @property
    def crossing(self):
        chords = [tuple(sorted(p)) for p in self.pairing]
        for i in range(len(chords)):
            a, b = chords[i]
            for c, d in chords[i + 1:]:
                if (a < c < b < d) or (c < a < d < b):
                    return True
        return False

    @property
    def connected(self):
        parent = list(range(self.k))

        def find(x):
            while parent[x] != x:
                parent[x] = parent[parent[x]]
                x = parent[x]
            return x

        for s1, s2 in self.pairing:
            r1, r2 = find(s1 // 2), find(s2 // 2)
            if r1 != r2:
                parent[r1] = r2
        return len({find(f) for f in range(self.k)}) == 1


def _pairings(slots):
    if not slots:
        yield ()
        return
    first, rest = slots[0], slots[1:]
    for i, other in enumerate(rest):
        head = (first, other)
        for tail in _pairings(rest[:i] + rest[i + 1:]):
            yield (head,) + tail


def enumerate_pairings(k):
    """All (2k-1)!! matchings of the 2k slots, with crossing/connected flags."""
    if not 1 <= k <= MAX_ORDER:
        raise ValueError(f"order k must be in [1, {MAX_ORDER}], got {k}")
    return [ContractionPattern(k=k, pairing=p)
            for p in _pairings(tuple(range(2 * k)))]


def _in_class(pattern, restrict):
    if restrict == "all":
        return True
    if restrict == "noncrossing":
        return not pattern.crossing
    if restrict == "crossing":
        return pattern.crossing
    if restrict == "connected":
        return pattern.connected
    if restrict == "connected_noncrossing":
        return pattern.connected and not pattern.crossing
    if callable(restrict):
        return restrict(pattern)
    raise ValueError(f"unknown restriction {restrict!r}")


def _block_integral(chi, energies, model):
    """Exact integral of a product of windows against rho * exp(chi * E).

    For r window factors centered at ``energies`` the eigenvalue integral is
    a single Gaussian: with A = r / (2 delta^2) and B = chi + sum(E)/delta^2,

        rho (sqrt(2 pi) rho delta)^-r sqrt(pi / A)
            exp(B^2 / (4 A) - sum(E^2) / (2 delta^2)).
    """
    e = np.asarray(energies, dtype=float)
    r = len(e)
    delta2 = model.delta ** 2
    a = r / (2.0 * delta2)
    b = chi + np.sum(e) / delta2
    pref = model.rho * (np.sqrt(2.0 * np.pi) * model.rho * model.delta) ** (-r)
    return pref * np.sqrt(np.pi / a) * np.exp(
        b * b / (4.0 * a) - np.sum(e * e) / (2.0 * delta2)
    )


def _factor_blocks(pattern, n_factors):
    """Group factors linked by the matching; each pair lands in one block."""
    parent = list(range(n_factors))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for s1, s2 in pattern.pairing:
        r1, r2 = find(s1 // 2), find(s2 // 2)
        if r1 != r2:
            parent[r1] = r2
    blocks = {}
    for s1, s2 in pattern.pairing:
        blocks.setdefault(find(s1 // 2), []).append((s1, s2))
    members = {}
    for f in range(n_factors):
        members.setdefault(find(f), []).append(f)
    return [(members[root], pairs) for root, pairs in blocks.items()]


def exact_moment(spec, model, restrict="all"):
    """Pattern sum for a cyclic chain moment with concrete indices.

    ``spec`` is an ``analytic.MomentSpec``; the right index of factor j is
    m_{j+1} (cyclic).  Patterns whose Kronecker constraints are violated by
    the concrete indices contribute zero.  ``restrict`` selects 'all',
    'noncrossing', 'crossing', 'connected', 'connected_noncrossing', or a
    predicate on patterns.
    """
    k = spec.k
    if k > MAX_ORDER:
        raise ValueError(f"oracle handles k <= {MAX_ORDER}, got {k}")
    m = list(spec.m_indices)
    slot_index = []
    for j in range(k):
        slot_index.append(m[j])
        slot_index.append(m[(j + 1) % k])

    total = 0.0 + 0.0j
    for pattern in enumerate_pairings(k):
        if not _in_class(pattern, restrict):
            continue
        if any(slot_index[s1] != slot_index[s2] for s1, s2 in pattern.pairing):
            continue
        value = 1.0 + 0.0j
        for factors, pairs in _factor_blocks(pattern, k):
            chi_block = sum(spec.chis[f] for f in factors)
            energies = [model.energies[slot_index[p[0]]] for p in pairs]
            value *= _block_integral(chi_block, energies, model)
        total += value
    return complex(total)


# ---------------------------------------------------------------------------
# averaged traces of interlaced products

@dataclass
class TraceSpec:
    """Trace of matrices interlaced with propagator factors.

    Represents Tr(mats[0] Y(chis[0]) mats[1] Y(chis[1]) ...); the matrices
    are deterministic, the Y factors carry the ensemble statistics.
    """

    mats: list
    chis: list

    def __post_init__(self):
        if len(self.mats) != len(self.chis):
            raise ValueError("mats and chis must have equal length")
        if not 1 <= self.k:
            raise ValueError("need at least one factor")
        self.chis = [complex(c) for c in self.chis]
        self.mats = [np.asarray(m) for m in self.mats]

    @property
    def k(self):
        return len(self.chis)


def _block_operands(chi, classes, model):
    """Einsum operands of one block integral over the level-class grids.

    Completing the square in the shared eigenvalue leaves, for r pairs,

        c * prod_p exp(chi E_p / r)
          * prod_{p<q} exp(-(E_p - E_q)^2 / (2 r delta^2)),

    with c = rho (sqrt(2 pi) rho delta)^-r sqrt(2 pi delta^2 / r)
    exp(chi^2 delta^2 / (2 r)).  The difference kernels are bounded by one,
    so the factored form never overflows and einsum contracts it without
    materializing a D^r array.
    """
    e = model.energies
    r = len(classes)
    delta2 = model.delta ** 2
    c = (
        model.rho
        * (np.sqrt(2.0 * np.pi) * model.rho * model.delta) ** (-r)
        * np.sqrt(2.0 * np.pi * delta2 / r)
        * np.exp(chi * chi * delta2 / (2.0 * r))
    )
    subs, ops = [], []
    for i, letter in enumerate(classes):
        vec = np.exp(chi * e / r)
        if i == 0:
            vec = c * vec
        subs.append(letter)
        ops.append(vec)
    diff2 = (e[:, None] - e[None, :]) ** 2
    kernel = np.exp(-diff2 / (2.0 * r * delta2))
    for i in range(r):
        for j in range(i + 1, r):
            subs.append(classes[i] + classes[j])
            ops.append(kernel)
    return subs, ops


def _circles_pattern_value(circles, pattern, model):
    """Value of one matching for a product of interlaced traces.

    ``circles`` is a list of TraceSpec; factor ids run circle by circle.
    Free reference-level sums are evaluated with einsum over the index
    classes left after the Kronecker identifications.
    """
    k_total = sum(c.k for c in circles)
    n_slots = 2 * k_total

    parent = list(range(n_slots))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for s1, s2 in pattern.pairing:
        r1, r2 = find(s1), find(s2)
        if r1 != r2:
            parent[r1] = r2

    letters = {}
    alphabet = string.ascii_letters

    def letter(slot):
        root = find(slot)
        if root not in letters:
            letters[root] = alphabet[len(letters)]
        return letters[root]

    subs, ops = [], []
    offset = 0
    chi_of_factor = []
    for circle in circles:
        k = circle.k
        for j in range(k):
            f = offset + j
            prev = offset + (j - 1) % k
            row_slot = 2 * prev + 1   # right slot of the previous factor
            col_slot = 2 * f          # left slot of this factor
            subs.append(letter(row_slot) + letter(col_slot))
            ops.append(circle.mats[j])
            chi_of_factor.append(circle.chis[j])
        offset += k

    for factors, pairs in _factor_blocks(pattern, k_total):
        chi_block = sum(chi_of_factor[f] for f in factors)
        classes = [letter(p[0]) for p in pairs]
        block_subs, block_ops = _block_operands(chi_block, classes, model)
        subs.extend(block_subs)
        ops.extend(block_ops)

    expr = ",".join(subs) + "->"
    return complex(np.einsum(expr, *ops, optimize=True))


def exact_trace_moment(spec, model, restrict="all"):
    """Ensemble average of an interlaced trace, summed over a pattern class."""
    if spec.k > MAX_ORDER:
        raise ValueError(f"oracle handles k <= {MAX_ORDER}, got {spec.k}")
    total = 0.0 + 0.0j
    for pattern in enumerate_pairings(spec.k):
        if _in_class(pattern, restrict):
            total += _circles_pattern_value([spec], pattern, model)
    return complex(total)


def trace_moment_terms(spec, model):
    """Per-pattern contributions of an averaged interlaced trace."""
    return [(p, _circles_pattern_value([spec], p, model))
            for p in enumerate_pairings(spec.k)]


def _links_circles(pattern, k1):
    return any((s1 // 2 < k1) != (s2 // 2 < k1) for s1, s2 in pattern.pairing)


def trace_product_correlated(spec1, spec2, model):
    """Correlated part <T1 T2> - <T1><T2> of two interlaced traces.

    Exactly the sum over matchings with at least one contraction linking the
    two traces; matchings without a link factorize and cancel against the
    product of the averages.
    """
    k = spec1.k + spec2.k
    if k > MAX_ORDER:
        raise ValueError(f"combined order must be <= {MAX_ORDER}, got {k}")
    total = 0.0 + 0.0j
    for pattern in enumerate_pairings(k):
        if _links_circles(pattern, spec1.k):
            total += _circles_pattern_value([spec1, spec2], pattern, model)
    return complex(total)


@dataclass
class VarianceDecomposition:
    """Correlated part of a trace product against the factorized means."""

    correlated: complex
    mean1: complex
    mean2: complex

    @property
    def mean_product(self):
        return self.mean1 * self.mean2

    @property
    def ratio(self):
        return abs(self.correlated) / abs(self.mean_product)


def variance_decomposition(spec1, spec2, model):
    """Exact <T1 T2>_corr, the factorized means, and their magnitude ratio."""
    corr = trace_product_correlated(spec1, spec2, model)
    m1 = exact_trace_moment(spec1, model, restrict="all")
    m2 = exact_trace_moment(spec2, model, restrict="all")
    return VarianceDecomposition(correlated=corr, mean1=m1, mean2=m2)
