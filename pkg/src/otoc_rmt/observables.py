"""Test-operator pairs (V, W) with exactly vanishing one-point functions.

Both operators are real symmetric with zero diagonal in the reference basis,
so every windowed thermal average of V or W vanishes identically, for any
temperature and any window width.  Supports are kept a full band cutoff away
from the spectrum edges so that the Gaussian energy couplings entering the
correlator predictions are never truncated.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["ObservablePair", "generate_pair", "check_one_point",
           "padded_support"]


@dataclass
class ObservablePair:
    """Two real symmetric zero-diagonal operators with banded support.

    ``support`` is the half-open index range [lo, hi) outside of which all
    entries vanish.
    """

    V: np.ndarray
    W: np.ndarray
    kind: str
    support: tuple

    def __post_init__(self):
        for name, a in (("V", self.V), ("W", self.W)):
            if not np.array_equal(a, a.T):
                raise ValueError(f"{name} must be exactly symmetric")
            if np.any(np.diagonal(a) != 0.0):
                raise ValueError(f"{name} must have an exactly zero diagonal")


def padded_support(model, band_cutoff=6.0):
    """Largest support range [lo, hi) at least band_cutoff*delta from edges."""
    pad = int(np.ceil(band_cutoff * model.N))
    lo, hi = pad, model.D - pad
    if hi <= lo:
        raise ValueError(
            f"D = {model.D} too small for band_cutoff {band_cutoff} at "
            f"N = {model.N:.3g}: padded support is empty"
        )
    return lo, hi


def generate_pair(D, kind, support, bandwidth_b=4, seed=0):
    """Generate an (V, W) operator pair.

    'random_offdiag': independent standard-normal entries on off-diagonals
    1 <= |m - n| <= bandwidth_b inside the support, symmetrized, then scaled
    to Frobenius norm sqrt(D).  'hopping': unit bonds V_{m,m+1} inside the
    support, W the same chain shifted by one site.
    """
    lo, hi = support
    if not (0 <= lo < hi <= D):
        raise ValueError(f"empty or out-of-range support [{lo}, {hi}) for D = {D}")
    if bandwidth_b < 1:
        raise ValueError(f"bandwidth_b must be >= 1, got {bandwidth_b}")

    if kind == "random_offdiag":
        rng_v = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(0,)))
        rng_w = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(1,)))
        v = _random_banded(D, lo, hi, bandwidth_b, rng_v)
        w = _random_banded(D, lo, hi, bandwidth_b, rng_w)
    elif kind == "hopping":
        v = np.zeros((D, D))
        w = np.zeros((D, D))
        for m in range(lo, hi - 1):
            v[m, m + 1] = v[m + 1, m] = 1.0
        for m in range(lo + 1, hi - 1):
            w[m, m + 1] = w[m + 1, m] = 1.0
    else:
        raise ValueError(f"unknown pair kind {kind!r}")
    return ObservablePair(V=v, W=w, kind=kind, support=(lo, hi))


def _random_banded(D, lo, hi, b, rng):
    a = np.zeros((D, D))
    for off in range(1, b + 1):
        n = hi - lo - off
        if n <= 0:
            break
        vals = rng.standard_normal(n)
        idx = np.arange(lo, hi - off)
        a[idx, idx + off] = vals
        a[idx + off, idx] = vals
    norm = np.linalg.norm(a)
    if norm == 0.0:
        raise ValueError("support too small: generated operator is zero")
    return a * (np.sqrt(D) / norm)


def check_one_point(A, spectrum, beta, k, n):
    """Windowed thermal one-point sum of A around level n.

    Returns sum_m A_mm exp(-beta E_m) exp(-(E_m - E_n)^2 / (2 k delta^2)).
    Exactly zero for any zero-diagonal A; the window of width sqrt(k)*delta
    is the energy coupling that appears in k-th order contraction terms.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    e = spectrum.energies
    diag = np.diagonal(np.asarray(A))
    w = np.exp(-beta * e - (e - e[n]) ** 2 / (2.0 * k * spectrum.delta ** 2))
    return float(diag @ w)
