"""Complex propagators Y(chi) = O diag(exp(chi E)) O^T and the partition trace.

``Y(-i t)`` is the evolution operator, ``Y(-beta)`` the Boltzmann operator,
and ``Y(-beta/4 - i t)`` the quarter-power-regularized argument used by the
symmetrized correlator.  Y is complex symmetric for any chi because O is
real; Y(chi)^dagger = Y(conj(chi)) always, and in orthogonalized mode the
family obeys the exact group property Y(a) Y(b) = Y(a + b).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["ComplexArgument", "ComplexPropagator", "build_Y", "trace_Z",
           "window_trace_Z"]

#: largest |chi * E| for which exp() stays inside double range
EXP_GUARD = 700.0


@dataclass(frozen=True)
class ComplexArgument:
    """Argument chi of the propagator, constrained to Re(chi) <= 0."""

    value: complex

    def __post_init__(self):
        v = complex(self.value)
        if v.real > 1e-12:
            raise ValueError(f"Re(chi) must be <= 0, got {v.real}")
        object.__setattr__(self, "value", v)

    @classmethod
    def otoc(cls, beta, t):
        """chi = -beta/4 - i t, the symmetrized-correlator argument."""
        return cls(-beta / 4.0 - 1j * t)

    @classmethod
    def boltzmann(cls, beta):
        """chi = -beta, so that Y(chi) is the Boltzmann operator."""
        return cls(-float(beta))

    @classmethod
    def evolution(cls, t):
        """chi = -i t, so that Y(chi) is the evolution operator."""
        return cls(-1j * float(t))

    def conjugate(self):
        return ComplexArgument(self.value.conjugate())


@dataclass
class ComplexPropagator:
    """Dense view of the banded matrix Y(chi) for one ensemble member."""

    Y: np.ndarray
    chi: complex
    member_index: int = -1


def _as_chi(chi):
    if isinstance(chi, ComplexArgument):
        return chi.value
    return ComplexArgument(complex(chi)).value


def _check_exp_range(chi, energies):
    emax = float(np.max(np.abs(energies))) if len(energies) else 0.0
    if abs(chi) * emax > EXP_GUARD:
        raise OverflowError(
            f"|chi * E| = {abs(chi) * emax:.3g} exceeds the double-precision "
            f"exp range (limit {EXP_GUARD})"
        )


def build_Y(member, chi):
    """Y(chi) = O diag(exp(chi E)) O^T as a dense complex matrix.

    The product costs O(D * bandwidth^2) in exact arithmetic because O is
    banded; at desk scales the dense BLAS product is used.  The result is
    complex symmetric to rounding.
    """
    c = _as_chi(chi)
    _check_exp_range(c, member.E)
    w = np.exp(c * member.E)
    y = (member.O * w[None, :]) @ member.O.T
    return ComplexPropagator(Y=y, chi=c, member_index=member.member_index)


def trace_Z(member, beta):
    """Tr Y(-beta) = sum_a exp(-beta E_a) |O_:a|^2, without building Y.

    Real and positive; equal to sum_a exp(-beta E_a) exactly in
    orthogonalized mode.
    """
    if beta < 0:
        raise ValueError(f"beta must be >= 0, got {beta}")
    _check_exp_range(-beta, member.E)
    colnorms = np.einsum("ma,ma->a", member.O, member.O)
    return float(colnorms @ np.exp(-beta * member.E))


def window_trace_Z(member, beta, lo, hi):
    """Partition trace restricted to reference levels m in [lo, hi).

    Summing Y_mm(-beta) over an interior window keeps every contributing
    correlation window complete, which removes the bias a hard spectrum
    bottom induces in the full thermal trace.
    """
    if beta < 0:
        raise ValueError(f"beta must be >= 0, got {beta}")
    _check_exp_range(-beta, member.E)
    block = member.O[lo:hi]
    w = np.einsum("ma,ma->a", block, block)
    return float(w @ np.exp(-beta * member.E))
