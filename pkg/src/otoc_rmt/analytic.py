"""Closed-form large-N predictions: moments, partition traces, and OTOCs.

Every formula here follows from two ingredients: the second-moment postulate
for the mixing matrix (variance = normalized Gaussian window of width delta)
and Wick pairing of the Gaussian entries, keeping the leading order in 1/N.
Contracting a cyclic chain of k propagator factors forces all k eigenvalue
sums onto a single running energy; integrating the product of k windows
against the constant density gives, for total argument chi = sum_j chi_j,

    sqrt(1/k) * (sqrt(2 pi) rho delta)^(1-k)
      * exp(chi * Ebar_mean + chi^2 delta^2 / (2k))
      * exp(-sum_{j<l} (E_j - E_l)^2 / (2 k delta^2)).

The energy-difference coupling is attractive (negative exponent): the product
of k Gaussian windows sharing one center is itself suppressed in the spread
of the k reference energies.  A repulsive sign would make the moment diverge
with the index spread and is inconsistent with the k = 2 partition-function
correlation; the contraction oracle pins the sign numerically.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "MomentSpec",
    "AnalyticPrediction",
    "first_moment",
    "correlated_moment",
    "trZ_HF",
    "mean_trZ",
    "corr_trZ_squared",
    "F0",
    "F0_terms",
    "C0",
    "C0_terms",
    "C_meanfield_terms",
    "C_asymptote",
    "predict_F",
    "predict_C",
    "hf_chain_trace",
    "vw_bracket",
    "pair_window_sum",
]

MAX_MOMENT_ORDER = 8


@dataclass(frozen=True)
class MomentSpec:
    """Order-k moment of a cyclic chain of propagator factors.

    ``chis[j]`` is the argument of factor j and ``m_indices[j]`` its left
    reference-level index; the right index of factor j is tied to the left
    index of factor j+1 (cyclically), which is the only index pattern with a
    connected non-crossing contraction.
    """

    chis: tuple
    m_indices: tuple

    def __post_init__(self):
        object.__setattr__(self, "chis", tuple(complex(c) for c in self.chis))
        object.__setattr__(self, "m_indices", tuple(int(m) for m in self.m_indices))
        if len(self.chis) != len(self.m_indices):
            raise ValueError("chis and m_indices must have equal length")
        if not 1 <= self.k <= MAX_MOMENT_ORDER:
            raise ValueError(f"order k must be in [1, {MAX_MOMENT_ORDER}], got {self.k}")

    @property
    def k(self):
        return len(self.chis)

    @property
    def chi_total(self):
        return sum(self.chis)


@dataclass
class AnalyticPrediction:
    """A labeled closed-form value together with an echo of its inputs."""

    kind: str
    value: complex
    inputs: dict = field(default_factory=dict)

    KINDS = ("first_moment", "corr_moment", "trZ", "trZ2_corr", "C_of_t",
             "F_of_t", "F0", "C0", "C_asymptote")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ValueError(f"unknown prediction kind {self.kind!r}")
        if not np.isfinite(self.value):
            raise ValueError(f"non-finite prediction value {self.value!r}")


def first_moment(chi, energy, delta):
    """Mean propagator element: exp(chi^2 delta^2 / 2 + chi * energy).

    Off-diagonal means vanish identically; this is the diagonal value.
    """
    chi = complex(chi)
    return np.exp(0.5 * chi * chi * delta * delta + chi * energy)


def correlated_moment(spec, model):
    """Connected part of a cyclic chain of k propagator factors.

    The single surviving contraction pattern gives, with chi = sum_j chi_j
    and reference energies E_j = energies[m_j],

        sqrt(1/k) (sqrt(2 pi) rho delta)^(1-k)
        exp(chi sum_j E_j / k + chi^2 delta^2 / (2k))
        exp(-sum_{j<l} (E_j - E_l)^2 / (2 k delta^2)).

    Reduces to ``first_moment`` for k = 1.  Symmetric under cyclic rotation
    of the (chi_j, m_j) chain.
    """
    k = spec.k
    delta = model.delta
    e = model.energies[list(spec.m_indices)]
    chi = spec.chi_total
    pref = np.sqrt(1.0 / k) / (np.sqrt(2.0 * np.pi) * model.rho * delta) ** (k - 1)
    spread = 0.0
    for j in range(k - 1):
        spread += np.sum((e[j] - e[j + 1:]) ** 2)
    return pref * np.exp(
        chi * np.sum(e) / k
        + chi * chi * delta * delta / (2.0 * k)
        - spread / (2.0 * k * delta * delta)
    )


def trZ_HF(beta, model):
    """Reference partition trace sum_m exp(-beta E_m)."""
    return float(np.sum(np.exp(-beta * model.energies)))


def mean_trZ(beta, model):
    """Ensemble-mean partition trace exp(beta^2 delta^2 / 2) * trZ_HF."""
    if beta < 0:
        raise ValueError(f"beta must be >= 0, got {beta}")
    return float(np.exp(0.5 * (beta * model.delta) ** 2) * trZ_HF(beta, model))


def corr_trZ_squared(beta, model):
    """Chain-contraction part of the partition-trace correlation.

    exp(beta^2 delta^2) * sum_m exp(-2 beta E_m) / (2 sqrt(pi) rho delta);
    smaller than mean_trZ^2 by two powers of the window count N.  This is
    the cyclic-chain class only; the full Gaussian connected correlation is
    twice this value because the second pairing of the two diagonal factors
    coincides with the chain on coincident indices.
    """
    e = model.energies
    pref = 1.0 / (2.0 * np.sqrt(np.pi) * model.rho * model.delta)
    return float(
        np.exp((beta * model.delta) ** 2) * pref * np.sum(np.exp(-2.0 * beta * e))
    )


# ---------------------------------------------------------------------------
# operator helpers

def hf_chain_trace(links, model):
    """Trace of an alternating product of reference-basis weights and matrices.

    ``links`` is a sequence of (chi_j, M_j); the value is
    Tr(prod_j diag(exp(chi_j E)) M_j) over the picket spectrum.
    """
    e = model.energies
    running = None
    for chi, mat in links:
        w = np.exp(complex(chi) * e)
        block = w[:, None] * np.asarray(mat)
        running = block if running is None else running @ block
    return complex(np.trace(running))


def vw_bracket(pair, chi, model):
    """Vector of windowed two-operator diagonals sum_n V_mn W_mn e^(chi E_n).

    For symmetric V, W this equals both operator orders of the enclosed
    chain that a contracted propagator pair leaves behind.
    """
    w = np.exp(complex(chi) * model.energies)
    return (pair.V * pair.W) @ w


def pair_window_sum(chi_tot, f, g, model):
    """Double energy sum with the k = 2 contraction weight.

    (2 sqrt(pi) rho delta)^-1 * sum_{m,m'} f_m g_m'
      exp(chi_tot (E_m + E_m') / 2) exp(-(E_m - E_m')^2 / (4 delta^2)).
    """
    e = model.energies
    chi_tot = complex(chi_tot)
    half = np.exp(0.5 * chi_tot * e)
    gauss = np.exp(-((e[:, None] - e[None, :]) ** 2) / (4.0 * model.delta ** 2))
    pref = 1.0 / (2.0 * np.sqrt(np.pi) * model.rho * model.delta)
    return pref * complex((f * half) @ gauss @ (g * half))


# ---------------------------------------------------------------------------
# symmetrized correlator

def F0_terms(pair, beta, t, model):
    """The three surviving contraction terms of the symmetrized numerator.

    With chi = -beta/4 - i t: the fully factorized term is the reference
    trace Tr(e^{chi* H} V e^{chi H} W e^{chi* H} V e^{chi H} W); the two pair
    terms couple the windowed diagonals <WV> at two reference energies
    through a Gaussian of width sqrt(2) delta, with the k = 2 weight
    1 / (2 sqrt(pi) rho delta).
    """
    chi = -beta / 4.0 - 1j * t
    chic = np.conjugate(chi)
    term1 = hf_chain_trace(
        [(chic, pair.V), (chi, pair.W), (chic, pair.V), (chi, pair.W)], model
    )
    b_c = vw_bracket(pair, chic, model)
    b = vw_bracket(pair, chi, model)
    term2 = pair_window_sum(2.0 * chi, b_c, b_c, model)
    term3 = pair_window_sum(2.0 * chic, b, b, model)
    return term1, term2, term3


def F0(pair, beta, t, model):
    """Operator content of the symmetrized-correlator average."""
    return complex(sum(F0_terms(pair, beta, t, model)))


def predict_F(pair, beta, t, model):
    """Ensemble-mean symmetrized correlator.

    exp(-2 t^2 delta^2 - 3 beta^2 delta^2 / 8) * F0 / trZ_HF.  The residual
    beta-dependent factor reflects the incomplete cancellation between the
    four quarter-power Boltzmann factors of the numerator and the full
    Boltzmann factor of the denominator.
    """
    d2 = model.delta ** 2
    env = np.exp(-2.0 * t * t * d2 - 3.0 * beta * beta * d2 / 8.0)
    return env * F0(pair, beta, t, model) / trZ_HF(beta, model)


# ---------------------------------------------------------------------------
# squared-commutator correlator

def _trace_chain_args(beta, t, which):
    # Factor arguments of the two four-propagator traces, with the Boltzmann
    # argument merged into the neighboring evolution factor.
    if which == "A":  # Tr[Y(it-b) V Y(-it) W Y(it) V Y(-it) W]
        return (1j * t - beta, -1j * t, 1j * t, -1j * t)
    if which == "B":  # Tr[Y(-it-b) W Y(it) V Y(-it) W Y(it) V]
        return (-1j * t - beta, 1j * t, -1j * t, 1j * t)
    raise ValueError(which)


def _four_factor_terms(pair, beta, t, model, which):
    """Surviving contraction terms of one four-propagator trace.

    Returns (factorized, pair_13, pair_24).  Operators alternate V, W, V, W
    for trace A and W, V, W, V for trace B; in either case every enclosed
    chain is a mixed <VW> diagonal, so no term is killed by the vanishing
    one-point functions.
    """
    d2 = model.delta ** 2
    chis = _trace_chain_args(beta, t, which)
    c1, c2, c3, c4 = chis
    if which == "A":
        mats = (pair.V, pair.W, pair.V, pair.W)
    else:
        mats = (pair.W, pair.V, pair.W, pair.V)

    mean_env = np.exp(0.5 * d2 * sum(c * c for c in chis))
    factorized = mean_env * hf_chain_trace(
        [(c1, mats[0]), (c2, mats[1]), (c3, mats[2]), (c4, mats[3])], model
    )

    # factors 1 and 3 contracted, 2 and 4 averaged
    chi13 = c1 + c3
    env13 = np.exp(0.5 * d2 * (c2 * c2 + c4 * c4) + 0.25 * d2 * chi13 * chi13)
    b2 = vw_bracket(pair, c2, model)
    b4 = vw_bracket(pair, c4, model)
    pair13 = env13 * pair_window_sum(chi13, b2, b4, model)

    # factors 2 and 4 contracted, 1 and 3 averaged
    chi24 = c2 + c4
    env24 = np.exp(0.5 * d2 * (c1 * c1 + c3 * c3) + 0.25 * d2 * chi24 * chi24)
    b1 = vw_bracket(pair, c1, model)
    b3 = vw_bracket(pair, c3, model)
    pair24 = env24 * pair_window_sum(chi24, b1, b3, model)

    return factorized, pair13, pair24


def C0_terms(pair, beta, t, model):
    """The six terms of the oscillatory squared-commutator content.

    Keys 'A_mean', 'A_13', 'A_24', 'B_mean', 'B_13', 'B_24' hold the raw
    numerator contributions of the two four-propagator traces (no envelope
    stripped), each validated pattern-by-pattern against the contraction
    oracle.
    """
    a = _four_factor_terms(pair, beta, t, model, "A")
    b = _four_factor_terms(pair, beta, t, model, "B")
    return {
        "A_mean": a[0], "A_13": a[1], "A_24": a[2],
        "B_mean": b[0], "B_13": b[1], "B_24": b[2],
    }


def C0(pair, beta, t, model):
    """Oscillatory content of the squared-commutator average.

    Defined so that the first two traces of the commutator expansion
    contribute -exp(-2 t^2 delta^2) C0 / trZ_HF to the correlator mean.
    """
    d2 = model.delta ** 2
    terms = C0_terms(pair, beta, t, model)
    num_ab = sum(terms.values())
    return complex(
        np.exp(2.0 * t * t * d2 - 0.5 * beta * beta * d2) * num_ab
    )


def C_meanfield_terms(pair, beta, t, model):
    """Factorized terms of the two operator-squared traces.

    G_W(t) = Tr(Z_HF W e^{itH} V^2 e^{-itH} W) and the V <-> W partner; each
    enters the correlator mean with envelope exp(-t^2 delta^2) because only
    two evolution factors are averaged.  These decohere on the same window
    time scale and vanish from the large-time asymptote.
    """
    v2 = pair.V @ pair.V
    w2 = pair.W @ pair.W
    g_w = hf_chain_trace(
        [(-beta, pair.W), (1j * t, v2), (-1j * t, pair.W)], model
    )
    g_v = hf_chain_trace(
        [(-beta, pair.V), (-1j * t, w2), (1j * t, pair.V)], model
    )
    return g_w, g_v


def C_asymptote(pair, beta, model):
    """Time-independent tail of the squared-commutator average.

    [sum_m (W Z_HF W)_mm * (2 sqrt(pi) rho delta)^-1
       sum_l exp(-(E_m - E_l)^2 / (4 delta^2)) (V^2)_ll
     + (V <-> W)] / trZ_HF.

    The 1/(2 sqrt(pi) rho delta) weight is the k = 2 contraction
    normalization (the same one that appears in the partition-trace
    correlation); it is the value the contraction oracle and the Monte
    Carlo asymptote both produce.
    """
    e = model.energies
    zw = np.exp(-beta * e)
    gauss = np.exp(-((e[:, None] - e[None, :]) ** 2) / (4.0 * model.delta ** 2))
    pref = 1.0 / (2.0 * np.sqrt(np.pi) * model.rho * model.delta)

    wzw = (pair.W * pair.W) @ zw          # (W Z_HF W)_mm
    vzv = (pair.V * pair.V) @ zw
    v2d = np.einsum("ml,ml->m", pair.V, pair.V)   # (V^2)_mm
    w2d = np.einsum("ml,ml->m", pair.W, pair.W)

    asym_w = pref * (wzw @ gauss @ v2d)
    asym_v = pref * (vzv @ gauss @ w2d)
    return float((asym_w + asym_v) / trZ_HF(beta, model))


def predict_C(pair, beta, t, model):
    """Ensemble-mean squared-commutator correlator.

    Assembles the oscillatory content (envelope exp(-2 t^2 delta^2)), the
    factorized operator-squared terms (envelope exp(-t^2 delta^2)) and the
    time-independent asymptote; all share the same Boltzmann normalization,
    so the window inflation factor exp(beta^2 delta^2 / 2) cancels.
    """
    d2 = model.delta ** 2
    z_hf = trZ_HF(beta, model)

    num_ab = sum(C0_terms(pair, beta, t, model).values())
    num_ab *= np.exp(-0.5 * beta * beta * d2)

    g_w, g_v = C_meanfield_terms(pair, beta, t, model)
    meanfield = np.exp(-t * t * d2) * (g_w + g_v)

    value = (-num_ab + meanfield) / z_hf + C_asymptote(pair, beta, model)
    if abs(value.imag) > 1e-9 * (abs(value.real) + 1.0):
        raise ArithmeticError(f"imaginary residue {value.imag:.3e} in C prediction")
    return float(value.real)
