"""Spectrum model and sampling of banded locally-GOE ensemble members.

The model Hamiltonian is H = O diag(E) O^T in a fixed reference basis with a
picket-fence reference spectrum of constant level density.  The mixing matrix
O has zero-centered Gaussian entries whose variance is a normalized Gaussian
window of width ``delta`` in the energy distance between the reference level
and the eigenvalue's mean position.  Levels further apart than ``delta`` are
statistically uncorrelated; ``N = delta / d`` counts the levels inside one
correlation window and is the large parameter of the model.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "SpectrumModel",
    "EnsembleConfig",
    "EnsembleMember",
    "DegenerateDrawError",
    "window_weight",
    "sample_member",
    "build_hamiltonian",
    "wigner_surmise",
]


class DegenerateDrawError(RuntimeError):
    """Raised when a Gaussian draw cannot be orthogonalized."""


@dataclass
class SpectrumModel:
    """Picket-fence reference spectrum with constant level density.

    Parameters
    ----------
    D : int
        Number of levels.
    delta : float
        Correlation width (energy units).
    d : float
        Mean level spacing; the density is ``rho = 1/d``.
    """

    D: int
    delta: float
    d: float = 1.0

    def __post_init__(self):
        if self.D < 1:
            raise ValueError(f"D must be >= 1, got {self.D}")
        if self.d <= 0:
            raise ValueError(f"mean spacing d must be > 0, got {self.d}")
        if self.delta <= 0:
            raise ValueError(f"delta must be > 0, got {self.delta}")
        if self.N < 1:
            raise ValueError(
                f"N = delta/d = {self.N:.3g} < 1: the correlation window must "
                "hold at least one level"
            )

    @classmethod
    def from_window_count(cls, D, N, d=1.0):
        """Build a model from the level count ``N`` inside one window."""
        return cls(D=D, delta=N * d, d=d)

    @property
    def rho(self):
        """Constant level density 1/d."""
        return 1.0 / self.d

    @property
    def N(self):
        """Number of levels inside the correlation window, delta/d."""
        return self.delta / self.d

    @property
    def energies(self):
        """Picket-fence levels m*d for m = 0..D-1."""
        return np.arange(self.D) * self.d


@dataclass
class EnsembleConfig:
    """Sampling configuration for ensemble members.

    ``eigenvalue_mode`` is 'picket' (eigenvalues frozen at their mean
    positions) or 'goe_unfolded' (GOE eigenvalues unfolded to constant
    density).  ``overlap_mode`` is 'gaussian' (independent Gaussian entries,
    the analytically tractable statistics) or 'orthogonalized' (polar factor
    of the Gaussian draw; exactly orthogonal, used for time evolution).
    Entries with |E_m - Ebar_a| > band_cutoff*delta are not sampled.
    """

    spectrum: SpectrumModel
    eigenvalue_mode: str = "picket"
    overlap_mode: str = "gaussian"
    band_cutoff: float = 6.0
    seed: int = 0
    window: str = "gaussian"  # 'lorentzian' reserved, not implemented

    _EIGENVALUE_MODES = ("picket", "goe_unfolded")
    _OVERLAP_MODES = ("gaussian", "orthogonalized")

    def __post_init__(self):
        if self.eigenvalue_mode not in self._EIGENVALUE_MODES:
            raise ValueError(f"unknown eigenvalue_mode {self.eigenvalue_mode!r}")
        if self.overlap_mode not in self._OVERLAP_MODES:
            raise ValueError(f"unknown overlap_mode {self.overlap_mode!r}")
        if self.window != "gaussian":
            raise NotImplementedError(
                f"window {self.window!r} is reserved but not implemented"
            )
        if self.band_cutoff < 4:
            raise ValueError(
                f"band_cutoff must be >= 4 (tail truncation below e^-8), "
                f"got {self.band_cutoff}"
            )
        self.seed = int(self.seed)

    @property
    def bandwidth(self):
        """Half-bandwidth of O in index units, floor(band_cutoff * N)."""
        return int(np.floor(self.band_cutoff * self.spectrum.N))


@dataclass
class EnsembleMember:
    """One sampled realization: mixing matrix O and eigenvalue list E.

    ``Ebar`` always holds the picket grid (the ensemble means of E).
    In orthogonalized mode O^T O = 1 to 1e-12 per entry; in gaussian mode
    the entries are independent and exactly zero outside the band.
    """

    O: np.ndarray
    E: np.ndarray
    Ebar: np.ndarray
    member_index: int = field(default=-1)

    @property
    def D(self):
        return self.O.shape[0]


def window_weight(e_m, e_bar, model):
    """Normalized Gaussian window of width delta.

    Returns exp(-(e_m - e_bar)^2 / (2 delta^2)) / (sqrt(2 pi) rho delta).
    This is the variance of the mixing-matrix entry connecting a reference
    level at ``e_m`` with an eigenvector centered at ``e_bar``.  Accepts
    scalars or arrays (broadcast).
    """
    x = np.asarray(e_m, dtype=float) - np.asarray(e_bar, dtype=float)
    norm = np.sqrt(2.0 * np.pi) * model.rho * model.delta
    return np.exp(-(x ** 2) / (2.0 * model.delta ** 2)) / norm


def _member_rng(config, member_index, attempt=0):
    # Per-member substream: deterministic, independent across indices,
    # independent of evaluation order and worker count.
    ss = np.random.SeedSequence(entropy=config.seed,
                                spawn_key=(member_index, attempt))
    return np.random.default_rng(ss)


def _semicircle_cdf(x, radius):
    """CDF of the semicircle law on [-radius, radius]."""
    x = np.clip(x / radius, -1.0, 1.0)
    return 0.5 + (x * np.sqrt(1.0 - x ** 2) + np.arcsin(x)) / np.pi


def _goe_unfolded_levels(rng, model):
    """GOE eigenvalues mapped to constant density rho via exact unfolding."""
    D = model.D
    a = rng.standard_normal((D, D))
    h = 0.5 * (a + a.T)
    ev = np.linalg.eigvalsh(h)
    radius = np.sqrt(2.0 * D)  # semicircle edge for <h_offdiag^2> = 1/2
    u = D * _semicircle_cdf(ev, radius)
    return np.sort(u - 0.5) * model.d


def _polar_orthogonal(x):
    """Nearest orthogonal matrix (polar factor) of x."""
    u, s, vt = np.linalg.svd(x)
    if s[-1] < 1e-10 * s[0]:
        raise DegenerateDrawError(
            f"singular value ratio {s[-1] / s[0]:.2e}: degenerate draw"
        )
    return u @ vt


def _polar_newton(x, tol=1e-13, max_iter=60):
    """Polar factor by Newton iteration x <- (x + x^-T)/2 (reference path)."""
    y = np.array(x, dtype=float)
    for _ in range(max_iter):
        try:
            y_next = 0.5 * (y + np.linalg.inv(y).T)
        except np.linalg.LinAlgError as exc:
            raise DegenerateDrawError(str(exc)) from exc
        if not np.all(np.isfinite(y_next)):
            raise DegenerateDrawError("Newton iteration diverged")
        delta = np.max(np.abs(y_next - y))
        y = y_next
        if delta < tol:
            return y
    gram_err = np.max(np.abs(y.T @ y - np.eye(y.shape[0])))
    if gram_err > tol * 100:
        raise DegenerateDrawError(f"no convergence, |O^T O - 1| = {gram_err:.2e}")
    return y


def sample_member(config, member_index):
    """Sample one ensemble member (O, E) for the given index.

    Deterministic in (config, seed, member_index); members with distinct
    indices are statistically independent.  Pure function, safe to call
    concurrently.
    """
    model = config.spectrum
    D = model.D
    ebar = model.energies

    for attempt in range(4):
        rng = _member_rng(config, member_index, attempt)
        if config.eigenvalue_mode == "picket":
            ev = ebar.copy()
        else:
            ev = _goe_unfolded_levels(rng, model)

        # Gaussian draw inside the band, zero outside.
        bw = config.bandwidth
        mm = np.arange(D)
        mask = np.abs(mm[:, None] - mm[None, :]) <= bw
        sd = np.sqrt(window_weight(ebar[:, None], ebar[None, :], model))
        o = np.zeros((D, D))
        o[mask] = rng.standard_normal(int(mask.sum())) * sd[mask]

        if config.overlap_mode == "gaussian":
            return EnsembleMember(O=o, E=ev, Ebar=ebar, member_index=member_index)
        try:
            o = _polar_orthogonal(o)
        except DegenerateDrawError:
            continue  # resample from a perturbed substream
        return EnsembleMember(O=o, E=ev, Ebar=ebar, member_index=member_index)

    raise DegenerateDrawError(
        f"orthogonalization failed for member {member_index} after 4 attempts"
    )


def build_hamiltonian(member):
    """H = O diag(E) O^T; real symmetric by construction."""
    h = (member.O * member.E[None, :]) @ member.O.T
    return 0.5 * (h + h.T)


def wigner_surmise(s):
    """GOE nearest-neighbor spacing density (pi s / 2) exp(-pi s^2 / 4)."""
    s = np.asarray(s, dtype=float)
    return 0.5 * np.pi * s * np.exp(-0.25 * np.pi * s ** 2)
