"""Monte Carlo engine for the squared-commutator and symmetrized correlators.

Per member, both correlators reduce to traces of operator chains interlaced
with propagators Y(chi) = O diag(e^{chi E}) O^T.  Wrapping every interlaced
operator as O^T M O turns each chain into diagonal scalings of two fixed
transformed operators, so one matrix product per (member, time) evaluates
all four commutator traces and the symmetrized trace.  The identity
Tr(M1 Y(c1) M2 Y(c2) ...) = Tr(M1~ e^{c1 E} M2~ e^{c2 E} ...) holds for any
mixing matrix; junctions where two propagators meet without an interlaced
operator pick up the Gram matrix O^T O, which is the identity in
orthogonalized mode.
"""
from __future__ import annotations

import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from . import analytic
from .ensemble import sample_member
from .propagator import build_Y, trace_Z

__all__ = [
    "RunConfig",
    "OtocSeries",
    "RunFailedError",
    "eval_C",
    "eval_F",
    "member_series",
    "run_series",
    "eval_C_naive",
    "eval_F_naive",
    "eval_C_commutator",
]

_ORTHO_TOL = 1e-10
_IMAG_TOL = 1e-9


class RunFailedError(RuntimeError):
    """More than the tolerated fraction of members failed to evaluate."""


@dataclass
class RunConfig:
    """Configuration of one ensemble-averaged correlator run."""

    ensemble: "EnsembleConfig"
    pair: "ObservablePair"
    beta: float
    t_grid: np.ndarray
    members: int
    normalization_mode: str = "per_member"
    workers: int = 0

    def __post_init__(self):
        model = self.ensemble.spectrum
        self.t_grid = np.asarray(self.t_grid, dtype=float)
        if self.members < 2:
            raise ValueError("members must be >= 2 for variance estimates")
        if self.t_grid.size == 0:
            raise ValueError("t_grid must be nonempty")
        if np.any(self.t_grid < 0) or np.any(np.diff(self.t_grid) < 0):
            raise ValueError("t_grid must be sorted and nonnegative")
        if self.beta < 0:
            raise ValueError("beta must be >= 0")
        if self.beta > 0.25 / model.delta * (1 + 1e-12):
            raise ValueError(
                f"beta = {self.beta:.3g} exceeds 1/(4 delta): the edge-effect "
                "budget of ensemble runs"
            )
        if self.normalization_mode not in ("per_member", "mean_Z"):
            raise ValueError(f"unknown normalization_mode {self.normalization_mode!r}")
        if model.N < 8:
            raise ValueError(f"ensemble runs require N >= 8, got N = {model.N:.3g}")
        if model.N < 16:
            warnings.warn(
                f"N = {model.N:.3g} < 16: leading-order bands are loose",
                stacklevel=2,
            )


@dataclass
class OtocSeries:
    """Per-time Monte Carlo statistics and closed-form predictions."""

    t: np.ndarray
    C_mean: np.ndarray
    C_var: np.ndarray
    C_stderr: np.ndarray
    F_mean: np.ndarray
    F_var: np.ndarray
    F_stderr: np.ndarray
    C_analytic: np.ndarray
    F_analytic: np.ndarray
    M: int
    C_samples: np.ndarray = field(default=None, repr=False)
    F_samples: np.ndarray = field(default=None, repr=False)
    failures: list = field(default_factory=list)


class _MemberChains:
    """Per-member transformed operators and chain-trace evaluation."""

    def __init__(self, member, pair, beta, normalization="per_member", model=None):
        o = member.O
        v = sp.csr_matrix(pair.V)
        w = sp.csr_matrix(pair.W)
        self.E = member.E
        self.beta = beta
        self.Vt = o.T @ (v @ o)
        self.Wt = o.T @ (w @ o)
        self.V2t = o.T @ ((v @ v) @ o)
        self.W2t = o.T @ ((w @ w) @ o)
        self.z = np.exp(-beta * member.E)

        gram = o.T @ o
        self.gram_err = float(np.max(np.abs(gram - np.eye(o.shape[0]))))
        self.orthogonal = self.gram_err < _ORTHO_TOL
        self.G = None if self.orthogonal else gram

        self.S_W = (self.Wt * self.z[None, :]) @ self.Wt
        self.S_V = (self.Vt * self.z[None, :]) @ self.Vt

        if normalization == "per_member":
            self.trZ = trace_Z(member, beta)
        else:
            if model is None:
                raise ValueError("mean_Z normalization needs the spectrum model")
            self.trZ = analytic.mean_trZ(beta, model)

    def commutator_traces(self, t):
        """The four commutator traces at time t (Boltzmann-weighted)."""
        u = np.exp(-1j * t * self.E)
        uc = np.conj(u)
        p = (self.Vt * u[None, :]) @ self.Wt

        if self.orthogonal:
            r_diag = np.einsum("ik,k,ki->i", p, uc, p)
            t_a = np.sum(self.z * uc * r_diag)
            t_b = np.sum(self.z * u * np.conj(r_diag))
        else:
            r = (p * uc[None, :]) @ p
            t_a = np.einsum("i,in,n,ni->", self.z, r, uc, self.G)
            t_b = np.einsum("i,ij,j,ij->", self.z, self.G, u, np.conj(r))

        t_c = np.einsum("j,jk,k,kj->", uc, self.V2t, u, self.S_W)
        t_d = np.einsum("j,jk,k,kj->", u, self.W2t, uc, self.S_V)
        return t_a, t_b, t_c, t_d

    def eval_C(self, t):
        t_a, t_b, t_c, t_d = self.commutator_traces(t)
        total = -(t_a + t_b - t_c - t_d) / self.trZ
        scale = max(abs(t_a), abs(t_b), abs(t_c), abs(t_d), 1e-300) / self.trZ
        if abs(total.imag) > _IMAG_TOL * scale:
            raise ArithmeticError(
                f"imaginary residue {total.imag:.3e} at t = {t} exceeds "
                f"{_IMAG_TOL} of the trace scale"
            )
        return float(total.real)

    def eval_F(self, t):
        chi = -self.beta / 4.0 - 1j * t
        v = np.exp(chi * self.E)
        vc = np.conj(v)
        p = (self.Vt * v[None, :]) @ self.Wt
        num = np.einsum("ik,k,ki,i->", p, vc, p, vc)
        return complex(num / self.trZ)


def member_series(member, pair, beta, t_grid, normalization="per_member",
                  model=None):
    """Both correlators for one member on the full time grid."""
    chains = _MemberChains(member, pair, beta, normalization, model)
    c_row = np.array([chains.eval_C(t) for t in t_grid])
    f_row = np.array([chains.eval_F(t) for t in t_grid], dtype=complex)
    return c_row, f_row


def eval_C(member, pair, beta, t, normalization="per_member", model=None):
    """Squared-commutator correlator of one member at one time.

    Evaluates the four-trace expansion with U(t) = Y(-i t) and Z = Y(-beta);
    the imaginary residue is checked against 1e-9 of the trace scale and
    discarded.
    """
    return _MemberChains(member, pair, beta, normalization, model).eval_C(t)


def eval_F(member, pair, beta, t, normalization="per_member", model=None):
    """Symmetrized correlator of one member at one time (complex)."""
    return _MemberChains(member, pair, beta, normalization, model).eval_F(t)


# ---------------------------------------------------------------------------
# naive dense reference evaluators (independent of the chain fast path)

def eval_C_naive(member, pair, beta, t, normalization="per_member", model=None):
    """Literal dense evaluation of the four-trace expansion."""
    z = build_Y(member, -beta).Y
    u = build_Y(member, -1j * t).Y
    ud = build_Y(member, 1j * t).Y
    v, w = pair.V, pair.W
    t_a = np.trace(z @ v @ u @ w @ ud @ v @ u @ w @ ud)
    t_b = np.trace(z @ u @ w @ ud @ v @ u @ w @ ud @ v)
    t_c = np.trace(z @ w @ ud @ v @ v @ u @ w)
    t_d = np.trace(z @ v @ u @ w @ w @ ud @ v)
    if normalization == "per_member":
        denom = np.trace(z).real
    else:
        denom = analytic.mean_trZ(beta, model)
    return complex(-(t_a + t_b - t_c - t_d) / denom)


def eval_F_naive(member, pair, beta, t, normalization="per_member", model=None):
    """Literal dense evaluation of the eight-factor symmetrized trace."""
    chi = -beta / 4.0 - 1j * t
    y = build_Y(member, chi).Y
    yd = y.conj().T
    v, w = pair.V, pair.W
    num = np.trace(v @ y @ w @ yd @ v @ y @ w @ yd)
    if normalization == "per_member":
        denom = np.trace(build_Y(member, -beta).Y).real
    else:
        denom = analytic.mean_trZ(beta, model)
    return complex(num / denom)


def eval_C_commutator(member, pair, beta, t):
    """Direct squared-commutator form -Tr(Z [W(t), V]^2) / Tr(Z).

    Equals the four-trace expansion exactly when O is orthogonal (the
    expansion commutes Z through U and cancels U^dag U).
    """
    z = build_Y(member, -beta).Y
    u = build_Y(member, -1j * t).Y
    w_t = u @ pair.W @ u.conj().T
    comm = w_t @ pair.V - pair.V @ w_t
    return complex(-np.trace(z @ comm @ comm) / np.trace(z).real)


# ---------------------------------------------------------------------------
# ensemble runs

def run_series(config, member_indices=None, keep_samples=False):
    """Sample members, evaluate both correlators, and accumulate statistics.

    Deterministic given (config, seed) regardless of worker count: results
    land in member-index order before the reduction.  Per-member failures
    are collected; the run aborts if more than 1% of members fail.
    """
    model = config.ensemble.spectrum
    indices = (list(member_indices) if member_indices is not None
               else list(range(config.members)))
    n_t = config.t_grid.size

    c_rows = np.full((len(indices), n_t), np.nan)
    f_rows = np.full((len(indices), n_t), np.nan, dtype=complex)
    failures = []

    def work(pos_idx):
        pos, idx = pos_idx
        member = sample_member(config.ensemble, idx)
        return pos, member_series(
            member, config.pair, config.beta, config.t_grid,
            config.normalization_mode, model,
        )

    jobs = list(enumerate(indices))
    if config.workers and config.workers > 1:
        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            results = []
            for job in jobs:
                results.append(pool.submit(work, job))
            outcomes = []
            for job, fut in zip(jobs, results):
                try:
                    outcomes.append(fut.result())
                except Exception as exc:  # noqa: BLE001 - aggregated below
                    failures.append((job[1], repr(exc)))
    else:
        outcomes = []
        for job in jobs:
            try:
                outcomes.append(work(job))
            except Exception as exc:  # noqa: BLE001 - aggregated below
                failures.append((job[1], repr(exc)))

    for pos, (c_row, f_row) in outcomes:
        c_rows[pos] = c_row
        f_rows[pos] = f_row

    if len(failures) > 0.01 * len(indices):
        raise RunFailedError(
            f"{len(failures)} of {len(indices)} members failed: {failures[:5]}"
        )
    ok = ~np.isnan(c_rows[:, 0])
    c_ok = c_rows[ok]
    f_ok = f_rows[ok]
    m_eff = int(ok.sum())

    c_mean = c_ok.mean(axis=0)
    c_var = c_ok.var(axis=0, ddof=1)
    f_mean = f_ok.mean(axis=0)
    f_var = (np.abs(f_ok - f_mean[None, :]) ** 2).sum(axis=0) / (m_eff - 1)

    c_analytic = np.array(
        [analytic.predict_C(config.pair, config.beta, t, model)
         for t in config.t_grid]
    )
    f_analytic = np.array(
        [analytic.predict_F(config.pair, config.beta, t, model)
         for t in config.t_grid], dtype=complex,
    )

    return OtocSeries(
        t=config.t_grid.copy(),
        C_mean=c_mean,
        C_var=c_var,
        C_stderr=np.sqrt(c_var / m_eff),
        F_mean=f_mean,
        F_var=f_var,
        F_stderr=np.sqrt(f_var / m_eff),
        C_analytic=c_analytic,
        F_analytic=f_analytic,
        M=m_eff,
        C_samples=c_ok if keep_samples else None,
        F_samples=f_ok if keep_samples else None,
        failures=failures,
    )
