"""Process reconstruction from coincidence counts.

Two estimators are provided.  ``linear_inversion`` solves the forward model
exactly and can return a matrix with negative eigenvalues.  ``mle_reconstruct``
fits ``chi = T^dag T`` with ``T`` lower triangular, so every candidate is
positive semidefinite, and adds a quadratic penalty on the trace-preservation
condition.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from functools import lru_cache

import numpy as np
import scipy.linalg as la
from scipy.optimize import curve_fit, minimize

from . import kernels
from .process import (
    PHYSICAL,
    UNCONSTRAINED,
    ProcessMatrix,
    cp_defect,
    pauli_basis,
    tp_defect,
)
from .qcore import Rng
from .tomography import CountSet, amplitude_table, design_matrix, predicted_probabilities

log = logging.getLogger(__name__)

DIM = 16
TVEC_LEN = DIM * DIM
_TRIL = np.tril_indices(DIM, -1)


class ConvergenceError(RuntimeError):
    """The penalty schedule ended without meeting the trace-preservation bound."""

    def __init__(self, message, result):
        super().__init__(message)
        self.result = result


@dataclass(frozen=True)
class FitConfig:
    lam: float | None = None
    restarts: int = 3
    max_iterations: int = 20000
    gradient_tolerance: float = 1e-9
    function_tolerance: float = 1e-10
    seed: int = 0
    tp_tolerance: float = 1e-3
    tp_target: float = 1e-6
    escalations: int = 5
    perturbation: float = 0.05

    def __post_init__(self):
        if self.lam is not None and not self.lam > 0:
            raise ValueError("lambda must be positive")
        if self.restarts < 1 or self.max_iterations < 1 or self.escalations < 0:
            raise ValueError("restarts and max_iterations must be positive")
        if not (self.gradient_tolerance > 0 and self.function_tolerance > 0):
            raise ValueError("tolerances must be positive")


@dataclass
class FitResult:
    chi: ProcessMatrix
    objective_value: float
    tp_defect_final: float
    iterations_used: int
    restart_index_of_best: int
    lam: float
    cp_defect_final: float = 0.0
    initial_objectives: list = field(default_factory=list)
    tvec: np.ndarray | None = None


@dataclass
class ResidualReport:
    deltas: np.ndarray
    sigma: float
    amplitude: float
    degenerate: bool = False
    bin_centers: np.ndarray | None = None
    bin_counts: np.ndarray | None = None


# ---------------------------------------------------------------- inversion


@lru_cache(maxsize=None)
def _design_lu():
    b = design_matrix()
    if np.linalg.cond(b) > 1e12:
        raise RuntimeError("tomographic design matrix is singular")
    return la.lu_factor(b)


def linear_inversion(data: CountSet) -> ProcessMatrix:
    """Unconstrained process matrix reproducing the measured frequencies exactly."""
    vec = la.lu_solve(_design_lu(), data.frequencies().astype(np.complex128))
    chi = vec.reshape(DIM, DIM)
    chi = (chi + chi.conj().T) / 2
    return ProcessMatrix(chi, pauli_basis(2), flags=(UNCONSTRAINED,))


# ---------------------------------------------------------- parametrization


def _tmatrix(t: np.ndarray) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    if t.shape != (TVEC_LEN,):
        raise ValueError(f"t must have length {TVEC_LEN}, got {t.shape}")
    T = np.zeros((DIM, DIM), dtype=np.complex128)
    T[np.diag_indices(DIM)] = t[:DIM]
    off = t[DIM:].reshape(-1, 2)
    T[_TRIL] = off[:, 0] + 1j * off[:, 1]
    return T


def _tvec(T: np.ndarray) -> np.ndarray:
    off = T[_TRIL]
    return np.concatenate([T.diagonal().real, np.column_stack([off.real, off.imag]).ravel()])


def chi_from_tvec(t) -> ProcessMatrix:
    """``T^dag T`` for the lower-triangular ``T`` encoded by ``t``."""
    T = _tmatrix(t)
    return ProcessMatrix(T.conj().T @ T, pauli_basis(2), flags=(PHYSICAL,))


def tvec_from_chi(chi, ridge: float = 1e-12) -> np.ndarray:
    """Inverse of ``chi_from_tvec`` for a positive semidefinite matrix."""
    m = chi.chi if isinstance(chi, ProcessMatrix) else np.asarray(chi)
    # reversing the index order turns a Cholesky factor L (chi' = L L^dag)
    # into the lower-triangular T with chi = T^dag T
    rev = m[::-1, ::-1] + ridge * np.eye(DIM)
    L = la.cholesky(rev, lower=True)
    T = L[::-1, ::-1].conj().T
    return _tvec(T)


def project_psd(chi: ProcessMatrix) -> np.ndarray:
    """Clip negative eigenvalues and rescale to unit trace."""
    w, v = np.linalg.eigh(chi.chi)
    w = np.clip(w, 0.0, None)
    if w.sum() <= 0:
        return np.eye(DIM) / DIM
    w /= w.sum()
    return (v * w) @ v.conj().T


# ---------------------------------------------------------------- objective


@lru_cache(maxsize=None)
def constraint_tensor() -> np.ndarray:
    """``Q[k, m, n] = Tr(A_k^dag A_n^dag A_m) / d``.

    ``sum_mn chi_mn Q[k, m, n]`` is the coefficient of ``A_k`` in
    ``sum_mn chi_mn A_n^dag A_m``, which must equal ``delta_k0``.
    """
    a = pauli_basis(2).elements
    q = np.einsum("kba,ncb,mca->kmn", a.conj(), a.conj(), a) / 4
    q.setflags(write=False)
    return q


_DELTA = np.eye(DIM)[0]


def constraint_violations(chi: np.ndarray) -> np.ndarray:
    return np.einsum("kmn,mn->k", constraint_tensor(), chi) - _DELTA


def _counts(data) -> tuple[np.ndarray, float]:
    return data.vector(), float(data.total_pairs)


def data_term(chi: np.ndarray, counts: np.ndarray, total: float) -> float:
    x = amplitude_table()
    p = np.real(np.einsum("sm,mn,sn->s", x, chi, x.conj()))
    return float(np.sum((counts - total * p) ** 2) / total)


def penalty_term(chi: np.ndarray) -> float:
    g = constraint_violations(chi)
    return float(np.sum(np.abs(g) ** 2))


def objective_f(t, data: CountSet, lam: float) -> float:
    """Least-squares misfit to the counts plus ``lam`` times the squared TP violations."""
    if lam < 0:
        raise ValueError("lambda must be nonnegative")
    chi = chi_from_tvec(t).chi
    counts, total = _counts(data)
    return data_term(chi, counts, total) + lam * penalty_term(chi)


def objective_gradient(t, data: CountSet, lam: float) -> np.ndarray:
    T = _tmatrix(t)
    chi = T.conj().T @ T
    counts, total = _counts(data)
    x = amplitude_table()
    p = np.real(np.einsum("sm,mn,sn->s", x, chi, x.conj()))
    r = counts - total * p
    # df = Re sum_mn dchi_mn H_mn
    h = -2 * np.einsum("s,sm,sn->mn", r, x, x.conj())
    g = constraint_violations(chi)
    h = h + 2 * lam * np.einsum("k,kmn->mn", g.conj(), constraint_tensor())
    z = T @ (h.T + h.conj())
    off = z[_TRIL]
    return np.concatenate([z.diagonal().real, np.column_stack([off.real, off.imag]).ravel()])


class _Residuals:
    """Residual vector and Jacobian of the scaled objective ``f / C``.

    ``f / C = |r|^2`` with ``r = [(c - C p) / C, sqrt(lam / C) Re g, sqrt(lam / C) Im g]``.
    """

    def __init__(self, data: CountSet, lam: float):
        self.counts, self.total = _counts(data)
        self.lam = lam
        self.x = amplitude_table()
        self.xc = self.x.conj()
        self.q = constraint_tensor()
        self.scale = np.sqrt(lam / self.total)

    def __call__(self, t):
        T = _tmatrix(t)
        w = self.xc @ T.T  # w[s, j] = (T x_s^*)_j
        p = np.sum(np.abs(w) ** 2, axis=1)
        chi = T.conj().T @ T
        g = constraint_violations(chi)
        return np.concatenate([
            (self.counts - self.total * p) / self.total,
            self.scale * g.real,
            self.scale * g.imag,
        ])

    def jac(self, t):
        T = _tmatrix(t)
        w = self.xc @ T.T
        # dp_s / dT_jn = 2 conj(w_sj) conj(x_sn) against the real / imaginary parts of dT
        z = np.einsum("sj,sn->sjn", w, self.x)
        dp = _split(2 * z)
        # dg_k = sum conj(dT) * (T Q_k^T) + sum dT * (conj(T) Q_k)
        a = np.einsum("jm,knm->kjn", T, self.q)
        b = np.einsum("jm,kmn->kjn", T.conj(), self.q)
        dg_re = _tri(a + b)
        dg_im = _tri(-1j * a + 1j * b)
        jg = np.concatenate([dg_re[:, :DIM], _interleave(dg_re[:, DIM:], dg_im[:, DIM:])], axis=1)
        return np.vstack([-dp, self.scale * jg.real, self.scale * jg.imag])


def _tri(z):
    """Diagonal and strictly-lower entries of a stack of matrices, flattened."""
    return np.concatenate([np.diagonal(z, axis1=1, axis2=2), z[:, _TRIL[0], _TRIL[1]]], axis=1)


def _interleave(re, im):
    out = np.empty((re.shape[0], 2 * re.shape[1]), dtype=re.dtype)
    out[:, 0::2] = re
    out[:, 1::2] = im
    return out


def _split(z):
    """Derivative of ``Re sum conj(dT) z`` with respect to the entries of ``t``."""
    flat = _tri(z)
    diag = flat[:, :DIM].real
    off = flat[:, DIM:]
    return np.concatenate([diag, _interleave(off.real, off.imag)], axis=1)


# --------------------------------------------------------------------- MLE


def _minimize(t0, data, lam, config):
    """L-BFGS-B on ``f / C`` using the fused objective/gradient kernel."""
    counts, total = _counts(data)
    x = amplitude_table()
    q = _constraint_rows()

    def fun(t):
        f, g = kernels.objective_and_gradient(t, x, q, counts, total, lam)
        return f / total, g / total

    res = minimize(
        fun,
        np.asarray(t0, dtype=float),
        jac=True,
        method="L-BFGS-B",
        options={
            "maxiter": config.max_iterations,
            "maxfun": 2 * config.max_iterations,
            "ftol": config.function_tolerance,
            "gtol": config.gradient_tolerance,
            "maxcor": 30,
        },
    )
    return res.x, int(res.nit)


@lru_cache(maxsize=None)
def _constraint_rows() -> np.ndarray:
    rows = np.ascontiguousarray(constraint_tensor().reshape(DIM, DIM * DIM))
    rows.setflags(write=False)
    return rows


def initial_points(data: CountSet, config: FitConfig) -> list[np.ndarray]:
    """Projected linear inversion, then seeded perturbations of it."""
    base = tvec_from_chi(project_psd(linear_inversion(data)))
    rng = Rng(config.seed)
    starts = [base]
    for r in range(1, config.restarts):
        starts.append(base + config.perturbation * rng.substream(r).standard_normal(TVEC_LEN))
    return starts


def mle_reconstruct(data: CountSet, config: FitConfig | None = None) -> FitResult:
    """Physical process matrix minimizing the penalized least-squares objective.

    Every restart is optimized at the initial penalty weight; the best one is
    then refined while the weight grows tenfold per step until the
    trace-preservation defect reaches ``tp_target`` or the schedule ends.
    Raises ``ConvergenceError`` if the final defect exceeds ``tp_tolerance``.
    """
    config = config or FitConfig()
    data.require_complete()
    counts, total = _counts(data)
    starts = initial_points(data, config)
    if config.lam is None:
        chi0 = chi_from_tvec(starts[0]).chi
        lam = max(10 * data_term(chi0, counts, total), total)
    else:
        lam = float(config.lam)

    iterations = 0
    best = None
    for r, t0 in enumerate(starts):
        t, nit = _minimize(t0, data, lam, config)
        iterations += nit
        f = objective_f(t, data, lam)
        log.debug("restart %d: f=%.6g after %d iterations", r, f, nit)
        if best is None or f < best[1]:
            best = (t, f, r)
    t, _, best_index = best

    defect = tp_defect(chi_from_tvec(t))
    for _ in range(config.escalations):
        if defect <= config.tp_target:
            break
        lam *= 10
        t, nit = _minimize(t, data, lam, config)
        iterations += nit
        defect = tp_defect(chi_from_tvec(t))
        log.debug("lambda=%.3g: tp_defect=%.3g", lam, defect)

    chi = chi_from_tvec(t)
    result = FitResult(
        chi=chi,
        objective_value=objective_f(t, data, lam),
        tp_defect_final=defect,
        iterations_used=iterations,
        restart_index_of_best=best_index,
        lam=lam,
        cp_defect_final=cp_defect(chi),
        initial_objectives=[objective_f(s, data, lam) for s in starts],
        tvec=t,
    )
    if defect > config.tp_tolerance:
        raise ConvergenceError(
            f"tp_defect {defect:.3g} exceeds {config.tp_tolerance:g} after penalty schedule", result
        )
    return result


# ---------------------------------------------------------------- residuals


def _gaussian(x, amplitude, sigma):
    return amplitude * np.exp(-(x ** 2) / sigma ** 2)


def residuals(chi: ProcessMatrix, data: CountSet, bins: int = 21) -> ResidualReport:
    """Measured minus predicted probabilities and a Gaussian fit to their histogram.

    The histogram uses ``bins`` uniform bins over ``[-max|delta|, max|delta|]``.
    If every delta is the same the fit is skipped and ``sigma`` is 0.
    """
    if not chi.physical:
        raise ValueError("residuals need a physical process matrix")
    deltas = data.frequencies() - predicted_probabilities(chi)
    span = float(np.max(np.abs(deltas)))
    degenerate = bool(np.ptp(deltas) < 1e-12)
    hist, edges = np.histogram(deltas, bins=bins, range=(-span, span) if span > 0 else (-1.0, 1.0))
    centers = (edges[:-1] + edges[1:]) / 2
    if degenerate:
        return ResidualReport(deltas, 0.0, float(len(deltas)), True, centers, hist)
    p0 = (float(hist.max()), max(float(np.std(deltas)) * np.sqrt(2), span / bins))
    try:
        (amp, sigma), _ = curve_fit(_gaussian, centers, hist, p0=p0, maxfev=10000)
    except RuntimeError:
        amp, sigma = p0
    return ResidualReport(deltas, abs(float(sigma)), float(amp), False, centers, hist)


def bootstrap_errors(data: CountSet, config: FitConfig | None = None, n_resamples: int = 5, seed: int = 0):
    """Element-wise standard deviation of chi over Poisson-resampled refits.

    Slow: each resample is a full reconstruction.
    """
    config = config or FitConfig(restarts=1)
    rng = Rng(seed)
    counts = data.vector()
    chis = []
    for i in range(n_resamples):
        fake = rng.substream(i).poisson(counts)
        resampled = CountSet.from_vector(fake, data.total_pairs)
        chis.append(mle_reconstruct(resampled, replace(config, seed=config.seed + i)).chi.chi)
    chis = np.array(chis)
    return np.std(chis.real, axis=0, ddof=1) + 1j * np.std(chis.imag, axis=0, ddof=1)
