"""Dense state algebra for small qubit registers.

States are plain numpy arrays: a pure state is a complex vector of length
``2**n`` and a density matrix is a complex ``2**n x 2**n`` array.  The
``PureState`` and ``DensityMatrix`` helpers validate and label them but the
measures below accept raw arrays as well.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

SIGMA_I = np.eye(2, dtype=np.complex128)
SIGMA_X = np.array([[0, 1], [1, 0]], dtype=np.complex128)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=np.complex128)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=np.complex128)

YY = np.kron(SIGMA_Y, SIGMA_Y)

NORM_TOL = 1e-12
HERMITIAN_TOL = 1e-10
TRACE_TOL = 1e-10
PSD_TOL = 1e-8
PURE_TOL = 1e-10


class Rng:
    """Seeded random stream with reproducible substreams.

    ``substream(*key)`` returns an independent generator that depends only
    on ``(seed, key)``, so work split across threads or chunks draws the same
    numbers regardless of scheduling.
    """

    def __init__(self, seed: int = 0):
        self.seed = int(seed)
        self.generator = np.random.Generator(
            np.random.PCG64(np.random.SeedSequence(self.seed))
        )

    def substream(self, *key: int) -> np.random.Generator:
        seq = np.random.SeedSequence(self.seed, spawn_key=tuple(int(k) for k in key))
        return np.random.Generator(np.random.PCG64(seq))

    def __repr__(self):
        return f"Rng(seed={self.seed})"


def as_generator(rng) -> np.random.Generator:
    if isinstance(rng, Rng):
        return rng.generator
    if isinstance(rng, np.random.Generator):
        return rng
    return Rng(rng).generator


def _n_qubits(dim: int) -> int:
    n = int(dim).bit_length() - 1
    if dim < 2 or (1 << n) != dim:
        raise ValueError(f"dimension {dim} is not a power of two")
    return n


@dataclass(frozen=True)
class PureState:
    amplitudes: np.ndarray
    label: str | None = None

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=np.complex128).reshape(-1)
        _n_qubits(amps.size)
        norm = np.linalg.norm(amps)
        if abs(norm - 1.0) > NORM_TOL:
            raise ValueError(f"state is not normalized (norm {norm:.15g})")
        amps.setflags(write=False)
        object.__setattr__(self, "amplitudes", amps)

    @property
    def n_qubits(self) -> int:
        return _n_qubits(self.amplitudes.size)

    def projector(self) -> np.ndarray:
        return np.outer(self.amplitudes, self.amplitudes.conj())

    def density(self) -> "DensityMatrix":
        return DensityMatrix(self.projector())


@dataclass(frozen=True)
class DensityMatrix:
    entries: np.ndarray
    checked: bool = field(default=True, compare=False)

    def __post_init__(self):
        rho = np.array(self.entries, dtype=np.complex128)
        if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
            raise ValueError("density matrix must be square")
        _n_qubits(rho.shape[0])
        if self.checked:
            validate_density(rho)
        rho.setflags(write=False)
        object.__setattr__(self, "entries", rho)

    @property
    def dim(self) -> int:
        return self.entries.shape[0]


def validate_density(rho: np.ndarray) -> None:
    """Raise ``ValueError`` unless ``rho`` is Hermitian, unit-trace and PSD."""
    dev = np.max(np.abs(rho - rho.conj().T))
    if dev > HERMITIAN_TOL:
        raise ValueError(f"density matrix not Hermitian (deviation {dev:.3g})")
    tr = np.trace(rho)
    if abs(tr - 1.0) > TRACE_TOL:
        raise ValueError(f"density matrix trace {tr.real:.12g} != 1")
    lam = np.linalg.eigvalsh(rho).min()
    if lam < -PSD_TOL:
        raise ValueError(f"density matrix has negative eigenvalue {lam:.3g}")


def _matrix(rho) -> np.ndarray:
    if isinstance(rho, DensityMatrix):
        return rho.entries
    if isinstance(rho, PureState):
        return rho.projector()
    return np.asarray(rho, dtype=np.complex128)


def ket(*labels: str) -> np.ndarray:
    """Product state from single-qubit polarization labels H, V, D, A, R, L."""
    out = np.ones(1, dtype=np.complex128)
    for label in labels:
        for ch in label:
            out = np.kron(out, POLARIZATION[ch])
    return out


_S = 1 / np.sqrt(2)
POLARIZATION = {
    "H": np.array([1, 0], dtype=np.complex128),
    "V": np.array([0, 1], dtype=np.complex128),
    "D": np.array([_S, _S], dtype=np.complex128),
    "A": np.array([_S, -_S], dtype=np.complex128),
    "R": np.array([_S, -1j * _S], dtype=np.complex128),
    "L": np.array([_S, 1j * _S], dtype=np.complex128),
}


def haar_random_pure(n_qubits: int, rng) -> PureState:
    """Draw a Haar-uniform pure state of ``n_qubits`` qubits."""
    if n_qubits < 1:
        raise ValueError("n_qubits must be >= 1")
    return PureState(haar_random_kets(n_qubits, 1, rng)[0])


def haar_random_kets(n_qubits: int, count: int, rng) -> np.ndarray:
    """``count`` Haar-uniform kets as rows of a ``(count, 2**n)`` array."""
    if n_qubits < 1:
        raise ValueError("n_qubits must be >= 1")
    gen = as_generator(rng)
    dim = 1 << n_qubits
    z = gen.standard_normal((count, dim)) + 1j * gen.standard_normal((count, dim))
    return z / np.linalg.norm(z, axis=1, keepdims=True)


def random_unitary(dim: int, rng) -> np.ndarray:
    """Haar-random unitary via QR of a complex Ginibre matrix."""
    gen = as_generator(rng)
    z = (gen.standard_normal((dim, dim)) + 1j * gen.standard_normal((dim, dim))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    d = np.diag(r)
    return q * (d / np.abs(d))


def _psd_sqrt(rho: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh(rho)
    w = np.clip(w, 0.0, None)
    return (v * np.sqrt(w)) @ v.conj().T


def state_fidelity(a, b) -> float:
    """Uhlmann fidelity ``(Tr sqrt(sqrt(a) b sqrt(a)))**2``."""
    ra, rb = _matrix(a), _matrix(b)
    if ra.shape != rb.shape:
        raise ValueError(f"dimension mismatch {ra.shape} vs {rb.shape}")
    # for a pure argument F = <psi|rho|psi> = Tr(a b) exactly; the general
    # route takes square roots of round-off eigenvalues and loses ~1e-8
    if abs(purity(ra) - 1) < PURE_TOL or abs(purity(rb) - 1) < PURE_TOL:
        f = np.real(np.vdot(ra, rb))
        return float(min(max(f, 0.0), 1.0))
    sa = _psd_sqrt(ra)
    m = sa @ rb @ sa
    w = np.linalg.eigvalsh((m + m.conj().T) / 2)
    f = np.sum(np.sqrt(np.clip(w, 0.0, None))) ** 2
    return float(min(max(f, 0.0), 1.0))


def purity(rho) -> float:
    r = _matrix(rho)
    # Tr(rho^2) for Hermitian rho is the squared Frobenius norm
    return float(np.real(np.vdot(r, r)))


def linear_entropy_normalized(rho) -> float:
    r = _matrix(rho)
    d = r.shape[0]
    s = d / (d - 1) * (1.0 - purity(r))
    return float(min(max(s, 0.0), 1.0))


def concurrence(rho) -> float:
    """Wootters concurrence of a two-qubit state."""
    r = _matrix(rho)
    if r.shape != (4, 4):
        raise ValueError("concurrence is defined for two-qubit states only")
    # eigenvalues of rho*rho_tilde equal those of W^dag rho_tilde W with rho = W W^dag
    w, v = np.linalg.eigh(r)
    root = v * np.sqrt(np.clip(w, 0.0, None))
    flipped = YY @ r.conj() @ YY
    m = root.conj().T @ flipped @ root
    lam = np.linalg.eigvalsh((m + m.conj().T) / 2)
    lam = np.sqrt(np.clip(lam, 0.0, None))[::-1]
    return float(max(0.0, lam[0] - lam[1] - lam[2] - lam[3]))


def tangle(rho) -> float:
    """Squared concurrence, in [0, 1]."""
    return float(min(concurrence(rho) ** 2, 1.0))
