"""Process matrices over an operator basis.

A map is stored as ``E(rho) = sum_mn chi[m, n] A_m rho A_n^dag`` with the
unnormalized Pauli products as the default basis.  Coefficients of an
operator ``K`` in that basis are ``Tr(A_m^dag K) / Tr(A_m^dag A_m)``, which
makes a unitary process rank one with unit trace.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from itertools import product

import numpy as np

from .qcore import (
    SIGMA_I,
    SIGMA_X,
    SIGMA_Y,
    SIGMA_Z,
    DensityMatrix,
    _matrix,
    as_generator,
    random_unitary,
)

PHYSICAL = "physical"
UNCONSTRAINED = "unconstrained"

HERMITIAN_TOL = 1e-10
CP_TOL = 1e-8
TP_TOL = 1e-6

PAULI_LABELS = "IXYZ"


@dataclass(frozen=True, eq=False)
class OperatorBasis:
    elements: np.ndarray
    name: str = "pauli-2q"
    labels: tuple = ()

    def __post_init__(self):
        elems = np.array(self.elements, dtype=np.complex128)
        if elems.ndim != 3 or elems.shape[1] != elems.shape[2]:
            raise ValueError("basis elements must be a stack of square matrices")
        if elems.shape[0] != elems.shape[1] ** 2:
            raise ValueError("a complete basis has d**2 elements")
        gram = np.einsum("mij,nij->mn", elems.conj(), elems)
        if np.linalg.matrix_rank(gram) != elems.shape[0]:
            raise ValueError("basis elements are linearly dependent")
        elems.setflags(write=False)
        object.__setattr__(self, "elements", elems)

    @property
    def d(self) -> int:
        return self.elements.shape[1]

    def __len__(self):
        return self.elements.shape[0]

    def __getitem__(self, i):
        return self.elements[i]

    def norms(self) -> np.ndarray:
        """Hilbert-Schmidt norms ``Tr(A_m^dag A_m)``."""
        return np.real(np.einsum("mij,mij->m", self.elements.conj(), self.elements))

    def coefficients(self, op: np.ndarray) -> np.ndarray:
        """Expansion coefficients of ``op`` assuming an orthogonal basis."""
        return np.einsum("mji,ji->m", self.elements.conj(), op) / self.norms()


@lru_cache(maxsize=None)
def pauli_basis(n_qubits: int = 2) -> OperatorBasis:
    """Tensor products of I, X, Y, Z in lexicographic order (leftmost factor first)."""
    if n_qubits < 1:
        raise ValueError("n_qubits must be >= 1")
    single = [SIGMA_I, SIGMA_X, SIGMA_Y, SIGMA_Z]
    elems, labels = [], []
    for combo in product(range(4), repeat=n_qubits):
        m = np.ones((1, 1), dtype=np.complex128)
        for k in combo:
            m = np.kron(m, single[k])
        elems.append(m)
        labels.append("".join(PAULI_LABELS[k] for k in combo))
    name = "pauli-2q" if n_qubits == 2 else f"pauli-{n_qubits}q"
    return OperatorBasis(np.array(elems), name=name, labels=tuple(labels))


@dataclass(frozen=True, eq=False)
class UnitaryGate:
    matrix: np.ndarray
    name: str = ""

    def __post_init__(self):
        u = np.array(self.matrix, dtype=np.complex128)
        if u.ndim != 2 or u.shape[0] != u.shape[1]:
            raise ValueError("gate matrix must be square")
        dev = np.max(np.abs(u.conj().T @ u - np.eye(u.shape[0])))
        if dev > 1e-10:
            raise ValueError(f"matrix is not unitary (deviation {dev:.3g})")
        u.setflags(write=False)
        object.__setattr__(self, "matrix", u)

    @property
    def d(self) -> int:
        return self.matrix.shape[0]


CNOT = UnitaryGate(
    np.array([[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]]), name="cnot"
)
IDENTITY = UnitaryGate(np.eye(4), name="identity")


@lru_cache(maxsize=None)
def cnot_basis() -> OperatorBasis:
    """The Pauli products left-multiplied by the CNOT unitary."""
    pauli = pauli_basis(2)
    elems = np.einsum("ij,mjk->mik", CNOT.matrix, pauli.elements)
    labels = tuple(f"CNOT.{lab}" for lab in pauli.labels)
    return OperatorBasis(elems, name="cnot-2q", labels=labels)


def basis_by_name(name: str) -> OperatorBasis:
    if name == "pauli-2q":
        return pauli_basis(2)
    if name == "cnot-2q":
        return cnot_basis()
    if name.startswith("pauli-") and name.endswith("q"):
        return pauli_basis(int(name[6:-1]))
    raise ValueError(f"unknown basis {name!r}")


@dataclass(frozen=True, eq=False)
class ProcessMatrix:
    chi: np.ndarray
    basis: OperatorBasis = field(default_factory=lambda: pauli_basis(2))
    flags: tuple = (PHYSICAL,)

    def __post_init__(self):
        chi = np.array(self.chi, dtype=np.complex128)
        n = len(self.basis)
        if chi.shape != (n, n):
            raise ValueError(f"chi must be {n}x{n} for basis {self.basis.name}")
        dev = np.max(np.abs(chi - chi.conj().T))
        if dev > HERMITIAN_TOL:
            raise ValueError(f"chi is not Hermitian (deviation {dev:.3g})")
        chi = (chi + chi.conj().T) / 2
        chi.setflags(write=False)
        object.__setattr__(self, "chi", chi)
        object.__setattr__(self, "flags", tuple(self.flags))

    @property
    def d(self) -> int:
        return self.basis.d

    @property
    def physical(self) -> bool:
        return PHYSICAL in self.flags

    def with_flags(self, *flags) -> "ProcessMatrix":
        return ProcessMatrix(self.chi, self.basis, flags=flags)

    def superoperator(self) -> np.ndarray:
        return superoperator(self)


def check_physical(chi: ProcessMatrix, tp_tol: float = TP_TOL) -> None:
    """Raise ``ValueError`` if ``chi`` is not CP and TP within tolerance."""
    cp = cp_defect(chi)
    if cp > CP_TOL:
        raise ValueError(f"chi is not completely positive (cp_defect {cp:.3g})")
    tp = tp_defect(chi)
    if tp > tp_tol:
        raise ValueError(f"chi is not trace preserving (tp_defect {tp:.3g})")


def chi_from_unitary(gate, basis: OperatorBasis | None = None) -> ProcessMatrix:
    u = gate.matrix if isinstance(gate, UnitaryGate) else UnitaryGate(gate).matrix
    basis = basis or pauli_basis(_qubits(u.shape[0]))
    if basis.d != u.shape[0]:
        raise ValueError("gate and basis dimensions differ")
    coef = basis.coefficients(u)
    return ProcessMatrix(np.outer(coef, coef.conj()), basis, flags=(PHYSICAL,))


def chi_from_kraus(kraus, basis: OperatorBasis | None = None, flags=(PHYSICAL,)) -> ProcessMatrix:
    kraus = [np.asarray(k, dtype=np.complex128) for k in kraus]
    basis = basis or pauli_basis(_qubits(kraus[0].shape[0]))
    coefs = np.array([basis.coefficients(k) for k in kraus])
    return ProcessMatrix(coefs.T @ coefs.conj(), basis, flags=flags)


def depolarizing_chi(basis: OperatorBasis | None = None) -> ProcessMatrix:
    """The completely depolarizing map ``rho -> Tr(rho) I / d``."""
    basis = basis or pauli_basis(2)
    n = len(basis)
    return ProcessMatrix(np.eye(n) / n, basis)


def _qubits(d: int) -> int:
    return int(d).bit_length() - 1


def superoperator(chi: ProcessMatrix) -> np.ndarray:
    """Row-major superoperator ``S`` with ``vec(E(rho)) = S @ vec(rho)``."""
    a = chi.basis.elements
    d = chi.d
    s = np.einsum("mn,mij,nkl->ikjl", chi.chi, a, a.conj())
    return s.reshape(d * d, d * d)


def apply_process(chi: ProcessMatrix, rho, allow_unphysical: bool = False):
    """Apply the map to ``rho``.

    Returns a ``DensityMatrix`` for physical processes.  Unconstrained
    processes require ``allow_unphysical=True`` and then yield a raw array,
    since the output need not be a valid state.
    """
    r = _matrix(rho)
    if r.shape != (chi.d, chi.d):
        raise ValueError(f"state of shape {r.shape} does not match process dimension {chi.d}")
    if not chi.physical and not allow_unphysical:
        raise ValueError("refusing to apply an unconstrained process matrix")
    out = (superoperator(chi) @ r.reshape(-1)).reshape(chi.d, chi.d)
    out = (out + out.conj().T) / 2
    if not chi.physical:
        return out
    return DensityMatrix(out, checked=False)


def tp_operator(chi: ProcessMatrix) -> np.ndarray:
    """``sum_mn chi_mn A_n^dag A_m``; the identity for trace-preserving maps."""
    a = chi.basis.elements
    return np.einsum("mn,nji,mjk->ik", chi.chi, a.conj(), a)


def tp_defect(chi: ProcessMatrix) -> float:
    return float(np.max(np.abs(tp_operator(chi) - np.eye(chi.d))))


def cp_defect(chi) -> float:
    m = chi.chi if isinstance(chi, ProcessMatrix) else np.asarray(chi, dtype=np.complex128)
    if np.max(np.abs(m - m.conj().T)) > HERMITIAN_TOL:
        raise ValueError("cp_defect requires a Hermitian matrix")
    lam = np.linalg.eigvalsh((m + m.conj().T) / 2)[0]
    return float(max(0.0, -lam))


def change_basis(chi: ProcessMatrix, target: OperatorBasis) -> ProcessMatrix:
    """Re-express the same map in another orthogonal basis of equal dimension."""
    if target.d != chi.d:
        raise ValueError("basis dimension mismatch")
    # A_m = sum_k M[k, m] B_k
    m = np.einsum("kab,mab->km", target.elements.conj(), chi.basis.elements)
    m /= target.norms()[:, None]
    return ProcessMatrix(m @ chi.chi @ m.conj().T, target, flags=chi.flags)


def to_cnot_basis(chi: ProcessMatrix) -> ProcessMatrix:
    if chi.basis.name != "pauli-2q":
        raise ValueError("to_cnot_basis expects a two-qubit Pauli-basis chi")
    return change_basis(chi, cnot_basis())


def from_cnot_basis(chi: ProcessMatrix) -> ProcessMatrix:
    if chi.basis.name != "cnot-2q":
        raise ValueError("from_cnot_basis expects a CNOT-basis chi")
    return change_basis(chi, pauli_basis(2))


def compose_after(chi: ProcessMatrix, kraus) -> ProcessMatrix:
    """Process matrix of ``rho -> sum_K K E(rho) K^dag``."""
    basis = chi.basis
    out = np.zeros_like(chi.chi)
    for k in kraus:
        # K A_m = sum_j M[j, m] A_j
        ka = np.einsum("ij,mjk->mik", np.asarray(k, dtype=np.complex128), basis.elements)
        m = np.einsum("jab,mab->jm", basis.elements.conj(), ka) / basis.norms()[:, None]
        out += m @ chi.chi @ m.conj().T
    return ProcessMatrix(out, basis, flags=chi.flags)


def random_physical_chi(rng, rank: int | None = None, d: int = 4) -> ProcessMatrix:
    """Random CPTP map from a Haar unitary dilation with ``rank`` Kraus operators."""
    gen = as_generator(rng)
    if rank is None:
        rank = int(gen.integers(1, d * d + 1))
    u = random_unitary(d * rank, gen)
    # Kraus operators are the d x d blocks of the first d columns
    kraus = [u[i * d:(i + 1) * d, :d] for i in range(rank)]
    return chi_from_kraus(kraus, pauli_basis(_qubits(d)))
