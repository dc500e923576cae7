"""Gate-performance measures derived from a process matrix.

Closed-form measures (process fidelity, average gate fidelity, the C_P
distance and the average output purity) work directly on chi.  The
direct-subset estimator works on raw counts, and the Monte-Carlo sweep
pushes Haar-random pure inputs through the process.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import product
from typing import NamedTuple

import numpy as np

from . import kernels
from .process import (
    IDENTITY,
    ProcessMatrix,
    UnitaryGate,
    apply_process,
    chi_from_unitary,
    pauli_basis,
    superoperator,
)
from .qcore import DensityMatrix, PureState, Rng, ket, state_fidelity
from .tomography import TWO_QUBIT_LABELS, CountSet

SWEEP_CHUNK = 4096
DEFAULT_SWEEP_SAMPLES = 200_000
SCATTER_COLUMNS = ("input_tangle", "output_tangle", "delta_tangle", "fidelity", "entropy_added")

_RANGE_TOL = 1e-12


class UnsupportedGateError(ValueError):
    """The requested estimator needs a Clifford ideal gate."""


class MissingSettingsError(ValueError):
    def __init__(self, missing, required):
        self.missing = list(missing)
        self.required = list(required)
        shown = ", ".join(f"{a}/{b}" for a, b in self.missing[:8])
        more = "" if len(self.missing) <= 8 else f" (+{len(self.missing) - 8} more)"
        super().__init__(
            f"count set lacks {len(self.missing)} of the {len(self.required)} required "
            f"input/analyzer settings: {shown}{more}"
        )


def _check_unit_interval(value: float, name: str) -> float:
    value = float(value)
    if not -_RANGE_TOL <= value <= 1 + _RANGE_TOL:
        raise ValueError(f"{name} must lie in [0, 1], got {value}")
    return min(max(value, 0.0), 1.0)


# -------------------------------------------------------------- closed forms


def process_fidelity(ideal: ProcessMatrix, actual: ProcessMatrix) -> float:
    """``Tr(chi_ideal chi_actual)`` for a unitary (rank-one, unit-trace) ideal."""
    if ideal.basis.name != actual.basis.name or ideal.d != actual.d:
        raise ValueError(f"basis mismatch: {ideal.basis.name} vs {actual.basis.name}")
    tr = np.real(np.trace(ideal.chi))
    tr2 = np.real(np.vdot(ideal.chi, ideal.chi))
    if abs(tr - 1) > 1e-8 or abs(tr2 - 1) > 1e-8:
        raise ValueError("ideal process must be unitary (rank one with unit trace)")
    f = np.real(np.vdot(ideal.chi, actual.chi))
    return float(min(max(f, 0.0), 1.0))


def choi_fidelity(a: ProcessMatrix, b: ProcessMatrix) -> float:
    """Uhlmann fidelity of two unit-trace process matrices.

    Reduces to ``process_fidelity`` when either argument is unitary; used to
    compare a reconstruction with a mixed (non-unitary) truth.
    """
    if a.basis.name != b.basis.name:
        raise ValueError(f"basis mismatch: {a.basis.name} vs {b.basis.name}")
    return state_fidelity(a.chi, b.chi)


def average_gate_fidelity(process_fid: float, d: int = 4) -> float:
    f = _check_unit_interval(process_fid, "process fidelity")
    if d < 2:
        raise ValueError("dimension must be at least 2")
    return (d * f + 1) / (d + 1)


def cp_distance(process_fid: float) -> tuple[float, float]:
    """``(C_P, bound)`` with ``C_P = sqrt(1 - F_P)`` and the error-probability bound ``C_P**2``."""
    f = _check_unit_interval(process_fid, "process fidelity")
    return float(np.sqrt(1 - f)), 1 - f


def average_output_purity(chi: ProcessMatrix, allow_unphysical: bool = False) -> float:
    """Haar average of ``Tr(E(psi)^2)`` over pure inputs.

    Averaging ``psi (x) psi`` over the Haar measure gives
    ``(d Tr(chi^2) + Tr(E(I)^2) / d) / (d + 1)``.  For unital maps
    ``E(I) = I`` and this is the familiar ``(d Tr(chi^2) + 1) / (d + 1)``;
    the extra term keeps the identity exact for non-unital maps too.
    """
    if not chi.physical and not allow_unphysical:
        raise ValueError("refusing to evaluate an unconstrained process matrix")
    d = chi.d
    e_id = (superoperator(chi) @ np.eye(d).reshape(-1)).reshape(d, d)
    unitality = np.real(np.vdot(e_id, e_id)) / d
    return float((d * np.real(np.vdot(chi.chi, chi.chi)) + unitality) / (d + 1))


# ----------------------------------------------------------- direct subset

# single-qubit Paulis as signed sums of alphabet projectors; R is the -1
# eigenstate of Y so Y = |H><H| + |V><V| - 2|R><R|
_PAULI_WEIGHTS = {
    "I": {"H": 1.0, "V": 1.0},
    "X": {"D": 2.0, "H": -1.0, "V": -1.0},
    "Y": {"H": 1.0, "V": 1.0, "R": -2.0},
    "Z": {"H": 1.0, "V": -1.0},
}


def _two_qubit_weights(label: str) -> dict[str, float]:
    out = {}
    for (a, wa), (b, wb) in product(_PAULI_WEIGHTS[label[0]].items(), _PAULI_WEIGHTS[label[1]].items()):
        out[a + b] = wa * wb
    return out


def clifford_action(gate: UnitaryGate) -> list[tuple[int, int, float]]:
    """``(k, sigma(k), s_k)`` with ``U A_k U^dag = s_k A_sigma(k)``.

    Raises ``UnsupportedGateError`` when conjugation does not map every Pauli
    product to a signed Pauli product.
    """
    basis = pauli_basis(2)
    if gate.d != basis.d:
        raise ValueError("direct fidelity is implemented for two-qubit gates")
    u = gate.matrix
    out = []
    for k, a in enumerate(basis.elements):
        c = basis.coefficients(u @ a @ u.conj().T)
        j = int(np.argmax(np.abs(c)))
        rest = np.delete(c, j)
        if abs(abs(c[j]) - 1) > 1e-9 or np.max(np.abs(rest)) > 1e-9 or abs(c[j].imag) > 1e-9:
            name = gate.name or "the ideal gate"
            raise UnsupportedGateError(
                f"{name} is not Clifford: conjugating {basis.labels[k]} gives no signed Pauli product"
            )
        out.append((k, j, float(np.sign(c[j].real))))
    return out


def direct_fidelity_weights(gate: UnitaryGate) -> dict[tuple[str, str], float]:
    """Affine weights ``w`` with ``F_P = sum w[setting] * p[setting]``."""
    labels = pauli_basis(2).labels
    d = gate.d
    weights: dict[tuple[str, str], float] = {}
    for k, j, s in clifford_action(gate):
        inputs = _two_qubit_weights(labels[k])
        analyzers = _two_qubit_weights(labels[j])
        for a, wa in inputs.items():
            for b, wb in analyzers.items():
                weights[(a, b)] = weights.get((a, b), 0.0) + s * wa * wb / d ** 3
    order = {lab: i for i, lab in enumerate(TWO_QUBIT_LABELS)}
    kept = {key: w for key, w in weights.items() if abs(w) > 1e-15}
    return dict(sorted(kept.items(), key=lambda kv: (order[kv[0][0]], order[kv[0][1]])))


def direct_fidelity_settings(gate: UnitaryGate) -> list[tuple[str, str]]:
    return list(direct_fidelity_weights(gate))


class DirectFidelity(NamedTuple):
    estimate: float
    std_error: float


def direct_process_fidelity(data: CountSet, ideal: UnitaryGate) -> DirectFidelity:
    """Process fidelity from the subset of counts the ideal Clifford gate needs.

    The standard error propagates Poisson variance ``var(c) = c`` through
    the affine weights.
    """
    weights = direct_fidelity_weights(ideal)
    missing = [key for key in weights if key not in data.counts]
    if missing:
        raise MissingSettingsError(missing, list(weights))
    w = np.array(list(weights.values())) / data.total_pairs
    c = np.array([data.counts[key] for key in weights], dtype=float)
    return DirectFidelity(float(w @ c), float(np.sqrt(np.sum(w * w * c))))


# ------------------------------------------------------------- Monte Carlo


def sample_kets(n_samples: int, rng) -> np.ndarray:
    """Haar-random two-qubit kets drawn in fixed-size chunks.

    Chunk ``c`` comes from substream ``c`` of the seed, so the sample set
    depends only on ``(seed, n_samples)``.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    rng = rng if isinstance(rng, Rng) else Rng(rng)
    out = np.empty((n_samples, 4), dtype=np.complex128)
    for c, start in enumerate(range(0, n_samples, SWEEP_CHUNK)):
        stop = min(start + SWEEP_CHUNK, n_samples)
        g = rng.substream(c)
        # interleaved real/imaginary draws keep a short final chunk a prefix
        # of the full-length one
        z = g.standard_normal((stop - start, 4, 2)).view(np.complex128)[..., 0]
        out[start:stop] = z / np.linalg.norm(z, axis=1, keepdims=True)
    return out


def _special_inputs() -> np.ndarray:
    states = [ket(lab) for lab in TWO_QUBIT_LABELS]
    for a in ("D", "A"):
        for b in ("H", "V"):
            states.append(ket(a, b))
    return np.array(states)


@dataclass
class ScatterTable:
    rows: np.ndarray
    seed: int
    columns: tuple = field(default=SCATTER_COLUMNS)

    @property
    def sample_count(self) -> int:
        return self.rows.shape[0]

    def column(self, name: str) -> np.ndarray:
        return self.rows[:, self.columns.index(name)]

    @property
    def min_fidelity(self) -> float:
        return float(self.column("fidelity").min())


def _require_physical(chi: ProcessMatrix, allow_unphysical: bool) -> None:
    if not chi.physical and not allow_unphysical:
        raise ValueError("refusing to evaluate an unconstrained process matrix")


def scatter_sweep(
    chi: ProcessMatrix,
    ideal: UnitaryGate,
    n_samples: int = DEFAULT_SWEEP_SAMPLES,
    rng=0,
    threads: int = 1,
    allow_unphysical: bool = False,
) -> ScatterTable:
    """Per-input tangles, fidelity to the ideal output and output entropy."""
    _require_physical(chi, allow_unphysical)
    if chi.basis.name != "pauli-2q":
        raise ValueError("scatter_sweep expects a two-qubit Pauli-basis chi")
    rng = rng if isinstance(rng, Rng) else Rng(rng)
    kets = sample_kets(n_samples, rng)
    rows = kernels.sweep_rows(superoperator(chi), ideal.matrix, kets, threads)
    return ScatterTable(rows, rng.seed)


def entangling_capability(chi: ProcessMatrix, n_samples: int = DEFAULT_SWEEP_SAMPLES, rng=0, threads: int = 1) -> float:
    """Largest tangle increase over sampled pure inputs plus fixed product candidates."""
    _require_physical(chi, False)
    kets = np.concatenate([_special_inputs(), sample_kets(n_samples, rng)])
    rows = kernels.sweep_rows(superoperator(chi), IDENTITY.matrix, kets, threads)
    return float(max(rows[:, 2].max(), 0.0))


def predict_output(chi: ProcessMatrix, state: PureState, allow_unphysical: bool = False):
    """Output of the process for a pure input; see ``apply_process``."""
    if not isinstance(state, PureState):
        state = PureState(state)
    return apply_process(chi, state.projector(), allow_unphysical=allow_unphysical)


# ----------------------------------------------------------------- report


@dataclass
class MetricsReport:
    process_fidelity: float
    average_gate_fidelity: float
    cp_distance: float
    error_prob_bound: float
    average_purity: float
    average_linear_entropy: float
    entangling_capability: float
    min_output_fidelity: float
    sweep_seed: int
    sweep_samples: int

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def compute_metrics(
    chi: ProcessMatrix,
    ideal: UnitaryGate,
    sweep_samples: int = DEFAULT_SWEEP_SAMPLES,
    seed: int = 0,
    threads: int = 1,
    allow_unphysical: bool = False,
) -> tuple[MetricsReport, ScatterTable]:
    """All report fields; the sweep and the entangling capability share one sample set."""
    _require_physical(chi, allow_unphysical)
    fp = process_fidelity(chi_from_unitary(ideal, chi.basis), chi)
    c_p, bound = cp_distance(fp)
    purity = min(average_output_purity(chi, allow_unphysical=True), 1.0)
    d = chi.d
    entropy = min(max(d / (d - 1) * (1 - purity), 0.0), 1.0)

    rng = Rng(seed)
    kets = sample_kets(sweep_samples, rng)
    sop = superoperator(chi)
    table = ScatterTable(kernels.sweep_rows(sop, ideal.matrix, kets, threads), rng.seed)
    special = kernels.sweep_rows(sop, ideal.matrix, _special_inputs(), threads)
    capability = max(float(table.column("delta_tangle").max()), float(special[:, 2].max()), 0.0)
    report = MetricsReport(
        process_fidelity=fp,
        average_gate_fidelity=average_gate_fidelity(fp, d),
        cp_distance=c_p,
        error_prob_bound=bound,
        average_purity=purity,
        average_linear_entropy=entropy,
        entangling_capability=capability,
        min_output_fidelity=table.min_fidelity,
        sweep_seed=rng.seed,
        sweep_samples=sweep_samples,
    )
    return report, table


def output_density(chi: ProcessMatrix, label_or_amplitudes) -> DensityMatrix:
    """Convenience for labels like ``"DH"`` or explicit amplitude vectors."""
    if isinstance(label_or_amplitudes, str):
        state = PureState(ket(label_or_amplitudes), label=label_or_amplitudes)
    else:
        state = PureState(label_or_amplitudes)
    return predict_output(chi, state)
