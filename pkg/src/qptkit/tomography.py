"""Tomographic settings, forward model and synthetic coincidence counts."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from itertools import product

import numpy as np

from .process import (
    ProcessMatrix,
    compose_after,
    depolarizing_chi,
    pauli_basis,
)
from .qcore import SIGMA_I, SIGMA_Z, PureState, Rng, ket

ALPHABET = "HVDR"
TWO_QUBIT_LABELS = tuple(a + b for a, b in product(ALPHABET, repeat=2))
N_SETTINGS = len(TWO_QUBIT_LABELS) ** 2


@dataclass(frozen=True)
class Setting:
    input_label: str
    analyzer_label: str

    def __post_init__(self):
        for lab in (self.input_label, self.analyzer_label):
            if len(lab) != 2 or any(ch not in ALPHABET for ch in lab):
                raise ValueError(f"bad setting label {lab!r}")

    @property
    def input_state(self) -> PureState:
        return PureState(ket(self.input_label), label=self.input_label)

    @property
    def analyzer_state(self) -> PureState:
        return PureState(ket(self.analyzer_label), label=self.analyzer_label)

    @property
    def key(self) -> tuple[str, str]:
        return self.input_label, self.analyzer_label


@lru_cache(maxsize=None)
def standard_settings() -> tuple[Setting, ...]:
    """All 256 input/analyzer pairs; inputs vary slowest."""
    return tuple(Setting(a, b) for a in TWO_QUBIT_LABELS for b in TWO_QUBIT_LABELS)


def setting_index(input_label: str, analyzer_label: str) -> int:
    return TWO_QUBIT_LABELS.index(input_label) * 16 + TWO_QUBIT_LABELS.index(analyzer_label)


@dataclass(frozen=True)
class NoiseSpec:
    depolarizing: float = 0.0
    dephasing: float = 0.0
    count_noise: str = "none"

    def __post_init__(self):
        if not 0.0 <= self.depolarizing <= 1.0:
            raise ValueError("depolarizing strength must lie in [0, 1]")
        if not 0.0 <= self.dephasing <= 1.0:
            raise ValueError("dephasing strength must lie in [0, 1]")
        if self.count_noise not in ("none", "poisson"):
            raise ValueError("count_noise must be 'none' or 'poisson'")

    def to_dict(self) -> dict:
        return {
            "depolarizing": self.depolarizing,
            "dephasing": self.dephasing,
            "count_noise": self.count_noise,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "NoiseSpec":
        return cls(
            float(d.get("depolarizing", 0.0)),
            float(d.get("dephasing", 0.0)),
            str(d.get("count_noise", "none")),
        )


@dataclass
class CountSet:
    """Coincidence counts keyed by ``(input_label, analyzer_label)``."""

    counts: dict
    total_pairs: float
    seed: int | None = None
    noise: NoiseSpec | None = None
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.total_pairs > 0:
            raise ValueError("total_pairs must be positive")
        clean = {}
        for key, c in self.counts.items():
            Setting(*key)
            if key in clean:
                raise ValueError(f"duplicate record {key}")
            c = int(c)
            if c < 0:
                raise ValueError(f"negative counts for {key}")
            clean[tuple(key)] = c
        self.counts = clean

    @property
    def complete(self) -> bool:
        return len(self.counts) == N_SETTINGS

    def require_complete(self) -> None:
        if not self.complete:
            missing = [s.key for s in standard_settings() if s.key not in self.counts]
            raise ValueError(f"count set is missing {len(missing)} settings, e.g. {missing[:4]}")

    def vector(self) -> np.ndarray:
        """Counts in ``standard_settings`` order."""
        self.require_complete()
        return np.array([self.counts[s.key] for s in standard_settings()], dtype=float)

    def frequencies(self) -> np.ndarray:
        return self.vector() / self.total_pairs

    @classmethod
    def from_vector(cls, counts, total_pairs, **kw) -> "CountSet":
        counts = np.asarray(counts)
        if counts.shape != (N_SETTINGS,):
            raise ValueError(f"expected {N_SETTINGS} counts")
        return cls({s.key: int(c) for s, c in zip(standard_settings(), counts)}, total_pairs, **kw)


@lru_cache(maxsize=None)
def _amplitude_table() -> np.ndarray:
    """``x[s, m] = <psi_b| A_m |phi_a>`` for every standard setting."""
    basis = pauli_basis(2)
    phis = np.array([ket(lab) for lab in TWO_QUBIT_LABELS])
    # y[b, a, m] = <psi_b| A_m |phi_a>
    y = np.einsum("bi,mij,aj->bam", phis.conj(), basis.elements, phis)
    x = y.transpose(1, 0, 2).reshape(N_SETTINGS, 16)
    x.setflags(write=False)
    return x


def amplitude_table(chi_or_basis=None) -> np.ndarray:
    basis = getattr(chi_or_basis, "basis", chi_or_basis)
    if basis is not None and basis.name != "pauli-2q":
        raise ValueError("the tomography forward model is tabulated in the Pauli basis")
    return _amplitude_table()


@lru_cache(maxsize=None)
def design_matrix() -> np.ndarray:
    """Rows ``B[s, m*16+n] = x_m x_n^*`` so that ``p = B @ vec(chi)``."""
    x = _amplitude_table()
    b = np.einsum("sm,sn->smn", x, x.conj()).reshape(N_SETTINGS, 256)
    b.setflags(write=False)
    return b


def predicted_probabilities(chi: ProcessMatrix, allow_unphysical: bool = False, clip: bool = True) -> np.ndarray:
    """Probabilities for all standard settings, in ``standard_settings`` order."""
    if not chi.physical and not allow_unphysical:
        raise ValueError("refusing to predict from an unconstrained process matrix")
    x = amplitude_table(chi)
    p = np.real(np.einsum("sm,mn,sn->s", x, chi.chi, x.conj()))
    return np.clip(p, 0.0, 1.0) if clip else p


def predict_probability(chi: ProcessMatrix, setting: Setting, allow_unphysical: bool = False) -> float:
    if not chi.physical and not allow_unphysical:
        raise ValueError("refusing to predict from an unconstrained process matrix")
    phi = setting.input_state.amplitudes
    psi = setting.analyzer_state.amplitudes
    x = np.einsum("i,mij,j->m", psi.conj(), chi.basis.elements, phi)
    p = np.real(x @ chi.chi @ x.conj())
    return float(min(max(p, 0.0), 1.0))


def dephasing_kraus(q: float) -> list[np.ndarray]:
    """Phase damping on both qubits; coherences shrink by ``1 - q`` per qubit."""
    k0 = np.sqrt(1 - q / 2) * SIGMA_I
    k1 = np.sqrt(q / 2) * SIGMA_Z
    return [np.kron(a, b) for a in (k0, k1) for b in (k0, k1)]


def apply_noise(chi: ProcessMatrix, noise: NoiseSpec, allow_unphysical: bool = False) -> ProcessMatrix:
    """Output dephasing followed by depolarizing mixture; both keep CP and TP."""
    if not chi.physical and not allow_unphysical:
        raise ValueError("noise can only be applied to a physical process")
    p, q = noise.depolarizing, noise.dephasing
    out = chi
    if q > 0:
        out = compose_after(out, dephasing_kraus(q))
    if p > 0:
        dep = depolarizing_chi(chi.basis)
        out = ProcessMatrix((1 - p) * out.chi + p * dep.chi, chi.basis, flags=chi.flags)
    return out


def simulate_counts(
    chi: ProcessMatrix,
    total_pairs: float,
    noise: NoiseSpec | None = None,
    rng=0,
    allow_unphysical: bool = False,
) -> CountSet:
    """Expected or Poisson-sampled counts for all 256 settings.

    Each setting draws from its own substream keyed by its index, so the
    result does not depend on evaluation order.  Unconstrained processes
    are refused unless ``allow_unphysical`` is set; their probabilities are
    then clipped to [0, 1].
    """
    if total_pairs <= 0:
        raise ValueError("total_pairs must be positive")
    noise = noise or NoiseSpec()
    rng = rng if isinstance(rng, Rng) else Rng(rng)
    noisy = apply_noise(chi, noise, allow_unphysical=allow_unphysical)
    mu = total_pairs * predicted_probabilities(noisy, allow_unphysical=allow_unphysical)
    if noise.count_noise == "poisson":
        counts = np.array([rng.substream(i).poisson(m) for i, m in enumerate(mu)])
    else:
        counts = np.rint(mu)
    return CountSet.from_vector(counts.astype(np.int64), total_pairs, seed=rng.seed, noise=noise)

