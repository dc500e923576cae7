import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qptkit import kernels
from qptkit.kernels import _numpy_kernels
from qptkit.metrics import sample_kets
from qptkit.process import CNOT, random_physical_chi, superoperator
from qptkit.qcore import Rng, concurrence, linear_entropy_normalized, state_fidelity
from qptkit.recon import TVEC_LEN, _constraint_rows
from qptkit.tomography import amplitude_table

compiled = pytest.mark.skipif("compiled" not in kernels.available_backends(), reason="extension not built")
seeds = st.integers(min_value=0, max_value=2**32 - 1)


def test_backend_switch():
    assert kernels.BACKEND in kernels.available_backends()
    prev = kernels.use_backend("numpy")
    try:
        assert kernels.BACKEND == "numpy"
    finally:
        kernels.use_backend(prev)
    with pytest.raises(ValueError):
        kernels.use_backend("fortran")


def test_numpy_sweep_matches_scalar_measures():
    chi = random_physical_chi(Rng(1))
    kets = sample_kets(50, Rng(2))
    rows = _numpy_kernels.sweep_rows(superoperator(chi), CNOT.matrix, kets)
    from qptkit.process import apply_process

    # concurrence of a rank-deficient state takes square roots of round-off
    # eigenvalues, so tangles agree only to ~1e-8 between implementations
    for ket, row in zip(kets, rows):
        rho_in = np.outer(ket, ket.conj())
        out = apply_process(chi, rho_in).entries
        target = CNOT.matrix @ ket
        assert row[0] == pytest.approx(concurrence(rho_in) ** 2, abs=1e-7)
        assert row[1] == pytest.approx(concurrence(out) ** 2, abs=1e-7)
        assert row[3] == pytest.approx(state_fidelity(np.outer(target, target.conj()), out), abs=1e-9)
        assert row[4] == pytest.approx(linear_entropy_normalized(out), abs=1e-9)


@compiled
@settings(max_examples=20, deadline=None)
@given(seeds)
def test_objective_backends_agree(seed):
    from qptkit.kernels import _ckernels

    gen = np.random.default_rng(seed)
    t = gen.standard_normal(TVEC_LEN) * 0.3
    counts = gen.poisson(100, 256).astype(float)
    lam = float(gen.uniform(0, 1e4))
    args = (t, amplitude_table(), _constraint_rows(), counts, 2000.0, lam)
    fn, gn = _numpy_kernels.objective_and_gradient(*args)
    fc, gc = _ckernels.objective_and_gradient(*args)
    assert fc == pytest.approx(fn, rel=1e-12)
    np.testing.assert_allclose(gc, gn, rtol=1e-10, atol=1e-9 * np.abs(gn).max())


@compiled
@settings(max_examples=10, deadline=None)
@given(seeds)
def test_sweep_backends_agree(seed):
    from qptkit.kernels import _ckernels

    chi = random_physical_chi(Rng(seed))
    kets = sample_kets(300, Rng(seed))
    s = superoperator(chi)
    a = _numpy_kernels.sweep_rows(s, CNOT.matrix, kets)
    b = _ckernels.sweep_rows(s, CNOT.matrix, kets, 1)
    # fidelity and entropy columns are well conditioned; tangles see the
    # square-root amplification of round-off near rank deficiency
    np.testing.assert_allclose(b[:, 3:], a[:, 3:], atol=1e-12)
    np.testing.assert_allclose(b[:, :3], a[:, :3], atol=1e-7)


@compiled
def test_sweep_thread_count_is_bitwise_irrelevant():
    from qptkit.kernels import _ckernels

    chi = random_physical_chi(Rng(4))
    kets = sample_kets(2000, Rng(4))
    s = superoperator(chi)
    one = _ckernels.sweep_rows(s, CNOT.matrix, kets, 1)
    for threads in (2, 4):
        assert np.array_equal(one, _ckernels.sweep_rows(s, CNOT.matrix, kets, threads))


@compiled
@settings(max_examples=50, deadline=None)
@given(seeds, st.integers(min_value=0, max_value=3))
def test_jacobi_eigensolver(seed, degenerate):
    from qptkit.kernels import _ckernels

    gen = np.random.default_rng(seed)
    m = gen.standard_normal((4, 4)) + 1j * gen.standard_normal((4, 4))
    m = m + m.conj().T
    if degenerate:
        # repeated eigenvalues and a zero block stress the rotation logic
        w, v = np.linalg.eigh(m)
        w[:degenerate + 1] = w[0]
        m = (v * w) @ v.conj().T
    w, v, sweeps = _ckernels.heev4(m)
    np.testing.assert_allclose(w, np.linalg.eigvalsh(m), atol=1e-12 * max(1, np.abs(m).max()))
    np.testing.assert_allclose(v @ np.diag(w) @ v.conj().T, m, atol=1e-12 * max(1, np.abs(m).max()))
    np.testing.assert_allclose(v.conj().T @ v, np.eye(4), atol=1e-12)
    assert sweeps <= 30


@compiled
def test_jacobi_trivial_inputs():
    from qptkit.kernels import _ckernels

    w, v, _ = _ckernels.heev4(np.zeros((4, 4)))
    np.testing.assert_array_equal(w, 0)
    w, v, _ = _ckernels.heev4(np.diag([3.0, -1.0, 2.0, 0.0]))
    np.testing.assert_allclose(w, [-1, 0, 2, 3])


def test_fallback_selected_when_extension_missing():
    import subprocess
    import sys

    code = (
        "import sys; sys.modules['qptkit.kernels._ckernels'] = None\n"
        "import qptkit, qptkit.kernels as k\n"
        "print(k.BACKEND, k.available_backends())"
    )
    out = subprocess.run([sys.executable, "-c", code], capture_output=True, text=True, check=True).stdout
    assert out.strip() == "numpy ['numpy']"


@pytest.mark.parametrize("backend", kernels.available_backends())
def test_fit_and_sweep_on_each_backend(backend, chi_cnot):
    from qptkit.metrics import compute_metrics, process_fidelity
    from qptkit.recon import FitConfig, mle_reconstruct
    from qptkit.tomography import NoiseSpec, simulate_counts

    prev = kernels.use_backend(backend)
    try:
        data = simulate_counts(chi_cnot, 2000, NoiseSpec(0.1, 0.0, "poisson"), 1)
        fit = mle_reconstruct(data, FitConfig(restarts=1))
        report, _ = compute_metrics(fit.chi, CNOT, sweep_samples=500)
    finally:
        kernels.use_backend(prev)
    assert fit.tp_defect_final <= 1e-3
    assert abs(process_fidelity(chi_cnot, fit.chi) - 0.90625) < 0.03
    assert 0 < report.min_output_fidelity <= 1
