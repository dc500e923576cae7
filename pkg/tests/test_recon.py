import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qptkit.metrics import choi_fidelity, process_fidelity
from qptkit.process import PHYSICAL, UNCONSTRAINED, chi_from_kraus, cp_defect
from qptkit.qcore import Rng
from qptkit.recon import (
    TVEC_LEN,
    ConvergenceError,
    FitConfig,
    chi_from_tvec,
    constraint_violations,
    linear_inversion,
    mle_reconstruct,
    objective_f,
    objective_gradient,
    penalty_term,
    project_psd,
    residuals,
    tvec_from_chi,
)
from qptkit.tomography import NoiseSpec, predicted_probabilities, simulate_counts

seeds = st.integers(min_value=0, max_value=2**32 - 1)
POISSON = NoiseSpec(count_noise="poisson")


@pytest.fixture(scope="module")
def poisson_cnot(chi_cnot):
    return simulate_counts(chi_cnot, 2000, POISSON, 3)


@pytest.fixture(scope="module")
def poisson_fit(poisson_cnot):
    return mle_reconstruct(poisson_cnot, FitConfig(restarts=2, seed=1))


# ------------------------------------------------------------ inversion


def test_linear_inversion_noiseless_cnot(chi_cnot):
    # rounding counts to integers limits the round-trip error to ~0.5 / C
    chi = linear_inversion(simulate_counts(chi_cnot, 1e9))
    assert chi.flags == (UNCONSTRAINED,)
    assert np.max(np.abs(chi.chi - chi_cnot.chi)) < 1e-6


def test_linear_inversion_random_round_trip():
    rng = Rng(77)
    from qptkit.process import random_physical_chi

    for i in range(50):
        truth = random_physical_chi(rng.substream(i))
        chi = linear_inversion(simulate_counts(truth, 1e9))
        assert np.max(np.abs(chi.chi - truth.chi)) < 1e-6


def test_linear_inversion_unphysical_on_noise(chi_cnot):
    chi = linear_inversion(simulate_counts(chi_cnot, 2000, POISSON, 0))
    assert cp_defect(chi) > 0


# ------------------------------------------------------- parametrization


def test_chi_from_tvec_examples():
    assert np.all(chi_from_tvec(np.zeros(TVEC_LEN)).chi == 0)
    t = np.zeros(TVEC_LEN)
    t[0] = 1
    expected = np.zeros((16, 16))
    expected[0, 0] = 1
    np.testing.assert_array_equal(chi_from_tvec(t).chi, expected)
    with pytest.raises(ValueError):
        chi_from_tvec(np.zeros(255))


def test_chi_from_tvec_psd():
    gen = np.random.default_rng(0)
    worst = min(np.linalg.eigvalsh(chi_from_tvec(gen.standard_normal(TVEC_LEN)).chi)[0] for _ in range(1000))
    assert worst >= -1e-12


@settings(max_examples=30, deadline=None)
@given(seeds)
def test_tvec_round_trip(seed):
    t = np.random.default_rng(seed).standard_normal(TVEC_LEN)
    t[:16] = np.abs(t[:16]) + 0.1  # Cholesky factors have a positive diagonal
    chi = chi_from_tvec(t)
    np.testing.assert_allclose(chi_from_tvec(tvec_from_chi(chi)).chi, chi.chi, atol=1e-9)


def test_project_psd(chi_cnot):
    raw = linear_inversion(simulate_counts(chi_cnot, 2000, POISSON, 1))
    proj = project_psd(raw)
    assert np.linalg.eigvalsh(proj)[0] >= -1e-14
    assert np.trace(proj).real == pytest.approx(1.0)


# ------------------------------------------------------------ objective


def test_objective_zero_at_truth(chi_cnot):
    data = simulate_counts(chi_cnot, 1000)
    # the factorization carries a 1e-12 ridge, so the fit is only near zero
    t = tvec_from_chi(chi_cnot)
    for lam in (0.0, 1.0, 1e3):
        assert objective_f(t, data, lam) < 1e-6


def test_objective_zero_at_truth_exact(chi_cnot):
    # T with a single nonzero row reproduces the rank-one CNOT chi exactly
    data = simulate_counts(chi_cnot, 1000)
    u = np.array([0.5, 0.5, 0.5, -0.5])
    idx = [0, 1, 12, 13]
    T = np.zeros((16, 16), dtype=complex)
    T[13, idx] = u  # row 13 is the last index, so T stays lower-triangular
    assert np.allclose(np.tril(T), T)
    chi = T.conj().T @ T
    np.testing.assert_allclose(chi, chi_cnot.chi, atol=1e-15)
    t = _tvec_of(T)
    for lam in (0.0, 3.0, 1e5):
        assert objective_f(t, data, lam) == pytest.approx(0.0, abs=1e-10)


def _tvec_of(T):
    from qptkit.recon import _tvec

    return _tvec(T)


def test_objective_at_zero_is_data_only(chi_cnot):
    data = simulate_counts(chi_cnot, 1000)
    p = predicted_probabilities(chi_cnot)
    expected = np.sum(data.vector() ** 2) / 1000
    assert objective_f(np.zeros(TVEC_LEN), data, 0.0) == pytest.approx(expected, rel=1e-12)
    assert expected == pytest.approx(1000 * np.sum(p**2), rel=1e-12)


def test_objective_linear_in_lambda(chi_cnot):
    data = simulate_counts(chi_cnot, 1000)
    t = np.random.default_rng(4).standard_normal(TVEC_LEN) * 0.2
    pen = penalty_term(chi_from_tvec(t).chi)
    assert pen > 0
    f1, f2 = objective_f(t, data, 5.0), objective_f(t, data, 10.0)
    assert f2 - f1 == pytest.approx(5.0 * pen, rel=1e-10)
    with pytest.raises(ValueError):
        objective_f(t, data, -1.0)


def test_constraint_zero_for_tp(random_chis):
    for chi in random_chis[:5]:
        assert np.max(np.abs(constraint_violations(chi.chi))) < 1e-12
    # full amplitude damping on the target is TP but not unital; its adjoint
    # is unital but not TP, so it exposes a transposed constraint ordering
    down = [np.kron(np.eye(2), k) for k in (np.diag([1.0, 0.0]), np.array([[0, 1.0], [0, 0]]))]
    up = [k.conj().T for k in down]
    assert np.max(np.abs(constraint_violations(chi_from_kraus(down).chi))) < 1e-12
    assert np.max(np.abs(constraint_violations(chi_from_kraus(up).chi))) > 0.1


def test_gradient_matches_finite_differences(chi_cnot):
    data = simulate_counts(chi_cnot, 1000, POISSON, 2)
    gen = np.random.default_rng(5)
    h = 1e-5
    for _ in range(20):
        t = gen.standard_normal(TVEC_LEN) * 0.3
        lam = float(gen.uniform(0.1, 100))
        grad = objective_gradient(t, data, lam)
        idx = gen.choice(TVEC_LEN, 12, replace=False)
        for i in idx:
            e = np.zeros(TVEC_LEN)
            e[i] = h
            num = (objective_f(t + e, data, lam) - objective_f(t - e, data, lam)) / (2 * h)
            scale = max(abs(num), 1e-3 * np.linalg.norm(grad))
            assert abs(grad[i] - num) <= 1e-4 * scale


def test_fused_kernel_matches_reference_gradient(chi_cnot):
    from qptkit import kernels
    from qptkit.recon import _constraint_rows
    from qptkit.tomography import amplitude_table

    data = simulate_counts(chi_cnot, 1000, POISSON, 2)
    t = np.random.default_rng(6).standard_normal(TVEC_LEN) * 0.3
    for backend in kernels.available_backends():
        prev = kernels.use_backend(backend)
        try:
            f, g = kernels.objective_and_gradient(t, amplitude_table(), _constraint_rows(), data.vector(), 1000, 7.0)
        finally:
            kernels.use_backend(prev)
        assert f == pytest.approx(objective_f(t, data, 7.0), rel=1e-12)
        np.testing.assert_allclose(g, objective_gradient(t, data, 7.0), rtol=1e-10, atol=1e-8)


# ----------------------------------------------------------------- MLE


def test_mle_noiseless_cnot(chi_cnot):
    result = mle_reconstruct(simulate_counts(chi_cnot, 2000), FitConfig(restarts=1))
    assert result.chi.flags == (PHYSICAL,)
    assert process_fidelity(chi_cnot, result.chi) >= 0.999
    assert result.tp_defect_final <= 1e-3


def test_mle_depolarized_cnot(chi_cnot):
    data = simulate_counts(chi_cnot, 2000, NoiseSpec(depolarizing=0.1))
    result = mle_reconstruct(data, FitConfig(restarts=1))
    assert abs(process_fidelity(chi_cnot, result.chi) - 0.90625) < 0.01


def test_mle_poisson_is_physical(chi_cnot, poisson_fit):
    assert poisson_fit.cp_defect_final == 0 or poisson_fit.cp_defect_final < 1e-12
    assert cp_defect(poisson_fit.chi) < 1e-12
    assert poisson_fit.tp_defect_final <= 1e-3
    assert process_fidelity(chi_cnot, poisson_fit.chi) > 0.95


def test_mle_monotone(poisson_fit):
    assert len(poisson_fit.initial_objectives) == 2
    assert all(poisson_fit.objective_value <= f0 for f0 in poisson_fit.initial_objectives)


def test_mle_deterministic(poisson_cnot, poisson_fit):
    again = mle_reconstruct(poisson_cnot, FitConfig(restarts=2, seed=1))
    assert np.array_equal(again.chi.chi, poisson_fit.chi.chi)
    assert again.objective_value == poisson_fit.objective_value
    assert again.iterations_used == poisson_fit.iterations_used
    assert again.restart_index_of_best == poisson_fit.restart_index_of_best


def test_mle_random_truth():
    from qptkit.process import random_physical_chi

    truth = random_physical_chi(Rng(12), rank=3)
    result = mle_reconstruct(simulate_counts(truth, 1e9), FitConfig(restarts=1))
    assert choi_fidelity(truth, result.chi) >= 0.999


def test_convergence_error_carries_result(chi_cnot):
    # with no escalation and a tiny penalty weight the TP bound cannot be met
    data = simulate_counts(chi_cnot, 2000, POISSON, 5)
    config = FitConfig(lam=1e-6, restarts=1, escalations=0, tp_tolerance=1e-9, max_iterations=50)
    with pytest.raises(ConvergenceError) as info:
        mle_reconstruct(data, config)
    result = info.value.result
    assert result.tp_defect_final > 1e-9
    assert cp_defect(result.chi) < 1e-12


def test_fit_config_validation():
    with pytest.raises(ValueError):
        FitConfig(lam=0.0)
    with pytest.raises(ValueError):
        FitConfig(restarts=0)
    with pytest.raises(ValueError):
        FitConfig(gradient_tolerance=0)


# ----------------------------------------------------------- residuals


def test_residuals_noiseless_truth(chi_cnot):
    rep = residuals(chi_cnot, simulate_counts(chi_cnot, 1000))
    assert rep.degenerate
    assert rep.sigma == 0.0
    assert len(rep.deltas) == 256
    assert np.max(np.abs(rep.deltas)) < 1e-12


def test_residuals_poisson_width(chi_cnot):
    data = simulate_counts(chi_cnot, 2000, POISSON, 9)
    rep = residuals(chi_cnot, data)
    p = predicted_probabilities(chi_cnot)
    expected = np.mean(np.sqrt(p * (1 - p) / 2000))
    assert not rep.degenerate
    assert len(rep.bin_counts) == 21
    assert rep.bin_counts.sum() == 256
    assert expected / 2 <= rep.sigma <= 2 * expected


def test_residuals_fit_width(poisson_cnot, poisson_fit):
    rep = residuals(poisson_fit.chi, poisson_cnot)
    assert 0 < rep.sigma < 0.1
    assert np.isfinite(rep.amplitude)


def test_residuals_refuse_unconstrained(chi_cnot):
    with pytest.raises(ValueError):
        residuals(chi_cnot.with_flags(UNCONSTRAINED), simulate_counts(chi_cnot, 10))
