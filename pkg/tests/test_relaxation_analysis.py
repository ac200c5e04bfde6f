import numpy as np
import numpy.testing as npt
import pytest

from axorelax.errors import AssumptionError, NumericalError
from axorelax.relaxation_analysis import (
    build_symmetrizer,
    certify,
    compensating_matrix,
    detailed_balance_check,
    kernel_vector,
    schur_reduction,
    spectral_split,
    spectrum_report,
    verify_certificate,
)
from axorelax.system_model import catalog, scaled_rates


K2 = np.array([[-1.0, 1.0], [1.0, -1.0]])


def test_kernel_vector_two_state():
    res = kernel_vector(K2)
    npt.assert_allclose(res.xi, [0.5, 0.5], atol=1e-15)
    assert res.residual <= 1e-15


def test_kernel_vector_counterexample(counterexample_spec):
    res = kernel_vector(counterexample_spec.rates.entries)
    npt.assert_allclose(res.xi, np.array([1.0, 2.0, 2.0, 4.0]) / 9.0, atol=1e-14)
    assert np.all(res.xi > 0.0)
    assert abs(res.xi.sum() - 1.0) <= 1e-15


def test_kernel_vector_rejects_two_dimensional_kernel():
    k = np.zeros((4, 4))
    k[:2, :2] = K2
    k[2:, 2:] = K2
    with pytest.raises(NumericalError, match="one-dimensional"):
        kernel_vector(k)


def test_kernel_vector_unbalanced_rates():
    # strongly asymmetric rates still give a strictly positive kernel vector
    k = np.array([[-1e-3, 5.0], [1e-3, -5.0]])
    res = kernel_vector(k)
    npt.assert_allclose(res.xi, [5.0 / 5.001, 0.001 / 5.001], rtol=1e-12)


def test_schur_reduction_two_state():
    red = schur_reduction(K2)
    npt.assert_array_equal(red.l1[0], [1.0, 1.0])
    npt.assert_allclose(red.k2, [[-2.0]])
    assert red.det_k2 == pytest.approx(-2.0)
    assert red.spectral_abscissa_k2 == pytest.approx(-2.0)
    assert red.zero_row_residual <= 1e-15


def test_schur_reduction_conjugation_kills_first_row(counterexample_spec):
    k = counterexample_spec.rates.entries
    red = schur_reduction(k)
    conj = red.l1 @ k @ np.linalg.inv(red.l1)
    # mass coordinate: the first row of L1 K L1^{-1} vanishes identically
    npt.assert_allclose(conj[0], 0.0, atol=1e-13)
    # and the trailing block is exactly the reduced matrix
    npt.assert_allclose(conj[1:, 1:], red.k2, atol=1e-13)
    assert red.det_k2 != 0.0
    assert red.spectral_abscissa_k2 < 0.0


def test_spectrum_report_counterexample(counterexample_spec):
    rep = spectrum_report(counterexample_spec.rates.entries)
    assert rep.n_zero == 1
    assert rep.passed
    assert rep.spectral_gap > 0.0
    # eigenvalues sorted by descending real part, zero first
    assert rep.eigenvalues[0] == pytest.approx(0.0, abs=1e-12)
    assert np.all(np.real(rep.eigenvalues[1:]) < 0.0)
    # trace equals the sum of eigenvalues
    assert np.sum(rep.eigenvalues).real == pytest.approx(-10.0, abs=1e-10)


def test_spectrum_gap_matches_schur_abscissa(counterexample_spec):
    k = counterexample_spec.rates.entries
    rep = spectrum_report(k)
    red = schur_reduction(k)
    assert rep.spectral_gap == pytest.approx(-red.spectral_abscissa_k2, rel=1e-10)


def test_symmetrizer_inverse_weights(two_state_spec):
    k = two_state_spec.rates.entries
    xi = kernel_vector(k).xi
    sym = build_symmetrizer(k, xi)
    npt.assert_allclose(sym.a0, [2.0, 2.0])
    npt.assert_allclose(sym.d, xi)
    assert sym.identity_residual <= 1e-14


def test_symmetrizer_sym_part_is_negative_semidefinite(counterexample_spec):
    k = counterexample_spec.rates.entries
    xi = kernel_vector(k).xi
    sym = build_symmetrizer(k, xi)
    s = sym.sym_part(k)
    npt.assert_array_equal(s, s.T)
    w = np.linalg.eigvalsh(s)
    assert w[-1] <= 1e-12
    assert np.sum(np.abs(w) < 1e-10) == 1


def test_symmetrizer_rejects_bad_weights():
    with pytest.raises(ValueError, match="positive"):
        build_symmetrizer(K2, np.array([0.5, 0.0]))


def test_spectral_split_two_state():
    xi = kernel_vector(K2).xi
    sym = build_symmetrizer(K2, xi)
    split = spectral_split(sym.sym_part(K2))
    npt.assert_allclose(split.s, [8.0], atol=1e-12)
    npt.assert_allclose(split.phi, np.sqrt([0.5, 0.5]), atol=1e-14)
    assert split.recon_residual <= 1e-13
    assert split.orth_residual <= 1e-14
    proj = split.kernel_complement_projector()
    npt.assert_allclose(proj, np.eye(2) - np.outer(split.phi, split.phi), atol=1e-14)
    # projector annihilates the kernel direction of the symmetrized matrix
    npt.assert_allclose(proj @ split.phi, 0.0, atol=1e-14)


def test_spectral_split_reconstruction_random():
    rng = np.random.default_rng(3)
    for _ in range(25):
        spec = catalog("random_valid", r=int(rng.integers(2, 9)), seed=int(rng.integers(1e6)))
        k = spec.rates.entries
        xi = kernel_vector(k).xi
        sym = build_symmetrizer(k, xi)
        split = spectral_split(sym.sym_part(k))
        p, s = split.p, split.s
        recon = sym.sym_part(k) + p.T @ np.diag(np.concatenate([[0.0], s])) @ p
        assert np.max(np.abs(recon)) <= 1e-10 * max(np.max(np.abs(k)), 1.0)
        assert np.all(split.phi > 0.0)
        assert np.all(np.diff(s) >= -1e-12)


def test_spectral_split_rejects_asymmetric_input():
    with pytest.raises(ValueError, match="symmetric"):
        spectral_split(np.array([[0.0, 1.0], [0.0, 0.0]]))


def test_spectral_split_rejects_fat_kernel():
    # two decoupled balanced pairs: symmetrized matrix has a 2-dim kernel
    k = np.zeros((4, 4))
    k[:2, :2] = K2
    k[2:, 2:] = K2
    sym = np.kron(np.eye(2), 2.0 * (K2 + K2.T))
    with pytest.raises(NumericalError):
        spectral_split(sym)


def test_detailed_balance_two_state():
    xi = kernel_vector(K2).xi
    res = detailed_balance_check(K2, xi)
    assert res.symmetric
    assert res.max_asymmetry <= 1e-15
    npt.assert_allclose(res.kd, res.kd.T, atol=1e-15)


def test_detailed_balance_two_state_always_holds():
    # two-state exchange is reversible for any positive rate pair
    rng = np.random.default_rng(21)
    for _ in range(50):
        a, b = rng.uniform(0.05, 5.0, 2)
        k = np.array([[-a, b], [a, -b]])
        xi = kernel_vector(k).xi
        assert detailed_balance_check(k, xi).max_asymmetry <= 1e-14


def test_detailed_balance_tracks_cycle_condition():
    # three-state rates are reversible iff the directed cycle products
    # agree; a one-way cycle is the extreme violation
    cycle = np.array([[-1.0, 0.0, 1.0], [1.0, -1.0, 0.0], [0.0, 1.0, -1.0]])
    xi = kernel_vector(cycle).xi
    res = detailed_balance_check(cycle, xi)
    assert not res.symmetric
    assert res.max_asymmetry == pytest.approx(1.0 / 3.0, abs=1e-14)

    # forcing equal cycle products restores symmetry for full support
    rng = np.random.default_rng(5)
    for _ in range(20):
        k12, k23, k31, k21, k32 = rng.uniform(0.5, 2.0, 5)
        k13 = k12 * k23 * k31 / (k21 * k32)
        off = np.array([[0.0, k12, k13], [k21, 0.0, k23], [k31, k32, 0.0]])
        k = off.copy()
        np.fill_diagonal(k, -off.sum(axis=0))
        xi = kernel_vector(k).xi
        assert detailed_balance_check(k, xi).max_asymmetry <= 1e-13


def test_detailed_balance_counterexample_normalized(counterexample_spec):
    k = counterexample_spec.rates.entries
    xi = kernel_vector(k).xi
    res = detailed_balance_check(k, xi)
    assert not res.symmetric
    assert res.max_asymmetry == pytest.approx(2.0 / 9.0, abs=1e-14)


def test_compensating_matrix_two_state_optimum(two_state_spec):
    lam = two_state_spec.lam.diag
    xi = kernel_vector(K2).xi
    split = spectral_split(build_symmetrizer(K2, xi).sym_part(K2))
    pair = compensating_matrix(lam, split)
    assert pair.c == pytest.approx(0.5, abs=1e-9)
    npt.assert_allclose(pair.h, [[0.0, 0.5], [-0.5, 0.0]], atol=1e-7)
    assert pair.min_eig_slack >= -1e-10


def test_compensating_matrix_is_skew():
    rng = np.random.default_rng(11)
    for _ in range(10):
        spec = catalog("random_valid", r=int(rng.integers(2, 7)), seed=int(rng.integers(1e6)))
        cert = certify(spec)
        h = cert.compensating.h
        npt.assert_allclose(h, -h.T, atol=1e-14)
        assert cert.compensating.c > 0.0


def test_compensating_matrix_collinear_velocities_fail():
    # equal velocities make the commutator vanish: no margin is attainable
    xi = kernel_vector(K2).xi
    split = spectral_split(build_symmetrizer(K2, xi).sym_part(K2))
    with pytest.raises(NumericalError):
        compensating_matrix(np.array([2.0, 2.0]), split)


def test_certify_counterexample_residuals(counterexample_spec):
    cert = certify(counterexample_spec)
    for key, value in cert.residuals.items():
        assert np.isfinite(value), key
    scale = np.max(np.abs(scaled_rates(counterexample_spec).entries))
    assert cert.residuals["split_reconstruction"] <= 1e-10 * scale
    assert cert.residuals["split_orthogonality"] <= 1e-12
    assert cert.residuals["kawashima_slack"] <= 1e-10
    assert cert.c == pytest.approx(0.21859907550736596, abs=1e-9)
    assert cert.dissipation_ratio == pytest.approx(1.183260141349679, rel=1e-9)


def test_certify_rescales_with_epsilon():
    base = certify(catalog("two_state"))
    stiff = certify(catalog("two_state", epsilon=0.1))
    # the reaction part, and with it the spectral block, scales by 1/eps
    npt.assert_allclose(stiff.split.s, 10.0 * base.split.s, rtol=1e-12)
    npt.assert_allclose(stiff.xi, base.xi, atol=1e-14)
    npt.assert_allclose(stiff.k_eff, 10.0 * base.k_eff, rtol=0.0)


def test_certify_rejects_invalid_assumptions():
    spec = catalog("two_state")
    bad = type(spec)(
        lam=type(spec.lam)(np.array([1.0, 1.0])),
        rates=spec.rates,
    )
    with pytest.raises(AssumptionError) as exc:
        certify(bad)
    assert "H4" in exc.value.failed


def test_verify_certificate_recomputes_residuals(two_state_spec):
    cert = certify(two_state_spec)
    rec = verify_certificate(cert)
    assert set(rec) == set(cert.residuals)
    for key, value in rec.items():
        assert value == pytest.approx(cert.residuals[key], abs=1e-14), key


def test_certificate_properties(two_state_spec):
    cert = certify(two_state_spec)
    assert cert.r == 2
    npt.assert_allclose(cert.xi, [0.5, 0.5], atol=1e-15)
    assert cert.dissipation_ratio == pytest.approx(4.0, rel=1e-12)
    assert cert.epsilon == 1.0
