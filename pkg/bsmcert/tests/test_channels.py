import numpy as np
import pytest

from core.channels import (
    ChoiChannel,
    apply_on_factor,
    choi_apply,
    choi_from_state,
    choi_tensor_apply,
    regularize,
    robust_choi_pair,
    swap_channel,
    swap_gate,
    swap_isometry,
)
from core.exceptions import DimensionError, RankDeficientError
from core.qlinalg import (
    CMatrix,
    frobenius_distance,
    kron,
    min_eig,
    random_density_matrix,
    random_hermitian,
    random_unitary,
    symmetrize,
)
from core.qobjects import SIGMA_X, SIGMA_Z, DensityOperator, Observable, bell_state, werner_source
from core.suites import random_anticommuting_pair


def test_identity_channel(rng):
    x = random_hermitian(3, rng)
    assert frobenius_distance(ChoiChannel.identity(3)(x), x.with_dims((3,))) < 1e-12


def test_unitary_channel_properties(rng):
    u = random_unitary(3, rng).data
    ch = ChoiChannel.from_kraus([u])
    assert ch.is_cp()
    assert ch.is_unital()
    assert ch.is_dual_trace_preserving()
    x = random_hermitian(3, rng)
    assert np.allclose(ch(x).data, u @ x.data @ u.conj().T)


def test_depolarizing_channel():
    ch = ChoiChannel.depolarizing(2, 3)
    out = ch(CMatrix(np.diag([0.3, 0.7])))
    assert np.allclose(out.data, np.eye(3) / 2)
    assert ch.is_cp()


def test_choi_apply_checks_input():
    with pytest.raises(DimensionError):
        choi_apply(ChoiChannel.identity(2), CMatrix.identity(3))


def test_choi_of_bell_state_is_identity_channel():
    ch = choi_from_state(bell_state(0).mat, 2.0)
    assert np.allclose(ch.choi.data, ChoiChannel.identity(2).choi.data)
    assert ch.is_unital()


def test_regularize_counts_zero_as_plus_one():
    r = regularize(CMatrix(np.diag([2.0, 0.0, -0.5])))
    assert np.allclose(r.mat.data, np.diag([1.0, 1.0, -1.0]))
    assert r.squares_to_identity()


def test_swap_gate_is_unitary_on_pauli_pair():
    x = Observable(CMatrix(SIGMA_X, dims=(2,)))
    z = Observable(CMatrix(SIGMA_Z, dims=(2,)))
    s = swap_gate(x, z)
    assert s.dims == (2, 2)
    assert np.allclose(s.data.conj().T @ s.data, np.eye(4))
    v = swap_isometry(x, z)
    assert v.shape == (4, 2)
    assert np.allclose(v.data.conj().T @ v.data, np.eye(2))


def test_swap_channel_on_qubit_is_identity(rng):
    x = Observable(CMatrix(SIGMA_X, dims=(2,)))
    z = Observable(CMatrix(SIGMA_Z, dims=(2,)))
    gamma = swap_channel(x, z)
    assert gamma.trace_deficit == 0.0
    rho = random_hermitian(2, rng)
    assert frobenius_distance(gamma(rho), rho.with_dims((2,))) < 1e-10


def test_swap_channel_reports_deficit():
    x = Observable(CMatrix(0.5 * SIGMA_X, dims=(2,)))
    z = Observable(CMatrix(SIGMA_Z, dims=(2,)))
    gamma = swap_channel(x, z)
    assert gamma.trace_deficit > 0.1
    assert gamma.is_cp()
    assert gamma.is_dual_trace_preserving(1e-8)


def test_apply_on_factor_matches_kron(rng):
    u = random_unitary(2, rng).data
    ch = ChoiChannel.from_kraus([u])
    a = random_hermitian(2, rng)
    b = random_hermitian(3, rng)
    out = apply_on_factor(ch, kron(b, a), 1)
    expected = kron(b, CMatrix(u @ a.data @ u.conj().T))
    assert out.dims == (3, 2)
    assert frobenius_distance(out, expected) < 1e-10


def test_choi_tensor_apply_with_permutation(rng):
    ch = ChoiChannel.depolarizing(2, 2)
    omega = kron(random_hermitian(2, rng), random_hermitian(3, rng))
    out = choi_tensor_apply([ChoiChannel.identity(3), ch], omega, perm=[1, 0])
    assert out.dims == (3, 2)


def test_robust_pair_is_unital_for_werner_sources():
    sigma = werner_source(0.9).mat
    lam1, lam2 = robust_choi_pair(sigma, sigma)
    assert lam1.is_cp() and lam2.is_cp()
    assert lam1.is_unital(1e-9) and lam2.is_unital(1e-9)


def test_robust_pair_rejects_pure_marginal():
    product = DensityOperator.from_ket(np.eye(4)[0], (2, 2)).mat
    with pytest.raises(RankDeficientError):
        robust_choi_pair(product, werner_source(0.9).mat)


def _complex_matrix(rng, rows, cols):
    return rng.normal(size=(rows, cols)) + 1j * rng.normal(size=(rows, cols))


def test_choi_from_state_pairs_through_transpose(rng):
    for _ in range(20):
        sigma = random_density_matrix(4, rng, dims=(2, 2))
        assert not np.allclose(sigma.data, sigma.data.T)
        x = _complex_matrix(rng, 2, 2)
        out = choi_apply(choi_from_state(sigma, 2.0), CMatrix(x)).data
        # Tr(P Lambda(X)) = 2 Tr[sigma (P^T (x) X)] for every matrix unit P
        for i in range(2):
            for j in range(2):
                p = np.zeros((2, 2))
                p[i, j] = 1.0
                expected = 2 * np.trace(sigma.data @ np.kron(p.T, x))
                assert abs(np.trace(p @ out) - expected) < 1e-10


def test_choi_apply_matches_kraus_sum(rng):
    for _ in range(20):
        ks = [_complex_matrix(rng, 3, 2) for _ in range(3)]
        ch = ChoiChannel.from_kraus(ks)
        x = _complex_matrix(rng, 2, 2)
        expected = sum(k @ x @ k.conj().T for k in ks)
        assert np.allclose(choi_apply(ch, CMatrix(x)).data, expected, atol=1e-10)

        sigma = CMatrix(ch.choi.data.T / 2, dims=(3, 2))
        rebuilt = choi_from_state(sigma, 2.0)
        assert np.allclose(choi_apply(rebuilt, CMatrix(x)).data, expected, atol=1e-10)


def test_robust_pair_is_psd_and_unital_on_random_sources(rng):
    for _ in range(100):
        sigma_ab1 = random_density_matrix(4, rng, dims=(2, 2))
        sigma_b2c = random_density_matrix(4, rng, dims=(2, 2))
        for lam in robust_choi_pair(sigma_ab1, sigma_b2c):
            assert min_eig(lam.choi, tol=1e-9) >= -1e-9
            assert lam.is_unital(1e-8)


def test_regularize_sweep_with_rank_deficient_inputs(rng):
    for trial in range(200):
        d = 2 + trial % 4
        u = random_unitary(d, rng).data
        vals = rng.normal(size=d)
        if trial % 2:
            vals[:1 + trial % d] = 0.0
        h = symmetrize(CMatrix(u @ np.diag(vals) @ u.conj().T))
        r = regularize(h)
        expected = u @ np.diag(np.where(vals == 0.0, 1.0, np.sign(vals))) @ u.conj().T
        assert np.allclose(r.mat.data, expected, atol=1e-9)
        assert np.allclose(np.abs(np.linalg.eigvalsh(r.mat.data)), 1.0, atol=1e-9)
        assert r.squares_to_identity()


@pytest.mark.parametrize("d", [2, 4])
def test_swap_channel_sign_flip_of_x(d, rng):
    x, z = random_anticommuting_pair(d, rng)
    gamma = swap_channel(x, z)
    flipped = swap_channel(-x, z)
    for _ in range(10):
        rho = random_density_matrix(d, rng)
        expected = SIGMA_Z @ gamma(rho).data @ SIGMA_Z
        assert np.allclose(flipped(rho).data, expected, atol=1e-9)
