import numpy as np
import pytest

from core.exceptions import DimensionError, DomainError, NotHermitianError
from core.qlinalg import (
    INV_SQRT,
    SQRT,
    CMatrix,
    eig_hermitian,
    fidelity_with_pure,
    frobenius_distance,
    kron,
    mat_func,
    min_eig,
    partial_trace,
    partial_transpose,
    permute_factors,
    random_density_matrix,
    random_hermitian,
    random_unitary,
    symmetrize,
)
from core.qobjects import bell_state


def test_cmatrix_is_frozen():
    m = CMatrix(np.eye(2))
    with pytest.raises(ValueError):
        m.data[0, 0] = 5
    assert m.dims is None
    assert m.factor_dims == (2,)


def test_cmatrix_rejects_bad_dims():
    with pytest.raises(DimensionError):
        CMatrix(np.eye(4), dims=(2, 3))
    with pytest.raises(DimensionError):
        CMatrix(np.zeros(4))
    with pytest.raises(DimensionError):
        CMatrix(np.eye(4), dims=(2, 2)) + CMatrix(np.eye(4), dims=(4,))


def test_numpy_scalar_times_cmatrix():
    m = CMatrix.identity(2)
    scaled = np.float64(3.0) * m
    assert isinstance(scaled, CMatrix)
    assert np.allclose(scaled.data, 3 * np.eye(2))


def test_kron_concatenates_dims(rng):
    a = random_hermitian(2, rng)
    b = random_hermitian(3, rng)
    ab = kron(a, b)
    assert ab.dims == (2, 3)
    assert np.allclose(partial_trace(ab, keep=[0]).data, a.data * b.trace())
    assert np.allclose(partial_trace(ab, keep=[1]).data, b.data * a.trace())
    assert abs(partial_trace(ab, keep=[]).data[0, 0] - a.trace() * b.trace()) < 1e-10


def test_permute_factors_swaps_kron(rng):
    a = random_hermitian(2, rng)
    b = random_hermitian(3, rng)
    swapped = permute_factors(kron(a, b), [1, 0])
    assert swapped.dims == (3, 2)
    assert frobenius_distance(swapped, kron(b, a)) < 1e-12
    with pytest.raises(DimensionError):
        permute_factors(kron(a, b), [0, 0])


def test_partial_transpose_detects_bell_entanglement():
    pt = partial_transpose(bell_state(0).mat, [1])
    assert abs(min_eig(pt) + 0.5) < 1e-12


def test_eig_hermitian_descending(rng):
    h = random_hermitian(4, rng)
    spectrum = eig_hermitian(h)
    assert np.all(np.diff(spectrum.eigenvalues) <= 1e-12)
    assert np.allclose(spectrum.reconstruct(), h.data)


def test_eig_hermitian_rejects_non_hermitian():
    with pytest.raises(NotHermitianError):
        eig_hermitian(CMatrix([[0, 1], [0, 0]]))


def test_inverse_square_root_of_biased_marginal():
    # spectrum {(1 +- 0.6)/2}
    nu = CMatrix(np.diag([0.8, 0.2]), dims=(2,))
    inv_half = mat_func(nu, INV_SQRT)
    assert np.allclose(np.diag(inv_half.data).real, [1.1180, 2.2361], atol=1e-4)
    assert inv_half.dims == (2,)


def test_mat_func_zero_policy():
    p = CMatrix(np.diag([1.0, 0.0]))
    assert np.allclose(mat_func(p, INV_SQRT).data, np.diag([1.0, 0.0]))
    assert np.allclose(mat_func(p, SQRT).data, np.diag([1.0, 0.0]))


def test_mat_func_domain_error():
    with pytest.raises(DomainError):
        mat_func(CMatrix(np.diag([1.0, -1.0])), np.log)


def test_symmetrize_keeps_dims(rng):
    g = CMatrix(rng.normal(size=(4, 4)), dims=(2, 2))
    h = symmetrize(g)
    assert h.dims == (2, 2)
    assert h.is_hermitian()


def test_random_draws_are_valid(rng):
    u = random_unitary(4, rng)
    assert np.allclose(u.data @ u.data.conj().T, np.eye(4))
    rho = random_density_matrix(6, rng, rank=2, dims=(2, 3))
    assert rho.dims == (2, 3)
    assert abs(rho.trace() - 1) < 1e-12
    assert min_eig(rho) > -1e-12


def test_fidelity_with_pure():
    assert abs(fidelity_with_pure(bell_state(0), bell_state(0)) - 1) < 1e-12
    assert fidelity_with_pure(bell_state(0), bell_state(1)) < 1e-12
    with pytest.raises(DomainError):
        fidelity_with_pure(bell_state(0), CMatrix.identity(4))


def test_eig_reconstruction_sweep(rng):
    for trial in range(200):
        h = random_hermitian(1 + trial % 16, rng)
        assert np.max(np.abs(eig_hermitian(h).reconstruct() - h.data)) < 1e-10


def test_partial_trace_of_kron_sweep(rng):
    for _ in range(200):
        d1, d2 = (int(d) for d in rng.integers(1, 5, size=2))
        a = random_density_matrix(d1, rng)
        b = 2.5 * random_density_matrix(d2, rng)
        ab = kron(a, b)
        assert np.allclose(partial_trace(ab, keep=[0]).data, 2.5 * a.data, atol=1e-10)
        assert np.allclose(partial_trace(ab, keep=[1]).data, b.data, atol=1e-10)


def test_mat_func_of_identity_function(rng):
    for d in range(1, 9):
        h = random_hermitian(d, rng)
        assert np.max(np.abs(mat_func(h, lambda x: x).data - h.data)) < 1e-10


def test_permute_factors_preserves_spectrum(rng):
    for _ in range(50):
        h = random_hermitian(12, rng, dims=(2, 3, 2))
        moved = permute_factors(h, rng.permutation(3))
        assert np.allclose(np.linalg.eigvalsh(moved.data), np.linalg.eigvalsh(h.data), atol=1e-10)
