import numpy as np
import pytest

from core.exceptions import DomainError, InvalidMeasurementError, InvalidStateError
from core.qlinalg import CMatrix, hs_inner, min_eig, random_unitary
from core.qobjects import (
    GHZ_LABELS,
    TSIRELSON,
    DensityOperator,
    Measurement,
    ScenarioKind,
    bell_ket,
    bell_state,
    chsh_operator,
    ghz_state,
    ideal_observables,
    marginal_bias,
    measurement_basis,
    mermin_operator,
    mixed_basis,
    noisy_measurement,
    product_basis,
    random_povm,
    schmidt_coefficients,
    tilt_weight_from_theta,
    tilted_chsh_operator,
    werner_source,
)


def test_density_operator_validation():
    with pytest.raises(InvalidStateError):
        DensityOperator(CMatrix(np.diag([1.0, 1.0])))
    with pytest.raises(InvalidStateError):
        DensityOperator(CMatrix(np.diag([1.5, -0.5])))
    rho = DensityOperator(CMatrix(np.eye(2) / 2))
    assert rho.dims == (2,)


def test_bell_basis_is_orthonormal_and_projective():
    basis = measurement_basis(ScenarioKind.BSM)
    assert len(basis) == 4
    assert basis.is_projective()
    for j in range(4):
        for k in range(4):
            overlap = abs(np.vdot(bell_ket(j), bell_ket(k)))
            assert abs(overlap - (1.0 if j == k else 0.0)) < 1e-12


def test_incomplete_measurement_is_rejected():
    p = CMatrix.projector([1, 0, 0, 0])
    with pytest.raises(InvalidMeasurementError):
        Measurement((p,), (2, 2))


@pytest.mark.parametrize("b", range(4))
def test_chsh_maximal_on_matching_bell_state(b):
    obs = ideal_observables(ScenarioKind.BSM)
    value = bell_state(b).expect(chsh_operator(b, obs))
    assert abs(value - TSIRELSON) < 1e-12


@pytest.mark.parametrize("label", GHZ_LABELS)
def test_mermin_reaches_four(label):
    obs = ideal_observables(ScenarioKind.GHZ)
    assert abs(ghz_state(label).expect(mermin_operator(label, obs)) - 4.0) < 1e-12


def test_ghz_basis_complete():
    basis = measurement_basis(ScenarioKind.GHZ)
    assert basis.dims == (2, 2, 2)
    assert basis.labels == GHZ_LABELS
    assert basis.is_projective()


def test_tilted_basis_reduces_to_bell_basis():
    tilted = measurement_basis(ScenarioKind.TILTED, np.pi / 4)
    bsm = measurement_basis(ScenarioKind.BSM)
    for t, b in zip(tilted.elements, bsm.elements):
        assert np.allclose(t.data, b.data)


def test_tilt_weight():
    assert tilt_weight_from_theta(np.pi / 4) == 0.0
    assert 0 < tilt_weight_from_theta(np.pi / 8) < 2
    with pytest.raises(DomainError):
        tilt_weight_from_theta(1.0)


def test_observables_square_to_identity():
    for kind, theta in ((ScenarioKind.BSM, None), (ScenarioKind.TILTED, np.pi / 6), (ScenarioKind.GHZ, None)):
        for o in ideal_observables(kind, theta).values():
            assert o.squares_to_identity()


def test_werner_source_fidelity():
    rho = werner_source(0.8)
    assert abs(hs_inner(rho.mat, bell_state(0).mat) - (0.8 + 0.2 / 4)) < 1e-12
    with pytest.raises(DomainError):
        werner_source(1.2)


def test_noisy_measurement_stays_complete():
    noisy = noisy_measurement(mixed_basis(), 0.3)
    assert len(noisy) == 4
    assert not noisy.is_projective()


def test_random_povm_is_valid(rng):
    m = random_povm(4, 4, rng, dims=(2, 2))
    assert m.dims == (2, 2)
    assert m.dim == 4


def test_schmidt_and_bias():
    assert np.allclose(schmidt_coefficients(bell_ket(0), (2, 2)), [2 ** -0.5] * 2)
    assert np.allclose(schmidt_coefficients(np.eye(4)[0], (2, 2)), [1, 0])
    assert abs(marginal_bias(CMatrix(np.diag([0.8, 0.2]))) - 0.6) < 1e-12


def test_product_basis_labels():
    assert product_basis().labels == ('00', '01', '10', '11')


def test_relabeled_measurement():
    basis = measurement_basis(ScenarioKind.BSM)
    swapped = basis.relabeled([1, 0, 2, 3])
    assert np.allclose(swapped.elements[0].data, basis.elements[1].data)
    assert swapped.labels == basis.labels


@pytest.mark.parametrize("b", [4, -1])
def test_tilted_chsh_rejects_bad_index(b):
    obs = ideal_observables(ScenarioKind.TILTED, np.pi / 8)
    with pytest.raises(DomainError):
        tilted_chsh_operator(b, 1.0, obs)


def test_werner_source_is_psd_on_grid():
    for v in np.linspace(0, 1, 101):
        assert min_eig(werner_source(v).mat) >= -1e-12


def test_schmidt_coefficients_invariant_under_local_unitaries(rng):
    for trial in range(100):
        d1, d2 = 2 + trial % 2, 2 + trial % 3
        psi = rng.normal(size=d1 * d2) + 1j * rng.normal(size=d1 * d2)
        psi /= np.linalg.norm(psi)
        local = np.kron(random_unitary(d1, rng).data, random_unitary(d2, rng).data)
        before = schmidt_coefficients(psi, (d1, d2))
        after = schmidt_coefficients(local @ psi, (d1, d2))
        assert np.allclose(before, after, atol=1e-9)
