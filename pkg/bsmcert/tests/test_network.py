from dataclasses import replace

import numpy as np
import pytest

from core.exceptions import DimensionError, DomainError
from core.network import (
    beta_ave,
    ideal_swap_scenario,
    misaligned_scenario,
    permute_outcomes,
    povm_noise_scenario,
    random_swap_scenario,
    run_star,
    run_swap,
    star_scenario,
    werner_swap_scenario,
    with_ancilla,
    with_star_ancilla,
)
from core.qlinalg import fidelity_with_pure, partial_trace, random_unitary
from core.qobjects import TSIRELSON, DensityOperator, ScenarioKind, bell_state, product_basis


def test_ideal_swap_statistics(ideal_scenario):
    outcomes = run_swap(ideal_scenario)
    assert len(outcomes) == 4
    for b, o in enumerate(outcomes):
        assert abs(o.p - 0.25) < 1e-12
        assert abs(o.beta - TSIRELSON) < 1e-12
        assert abs(fidelity_with_pure(o.state, bell_state(b)) - 1) < 1e-12
    assert abs(beta_ave(outcomes) - TSIRELSON) < 1e-12


@pytest.mark.parametrize("v", [1.0, 0.98, 0.9, 0.5])
def test_werner_beta_scales_with_v_squared(v):
    assert abs(beta_ave(run_swap(werner_swap_scenario(v))) - TSIRELSON * v ** 2) < 1e-10


def test_povm_noise_beta():
    assert abs(beta_ave(run_swap(povm_noise_scenario(0.1))) - 0.9 * TSIRELSON) < 1e-10


def test_misalignment_lowers_beta(ideal_scenario):
    rotated = misaligned_scenario(ideal_scenario, 0.2)
    value = beta_ave(run_swap(rotated))
    assert 2 < value < TSIRELSON - 1e-3


@pytest.mark.parametrize("theta", [np.pi / 8, np.pi / 6])
def test_tilted_scenario_is_maximal(theta):
    s = ideal_swap_scenario(ScenarioKind.TILTED, theta)
    for o in run_swap(s):
        assert abs(o.beta - s.bell_bound()) < 1e-9


def test_ancilla_keeps_statistics(rng, ideal_scenario):
    extended = with_ancilla(ideal_scenario, unitary_a=random_unitary(4, rng),
                            unitary_c=random_unitary(4, rng))
    assert extended.dims == (4, 2, 2, 4)
    for o, base in zip(run_swap(extended), run_swap(ideal_scenario)):
        assert abs(o.p - base.p) < 1e-10
        assert abs(o.beta - base.beta) < 1e-9


def test_permuted_outcomes_break_chsh(ideal_scenario):
    outcomes = run_swap(permute_outcomes(ideal_scenario, [1, 0, 2, 3]))
    assert abs(outcomes[0].beta) < 1e-10
    assert abs(outcomes[2].beta - TSIRELSON) < 1e-10


def test_degenerate_outcomes_are_flagged(ideal_scenario):
    zero = DensityOperator.from_ket(np.eye(4)[0], (2, 2))
    s = replace(ideal_scenario, tau_ab1=zero, tau_b2c=zero, bob=product_basis())
    outcomes = run_swap(s)
    assert abs(outcomes[0].p - 1) < 1e-12
    assert all(o.degenerate and o.state is None for o in outcomes[1:])


def test_random_scenarios_are_valid(rng):
    for separable in (False, True):
        outcomes = run_swap(random_swap_scenario(rng, separable=separable))
        assert abs(sum(o.p for o in outcomes) - 1) < 1e-10
        if separable:
            assert beta_ave(outcomes) <= 2 + 1e-9


def test_star_network():
    outcomes = run_star(star_scenario())
    assert len(outcomes) == 8
    for o in outcomes:
        assert abs(o.p - 0.125) < 1e-12
        assert abs(o.beta - 4.0) < 1e-10
    noisy = run_star(star_scenario(0.99))
    assert all(o.beta < 4.0 - 1e-3 for o in noisy)


def test_star_ancilla_keeps_mermin_values():
    for o in run_star(with_star_ancilla(star_scenario())):
        assert abs(o.beta - 4.0) < 1e-10


def test_ghz_is_not_a_swap_scenario():
    with pytest.raises(DomainError):
        ideal_swap_scenario(ScenarioKind.GHZ)


def test_dimension_mismatch(ideal_scenario):
    with pytest.raises(DimensionError):
        replace(ideal_scenario,
                tau_ab1=DensityOperator.from_ket(np.eye(6)[0], (2, 3)))


def test_conditional_states_average_to_outer_marginals(rng):
    for trial in range(200):
        s = random_swap_scenario(rng, separable=bool(trial % 2))
        outcomes = run_swap(s)
        assert abs(sum(o.p for o in outcomes) - 1) < 1e-10
        averaged = sum(o.p * o.state.mat.data for o in outcomes if not o.degenerate)
        expected = np.kron(partial_trace(s.tau_ab1.mat, keep=[0]).data,
                           partial_trace(s.tau_b2c.mat, keep=[1]).data)
        assert np.max(np.abs(averaged - expected)) < 1e-10


@pytest.mark.parametrize("v", [1.0, 0.99, 0.9, 0.5])
def test_star_mermin_value_is_four_v_cubed(v):
    outcomes = run_star(star_scenario(v))
    for o in outcomes:
        assert abs(o.p - 0.125) < 1e-12
        assert abs(o.beta - 4 * v ** 3) < 1e-10


def test_misalignment_sweep_is_continuous(ideal_scenario):
    step = 0.01
    angles = np.arange(0.0, np.pi, step)
    values = np.array([beta_ave(run_swap(misaligned_scenario(ideal_scenario, a))) for a in angles])
    assert abs(values[0] - TSIRELSON) < 1e-10
    # |d beta_ave / d angle| stays below 5
    assert np.max(np.abs(np.diff(values))) < 5 * step
