"""
Entanglement-swapping and star-network simulation.

All expectations are exact density-matrix traces. The swapping network is
kept in the factor order A (x) B1 (x) B2 (x) C; the star network in
A (x) B (x) C (x) R_A (x) R_B (x) R_C after the sources are combined.

Usage:
    from core.network import ideal_swap_scenario, run_swap, beta_ave

    outcomes = run_swap(ideal_swap_scenario())
    print(beta_ave(outcomes))
"""
import logging
from dataclasses import dataclass, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from core.exceptions import DimensionError, DomainError
from core.qlinalg import (
    CMatrix,
    as_cmatrix,
    kron,
    kron_all,
    permute_factors,
    random_density_matrix,
    symmetrize,
)
from core.qobjects import (
    GHZ_LABELS,
    TSIRELSON,
    DensityOperator,
    Measurement,
    Observable,
    ScenarioKind,
    bell_state,
    chsh_operator,
    ideal_observables,
    measurement_basis,
    mermin_operator,
    noisy_measurement,
    product_basis,
    random_povm,
    rotation_y,
    tilt_weight_from_theta,
    tilted_chsh_operator,
    werner_source,
)

# Set up logging
logger = logging.getLogger(__name__)

DEGENERATE_P = 1e-12


@dataclass(frozen=True, eq=False)
class SwapScenario:
    """Two independent sources, Bob's joint measurement, Alice's and Charlie's settings.

    Args:
        tau_ab1: Source state on A (x) B1.
        tau_b2c: Source state on B2 (x) C.
        bob: Measurement on B1 (x) B2.
        obs_a: Alice's two settings (A0, A1).
        obs_c: Charlie's two settings (C0, C1).
        tilt_weight: 0 for CHSH statistics, otherwise the weight of the
            single-party term of the tilted CHSH operators.
    """
    tau_ab1: DensityOperator
    tau_b2c: DensityOperator
    bob: Measurement
    obs_a: Tuple[Observable, Observable]
    obs_c: Tuple[Observable, Observable]
    tilt_weight: float = 0.0

    def __post_init__(self):
        if len(self.tau_ab1.dims) != 2 or len(self.tau_b2c.dims) != 2:
            raise DimensionError("Both sources must be bipartite")
        d_a, d_b1 = self.tau_ab1.dims
        d_b2, d_c = self.tau_b2c.dims
        if self.bob.dims != (d_b1, d_b2):
            raise DimensionError(f"Bob's measurement acts on {self.bob.dims}, sources give {(d_b1, d_b2)}")
        if any(o.dim != d_a for o in self.obs_a) or any(o.dim != d_c for o in self.obs_c):
            raise DimensionError("Observable dimensions do not match the outer systems")

    @property
    def dims(self):
        return self.tau_ab1.dims + self.tau_b2c.dims

    @property
    def observables(self) -> Dict[str, Observable]:
        return {'A0': self.obs_a[0], 'A1': self.obs_a[1], 'C0': self.obs_c[0], 'C1': self.obs_c[1]}

    def bell_operator(self, b):
        if self.tilt_weight > 0:
            return tilted_chsh_operator(b, self.tilt_weight, self.observables)
        return chsh_operator(b, self.observables)

    def bell_bound(self):
        """Quantum maximum of the scenario's Bell operators."""
        return float(np.sqrt(8 + 2 * self.tilt_weight ** 2))


@dataclass(frozen=True, eq=False)
class StarScenario:
    """Three sources tau_{P R_P} and Rob's measurement on R_A (x) R_B (x) R_C."""
    taus: Tuple[DensityOperator, DensityOperator, DensityOperator]
    rob: Measurement
    observables: Dict[str, Observable]

    def __post_init__(self):
        if len(self.taus) != 3 or any(len(t.dims) != 2 for t in self.taus):
            raise DimensionError("A star network needs three bipartite sources")
        r_dims = tuple(t.dims[1] for t in self.taus)
        if self.rob.dims != r_dims:
            raise DimensionError(f"Rob's measurement acts on {self.rob.dims}, sources give {r_dims}")
        for party, tau in zip('ABC', self.taus):
            for x in (0, 1):
                if self.observables[f'{party}{x}'].dim != tau.dims[0]:
                    raise DimensionError(f"Setting {party}{x} does not match the source dimension")


@dataclass(frozen=True, eq=False)
class ConditionalOutcome:
    """Statistics conditioned on one outcome of the central measurement."""
    label: object
    p: float
    state: Optional[DensityOperator]
    beta: float
    degenerate: bool = False


def _conditional_states(global_state, n_outer, elements, bell_ops, labels):
    """Condition a global state on each element measured on its trailing factors.

    Args:
        global_state: Operator whose first n_outer factors are the outer
            parties and whose remaining factors carry the measurement.
    """
    dims = global_state.dims
    outer_dims = dims[:n_outer]
    d_out = int(np.prod(outer_dims))
    d_in = int(np.prod(dims[n_outer:]))
    rho4 = global_state.data.reshape(d_out, d_in, d_out, d_in)

    outcomes = []
    for label, element, bell in zip(labels, elements, bell_ops):
        # Tr_in[(I (x) E) rho]
        unnormalized = np.einsum('aibj,ji->ab', rho4, as_cmatrix(element).data)
        p = float(np.trace(unnormalized).real)
        if p < DEGENERATE_P:
            logger.warning(f"Outcome {label} has probability {p:.3e}; flagged as degenerate")
            outcomes.append(ConditionalOutcome(label, max(p, 0.0), None, 0.0, degenerate=True))
            continue
        state = DensityOperator(symmetrize(CMatrix(unnormalized, dims=outer_dims)) / p)
        beta = state.expect(bell) if bell is not None else 0.0
        outcomes.append(ConditionalOutcome(label, p, state, float(beta)))
        logger.debug(f"Outcome {label}: p={p:.10f} beta={beta:.10f}")
    return outcomes


def _swap_global_state(tau_ab1, tau_b2c):
    # (A, B1, B2, C) -> (A, C, B1, B2)
    return permute_factors(kron(as_cmatrix(tau_ab1), as_cmatrix(tau_b2c)), [0, 3, 1, 2])


def run_swap(s: SwapScenario) -> List[ConditionalOutcome]:
    """Outcome probabilities, conditional states on A (x) C and Bell values.

    Returns:
        list: One ConditionalOutcome per element of Bob's measurement.
    """
    bell_ops = [s.bell_operator(b) for b in range(len(s.bob))]
    return _conditional_states(_swap_global_state(s.tau_ab1, s.tau_b2c), 2,
                               s.bob.elements, bell_ops, s.bob.labels)


def swap_conditional_states(tau_ab1, tau_b2c, bob: Measurement) -> List[ConditionalOutcome]:
    """Conditional outer states of any two sources under bob, without Bell values."""
    return _conditional_states(_swap_global_state(tau_ab1, tau_b2c), 2,
                               bob.elements, [None] * len(bob), bob.labels)


def beta_ave(outcomes: Sequence[ConditionalOutcome], worst_case=-TSIRELSON):
    """p-weighted average Bell value; degenerate outcomes count as worst_case."""
    return float(sum(o.p * (worst_case if o.degenerate else o.beta) for o in outcomes))


def run_star(s: StarScenario) -> List[ConditionalOutcome]:
    """Eight conditional GHZ-network outcomes with their Mermin values."""
    # (A, R_A, B, R_B, C, R_C) -> (A, B, C, R_A, R_B, R_C)
    global_state = permute_factors(kron_all(*(t.mat for t in s.taus)), [0, 2, 4, 1, 3, 5])
    labels = s.rob.labels
    if all(label in GHZ_LABELS for label in labels):
        bell_ops = [mermin_operator(r, s.observables) for r in labels]
    else:
        bell_ops = [None] * len(labels)
    return _conditional_states(global_state, 3, s.rob.elements, bell_ops, labels)


def misaligned_scenario(base: SwapScenario, angle):
    """Rotate Charlie's settings by angle about the Y axis of his leading qubit."""
    d_c = base.obs_c[0].dim
    if d_c % 2:
        raise DimensionError(f"Charlie's system of dimension {d_c} has no leading qubit")
    u = kron(rotation_y(angle), CMatrix.identity(d_c // 2))
    return replace(base, obs_c=tuple(o.conjugated(u) for o in base.obs_c))


def _obs_pair(obs, party):
    return (obs[f'{party}0'], obs[f'{party}1'])


def ideal_swap_scenario(kind=ScenarioKind.BSM, theta: Optional[float] = None, bob_theta=None):
    """Maximally entangled sources with the ideal settings of the given family.

    Args:
        kind: bsm or tilted.
        theta: Tilt angle of the settings (tilted only).
        bob_theta: Tilt angle of Bob's basis; defaults to theta. Passing
            pi/4 gives the plain Bell-state measurement at Bob.
    """
    kind = ScenarioKind(kind)
    if kind is ScenarioKind.GHZ:
        raise DomainError("Use star_scenario for the GHZ network")
    obs = ideal_observables(kind, theta)
    if kind is ScenarioKind.BSM:
        bob = measurement_basis(ScenarioKind.BSM)
        weight = 0.0
    else:
        bob = measurement_basis(ScenarioKind.TILTED, theta if bob_theta is None else bob_theta)
        weight = tilt_weight_from_theta(theta)
    return SwapScenario(bell_state(0), bell_state(0), bob,
                        _obs_pair(obs, 'A'), _obs_pair(obs, 'C'), tilt_weight=weight)


def werner_swap_scenario(v):
    """Ideal devices with Werner sources of visibility v on both links."""
    base = ideal_swap_scenario()
    return replace(base, tau_ab1=werner_source(v), tau_b2c=werner_source(v))


def povm_noise_scenario(p):
    """Ideal sources and settings; Bob's measurement mixed with white noise p."""
    base = ideal_swap_scenario()
    return replace(base, bob=noisy_measurement(base.bob, p))


def star_scenario(v=1.0):
    """GHZ star network with Werner sources of visibility v and ideal devices."""
    obs = ideal_observables(ScenarioKind.GHZ)
    source = werner_source(v)
    return StarScenario((source, source, source), measurement_basis(ScenarioKind.GHZ), obs)


def _extend_source(tau, ancilla, unitary, outer_first):
    """Attach an ancilla to the outer system of a source and rotate it."""
    m = tau.mat
    if outer_first:
        # (O, B) (x) anc -> (O, anc, B) -> merge (O anc) into one factor
        joint = permute_factors(kron(m, ancilla.mat), [0, 2, 1])
        d_o, d_anc, d_b = joint.dims
        joint = joint.with_dims((d_o * d_anc, d_b))
        u_full = kron(as_cmatrix(unitary), CMatrix.identity(d_b)) if unitary is not None else None
    else:
        joint = kron(m, ancilla.mat)
        d_b, d_o, d_anc = joint.dims
        joint = joint.with_dims((d_b, d_o * d_anc))
        u_full = kron(CMatrix.identity(d_b), as_cmatrix(unitary)) if unitary is not None else None
    if u_full is not None:
        joint = (u_full @ joint @ u_full.dag()).with_dims(joint.dims)
    return DensityOperator(symmetrize(joint))


def _lift_observable(o, anc_dim, unitary=None):
    d = o.dim * anc_dim
    big = Observable(kron(o.mat, CMatrix.identity(anc_dim)).with_dims((d,)), o.factor)
    return big.conjugated(unitary) if unitary is not None else big


def with_ancilla(s: SwapScenario, ancilla: Optional[DensityOperator] = None,
                 unitary_a=None, unitary_c=None):
    """Embed an ancilla on Alice's and Charlie's systems.

    The settings become O (x) I_anc, conjugated by the optional local
    unitaries together with the state, so ideal statistics are unchanged.
    """
    anc = ancilla if ancilla is not None else DensityOperator.from_ket([1, 0], (2,))
    d_anc = anc.mat.rows
    return replace(
        s,
        tau_ab1=_extend_source(s.tau_ab1, anc, unitary_a, outer_first=True),
        tau_b2c=_extend_source(s.tau_b2c, anc, unitary_c, outer_first=False),
        obs_a=tuple(_lift_observable(o, d_anc, unitary_a) for o in s.obs_a),
        obs_c=tuple(_lift_observable(o, d_anc, unitary_c) for o in s.obs_c),
    )


def with_star_ancilla(s: StarScenario, ancilla: Optional[DensityOperator] = None):
    anc = ancilla if ancilla is not None else DensityOperator.from_ket([1, 0], (2,))
    taus = tuple(_extend_source(t, anc, None, outer_first=True) for t in s.taus)
    obs = {k: _lift_observable(o, anc.mat.rows) for k, o in s.observables.items()}
    return StarScenario(taus, s.rob, obs)


def permute_outcomes(s: SwapScenario, perm):
    """Relabel Bob's outcomes: new outcome b is old outcome perm[b]."""
    return replace(s, bob=s.bob.relabeled(perm))


def random_swap_scenario(rng: np.random.Generator, separable=False, product_bob=False):
    """Random sources and POVM on qubits, ideal settings.

    Args:
        rng: Seeded generator.
        separable: Draw product sources instead of generic ones.
        product_bob: Give Bob a product-basis measurement.
    """
    def source():
        if separable:
            return DensityOperator(kron(random_density_matrix(2, rng), random_density_matrix(2, rng)))
        return DensityOperator(random_density_matrix(4, rng, dims=(2, 2)))

    bob = product_basis() if product_bob else random_povm(4, 4, rng, dims=(2, 2))
    obs = ideal_observables(ScenarioKind.BSM)
    return SwapScenario(source(), source(), bob, _obs_pair(obs, 'A'), _obs_pair(obs, 'C'))
