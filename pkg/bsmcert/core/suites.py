"""
Invariant suites run by the `suite` command.

Each suite is a function (rng, bounds) -> SuiteResult. A suite fails on the
first violated check and reports it in its detail string.

Usage:
    from core.suites import run_suites

    for result in run_suites(seed=20190523):
        print(result.line())
"""
import logging
from dataclasses import dataclass
from typing import Callable, Dict, Iterable, List, Optional

import numpy as np

from core.certify import (
    DEFAULT_BOUNDS,
    BoundFunctions,
    extraction_gap,
    ghz_verify,
    lemma_marginal_dual_check,
    lemma_rescale_check,
    marginal_saturation_check,
    qsep_achievability,
    qsep_refined_bound,
    qsep_schmidt_bound,
    theorem1_verify,
    tilted_verify,
)
from core.channels import ChoiChannel, apply_on_factor, choi_tensor_apply, swap_gate
from core.exceptions import CertificationError, IdentityCheckError
from core.network import ideal_swap_scenario, star_scenario, werner_swap_scenario, with_ancilla
from core.qlinalg import (
    CMatrix,
    frobenius_distance,
    kron,
    random_density_matrix,
    random_hermitian,
    random_unitary,
)
from core.qobjects import (
    SIGMA_X,
    SIGMA_Z,
    Observable,
    ScenarioKind,
    measurement_basis,
    mixed_basis,
    product_basis,
)

# Set up logging
logger = logging.getLogger(__name__)

SWAP_TOL = 1e-9
LEMMA_TOL = 1e-9
G_BOUND_TOL = 1e-6
QSEP_TOL = 1e-12
DUAL_GRID = (0.50, 0.55, 0.60, 0.65, 0.70, 0.75, 0.80, 0.85, 0.90, 0.95, 0.99)
SATURATION_ANGLES = (np.pi / 12, np.pi / 8, np.pi / 6)


@dataclass
class SuiteResult:
    name: str
    passed: bool
    detail: str = ''

    def line(self):
        status = 'PASS' if self.passed else 'FAIL'
        return f"{status} {self.name} {self.detail}".rstrip()


def random_anticommuting_pair(d, rng: np.random.Generator):
    """X = U (sigma_x (x) I) U^dagger and Z = U (sigma_z (x) I) U^dagger on even d."""
    if d % 2:
        raise ValueError(f"Anticommuting +-1 pairs need even dimension, got {d}")
    u = random_unitary(d, rng).with_dims(None)
    rest = CMatrix.identity(d // 2)
    x = u @ kron(CMatrix(SIGMA_X), rest) @ u.dag()
    z = u @ kron(CMatrix(SIGMA_Z), rest) @ u.dag()
    return Observable(x.with_dims((d,))), Observable(z.with_dims((d,)))


def _close(a, b, tol, what):
    dist = frobenius_distance(a, b)
    if dist > tol:
        raise IdentityCheckError(f"{what}: residual {dist:.3e}")
    return dist


def swap_lemma_suite(rng, bounds=DEFAULT_BOUNDS, trials=100):
    worst = 0.0
    x_prime = CMatrix(SIGMA_X)
    z_prime = CMatrix(SIGMA_Z)
    for trial in range(trials):
        d = (2, 4, 6)[trial % 3]
        x, z = random_anticommuting_pair(d, rng)
        xm, zm = x.mat.with_dims(None), z.mat.with_dims(None)
        eye = CMatrix.identity(d)
        s = swap_gate(x, z).with_dims(None)
        worst = max(
            worst,
            _close(s.dag() @ s, CMatrix.identity(2 * d), SWAP_TOL, f"trial {trial} unitarity"),
            _close(s @ kron(CMatrix.identity(2), xm), kron(x_prime, eye) @ s, SWAP_TOL,
                   f"trial {trial} X relabeling"),
            _close(s @ kron(CMatrix.identity(2), zm), kron(z_prime, eye) @ s, SWAP_TOL,
                   f"trial {trial} Z relabeling"),
            _close(swap_gate(-x, z).with_dims(None), kron(z_prime, zm) @ s, SWAP_TOL,
                   f"trial {trial} sign flip of X"),
            _close(swap_gate(x, -z).with_dims(None), kron(x_prime, xm) @ s, SWAP_TOL,
                   f"trial {trial} sign flip of Z"),
        )
    return SuiteResult('swap-lemma', True, f"trials={trials} max_residual={worst:.3e}")


def lemma1_dual_suite(rng, bounds=DEFAULT_BOUNDS):
    objectives = []
    for c in DUAL_GRID:
        _, _, objective = lemma_marginal_dual_check(c, tol=LEMMA_TOL)
        objectives.append(objective)
    return SuiteResult('lemma1-dual', True, f"points={len(DUAL_GRID)} min_objective={min(objectives):.6f}")


def lemma1_saturation_suite(rng, bounds=DEFAULT_BOUNDS):
    for theta in SATURATION_ANGLES:
        marginal_saturation_check(theta)
    return SuiteResult('lemma1-saturation', True, f"angles={len(SATURATION_ANGLES)}")


def lemma2_rescale_suite(rng, bounds=DEFAULT_BOUNDS, trials=1000):
    worst = np.inf
    for trial in range(trials):
        d_b = (2, 3, 4)[trial % 3]
        nu = random_density_matrix(2 * d_b, rng, dims=(2, d_b))
        worst = min(worst, lemma_rescale_check(nu, bounds, tol=LEMMA_TOL))
    return SuiteResult('lemma2-rescale', True, f"trials={trials} min_eig={worst:.3e}")


def qsep_witness_suite(rng, bounds=DEFAULT_BOUNDS):
    expectations = (
        ('bsm', measurement_basis(ScenarioKind.BSM), 0.5),
        ('mixed', mixed_basis(), 0.75),
        ('product', product_basis(), 1.0),
    )
    for name, basis, expected in expectations:
        refined = qsep_refined_bound(basis)
        if abs(refined - expected) > QSEP_TOL:
            raise IdentityCheckError(f"{name}: refined bound {refined:.15f}, expected {expected}")
        if qsep_schmidt_bound(basis) < refined - QSEP_TOL:
            raise IdentityCheckError(f"{name}: crude bound below refined bound")
        value, _ = qsep_achievability(basis)
        if abs(value - refined) > QSEP_TOL:
            raise IdentityCheckError(f"{name}: witness reaches {value:.15f}, bound is {refined:.15f}")

    for theta in (np.pi / 8, np.pi / 6):
        tilted = qsep_refined_bound(measurement_basis(ScenarioKind.TILTED, theta))
        if abs(tilted - np.cos(theta) ** 2) > QSEP_TOL:
            raise IdentityCheckError(f"tilted theta={theta:.6f}: bound {tilted:.15f}")
    ghz = qsep_refined_bound(measurement_basis(ScenarioKind.GHZ), split=1)
    if abs(ghz - 0.5) > QSEP_TOL:
        raise IdentityCheckError(f"ghz: bound {ghz:.15f}")
    return SuiteResult('qsep-witness', True, "bsm=0.5 mixed=0.75 product=1")


def _random_channel(in_dim, out_dim, rng):
    rank = in_dim * out_dim
    ks = rng.normal(size=(rank, out_dim, in_dim)) + 1j * rng.normal(size=(rank, out_dim, in_dim))
    return ChoiChannel.from_kraus(list(ks))


def choi_tensor_suite(rng, bounds=DEFAULT_BOUNDS, trials=100):
    worst = 0.0
    for trial in range(trials):
        in1, in2, out1, out2 = rng.integers(2, 4, size=4)
        ch1 = _random_channel(int(in1), int(out1), rng)
        ch2 = _random_channel(int(in2), int(out2), rng)
        omega = random_hermitian(int(in1 * in2), rng, dims=(int(in1), int(in2)))
        joint = choi_tensor_apply([ch1, ch2], omega)
        stepwise = apply_on_factor(ch2, apply_on_factor(ch1, omega, 0), 1)
        scale = max(1.0, float(np.max(np.abs(joint.data))))
        worst = max(worst, _close(joint, stepwise, SWAP_TOL * scale, f"trial {trial}"))
    return SuiteResult('choi-tensor', True, f"trials={trials} max_residual={worst:.3e}")


def exact_theorems_suite(rng, bounds=DEFAULT_BOUNDS):
    reports = [
        theorem1_verify(ideal_swap_scenario()),
        theorem1_verify(with_ancilla(ideal_swap_scenario(),
                                     unitary_a=random_unitary(4, rng), unitary_c=random_unitary(4, rng))),
        tilted_verify(np.pi / 8, ideal_swap_scenario(ScenarioKind.TILTED, np.pi / 8)),
        tilted_verify(np.pi / 6, ideal_swap_scenario(ScenarioKind.TILTED, np.pi / 6)),
        ghz_verify(star_scenario()),
    ]
    worst = max(r.residual for r in reports)
    return SuiteResult('exact-theorems', True, f"checks={len(reports)} max_residual={worst:.3e}")


def g_bound_suite(rng, bounds=DEFAULT_BOUNDS):
    gaps = []
    for v in np.linspace(0.95, 1.0, 11):
        gap = extraction_gap(werner_swap_scenario(float(v)), bounds)
        if gap < -G_BOUND_TOL:
            raise IdentityCheckError(f"v={v:.4f}: fidelity falls {-gap:.3e} below g(beta)")
        gaps.append(gap)
    return SuiteResult('g-bound', True, f"points={len(gaps)} min_gap={min(gaps):.3e}")


SUITES: Dict[str, Callable] = {
    'swap-lemma': swap_lemma_suite,
    'lemma1-dual': lemma1_dual_suite,
    'lemma1-saturation': lemma1_saturation_suite,
    'lemma2-rescale': lemma2_rescale_suite,
    'qsep-witness': qsep_witness_suite,
    'choi-tensor': choi_tensor_suite,
    'exact-theorems': exact_theorems_suite,
    'g-bound': g_bound_suite,
}


def run_suite(name, seed, bounds: BoundFunctions = DEFAULT_BOUNDS) -> SuiteResult:
    """Run one suite with its own generator; failures become a failed result."""
    rng = np.random.default_rng(seed)
    try:
        result = SUITES[name](rng, bounds)
    except CertificationError as e:
        logger.error(f"Suite {name} failed: {e}")
        return SuiteResult(name, False, str(e))
    logger.info(f"Suite {name} passed: {result.detail}")
    return result


def run_suites(seed, names: Optional[Iterable[str]] = None,
               bounds: BoundFunctions = DEFAULT_BOUNDS) -> List[SuiteResult]:
    selected = list(SUITES) if names is None else list(names)
    unknown = [n for n in selected if n not in SUITES]
    if unknown:
        raise KeyError(f"Unknown suites: {', '.join(unknown)}")
    return [run_suite(name, seed, bounds) for name in selected]
