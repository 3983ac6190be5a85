"""
Certification layer: bound functions, quality of simulation, separable
thresholds, exact self-test verifiers and the robust swapping pipeline.

Usage:
    from core.certify import theorem2_certify, robust_bound
    from core.network import werner_swap_scenario

    report = theorem2_certify(werner_swap_scenario(0.98))
    print(report.to_dict())
"""
import logging
from dataclasses import dataclass, field, replace
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import brentq, linear_sum_assignment, minimize, minimize_scalar

from core.channels import (
    CHOI_TOL,
    ChoiChannel,
    apply_on_factor,
    choi_from_state,
    choi_tensor_apply,
    regularize,
    robust_choi_pair,
    swap_channel,
)
from core.exceptions import (
    DimensionError,
    DomainError,
    IdentityCheckError,
    NonUnitalError,
    PreconditionError,
    RankDeficientError,
    UnsupportedBasisError,
)
from core.qlinalg import (
    INV_SQRT,
    ZERO_TOL,
    CMatrix,
    as_cmatrix,
    eig_hermitian,
    frobenius_distance,
    fidelity_with_pure,
    hs_inner,
    is_rank_one_projector,
    kron,
    mat_func,
    min_eig,
    partial_trace,
    symmetrize,
)
from core.qobjects import (
    SIGMA_Z,
    TSIRELSON,
    DensityOperator,
    Measurement,
    ScenarioKind,
    bell_state,
    marginal_bias,
    measurement_basis,
    schmidt_coefficients,
    tilt_weight_from_theta,
    tilted_bell_ket,
)
from core.network import (
    StarScenario,
    SwapScenario,
    beta_ave,
    run_star,
    run_swap,
    swap_conditional_states,
)

# Set up logging
logger = logging.getLogger(__name__)

EXACT_TOL = 1e-7
VERDICT_TOL = 1e-12
RANK_TOL = 1e-8
ETA_EDGE = 1e-9
MERMIN_MAX = 4.0
QSEP_BSM = 0.5

CERTIFIED = 'entangled-certified'
INCONCLUSIVE = 'inconclusive'
PRECONDITION_FAILED = 'precondition-failed'

REPORT_KEYS = ('scenario', 'beta_ave', 'q', 'eta_star', 'bound', 'qsep', 'verdict', 'fidelities')


@dataclass(frozen=True)
class BoundFunctions:
    """Closed-form functions of the robust bound.

    g maps a CHSH value to the guaranteed extraction fidelity; s and t are
    the coefficients of the operator rescaling inequality; a and b give
    nu_A^(-1/2) = a I - b sigma_z for spectrum(nu_A) = {(1 +- eta)/2}.
    """
    x_star: float = (16 + 14 * np.sqrt(2)) / 17

    def g(self, beta):
        slope = 1 / (2 * (TSIRELSON - self.x_star))
        return np.maximum(0.5, 0.5 + (beta - self.x_star) * slope)

    def s(self, eta):
        return 2 / np.sqrt(1 - eta ** 2)

    def t(self, eta):
        return 4 / np.sqrt(1 - eta ** 2) - 4 / (1 + eta)

    def a(self, eta):
        return (np.sqrt(1 + eta) + np.sqrt(1 - eta)) / np.sqrt(2 * (1 - eta ** 2))

    def b(self, eta):
        return (np.sqrt(1 + eta) - np.sqrt(1 - eta)) / np.sqrt(2 * (1 - eta ** 2))

    def eta_star(self, q):
        return float(2 * np.sqrt(max(q * (1 - q), 0.0)))


DEFAULT_BOUNDS = BoundFunctions()


@dataclass
class BoundPoint:
    beta_ave: float
    q: float
    eta_star: float
    bound: float
    eta_argmin: float


@dataclass
class CertReport:
    """Outcome of one certification run.

    Only REPORT_KEYS (plus detail on precondition failures) are part of the
    serialized report; the remaining fields are diagnostics.
    """
    scenario: str
    beta_ave: Optional[float]
    q: Optional[float]
    eta_star: Optional[float]
    bound: Optional[float]
    qsep: float
    verdict: str
    fidelities: List[float] = field(default_factory=list)
    constructive_q: Optional[float] = None
    eta_a: Optional[float] = None
    eta_c: Optional[float] = None
    trace_deficit: float = 0.0
    residual: float = 0.0
    detail: str = ''

    @classmethod
    def precondition_failed(cls, scenario, qsep, detail, beta=None):
        return cls(scenario=scenario, beta_ave=beta, q=None, eta_star=None, bound=None,
                   qsep=qsep, verdict=PRECONDITION_FAILED, detail=detail)

    @property
    def certified(self):
        return self.verdict == CERTIFIED

    def to_dict(self):
        out = {key: getattr(self, key) for key in REPORT_KEYS}
        out['fidelities'] = list(self.fidelities)
        if self.verdict == PRECONDITION_FAILED:
            out['detail'] = self.detail
        return out


def _verdict(bound, qsep):
    return CERTIFIED if bound > qsep + VERDICT_TOL else INCONCLUSIVE


# Bound functions
def g_extraction(beta, bounds: BoundFunctions = DEFAULT_BOUNDS):
    """Fidelity guaranteed by a CHSH value beta."""
    if not -TSIRELSON - EXACT_TOL <= beta <= TSIRELSON + EXACT_TOL:
        raise DomainError(f"CHSH value {beta} lies outside [-2 sqrt 2, 2 sqrt 2]")
    return float(bounds.g(min(beta, TSIRELSON)))


def robust_bound_point(beta, bounds: BoundFunctions = DEFAULT_BOUNDS, grid_points=10_000):
    """Robust lower bound on Q at an average CHSH value, with its ingredients.

    Minimizes (4 s(eta) q - t(eta)) / (8 (1 + eta*)) over eta in [0, eta*]
    on a dense grid, then refines around the best grid point.

    Args:
        beta: Average CHSH value in (2, 2 sqrt 2].
        bounds: Bound functions to use.
        grid_points: Size of the initial grid.

    Returns:
        BoundPoint: q, eta*, the bound and the minimizing eta.

    Raises:
        DomainError: beta outside (2, 2 sqrt 2].
    """
    if not 2 < beta <= TSIRELSON + EXACT_TOL:
        raise DomainError(f"Average CHSH value {beta} lies outside (2, 2 sqrt 2]")
    beta = min(beta, TSIRELSON)
    q = float(bounds.g(beta))
    eta_star = bounds.eta_star(q)
    denominator = 8 * (1 + eta_star)

    def objective(eta):
        return (4 * bounds.s(eta) * q - bounds.t(eta)) / denominator

    upper = min(eta_star, 1 - ETA_EDGE)
    if upper <= 0:
        return BoundPoint(beta, q, eta_star, float(objective(0.0)), 0.0)

    grid = np.linspace(0.0, upper, grid_points)
    values = objective(grid)
    k = int(np.argmin(values))
    best_eta, best = float(grid[k]), float(values[k])

    lo, hi = grid[max(k - 1, 0)], grid[min(k + 1, grid_points - 1)]
    if hi > lo:
        res = minimize_scalar(objective, bounds=(lo, hi), method='bounded',
                              options={'xatol': 1e-10})
        if res.fun < best:
            best_eta, best = float(res.x), float(res.fun)

    logger.debug(f"robust bound at beta={beta:.9f}: q={q:.9f} eta*={eta_star:.9f} "
                 f"min at eta={best_eta:.9f} -> {best:.9f}")
    return BoundPoint(beta, q, eta_star, best, best_eta)


def robust_bound(beta, bounds: BoundFunctions = DEFAULT_BOUNDS):
    return robust_bound_point(beta, bounds).bound


def certification_threshold(bounds: BoundFunctions = DEFAULT_BOUNDS, qsep=QSEP_BSM):
    """Average CHSH value where the robust bound crosses qsep."""
    return float(brentq(lambda b: robust_bound(b, bounds) - qsep,
                        max(bounds.x_star, 2 + 1e-9), TSIRELSON, xtol=1e-12))


# Quality of simulation and separable thresholds
def _check_outcome_counts(real_m, ideal_m):
    if len(real_m) != len(ideal_m):
        raise DimensionError(f"{len(real_m)} real outcomes against {len(ideal_m)} ideal ones")


def q_of_simulation(real_m: Measurement, ideal_m: Measurement, *channels: ChoiChannel,
                    tol=CHOI_TOL):
    """Overlap objective of Q evaluated at the given local unital maps.

    Returns:
        float: (1/d_ideal) sum_j <(L_1 (x) ... (x) L_n)(F^j), P^j>, a lower
        bound on Q.

    Raises:
        NonUnitalError: one of the maps is not unital.
        IdentityCheckError: the value exceeds 1.
    """
    _check_outcome_counts(real_m, ideal_m)
    for k, ch in enumerate(channels):
        if not ch.is_unital(tol):
            raise NonUnitalError(f"Channel {k} is not unital (residual {ch.unital_residual():.3e})")

    total = 0.0
    for f_j, p_j in zip(real_m.elements, ideal_m.elements):
        mapped = symmetrize(choi_tensor_apply(channels, f_j))
        total += hs_inner(mapped.with_dims(None), p_j.with_dims(None))
    value = total / ideal_m.dim
    if value > 1 + tol:
        raise IdentityCheckError(f"Simulation quality {value:.12f} exceeds 1")
    return float(value)


def q_trivial_lower(real_m: Measurement, ideal_m: Measurement):
    """Value reached by the maps X -> Tr(X)/|in| I."""
    _check_outcome_counts(real_m, ideal_m)
    total = sum(f.trace().real * p.trace().real for f, p in zip(real_m.elements, ideal_m.elements))
    return float(total / (ideal_m.dim * real_m.dim))


def _largest_schmidt(ideal_m: Measurement, split):
    dims = ideal_m.dims
    if not 0 < split < len(dims):
        raise DimensionError(f"Split {split} does not cut factors {dims}")
    d1 = int(np.prod(dims[:split]))
    d2 = int(np.prod(dims[split:]))
    alphas = []
    for label, p in zip(ideal_m.labels, ideal_m.elements):
        if not is_rank_one_projector(p):
            raise DomainError(f"Ideal element {label} is not a rank-1 projector")
        psi = eig_hermitian(p).eigenvectors[:, 0]
        alphas.append(float(schmidt_coefficients(psi, (d1, d2))[0]))
    return alphas


def qsep_schmidt_bound(ideal_m: Measurement, split=1):
    """Crude separable threshold: the largest squared Schmidt coefficient."""
    return max(a ** 2 for a in _largest_schmidt(ideal_m, split))


def qsep_refined_bound(ideal_m: Measurement, split=1):
    """Separable threshold with traces allocated greedily by Schmidt weight.

    Outcomes are taken in order of non-increasing alpha_max; each receives
    trace min(alpha^-2, D - already allocated).
    """
    alphas = sorted(_largest_schmidt(ideal_m, split), reverse=True)
    remaining = float(ideal_m.dim)
    total = 0.0
    for alpha in alphas:
        allocated = max(0.0, min(alpha ** -2, remaining))
        total += alpha ** 2 * allocated
        remaining -= allocated
    return total / ideal_m.dim


def qsep_achievability(ideal_m: Measurement):
    """Best computational product-basis witness for a qubit ideal basis.

    Returns:
        (float, Measurement): The witness value under identity maps and the
        witness, ordered like ideal_m.

    Raises:
        UnsupportedBasisError: not a rank-1 projective basis on qubits.
    """
    if any(d != 2 for d in ideal_m.dims) or len(ideal_m) != ideal_m.dim:
        raise UnsupportedBasisError(f"No product witness for a {len(ideal_m)}-outcome basis on {ideal_m.dims}")
    if not all(is_rank_one_projector(p) for p in ideal_m.elements):
        raise UnsupportedBasisError("Witness construction needs rank-1 projective ideal elements")

    d = ideal_m.dim
    overlaps = np.array([[p.data[k, k].real for p in ideal_m.elements] for k in range(d)])
    rows, cols = linear_sum_assignment(overlaps, maximize=True)
    product_for = dict(zip(cols, rows))
    elements = []
    for j in range(len(ideal_m)):
        e = np.zeros((d, d), dtype=complex)
        e[product_for[j], product_for[j]] = 1.0
        elements.append(CMatrix(e))
    witness = Measurement(tuple(elements), ideal_m.dims, ideal_m.labels)

    identities = [ChoiChannel.identity(2) for _ in ideal_m.dims]
    value = q_of_simulation(witness, ideal_m, *identities)
    logger.debug(f"Product witness assignment {list(cols)} reaches {value:.12f}")
    return value, witness


# Extraction
@dataclass(frozen=True, eq=False)
class Extraction:
    """Extraction channels with the extracted source states."""
    gamma_a: ChoiChannel
    gamma_c: ChoiChannel
    sigma_ab1: DensityOperator
    sigma_b2c: DensityOperator

    @property
    def trace_deficit(self):
        return max(self.gamma_a.trace_deficit, self.gamma_c.trace_deficit)


def chsh_extraction(s: SwapScenario, zero_tol=ZERO_TOL) -> Extraction:
    """Swap channels built from Alice's and Charlie's settings.

    Z_A = r(A0), X_A = r(A1), Z_C = r(C0 + C1), X_C = r(C0 - C1).
    """
    a0, a1 = s.obs_a
    c0, c1 = s.obs_c
    z_a = regularize(a0, zero_tol, 'A')
    x_a = regularize(a1, zero_tol, 'A')
    z_c = regularize(c0.mat + c1.mat, zero_tol, 'C')
    x_c = regularize(c0.mat - c1.mat, zero_tol, 'C')
    gamma_a = swap_channel(x_a, z_a)
    gamma_c = swap_channel(x_c, z_c)

    sigma_ab1 = DensityOperator(symmetrize(apply_on_factor(gamma_a, s.tau_ab1.mat, 0)))
    sigma_b2c = DensityOperator(symmetrize(apply_on_factor(gamma_c, s.tau_b2c.mat, 1)))
    return Extraction(gamma_a, gamma_c, sigma_ab1, sigma_b2c)


def _extracted(chs, state):
    return symmetrize(choi_tensor_apply(chs, state.mat))


def extraction_fidelities(s: SwapScenario, zero_tol=ZERO_TOL, outcomes=None, extraction=None,
                          ideal_m: Optional[Measurement] = None):
    """Fidelity of each extracted conditional state with its Bell state.

    Degenerate outcomes report 0.
    """
    outcomes = run_swap(s) if outcomes is None else outcomes
    extraction = chsh_extraction(s, zero_tol) if extraction is None else extraction
    ideal_m = measurement_basis(ScenarioKind.BSM) if ideal_m is None else ideal_m
    fidelities = []
    for o, target in zip(outcomes, ideal_m.elements):
        if o.degenerate:
            fidelities.append(0.0)
            continue
        extracted = _extracted([extraction.gamma_a, extraction.gamma_c], o.state)
        fidelities.append(fidelity_with_pure(extracted, target))
    return fidelities


def extraction_gap(s: SwapScenario, bounds: BoundFunctions = DEFAULT_BOUNDS, zero_tol=ZERO_TOL):
    """min over outcomes of F_b - g(beta_b); non-negative when g is a valid bound."""
    outcomes = run_swap(s)
    fidelities = extraction_fidelities(s, zero_tol, outcomes=outcomes)
    gaps = [f - g_extraction(o.beta, bounds)
            for f, o in zip(fidelities, outcomes) if not o.degenerate]
    return float(min(gaps))


# Exact self-tests
def _require_maximal(outcomes, maximum, tol, what):
    for o in outcomes:
        if o.degenerate or o.beta < maximum - tol:
            value = 'degenerate' if o.degenerate else f'{o.beta:.12f}'
            raise PreconditionError(
                f"{what} for outcome {o.label} is {value}, below the maximum {maximum:.12f}; "
                f"use the robust pipeline for non-maximal statistics")


def swap_identity_residuals(s: SwapScenario, ideal_m: Measurement, zero_tol=ZERO_TOL):
    """Per-outcome residuals of the swapping self-test identities.

    For each outcome b the largest Frobenius distance among
    (Gamma_A (x) Gamma_C)(tau^b), the conditional state of the extracted
    sources and (L_B1 (x) L_B2)(B^b) to the ideal element P^b.

    Returns:
        (list, Extraction, (ChoiChannel, ChoiChannel))
    """
    outcomes = run_swap(s)
    ex = chsh_extraction(s, zero_tol)
    lam1 = choi_from_state(ex.sigma_ab1, 2.0, out_factor=0)
    lam2 = choi_from_state(ex.sigma_b2c, 2.0, out_factor=1)
    for name, lam in (('L_B1', lam1), ('L_B2', lam2)):
        if not lam.is_unital(1e-7):
            raise IdentityCheckError(f"{name} is not unital (residual {lam.unital_residual():.3e})")

    swapped = swap_conditional_states(ex.sigma_ab1, ex.sigma_b2c, s.bob)
    residuals = []
    for o, o_ext, element, target in zip(outcomes, swapped, s.bob.elements, ideal_m.elements):
        if o.degenerate or o_ext.degenerate:
            residuals.append(float('inf'))
            continue
        candidates = (
            _extracted([ex.gamma_a, ex.gamma_c], o.state),
            o_ext.state.mat,
            choi_tensor_apply([lam1, lam2], element),
        )
        residual = max(frobenius_distance(c.with_dims(None), target.with_dims(None)) for c in candidates)
        residuals.append(float(residual))
        logger.debug(f"Outcome {o.label}: identity residual {residual:.3e}")
    return residuals, ex, (lam1, lam2)


def _exact_swap_report(s, ideal_m, scenario, maximum, exact_tol, zero_tol, what):
    outcomes = run_swap(s)
    _require_maximal(outcomes, maximum, exact_tol, what)

    residuals, ex, (lam1, lam2) = swap_identity_residuals(s, ideal_m, zero_tol)
    worst = max(residuals)
    if worst > exact_tol:
        b = int(np.argmax(residuals))
        raise IdentityCheckError(f"Self-test identity fails for outcome {ideal_m.labels[b]} "
                                 f"(residual {worst:.3e})")

    q = q_of_simulation(s.bob, ideal_m, lam1, lam2, tol=exact_tol)
    qsep = qsep_refined_bound(ideal_m)
    fidelities = [fidelity_with_pure(_extracted([ex.gamma_a, ex.gamma_c], o.state), t)
                  for o, t in zip(outcomes, ideal_m.elements)]
    logger.info(f"{scenario}: all {len(residuals)} identities hold (max residual {worst:.3e}), Q={q:.12f}")
    return CertReport(
        scenario=scenario, beta_ave=beta_ave(outcomes), q=q, eta_star=0.0, bound=q, qsep=qsep,
        verdict=_verdict(q, qsep), fidelities=fidelities, constructive_q=q, eta_a=0.0, eta_c=0.0,
        trace_deficit=ex.trace_deficit, residual=worst,
    )


def theorem1_verify(s: SwapScenario, exact_tol=EXACT_TOL, zero_tol=ZERO_TOL):
    """Exact self-test of the Bell-state measurement from maximal CHSH values.

    Raises:
        PreconditionError: some conditional CHSH value is not maximal.
        IdentityCheckError: an extraction identity fails.
    """
    return _exact_swap_report(s, measurement_basis(ScenarioKind.BSM), 'bsm', TSIRELSON,
                              exact_tol, zero_tol, 'CHSH value')


def tilted_verify(theta, s: SwapScenario, exact_tol=EXACT_TOL, zero_tol=ZERO_TOL):
    """Exact self-test of the tilted Bell basis at angle theta.

    The scenario's statistics are evaluated with the tilted CHSH operators
    of theta; theta = pi/4 is the plain Bell-state test.
    """
    if np.isclose(theta, np.pi / 4, atol=1e-12):
        return theorem1_verify(s, exact_tol, zero_tol)
    ideal_m = measurement_basis(ScenarioKind.TILTED, theta)
    weighted = replace(s, tilt_weight=tilt_weight_from_theta(theta))
    return _exact_swap_report(weighted, ideal_m, 'tilted', weighted.bell_bound(),
                              exact_tol, zero_tol, 'Tilted CHSH value')


def _star_extraction(s: StarScenario, zero_tol):
    gammas, sigmas = [], []
    for party, tau in zip('ABC', s.taus):
        p0 = s.observables[f'{party}0']
        p1 = s.observables[f'{party}1']
        x = regularize(p0, zero_tol, party)
        commutator = p0.mat @ p1.mat - p1.mat @ p0.mat
        z = regularize(symmetrize(commutator * (-0.5j)), zero_tol, party)
        gamma = swap_channel(x, z)
        gammas.append(gamma)
        sigmas.append(DensityOperator(symmetrize(apply_on_factor(gamma, tau.mat, 0))))
    return gammas, sigmas


def ghz_verify(s: StarScenario, exact_tol=EXACT_TOL, zero_tol=ZERO_TOL):
    """Exact self-test of the GHZ measurement in the star network.

    Formal Paulis per party are X = r(P0) and Z = r(-i[P0, P1]/2).
    """
    outcomes = run_star(s)
    _require_maximal(outcomes, MERMIN_MAX, exact_tol, 'Mermin value')

    ideal_m = measurement_basis(ScenarioKind.GHZ)
    gammas, sigmas = _star_extraction(s, zero_tol)
    lams = [choi_from_state(sigma, 2.0, out_factor=0) for sigma in sigmas]

    residuals, fidelities = [], []
    for o, element, target in zip(outcomes, s.rob.elements, ideal_m.elements):
        extracted = _extracted(gammas, o.state)
        mapped = choi_tensor_apply(lams, element)
        tgt = target.with_dims(None)
        residuals.append(max(frobenius_distance(extracted.with_dims(None), tgt),
                             frobenius_distance(mapped.with_dims(None), tgt)))
        fidelities.append(fidelity_with_pure(extracted, target))
    worst = max(residuals)
    if worst > exact_tol:
        r = ideal_m.labels[int(np.argmax(residuals))]
        raise IdentityCheckError(f"GHZ identity fails for outcome {r} (residual {worst:.3e})")

    q = q_of_simulation(s.rob, ideal_m, *lams, tol=exact_tol)
    qsep = qsep_refined_bound(ideal_m, split=1)
    logger.info(f"ghz: all eight identities hold (max residual {worst:.3e}), Q={q:.12f}")
    return CertReport(
        scenario='ghz', beta_ave=beta_ave(outcomes, worst_case=-MERMIN_MAX), q=q, eta_star=0.0,
        bound=q, qsep=qsep, verdict=_verdict(q, qsep), fidelities=fidelities, constructive_q=q,
        trace_deficit=max(g.trace_deficit for g in gammas), residual=worst,
    )


# Robust certification
def theorem2_certify(s: SwapScenario, zero_tol=ZERO_TOL, bounds: BoundFunctions = DEFAULT_BOUNDS,
                     scenario='bsm'):
    """Robust certification of an entangled Bell-state-like measurement.

    The verdict compares the analytic bound at the observed average CHSH
    value with the separable threshold 1/2. The overlap reached by the
    explicit Choi pair built from the extracted states is reported as
    constructive_q.

    Raises:
        PreconditionError: average CHSH value at most 2.
        IdentityCheckError: an extracted marginal is more biased than eta*.
        RankDeficientError: an extracted marginal is (nearly) pure.
    """
    outcomes = run_swap(s)
    b_ave = beta_ave(outcomes)
    if b_ave <= 2:
        raise PreconditionError(f"Average CHSH value {b_ave:.9f} does not exceed 2; nothing to certify")

    point = robust_bound_point(b_ave, bounds)
    ex = chsh_extraction(s, zero_tol)
    eta_a = marginal_bias(partial_trace(ex.sigma_ab1.mat, keep=[0]))
    eta_c = marginal_bias(partial_trace(ex.sigma_b2c.mat, keep=[1]))
    for name, eta in (("A'", eta_a), ("C'", eta_c)):
        if eta >= 1 - RANK_TOL:
            raise RankDeficientError(f"Marginal on {name} is pure (bias {eta:.12f})")
        if eta > point.eta_star + 1e-9:
            raise IdentityCheckError(f"Marginal bias on {name} is {eta:.9f}, above eta*={point.eta_star:.9f}")

    lam1, lam2 = robust_choi_pair(ex.sigma_ab1, ex.sigma_b2c)
    ideal_m = measurement_basis(ScenarioKind.BSM)
    constructive = q_of_simulation(s.bob, ideal_m, lam1, lam2)
    fidelities = extraction_fidelities(s, zero_tol, outcomes=outcomes, extraction=ex, ideal_m=ideal_m)

    verdict = _verdict(point.bound, QSEP_BSM)
    logger.info(f"{scenario}: beta_ave={b_ave:.9f} bound={point.bound:.9f} "
                f"constructive={constructive:.9f} -> {verdict}")
    return CertReport(
        scenario=scenario, beta_ave=b_ave, q=point.q, eta_star=point.eta_star, bound=point.bound,
        qsep=QSEP_BSM, verdict=verdict, fidelities=fidelities, constructive_q=constructive,
        eta_a=eta_a, eta_c=eta_c, trace_deficit=ex.trace_deficit,
    )


# Lemma checks
def lemma_marginal_dual_check(c, tol=1e-9):
    """Dual certificate bounding the marginal bias by the Bell-state overlap.

    Args:
        c: Overlap with Phi^+, in [1/2, 1).

    Returns:
        (lambda_1, lambda_2, objective) with objective = 2 sqrt(c (1 - c)).
    """
    if not 0.5 <= c < 1:
        raise DomainError(f"Overlap must lie in [1/2, 1), got {c}")
    lam1 = float(np.sqrt(c / (1 - c)))
    lam2 = float((2 * c - 1) / np.sqrt(c * (1 - c)))
    objective = lam1 - lam2 * c

    z_i = kron(CMatrix(SIGMA_Z, dims=(2,)), CMatrix.identity(2, dims=(2,)))
    slack = lam1 * CMatrix.identity(4, dims=(2, 2)) - lam2 * bell_state(0).mat - z_i
    margin = min_eig(slack)
    if margin < -tol:
        raise IdentityCheckError(f"Dual infeasible at c={c}: min eigenvalue {margin:.3e}")
    expected = 2 * np.sqrt(c * (1 - c))
    if abs(objective - expected) > 1e-10:
        raise IdentityCheckError(f"Dual objective {objective:.15f} differs from {expected:.15f}")
    logger.debug(f"c={c}: lambda1={lam1:.9f} lambda2={lam2:.9f} margin={margin:.3e}")
    return lam1, lam2, float(objective)


def marginal_saturation_check(theta, tol=1e-10):
    """cos(theta)|00> + sin(theta)|11> saturates the marginal bound.

    Returns:
        (c, spectrum, predicted) where predicted = (1 +- 2 sqrt(c(1-c)))/2.
    """
    psi = tilted_bell_ket(theta, 0)
    rho = DensityOperator.from_ket(psi, (2, 2))
    c = fidelity_with_pure(rho, bell_state(0).mat)
    spectrum = eig_hermitian(rho.marginal([0]).mat).eigenvalues
    eta = 2 * np.sqrt(c * (1 - c))
    predicted = np.array([(1 + eta) / 2, (1 - eta) / 2])
    if np.max(np.abs(spectrum - predicted)) > tol:
        raise IdentityCheckError(f"theta={theta}: spectrum {spectrum} differs from {predicted}")
    return c, spectrum, predicted


def lemma_rescale_check(nu, bounds: BoundFunctions = DEFAULT_BOUNDS, tol=1e-9):
    """min_eig(mu - s(eta) nu + t(eta) (I/2) (x) nu_B) for a qubit-qudit state.

    mu = (nu_A^(-1/2) (x) I) nu (nu_A^(-1/2) (x) I).

    Raises:
        RankDeficientError: nu_A is (nearly) pure.
        IdentityCheckError: the inequality is violated beyond tol.
    """
    m = as_cmatrix(nu)
    if m.dims is None or len(m.dims) != 2 or m.dims[0] != 2:
        raise DimensionError(f"Expected a qubit (x) qudit operator, got dims {m.dims}")
    d_b = m.dims[1]
    nu_a = partial_trace(m, keep=[0])
    nu_b = partial_trace(m, keep=[1])
    eta = marginal_bias(nu_a)
    if eta >= 1 - RANK_TOL:
        raise RankDeficientError(f"Qubit marginal is pure (bias {eta:.12f})")

    inv_half = kron(mat_func(nu_a, INV_SQRT), CMatrix.identity(d_b, dims=(d_b,)))
    mu = inv_half @ m @ inv_half
    half_identity = CMatrix.identity(2, dims=(2,)) / 2
    gap = mu - float(bounds.s(eta)) * m + float(bounds.t(eta)) * kron(half_identity, nu_b)
    value = min_eig(symmetrize(gap))
    if value < -tol:
        raise IdentityCheckError(f"Rescaling inequality violated: min eigenvalue {value:.3e} at eta={eta:.6f}")
    return value


def single_operator_caveat():
    """Overlap on a single outcome certifies nothing.

    F^0 = I with every other element 0, mapped by the depolarizing unital
    map, overlaps Phi^0 perfectly.

    Returns:
        (float, float): overlap on outcome 0 and the full Q objective.
    """
    ideal_m = measurement_basis(ScenarioKind.BSM)
    zero = CMatrix.zeros(4, dims=(2, 2))
    real_m = Measurement((CMatrix.identity(4, dims=(2, 2)), zero, zero, zero), (2, 2))
    depolarizing = ChoiChannel.depolarizing(2, 2)
    mapped = choi_tensor_apply([depolarizing, depolarizing], real_m.elements[0])
    overlap = hs_inner(mapped.with_dims(None), ideal_m.elements[0].with_dims(None))
    return overlap, q_of_simulation(real_m, ideal_m, depolarizing, depolarizing)


# Heuristic lower bound on Q
def _unital_kraus(params, in_dim, out_dim):
    rank = in_dim * out_dim
    raw = params.reshape(2, rank, out_dim, in_dim)
    ks = raw[0] + 1j * raw[1]
    total = np.einsum('rai,rbi->ab', ks, ks.conj())
    vals, vecs = np.linalg.eigh(total)
    vals = np.maximum(vals, 1e-12)
    norm = (vecs / np.sqrt(vals)) @ vecs.conj().T
    return np.einsum('ab,rbi->rai', norm, ks)


def _choi_tensor(ks):
    # T[a, k, b, i] = sum_r K_r[a, k] conj(K_r[b, i])
    return np.einsum('rak,rbi->akbi', ks, ks.conj())


def _params_from_choi(ch: ChoiChannel):
    vals, vecs = np.linalg.eigh(symmetrize(ch.choi).data)
    vals = np.clip(vals, 0.0, None)
    ks = (vecs * np.sqrt(vals)).T.reshape(-1, ch.out_dim, ch.in_dim)
    return np.concatenate([ks.real.reshape(-1), ks.imag.reshape(-1)])


def q_heuristic_optimize(real_m: Measurement, ideal_m: Measurement, seeds=4, rng_seed=0,
                         rounds=4, initial: Sequence[Tuple[ChoiChannel, ChoiChannel]] = (),
                         maxiter=200):
    """Best Q objective found by alternating ascent over pairs of unital CP maps.

    Each map is parametrized by Kraus operators M_r renormalized as
    K_r = T^(-1/2) M_r with T = sum_r M_r M_r^dagger, so every iterate is
    unital and CP. With one map fixed the objective is linear in the
    other's Choi operator; each half step maximizes it with L-BFGS-B.

    Args:
        real_m: Bipartite real measurement.
        ideal_m: Bipartite ideal measurement with the same outcome count.
        seeds: Number of starts. The first is the identity pair when the
            dimensions allow it; the rest are random.
        rng_seed: Seed of the generator for random starts.
        rounds: Alternation rounds per start.
        initial: Extra starting pairs, typically constructed channels.
        maxiter: L-BFGS-B iteration cap per half step.

    Returns:
        float: A validated lower bound on Q.
    """
    _check_outcome_counts(real_m, ideal_m)
    if len(real_m.dims) != 2 or len(ideal_m.dims) != 2:
        raise DimensionError("Heuristic optimization handles bipartite measurements only")
    in1, in2 = real_m.dims
    out1, out2 = ideal_m.dims
    if max(in1, in2, out1, out2) > 4:
        raise DimensionError(f"Dimensions {real_m.dims} -> {ideal_m.dims} are too large")

    fs = np.stack([f.data.reshape(in1, in2, in1, in2) for f in real_m.elements])
    ps = np.stack([p.data.reshape(out1, out2, out1, out2) for p in ideal_m.elements])
    norm = out1 * out2

    def functional_1(t2):
        return np.einsum('cldm,nklim,nbdac->akbi', t2, fs, ps) / norm

    def functional_2(t1):
        return np.einsum('akbi,nklim,nbdac->cldm', t1, fs, ps) / norm

    def ascend(params, functional, in_dim, out_dim):
        def loss(x):
            return -float(np.real(np.sum(_choi_tensor(_unital_kraus(x, in_dim, out_dim)) * functional)))
        start = loss(params)
        res = minimize(loss, params, method='L-BFGS-B', options={'maxiter': maxiter})
        return res.x if res.fun < start else params

    rng = np.random.default_rng(rng_seed)
    n1 = 2 * (in1 * out1) ** 2
    n2 = 2 * (in2 * out2) ** 2
    starts = [(_params_from_choi(c1), _params_from_choi(c2)) for c1, c2 in initial]
    for k in range(seeds):
        if k == 0 and in1 == out1 and in2 == out2:
            starts.append((_params_from_choi(ChoiChannel.identity(in1)),
                           _params_from_choi(ChoiChannel.identity(in2))))
        else:
            starts.append((rng.normal(size=n1), rng.normal(size=n2)))

    best = q_trivial_lower(real_m, ideal_m)
    for index, (x1, x2) in enumerate(starts):
        for _ in range(rounds):
            t2 = _choi_tensor(_unital_kraus(x2, in2, out2))
            x1 = ascend(x1, functional_1(t2), in1, out1)
            t1 = _choi_tensor(_unital_kraus(x1, in1, out1))
            x2 = ascend(x2, functional_2(t1), in2, out2)

        ch1 = ChoiChannel.from_kraus(_unital_kraus(x1, in1, out1))
        ch2 = ChoiChannel.from_kraus(_unital_kraus(x2, in2, out2))
        if not (ch1.is_cp() and ch2.is_cp() and ch1.is_unital() and ch2.is_unital()):
            logger.warning(f"Start {index}: final maps failed validation; discarded")
            continue
        found = q_of_simulation(real_m, ideal_m, ch1, ch2)
        logger.debug(f"Start {index}: {found:.9f}")
        best = max(best, found)

    logger.info(f"Heuristic Q lower bound over {len(starts)} starts: {best:.9f}")
    return best
