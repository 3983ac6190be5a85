"""
States, observables, measurements and Bell operators of the self-testing scenarios.

Three scenario families are supported:
    bsm     Bell-state measurement, CHSH operators, ideal settings
            A0 = Z, A1 = X, C0,1 = (Z +- X)/sqrt(2).
    tilted  Tilted Bell basis at angle theta, tilted-CHSH operators.
    ghz     Eight-outcome GHZ measurement, Mermin operators.

Usage:
    from core.qobjects import ScenarioKind, bell_state, ideal_observables, chsh_operator

    obs = ideal_observables(ScenarioKind.BSM)
    w0 = chsh_operator(0, obs)
"""
import logging
from dataclasses import dataclass
from enum import Enum
from typing import Dict, Optional, Tuple

import numpy as np
from scipy.linalg import expm

from core.exceptions import (
    DimensionError,
    DomainError,
    InvalidMeasurementError,
    InvalidStateError,
)
from core.qlinalg import (
    CMatrix,
    as_cmatrix,
    eig_hermitian,
    kron,
    kron_all,
    min_eig,
    partial_trace,
)

# Set up logging
logger = logging.getLogger(__name__)

PSD_TOL = 1e-10
TRACE_TOL = 1e-10
COMPLETENESS_TOL = 1e-9

I2 = np.eye(2, dtype=complex)
SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)

TSIRELSON = 2 * np.sqrt(2)

# (party, sign) labels of the GHZ basis, in report order
GHZ_LABELS = (
    ('0', '+'), ('0', '-'),
    ('A', '+'), ('A', '-'),
    ('B', '+'), ('B', '-'),
    ('C', '+'), ('C', '-'),
)

# Sign of the single-party term of the tilted CHSH operator for each outcome
TILT_SIGNS = (1, -1, 1, -1)


class ScenarioKind(str, Enum):
    BSM = 'bsm'
    TILTED = 'tilted'
    GHZ = 'ghz'


def pauli(name):
    return CMatrix({'I': I2, 'X': SIGMA_X, 'Y': SIGMA_Y, 'Z': SIGMA_Z}[name], dims=(2,))


@dataclass(frozen=True, eq=False)
class DensityOperator:
    """Positive semidefinite, unit-trace operator with a tensor factorization."""
    mat: CMatrix

    def __post_init__(self):
        mat = self.mat
        if mat.dims is None:
            mat = mat.with_dims((mat.rows,))
            object.__setattr__(self, 'mat', mat)
        if not mat.is_hermitian(PSD_TOL):
            raise InvalidStateError("Density operator is not Hermitian")
        trace = mat.trace().real
        if abs(trace - 1.0) > TRACE_TOL:
            raise InvalidStateError(f"Density operator has trace {trace:.12f}")
        smallest = min_eig(mat)
        if smallest < -PSD_TOL:
            raise InvalidStateError(f"Density operator has eigenvalue {smallest:.3e}")

    @classmethod
    def from_ket(cls, psi, dims):
        vec = np.asarray(psi, dtype=complex).reshape(-1)
        norm = np.linalg.norm(vec)
        if norm == 0:
            raise InvalidStateError("Zero vector has no density operator")
        return cls(CMatrix.projector(vec / norm, dims=dims))

    @property
    def dims(self):
        return self.mat.dims

    def marginal(self, keep):
        return DensityOperator(partial_trace(self.mat, keep))

    def expect(self, op):
        """Expectation value Tr(rho O) for a Hermitian operator O."""
        o = as_cmatrix(op)
        if o.shape != self.mat.shape:
            raise DimensionError(f"Operator shape {o.shape} does not match state {self.mat.shape}")
        return float(np.einsum('ij,ji->', self.mat.data, o.data).real)


@dataclass(frozen=True, eq=False)
class Observable:
    """Hermitian operator on one party's system.

    Args:
        mat: The operator.
        factor: Name of the system it acts on, e.g. 'A' or 'C'.
    """
    mat: CMatrix
    factor: str = ''

    def __post_init__(self):
        if not self.mat.is_hermitian(PSD_TOL):
            raise DomainError(f"Observable on {self.factor or 'system'} is not Hermitian")

    @property
    def dim(self):
        return self.mat.rows

    def squares_to_identity(self, tol=1e-9):
        sq = self.mat.data @ self.mat.data
        return float(np.max(np.abs(sq - np.eye(self.dim)))) < tol

    def conjugated(self, u):
        """U O U^dagger for a unitary on the same system."""
        u = as_cmatrix(u)
        return Observable(CMatrix(u.data @ self.mat.data @ u.data.conj().T, dims=self.mat.dims),
                          self.factor)

    def __neg__(self):
        return Observable(-self.mat, self.factor)


@dataclass(frozen=True, eq=False)
class Measurement:
    """Ordered POVM on a declared factorization."""
    elements: Tuple[CMatrix, ...]
    dims: Tuple[int, ...]
    labels: Tuple = ()

    def __post_init__(self):
        elements = tuple(as_cmatrix(e) for e in self.elements)
        dims = tuple(int(d) for d in self.dims)
        labels = tuple(self.labels) if self.labels else tuple(range(len(elements)))
        if not elements:
            raise InvalidMeasurementError("Measurement has no elements")
        if len(labels) != len(elements):
            raise InvalidMeasurementError(f"{len(labels)} labels for {len(elements)} elements")

        d = int(np.prod(dims))
        elements = tuple(e.with_dims(dims) for e in elements)
        total = np.zeros((d, d), dtype=complex)
        for label, e in zip(labels, elements):
            if e.shape != (d, d):
                raise DimensionError(f"Element {label} has shape {e.shape}, expected {(d, d)}")
            if not e.is_hermitian(PSD_TOL) or min_eig(e) < -PSD_TOL:
                raise InvalidMeasurementError(f"Element {label} is not positive semidefinite")
            total += e.data
        residual = float(np.max(np.abs(total - np.eye(d))))
        if residual > COMPLETENESS_TOL:
            raise InvalidMeasurementError(f"Elements sum to identity only within {residual:.3e}")

        object.__setattr__(self, 'elements', elements)
        object.__setattr__(self, 'dims', dims)
        object.__setattr__(self, 'labels', labels)

    def __len__(self):
        return len(self.elements)

    @property
    def dim(self):
        return int(np.prod(self.dims))

    def is_projective(self, tol=1e-9):
        for j, ej in enumerate(self.elements):
            for k, ek in enumerate(self.elements):
                target = ej.data if j == k else 0.0
                if np.max(np.abs(ej.data @ ek.data - target)) > tol:
                    return False
        return True

    def relabeled(self, perm):
        """Measurement whose outcome j is outcome perm[j] of this one."""
        return Measurement(tuple(self.elements[p] for p in perm), self.dims, self.labels)


def bell_ket(b):
    s = 1 / np.sqrt(2)
    kets = (
        [s, 0, 0, s],
        [s, 0, 0, -s],
        [0, s, s, 0],
        [0, s, -s, 0],
    )
    if b not in range(4):
        raise DomainError(f"Bell index must be 0..3, got {b}")
    return np.array(kets[b], dtype=complex)


def bell_state(b):
    """Projector onto |Phi^b>: phi+, phi-, psi+, psi- for b = 0..3."""
    return DensityOperator.from_ket(bell_ket(b), (2, 2))


def _check_theta(theta):
    if not 0 < theta <= np.pi / 4 + 1e-15:
        raise DomainError(f"Tilt angle must lie in (0, pi/4], got {theta}")


def tilted_bell_ket(theta, b):
    _check_theta(theta)
    c, s = np.cos(theta), np.sin(theta)
    kets = (
        [c, 0, 0, s],
        [s, 0, 0, -c],
        [0, c, s, 0],
        [0, s, -c, 0],
    )
    if b not in range(4):
        raise DomainError(f"Bell index must be 0..3, got {b}")
    return np.array(kets[b], dtype=complex)


def tilted_bell_state(theta, b):
    return DensityOperator.from_ket(tilted_bell_ket(theta, b), (2, 2))


def ghz_ket(label):
    party, sign = label
    base = {'0': (0b000, 0b111), 'A': (0b011, 0b100), 'B': (0b101, 0b010), 'C': (0b110, 0b001)}
    if party not in base or sign not in ('+', '-'):
        raise DomainError(f"Unknown GHZ label {label}")
    first, second = base[party]
    vec = np.zeros(8, dtype=complex)
    vec[first] = 1 / np.sqrt(2)
    vec[second] = (1 if sign == '+' else -1) / np.sqrt(2)
    return vec


def ghz_state(label):
    return DensityOperator.from_ket(ghz_ket(label), (2, 2, 2))


def tilt_weight_from_theta(theta):
    """Weight of the single-party term that makes the tilted basis self-testable.

    theta = pi/4 maps to 0: the plain CHSH scenario applies there.
    """
    _check_theta(theta)
    if np.isclose(theta, np.pi / 4, atol=1e-12):
        return 0.0
    return float(2 / np.sqrt(1 + 2 * np.tan(2 * theta) ** 2))


def ideal_observables(kind, theta: Optional[float] = None) -> Dict[str, Observable]:
    """Ideal measurement settings of each outer party, keyed like 'A0' or 'C1'.

    The GHZ parties measure X and Y so that the Mermin operator reaches 4 on
    the computational GHZ basis.
    """
    kind = ScenarioKind(kind)
    z, x, y = SIGMA_Z, SIGMA_X, SIGMA_Y

    if kind is ScenarioKind.GHZ:
        obs = {}
        for party in 'ABC':
            obs[f'{party}0'] = Observable(CMatrix(x, dims=(2,)), party)
            obs[f'{party}1'] = Observable(CMatrix(y, dims=(2,)), party)
        return obs

    if kind is ScenarioKind.BSM:
        mu = np.pi / 4
    else:
        if theta is None:
            raise DomainError("Tilted scenario needs theta")
        _check_theta(theta)
        mu = float(np.arctan(np.sin(2 * theta)))

    return {
        'A0': Observable(CMatrix(z, dims=(2,)), 'A'),
        'A1': Observable(CMatrix(x, dims=(2,)), 'A'),
        'C0': Observable(CMatrix(np.cos(mu) * z + np.sin(mu) * x, dims=(2,)), 'C'),
        'C1': Observable(CMatrix(np.cos(mu) * z - np.sin(mu) * x, dims=(2,)), 'C'),
    }


def _op(o):
    return as_cmatrix(o)


def chsh_operator(b, obs):
    """CHSH_b Bell operator on A (x) C.

    Args:
        b: Outcome index 0..3.
        obs: Mapping with 'A0', 'A1', 'C0', 'C1'.
    """
    a0, a1, c0, c1 = (_op(obs[k]) for k in ('A0', 'A1', 'C0', 'C1'))
    if b in (0, 3):
        w = kron(a0, c0) + kron(a0, c1) + kron(a1, c0) - kron(a1, c1)
    elif b in (1, 2):
        w = kron(a0, c0) + kron(a0, c1) - kron(a1, c0) + kron(a1, c1)
    else:
        raise DomainError(f"CHSH index must be 0..3, got {b}")
    return -w if b >= 2 else w


def tilted_chsh_operator(b, tilt_weight, obs):
    if b not in (0, 1, 2, 3):
        raise DomainError(f"CHSH index must be 0..3, got {b}")
    if not 0 < tilt_weight <= 2:
        raise DomainError(f"tilt_weight must lie in (0, 2], got {tilt_weight}")
    a0 = _op(obs['A0'])
    c_dim = _op(obs['C0']).rows
    bias = kron(a0, CMatrix.identity(c_dim, dims=_op(obs['C0']).factor_dims))
    return TILT_SIGNS[b] * tilt_weight * bias + chsh_operator(b, obs)


def mermin_operator(r, obs):
    """Mermin operator for GHZ outcome r = (P, sign) on A (x) B (x) C."""
    party, sign = r
    if party not in ('0', 'A', 'B', 'C') or sign not in ('+', '-'):
        raise DomainError(f"Unknown Mermin label {r}")

    def setting(p, x):
        o = _op(obs[f'{p}{x}'])
        return -o if (x == 1 and p == party) else o

    terms = (((0, 0, 0), 1), ((0, 1, 1), -1), ((1, 0, 1), -1), ((1, 1, 0), -1))
    m = None
    for (xa, xb, xc), coeff in terms:
        term = coeff * kron_all(setting('A', xa), setting('B', xb), setting('C', xc))
        m = term if m is None else m + term
    return m if sign == '+' else -m


def measurement_from_kets(kets, dims, labels=()):
    return Measurement(tuple(CMatrix.projector(k, dims=dims) for k in kets), dims, labels)


def measurement_basis(kind, theta: Optional[float] = None):
    kind = ScenarioKind(kind)
    if kind is ScenarioKind.BSM:
        return measurement_from_kets([bell_ket(b) for b in range(4)], (2, 2), range(4))
    if kind is ScenarioKind.TILTED:
        if theta is None:
            raise DomainError("Tilted basis needs theta")
        return measurement_from_kets([tilted_bell_ket(theta, b) for b in range(4)], (2, 2), range(4))
    return measurement_from_kets([ghz_ket(r) for r in GHZ_LABELS], (2, 2, 2), GHZ_LABELS)


def product_basis():
    """Computational basis |00>, |01>, |10>, |11> of two qubits."""
    return measurement_from_kets(list(np.eye(4)), (2, 2), ('00', '01', '10', '11'))


def mixed_basis():
    """(|00>, |11>, Phi^2, Phi^3): two product and two entangled elements."""
    e = np.eye(4)
    return measurement_from_kets([e[0], e[3], bell_ket(2), bell_ket(3)], (2, 2), range(4))


def werner_source(v):
    if not 0 <= v <= 1:
        raise DomainError(f"Visibility must lie in [0, 1], got {v}")
    mat = v * bell_state(0).mat + (1 - v) * CMatrix.identity(4, dims=(2, 2)) / 4
    return DensityOperator(mat)


def noisy_measurement(m, p):
    """Mix every element with white noise: (1-p) E + p Tr(E) I/d."""
    if not 0 <= p <= 1:
        raise DomainError(f"Noise level must lie in [0, 1], got {p}")
    d = m.dim
    identity = CMatrix.identity(d, dims=m.dims)
    elements = tuple((1 - p) * e + (p * e.trace().real / d) * identity for e in m.elements)
    return Measurement(elements, m.dims, m.labels)


def random_povm(n, d, rng: np.random.Generator, dims=None):
    """n-outcome POVM on dimension d: G_j rescaled by S^(-1/2) with S = sum G_j."""
    gs = []
    for _ in range(n):
        g = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
        gs.append(g @ g.conj().T)
    total = sum(gs)
    vals, vecs = np.linalg.eigh(total)
    s_inv_half = (vecs / np.sqrt(vals)) @ vecs.conj().T
    elements = []
    for g in gs:
        e = s_inv_half @ g @ s_inv_half
        elements.append(CMatrix((e + e.conj().T) / 2))
    return Measurement(tuple(elements), dims if dims is not None else (d,))


def schmidt_coefficients(psi, dims):
    """Schmidt coefficients of a bipartite pure state, descending."""
    vec = np.asarray(psi, dtype=complex).reshape(-1)
    d1, d2 = dims
    if vec.size != d1 * d2:
        raise DimensionError(f"Vector of length {vec.size} does not match dims {dims}")
    if abs(np.linalg.norm(vec) - 1.0) > 1e-9:
        raise DomainError(f"State vector has norm {np.linalg.norm(vec):.12f}")
    return np.linalg.svd(vec.reshape(d1, d2), compute_uv=False)


def marginal_bias(rho):
    """eta = lambda_max - lambda_min of a qubit operator, spectrum {(1 +- eta)/2}."""
    m = as_cmatrix(rho)
    if m.rows != 2:
        raise DimensionError(f"Marginal bias is defined on a qubit, got dimension {m.rows}")
    vals = eig_hermitian(m).eigenvalues
    return float(vals[0] - vals[-1])


def rotation_y(angle):
    """exp(-i angle Y / 2): rotates the X-Z plane of the Bloch sphere by angle."""
    return CMatrix(expm(-0.5j * angle * SIGMA_Y), dims=(2,))
