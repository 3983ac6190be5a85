"""
Completely positive maps in Choi form, the swap isometry, and extraction channels.

Pairing convention used everywhere in the package:

    Lambda(X) = Tr_in[(I_out (x) X^T) C]

with the Choi operator C on H_out (x) H_in (output factor first). Under this
pairing Lambda is CP iff C >= 0 and unital iff Tr_in C = I_out. The identity
channel has C = sum_ij |i><j| (x) |i><j|.

Usage:
    from core.channels import swap_channel, choi_from_state, choi_tensor_apply

    gamma = swap_channel(x_obs, z_obs)
    lam = choi_from_state(sigma, 2.0)
"""
import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from core.exceptions import DimensionError, DomainError, NotHermitianError, RankDeficientError
from core.qlinalg import (
    INV_SQRT,
    SIGN,
    CMatrix,
    as_cmatrix,
    eig_hermitian,
    kron,
    kron_all,
    mat_func,
    min_eig,
    partial_trace,
    permute_factors,
)
from core.qobjects import Observable, marginal_bias

# Set up logging
logger = logging.getLogger(__name__)

CHOI_TOL = 1e-9
ZERO_TOL = 1e-10
FULL_RANK_TOL = 1e-8


@dataclass(frozen=True, eq=False)
class ChoiChannel:
    """Linear map between operator spaces stored as its Choi operator.

    Args:
        choi: Operator on H_out (x) H_in.
        in_dim: Dimension of the input space.
        out_dim: Dimension of the output space.
        trace_deficit: How far the generating map was from trace preserving
            before renormalization (0 for exact constructions).
    """
    choi: CMatrix
    in_dim: int
    out_dim: int
    trace_deficit: float = 0.0

    def __post_init__(self):
        size = self.in_dim * self.out_dim
        if self.choi.shape != (size, size):
            raise DimensionError(
                f"Choi operator shape {self.choi.shape} does not match {self.out_dim}x{self.in_dim}")
        object.__setattr__(self, 'choi', self.choi.with_dims((self.out_dim, self.in_dim)))

    @classmethod
    def identity(cls, d):
        omega = np.eye(d).reshape(-1)
        return cls(CMatrix(np.outer(omega, omega)), d, d)

    @classmethod
    def depolarizing(cls, in_dim, out_dim):
        """X -> Tr(X)/in_dim * I_out."""
        return cls(CMatrix(np.eye(in_dim * out_dim) / in_dim), in_dim, out_dim)

    @classmethod
    def from_kraus(cls, kraus: Sequence[np.ndarray], trace_deficit=0.0):
        """Choi operator of X -> sum_k K X K^dagger."""
        ks = [np.asarray(as_cmatrix(k).data if not isinstance(k, np.ndarray) else k, dtype=complex)
              for k in kraus]
        out_dim, in_dim = ks[0].shape
        omega = np.eye(in_dim).reshape(-1)
        choi = np.zeros((out_dim * in_dim, out_dim * in_dim), dtype=complex)
        for k in ks:
            vec = np.kron(k, np.eye(in_dim)) @ omega
            choi += np.outer(vec, vec.conj())
        return cls(CMatrix(choi), in_dim, out_dim, trace_deficit)

    def _as_tensor(self):
        return self.choi.data.reshape(self.out_dim, self.in_dim, self.out_dim, self.in_dim)

    def is_cp(self, tol=CHOI_TOL):
        if not self.choi.is_hermitian(tol):
            return False
        return min_eig(self.choi, tol=tol) >= -tol

    def unital_residual(self):
        reduced = partial_trace(self.choi, keep=[0]).data
        return float(np.max(np.abs(reduced - np.eye(self.out_dim))))

    def is_unital(self, tol=CHOI_TOL):
        return self.unital_residual() < tol

    def is_dual_trace_preserving(self, tol=CHOI_TOL):
        reduced = partial_trace(self.choi, keep=[1]).data
        return float(np.max(np.abs(reduced - np.eye(self.in_dim)))) < tol

    def __call__(self, x):
        return choi_apply(self, x)


def regularize(o, zero_tol=ZERO_TOL, factor=''):
    """Sign of a Hermitian operator with its zero eigenvalues counted as +1.

    Args:
        o: Hermitian CMatrix or Observable.
        zero_tol: Eigenvalues below this in absolute value become +1.
        factor: System label for the returned Observable.

    Returns:
        Observable: An operator squaring to the identity.
    """
    m = as_cmatrix(o)
    if not m.is_hermitian(1e-10):
        raise NotHermitianError("Only Hermitian operators can be regularized")
    label = factor or getattr(o, 'factor', '')
    return Observable(mat_func(m, SIGN, zero_tol=zero_tol), label)


def _pauli_pair(x, z):
    xm, zm = as_cmatrix(x), as_cmatrix(z)
    if xm.shape != zm.shape or not xm.is_square:
        raise DimensionError(f"X {xm.shape} and Z {zm.shape} must act on the same system")
    return xm.data, zm.data


def swap_gate(x, z):
    """S_{X,Z} on H' (x) H, with H' a fresh qubit written first.

    S(|0>|psi>) = |0>(1+Z)/2|psi> + |1>X(1-Z)/2|psi>
    S(|1>|psi>) = |0>X(1+Z)/2|psi> + |1>(1-Z)/2|psi>
    """
    xd, zd = _pauli_pair(x, z)
    d = xd.shape[0]
    p_plus = (np.eye(d) + zd) / 2
    p_minus = (np.eye(d) - zd) / 2
    gate = np.block([
        [p_plus, xd @ p_plus],
        [xd @ p_minus, p_minus],
    ])
    return CMatrix(gate, dims=(2, d))


def swap_isometry(x, z):
    """The map |psi> -> S(|0>|psi>) as a (2d x d) matrix."""
    gate = swap_gate(x, z)
    d = gate.rows // 2
    return CMatrix(gate.data[:, :d])


def swap_channel(x, z):
    """rho -> Tr_H[S (|0><0| (x) rho) S^dagger], output on a fresh qubit.

    When S(|0> . ) is not an isometry (X, Z not squaring to I) it is replaced
    by its polar part V (V^dagger V)^(-1/2) and the deficit is recorded.
    """
    v = swap_isometry(x, z).data
    d = v.shape[1]
    gram = CMatrix(v.conj().T @ v)
    gram_vals = eig_hermitian(gram).eigenvalues
    deficit = float(np.max(np.abs(gram_vals - 1.0)))
    if deficit > CHOI_TOL:
        logger.warning(f"Swap map is not isometric (deficit {deficit:.3e}); renormalizing")
        v = v @ mat_func(gram, INV_SQRT).data
    else:
        deficit = 0.0

    # Kraus operators K_k = (I_2 (x) <k|) V
    kraus = [v[[k, d + k], :] for k in range(d)]
    return ChoiChannel.from_kraus(kraus, trace_deficit=deficit)


def choi_apply(ch, x):
    xm = as_cmatrix(x)
    if xm.shape != (ch.in_dim, ch.in_dim):
        raise DimensionError(f"Input shape {xm.shape} does not match channel input {ch.in_dim}")
    out = np.einsum('akbi,ki->ab', ch._as_tensor(), xm.data)
    return CMatrix(out, dims=(ch.out_dim,))


def apply_on_factor(ch, x, factor):
    """Apply a channel to one tensor factor of x, identity on the others."""
    xm = as_cmatrix(x)
    if xm.dims is None:
        raise DimensionError("apply_on_factor needs a factorized operator")
    dims = xm.dims
    n = len(dims)
    if dims[factor] != ch.in_dim:
        raise DimensionError(f"Factor {factor} has dimension {dims[factor]}, channel expects {ch.in_dim}")

    order = [factor] + [i for i in range(n) if i != factor]
    moved = permute_factors(xm, order)
    rest = moved.rows // ch.in_dim
    x4 = moved.data.reshape(ch.in_dim, rest, ch.in_dim, rest)
    y4 = np.einsum('akbi,kris->arbs', ch._as_tensor(), x4)

    out_dims = (ch.out_dim,) + tuple(dims[i] for i in order[1:])
    size = ch.out_dim * rest
    result = CMatrix(y4.reshape(size, size), dims=out_dims)
    inverse = [0] * n
    for new_pos, old in enumerate(order):
        inverse[old] = new_pos
    return permute_factors(result, inverse)


def choi_tensor_apply(chs: Sequence[ChoiChannel], omega, perm=None):
    """(Lambda_1 (x) ... (x) Lambda_n)(Omega) through one joint Choi operator.

    Args:
        chs: Channels in the order of omega's factors.
        omega: Operator on in_1 (x) ... (x) in_n.
        perm: Optional factor permutation applied to omega first, for inputs
            whose factors are listed in another order.

    Returns:
        CMatrix on out_1 (x) ... (x) out_n.
    """
    om = as_cmatrix(omega)
    if perm is not None:
        om = permute_factors(om, perm)
    in_dims = tuple(ch.in_dim for ch in chs)
    out_dims = tuple(ch.out_dim for ch in chs)
    if om.shape != (int(np.prod(in_dims)),) * 2:
        raise DimensionError(f"Input shape {om.shape} does not match channel inputs {in_dims}")

    n = len(chs)
    joint = kron_all(*(ch.choi for ch in chs))
    # factors come as (out_1, in_1, out_2, in_2, ...); gather outputs first
    joint = permute_factors(joint, [2 * k for k in range(n)] + [2 * k + 1 for k in range(n)])
    big = ChoiChannel(joint.with_dims(None), int(np.prod(in_dims)), int(np.prod(out_dims)))
    return choi_apply(big, om).with_dims(out_dims)


def choi_from_state(sigma, scale, out_factor=0):
    """Channel whose Choi operator is (scale * sigma)^T.

    Args:
        sigma: Bipartite state; out_factor names the factor that becomes the
            channel output, the other is the input.
        scale: Positive prefactor, 2 for the self-testing constructions.
        out_factor: 0 or 1.

    Returns:
        ChoiChannel. For the real states of the exact scenarios the transpose
        is immaterial.
    """
    m = as_cmatrix(sigma)
    if m.dims is None or len(m.dims) != 2:
        raise DimensionError("choi_from_state needs a bipartite operator")
    if scale <= 0:
        raise DomainError(f"scale must be positive, got {scale}")
    if out_factor == 1:
        m = permute_factors(m, [1, 0])
    out_dim, in_dim = m.dims
    return ChoiChannel(CMatrix(scale * m.data.T), in_dim, out_dim)


def robust_choi_pair(sigma_ab1, sigma_b2c):
    """Unital Choi pair for the noisy swapping scenario.

    Args:
        sigma_ab1: State on A' (x) B1 (A' a qubit, written first).
        sigma_b2c: State on B2 (x) C' (C' a qubit, written second).

    Returns:
        (ChoiChannel, ChoiChannel): maps B1 -> A' and B2 -> C'.

    Raises:
        RankDeficientError: sigma_A' or sigma_C' is singular.
    """
    s1 = as_cmatrix(sigma_ab1)
    s2 = as_cmatrix(sigma_b2c)
    sigma_a = partial_trace(s1, keep=[0])
    sigma_b1 = partial_trace(s1, keep=[1])
    sigma_b2 = partial_trace(s2, keep=[0])
    sigma_c = partial_trace(s2, keep=[1])

    for name, marginal in (("sigma_A'", sigma_a), ("sigma_C'", sigma_c)):
        smallest = min_eig(marginal)
        if smallest <= FULL_RANK_TOL:
            raise RankDeficientError(f"{name} is rank deficient (min eigenvalue {smallest:.3e})")

    inv_half = kron(mat_func(sigma_a, INV_SQRT), CMatrix.identity(sigma_b1.rows))
    lam1 = inv_half @ s1 @ inv_half

    eta_c = marginal_bias(sigma_c)
    w = 2 / (1 + eta_c)
    lam2 = w * s2 + kron(sigma_b2, CMatrix.identity(2) - w * sigma_c)
    logger.debug(f"Robust Choi pair built with eta_C'={eta_c:.6g}")

    return (
        choi_from_state(lam1.with_dims(s1.dims), 1.0, out_factor=0),
        choi_from_state(lam2.with_dims(s2.dims), 1.0, out_factor=1),
    )
