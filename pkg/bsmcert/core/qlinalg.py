"""
Dense complex linear algebra over small tensor-product Hilbert spaces.

Every operator in the package is a CMatrix: an immutable complex matrix with
an optional tensor factorization (dims). Total dimensions stay at or below 64,
so everything is dense numpy.

Usage:
    from core.qlinalg import CMatrix, kron, partial_trace

    rho = kron(CMatrix(a, dims=(2,)), CMatrix(b, dims=(2,)))
    rho_a = partial_trace(rho, keep=[0])
"""
import logging
from dataclasses import dataclass
from functools import reduce
from math import prod
from typing import Callable, Optional, Tuple, Union

import numpy as np
from scipy.stats import unitary_group

from core.exceptions import DimensionError, DomainError, NotHermitianError

# Set up logging
logger = logging.getLogger(__name__)

ZERO_TOL = 1e-10
HERMITIAN_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class CMatrix:
    """Immutable complex matrix with an optional tensor factorization.

    Args:
        data: Anything numpy can turn into a 2-d complex array. It is copied
            and frozen.
        dims: Factor dimensions of the row space; their product must equal
            the number of rows. For square matrices the same factorization
            is used for the columns.
    """
    data: np.ndarray
    dims: Optional[Tuple[int, ...]] = None

    # numpy scalars defer to __rmul__ instead of broadcasting over us
    __array_ufunc__ = None

    def __post_init__(self):
        arr = np.array(self.data, dtype=complex)
        if arr.ndim != 2:
            raise DimensionError(f"CMatrix needs a 2-d array, got shape {arr.shape}")
        arr.setflags(write=False)
        object.__setattr__(self, 'data', arr)

        if self.dims is not None:
            dims = tuple(int(d) for d in self.dims)
            if any(d < 1 for d in dims) or prod(dims) != arr.shape[0]:
                raise DimensionError(f"dims {dims} do not multiply to {arr.shape[0]} rows")
            object.__setattr__(self, 'dims', dims)

    @classmethod
    def identity(cls, d, dims=None):
        return cls(np.eye(d), dims=dims if dims is not None else (d,))

    @classmethod
    def zeros(cls, d, dims=None):
        return cls(np.zeros((d, d)), dims=dims if dims is not None else (d,))

    @classmethod
    def projector(cls, psi, dims=None):
        """|psi><psi| for a state vector psi (not normalized here)."""
        vec = np.asarray(psi, dtype=complex).reshape(-1)
        return cls(np.outer(vec, vec.conj()), dims=dims if dims is not None else (vec.size,))

    @property
    def shape(self):
        return self.data.shape

    @property
    def rows(self):
        return self.data.shape[0]

    @property
    def cols(self):
        return self.data.shape[1]

    @property
    def is_square(self):
        return self.rows == self.cols

    @property
    def factor_dims(self):
        return self.dims if self.dims is not None else (self.rows,)

    def is_hermitian(self, tol=HERMITIAN_TOL):
        if not self.is_square:
            return False
        return float(np.max(np.abs(self.data - self.data.conj().T), initial=0.0)) < tol

    def dag(self):
        return CMatrix(self.data.conj().T, dims=self.dims if self.is_square else None)

    @property
    def T(self):
        return CMatrix(self.data.T, dims=self.dims if self.is_square else None)

    def trace(self):
        return complex(np.trace(self.data))

    def with_dims(self, dims):
        return CMatrix(self.data, dims=dims)

    def _combined_dims(self, other):
        if self.dims is None:
            return other.dims
        if other.dims is None or other.dims == self.dims:
            return self.dims
        raise DimensionError(f"Factorizations {self.dims} and {other.dims} disagree")

    def __add__(self, other):
        if not isinstance(other, CMatrix):
            return NotImplemented
        if self.shape != other.shape:
            raise DimensionError(f"Cannot add shapes {self.shape} and {other.shape}")
        return CMatrix(self.data + other.data, dims=self._combined_dims(other))

    def __sub__(self, other):
        if not isinstance(other, CMatrix):
            return NotImplemented
        if self.shape != other.shape:
            raise DimensionError(f"Cannot subtract shapes {self.shape} and {other.shape}")
        return CMatrix(self.data - other.data, dims=self._combined_dims(other))

    def __neg__(self):
        return CMatrix(-self.data, dims=self.dims)

    def __mul__(self, scalar):
        if isinstance(scalar, CMatrix):
            return NotImplemented
        return CMatrix(self.data * scalar, dims=self.dims)

    __rmul__ = __mul__

    def __truediv__(self, scalar):
        return CMatrix(self.data / scalar, dims=self.dims)

    def __matmul__(self, other):
        if not isinstance(other, CMatrix):
            return NotImplemented
        if self.cols != other.rows:
            raise DimensionError(f"Cannot multiply shapes {self.shape} and {other.shape}")
        dims = self._combined_dims(other) if self.is_square and other.is_square else None
        return CMatrix(self.data @ other.data, dims=dims)

    def __repr__(self):
        return f"CMatrix(shape={self.shape}, dims={self.dims})"


@dataclass(frozen=True, eq=False)
class Spectrum:
    """Eigenvalues sorted descending and matching unitary eigenvector columns."""
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    def reconstruct(self):
        v = self.eigenvectors
        return (v * self.eigenvalues) @ v.conj().T


@dataclass(frozen=True)
class MatrixFunction:
    """A real function applied to eigenvalues, with a policy for near-zero ones.

    singular is the value assigned to eigenvalues with |lambda| < zero_tol;
    None means func itself is evaluated there.
    """
    name: str
    func: Callable[[np.ndarray], np.ndarray]
    singular: Optional[float] = None


SQRT = MatrixFunction('sqrt', np.sqrt, singular=0.0)
INV_SQRT = MatrixFunction('inv_sqrt', lambda x: 1.0 / np.sqrt(x), singular=0.0)
PSEUDO_INVERSE = MatrixFunction('pinv', lambda x: 1.0 / x, singular=0.0)
SIGN = MatrixFunction('sign', np.sign, singular=1.0)


def frobenius_distance(a, b):
    if a.shape != b.shape:
        raise DimensionError(f"Cannot compare shapes {a.shape} and {b.shape}")
    return float(np.linalg.norm(a.data - b.data))


def kron(a, b):
    """Kronecker product a (x) b with concatenated factor dimensions."""
    dims = a.factor_dims + b.factor_dims if a.is_square and b.is_square else None
    return CMatrix(np.kron(a.data, b.data), dims=dims)


def kron_all(*ms):
    if not ms:
        raise DimensionError("kron_all needs at least one operand")
    return reduce(kron, ms)


def symmetrize(m):
    """Hermitian part (M + M^dagger)/2. The only sanctioned way to drop drift."""
    if not m.is_square:
        raise DimensionError(f"Cannot symmetrize a {m.shape} matrix")
    return CMatrix((m.data + m.data.conj().T) / 2, dims=m.dims)


def _require_dims(m):
    if m.dims is None:
        raise DimensionError("Operation needs a tensor factorization but dims is missing")
    if not m.is_square:
        raise DimensionError(f"Operation needs a square operator, got {m.shape}")
    return m.dims


def partial_trace(m, keep):
    """Trace out every factor not listed in keep.

    Args:
        m: Square CMatrix with dims.
        keep: Factor indices to keep, in any order; the result lists them
            in ascending order. An empty set returns the 1x1 total trace.

    Returns:
        CMatrix: The reduced operator on the kept factors.
    """
    dims = _require_dims(m)
    n = len(dims)
    keep = sorted(set(int(k) for k in keep))
    if any(k < 0 or k >= n for k in keep):
        raise DimensionError(f"keep={keep} is out of range for {n} factors")

    t = m.data.reshape(dims + dims)
    current = n
    for i in sorted((i for i in range(n) if i not in keep), reverse=True):
        t = np.trace(t, axis1=i, axis2=i + current)
        current -= 1

    kept = tuple(dims[k] for k in keep)
    d = prod(kept)
    return CMatrix(np.asarray(t).reshape(d, d), dims=kept)


def partial_transpose(m, factors):
    dims = _require_dims(m)
    n = len(dims)
    axes = list(range(2 * n))
    for f in factors:
        if f < 0 or f >= n:
            raise DimensionError(f"Factor {f} is out of range for {n} factors")
        axes[f], axes[f + n] = axes[f + n], axes[f]
    d = m.rows
    return CMatrix(m.data.reshape(dims + dims).transpose(axes).reshape(d, d), dims=dims)


def permute_factors(m, perm):
    """Reorder tensor factors: factor i of the result is factor perm[i] of m."""
    dims = _require_dims(m)
    n = len(dims)
    perm = [int(p) for p in perm]
    if sorted(perm) != list(range(n)):
        raise DimensionError(f"{perm} is not a permutation of {n} factors")

    axes = perm + [p + n for p in perm]
    d = m.rows
    data = m.data.reshape(dims + dims).transpose(axes).reshape(d, d)
    return CMatrix(data, dims=tuple(dims[p] for p in perm))


def _check_hermitian(m, tol):
    if not m.is_square:
        raise DimensionError(f"Expected a square operator, got {m.shape}")
    deviation = float(np.max(np.abs(m.data - m.data.conj().T), initial=0.0))
    if deviation >= tol:
        raise NotHermitianError(f"Operator deviates from Hermitian by {deviation:.3e}")


def eig_hermitian(m, tol=HERMITIAN_TOL):
    _check_hermitian(m, tol)
    vals, vecs = np.linalg.eigh(m.data)
    return Spectrum(eigenvalues=vals[::-1].copy(), eigenvectors=vecs[:, ::-1].copy())


def mat_func(m, f: Union[MatrixFunction, Callable], zero_tol=ZERO_TOL):
    """Apply a real function to the spectrum of a Hermitian operator.

    Args:
        m: Hermitian CMatrix.
        f: A MatrixFunction (carrying its singular-eigenvalue policy) or a
            plain callable, which is then evaluated on every eigenvalue.
        zero_tol: Eigenvalues with absolute value below this use the policy.

    Returns:
        CMatrix: V f(Lambda) V^dagger with the factorization of m.

    Raises:
        DomainError: f is undefined (non-finite) on a non-tolerated eigenvalue.
    """
    if not isinstance(f, MatrixFunction):
        f = MatrixFunction(getattr(f, '__name__', 'f'), f)

    spectrum = eig_hermitian(m)
    vals = spectrum.eigenvalues
    out = np.zeros(vals.shape, dtype=float)
    if f.singular is not None:
        small = np.abs(vals) < zero_tol
        out[small] = f.singular
    else:
        small = np.zeros(vals.shape, dtype=bool)

    with np.errstate(all='ignore'):
        out[~small] = np.real(f.func(vals[~small]))

    if not np.all(np.isfinite(out)):
        raise DomainError(f"{f.name} is undefined on eigenvalues {vals[~np.isfinite(out)]}")

    v = spectrum.eigenvectors
    return CMatrix((v * out) @ v.conj().T, dims=m.dims)


def hs_inner(a, b):
    """Hilbert-Schmidt pairing Tr(a b) of two Hermitian operators."""
    if a.shape != b.shape:
        raise DimensionError(f"Cannot pair shapes {a.shape} and {b.shape}")
    value = np.einsum('ij,ji->', a.data, b.data)
    if abs(value.imag) > 1e-10 * max(1.0, abs(value.real)):
        raise NotHermitianError(f"Pairing has imaginary part {value.imag:.3e}")
    return float(value.real)


def min_eig(m, tol=HERMITIAN_TOL):
    _check_hermitian(m, tol)
    return float(np.linalg.eigvalsh(m.data)[0])


def is_rank_one_projector(p, tol=1e-9):
    if not p.is_hermitian(tol):
        return False
    return (np.max(np.abs(p.data @ p.data - p.data)) < tol
            and abs(p.trace() - 1.0) < tol)


def fidelity_with_pure(rho, proj):
    """Fidelity of a state with a pure target, which is their overlap.

    Args:
        rho: DensityOperator or CMatrix.
        proj: Rank-1 projector onto the target.

    Returns:
        float: Overlap clipped to [0, 1].
    """
    rho_m = getattr(rho, 'mat', rho)
    proj_m = getattr(proj, 'mat', proj)
    if not is_rank_one_projector(proj_m):
        raise DomainError("Target is not a rank-1 projector")
    return float(np.clip(hs_inner(rho_m, proj_m), 0.0, 1.0))


def random_unitary(d, rng: np.random.Generator):
    """Haar-random unitary drawn from the given generator."""
    return CMatrix(unitary_group.rvs(d, random_state=rng), dims=(d,))


def random_hermitian(d, rng: np.random.Generator, dims=None):
    g = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    return CMatrix((g + g.conj().T) / 2, dims=dims if dims is not None else (d,))


def random_density_matrix(d, rng: np.random.Generator, rank=None, dims=None):
    """Random density matrix from a Ginibre matrix of the given rank."""
    r = d if rank is None else rank
    g = rng.normal(size=(d, r)) + 1j * rng.normal(size=(d, r))
    rho = g @ g.conj().T
    rho = (rho + rho.conj().T) / 2
    return CMatrix(rho / np.trace(rho).real, dims=dims if dims is not None else (d,))


def as_cmatrix(x) -> CMatrix:
    """Accept a CMatrix or any wrapper exposing one as .mat."""
    if isinstance(x, CMatrix):
        return x
    inner = getattr(x, 'mat', None)
    if isinstance(inner, CMatrix):
        return inner
    raise TypeError(f"Expected a CMatrix or an object with .mat, got {type(x).__name__}")

