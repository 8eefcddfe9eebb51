"""Dense Hermitian linear algebra used by the exact simulators.

Everything is stored as dense complex ``numpy`` arrays. :class:`HermitianOperator`
caches its eigendecomposition so that repeated matrix functions of the same
operator (``exp(-beta H)``, ``sqrt(rho)``, ``exp(-i H dt)``) cost one ``eigh``.
Entropies are in nats.
"""

from __future__ import annotations

from functools import cached_property
from typing import Callable, Union

import numpy as np

HERMITIAN_ATOL = 1e-12
REJECT_ATOL = 1e-10
EIGEN_CLAMP = 1e-12
MAX_DIM = 4096


class OperatorError(ValueError):
    """Raised when an input violates a linear-algebra precondition."""


class HermitianOperator:
    """Dense Hermitian matrix with a lazily computed eigendecomposition.

    Args:
        entries: square complex (or real) matrix.
        check: reject inputs whose Hermiticity residual exceeds ``1e-10``.
            Inputs within that residual are symmetrized.
    """

    __slots__ = ("entries", "__dict__")

    def __init__(self, entries, check: bool = True):
        a = np.array(entries, dtype=complex)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise OperatorError(f"expected a square matrix, got shape {a.shape}")
        if a.shape[0] > MAX_DIM:
            raise OperatorError(f"dimension {a.shape[0]} exceeds the maximum {MAX_DIM}")
        if check:
            resid = np.max(np.abs(a - a.conj().T)) if a.size else 0.0
            if resid > REJECT_ATOL:
                raise OperatorError(f"matrix is not Hermitian (residual {resid:.3e})")
        a = 0.5 * (a + a.conj().T)
        a.setflags(write=False)
        self.entries = a

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    @cached_property
    def eigh(self) -> tuple[np.ndarray, np.ndarray]:
        w, v = np.linalg.eigh(self.entries)
        return w, v

    @property
    def eigenvalues(self) -> np.ndarray:
        return self.eigh[0]

    def __matmul__(self, other):
        return self.entries @ as_matrix(other)

    def __add__(self, other):
        return HermitianOperator(self.entries + as_matrix(other), check=False)

    def __sub__(self, other):
        return HermitianOperator(self.entries - as_matrix(other), check=False)

    def __mul__(self, scalar):
        if np.iscomplexobj(scalar) and np.imag(scalar) != 0:
            raise OperatorError("scaling by a complex number breaks Hermiticity")
        return HermitianOperator(self.entries * float(np.real(scalar)), check=False)

    __rmul__ = __mul__

    def __repr__(self):
        return f"HermitianOperator(dim={self.dim})"


class DensityMatrix(HermitianOperator):
    """Positive semidefinite, unit-trace :class:`HermitianOperator`."""

    def __init__(self, entries, check: bool = True):
        super().__init__(entries, check=check)
        if check:
            tr = np.trace(self.entries).real
            if abs(tr - 1.0) > 1e-10:
                raise OperatorError(f"density matrix trace is {tr!r}, expected 1")
            lo = self.eigenvalues.min()
            if lo < -EIGEN_CLAMP:
                raise OperatorError(f"density matrix has negative eigenvalue {lo:.3e}")

    def __repr__(self):
        return f"DensityMatrix(dim={self.dim})"


Operator = Union[HermitianOperator, np.ndarray]


def as_matrix(a) -> np.ndarray:
    if isinstance(a, HermitianOperator):
        return a.entries
    return np.asarray(a)


def as_hermitian(a) -> HermitianOperator:
    return a if isinstance(a, HermitianOperator) else HermitianOperator(a)


def xlogx(x):
    """Elementwise ``x ln x`` with the ``0 ln 0 = 0`` convention."""
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    pos = x > 0
    out[pos] = x[pos] * np.log(x[pos])
    return out


def matrix_function(a: Operator, f: Callable[[np.ndarray], np.ndarray]) -> HermitianOperator:
    """Apply a real scalar function through the spectral decomposition.

    ``f`` receives the real eigenvalue array and must return values of the
    same shape. Complex-valued ``f`` (e.g. ``exp(-i x t)``) is allowed, but
    then use :func:`unitary_function` since the result is not Hermitian.
    """
    op = as_hermitian(a)
    w, v = op.eigh
    fw = np.asarray(f(w))
    if np.iscomplexobj(fw) and np.max(np.abs(fw.imag), initial=0.0) > 0:
        raise OperatorError("matrix_function needs a real-valued f; use unitary_function")
    return HermitianOperator((v * fw.real) @ v.conj().T, check=False)


def unitary_function(a: Operator, f: Callable[[np.ndarray], np.ndarray]) -> np.ndarray:
    """Like :func:`matrix_function` but for complex ``f``; returns a plain array."""
    w, v = as_hermitian(a).eigh
    return (v * f(w)) @ v.conj().T


def propagator(h: Operator, dt: float) -> np.ndarray:
    """``exp(-i H dt)``."""
    return unitary_function(h, lambda w: np.exp(-1j * w * dt))


def _clamped_spectrum(w: np.ndarray) -> np.ndarray:
    lo = w.min(initial=0.0)
    if lo < -EIGEN_CLAMP:
        raise OperatorError(f"state has negative eigenvalue {lo:.3e}")
    return np.clip(w, 0.0, None)


def spectrum_entropy(w: np.ndarray) -> float:
    """Shannon/von Neumann entropy of a (normalized) eigenvalue list."""
    return float(-xlogx(_clamped_spectrum(np.asarray(w, dtype=float))).sum())


def von_neumann_entropy(rho: Operator) -> float:
    """``-Tr rho ln rho`` in nats; eigenvalues in ``[-1e-12, 0)`` count as 0."""
    return spectrum_entropy(as_hermitian(rho).eigenvalues)


def kron(*ops: Operator, max_dim: int = MAX_DIM) -> np.ndarray:
    """Tensor product of any number of operators."""
    dim = int(np.prod([as_matrix(o).shape[0] for o in ops]))
    if dim > max_dim:
        raise OperatorError(f"tensor product dimension {dim} exceeds the maximum {max_dim}")
    out = np.ones((1, 1), dtype=complex)
    for o in ops:
        out = np.kron(out, as_matrix(o))
    return out


def trace_product(a: Operator, b: Operator) -> complex:
    """``Tr[A B]``; uses the eigenbasis of a diagonalized operand if available."""
    for x, y in ((a, b), (b, a)):
        if isinstance(x, HermitianOperator) and "eigh" in x.__dict__:
            w, v = x.eigh
            yy = as_matrix(y)
            # Tr[V w V^dag Y] = sum_k w_k <v_k|Y|v_k>
            diag = np.einsum("ik,ij,jk->k", v.conj(), yy, v)
            return complex(np.dot(w, diag))
    return complex(np.einsum("ij,ji->", as_matrix(a), as_matrix(b)))


def commutator_norm(a: Operator, b: Operator) -> float:
    a, b = as_matrix(a), as_matrix(b)
    return float(np.linalg.norm(a @ b - b @ a))


PAULI_X = np.array([[0, 1], [1, 0]], dtype=complex)
PAULI_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
PAULI_Z = np.array([[1, 0], [0, -1]], dtype=complex)
