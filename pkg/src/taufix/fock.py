"""Operators on a truncated bosonic Fock space.

Every operator is a dense ``complex128`` ndarray of shape ``(D, D)`` written in
the number basis ``|0>, ..., |D-1>``.  Unbounded operators of the infinite
model are represented by their growing diagonal entries; whether a given
truncation is faithful is decided by :func:`taufix.seminorm.truncation_margin`,
not here.

Constructors return read-only arrays so a shared model operator cannot be
modified in place by accident.
"""

import numpy as np

from .errors import (
    DegenerateSpectrumError,
    DimensionError,
    NotDiagonalError,
    SingularDiagonalError,
)

__all__ = [
    "as_op",
    "identity",
    "number_op",
    "ladder_ops",
    "shifted_hamiltonian",
    "cutoff_hamiltonian",
    "spectral_projector",
    "diag_op",
    "diagonal_entries",
    "is_diagonal",
    "op_norm",
    "add",
    "sub",
    "scalar_mul",
    "mat_mul",
    "adjoint",
    "commutator",
    "inverse_diag",
]


def _frozen(x):
    x.setflags(write=False)
    return x


def as_op(x):
    """Validate ``x`` as a truncated operator and return it as complex128."""
    x = np.asarray(x, dtype=np.complex128)
    if x.ndim != 2 or x.shape[0] != x.shape[1]:
        raise DimensionError(f"expected a square matrix, got shape {x.shape}")
    if x.shape[0] < 2:
        raise DimensionError(f"truncation dimension must be >= 2, got {x.shape[0]}")
    if not np.all(np.isfinite(x)):
        raise ValueError("operator has non-finite entries")
    return x


def _check_dim(D):
    if int(D) != D or D < 2:
        raise DimensionError(f"truncation dimension must be an integer >= 2, got {D}")
    return int(D)


def identity(D):
    return _frozen(np.eye(_check_dim(D), dtype=np.complex128))


def diag_op(values):
    """Diagonal operator with the given (real or complex) entries."""
    values = np.asarray(values, dtype=np.complex128)
    _check_dim(values.shape[0])
    return _frozen(np.diag(values))


def number_op(D):
    """``N = diag(0, 1, ..., D-1)``."""
    return diag_op(np.arange(_check_dim(D), dtype=float))


def ladder_ops(D):
    """Annihilation and creation operators ``(a, a_dag)``.

    ``a[l, l+1] = sqrt(l+1)``.  The product ``a_dag @ a`` reproduces
    :func:`number_op` exactly, while ``[a, a_dag]`` equals the identity only on
    the first ``D-1`` basis states: the last diagonal entry is ``-(D-1)``, an
    unavoidable artifact of cutting the ladder.
    """
    D = _check_dim(D)
    a = np.diag(np.sqrt(np.arange(1, D, dtype=float)), 1).astype(np.complex128)
    return _frozen(a), _frozen(a.conj().T.copy())


def shifted_hamiltonian(D, nu):
    """``nu * 1 + N``; a positive shift makes the generator invertible."""
    if nu < 0:
        raise ValueError(f"shift must be non-negative, got {nu}")
    return diag_op(nu + np.arange(_check_dim(D), dtype=float))


def cutoff_hamiltonian(D, L, shift=4.0):
    """Occupation-number cutoff ``shift * 1 + Q_L N Q_L``.

    Diagonal entries are ``shift + l`` for ``l <= L`` and ``shift`` above the
    cutoff, so the result commutes with :func:`shifted_hamiltonian`.
    """
    D = _check_dim(D)
    if not 0 <= L < D:
        raise DimensionError(f"cutoff index must satisfy 0 <= L < D={D}, got {L}")
    levels = np.arange(D, dtype=float)
    levels[L + 1:] = 0.0
    return diag_op(shift + levels)


def is_diagonal(x):
    x = np.asarray(x)
    return not np.any(x - np.diag(np.diagonal(x)))


def diagonal_entries(x, real=True):
    """Diagonal of a diagonal operator; raises if ``x`` has off-diagonal mass."""
    x = as_op(x)
    if not is_diagonal(x):
        raise NotDiagonalError("operator is not diagonal in the number basis")
    d = np.diagonal(x).copy()
    if real:
        if np.any(d.imag != 0):
            raise NotDiagonalError("diagonal generator must have real entries")
        return d.real
    return d


def spectral_projector(generator, l):
    """Rank-one projector onto the ``l``-th eigenvector of a diagonal generator."""
    d = diagonal_entries(generator, real=False)
    D = d.shape[0]
    if not 0 <= l < D:
        raise DimensionError(f"projector index {l} outside 0..{D - 1}")
    _, first, counts = np.unique(d, return_index=True, return_counts=True)
    if np.any(counts > 1):
        clashes = [int(i) for i, c in zip(first, counts) if c > 1]
        raise DegenerateSpectrumError(
            f"degenerate spectrum: entries {clashes} repeat elsewhere on the diagonal"
        )
    p = np.zeros((D, D), dtype=np.complex128)
    p[l, l] = 1.0
    return _frozen(p)


def op_norm(x):
    """Operator (spectral) norm: the largest singular value."""
    x = np.asarray(x, dtype=np.complex128)
    if not np.any(x):
        return 0.0
    return float(np.linalg.svd(x, compute_uv=False)[0])


def _pair(x, y):
    x, y = as_op(x), as_op(y)
    if x.shape != y.shape:
        raise DimensionError(f"dimension mismatch: {x.shape} vs {y.shape}")
    return x, y


def add(x, y):
    x, y = _pair(x, y)
    return _frozen(x + y)


def sub(x, y):
    x, y = _pair(x, y)
    return _frozen(x - y)


def scalar_mul(lam, x):
    return _frozen(complex(lam) * as_op(x))


def mat_mul(x, y):
    x, y = _pair(x, y)
    return _frozen(x @ y)


def adjoint(x):
    return _frozen(as_op(x).conj().T.copy())


def commutator(x, y):
    """``[x, y] = xy - yx``."""
    x, y = _pair(x, y)
    return _frozen(x @ y - y @ x)


def inverse_diag(x):
    d = diagonal_entries(x, real=False)
    zero = np.flatnonzero(d == 0)
    if zero.size:
        raise SingularDiagonalError(f"zero diagonal entries at {zero.tolist()}")
    return diag_op(1.0 / d)
