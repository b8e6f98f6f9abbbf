"""Column-stacking vectorisation and superoperator matrices.

Convention (used everywhere in the package)::

    vec(X) = X.flatten(order="F")          # stack columns
    vec(A X B) = (B.T kron A) vec(X)

so ``spre(A) = I kron A`` and ``spost(B) = B.T kron I``.
"""

from __future__ import annotations

import numpy as np


def vec(m: np.ndarray) -> np.ndarray:
    return np.asarray(m).flatten(order="F")


def unvec(v: np.ndarray, dim: int = None) -> np.ndarray:
    v = np.asarray(v)
    if dim is None:
        dim = int(round(np.sqrt(v.size)))
    return v.reshape((dim, dim), order="F")


def spre(a: np.ndarray) -> np.ndarray:
    """Superoperator of left multiplication ``X -> A X``."""
    return np.kron(np.eye(a.shape[0]), a)


def spost(b: np.ndarray) -> np.ndarray:
    """Superoperator of right multiplication ``X -> X B``."""
    return np.kron(b.T, np.eye(b.shape[0]))


def sandwich(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Superoperator of ``X -> A X B``."""
    return np.kron(b.T, a)


def commutator_super(a: np.ndarray) -> np.ndarray:
    return spre(a) - spost(a)


def hamiltonian_super(h: np.ndarray, hbar: float = 1.0) -> np.ndarray:
    """``X -> -i [H, X] / hbar``."""
    return -1j / hbar * commutator_super(h)


def double_commutator_super(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """``X -> -1/2 [A, [B, X]]``."""
    return -0.5 * commutator_super(a) @ commutator_super(b)


def lindblad_super(ops, weights=None) -> np.ndarray:
    """``X -> sum_k w_k (D_k X D_k^dag - 1/2 {D_k^dag D_k, X})``."""
    ops = list(ops)
    dim = ops[0].shape[0]
    out = np.zeros((dim * dim, dim * dim), dtype=complex)
    weights = np.ones(len(ops)) if weights is None else weights
    for w, d in zip(weights, ops):
        dd = d.conj().T @ d
        out += w * (sandwich(d, d.conj().T) - 0.5 * (spre(dd) + spost(dd)))
    return out


def superop_from_map(fn, dim: int) -> np.ndarray:
    """Matrix of a linear map on ``dim x dim`` matrices, column by column.

    Used as a brute-force oracle; production code builds Liouvillians from
    the Kronecker formulas above.
    """
    out = np.zeros((dim * dim, dim * dim), dtype=complex)
    for k in range(dim * dim):
        e = np.zeros(dim * dim, dtype=complex)
        e[k] = 1.0
        out[:, k] = vec(fn(unvec(e, dim)))
    return out


def choi_matrix(superop: np.ndarray) -> np.ndarray:
    """Choi matrix ``sum_ij |i><j| kron Phi(|i><j|)`` of a superoperator matrix.

    The map is completely positive iff this matrix is positive semidefinite.
    """
    dim = int(round(np.sqrt(superop.shape[0])))
    choi = np.zeros((dim * dim, dim * dim), dtype=complex)
    for i in range(dim):
        for j in range(dim):
            e = np.zeros((dim, dim), dtype=complex)
            e[i, j] = 1.0
            choi += np.kron(e, unvec(superop @ vec(e), dim))
    return choi
