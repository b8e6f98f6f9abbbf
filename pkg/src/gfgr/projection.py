"""Completely positive projections onto subsystems and the projected generator.

A projection is given by Kraus operators ``{V_a}`` acting on observables as
``P0(A) = sum_a V_a^dag A V_a`` (Heisenberg picture) with
``sum_a V_a^dag V_a = 1``. On states the dual map ``rho -> sum_a V_a rho V_a^dag``
is used. Projected dynamics always runs on the full-space density matrix.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal, Optional, Sequence

import numpy as np
from scipy.linalg import null_space

from .core import (
    DimensionError,
    ValidationError,
    as_matrix,
    commutator,
    dagger,
    random_hermitian,
    validate_state,
    Tolerances,
)
from .liouville import choi_matrix, lindblad_super, sandwich, spost, spre
from .superop import CoarseGrainedL

COMPLETENESS_TOL = 1e-12
IDEMPOTENCE_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class ProjectionScheme:
    kraus_ops: np.ndarray
    kind: Literal["partial_trace", "block", "custom", "trivial"] = "custom"
    omega: Optional[np.ndarray] = None
    factors: Optional[tuple] = None
    blocks: Optional[tuple] = None
    check_idempotence: bool = True

    def __post_init__(self):
        ops = np.asarray(self.kraus_ops, dtype=complex)
        if ops.ndim == 2:
            ops = ops[None]
        if ops.ndim != 3 or ops.shape[1] != ops.shape[2] or len(ops) == 0:
            raise DimensionError("Kraus operators must be a non-empty stack of square matrices")
        ops.setflags(write=False)
        object.__setattr__(self, "kraus_ops", ops)
        defect = np.max(np.abs(np.einsum("kji,kjl->il", ops.conj(), ops) - np.eye(self.dim)))
        if defect > COMPLETENESS_TOL:
            raise ValidationError(f"Kraus family is not complete (defect {defect:.3e})")
        if self.check_idempotence:
            rng = np.random.default_rng(12345)
            a = random_hermitian(self.dim, rng)
            once = self.heisenberg(a)
            twice = self.heisenberg(once)
            if np.max(np.abs(twice - once)) > IDEMPOTENCE_TOL:
                raise ValidationError("Kraus family does not define a projection (P0 P0 != P0)")

    @property
    def dim(self) -> int:
        return self.kraus_ops.shape[1]

    def __len__(self) -> int:
        return len(self.kraus_ops)

    def heisenberg(self, a) -> np.ndarray:
        """``P0(A) = sum_a V_a^dag A V_a``."""
        v = self.kraus_ops
        return np.einsum("kji,jl,klm->im", v.conj(), as_matrix(a), v)

    def schrodinger(self, rho) -> np.ndarray:
        """Dual map on states, ``rho -> sum_a V_a rho V_a^dag``."""
        v = self.kraus_ops
        return np.einsum("kij,jl,kml->im", v, as_matrix(rho), v.conj())

    def schrodinger_super(self) -> np.ndarray:
        return sum(sandwich(v, dagger(v)) for v in self.kraus_ops)

    def choi(self) -> np.ndarray:
        return choi_matrix(self.schrodinger_super())

    def fixed_observables(self, tol: float = 1e-10) -> np.ndarray:
        """Basis (stack of matrices) of observables with ``P0(A) = A``."""
        d = self.dim
        sup = sum(sandwich(dagger(v), v) for v in self.kraus_ops)
        basis = null_space(sup - np.eye(d * d), rcond=tol)
        return np.stack([b.reshape((d, d), order="F") for b in basis.T]) if basis.size else np.zeros((0, d, d))


def commutant(ops: Sequence[np.ndarray], tol: float = 1e-10) -> np.ndarray:
    """Basis of matrices commuting with every ``V`` and ``V^dag`` in ``ops``."""
    ops = [np.asarray(o, dtype=complex) for o in ops]
    d = ops[0].shape[0]
    rows = []
    for v in ops:
        for w in (v, dagger(v)):
            rows.append(spre(w) - spost(w))
    basis = null_space(np.vstack(rows), rcond=tol)
    return np.stack([b.reshape((d, d), order="F") for b in basis.T]) if basis.size else np.zeros((0, d, d))


def trivial_projection(dim: int) -> ProjectionScheme:
    return ProjectionScheme(np.eye(dim, dtype=complex)[None], kind="trivial")


def block_projection(blocks: Sequence[Sequence[int]], dim: Optional[int] = None) -> ProjectionScheme:
    """Orthogonal block projectors ``{P, Q_l, Q_r, ...}`` from a partition of level indices."""
    blocks = [tuple(int(i) for i in b) for b in blocks]
    if not blocks or any(len(b) == 0 for b in blocks):
        raise ValidationError("blocks must be non-empty")
    flat = [i for b in blocks for i in b]
    if len(set(flat)) != len(flat):
        raise ValidationError("blocks overlap")
    n = max(flat) + 1 if dim is None else dim
    if sorted(flat) != list(range(n)):
        missing = sorted(set(range(n)) - set(flat))
        raise ValidationError(f"blocks do not partition the basis (missing {missing or 'none'}, dim {n})")
    ops = np.zeros((len(blocks), n, n), dtype=complex)
    for k, b in enumerate(blocks):
        ops[k, b, b] = 1.0
    return ProjectionScheme(ops, kind="block", blocks=tuple(blocks))


def partial_trace_projection(
    system_dim: int, env_dim: int, omega, tol: Tolerances = Tolerances()
) -> ProjectionScheme:
    """Conditional expectation ``A x B -> Tr(omega B) A x 1`` as a Kraus family.

    With ``omega = sum_k p_k |k><k|`` the operators are
    ``sqrt(p_k) 1 x |k><j|`` for every environment basis state ``j``.
    """
    omega = as_matrix(omega)
    if omega.shape != (env_dim, env_dim):
        raise DimensionError(f"omega has shape {omega.shape}, expected ({env_dim}, {env_dim})")
    report = validate_state(omega, tol)
    if not report.passed:
        raise ValidationError(f"invalid environment state: {report.reason()}")
    p, vecs = np.linalg.eigh(0.5 * (omega + dagger(omega)))
    eye_s = np.eye(system_dim)
    ops = []
    for pk, k in zip(p, vecs.T):
        if pk <= 1e-15:
            continue
        for j in range(env_dim):
            ej = np.zeros(env_dim)
            ej[j] = 1.0
            ops.append(np.sqrt(pk) * np.kron(eye_s, np.outer(k, ej)))
    # renormalise away the weight dropped with vanishing eigenvalues
    kept = sum(pk for pk in p if pk > 1e-15)
    ops = np.asarray(ops) / np.sqrt(kept)
    return ProjectionScheme(
        ops, kind="partial_trace", omega=omega.copy(), factors=(system_dim, env_dim)
    )


@dataclass(frozen=True)
class FirstOrderReport:
    defect: float
    threshold: float

    @property
    def exceeds(self) -> bool:
        return self.defect > self.threshold


def first_order_check(hprime, scheme: ProjectionScheme, rho, rel_threshold: float = 1e-10) -> FirstOrderReport:
    """Spectral norm of ``P0([H', P0 rho])``, with ``P0`` the state-side projection.

    The threshold is relative to the spectral norm of ``H'``.
    """
    h = as_matrix(hprime)
    r = as_matrix(rho)
    if h.shape != (scheme.dim,) * 2 or r.shape != h.shape:
        raise DimensionError("coupling, state and projection dimensions differ")
    defect = np.linalg.norm(scheme.schrodinger(commutator(h, scheme.schrodinger(r))), 2)
    return FirstOrderReport(float(defect), rel_threshold * float(np.linalg.norm(h, 2)))


@dataclass(frozen=True, eq=False)
class TransitionAmplitudes:
    """``D[a, b] = V_a L V_b`` for every pair of Kraus indices (time**-1/2)."""

    ops: np.ndarray
    t_bar: float

    @property
    def dim(self) -> int:
        return self.ops.shape[-1]

    def flat(self) -> np.ndarray:
        return self.ops.reshape(-1, self.dim, self.dim)

    def contraction(self) -> np.ndarray:
        """``sum_ab D_ab^dag D_ab``."""
        d = self.flat()
        return np.einsum("kji,kjl->il", d.conj(), d)


def transition_amplitudes(L: CoarseGrainedL, scheme: ProjectionScheme) -> TransitionAmplitudes:
    lm = L.matrix if isinstance(L, CoarseGrainedL) else np.asarray(L)
    if lm.shape != (scheme.dim,) * 2:
        raise DimensionError("L and projection dimensions differ")
    v = scheme.kraus_ops
    ops = np.einsum("aij,jk,bkl->abil", v, lm, v)
    t_bar = L.params.t_bar if isinstance(L, CoarseGrainedL) else float("nan")
    return TransitionAmplitudes(ops, t_bar)


def projected_generator_apply(D: TransitionAmplitudes, rho) -> np.ndarray:
    """``sum_ab D rho D^dag - 1/2 {sum_ab D^dag D, rho}``."""
    r = as_matrix(rho)
    d = D.flat()
    jump = np.einsum("kij,jl,kml->im", d, r, d.conj())
    c = D.contraction()
    return jump - 0.5 * (c @ r + r @ c)


def projected_liouvillian(D: TransitionAmplitudes) -> np.ndarray:
    return lindblad_super(D.flat())
