"""Hilbert-space foundations: energy bases, states, couplings and checks.

Every operator in the package is stored in the eigenbasis of the
noninteracting Hamiltonian. ``H0`` itself is only kept as its list of
eigenvalues (:class:`EnergyBasis`); an arbitrary ``H0`` is diagonalised once
by :meth:`EnergyBasis.from_hamiltonian`.

Units: ``hbar`` defaults to 1 and is carried explicitly through every
formula that needs it.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

DEFAULT_DIM_CAP = 4096


class GFGRError(Exception):
    """Base class for all package errors."""


class ValidationError(GFGRError):
    """An input violates a structural invariant (Hermiticity, trace, ...)."""


class DimensionError(GFGRError):
    """Dimensions are incompatible or exceed the configured cap."""


class ParameterError(GFGRError):
    """A physical parameter is out of its allowed range."""


@dataclass(frozen=True)
class Tolerances:
    hermiticity: float = 1e-12
    trace: float = 1e-12
    positivity: float = 1e-10

    def updated(self, **overrides: float) -> "Tolerances":
        values = {**self.__dict__, **{k: float(v) for k, v in overrides.items()}}
        return Tolerances(**values)


DEFAULT_TOL = Tolerances()


def dagger(a: np.ndarray) -> np.ndarray:
    return np.conj(np.swapaxes(a, -1, -2))


def commutator(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return a @ b - b @ a


def anticommutator(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return a @ b + b @ a


def hermiticity_defect(a: np.ndarray) -> float:
    a = np.asarray(a)
    if a.size == 0:
        return 0.0
    return float(np.max(np.abs(a - dagger(a))))


def _as_square(matrix, name: str = "matrix") -> np.ndarray:
    m = np.array(matrix, dtype=complex)
    if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] < 1:
        raise DimensionError(f"{name} must be a non-empty square matrix, got shape {m.shape}")
    return m


@dataclass(frozen=True)
class EnergyBasis:
    """Eigenbasis ``{|lambda>}`` of the noninteracting Hamiltonian.

    Degenerate energies are allowed and are never perturbed.
    """

    energies: tuple
    labels: tuple = ()

    def __post_init__(self):
        energies = tuple(float(e) for e in np.ravel(np.asarray(self.energies, dtype=float)))
        if len(energies) < 1:
            raise ValidationError("energy basis needs at least one level")
        if not all(np.isfinite(energies)):
            raise ValidationError("energies must be finite")
        labels = tuple(self.labels) if self.labels else tuple(range(len(energies)))
        if len(labels) != len(energies):
            raise ValidationError(
                f"got {len(labels)} labels for {len(energies)} energies"
            )
        if len(set(labels)) != len(labels):
            raise ValidationError("level labels must be unique")
        object.__setattr__(self, "energies", energies)
        object.__setattr__(self, "labels", labels)

    @property
    def dim(self) -> int:
        return len(self.energies)

    @property
    def array(self) -> np.ndarray:
        return np.asarray(self.energies, dtype=float)

    def gaps(self) -> np.ndarray:
        """Matrix of energy differences ``eps_lambda - eps_lambda'``."""
        e = self.array
        return e[:, None] - e[None, :]

    def hamiltonian(self) -> np.ndarray:
        return np.diag(self.array).astype(complex)

    def index(self, label) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise ValidationError(f"unknown level label {label!r}") from None

    @classmethod
    def from_hamiltonian(cls, h0, tol: float = 1e-12):
        """Diagonalise ``h0``; returns ``(basis, eigenvectors)``.

        Columns of ``eigenvectors`` are the basis states in the original
        frame, so ``op_energy = V^dagger @ op @ V``.
        """
        h0 = _as_square(h0, "H0")
        if hermiticity_defect(h0) > tol:
            raise ValidationError("H0 is not Hermitian")
        energies, vectors = np.linalg.eigh(0.5 * (h0 + dagger(h0)))
        return cls(tuple(energies)), vectors

    @classmethod
    def product(cls, a: "EnergyBasis", b: "EnergyBasis") -> "EnergyBasis":
        """Basis of the noninteracting product space ``H_a x 1 + 1 x H_b``."""
        energies = (a.array[:, None] + b.array[None, :]).ravel()
        labels = tuple((la, lb) for la in a.labels for lb in b.labels)
        return cls(tuple(energies), labels)


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    """Validated state ``rho`` in the energy basis.

    ``factors`` declares a bipartite structure ``(d_a, d_b)`` when the
    state lives on a tensor-product space.
    """

    matrix: np.ndarray
    basis: Optional[EnergyBasis] = None
    factors: Optional[tuple] = None
    tol: Tolerances = field(default=DEFAULT_TOL, repr=False)

    def __post_init__(self):
        m = _as_square(self.matrix, "density matrix")
        if self.basis is not None and self.basis.dim != m.shape[0]:
            raise DimensionError(
                f"state has dim {m.shape[0]} but basis has dim {self.basis.dim}"
            )
        if self.factors is not None:
            factors = tuple(int(f) for f in self.factors)
            if len(factors) != 2 or factors[0] * factors[1] != m.shape[0]:
                raise DimensionError(f"factors {factors} do not multiply to {m.shape[0]}")
            object.__setattr__(self, "factors", factors)
        report = validate_state(m, self.tol)
        if not report.passed:
            raise ValidationError(f"invalid density matrix: {report.reason()}")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def populations(self) -> np.ndarray:
        return np.real(np.diag(self.matrix)).copy()

    @classmethod
    def pure(cls, psi, **kwargs) -> "DensityMatrix":
        psi = np.asarray(psi, dtype=complex).ravel()
        psi = psi / np.linalg.norm(psi)
        return cls(np.outer(psi, psi.conj()), **kwargs)

    @classmethod
    def maximally_mixed(cls, dim: int, **kwargs) -> "DensityMatrix":
        return cls(np.eye(dim, dtype=complex) / dim, **kwargs)

    @classmethod
    def diagonal(cls, populations, **kwargs) -> "DensityMatrix":
        return cls(np.diag(np.asarray(populations, dtype=complex)), **kwargs)


@dataclass(frozen=True, eq=False)
class CouplingOperator:
    """Hermitian perturbation ``H'`` (energy units) times a coupling scale ``g``."""

    matrix: np.ndarray
    basis: Optional[EnergyBasis] = None
    g: float = 1.0
    tol: float = 1e-12

    def __post_init__(self):
        m = _as_square(self.matrix, "coupling")
        if self.basis is not None and self.basis.dim != m.shape[0]:
            raise DimensionError(
                f"coupling has dim {m.shape[0]} but basis has dim {self.basis.dim}"
            )
        bad = np.argwhere(np.abs(m - dagger(m)) > self.tol)
        if len(bad):
            i, j = bad[0]
            raise ValidationError(
                f"coupling not Hermitian: entry ({i},{j}) = {m[i, j]} but "
                f"conj of ({j},{i}) = {np.conj(m[j, i])}"
            )
        if not np.isfinite(self.g) or self.g < 0:
            raise ParameterError(f"coupling scale g must be a nonnegative real, got {self.g}")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "g", float(self.g))

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @property
    def scaled(self) -> np.ndarray:
        """``g * H'``, the operator that enters every rate formula."""
        return self.g * self.matrix

    def with_scale(self, g: float) -> "CouplingOperator":
        return CouplingOperator(self.matrix, self.basis, g, self.tol)


@dataclass(frozen=True)
class CoarseGrainingParams:
    """Correlation time ``t_bar`` and the derived energy width ``eps_bar = hbar / t_bar``."""

    t_bar: float
    hbar: float = 1.0

    def __post_init__(self):
        if not np.isfinite(self.t_bar) or self.t_bar <= 0:
            raise ParameterError(f"t_bar must be positive, got {self.t_bar}")
        if not np.isfinite(self.hbar) or self.hbar <= 0:
            raise ParameterError(f"hbar must be positive, got {self.hbar}")

    @property
    def eps_bar(self) -> float:
        return self.hbar / self.t_bar

    @classmethod
    def from_eps_bar(cls, eps_bar: float, hbar: float = 1.0) -> "CoarseGrainingParams":
        if not np.isfinite(eps_bar) or eps_bar <= 0:
            raise ParameterError(f"eps_bar must be positive, got {eps_bar}")
        return cls(hbar / eps_bar, hbar)


@dataclass(frozen=True)
class ScalingSchedule:
    """Weak-coupling schedule ``t_bar(g) = T_ref * g**(-xi)``."""

    T_ref: float
    xi: float
    g_values: tuple

    def __post_init__(self):
        g = tuple(float(x) for x in self.g_values)
        if self.T_ref <= 0:
            raise ParameterError("T_ref must be positive")
        if self.xi <= 0:
            raise ParameterError("xi must be positive")
        if not g or any(x <= 0 for x in g):
            raise ParameterError("g_values must be positive")
        if any(b >= a for a, b in zip(g, g[1:])):
            raise ParameterError("g_values must be strictly decreasing")
        object.__setattr__(self, "g_values", g)

    def t_bar(self, g: float) -> float:
        return self.T_ref * g ** (-self.xi)


Operand = Union[np.ndarray, DensityMatrix]


def tensor_product(a: Operand, b: Operand, cap: int = DEFAULT_DIM_CAP):
    """Kronecker product of two operators or states.

    Two :class:`DensityMatrix` inputs give a bipartite :class:`DensityMatrix`
    with ``factors=(d_a, d_b)``; anything else gives a plain array.
    """
    ma = a.matrix if isinstance(a, DensityMatrix) else np.asarray(a)
    mb = b.matrix if isinstance(b, DensityMatrix) else np.asarray(b)
    if ma.ndim != 2 or mb.ndim != 2 or 0 in ma.shape or 0 in mb.shape:
        raise DimensionError("tensor_product expects two non-empty matrices")
    rows = ma.shape[0] * mb.shape[0]
    cols = ma.shape[1] * mb.shape[1]
    if max(rows, cols) > cap:
        raise DimensionError(f"product dimension {max(rows, cols)} exceeds cap {cap}")
    out = np.kron(ma, mb)
    if isinstance(a, DensityMatrix) and isinstance(b, DensityMatrix):
        basis = None
        if a.basis is not None and b.basis is not None:
            basis = EnergyBasis.product(a.basis, b.basis)
        return DensityMatrix(out, basis=basis, factors=(a.dim, b.dim))
    return out


def _partial_trace_array(m: np.ndarray, dims, keep: int) -> np.ndarray:
    da, db = dims
    t = m.reshape(da, db, da, db)
    if keep == 0:
        return np.einsum("ijkj->ik", t)
    return np.einsum("ijil->jl", t)


def partial_trace(rho: Operand, keep: int = 0, dims: Optional[Sequence[int]] = None):
    """Trace out one factor of a bipartite state.

    ``keep=0`` keeps the first factor (traces out the second).
    A :class:`DensityMatrix` input must have declared ``factors`` unless
    ``dims`` is given; plain arrays always need ``dims``.
    """
    if keep not in (0, 1):
        raise ValueError("keep must be 0 or 1")
    if isinstance(rho, DensityMatrix):
        dims = rho.factors if dims is None else tuple(dims)
        if dims is None:
            raise DimensionError("state is not declared bipartite")
        out = _partial_trace_array(rho.matrix, dims, keep)
        return DensityMatrix(out, tol=rho.tol)
    if dims is None:
        raise DimensionError("state is not declared bipartite")
    m = np.asarray(rho)
    if m.shape != (dims[0] * dims[1],) * 2:
        raise DimensionError(f"matrix of shape {m.shape} is not bipartite {tuple(dims)}")
    return _partial_trace_array(m, dims, keep)


def interaction_picture(op, basis: EnergyBasis, t: float, hbar: float = 1.0) -> np.ndarray:
    """``U0(t)^dagger H' U0(t)`` in the energy basis, ``U0 = exp(-i H0 t / hbar)``.

    Entry ``(l, l')`` is ``H'_{l l'} exp(i (eps_l - eps_l') t / hbar)``.
    """
    m = op.scaled if isinstance(op, CouplingOperator) else np.asarray(op, dtype=complex)
    if m.shape != (basis.dim, basis.dim):
        raise DimensionError(f"operator shape {m.shape} does not match basis dim {basis.dim}")
    return m * np.exp(1j * basis.gaps() * (t / hbar))


@dataclass(frozen=True)
class StateReport:
    hermiticity_defect: float
    trace_defect: float
    min_eigenvalue: float
    tol: Tolerances

    @property
    def hermitian(self) -> bool:
        return self.hermiticity_defect <= self.tol.hermiticity

    @property
    def unit_trace(self) -> bool:
        return self.trace_defect <= self.tol.trace

    @property
    def positive(self) -> bool:
        return self.min_eigenvalue >= -self.tol.positivity

    @property
    def passed(self) -> bool:
        return self.hermitian and self.unit_trace and self.positive

    def reason(self) -> str:
        parts = []
        if not self.hermitian:
            parts.append(f"hermiticity defect {self.hermiticity_defect:.3e}")
        if not self.unit_trace:
            parts.append(f"trace defect {self.trace_defect:.3e}")
        if not self.positive:
            parts.append(f"min eigenvalue {self.min_eigenvalue:.3e}")
        return ", ".join(parts) or "ok"


def min_eigenvalue(m: np.ndarray) -> float:
    """Smallest eigenvalue of the Hermitian part of ``m``."""
    m = np.asarray(m)
    return float(np.linalg.eigvalsh(0.5 * (m + dagger(m)))[0])


def validate_state(rho: Operand, tol: Tolerances = DEFAULT_TOL) -> StateReport:
    m = rho.matrix if isinstance(rho, DensityMatrix) else np.asarray(rho, dtype=complex)
    return StateReport(
        hermiticity_defect=hermiticity_defect(m),
        trace_defect=float(abs(np.trace(m) - 1.0)),
        min_eigenvalue=min_eigenvalue(m),
        tol=tol,
    )


def as_matrix(x) -> np.ndarray:
    """Raw complex array behind a state, coupling or array-like."""
    if isinstance(x, DensityMatrix):
        return x.matrix
    if isinstance(x, CouplingOperator):
        return x.scaled
    return np.asarray(x, dtype=complex)


def random_hermitian(dim: int, rng: np.random.Generator, scale: float = 1.0) -> np.ndarray:
    a = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    return scale * 0.5 * (a + dagger(a))


def random_density_matrix(
    dim: int, rng: np.random.Generator, rank: Optional[int] = None
) -> np.ndarray:
    """Random state from the induced (Ginibre) measure; ``rank=1`` gives a pure state."""
    rank = dim if rank is None else rank
    g = rng.normal(size=(dim, rank)) + 1j * rng.normal(size=(dim, rank))
    rho = g @ dagger(g)
    rho = 0.5 * (rho + dagger(rho))
    return rho / np.trace(rho).real


def von_neumann_entropy(m: np.ndarray) -> float:
    w = np.linalg.eigvalsh(0.5 * (m + dagger(m)))
    w = w[w > 1e-15]
    return float(-np.sum(w * np.log(w)))


def purity(m: np.ndarray) -> float:
    return float(np.real(np.trace(m @ m)))


def trace_norm(m: np.ndarray) -> float:
    """Trace norm of a Hermitian matrix (sum of absolute eigenvalues)."""
    return float(np.sum(np.abs(np.linalg.eigvalsh(0.5 * (m + dagger(m))))))
