"""Dissipative generators and their rate tensors.

Three dynamics are built here, all in the energy basis:

* the coarse-grained Lindblad generator ``-1/2 [L, [L, rho]]`` with a single
  Hermitian operator ``L`` (production path: :func:`gfgr_apply`);
* the conventional Markov generator ``-1/2 [H'/hbar, [K, rho]]`` with either
  a finite-elapsed kernel or its completed-collision (energy-delta) limit;
* the semiclassical Boltzmann equation for populations.

Energy deltas are regularised as normalised Gaussians of width ``eta``.
Rate tensors are rank-4 arrays ``P[l1, l2, l1p, l2p]`` and are only
materialised for ``dim <= RATE_TENSOR_DIM_CAP``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal, Optional

import numpy as np

from .core import (
    CoarseGrainingParams,
    DimensionError,
    EnergyBasis,
    ParameterError,
    ValidationError,
    as_matrix,
    commutator,
    dagger,
)

RATE_TENSOR_DIM_CAP = 16

_SQRT_2PI = np.sqrt(2.0 * np.pi)


def gaussian_delta(x, width: float):
    """Normalised Gaussian of standard deviation ``width``, a regularised delta."""
    if width <= 0:
        raise ParameterError(f"delta width must be positive, got {width}")
    x = np.asarray(x, dtype=float)
    return np.exp(-0.5 * (x / width) ** 2) / (_SQRT_2PI * width)


def _check_dims(hprime: np.ndarray, basis: EnergyBasis) -> None:
    if hprime.shape != (basis.dim, basis.dim):
        raise DimensionError(
            f"coupling shape {hprime.shape} does not match basis dim {basis.dim}"
        )


@dataclass(frozen=True, eq=False)
class CoarseGrainedL:
    """Hermitian Lindblad operator at correlation time ``params.t_bar``.

    ``matrix`` has units of time**-1/2. ``hprime`` keeps the (scaled)
    coupling it was built from so rate tensors can be evaluated from their
    own closed form.
    """

    matrix: np.ndarray
    params: CoarseGrainingParams
    basis: EnergyBasis
    hprime: np.ndarray

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]


def build_coarse_grained_L(
    hprime, basis: EnergyBasis, params: CoarseGrainingParams
) -> CoarseGrainedL:
    """Closed form of the Gaussian-weighted time integral of ``H'`` in interaction picture.

    ``L_{l l'} = (2 pi t_bar^2)^(1/4) (H'_{l l'} / hbar) exp(-(eps_l - eps_l')^2 t_bar^2 / (4 hbar^2))``
    """
    h = as_matrix(hprime)
    _check_dims(h, basis)
    if params.t_bar <= 0:
        raise ParameterError("t_bar must be positive")
    t, hbar = params.t_bar, params.hbar
    gauss = np.exp(-(basis.gaps() * t / hbar) ** 2 / 4.0)
    matrix = (2.0 * np.pi * t**2) ** 0.25 * (h / hbar) * gauss
    matrix = 0.5 * (matrix + dagger(matrix))
    return CoarseGrainedL(matrix, params, basis, h.copy())


def gfgr_apply(L, rho) -> np.ndarray:
    """``d rho / dT = -1/2 [L, [L, rho]]``."""
    lm = L.matrix if isinstance(L, CoarseGrainedL) else np.asarray(L)
    r = as_matrix(rho)
    if lm.shape != r.shape:
        raise DimensionError(f"L has shape {lm.shape}, rho has shape {r.shape}")
    return -0.5 * commutator(lm, commutator(lm, r))


@dataclass(frozen=True, eq=False)
class RateTensor:
    """Generalised scattering rates ``P[l1, l2, l1p, l2p]`` (time**-1)."""

    entries: np.ndarray
    kind: Literal["conventional", "gfgr"]
    basis: EnergyBasis

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    def diagonal(self) -> np.ndarray:
        """Semiclassical selection ``P_{l l'} = P[l, l, l', l']``."""
        return np.real(np.einsum("aabb->ab", self.entries)).copy()

    def rhs(self, rho) -> np.ndarray:
        """Equation of motion assembled from the tensor (in/out terms plus H.c.).

        ``X_ab = 1/2 sum_cd (P[a,b,c,d] rho_cd - P[a,d,c,c] rho_db)`` and the
        result is ``X + X^dagger``, written in a form that stays linear in
        ``rho`` so it also defines a Liouvillian on non-Hermitian inputs.
        """
        r = as_matrix(rho)
        p = self.entries
        out_ops = np.einsum("adcc->ad", p)
        x = 0.5 * (np.einsum("abcd,cd->ab", p, r) - out_ops @ r)
        hc = 0.5 * (np.einsum("bacd,dc->ab", p.conj(), r) - r @ dagger(out_ops))
        return x + hc

    def rows(self):
        d = self.dim
        for idx in np.ndindex(d, d, d, d):
            v = self.entries[idx]
            yield (*idx, float(v.real), float(v.imag))


def _rate_tensor_guard(dim: int) -> None:
    if dim > RATE_TENSOR_DIM_CAP:
        raise DimensionError(
            f"rate tensors are only materialised for dim <= {RATE_TENSOR_DIM_CAP}, got {dim}"
        )


def gfgr_rate_tensor(L: CoarseGrainedL) -> RateTensor:
    """Symmetrised quantum scattering rates, from their own closed form.

    ``(2 pi / hbar) H'_{l1 l1'} conj(H'_{l2 l2'}) exp(-(g1^2 + g2^2) / (4 eps^2)) / (sqrt(2 pi) eps)``
    with ``g1 = eps_l1 - eps_l1'``, ``g2 = eps_l2 - eps_l2'``, ``eps = hbar / t_bar``.
    """
    basis, h = L.basis, L.hprime
    _rate_tensor_guard(basis.dim)
    hbar, eps = L.params.hbar, L.params.eps_bar
    gaps = basis.gaps()
    g1 = gaps[:, None, :, None]
    g2 = gaps[None, :, None, :]
    weight = np.exp(-(g1**2 + g2**2) / (4.0 * eps**2)) / (_SQRT_2PI * eps)
    couplings = h[:, None, :, None] * np.conj(h)[None, :, None, :]
    return RateTensor((2.0 * np.pi / hbar) * couplings * weight, "gfgr", basis)


def conventional_rate_tensor(hprime, basis: EnergyBasis, eta: float, hbar: float = 1.0) -> RateTensor:
    """Completed-collision rates with the single (asymmetric) energy delta on the second pair.

    ``(2 pi / hbar) H'_{l1 l1'} conj(H'_{l2 l2'}) delta_eta(eps_l2 - eps_l2')``
    """
    if eta <= 0:
        raise ParameterError(f"eta must be positive, got {eta}")
    h = as_matrix(hprime)
    _check_dims(h, basis)
    _rate_tensor_guard(basis.dim)
    delta = gaussian_delta(basis.gaps(), eta)
    couplings = h[:, None, :, None] * np.conj(h)[None, :, None, :]
    entries = (2.0 * np.pi / hbar) * couplings * delta[None, :, None, :]
    return RateTensor(entries, "conventional", basis)


@dataclass(frozen=True, eq=False)
class SemiclassicalRates:
    """Nonnegative transition rates ``P[l, l']`` for the Boltzmann equation (time**-1)."""

    matrix: np.ndarray
    smoothing: Literal["delta", "gaussian"]
    width: float

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=float)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise DimensionError("rates must be a square matrix")
        if np.any(m < 0):
            raise ValidationError("semiclassical rates must be nonnegative")
        object.__setattr__(self, "matrix", m)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def rows(self):
        d = self.dim
        for i in range(d):
            for j in range(d):
                yield i, j, float(self.matrix[i, j])


def smoothed_fgr_rates(
    hprime, basis: EnergyBasis, params: CoarseGrainingParams
) -> SemiclassicalRates:
    """Vertex-smoothed golden rule ``(2 pi/hbar) |H'|^2 exp(-gap^2 / (2 eps^2)) / (sqrt(2 pi) eps)``."""
    h = as_matrix(hprime)
    _check_dims(h, basis)
    hbar, eps = params.hbar, params.eps_bar
    p = (2.0 * np.pi / hbar) * np.abs(h) ** 2 * (
        np.exp(-basis.gaps() ** 2 / (2.0 * eps**2)) / (_SQRT_2PI * eps)
    )
    return SemiclassicalRates(p, "gaussian", eps)


def fgr_rates(hprime, basis: EnergyBasis, eta: float, hbar: float = 1.0) -> SemiclassicalRates:
    """Golden-rule rates ``(2 pi/hbar) |H'|^2 delta_eta(gap)``."""
    if eta <= 0:
        raise ParameterError(f"eta must be positive, got {eta}")
    h = as_matrix(hprime)
    _check_dims(h, basis)
    p = (2.0 * np.pi / hbar) * np.abs(h) ** 2 * gaussian_delta(basis.gaps(), eta)
    return SemiclassicalRates(p, "delta", eta)


@dataclass(frozen=True, eq=False)
class ConventionalKernel:
    """Markov kernel ``K`` (dimensionless) for ``-1/2 [H'/hbar, [K, rho]]``.

    ``elapsed`` is ``t - t0``; ``inf`` marks the completed-collision form,
    whose energy delta has width ``eta``.
    """

    matrix: np.ndarray
    elapsed: float
    basis: EnergyBasis
    hbar: float = 1.0
    eta: Optional[float] = None
    unit: str = "dimensionless"

    @property
    def completed(self) -> bool:
        return np.isinf(self.elapsed)


def conventional_kernel(hprime, basis: EnergyBasis, elapsed: float, hbar: float = 1.0) -> ConventionalKernel:
    """``K_{l l'} = 2 (H'_{l l'}/hbar) * integral_{-elapsed}^{0} exp(i w t') dt'``, ``w = gap/hbar``.

    The integral is ``elapsed * exp(-i w elapsed / 2) * sinc(w elapsed / 2)``.
    """
    if not elapsed > 0 or not np.isfinite(elapsed):
        raise ParameterError(f"elapsed must be a positive finite time, got {elapsed}")
    h = as_matrix(hprime)
    _check_dims(h, basis)
    half_phase = basis.gaps() / hbar * elapsed / 2.0
    integral = elapsed * np.exp(-1j * half_phase) * np.sinc(half_phase / np.pi)
    return ConventionalKernel(2.0 * (h / hbar) * integral, float(elapsed), basis, hbar)


def completed_collision_kernel(hprime, basis: EnergyBasis, eta: float, hbar: float = 1.0) -> ConventionalKernel:
    """Kernel equivalent to :func:`conventional_rate_tensor`: ``K = 2 pi H' * delta_eta(gap)``.

    Only the dissipative (real-delta) part is kept; the principal-value
    energy renormalisation is dropped.
    """
    if eta <= 0:
        raise ParameterError(f"eta must be positive, got {eta}")
    h = as_matrix(hprime)
    _check_dims(h, basis)
    k = 2.0 * np.pi * h * gaussian_delta(basis.gaps(), eta)
    return ConventionalKernel(k, float("inf"), basis, hbar, eta=float(eta))


def conventional_apply(hprime, kernel: ConventionalKernel, rho) -> np.ndarray:
    """``d rho / dt = -1/2 [H'/hbar, [K, rho]]``."""
    h = as_matrix(hprime) / kernel.hbar
    r = as_matrix(rho)
    if h.shape != r.shape or kernel.matrix.shape != r.shape:
        raise DimensionError("coupling, kernel and state dimensions differ")
    return -0.5 * commutator(h, commutator(kernel.matrix, r))


def boltzmann_rhs(
    rates: SemiclassicalRates, f, neg_tol: float = 1e-12, sum_tol: float = 1e-10
) -> np.ndarray:
    """``df_l/dt = sum_l' (P[l, l'] f_l' - P[l', l] f_l)``."""
    f = np.asarray(f, dtype=float)
    if f.shape != (rates.dim,):
        raise DimensionError(f"population vector has shape {f.shape}, expected ({rates.dim},)")
    if np.any(f < -neg_tol):
        raise ValidationError(f"negative population {f.min():.3e}")
    if abs(f.sum() - 1.0) > sum_tol:
        raise ValidationError(f"populations sum to {f.sum():.15g}, not 1")
    p = rates.matrix
    return p @ f - p.sum(axis=0) * f

