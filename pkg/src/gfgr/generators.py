"""Generator objects: one ``apply`` path and one Liouvillian-matrix path each.

A generator is the right-hand side ``d rho / dt`` in the Schrödinger
picture. With ``free_evolution`` the coherent part ``-i [H0, rho] / hbar``
(``H0`` diagonal in the energy basis) is added to the dissipator.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import liouville as lv
from .core import CoarseGrainingParams, EnergyBasis, ParameterError, as_matrix, commutator
from .projection import (
    ProjectionScheme,
    TransitionAmplitudes,
    projected_generator_apply,
    projected_liouvillian,
    transition_amplitudes,
)
from .superop import (
    CoarseGrainedL,
    ConventionalKernel,
    build_coarse_grained_L,
    completed_collision_kernel,
    conventional_apply,
    conventional_kernel,
    gfgr_apply,
)


@dataclass(frozen=True, eq=False)
class Generator:
    kind: str
    basis: EnergyBasis
    hbar: float = 1.0
    free_evolution: bool = True

    @property
    def dim(self) -> int:
        return self.basis.dim

    def dissipator(self, rho: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def dissipator_super(self) -> np.ndarray:
        raise NotImplementedError

    def apply(self, rho) -> np.ndarray:
        r = as_matrix(rho)
        out = self.dissipator(r)
        if self.free_evolution:
            out = out - 1j / self.hbar * commutator(self.basis.hamiltonian(), r)
        return out

    def liouvillian(self) -> np.ndarray:
        sup = self.dissipator_super()
        if self.free_evolution:
            sup = sup + lv.hamiltonian_super(self.basis.hamiltonian(), self.hbar)
        return sup


@dataclass(frozen=True, eq=False)
class GFGRGenerator(Generator):
    L: Optional[CoarseGrainedL] = None

    def dissipator(self, rho):
        return gfgr_apply(self.L, rho)

    def dissipator_super(self):
        return lv.double_commutator_super(self.L.matrix, self.L.matrix)


@dataclass(frozen=True, eq=False)
class ConventionalGenerator(Generator):
    hprime: Optional[np.ndarray] = None
    kernel: Optional[ConventionalKernel] = None

    def dissipator(self, rho):
        return conventional_apply(self.hprime, self.kernel, rho)

    def dissipator_super(self):
        return lv.double_commutator_super(self.hprime / self.hbar, self.kernel.matrix)


@dataclass(frozen=True, eq=False)
class ProjectedGenerator(Generator):
    amplitudes: Optional[TransitionAmplitudes] = None

    def dissipator(self, rho):
        return projected_generator_apply(self.amplitudes, rho)

    def dissipator_super(self):
        return projected_liouvillian(self.amplitudes)


def gfgr_generator(
    hprime, basis: EnergyBasis, params: CoarseGrainingParams, free_evolution: bool = True
) -> GFGRGenerator:
    L = build_coarse_grained_L(hprime, basis, params)
    return GFGRGenerator("gfgr", basis, params.hbar, free_evolution, L=L)


def conventional_generator(
    hprime,
    basis: EnergyBasis,
    eta: Optional[float] = None,
    elapsed: Optional[float] = None,
    hbar: float = 1.0,
    free_evolution: bool = True,
) -> ConventionalGenerator:
    """Completed-collision form when ``eta`` is given, finite-elapsed kernel when ``elapsed`` is."""
    if (eta is None) == (elapsed is None):
        raise ParameterError("give exactly one of eta (completed collision) or elapsed")
    h = as_matrix(hprime)
    if eta is not None:
        kernel = completed_collision_kernel(h, basis, eta, hbar)
    else:
        kernel = conventional_kernel(h, basis, elapsed, hbar)
    return ConventionalGenerator("conventional", basis, hbar, free_evolution, hprime=h, kernel=kernel)


def projected_generator(
    hprime,
    basis: EnergyBasis,
    params: CoarseGrainingParams,
    scheme: ProjectionScheme,
    free_evolution: bool = True,
) -> ProjectedGenerator:
    L = build_coarse_grained_L(hprime, basis, params)
    D = transition_amplitudes(L, scheme)
    return ProjectedGenerator("projected", basis, params.hbar, free_evolution, amplitudes=D)
