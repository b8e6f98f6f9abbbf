"""Audits: positivity along trajectories, T3 extraction, FGR convergence, generator distances."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import mpmath
import numpy as np

from .core import CoarseGrainingParams, DimensionError, EnergyBasis, ValidationError
from .evolve import TrajectoryRecord
from .generators import Generator
from .io import write_csv, write_ndjson
from .superop import smoothed_fgr_rates


@dataclass
class PositivityAudit:
    times: np.ndarray
    min_eigenvalues: np.ndarray
    threshold: float

    @property
    def global_min(self) -> float:
        return float(np.min(self.min_eigenvalues))

    @property
    def violated(self) -> bool:
        return self.global_min < self.threshold

    @property
    def first_violation_time(self) -> Optional[float]:
        idx = np.flatnonzero(self.min_eigenvalues < self.threshold)
        return float(self.times[idx[0]]) if len(idx) else None

    def to_csv(self, path) -> None:
        write_csv(path, ["time", "min_eigenvalue", "violation"],
                  ([float(t), float(m), int(m < self.threshold)]
                   for t, m in zip(self.times, self.min_eigenvalues)))


def positivity_audit(traj: TrajectoryRecord, threshold: float = -1e-10) -> PositivityAudit:
    mins = np.array([np.linalg.eigvalsh(0.5 * (s + s.conj().T))[0] for s in traj.states])
    return PositivityAudit(traj.times.copy(), mins, threshold)


# Bloch-like coordinates for a 2x2 state in column-stacked form
# vec(rho) = (rho00, rho10, rho01, rho11):
#   s = rho00 + rho11, z = rho00 - rho11, x = Re rho01, y = Im rho01
_BLOCH = np.array(
    [
        [1, 0, 0, 1],
        [1, 0, 0, -1],
        [0, 0.5, 0.5, 0],
        [0, 0.5j, -0.5j, 0],
    ],
    dtype=complex,
)


@dataclass
class T3Report:
    """Population/coherence couplings of a two-level generator.

    ``matrix`` is the 3x3 block over ``(z, Re rho01, Im rho01)``;
    ``t3_pop_from_coh`` is row ``z`` / coherence columns and
    ``t3_coh_from_pop`` the transpose position.
    """

    matrix: np.ndarray
    drive: np.ndarray
    t3_pop_from_coh: float
    t3_coh_from_pop: float
    t1_rate: float
    t2_rate: float

    @property
    def t3_norm(self) -> float:
        return math.hypot(self.t3_pop_from_coh, self.t3_coh_from_pop)

    @property
    def T1(self) -> float:
        return 1.0 / self.t1_rate if self.t1_rate > 0 else math.inf

    @property
    def T2(self) -> float:
        return 1.0 / self.t2_rate if self.t2_rate > 0 else math.inf


def bloch_liouvillian(sup: np.ndarray) -> np.ndarray:
    """Express a 4x4 column-stacked Liouvillian in ``(s, z, x, y)`` coordinates."""
    if sup.shape != (4, 4):
        raise DimensionError("two-level Liouvillian must be 4x4")
    m = _BLOCH @ sup @ np.linalg.inv(_BLOCH)
    return np.real_if_close(m, tol=1e6).real


def t3_coefficient(generator) -> T3Report:
    """T1, T2 and T3 blocks of a two-level generator (or of a raw 4x4 Liouvillian)."""
    sup = generator.liouvillian() if isinstance(generator, Generator) else np.asarray(generator)
    if sup.shape != (4, 4):
        raise DimensionError(f"t3_coefficient needs a two-level generator, got Liouvillian {sup.shape}")
    m = bloch_liouvillian(sup)
    inner = m[1:, 1:]
    return T3Report(
        matrix=inner,
        drive=m[1:, 0].copy(),
        t3_pop_from_coh=float(np.linalg.norm(inner[0, 1:])),
        t3_coh_from_pop=float(np.linalg.norm(inner[1:, 0])),
        t1_rate=float(-inner[0, 0]),
        t2_rate=float(-0.5 * np.trace(inner[1:, 1:])),
    )


@dataclass
class GeneratorAudit:
    kinds: tuple
    spectral: float
    frobenius: float
    blocks: dict = field(default_factory=dict)

    def block_sum(self) -> float:
        return sum(self.blocks.values())

    def rows(self):
        yield ["full", self.spectral, self.frobenius]
        for name, val in self.blocks.items():
            yield [name, val, float("nan")]

    def to_csv(self, path) -> None:
        write_csv(path, ["sector", "spectral_norm", "frobenius_norm"], self.rows())


def _sector_indices(dim: int):
    diag = np.array([i * (dim + 1) for i in range(dim)])
    off = np.setdiff1d(np.arange(dim * dim), diag)
    return diag, off


def generator_distance(gen_a, gen_b) -> GeneratorAudit:
    """Spectral and Frobenius distance between Liouvillians, split by population/coherence sectors."""
    if isinstance(gen_a, Generator) and isinstance(gen_b, Generator):
        if gen_a.basis != gen_b.basis:
            raise ValidationError("generators live in different bases")
    la = gen_a.liouvillian() if isinstance(gen_a, Generator) else np.asarray(gen_a)
    lb = gen_b.liouvillian() if isinstance(gen_b, Generator) else np.asarray(gen_b)
    if la.shape != lb.shape:
        raise DimensionError("Liouvillians have different shapes")
    diff = la - lb
    dim = int(round(math.sqrt(diff.shape[0])))
    pop, coh = _sector_indices(dim)
    sectors = {"pop<-pop": (pop, pop), "pop<-coh": (pop, coh), "coh<-pop": (coh, pop), "coh<-coh": (coh, coh)}
    blocks = {}
    for name, (r, c) in sectors.items():
        sub = diff[np.ix_(r, c)]
        blocks[name] = float(np.linalg.norm(sub, 2)) if sub.size else 0.0
    kinds = (getattr(gen_a, "kind", "matrix"), getattr(gen_b, "kind", "matrix"))
    return GeneratorAudit(kinds, float(np.linalg.norm(diff, 2)), float(np.linalg.norm(diff)), blocks)


@dataclass(frozen=True)
class Ladder:
    """Quasi-continuum: equally spaced levels with uniform coupling magnitude on every entry."""

    delta: float
    width: float
    coupling: float
    hbar: float = 1.0

    @property
    def n_levels(self) -> int:
        return int(round(self.width / self.delta)) + 1

    def basis(self) -> EnergyBasis:
        half = (self.n_levels - 1) / 2.0
        return EnergyBasis(tuple((np.arange(self.n_levels) - half) * self.delta))

    def hprime(self) -> np.ndarray:
        return np.full((self.n_levels, self.n_levels), self.coupling, dtype=complex)

    def golden_rule_rate(self) -> float:
        """``(2 pi / hbar) |H'|^2 / delta`` with density of states ``1 / delta``."""
        return 2.0 * math.pi / self.hbar * self.coupling**2 / self.delta


@dataclass
class ConvergenceRow:
    eps_bar: float
    delta: float
    width: float
    total_rate: float
    out_rate: float
    golden_rule: float
    rel_error: float
    rel_error_out: float
    rel_error_extended: Optional[float]
    flag: str

    def as_dict(self) -> dict:
        return dict(self.__dict__)


COLUMNS = ("eps_bar", "delta", "width", "total_rate", "out_rate", "golden_rule",
           "rel_error", "rel_error_out", "rel_error_extended", "flag")


def _extended_rel_error(ladder: Ladder, eps_bar: float, dps: int = 50) -> float:
    """Relative error of the full Gaussian ladder sum evaluated with ``dps`` digits."""
    with mpmath.workdps(dps):
        n = ladder.n_levels
        centre = (n - 1) // 2
        delta = mpmath.mpf(ladder.delta)
        eps = mpmath.mpf(eps_bar)
        norm = 1 / (mpmath.sqrt(2 * mpmath.pi) * eps)
        total = mpmath.fsum(norm * mpmath.exp(-((k - centre) * delta) ** 2 / (2 * eps**2)) for k in range(n))
        return float(total * delta - 1)


def fgr_convergence(
    ladder: Ladder, eps_bar_grid: Sequence[float], separation: float = 3.0, extended: bool = False
) -> List[ConvergenceRow]:
    """Summed smoothed rates out of the central ladder level versus the golden-rule value.

    ``total_rate`` sums every final level, including the zero-gap term;
    ``out_rate`` leaves the initial level out. A row is flagged when the
    scale separation ``delta * separation <= eps_bar <= width / separation``
    fails. ``extended`` adds the relative error of ``total_rate`` computed in
    50-digit arithmetic (the double-precision value is at round-off once the
    Gaussian spans many levels).
    """
    basis = ladder.basis()
    h = ladder.hprime()
    centre = (ladder.n_levels - 1) // 2
    exact = ladder.golden_rule_rate()
    rows = []
    for eps in eps_bar_grid:
        rates = smoothed_fgr_rates(h, basis, CoarseGrainingParams.from_eps_bar(eps, ladder.hbar)).matrix
        column = rates[centre]
        total = math.fsum(column)
        out = total - column[centre]
        flags = []
        if eps < separation * ladder.delta:
            flags.append("eps_bar not >> delta")
        if eps > ladder.width / separation:
            flags.append("eps_bar not << width")
        if exact == 0:
            flags.append("undefined: zero coupling")
            err = err_out = float("nan")
        else:
            err = abs(total - exact) / exact
            err_out = abs(out - exact) / exact
        ext = None
        if extended and exact != 0:
            ext = abs(_extended_rel_error(ladder, eps))
        rows.append(ConvergenceRow(float(eps), ladder.delta, ladder.width, total, out, exact,
                                   err, err_out, ext, "; ".join(flags)))
    return rows


def convergence_to_csv(rows: Sequence[ConvergenceRow], path) -> None:
    write_csv(path, COLUMNS, ([r.as_dict()[c] for c in COLUMNS] for r in rows))


def convergence_to_ndjson(rows: Sequence[ConvergenceRow], path) -> None:
    write_ndjson(path, (r.as_dict() for r in rows))


def loglog_slope(x: Sequence[float], y: Sequence[float]) -> float:
    return float(np.polyfit(np.log(x), np.log(y), 1)[0])
