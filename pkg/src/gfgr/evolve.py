"""Time propagation: exact unitary oracle, bipartite reference and master equations."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np
from scipy.integrate import solve_ivp
from scipy.linalg import expm

from . import liouville as lv
from .core import (
    DEFAULT_DIM_CAP,
    CoarseGrainingParams,
    DimensionError,
    EnergyBasis,
    ParameterError,
    ScalingSchedule,
    ValidationError,
    as_matrix,
    dagger,
    hermiticity_defect,
    min_eigenvalue,
    purity,
    trace_norm,
    validate_state,
    von_neumann_entropy,
)
from .core import partial_trace
from .generators import Generator, gfgr_generator, projected_generator
from .projection import partial_trace_projection
from .io import write_csv

log = logging.getLogger(__name__)

METHODS = ("exact-exponential", "rk4", "adaptive", "auto")
EXP_DIM_CAP = 32
AUTO_EXP_DIM = 8


@dataclass(frozen=True)
class PropagationSpec:
    t_final: float
    dt: float
    method: str = "exact-exponential"
    record_every: int = 1

    def __post_init__(self):
        if not self.t_final > 0:
            raise ParameterError("t_final must be positive")
        if not self.dt > 0:
            raise ParameterError("dt must be positive")
        if self.method not in METHODS:
            raise ParameterError(f"unknown method {self.method!r}; expected one of {METHODS}")
        if int(self.record_every) < 1:
            raise ParameterError("record_every must be >= 1")

    @property
    def n_steps(self) -> int:
        return max(1, int(round(self.t_final / self.dt)))

    def snapshot_times(self) -> np.ndarray:
        steps = np.arange(0, self.n_steps + 1, int(self.record_every))
        if steps[-1] != self.n_steps:
            steps = np.append(steps, self.n_steps)
        return steps * self.dt


DIAGNOSTIC_COLUMNS = ("trace", "min_eigenvalue", "entropy", "purity")


def state_diagnostics(m: np.ndarray) -> dict:
    return {
        "trace": float(np.real(np.trace(m))),
        "min_eigenvalue": min_eigenvalue(m),
        "entropy": von_neumann_entropy(m),
        "purity": purity(m),
    }


@dataclass
class TrajectoryRecord:
    times: np.ndarray
    states: List[np.ndarray]
    diagnostics: List[dict] = field(default_factory=list)
    label: str = ""

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        if len(self.times) != len(self.states):
            raise ValidationError("one state per snapshot time required")
        if np.any(np.diff(self.times) <= 0):
            raise ValidationError("snapshot times must be strictly increasing")
        if not self.diagnostics:
            self.diagnostics = [state_diagnostics(s) for s in self.states]

    def __len__(self) -> int:
        return len(self.times)

    @property
    def dim(self) -> int:
        return self.states[0].shape[0]

    def column(self, name: str) -> np.ndarray:
        return np.array([d[name] for d in self.diagnostics])

    def populations(self) -> np.ndarray:
        return np.array([np.real(np.diag(s)) for s in self.states])

    def header(self) -> list:
        d = self.dim
        cols = ["time"]
        for i in range(d):
            for j in range(d):
                cols += [f"re_{i}_{j}", f"im_{i}_{j}"]
        return cols + list(DIAGNOSTIC_COLUMNS)

    def rows(self):
        for t, s, diag in zip(self.times, self.states, self.diagnostics):
            flat = np.ravel(s)
            entries = np.column_stack([flat.real, flat.imag]).ravel()
            yield [float(t), *map(float, entries), *(diag[c] for c in DIAGNOSTIC_COLUMNS)]

    def to_csv(self, path) -> None:
        write_csv(path, self.header(), self.rows())

    def to_ndjson(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for t, s, diag in zip(self.times, self.states, self.diagnostics):
                obj = {"time": float(t), "re": np.real(s).tolist(), "im": np.imag(s).tolist(), **diag}
                fh.write(json.dumps(obj) + "\n")


def _check_state(rho0) -> np.ndarray:
    m = as_matrix(rho0)
    report = validate_state(m)
    if not report.passed:
        raise ValidationError(f"invalid initial state: {report.reason()}")
    return m


def exact_trajectory(
    H_total, rho0, spec: Optional[PropagationSpec], hbar: float = 1.0,
    times: Optional[Sequence[float]] = None,
) -> TrajectoryRecord:
    """``rho(t) = U rho0 U^dag`` with ``U = exp(-i H t / hbar)`` from one eigendecomposition.

    Every snapshot is evaluated directly at its time, so nothing accumulates
    between snapshots. ``times`` overrides the PropagationSpec snapshot grid.
    """
    h = as_matrix(H_total)
    if hermiticity_defect(h) > 1e-12 * max(1.0, np.max(np.abs(h))):
        raise ValidationError("H_total is not Hermitian")
    r0 = _check_state(rho0)
    if h.shape != r0.shape:
        raise DimensionError("Hamiltonian and state dimensions differ")
    energies, v = np.linalg.eigh(0.5 * (h + dagger(h)))
    r_eig = dagger(v) @ r0 @ v
    gaps = energies[:, None] - energies[None, :]
    times = spec.snapshot_times() if times is None else np.asarray(times, dtype=float)
    states = [v @ (r_eig * np.exp(-1j * gaps * t / hbar)) @ dagger(v) for t in times]
    return TrajectoryRecord(times, states, label="exact")


def _as_hamiltonian(h) -> np.ndarray:
    h = np.asarray(h, dtype=complex)
    return np.diag(h) if h.ndim == 1 else h


def reduced_reference_trajectory(
    H_sys, H_env, H_int, omega0, rho0_sys, spec: PropagationSpec, hbar: float = 1.0,
    cap: int = DEFAULT_DIM_CAP, times: Optional[Sequence[float]] = None,
) -> TrajectoryRecord:
    """Exact evolution of ``rho_sys x omega0`` followed by the partial trace over the environment.

    ``H_sys`` and ``H_env`` may be given as energy lists (diagonal) or matrices.
    """
    hs, he = _as_hamiltonian(H_sys), _as_hamiltonian(H_env)
    ds, de = hs.shape[0], he.shape[0]
    if ds * de > cap:
        raise DimensionError(f"product dimension {ds * de} exceeds cap {cap}")
    hint = as_matrix(H_int)
    if hint.shape != (ds * de, ds * de):
        raise DimensionError(f"interaction has shape {hint.shape}, expected {(ds * de,) * 2}")
    h_total = np.kron(hs, np.eye(de)) + np.kron(np.eye(ds), he) + hint
    rho0 = np.kron(_check_state(rho0_sys), _check_state(omega0))
    traj = exact_trajectory(h_total, rho0, spec, hbar, times=times)
    reduced = [partial_trace(s, keep=0, dims=(ds, de)) for s in traj.states]
    return TrajectoryRecord(traj.times, reduced, label="reduced-exact")


def _rk4_step(fn, r: np.ndarray, dt: float) -> np.ndarray:
    k1 = fn(r)
    k2 = fn(r + 0.5 * dt * k1)
    k3 = fn(r + 0.5 * dt * k2)
    k4 = fn(r + dt * k3)
    return r + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)


def resolve_method(spec: PropagationSpec, dim: int, t_bar: Optional[float] = None) -> PropagationSpec:
    """Pick a concrete method: ``auto`` means exponential up to dim 8, rk4 with ``dt = t_bar/100`` above."""
    if spec.method == "auto":
        if dim <= AUTO_EXP_DIM:
            return PropagationSpec(spec.t_final, spec.dt, "exact-exponential", spec.record_every)
        dt = spec.dt if t_bar is None else t_bar / 100.0
        return PropagationSpec(spec.t_final, dt, "rk4", spec.record_every)
    if spec.method == "exact-exponential" and dim > EXP_DIM_CAP:
        log.warning(
            "dim %d exceeds exponential-method cap %d; falling back to rk4 stepping", dim, EXP_DIM_CAP
        )
        return PropagationSpec(spec.t_final, spec.dt, "rk4", spec.record_every)
    return spec


def propagate_master(
    generator: Generator, rho0, spec: PropagationSpec, times: Optional[Sequence[float]] = None
) -> TrajectoryRecord:
    """Integrate ``d rho/dt = generator.apply(rho)``.

    ``exact-exponential`` builds the column-stacked Liouvillian and applies
    ``expm(Liouvillian * interval)``; ``rk4`` and ``adaptive`` step with the
    direct application. ``times`` overrides the snapshot grid (exponential
    and adaptive methods only).
    """
    r0 = _check_state(rho0)
    dim = r0.shape[0]
    if generator.dim != dim:
        raise DimensionError(f"generator dim {generator.dim} does not match state dim {dim}")
    t_bar = getattr(getattr(generator, "L", None), "params", None)
    spec = resolve_method(spec, dim, t_bar.t_bar if isinstance(t_bar, CoarseGrainingParams) else None)
    snap = spec.snapshot_times() if times is None else np.asarray(times, dtype=float)

    if spec.method == "exact-exponential":
        sup = generator.liouvillian()
        states = [r0.copy()]
        v = lv.vec(r0)
        intervals = np.diff(snap)
        cache = {}
        for h in intervals:
            key = round(float(h), 12)
            if key not in cache:
                cache[key] = expm(sup * h)
            v = cache[key] @ v
            states.append(lv.unvec(v, dim))
        if times is not None and snap[0] != 0.0:
            raise ParameterError("custom snapshot grids must start at t = 0")
        return TrajectoryRecord(snap, states, label=generator.kind)

    if spec.method == "adaptive":
        def rhs(_t, y):
            return lv.vec(generator.apply(lv.unvec(y, dim)))
        sol = solve_ivp(rhs, (snap[0], snap[-1]), lv.vec(r0), method="DOP853",
                        t_eval=snap, rtol=1e-11, atol=1e-13)
        if not sol.success:
            raise FloatingPointError(sol.message)
        states = [lv.unvec(sol.y[:, k], dim) for k in range(sol.y.shape[1])]
        return TrajectoryRecord(sol.t, states, label=generator.kind)

    if times is not None:
        raise ParameterError("rk4 propagation uses the fixed PropagationSpec snapshot grid")
    r = r0.copy()
    states = [r.copy()]
    for step in range(1, spec.n_steps + 1):
        r = _rk4_step(generator.apply, r, spec.dt)
        if not np.all(np.isfinite(r)):
            raise FloatingPointError(f"non-finite state at step {step}")
        if step % int(spec.record_every) == 0 or step == spec.n_steps:
            states.append(r.copy())
    return TrajectoryRecord(spec.snapshot_times(), states, label=generator.kind)


def trajectory_distance(a: TrajectoryRecord, b: TrajectoryRecord) -> float:
    """Maximum trace-norm distance over common snapshots."""
    if len(a) != len(b) or not np.allclose(a.times, b.times):
        raise ValidationError("trajectories must share the snapshot grid")
    return max(trace_norm(x - y) for x, y in zip(a.states, b.states))


@dataclass(frozen=True, eq=False)
class BipartiteModel:
    """System plus finite environment for the exact reduced-dynamics oracle.

    ``interaction`` is the unscaled coupling on the product space; the scan
    multiplies it by ``g``.
    """

    system_energies: tuple
    env_energies: tuple
    interaction: np.ndarray
    omega0: np.ndarray
    rho0_sys: np.ndarray
    hbar: float = 1.0

    def __post_init__(self):
        ds, de = len(self.system_energies), len(self.env_energies)
        inter = as_matrix(self.interaction)
        if inter.shape != (ds * de, ds * de):
            raise DimensionError("interaction does not act on the product space")
        if hermiticity_defect(inter) > 1e-12:
            raise ValidationError("interaction is not Hermitian")
        object.__setattr__(self, "interaction", inter)
        object.__setattr__(self, "omega0", _check_state(self.omega0))
        object.__setattr__(self, "rho0_sys", _check_state(self.rho0_sys))

    @property
    def dims(self) -> tuple:
        return len(self.system_energies), len(self.env_energies)

    @property
    def basis(self) -> EnergyBasis:
        return EnergyBasis.product(EnergyBasis(self.system_energies), EnergyBasis(self.env_energies))

    def gfgr_reduced(self, g: float, t_bar: float, times, projection: str = "partial_trace") -> TrajectoryRecord:
        ds, de = self.dims
        basis = self.basis
        params = CoarseGrainingParams(t_bar, self.hbar)
        hprime = g * self.interaction
        if projection == "partial_trace":
            scheme = partial_trace_projection(ds, de, self.omega0)
            gen = projected_generator(hprime, basis, params, scheme)
        elif projection == "none":
            gen = gfgr_generator(hprime, basis, params)
        else:
            raise ParameterError(f"unknown projection {projection!r}")
        rho0 = np.kron(self.rho0_sys, self.omega0)
        traj = propagate_master(gen, rho0, PropagationSpec(float(times[-1]), float(times[-1])), times=times)
        reduced = [partial_trace(s, keep=0, dims=(ds, de)) for s in traj.states]
        return TrajectoryRecord(traj.times, reduced, label="gfgr-reduced")

    def exact_reduced(self, g: float, times) -> TrajectoryRecord:
        return reduced_reference_trajectory(
            self.system_energies, self.env_energies, g * self.interaction, self.omega0,
            self.rho0_sys, None, self.hbar, times=times,
        )


@dataclass(frozen=True)
class ScanRow:
    g: float
    t_bar: float
    distance_rescaled: float
    distance_unscaled: float


@dataclass
class ScanReport:
    rows: List[ScanRow]
    tau_final: float
    t_final_unscaled: float
    xi: float
    T_ref: float

    def distances(self) -> np.ndarray:
        return np.array([r.distance_rescaled for r in self.rows if r.g > 0])

    def header(self):
        return ["g", "t_bar", "distance_rescaled", "distance_unscaled"]

    def table(self):
        for r in self.rows:
            yield [r.g, r.t_bar, r.distance_rescaled, r.distance_unscaled]

    def to_csv(self, path) -> None:
        write_csv(path, self.header(), self.table())


def weak_coupling_scan(
    model: BipartiteModel,
    schedule: ScalingSchedule,
    tau_final: float,
    n_snapshots: int = 41,
    t_final_unscaled: Optional[float] = None,
    projection: str = "partial_trace",
    include_zero_row: bool = False,
) -> ScanReport:
    """Compare coarse-grained and exact reduced dynamics along ``t_bar = T_ref g**(-xi)``.

    Distances are maxima of the trace-norm distance over snapshots on the
    rescaled clock ``tau = g**2 t`` (``tau`` in ``[0, tau_final]``), plus the
    same maximum on an unscaled clock ``t`` in ``[0, t_final_unscaled]``.
    """
    if tau_final <= 0:
        raise ParameterError("tau_final must be positive")
    t_unscaled = tau_final if t_final_unscaled is None else t_final_unscaled
    tau = np.linspace(0.0, tau_final, n_snapshots)
    t_plain = np.linspace(0.0, t_unscaled, n_snapshots)
    rows = []
    if include_zero_row:
        a = model.gfgr_reduced(0.0, schedule.T_ref, t_plain, projection)
        b = model.exact_reduced(0.0, t_plain)
        d0 = trajectory_distance(a, b)
        rows.append(ScanRow(0.0, float("inf"), d0, d0))
    for g in schedule.g_values:
        t_bar = schedule.t_bar(g)
        times = tau / g**2
        d_resc = trajectory_distance(
            model.gfgr_reduced(g, t_bar, times, projection), model.exact_reduced(g, times)
        )
        d_plain = trajectory_distance(
            model.gfgr_reduced(g, t_bar, t_plain, projection), model.exact_reduced(g, t_plain)
        )
        rows.append(ScanRow(g, t_bar, d_resc, d_plain))
        log.info("scan g=%g t_bar=%g distance=%.3e", g, t_bar, d_resc)
    return ScanReport(rows, tau_final, t_unscaled, schedule.xi, schedule.T_ref)


@dataclass
class WitnessResult:
    """Worst positivity violation found for the conventional completed-collision generator."""

    min_eigenvalue: float
    energies: tuple
    hprime: np.ndarray
    eta: float
    psi0: np.ndarray
    t_final: float
    dt: float
    seed: int
    trials: int


def search_positivity_witness(
    seed: int,
    n_trials: int = 200,
    dims: Sequence[int] = (2, 3),
    coupling_scale: float = 0.2,
    eta_range: tuple = (0.05, 1.0),
    energy_range: tuple = (0.0, 2.0),
    t_final: float = 20.0,
    dt: float = 0.05,
) -> WitnessResult:
    """Random search over small conventional-Markov problems for the most negative eigenvalue.

    Each trial draws a dimension from ``dims``, sorted energies, a random
    Hermitian ``H'``, a delta width ``eta`` and a pure initial state, then
    propagates exactly (Liouvillian exponential) and records the minimum
    eigenvalue over the trajectory.
    """
    from .core import random_hermitian
    from .generators import conventional_generator

    rng = np.random.default_rng(seed)
    spec = PropagationSpec(t_final, dt, "exact-exponential")
    best = None
    for _ in range(n_trials):
        d = int(rng.choice(dims))
        energies = tuple(np.sort(rng.uniform(*energy_range, size=d)))
        h = random_hermitian(d, rng, coupling_scale)
        eta = float(rng.uniform(*eta_range))
        psi = rng.normal(size=d) + 1j * rng.normal(size=d)
        psi /= np.linalg.norm(psi)
        gen = conventional_generator(h, EnergyBasis(energies), eta=eta)
        traj = propagate_master(gen, np.outer(psi, psi.conj()), spec)
        worst = float(traj.column("min_eigenvalue").min())
        if best is None or worst < best.min_eigenvalue:
            best = WitnessResult(worst, energies, h, eta, psi, t_final, dt, seed, n_trials)
    return best
