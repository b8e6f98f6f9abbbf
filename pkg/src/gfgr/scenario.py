"""Declarative scenario files: parsing, validation, serialisation.

Scenarios are YAML documents. Matrices are written as lists of rows, each
row a list of ``[re, im]`` pairs; a bare number is accepted as a real entry.
See ``README.md`` for the full grammar and ``gfgr/scenarios/`` for examples.
"""

from __future__ import annotations

import copy
import hashlib
import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional

import numpy as np
import yaml

from .core import (
    CoarseGrainingParams,
    CouplingOperator,
    EnergyBasis,
    GFGRError,
    Tolerances,
    validate_state,
)
from .evolve import METHODS, PropagationSpec

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_NUMERICAL = 3
EXIT_IO = 4
EXIT_SYNTAX = 5
EXIT_MISSING = 6

GENERATOR_KINDS = ("gfgr", "conventional", "projected")
PROJECTION_KINDS = ("block", "partial_trace", "trivial")
FORMATS = ("csv", "ndjson")
TOP_LEVEL_KEYS = ("name", "seed", "hbar", "basis", "coupling", "coarse_graining", "generators",
                  "free_evolution", "conventional", "initial_state", "projection", "propagation",
                  "oracle", "outputs", "tolerances", "metadata")
_STEM = re.compile(r"^[A-Za-z0-9][A-Za-z0-9._-]*$")


@dataclass
class Diagnostic:
    path: str
    reason: str
    code: int = EXIT_VALIDATION

    def __str__(self) -> str:
        return f"{self.path}: {self.reason}"


class ScenarioError(GFGRError):
    """Scenario could not be parsed; carries every diagnostic found."""

    def __init__(self, diagnostics: List[Diagnostic]):
        self.diagnostics = diagnostics
        super().__init__("; ".join(str(d) for d in diagnostics))

    @property
    def exit_code(self) -> int:
        codes = {d.code for d in self.diagnostics}
        for code in (EXIT_SYNTAX, EXIT_MISSING, EXIT_VALIDATION, EXIT_IO):
            if code in codes:
                return code
        return EXIT_VALIDATION


def matrix_from_rows(rows, path: str = "matrix") -> np.ndarray:
    if not isinstance(rows, list) or not rows or not all(isinstance(r, list) for r in rows):
        raise ValueError(f"{path} must be a list of rows")
    n = len(rows)
    out = np.zeros((n, n), dtype=complex)
    for i, row in enumerate(rows):
        if len(row) != n:
            raise ValueError(f"{path} row {i} has {len(row)} entries, expected {n}")
        for j, v in enumerate(row):
            if isinstance(v, (int, float)) and not isinstance(v, bool):
                out[i, j] = float(v)
            elif isinstance(v, list) and len(v) == 2 and all(isinstance(x, (int, float)) for x in v):
                out[i, j] = complex(float(v[0]), float(v[1]))
            else:
                raise ValueError(f"{path}[{i}][{j}] must be a number or an [re, im] pair")
    return out


def matrix_to_rows(m: np.ndarray) -> list:
    m = np.asarray(m, dtype=complex)
    return [[[float(v.real), float(v.imag)] for v in row] for row in m]


def vector_from_pairs(vals, path: str) -> np.ndarray:
    out = []
    for k, v in enumerate(vals):
        if isinstance(v, (int, float)) and not isinstance(v, bool):
            out.append(complex(float(v)))
        elif isinstance(v, list) and len(v) == 2:
            out.append(complex(float(v[0]), float(v[1])))
        else:
            raise ValueError(f"{path}[{k}] must be a number or an [re, im] pair")
    return np.asarray(out)


@dataclass
class Scenario:
    name: str
    seed: int
    energies: tuple
    coupling: np.ndarray
    g: float = 1.0
    hbar: float = 1.0
    t_bar: Optional[float] = None
    eps_bar: Optional[float] = None
    generators: tuple = ("gfgr",)
    free_evolution: bool = True
    conventional: Dict[str, Any] = field(default_factory=lambda: {"mode": "completed"})
    initial_state: Optional[np.ndarray] = None
    projection: Optional[Dict[str, Any]] = None
    propagation: Optional[PropagationSpec] = None
    oracle: Optional[Dict[str, Any]] = None
    outputs: Dict[str, Any] = field(default_factory=lambda: {"dir": "out", "formats": ["csv", "ndjson"]})
    tolerances: Tolerances = field(default_factory=Tolerances)
    metadata: Dict[str, Any] = field(default_factory=dict)
    source: Optional[str] = None

    @property
    def params(self) -> CoarseGrainingParams:
        if self.t_bar is not None:
            return CoarseGrainingParams(self.t_bar, self.hbar)
        return CoarseGrainingParams.from_eps_bar(self.eps_bar, self.hbar)

    @property
    def basis(self) -> EnergyBasis:
        return EnergyBasis(self.energies)

    @property
    def coupling_operator(self) -> CouplingOperator:
        return CouplingOperator(self.coupling, self.basis, self.g)

    @property
    def eta(self) -> float:
        """Delta width of the completed-collision conventional run (defaults to ``eps_bar``)."""
        eta = self.conventional.get("eta")
        return float(eta) if eta is not None else self.params.eps_bar

    def to_dict(self) -> dict:
        d: Dict[str, Any] = {"name": self.name, "seed": int(self.seed), "hbar": float(self.hbar)}
        d["basis"] = {"energies": [float(e) for e in self.energies]}
        d["coupling"] = {"g": float(self.g), "matrix": matrix_to_rows(self.coupling)}
        cg = {"t_bar": float(self.t_bar)} if self.t_bar is not None else {"eps_bar": float(self.eps_bar)}
        d["coarse_graining"] = cg
        d["generators"] = list(self.generators)
        d["free_evolution"] = bool(self.free_evolution)
        d["conventional"] = copy.deepcopy(self.conventional)
        if self.initial_state is not None:
            d["initial_state"] = {"matrix": matrix_to_rows(self.initial_state)}
        if self.projection is not None:
            proj = copy.deepcopy(self.projection)
            if "omega" in proj:
                proj["omega"] = matrix_to_rows(proj["omega"])
            d["projection"] = proj
        p = self.propagation
        d["propagation"] = {"t_final": p.t_final, "dt": p.dt, "method": p.method, "record_every": int(p.record_every)}
        if self.oracle is not None:
            o = copy.deepcopy(self.oracle)
            for key in ("interaction", "omega0", "rho0_sys"):
                o[key] = matrix_to_rows(o[key])
            d["oracle"] = o
        d["outputs"] = copy.deepcopy(self.outputs)
        d["tolerances"] = dict(self.tolerances.__dict__)
        if self.metadata:
            d["metadata"] = copy.deepcopy(self.metadata)
        return d

    def dumps(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=False, default_flow_style=None, width=100)

    def digest(self) -> str:
        canon = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()


class _Collector:
    def __init__(self):
        self.items: List[Diagnostic] = []

    def add(self, path, reason, code=EXIT_VALIDATION):
        self.items.append(Diagnostic(path, reason, code))

    def require(self, mapping, key, path):
        if not isinstance(mapping, dict) or key not in mapping:
            self.add(f"{path}.{key}" if path else key, "missing required field", EXIT_MISSING)
            return None
        return mapping[key]


def _hermitian_check(m: np.ndarray, path: str, what: str, diag: _Collector, tol: float) -> None:
    bad = np.argwhere(np.abs(m - m.conj().T) > tol)
    if len(bad):
        i, j = bad[0]
        diag.add(path, f"{what} not Hermitian: entry [{i}][{j}] = {m[i, j]} but entry [{j}][{i}] = {m[j, i]}")


def parse_scenario(path) -> Scenario:
    """Read and validate a scenario file. Raises :class:`ScenarioError` with all diagnostics."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ScenarioError([Diagnostic(str(path), f"cannot read file: {exc}", EXIT_IO)]) from None
    scenario = loads(text)
    scenario.source = str(path)
    return scenario


def loads(text: str) -> Scenario:
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ScenarioError([Diagnostic("<document>", f"malformed syntax: {exc}", EXIT_SYNTAX)]) from None
    if not isinstance(raw, dict):
        raise ScenarioError([Diagnostic("<document>", "top level must be a mapping", EXIT_SYNTAX)])
    return from_dict(raw)


def from_dict(raw: dict) -> Scenario:
    diag = _Collector()
    for key in sorted(set(raw) - set(TOP_LEVEL_KEYS)):
        diag.add(key, "unknown field")

    tol_raw = raw.get("tolerances") or {}
    try:
        tol = Tolerances().updated(**tol_raw)
    except (TypeError, ValueError) as exc:
        diag.add("tolerances", f"invalid tolerances: {exc}")
        tol = Tolerances()

    name = diag.require(raw, "name", "")
    if name is not None and (not isinstance(name, str) or not _STEM.match(name)):
        diag.add("name", f"{name!r} is not a valid file stem")
    seed = diag.require(raw, "seed", "")
    if seed is not None and (not isinstance(seed, int) or isinstance(seed, bool)):
        diag.add("seed", "seed must be an integer")
    hbar = float(raw.get("hbar", 1.0))
    if hbar <= 0:
        diag.add("hbar", "hbar must be positive")

    energies = None
    basis_raw = diag.require(raw, "basis", "")
    if basis_raw is not None:
        e = diag.require(basis_raw, "energies", "basis")
        if e is not None:
            try:
                energies = tuple(EnergyBasis(tuple(float(x) for x in e)).energies)
            except (TypeError, ValueError, GFGRError) as exc:
                diag.add("basis.energies", str(exc))

    coupling, g = None, 1.0
    c_raw = diag.require(raw, "coupling", "")
    if c_raw is not None:
        g = float(c_raw.get("g", 1.0))
        if g < 0:
            diag.add("coupling.g", "g must be nonnegative")
        m = diag.require(c_raw, "matrix", "coupling")
        if m is not None:
            try:
                coupling = matrix_from_rows(m, "coupling.matrix")
                _hermitian_check(coupling, "coupling.matrix", "coupling", diag, tol.hermiticity)
                if energies is not None and coupling.shape[0] != len(energies):
                    diag.add("coupling.matrix", f"dimension {coupling.shape[0]} does not match {len(energies)} energies")
            except ValueError as exc:
                diag.add("coupling.matrix", str(exc))
                coupling = None

    t_bar = eps_bar = None
    cg = diag.require(raw, "coarse_graining", "")
    if cg is not None:
        has_t, has_e = "t_bar" in cg, "eps_bar" in cg
        if has_t == has_e:
            diag.add("coarse_graining", "give exactly one of t_bar or eps_bar")
        elif has_t:
            t_bar = float(cg["t_bar"])
            if t_bar <= 0:
                diag.add("coarse_graining.t_bar", "t_bar must be positive")
        else:
            eps_bar = float(cg["eps_bar"])
            if eps_bar <= 0:
                diag.add("coarse_graining.eps_bar", "eps_bar must be positive")

    gens = tuple(raw.get("generators", ["gfgr"]))
    for k in gens:
        if k not in GENERATOR_KINDS:
            diag.add("generators", f"unknown generator kind {k!r}")

    conv = dict(raw.get("conventional") or {"mode": "completed"})
    conv.setdefault("mode", "completed")
    if conv["mode"] not in ("completed", "finite"):
        diag.add("conventional.mode", "mode must be 'completed' or 'finite'")
    if conv["mode"] == "finite" and "conventional" in gens and not conv.get("elapsed"):
        diag.add("conventional.elapsed", "missing required field", EXIT_MISSING)
    if conv.get("eta") is not None and float(conv["eta"]) <= 0:
        diag.add("conventional.eta", "eta must be positive")

    dim = len(energies) if energies is not None else None
    rho0 = None
    init = raw.get("initial_state")
    if init is None:
        diag.add("initial_state", "missing required field", EXIT_MISSING)
    else:
        try:
            if "matrix" in init:
                rho0 = matrix_from_rows(init["matrix"], "initial_state.matrix")
            elif "pure" in init:
                psi = vector_from_pairs(init["pure"], "initial_state.pure")
                psi = psi / np.linalg.norm(psi)
                rho0 = np.outer(psi, psi.conj())
            elif "populations" in init:
                rho0 = np.diag(np.asarray(init["populations"], dtype=float)).astype(complex)
            else:
                diag.add("initial_state", "expected one of matrix, pure, populations", EXIT_MISSING)
            if rho0 is not None:
                rep = validate_state(rho0, tol)
                if not rep.passed:
                    diag.add("initial_state", f"not a valid density matrix ({rep.reason()})")
                if dim is not None and rho0.shape[0] != dim:
                    diag.add("initial_state", f"dimension {rho0.shape[0]} does not match {dim} energies")
        except (ValueError, TypeError) as exc:
            diag.add("initial_state", str(exc))

    projection = raw.get("projection")
    if projection is not None:
        projection = dict(projection)
        kind = projection.get("kind")
        if kind not in PROJECTION_KINDS:
            diag.add("projection.kind", f"expected one of {PROJECTION_KINDS}")
        elif kind == "block" and "blocks" not in projection:
            diag.add("projection.blocks", "missing required field", EXIT_MISSING)
        elif kind == "partial_trace":
            for key in ("system_dim", "env_dim", "omega"):
                if key not in projection:
                    diag.add(f"projection.{key}", "missing required field", EXIT_MISSING)
            if "omega" in projection:
                try:
                    projection["omega"] = matrix_from_rows(projection["omega"], "projection.omega")
                    rep = validate_state(projection["omega"], tol)
                    if not rep.passed:
                        diag.add("projection.omega", f"not a valid environment state ({rep.reason()})")
                except ValueError as exc:
                    diag.add("projection.omega", str(exc))
    if "projected" in gens and projection is None:
        diag.add("projection", "generator 'projected' needs a projection", EXIT_MISSING)

    spec = None
    p_raw = diag.require(raw, "propagation", "")
    if p_raw is not None:
        t_final = diag.require(p_raw, "t_final", "propagation")
        dt = diag.require(p_raw, "dt", "propagation")
        method = p_raw.get("method", "exact-exponential")
        if method not in METHODS:
            diag.add("propagation.method", f"expected one of {METHODS}")
        elif t_final is not None and dt is not None:
            try:
                spec = PropagationSpec(float(t_final), float(dt), method, int(p_raw.get("record_every", 1)))
            except GFGRError as exc:
                diag.add("propagation", str(exc))

    oracle = raw.get("oracle")
    if oracle is not None:
        oracle = dict(oracle)
        for key in ("system_energies", "env_energies", "interaction", "omega0", "rho0_sys"):
            if key not in oracle:
                diag.add(f"oracle.{key}", "missing required field", EXIT_MISSING)
        for key in ("interaction", "omega0", "rho0_sys"):
            if key in oracle:
                try:
                    oracle[key] = matrix_from_rows(oracle[key], f"oracle.{key}")
                except ValueError as exc:
                    diag.add(f"oracle.{key}", str(exc))
        if isinstance(oracle.get("interaction"), np.ndarray):
            _hermitian_check(oracle["interaction"], "oracle.interaction", "interaction", diag, tol.hermiticity)

    outputs = dict(raw.get("outputs") or {})
    outputs.setdefault("dir", "out")
    outputs.setdefault("formats", ["csv", "ndjson"])
    for f in outputs["formats"]:
        if f not in FORMATS:
            diag.add("outputs.formats", f"unknown format {f!r}")

    if diag.items:
        raise ScenarioError(diag.items)
    return Scenario(
        name=name, seed=seed, energies=energies, coupling=coupling, g=g, hbar=hbar,
        t_bar=t_bar, eps_bar=eps_bar, generators=gens, free_evolution=bool(raw.get("free_evolution", True)),
        conventional=conv, initial_state=rho0, projection=projection, propagation=spec,
        oracle=oracle, outputs=outputs, tolerances=tol, metadata=dict(raw.get("metadata") or {}),
    )


def scenarios_equal(a: Scenario, b: Scenario) -> bool:
    return a.to_dict() == b.to_dict()


def shipped_scenarios() -> Dict[str, Path]:
    """Scenario files bundled with the package, keyed by stem."""
    root = Path(__file__).parent / "scenarios"
    return {p.stem: p for p in sorted(root.glob("*.yaml"))}
