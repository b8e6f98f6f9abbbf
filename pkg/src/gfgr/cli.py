"""Batch runner: ``gfgr {run,validate,scan,audit,rates,witness} ...``.

Every command that writes files puts them under ``<out-dir>/<scenario name>/``
together with ``manifest-<command>.yaml`` listing each file with its sha256.
"""

from __future__ import annotations

import argparse
import hashlib
import logging
import platform
import sys
import tempfile
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np
import scipy
import yaml

from . import __version__
from .core import GFGRError, ScalingSchedule
from .diagnostics import generator_distance, positivity_audit, t3_coefficient
from .evolve import BipartiteModel, propagate_master, search_positivity_witness, weak_coupling_scan
from .generators import conventional_generator, gfgr_generator, projected_generator
from .io import write_csv, write_ndjson
from .projection import block_projection, first_order_check, partial_trace_projection, trivial_projection
from .scenario import (
    EXIT_IO,
    EXIT_NUMERICAL,
    EXIT_OK,
    EXIT_VALIDATION,
    Scenario,
    ScenarioError,
    matrix_to_rows,
    parse_scenario,
)
from .superop import (
    RATE_TENSOR_DIM_CAP,
    build_coarse_grained_L,
    conventional_rate_tensor,
    fgr_rates,
    gfgr_rate_tensor,
    smoothed_fgr_rates,
)

log = logging.getLogger("gfgr")


class OutputError(GFGRError):
    pass


@dataclass
class RunResult:
    exit_code: int
    out_dir: Optional[Path] = None
    files: List[str] = field(default_factory=list)
    failures: List[dict] = field(default_factory=list)
    summary: Dict[str, dict] = field(default_factory=dict)


def prepare_output_dir(path: Path) -> Path:
    """Create ``path`` and prove it is writable, before any computation."""
    try:
        path.mkdir(parents=True, exist_ok=True)
        with tempfile.NamedTemporaryFile(dir=path, prefix=".probe-"):
            pass
    except OSError as exc:
        raise OutputError(f"output directory {path} is not writable: {exc}") from None
    return path


def sha256_file(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def build_scheme(s: Scenario):
    p = s.projection
    if p is None:
        return None
    if p["kind"] == "trivial":
        return trivial_projection(len(s.energies))
    if p["kind"] == "block":
        return block_projection(p["blocks"], len(s.energies))
    return partial_trace_projection(int(p["system_dim"]), int(p["env_dim"]), p["omega"], s.tolerances)


def build_generator(s: Scenario, kind: str, scheme=None):
    h, basis, params = s.coupling_operator.scaled, s.basis, s.params
    if kind == "gfgr":
        return gfgr_generator(h, basis, params, s.free_evolution)
    if kind == "projected":
        return projected_generator(h, basis, params, scheme, s.free_evolution)
    if s.conventional["mode"] == "finite":
        return conventional_generator(h, basis, elapsed=float(s.conventional["elapsed"]),
                                      hbar=s.hbar, free_evolution=s.free_evolution)
    return conventional_generator(h, basis, eta=s.eta, hbar=s.hbar, free_evolution=s.free_evolution)


class _Writer:
    """Tracks every file written for the manifest."""

    def __init__(self, root: Path, formats):
        self.root = root
        self.formats = tuple(formats)
        self.files: List[str] = []

    def path(self, name: str) -> Path:
        self.files.append(name)
        return self.root / name

    def table(self, stem: str, header, rows) -> None:
        rows = [list(r) for r in rows]
        if "csv" in self.formats:
            write_csv(self.path(f"{stem}.csv"), header, rows)
        if "ndjson" in self.formats:
            write_ndjson(self.path(f"{stem}.ndjson"), (dict(zip(header, r)) for r in rows))


def _write_rates(s: Scenario, w: _Writer) -> None:
    dim = len(s.energies)
    if dim > RATE_TENSOR_DIM_CAP:
        log.info("dim %d above %d: rate tables skipped", dim, RATE_TENSOR_DIM_CAP)
        return
    h, basis, params = s.coupling_operator.scaled, s.basis, s.params
    tensor_header = ["l1", "l2", "l1p", "l2p", "re", "im"]
    w.table("rate-tensor-gfgr", tensor_header, gfgr_rate_tensor(build_coarse_grained_L(h, basis, params)).rows())
    w.table("rate-tensor-conventional", tensor_header, conventional_rate_tensor(h, basis, s.eta, s.hbar).rows())
    w.table("rates-smoothed-fgr", ["l", "lp", "rate"], smoothed_fgr_rates(h, basis, params).rows())
    w.table("rates-fgr", ["l", "lp", "rate"], fgr_rates(h, basis, s.eta, s.hbar).rows())


def _run_generator(s: Scenario, kind: str, scheme, w: _Writer, write_trajectory: bool) -> dict:
    gen = build_generator(s, kind, scheme)
    if not np.all(np.isfinite(gen.liouvillian())):
        raise FloatingPointError("generator has non-finite entries")
    traj = propagate_master(gen, s.initial_state, s.propagation)
    if not all(np.all(np.isfinite(st)) for st in traj.states):
        raise FloatingPointError("trajectory contains non-finite entries")
    if write_trajectory:
        if "csv" in w.formats:
            traj.to_csv(w.path(f"trajectory-{kind}.csv"))
        if "ndjson" in w.formats:
            traj.to_ndjson(w.path(f"trajectory-{kind}.ndjson"))
    audit = positivity_audit(traj, -s.tolerances.positivity)
    audit.to_csv(w.path(f"positivity-{kind}.csv"))
    trace_err = float(np.max(np.abs(traj.column("trace") - 1.0)))
    summary = {"min_eigenvalue": audit.global_min, "positivity_violated": bool(audit.violated),
               "first_violation_time": audit.first_violation_time, "max_trace_error": trace_err}
    if len(s.energies) == 2:
        rep = t3_coefficient(gen)
        rows = [["t3_norm", rep.t3_norm], ["t3_pop_from_coh", rep.t3_pop_from_coh],
                ["t3_coh_from_pop", rep.t3_coh_from_pop], ["t1_rate", rep.t1_rate],
                ["t2_rate", rep.t2_rate], ["T1", rep.T1], ["T2", rep.T2]]
        w.table(f"t3-{kind}", ["quantity", "value"], rows)
        summary["t3_norm"] = rep.t3_norm
    return summary, gen


def _manifest(s: Scenario, command: str, w: _Writer, started: float, failures, summary, warnings) -> None:
    manifest = {
        "scenario": s.name,
        "command": command,
        "inputs_sha256": s.digest(),
        "seed": int(s.seed),
        "versions": {"gfgr": __version__, "python": platform.python_version(),
                     "numpy": np.__version__, "scipy": scipy.__version__, "pyyaml": yaml.__version__},
        "wall_time_s": round(time.perf_counter() - started, 6),
        "outputs": [{"file": f, "sha256": sha256_file(w.root / f)} for f in w.files],
        "failures": failures,
        "warnings": warnings,
        "summary": summary,
    }
    with open(w.root / manifest_name(command), "w", encoding="utf-8") as fh:
        yaml.safe_dump(manifest, fh, sort_keys=False)


def manifest_name(command: str) -> str:
    return f"manifest-{command}.yaml"


def run_scenario(s: Scenario, out_dir=None, command: str = "run") -> RunResult:
    """Execute a scenario; ``command`` selects run / audit / rates / scan."""
    started = time.perf_counter()
    base = Path(out_dir if out_dir is not None else s.outputs["dir"])
    try:
        root = prepare_output_dir(base / s.name)
    except OutputError as exc:
        log.error("%s", exc)
        return RunResult(EXIT_IO)
    w = _Writer(root, s.outputs["formats"])
    failures, warnings, summary = [], [], {}

    try:
        scheme = build_scheme(s)
        if scheme is not None:
            report = first_order_check(s.coupling_operator.scaled, scheme, s.initial_state)
            w.table("first-order-check", ["defect", "threshold", "exceeds"],
                    [[report.defect, report.threshold, int(report.exceeds)]])
            if report.exceeds:
                warnings.append(f"first-order term does not vanish under the projection (defect {report.defect:.3e})")
        if command in ("run", "rates"):
            _write_rates(s, w)
        if command in ("run", "audit"):
            gens = {}
            for kind in s.generators:
                try:
                    summary[kind], gens[kind] = _run_generator(s, kind, scheme, w, command == "run")
                except (FloatingPointError, np.linalg.LinAlgError, ValueError) as exc:
                    log.error("generator %s failed: %s", kind, exc)
                    failures.append({"generator": kind, "kind": "numerical", "reason": str(exc)})
            kinds = sorted(gens)
            for i, a in enumerate(kinds):
                for b in kinds[i + 1:]:
                    generator_distance(gens[a], gens[b]).to_csv(w.path(f"generator-distance-{a}-{b}.csv"))
        if command == "scan":
            summary["scan"] = _scan(s, w)
    except OSError as exc:
        log.error("I/O failure: %s", exc)
        return RunResult(EXIT_IO, root, w.files, failures, summary)

    _manifest(s, command, w, started, failures, summary, warnings)
    code = EXIT_NUMERICAL if failures else EXIT_OK
    return RunResult(code, root, w.files, failures, summary)


def _scan(s: Scenario, w: _Writer) -> dict:
    o = s.oracle
    if o is None:
        raise GFGRError("scenario has no oracle section")
    model = BipartiteModel(tuple(o["system_energies"]), tuple(o["env_energies"]), o["interaction"],
                           o["omega0"], o["rho0_sys"], s.hbar)
    sc = o.get("scan", {})
    schedule = ScalingSchedule(float(sc.get("T_ref", 1.0)), float(sc.get("xi", 1.0)),
                               tuple(float(g) for g in sc.get("g_values", (0.2, 0.1, 0.05))))
    report = weak_coupling_scan(model, schedule, float(sc.get("tau_final", 2.0)),
                                int(sc.get("n_snapshots", 801)), sc.get("t_final_unscaled"),
                                sc.get("projection", "partial_trace"), bool(sc.get("include_zero_row", False)))
    w.table("weak-coupling-scan", report.header(), report.table())
    d = report.distances()
    return {"distances": [float(x) for x in d], "non_increasing": bool(np.all(np.diff(d) <= 0))}


def witness_scenario(seed: int, n_trials: int = 200, name: str = "positivity-witness") -> dict:
    """Run the positivity-witness search and return it as a scenario mapping."""
    res = search_positivity_witness(seed, n_trials)
    rho0 = np.outer(res.psi0, res.psi0.conj())
    return {
        "name": name,
        "seed": int(seed),
        "hbar": 1.0,
        "basis": {"energies": [float(e) for e in res.energies]},
        "coupling": {"g": 1.0, "matrix": matrix_to_rows(res.hprime)},
        "coarse_graining": {"eps_bar": float(res.eta)},
        "generators": ["conventional", "gfgr"],
        "free_evolution": True,
        "conventional": {"mode": "completed", "eta": float(res.eta)},
        "initial_state": {"matrix": matrix_to_rows(rho0)},
        "propagation": {"t_final": res.t_final, "dt": res.dt, "method": "exact-exponential", "record_every": 1},
        "outputs": {"dir": "out", "formats": ["csv", "ndjson"]},
        "metadata": {"search_trials": int(res.trials), "search_min_eigenvalue": float(res.min_eigenvalue)},
    }


def _parse_overrides(text: Optional[str]) -> dict:
    if not text:
        return {}
    out = {}
    for item in text.split(","):
        key, _, val = item.partition("=")
        out[key.strip()] = float(val)
    return out


def _load(path, args) -> Scenario:
    s = parse_scenario(path)
    if args.seed is not None:
        s = replace(s, seed=args.seed)
    if args.tol_overrides:
        s = replace(s, tolerances=s.tolerances.updated(**args.tol_overrides))
    return s


def _execute(path, args) -> int:
    try:
        s = _load(path, args)
    except ScenarioError as exc:
        for d in exc.diagnostics:
            print(f"{path}: {d}", file=sys.stderr)
        return exc.exit_code
    if args.command == "validate":
        print(f"{path}: ok ({s.name})")
        return EXIT_OK
    try:
        res = run_scenario(s, args.out_dir, args.command)
    except GFGRError as exc:
        print(f"{path}: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    for f in res.failures:
        print(f"{path}: generator {f['generator']} failed: {f['reason']}", file=sys.stderr)
    if res.out_dir is not None:
        print(f"{path}: exit {res.exit_code}, {len(res.files)} files in {res.out_dir}")
    return res.exit_code


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gfgr", description="Coarse-grained Lindblad dynamics batch runner")
    parser.add_argument("--out-dir", default=None, help="override the scenario output directory")
    parser.add_argument("--seed", type=int, default=None, help="override the scenario seed")
    parser.add_argument("--tol-overrides", type=_parse_overrides, default={},
                        help="comma-separated key=value, e.g. positivity=1e-9,trace=1e-11")
    parser.add_argument("--workers", type=int, default=1, help="scenarios processed in parallel")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "run": "propagate every generator, write trajectories, rates and audits",
        "validate": "parse and validate scenario files only",
        "scan": "weak-coupling scan against the exact bipartite reference",
        "audit": "positivity, T3 and generator-distance audits without trajectories",
        "rates": "write rate tables",
    }
    for name, text in helps.items():
        p = sub.add_parser(name, help=text)
        p.add_argument("scenarios", nargs="+", type=Path)
    p = sub.add_parser("witness", help="search for a conventional-generator positivity witness")
    p.add_argument("output", type=Path, help="scenario file to write")
    p.add_argument("--trials", type=int, default=200)
    p.add_argument("--name", default="positivity-witness")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "witness":
        if args.seed is None:
            print("witness search needs --seed", file=sys.stderr)
            return EXIT_VALIDATION
        doc = witness_scenario(args.seed, args.trials, args.name)
        try:
            args.output.write_text(yaml.safe_dump(doc, sort_keys=False, default_flow_style=None, width=100))
        except OSError as exc:
            print(f"cannot write {args.output}: {exc}", file=sys.stderr)
            return EXIT_IO
        print(f"min eigenvalue {doc['metadata']['search_min_eigenvalue']:.6g} -> {args.output}")
        return EXIT_OK
    if args.workers > 1 and len(args.scenarios) > 1:
        with ProcessPoolExecutor(max_workers=args.workers) as pool:
            codes = list(pool.map(_execute, args.scenarios, [args] * len(args.scenarios)))
    else:
        codes = [_execute(p, args) for p in args.scenarios]
    return max(codes) if codes else EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
