import numpy as np
import pytest
import yaml
from hypothesis import given, settings
from hypothesis import strategies as st

from gfgr.core import random_density_matrix, random_hermitian
from gfgr.scenario import (
    EXIT_MISSING,
    EXIT_SYNTAX,
    EXIT_VALIDATION,
    ScenarioError,
    loads,
    matrix_to_rows,
    parse_scenario,
    scenarios_equal,
    shipped_scenarios,
)

MINIMAL = """
name: tiny
seed: 3
basis: {energies: [0.0, 1.0]}
coupling:
  matrix: [[0, [0.1, 0.0]], [[0.1, 0.0], 0]]
coarse_graining: {t_bar: 2.0}
initial_state: {populations: [1.0, 0.0]}
propagation: {t_final: 1.0, dt: 0.1}
"""


def mutate(**changes):
    doc = yaml.safe_load(MINIMAL)
    for key, val in changes.items():
        if val is None:
            doc.pop(key)
        else:
            doc[key] = val
    return yaml.safe_dump(doc)


class TestParse:
    def test_minimal_defaults(self):
        s = loads(MINIMAL)
        assert s.hbar == 1.0 and s.propagation.method == "exact-exponential"
        assert s.generators == ("gfgr",) and s.free_evolution
        assert s.params.eps_bar == pytest.approx(0.5)
        np.testing.assert_array_equal(s.initial_state, np.diag([1.0, 0.0]))

    def test_eps_bar_form(self):
        s = loads(mutate(coarse_graining={"eps_bar": 0.25}))
        assert s.params.t_bar == pytest.approx(4.0) and s.eta == pytest.approx(0.25)

    @pytest.mark.parametrize("cg", [{}, {"t_bar": 1.0, "eps_bar": 1.0}])
    def test_exactly_one_of_t_bar_eps_bar(self, cg):
        with pytest.raises(ScenarioError, match="exactly one of t_bar or eps_bar"):
            loads(mutate(coarse_graining=cg))

    def test_non_hermitian_names_entry(self):
        text = mutate(coupling={"matrix": [[0, [0.1, 0.0]], [[0.2, 0.0], 0]]})
        with pytest.raises(ScenarioError) as exc:
            loads(text)
        assert exc.value.exit_code == EXIT_VALIDATION
        d = exc.value.diagnostics[0]
        assert d.path == "coupling.matrix" and "coupling not Hermitian: entry [0][1]" in d.reason

    def test_malformed_syntax(self):
        with pytest.raises(ScenarioError) as exc:
            loads("name: [unclosed\nseed: 1")
        assert exc.value.exit_code == EXIT_SYNTAX

    def test_missing_field(self):
        with pytest.raises(ScenarioError) as exc:
            loads(mutate(seed=None))
        assert exc.value.exit_code == EXIT_MISSING
        assert exc.value.diagnostics[0].path == "seed"

    def test_exit_codes_distinct(self):
        assert len({EXIT_SYNTAX, EXIT_MISSING, EXIT_VALIDATION}) == 3

    def test_collects_every_diagnostic(self):
        text = mutate(name="bad name/", hbar=-1.0, generators=["gfgr", "magic"])
        with pytest.raises(ScenarioError) as exc:
            loads(text)
        paths = {d.path for d in exc.value.diagnostics}
        assert {"name", "hbar", "generators"} <= paths

    @pytest.mark.parametrize("changes", [
        dict(initial_state={"populations": [0.7, 0.7]}),
        dict(basis={"energies": [0.0, 1.0, 2.0]}),
        dict(propagation={"t_final": 1.0, "dt": 0.1, "method": "euler"}),
        dict(extra_key=1),
        dict(generators=["projected"]),
    ])
    def test_rejections(self, changes):
        with pytest.raises(ScenarioError):
            loads(mutate(**changes))

    def test_missing_file(self, tmp_path):
        with pytest.raises(ScenarioError) as exc:
            parse_scenario(tmp_path / "nope.yaml")
        assert exc.value.exit_code == 4


class TestRoundTrip:
    @pytest.mark.parametrize("name", sorted(shipped_scenarios()))
    def test_shipped_fixture_round_trips(self, name):
        s = parse_scenario(shipped_scenarios()[name])
        again = loads(s.dumps())
        assert scenarios_equal(s, again)
        assert again.digest() == s.digest()
        assert loads(again.dumps()).dumps() == again.dumps()

    @given(st.integers(0, 2**31 - 1), st.integers(2, 4), st.booleans())
    @settings(max_examples=30, deadline=None)
    def test_random_scenarios_round_trip(self, seed, dim, use_t_bar):
        rng = np.random.default_rng(seed)
        doc = {
            "name": f"s{seed}", "seed": seed,
            "basis": {"energies": sorted(rng.uniform(0, 2, dim).tolist())},
            "coupling": {"g": float(rng.uniform(0, 2)), "matrix": matrix_to_rows(random_hermitian(dim, rng))},
            "coarse_graining": {"t_bar": float(rng.uniform(0.5, 8))} if use_t_bar else {"eps_bar": float(rng.uniform(0.1, 2))},
            "generators": ["gfgr", "conventional"],
            "initial_state": {"matrix": matrix_to_rows(random_density_matrix(dim, rng))},
            "propagation": {"t_final": 2.0, "dt": 0.5},
        }
        s = loads(yaml.safe_dump(doc))
        assert scenarios_equal(s, loads(s.dumps()))
        np.testing.assert_array_equal(loads(s.dumps()).coupling, s.coupling)


def test_shipped_scenarios_present():
    assert {"two-level-t1t2", "positivity-witness", "weak-coupling", "device-contacts"} <= set(shipped_scenarios())
