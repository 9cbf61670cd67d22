import json

import numpy as np
import pytest

from reservecoopt.model import Allocation, ScenarioError, validate_scenario
from reservecoopt.requirements import EquivalencyTable
from reservecoopt.scenario_io import (CaseFormatError, generate_synthetic_case, load_allocation,
                                      load_case, load_scenario, save_allocation, save_scenario,
                                      scenario_from_dict, scenario_to_dict)

from conftest import three_bus_scenario


def test_round_trip(tmp_path):
    s = three_bus_scenario()
    path = tmp_path / "case.json"
    save_scenario(s, path, EquivalencyTable.default())
    s2, eq = load_case(path)
    assert s2 == s
    assert eq == EquivalencyTable.default()
    assert set(json.loads(path.read_text())) == {"params", "generators", "ffr", "network",
                                                 "equivalency_table"}


def test_round_trip_without_network_or_table(tmp_path):
    from dataclasses import replace
    s = replace(three_bus_scenario(), network=None)
    path = tmp_path / "case.json"
    save_scenario(s, path)
    s2, eq = load_case(path)
    assert s2 == s and eq is None


def test_missing_key_is_named():
    doc = scenario_to_dict(three_bus_scenario())
    del doc["params"]["omega0"]
    with pytest.raises(CaseFormatError, match="missing key params.omega0"):
        scenario_from_dict(doc)
    doc = scenario_to_dict(three_bus_scenario())
    del doc["generators"]
    with pytest.raises(CaseFormatError, match="missing key generators"):
        scenario_from_dict(doc)


def test_unknown_key_rejected():
    doc = scenario_to_dict(three_bus_scenario())
    doc["generators"][0]["colour"] = "red"
    with pytest.raises(CaseFormatError, match="unknown keys"):
        scenario_from_dict(doc)


def test_parse_error_reports_position(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text('{\n  "params": {,\n}')
    with pytest.raises(CaseFormatError, match="line 2, column"):
        load_case(path)


def test_all_violations_reported(tmp_path):
    doc = scenario_to_dict(three_bus_scenario())
    doc["params"]["omega_min"] = 60.0
    doc["generators"][1]["cost_curve"] = [[200.0, 40.0], [400.0, 30.0]]
    path = tmp_path / "case.json"
    path.write_text(json.dumps(doc))
    with pytest.raises(ScenarioError) as err:
        load_scenario(path)
    assert "omega_min < omega2 violated" in err.value.violations
    assert "generators[1]: cost_curve not convex" in err.value.violations


def test_allocation_io(tmp_path):
    a = Allocation(G=[1.0, 2.0], R=[0.5, 0.25], r=[0.5, 0.0], b=[3.0])
    path = tmp_path / "alloc.json"
    save_allocation(a, path)
    b = load_allocation(path)
    np.testing.assert_array_equal(a.R, b.R)
    path.write_text('{"G": [1]}')
    with pytest.raises(CaseFormatError, match="missing key R"):
        load_allocation(path)


# ---------------------------------------------------------------------------

def test_synthetic_case_shape(synthetic_case):
    s = synthetic_case
    assert validate_scenario(s) == []
    assert len(s.generators) == 150 and len(s.ffr) == 4 and s.network.n_buses == 30
    pfr = [g for g in s.generators if g.r_bar > 0]
    assert len(pfr) == 50
    for g in pfr:
        assert g.r_bar == pytest.approx(0.2 * g.g_max)
    assert s.b_bar.sum() == pytest.approx(600.0)
    assert s.params.contingency_L == 2500.0
    cap = sum(g.g_max for g in s.generators)
    assert cap - s.network.total_demand >= s.params.contingency_L


def test_synthetic_case_is_seeded(tmp_path):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    save_scenario(generate_synthetic_case(seed=5), a)
    save_scenario(generate_synthetic_case(seed=5), b)
    assert a.read_bytes() == b.read_bytes()
    assert generate_synthetic_case(seed=6) != generate_synthetic_case(seed=5)


def test_synthetic_line_limits_cover_merit_order_flows(synthetic_case):
    s = synthetic_case
    limits = np.array([ln.flow_limit for ln in s.network.lines])
    assert np.all(limits >= 0.08 * s.network.total_demand - 0.05)


def test_synthetic_rejects_bad_counts():
    with pytest.raises(ValueError):
        generate_synthetic_case(n_gens=0)
