import numpy as np
import pytest

from mcflab.errors import ScenarioParseError, ScenarioValidationError
from mcflab.flow import ReparamMode
from mcflab.immersion import Kind
from mcflab.scenarios import (ScenarioSpec, bundled_names, bundled_path, load_scenario,
                              parse_scenario)

BASE = """\
schema: 1
name: test
shape:
  type: Dumbbell
  bell_r: 1.0
  neck_r: {neck_r}
resolution: 101
"""


def test_bundled_scenarios_load():
    names = bundled_names()
    assert names == ["circle", "dumbbell", "ellipse", "graph", "sphere", "trefoil"]
    kinds = {"circle": Kind.CLOSED_CURVE, "dumbbell": Kind.ROTATIONAL_PROFILE,
             "ellipse": Kind.CLOSED_CURVE, "graph": Kind.DISC_GRAPH,
             "sphere": Kind.ROTATIONAL_PROFILE, "trefoil": Kind.CLOSED_CURVE}
    for name in names:
        spec = load_scenario(name)
        assert spec.name == name
        imm = spec.build_immersion()
        assert imm.kind is kinds[name]
        assert imm.grid_shape[0] == spec.resolution
    assert load_scenario(bundled_path("circle")).to_dict() == load_scenario("circle").to_dict()


def test_defaults_are_filled():
    spec = parse_scenario(BASE.format(neck_r=0.2))
    assert spec.seed == 0 and spec.output is None
    assert spec.flow["dt_safety"] == 0.2
    assert spec.verify["volume_radii"] == [0.1, 0.2, 0.3]
    assert spec.shape["neck_len"] == 1.0
    cfg = spec.flow_config()
    assert cfg.reparametrize.mode is ReparamMode.OFF


@pytest.mark.parametrize("neck_r", [0.0, -0.1, 1.5])
def test_invalid_neck_radius(neck_r):
    with pytest.raises(ScenarioValidationError) as exc:
        parse_scenario(BASE.format(neck_r=neck_r))
    assert any("neck_r" in v for v in exc.value.violations)


def test_unknown_key_names_line_and_field():
    text = BASE.format(neck_r=0.2) + "flow:\n  dt_safety: 0.1\n  viscosity: 2.0\n"
    with pytest.raises(ScenarioParseError) as exc:
        parse_scenario(text)
    assert exc.value.field == "flow.viscosity"
    assert exc.value.line == 10
    assert "viscosity" in str(exc.value) and "line 10" in str(exc.value)


def test_unknown_shape_field():
    text = BASE.format(neck_r=0.2).replace("  bell_r: 1.0\n", "  bell_r: 1.0\n  r0: 2.0\n")
    with pytest.raises(ScenarioParseError) as exc:
        parse_scenario(text)
    assert exc.value.field == "shape.r0"


def test_parse_errors():
    with pytest.raises(ScenarioParseError, match="schema"):
        parse_scenario(BASE.format(neck_r=0.2).replace("schema: 1", "schema: 2"))
    with pytest.raises(ScenarioParseError) as exc:
        parse_scenario(BASE.format(neck_r=0.2).replace("resolution: 101\n", ""))
    assert exc.value.field == "resolution"
    with pytest.raises(ScenarioParseError) as exc:
        parse_scenario("schema: 1\nname: [unclosed\n")
    assert exc.value.line is not None
    with pytest.raises(ScenarioParseError):
        parse_scenario("- just\n- a list\n")


def test_bare_off_is_accepted():
    text = BASE.format(neck_r=0.2) + "flow:\n  reparametrize:\n    mode: Off\n"
    assert parse_scenario(text).flow["reparametrize"]["mode"] == "Off"


def test_validation_collects_violations():
    text = ("schema: 1\nname: bad\nshape:\n  type: Circle\n  r0: -1\nresolution: 4\n"
            "flow:\n  dt_safety: 0.9\n")
    with pytest.raises(ScenarioValidationError) as exc:
        parse_scenario(text)
    assert len(exc.value.violations) >= 3


def test_seed_override_and_graph_polynomial():
    spec = load_scenario("graph")
    assert spec.graph_seed() == 7
    a = spec.polynomial().coeffs
    b = spec.with_seed(7).polynomial().coeffs
    c = spec.with_seed(8).polynomial().coeffs
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, c)


def test_round_trip_through_dict():
    spec = load_scenario("dumbbell")
    again = ScenarioSpec.from_dict(spec.to_dict())
    assert again.to_dict() == spec.to_dict()


def test_missing_file():
    with pytest.raises(FileNotFoundError):
        load_scenario("no_such_scenario")
