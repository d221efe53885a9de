"""Scenario files: a versioned YAML schema describing one experiment.

A scenario names an initial shape, its grid resolution, the flow settings,
and the analysis/verification options.  ``docs/schema.md`` documents every
field with its units.
"""
from __future__ import annotations

import copy
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np
import yaml

from .errors import ScenarioParseError, ScenarioValidationError
from .flow import FlowConfig, ReparamMode, Reparametrize
from .immersion import (SPACE_CURVES, PolynomialMap, circle, dumbbell, ellipse, graph_immersion,
                        space_curve, sphere)

SCHEMA_VERSION = 1

SHAPE_FIELDS = {
    "Circle": {"r0": 1.0},
    "Ellipse": {"a": 2.0, "b": 1.0},
    "SpaceCurve": {"preset": "trefoil"},
    "Sphere": {"r0": 1.0},
    "Dumbbell": {"bell_r": 1.0, "neck_r": 0.2, "neck_len": 1.0},
    "Graph": {"preset": "paraboloid", "r": 1.0, "seed": None},
}
LENGTH_FIELDS = ("r0", "a", "b", "bell_r", "neck_r", "neck_len", "r")
GRAPH_PRESETS = ("paraboloid", "saddle", "random_cubic", "random_quadratic", "curve_cubic")

FLOW_DEFAULTS = {
    "dt_safety": 0.2,
    "stop_factor": 200.0,
    "stop_Q": None,
    "max_steps": 2_000_000,
    "snapshot_stride": 1000,
    "reparametrize": {"mode": "Off", "k": 0, "beta": 1.0},
}
ANALYSIS_DEFAULTS = {"levels": 6}
VERIFY_DEFAULTS = {
    "checks": ["all"],
    "graph_anchors": 64,
    "alpha": 1.0,
    "ball_pairs": 10,
    "volume_radii": [0.1, 0.2, 0.3],
    "integrated": {"p": 2.0, "C": 10.0, "level": 1},
    "injectivity_anchors": 9,
}
TOP_DEFAULTS = {"schema": None, "name": None, "shape": None, "resolution": None, "seed": 0,
                "flow": FLOW_DEFAULTS, "analysis": ANALYSIS_DEFAULTS, "verify": VERIFY_DEFAULTS,
                "output": None, "description": ""}

# Allowed keys per mapping path; a shape mapping accepts "type" plus its own fields.
_NESTED = {"flow": FLOW_DEFAULTS, "analysis": ANALYSIS_DEFAULTS, "verify": VERIFY_DEFAULTS,
           "flow.reparametrize": FLOW_DEFAULTS["reparametrize"],
           "verify.integrated": VERIFY_DEFAULTS["integrated"]}
REQUIRED = ("schema", "name", "shape", "resolution")


@dataclass
class ScenarioSpec:
    """Validated scenario.

    ``shape`` holds ``type`` plus the shape fields; lengths are in ambient
    length units, ``resolution`` is the number of samples per grid direction.
    """

    name: str
    shape: dict
    resolution: int
    seed: int = 0
    flow: dict = field(default_factory=lambda: copy.deepcopy(FLOW_DEFAULTS))
    analysis: dict = field(default_factory=lambda: copy.deepcopy(ANALYSIS_DEFAULTS))
    verify: dict = field(default_factory=lambda: copy.deepcopy(VERIFY_DEFAULTS))
    output: str | None = None
    description: str = ""
    source: str | None = None

    def __post_init__(self):
        problems = validate(self)
        if problems:
            raise ScenarioValidationError(problems)

    @property
    def shape_type(self):
        return self.shape["type"]

    def to_dict(self):
        return {"schema": SCHEMA_VERSION, "name": self.name, "shape": dict(self.shape),
                "resolution": self.resolution, "seed": self.seed,
                "flow": copy.deepcopy(self.flow), "analysis": dict(self.analysis),
                "verify": copy.deepcopy(self.verify), "output": self.output,
                "description": self.description}

    @classmethod
    def from_dict(cls, data: dict, source=None) -> "ScenarioSpec":
        data = _merge_defaults(data)
        return cls(name=data["name"], shape=data["shape"], resolution=data["resolution"],
                   seed=data["seed"], flow=data["flow"], analysis=data["analysis"],
                   verify=data["verify"], output=data["output"],
                   description=data["description"] or "", source=source)

    def with_seed(self, seed: int | None) -> "ScenarioSpec":
        if seed is None:
            return self
        data = self.to_dict()
        data["seed"] = int(seed)
        return ScenarioSpec.from_dict(data, self.source)

    def graph_seed(self) -> int:
        s = self.shape.get("seed")
        return int(self.seed if s is None else s)

    def polynomial(self) -> PolynomialMap:
        """Polynomial map behind a Graph scenario."""
        preset = self.shape["preset"]
        if preset == "paraboloid":
            return PolynomialMap.from_terms(2, [{(2, 0): 0.5, (0, 2): 0.5}])
        if preset == "saddle":
            return PolynomialMap.from_terms(2, [{(2, 0): 0.5, (0, 2): -0.5}])
        rng = np.random.default_rng(self.graph_seed())
        if preset == "random_cubic":
            return PolynomialMap.random(2, 2, 3, rng)
        if preset == "random_quadratic":
            return PolynomialMap.random(2, 3, 2, rng)
        return PolynomialMap.random(1, 2, 3, rng)

    def build_immersion(self):
        t = self.shape_type
        s = self.shape
        N = self.resolution
        if t == "Circle":
            return circle(s["r0"], N)
        if t == "Ellipse":
            return ellipse(s["a"], s["b"], N)
        if t == "SpaceCurve":
            return space_curve(s["preset"], N)
        if t == "Sphere":
            return sphere(s["r0"], N)
        if t == "Dumbbell":
            return dumbbell(s["bell_r"], s["neck_r"], s["neck_len"], samples=N)
        return graph_immersion(self.polynomial(), s["r"], N)

    def flow_config(self, initial=None) -> FlowConfig:
        f = self.flow
        rep = f["reparametrize"]
        return FlowConfig(self.name, initial if initial is not None else self.build_immersion(),
                          dt_safety=f["dt_safety"], stop_Q=f["stop_Q"],
                          stop_factor=f["stop_factor"], max_steps=int(f["max_steps"]),
                          snapshot_stride=int(f["snapshot_stride"]),
                          reparametrize=Reparametrize(rep["mode"], int(rep["k"]), rep["beta"]))


def _merge_defaults(data):
    out = copy.deepcopy(TOP_DEFAULTS)
    for key, val in data.items():
        if key in _NESTED and isinstance(val, dict):
            merged = copy.deepcopy(out[key])
            for k2, v2 in val.items():
                sub = f"{key}.{k2}"
                if sub in _NESTED and isinstance(v2, dict):
                    merged[k2] = dict(copy.deepcopy(_NESTED[sub]), **v2)
                else:
                    merged[k2] = v2
            out[key] = merged
        else:
            out[key] = val
    shape = out["shape"]
    if isinstance(shape, dict) and shape.get("type") in SHAPE_FIELDS:
        out["shape"] = dict(SHAPE_FIELDS[shape["type"]], **shape)
    rep = out["flow"].get("reparametrize")
    if isinstance(rep, dict) and rep.get("mode") is False:
        # YAML 1.1 reads a bare Off as boolean false
        rep["mode"] = "Off"
    return out


def validate(spec: ScenarioSpec) -> list:
    """List of violated invariants (empty when the scenario is valid)."""
    problems = []
    t = spec.shape.get("type")
    if t not in SHAPE_FIELDS:
        return [f"shape.type must be one of {sorted(SHAPE_FIELDS)}, got {t!r}"]
    for key in LENGTH_FIELDS:
        if key in spec.shape:
            val = spec.shape[key]
            if not isinstance(val, (int, float)) or isinstance(val, bool) or not val > 0:
                problems.append(f"shape.{key} must be a positive length, got {val!r}")
    if t == "SpaceCurve" and spec.shape["preset"] not in SPACE_CURVES:
        problems.append(f"shape.preset must be one of {list(SPACE_CURVES)}")
    if t == "Graph" and spec.shape["preset"] not in GRAPH_PRESETS:
        problems.append(f"shape.preset must be one of {list(GRAPH_PRESETS)}")
    if t == "Dumbbell" and not problems and spec.shape["neck_r"] >= spec.shape["bell_r"]:
        problems.append("shape.neck_r must be smaller than shape.bell_r")
    if not isinstance(spec.resolution, int) or isinstance(spec.resolution, bool) \
            or spec.resolution < 8:
        problems.append(f"resolution must be an integer >= 8, got {spec.resolution!r}")
    if not isinstance(spec.seed, int) or isinstance(spec.seed, bool) or spec.seed < 0:
        problems.append(f"seed must be a non-negative integer, got {spec.seed!r}")
    f = spec.flow
    if not isinstance(f["dt_safety"], (int, float)) or not 0 < f["dt_safety"] <= 0.5:
        problems.append(f"flow.dt_safety must lie in (0, 0.5], got {f['dt_safety']!r}")
    if f["stop_Q"] is not None and not (isinstance(f["stop_Q"], (int, float)) and f["stop_Q"] > 0):
        problems.append("flow.stop_Q must be positive or null")
    if not isinstance(f["stop_factor"], (int, float)) or not f["stop_factor"] > 1:
        problems.append("flow.stop_factor must exceed 1")
    for key in ("max_steps", "snapshot_stride"):
        if not isinstance(f[key], int) or f[key] < 1:
            problems.append(f"flow.{key} must be a positive integer")
    rep = f["reparametrize"]
    try:
        mode = ReparamMode(rep["mode"])
    except ValueError:
        problems.append(f"flow.reparametrize.mode must be one of {[m.value for m in ReparamMode]}")
    else:
        if mode is not ReparamMode.OFF and not (isinstance(rep["k"], int) and rep["k"] >= 1):
            problems.append("flow.reparametrize.k must be >= 1 when redistribution is on")
        if mode is ReparamMode.CURVATURE and t not in ("Sphere", "Dumbbell"):
            problems.append("CurvatureEveryK applies to Sphere and Dumbbell shapes only")
        if mode is not ReparamMode.OFF and t == "Graph":
            problems.append("Graph scenarios cannot be redistributed")
    if not isinstance(spec.analysis["levels"], int) or spec.analysis["levels"] < 1:
        problems.append("analysis.levels must be a positive integer")
    v = spec.verify
    radii = v["volume_radii"]
    if not isinstance(radii, list) or not radii or any(
            not isinstance(r, (int, float)) or r <= 0 for r in radii):
        problems.append("verify.volume_radii must be a non-empty list of positive lengths")
    if not isinstance(v["alpha"], (int, float)) or not 0 < v["alpha"] <= 1:
        problems.append("verify.alpha must lie in (0, 1]")
    for key in ("graph_anchors", "ball_pairs", "injectivity_anchors"):
        if not isinstance(v[key], int) or v[key] < 1:
            problems.append(f"verify.{key} must be a positive integer")
    from .verify import CHECK_IDS
    checks = v["checks"]
    if not isinstance(checks, list) or any(c != "all" and c not in CHECK_IDS for c in checks):
        problems.append(f"verify.checks entries must be 'all' or one of {list(CHECK_IDS)}")
    return problems


def _check_keys(node, allowed, path):
    """Reject unknown keys, reporting the 1-based line of the offending key."""
    if not isinstance(node, yaml.MappingNode):
        return
    for key_node, val_node in node.value:
        key = key_node.value
        full = f"{path}.{key}" if path else key
        if key not in allowed:
            raise ScenarioParseError(f"unknown key {key!r}", line=key_node.start_mark.line + 1,
                                     field=full)
        if full == "shape" and isinstance(val_node, yaml.MappingNode):
            kinds = [v.value for k, v in val_node.value if k.value == "type"]
            shape_keys = {"type"} | set(SHAPE_FIELDS.get(kinds[0], {}) if kinds else
                                        {k for f in SHAPE_FIELDS.values() for k in f})
            _check_keys(val_node, shape_keys, full)
        elif full in _NESTED:
            _check_keys(val_node, set(_NESTED[full]), full)


def parse_scenario(text: str, source=None) -> ScenarioSpec:
    """Parse scenario YAML text.

    Raises
    ------
    ScenarioParseError
        Malformed YAML, unknown keys, missing required keys, or a wrong schema.
    ScenarioValidationError
        A parsed scenario violating one or more invariants.
    """
    try:
        root = yaml.compose(text, Loader=yaml.SafeLoader)
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ScenarioParseError(f"malformed YAML: {getattr(exc, 'problem', exc)}",
                                 line=mark.line + 1 if mark else None) from exc
    if not isinstance(data, dict):
        raise ScenarioParseError("scenario must be a mapping")
    _check_keys(root, set(TOP_DEFAULTS), "")
    for key in REQUIRED:
        if key not in data:
            raise ScenarioParseError("missing required key", field=key)
    if data["schema"] != SCHEMA_VERSION:
        raise ScenarioParseError(f"unsupported schema {data['schema']!r} (expected {SCHEMA_VERSION})",
                                 field="schema")
    if not isinstance(data["shape"], dict) or "type" not in data["shape"]:
        raise ScenarioParseError("shape must be a mapping with a type", field="shape")
    return ScenarioSpec.from_dict(data, source=str(source) if source else None)


def load_scenario(path) -> ScenarioSpec:
    """Load a scenario file, or a bundled scenario by name (e.g. ``circle``)."""
    p = Path(path)
    if not p.exists():
        bundled = bundled_path(str(path))
        if bundled is None:
            raise FileNotFoundError(f"scenario {path!r} not found")
        p = bundled
    return parse_scenario(p.read_text(), source=p)


def bundled_names():
    root = resources.files("mcflab") / "scenarios"
    return sorted(p.name[:-len(".scenario")] for p in root.iterdir()
                  if p.name.endswith(".scenario"))


def bundled_path(name: str):
    stem = name[:-len(".scenario")] if name.endswith(".scenario") else name
    p = resources.files("mcflab") / "scenarios" / f"{stem}.scenario"
    return Path(str(p)) if p.is_file() else None
