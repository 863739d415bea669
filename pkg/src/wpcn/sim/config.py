"""Scenario configuration: dataclasses, presets and a YAML loader.

Numbers may carry units: ``"-100 dBm"``, ``"2 W"``, ``"30 mW"``, ``"2.4 GHz"``.
Validation errors report the line and column of the offending node.
"""

import math
import re
from dataclasses import asdict, dataclass, field, replace

import yaml

from ..channel import ChannelError, Topology, dbm_to_watts
from ..policy_fair import InvalidUtility, Utility

POLICIES = ("optimal", "mdpp", "qf-wpt", "qgf-it")
_POLICY_ALIASES = {
    "optimal": "optimal", "opt": "optimal", "threshold": "optimal",
    "mdpp": "mdpp",
    "qf-wpt": "qf-wpt", "qfwpt": "qf-wpt", "fair": "qf-wpt",
    "qgf-it": "qgf-it", "qgfit": "qgf-it", "wpcn": "qgf-it",
}


class ConfigError(ValueError):
    def __init__(self, message, line=None, column=None):
        self.line, self.column = line, column
        where = f" (line {line}, column {column})" if line is not None else ""
        super().__init__(message + where)


@dataclass(frozen=True)
class PolicySpec:
    name: str = "mdpp"
    P_avg: float = 0.4
    P_peak: float = 2.0
    V: float = 1e4
    P_min: float = 0.0
    D_min: float = 0.0
    utility: Utility = field(default_factory=Utility)

    def __post_init__(self):
        key = str(self.name).lower().replace("_", "-")
        if key not in _POLICY_ALIASES:
            raise ConfigError(f"unknown policy {self.name!r}; expected one of {POLICIES}")
        object.__setattr__(self, "name", _POLICY_ALIASES[key])
        if not 0 < self.P_avg <= self.P_peak:
            raise ConfigError(f"need 0 < P_avg <= P_peak, got {self.P_avg}, {self.P_peak}")
        if not self.V > 0:
            raise ConfigError(f"V must be positive, got {self.V}")
        if self.P_min < 0 or self.D_min < 0:
            raise ConfigError("P_min and D_min must be non-negative")

    @property
    def label(self) -> str:
        if self.name in ("qf-wpt", "qgf-it"):
            return f"{self.name}[{self.utility.kind}]"
        return self.name


@dataclass(frozen=True)
class ScenarioConfig:
    topology: Topology
    policy: PolicySpec = field(default_factory=PolicySpec)
    horizon: int = 1_000_000
    calibration_samples: int = 100_000
    seed: int = 0
    output_path: str = None
    record_trace: bool = False

    def __post_init__(self):
        if int(self.horizon) != self.horizon or self.horizon < 1:
            raise ConfigError(f"horizon must be a positive integer, got {self.horizon}")
        if self.calibration_samples < 1000:
            raise ConfigError("calibration_samples must be at least 1000")
        if not 0 <= int(self.seed) < 2 ** 64:
            raise ConfigError("seed must be a 64-bit unsigned integer")

    def echo(self) -> dict:
        """Plain-data view for JSON summaries."""
        topo = asdict(self.topology)
        topo["er_positions"] = [list(p) for p in self.topology.er_positions]
        topo["eap_position"] = list(self.topology.eap_position)
        pol = asdict(self.policy)
        return {"topology": topo, "policy": pol, "horizon": self.horizon,
                "calibration_samples": self.calibration_samples, "seed": int(self.seed)}


# ---------------------------------------------------------------------------
# presets

def preset_topology(name: str, distance_ratio: float = None) -> Topology:
    name = str(name).lower()
    if name in ("a", "b"):
        topo = Topology(((1.2, 1.2), (2.0 * math.sqrt(2.0), 0.0)), n_antennas=30, m_antennas=4)
        if name == "b" or distance_ratio is not None:
            topo = topo.with_distance_ratio(1.0 if distance_ratio is None else distance_ratio)
        return topo
    if name == "c":
        # evenly spread on a 3 m circle; N = 40 keeps N >= 4 K M
        pos = tuple((3.0 * math.cos(2 * math.pi * k / 10), 3.0 * math.sin(2 * math.pi * k / 10))
                    for k in range(10))
        return Topology(pos, n_antennas=40, m_antennas=1)
    raise ConfigError(f"unknown preset {name!r}; expected a, b or c")


PRESET_POLICIES = {
    "a": PolicySpec("mdpp", P_avg=0.4, P_peak=2.0, V=1e4),
    "b": PolicySpec("qf-wpt", P_avg=0.4, P_peak=2.0, V=3.0, utility=Utility("maxmin")),
    "c": PolicySpec("qgf-it", P_avg=0.03, P_peak=2.0, V=100.0, utility=Utility("sum")),
}


def preset(name: str, **overrides) -> ScenarioConfig:
    """Shipped scenario (a), (b) or (c); keyword overrides apply to ScenarioConfig."""
    dr = overrides.pop("distance_ratio", None)
    cfg = ScenarioConfig(preset_topology(name, dr), PRESET_POLICIES[str(name).lower()])
    return replace(cfg, **overrides) if overrides else cfg


# ---------------------------------------------------------------------------
# YAML loading

_QUANTITY = re.compile(r"^\s*([-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)\s*([A-Za-z]*)\s*$")
_POWER_UNITS = {"": 1.0, "w": 1.0, "mw": 1e-3, "uw": 1e-6, "kw": 1e3}
_FREQ_UNITS = {"": 1.0, "hz": 1.0, "khz": 1e3, "mhz": 1e6, "ghz": 1e9}
_PLAIN_UNITS = {"": 1.0, "m": 1.0, "bits": 1.0, "bit": 1.0}
_SCALARS = yaml.constructor.SafeConstructor()


class _Node:
    """A parsed value with its source position."""

    def __init__(self, value, mark):
        self.value, self.mark = value, mark

    def error(self, message):
        if self.mark is None:
            return ConfigError(message)
        return ConfigError(message, self.mark.line + 1, self.mark.column + 1)


def _convert(node):
    if isinstance(node, yaml.MappingNode):
        out = {}
        for k, v in node.value:
            key = _convert(k)
            if key.value in out:
                raise key.error(f"duplicate key {key.value!r}")
            out[key.value] = _convert(v)
        return _Node(out, node.start_mark)
    if isinstance(node, yaml.SequenceNode):
        return _Node([_convert(v) for v in node.value], node.start_mark)
    return _Node(_SCALARS.construct_object(node), node.start_mark)


def _quantity(node: _Node, kind: str = "plain") -> float:
    v = node.value
    if isinstance(v, bool):
        raise node.error(f"expected a number, got {v!r}")
    if isinstance(v, (int, float)):
        return float(v)
    m = _QUANTITY.match(str(v))
    if not m:
        raise node.error(f"cannot read {v!r} as a number")
    x, unit = float(m.group(1)), m.group(2).lower()
    if kind == "power":
        if unit == "dbm":
            return dbm_to_watts(x)
        if unit == "dbw":
            return 10.0 ** (x / 10.0)
        table = _POWER_UNITS
    elif kind == "frequency":
        table = _FREQ_UNITS
    else:
        table = _PLAIN_UNITS
    if unit not in table:
        raise node.error(f"unit {m.group(2)!r} is not valid here")
    return x * table[unit]


def _integer(node: _Node) -> int:
    if isinstance(node.value, int) and not isinstance(node.value, bool):
        return node.value
    x = _quantity(node)
    if x != int(x):
        raise node.error(f"expected an integer, got {node.value!r}")
    return int(x)


def _check_keys(node: _Node, allowed):
    if not isinstance(node.value, dict):
        raise node.error("expected a mapping")
    for key, child in node.value.items():
        if key not in allowed:
            raise child.error(f"unknown key {key!r}; allowed: {sorted(allowed)}")


def _topology(node: _Node) -> Topology:
    allowed = {"preset", "er_positions", "eap_position", "n_antennas", "m_antennas",
               "carrier_frequency", "pathloss_exponent", "noise_variance", "eta", "uplink",
               "distance_ratio"}
    _check_keys(node, allowed)
    d = node.value
    try:
        base = preset_topology(d["preset"].value) if "preset" in d else None
    except ConfigError as exc:
        raise d["preset"].error(str(exc)) from None
    kw = {}
    if "er_positions" in d:
        pos = d["er_positions"]
        if not isinstance(pos.value, list):
            raise pos.error("er_positions must be a list of [x, y] pairs")
        pts = []
        for p in pos.value:
            if not isinstance(p.value, list) or len(p.value) != 2:
                raise p.error("each position must be an [x, y] pair")
            pts.append(tuple(_quantity(c) for c in p.value))
        kw["er_positions"] = tuple(pts)
    if "eap_position" in d:
        p = d["eap_position"]
        if not isinstance(p.value, list) or len(p.value) != 2:
            raise p.error("eap_position must be an [x, y] pair")
        kw["eap_position"] = tuple(_quantity(c) for c in p.value)
    for key in ("n_antennas", "m_antennas"):
        if key in d:
            kw[key] = _integer(d[key])
    if "carrier_frequency" in d:
        kw["carrier_frequency"] = _quantity(d["carrier_frequency"], "frequency")
    if "pathloss_exponent" in d:
        kw["pathloss_exponent"] = _quantity(d["pathloss_exponent"])
    if "noise_variance" in d:
        kw["noise_variance"] = _quantity(d["noise_variance"], "power")
    if "eta" in d:
        kw["eta"] = _quantity(d["eta"])
    if "uplink" in d:
        kw["uplink"] = str(d["uplink"].value)
    try:
        if base is None:
            if "er_positions" not in kw:
                raise node.error("topology needs either a preset or er_positions")
            topo = Topology(**kw)
        else:
            topo = replace(base, **kw)
        if "distance_ratio" in d:
            topo = topo.with_distance_ratio(_quantity(d["distance_ratio"]))
    except ChannelError as exc:
        raise node.error(str(exc)) from None
    return topo


def _utility(node: _Node) -> Utility:
    try:
        if isinstance(node.value, dict):
            _check_keys(node, {"kind", "alpha"})
            kind = node.value["kind"].value if "kind" in node.value else "sum"
            alpha = _quantity(node.value["alpha"]) if "alpha" in node.value else 1.0
            return Utility(kind, alpha)
        return Utility(str(node.value))
    except InvalidUtility as exc:
        raise node.error(str(exc)) from None


def _policy(node: _Node, default: PolicySpec) -> PolicySpec:
    _check_keys(node, {"name", "P_avg", "P_peak", "V", "P_min", "D_min", "utility"})
    d = node.value
    kw = {}
    if "name" in d:
        kw["name"] = str(d["name"].value)
    for key in ("P_avg", "P_peak", "P_min"):
        if key in d:
            kw[key] = _quantity(d[key], "power")
    for key in ("V", "D_min"):
        if key in d:
            kw[key] = _quantity(d[key])
    if "utility" in d:
        kw["utility"] = _utility(d["utility"])
    try:
        return replace(default, **kw)
    except ConfigError as exc:
        raise node.error(str(exc)) from None


def parse_config(text: str) -> ScenarioConfig:
    try:
        root = yaml.compose(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        if mark is not None:
            raise ConfigError(f"malformed YAML: {exc.problem}", mark.line + 1, mark.column + 1) from None
        raise ConfigError(f"malformed YAML: {exc}") from None
    if root is None:
        raise ConfigError("empty configuration")
    top = _convert(root)
    _check_keys(top, {"preset", "topology", "policy", "horizon", "calibration_samples",
                      "seed", "output", "record_trace"})
    d = top.value
    name = str(d["preset"].value).lower() if "preset" in d else None
    if name is not None and name not in PRESET_POLICIES:
        raise d["preset"].error(f"unknown preset {name!r}; expected a, b or c")
    if "topology" in d:
        topo_node = d["topology"]
        if name is not None and isinstance(topo_node.value, dict) and "preset" not in topo_node.value:
            topo_node.value["preset"] = _Node(name, None)
        topo = _topology(topo_node)
    elif name is not None:
        topo = preset_topology(name)
    else:
        raise top.error("configuration needs a topology section or a preset")
    policy = PRESET_POLICIES[name] if name is not None else PolicySpec()
    if "policy" in d:
        policy = _policy(d["policy"], policy)
    kw = {"topology": topo, "policy": policy}
    if "horizon" in d:
        kw["horizon"] = _integer(d["horizon"])
    if "calibration_samples" in d:
        kw["calibration_samples"] = _integer(d["calibration_samples"])
    if "seed" in d:
        kw["seed"] = _integer(d["seed"])
    if "output" in d:
        kw["output_path"] = str(d["output"].value)
    if "record_trace" in d:
        if not isinstance(d["record_trace"].value, bool):
            raise d["record_trace"].error("record_trace must be true or false")
        kw["record_trace"] = d["record_trace"].value
    try:
        return ScenarioConfig(**kw)
    except ConfigError as exc:
        raise top.error(str(exc)) from None


def load_config(path) -> ScenarioConfig:
    with open(path) as fh:
        return parse_config(fh.read())
