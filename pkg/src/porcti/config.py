"""Scenario configuration files.

A scenario is a YAML mapping. Every section is optional except ``scenario_id``;
unknown keys are rejected with their line number. Example::

    scenario_id: demo
    protocol: por              # por | cft | bft
    cluster_size: 5
    byzantine:                 # nodes chosen per seed, count = floor(fraction * N)
      kind: false_reporter     # false_reporter | tampering_leader
      fraction: 0.2
      probability: 1.0
      corruption: 6
      activation_time: 0
      placement: random        # random | highest
    crash: {count: 0, fraction: 0.0, activation_time: 0, placement: random}
    behaviors:                 # explicit per-node overrides
      - {node: 4, kind: crash_stop, activation_time: 1000}
    params: {r_init: 50, r_thld: 10, reputation_weight_m: 5, ...}
    network: {latency: [2, 6], drop_probability: 0.0, proc_time: 1, cores: 2}
    workload: {proposals: 100, inter_arrival: 10, start: 500}
    stop: {max_time: 1000000, commit_target: null}
    seeds: [0, 1, 2]           # or {start: 0, count: 10}
    grid:                      # cartesian product over dotted keys
      cluster_size: [5, 9]
      params.reputation_weight_m: [5, 15]
"""

from __future__ import annotations

import copy
import dataclasses
import itertools
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

import yaml

from porcti.domain import ProtocolParams, validate_params
from porcti.errors import ConfigError, ParameterError
from porcti.faults import BehaviorKind, BehaviorSpec
from porcti.sim import NetworkModel

PROTOCOLS = ("por", "cft", "bft")


class _Node:
    """A parsed YAML value that remembers where it came from."""

    __slots__ = ("value", "line")

    def __init__(self, value: Any, line: int):
        self.value = value
        self.line = line


def _wrap(node: yaml.Node) -> _Node:
    line = node.start_mark.line + 1
    if isinstance(node, yaml.MappingNode):
        out: dict[str, _Node] = {}
        for k, v in node.value:
            key = _wrap(k)
            if not isinstance(key.value, str):
                raise ConfigError(f"line {key.line}: mapping keys must be strings")
            if key.value in out:
                raise ConfigError(f"line {key.line}: duplicate key {key.value!r}")
            wrapped = _wrap(v)
            out[key.value] = wrapped
        return _Node(out, line)
    if isinstance(node, yaml.SequenceNode):
        return _Node([_wrap(v) for v in node.value], line)
    loader = yaml.SafeLoader("")
    try:
        return _Node(loader.construct_object(node, deep=True), line)
    finally:
        loader.dispose()


def _plain(n: _Node) -> Any:
    if isinstance(n.value, dict):
        return {k: _plain(v) for k, v in n.value.items()}
    if isinstance(n.value, list):
        return [_plain(v) for v in n.value]
    return n.value


def load_raw(text: str, source: str = "<config>") -> _Node:
    try:
        root = yaml.compose(text, Loader=yaml.SafeLoader)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f"line {mark.line + 1}" if mark is not None else "unknown line"
        raise ConfigError(f"{source}: {where}: malformed YAML: {getattr(exc, 'problem', exc)}") from None
    if root is None or not isinstance(root, yaml.MappingNode):
        raise ConfigError(f"{source}: top level must be a mapping")
    return _wrap(root)


# -- typed sections -----------------------------------------------------------


@dataclass(frozen=True)
class ByzantineSpec:
    kind: BehaviorKind = BehaviorKind.FALSE_REPORTER
    fraction: float = 0.0
    probability: float = 1.0
    corruption: int = 6
    activation_time: int = 0
    placement: str = "random"

    def count(self, n: int) -> int:
        # floor keeps every fraction below one half strictly in the minority
        return int(self.fraction * n + 1e-9)


@dataclass(frozen=True)
class CrashSpec:
    count: int = 0
    # added to ``count``: floor(fraction * N) more nodes
    fraction: float = 0.0
    activation_time: int = 0
    placement: str = "random"

    def total(self, n: int) -> int:
        return self.count + int(self.fraction * n + 1e-9)


@dataclass(frozen=True)
class WorkloadSpec:
    proposals: int = 100
    inter_arrival: int = 10
    start: int = 500


@dataclass(frozen=True)
class StopSpec:
    max_time: Optional[int] = 1_000_000
    commit_target: Optional[int] = None


@dataclass(frozen=True)
class ScenarioConfig:
    scenario_id: str
    protocol: str = "por"
    cluster_size: int = 5
    byzantine: ByzantineSpec = ByzantineSpec()
    crash: CrashSpec = CrashSpec()
    behaviors: tuple[tuple[int, BehaviorSpec], ...] = ()
    params: ProtocolParams = ProtocolParams()
    network: NetworkModel = NetworkModel()
    workload: WorkloadSpec = WorkloadSpec()
    stop: StopSpec = StopSpec()
    seeds: tuple[int, ...] = (0,)
    label: str = ""


@dataclass
class Experiment:
    """A parsed config file: the grid expanded into concrete scenario points."""

    scenario_id: str
    points: list[ScenarioConfig] = field(default_factory=list)
    raw: dict = field(default_factory=dict)

    def runs(self) -> list[tuple[ScenarioConfig, int]]:
        return [(p, s) for p in self.points for s in p.seeds]


_TOP_KEYS = {
    "scenario_id", "protocol", "cluster_size", "byzantine", "crash", "behaviors",
    "params", "network", "workload", "stop", "seeds", "grid",
}


def _fields(cls) -> set[str]:
    return {f.name for f in dataclasses.fields(cls)}


def _check_keys(section: _Node, allowed: set[str], where: str) -> dict[str, _Node]:
    if not isinstance(section.value, dict):
        raise ConfigError(f"line {section.line}: {where} must be a mapping")
    for key, val in section.value.items():
        if key not in allowed:
            raise ConfigError(f"line {val.line}: unknown key {key!r} in {where}")
    return section.value


def _typed(node: _Node, kind: type, name: str) -> Any:
    v = node.value
    if kind is float and isinstance(v, int) and not isinstance(v, bool):
        return float(v)
    if kind is int and isinstance(v, bool) or not isinstance(v, kind):
        raise ConfigError(f"line {node.line}: field {name!r} must be {kind.__name__}, got {v!r}")
    return v


def _opt_int(node: _Node, name: str) -> Optional[int]:
    return None if node.value is None else _typed(node, int, name)


def _int_pair(node: _Node, name: str) -> tuple[int, int]:
    if not isinstance(node.value, list) or len(node.value) != 2:
        raise ConfigError(f"line {node.line}: field {name!r} must be a two-element list")
    return (_typed(node.value[0], int, name), _typed(node.value[1], int, name))


def _enum(node: _Node, enum_cls, name: str):
    try:
        return enum_cls(node.value)
    except ValueError:
        allowed = ", ".join(e.value for e in enum_cls)
        raise ConfigError(f"line {node.line}: field {name!r} must be one of {allowed}") from None


def _section(node: Optional[_Node], cls, where: str, conv: dict) -> Any:
    if node is None:
        return cls()
    items = _check_keys(node, _fields(cls), where)
    kwargs = {}
    for key, val in items.items():
        kwargs[key] = conv[key](val, f"{where}.{key}")
    try:
        return cls(**kwargs)
    except (ParameterError, ValueError) as exc:
        raise ConfigError(f"line {node.line}: {where}: {exc}") from None


def _i(n, name):
    return _typed(n, int, name)


def _f(n, name):
    return _typed(n, float, name)


def _placement(n, name):
    v = _typed(n, str, name)
    if v not in ("random", "highest"):
        raise ConfigError(f"line {n.line}: field {name!r} must be random or highest")
    return v


_BYZ_CONV = {
    "kind": lambda n, name: _enum(n, BehaviorKind, name),
    "fraction": _f,
    "probability": _f,
    "corruption": _i,
    "activation_time": _i,
    "placement": _placement,
}
_CRASH_CONV = {"count": _i, "fraction": _f, "activation_time": _i, "placement": _placement}
_WORKLOAD_CONV = {"proposals": _i, "inter_arrival": _i, "start": _i}
_STOP_CONV = {"max_time": _opt_int, "commit_target": _opt_int}
_NETWORK_CONV = {
    "latency": _int_pair,
    "drop_probability": _f,
    "proc_time": _i,
    "cores": _i,
    "partition": lambda n, name: _partition(n, name),
}
_PARAMS_CONV = {
    "r_init": _f,
    "r_thld": _f,
    "reputation_weight_m": _f,
    "posterior_threshold": _f,
    "election_timeout_range": _int_pair,
    "heartbeat_interval": _i,
    "rng_seed": _i,
    "report_timeout": _i,
    "verdict_timeout": _i,
    "persist_time": _i,
    "term_length": _opt_int,
    "typical_latency": _i,
    "bft_phases": _i,
}


def _partition(node: _Node, name: str):
    if node.value is None:
        return None
    if not isinstance(node.value, list) or len(node.value) != 2:
        raise ConfigError(f"line {node.line}: field {name!r} must be two lists of node ids")
    sides = []
    for side in node.value:
        if not isinstance(side.value, list):
            raise ConfigError(f"line {side.line}: field {name!r} must be two lists of node ids")
        sides.append(frozenset(_typed(x, int, name) for x in side.value))
    return (sides[0], sides[1])


def _behaviors(node: Optional[_Node]) -> tuple[tuple[int, BehaviorSpec], ...]:
    if node is None:
        return ()
    if not isinstance(node.value, list):
        raise ConfigError(f"line {node.line}: behaviors must be a list")
    out = {}
    allowed = {"node", "kind", "activation_time", "probability", "corruption"}
    for item in node.value:
        fields = _check_keys(item, allowed, "behaviors entry")
        if "node" not in fields or "kind" not in fields:
            raise ConfigError(f"line {item.line}: behaviors entry needs 'node' and 'kind'")
        nid = _i(fields["node"], "node")
        try:
            spec = BehaviorSpec(
                _enum(fields["kind"], BehaviorKind, "kind"),
                _i(fields["activation_time"], "activation_time") if "activation_time" in fields else 0,
                _f(fields["probability"], "probability") if "probability" in fields else 1.0,
                _i(fields["corruption"], "corruption") if "corruption" in fields else 6,
            )
        except ParameterError as exc:
            raise ConfigError(f"line {item.line}: {exc}") from None
        if nid in out:
            raise ConfigError(f"line {item.line}: node {nid} listed twice in behaviors")
        out[nid] = spec
    return tuple(sorted(out.items()))


def _seeds(node: Optional[_Node]) -> tuple[int, ...]:
    if node is None:
        return (0,)
    if isinstance(node.value, list):
        seeds = tuple(_i(x, "seeds") for x in node.value)
    elif isinstance(node.value, dict):
        f = _check_keys(node, {"start", "count"}, "seeds")
        start = _i(f["start"], "seeds.start") if "start" in f else 0
        count = _i(f.get("count", _Node(1, node.line)), "seeds.count")
        seeds = tuple(range(start, start + count))
    else:
        raise ConfigError(f"line {node.line}: seeds must be a list or {{start, count}}")
    if not seeds or len(set(seeds)) != len(seeds) or min(seeds) < 0:
        raise ConfigError(f"line {node.line}: seeds must be distinct non-negative integers")
    return seeds


def _point(root: dict[str, _Node], label: str) -> ScenarioConfig:
    sid = _typed(root["scenario_id"], str, "scenario_id")
    protocol = _typed(root["protocol"], str, "protocol") if "protocol" in root else "por"
    if protocol not in PROTOCOLS:
        raise ConfigError(f"line {root['protocol'].line}: protocol must be one of {', '.join(PROTOCOLS)}")
    n = _i(root["cluster_size"], "cluster_size") if "cluster_size" in root else 5
    if n < 1:
        raise ConfigError(f"line {root['cluster_size'].line}: cluster_size must be >= 1")
    params_node = root.get("params")
    params = ProtocolParams()
    if params_node is not None:
        items = _check_keys(params_node, set(_PARAMS_CONV), "params")
        params = dataclasses.replace(params, **{k: _PARAMS_CONV[k](v, f"params.{k}") for k, v in items.items()})
    violations = validate_params(params)
    if violations:
        line = params_node.line if params_node is not None else 1
        raise ConfigError(f"line {line}: parameter invariants violated: {'; '.join(violations)}")
    byz = _section(root.get("byzantine"), ByzantineSpec, "byzantine", _BYZ_CONV)
    if byz.kind not in (BehaviorKind.FALSE_REPORTER, BehaviorKind.TAMPERING_LEADER):
        raise ConfigError(f"line {root['byzantine'].line}: byzantine.kind must be false_reporter or tampering_leader")
    if not 0.0 <= byz.fraction < 1.0:
        raise ConfigError(f"line {root['byzantine'].line}: byzantine.fraction must lie in [0, 1)")
    try:
        BehaviorSpec(byz.kind, byz.activation_time, byz.probability, byz.corruption)
    except ParameterError as exc:
        raise ConfigError(f"line {root['byzantine'].line}: {exc}") from None
    crash = _section(root.get("crash"), CrashSpec, "crash", _CRASH_CONV)
    behaviors = _behaviors(root.get("behaviors"))
    for nid, _ in behaviors:
        if not 0 <= nid < n:
            raise ConfigError(f"line {root['behaviors'].line}: behavior node {nid} outside cluster of {n}")
    if crash.count < 0 or not 0.0 <= crash.fraction < 1.0:
        raise ConfigError(f"line {root['crash'].line}: crash.count must be >= 0 and crash.fraction in [0, 1)")
    if byz.count(n) + crash.total(n) + len(behaviors) > n:
        raise ConfigError(f"line 1: more faulty nodes than cluster_size={n}")
    network = _section(root.get("network"), NetworkModel, "network", _NETWORK_CONV)
    workload = _section(root.get("workload"), WorkloadSpec, "workload", _WORKLOAD_CONV)
    if workload.proposals < 0 or workload.inter_arrival < 0 or workload.start < 0:
        raise ConfigError(f"line {root['workload'].line}: workload values must be non-negative")
    stop = _section(root.get("stop"), StopSpec, "stop", _STOP_CONV)
    if stop.max_time is None and stop.commit_target is None and workload.proposals == 0:
        raise ConfigError("line 1: stop needs max_time or commit_target when the workload is empty")
    return ScenarioConfig(
        scenario_id=sid,
        protocol=protocol,
        cluster_size=n,
        byzantine=byz,
        crash=crash,
        behaviors=behaviors,
        params=params,
        network=network,
        workload=workload,
        stop=stop,
        seeds=_seeds(root.get("seeds")),
        label=label,
    )


def _set_dotted(root: _Node, path: str, value: _Node) -> None:
    parts = path.split(".")
    cur = root
    for p in parts[:-1]:
        nxt = cur.value.get(p)
        if nxt is None:
            nxt = _Node({}, value.line)
            cur.value[p] = nxt
        if not isinstance(nxt.value, dict):
            raise ConfigError(f"line {value.line}: grid key {path!r} does not name a mapping field")
        cur = nxt
    cur.value[parts[-1]] = value


def _label(key: str, value: Any) -> str:
    short = key.rsplit(".", 1)[-1]
    return f"{short}={value}"


def parse_config_text(text: str, source: str = "<config>") -> Experiment:
    root = load_raw(text, source)
    items = _check_keys(root, _TOP_KEYS, "scenario")
    if "scenario_id" not in items:
        raise ConfigError(f"{source}: line {root.line}: missing required key 'scenario_id'")
    grid_node = items.get("grid")
    axes: list[tuple[str, list[_Node]]] = []
    if grid_node is not None:
        grid = _check_keys(grid_node, set(grid_node.value), "grid")
        for key, vals in grid.items():
            top = key.split(".")[0]
            if top not in _TOP_KEYS - {"grid", "scenario_id", "seeds"}:
                raise ConfigError(f"line {vals.line}: unknown grid key {key!r}")
            if not isinstance(vals.value, list) or not vals.value:
                raise ConfigError(f"line {vals.line}: grid axis {key!r} must be a non-empty list")
            axes.append((key, vals.value))
    base = _Node({k: v for k, v in items.items() if k != "grid"}, root.line)
    points = []
    try:
        for combo in itertools.product(*(vals for _, vals in axes)):
            r = copy.deepcopy(base)
            labels = []
            for (key, _), val in zip(axes, combo):
                _set_dotted(r, key, val)
                labels.append(_label(key, _plain(val)))
            points.append(_point(r.value, ",".join(labels)))
    except ConfigError as exc:
        raise ConfigError(f"{source}: {exc}") from None
    return Experiment(points[0].scenario_id, points, _plain(root))


def parse_config(path: str | Path) -> Experiment:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(f"{p}: cannot read config: {exc.strerror}") from None
    return parse_config_text(text, str(p))
