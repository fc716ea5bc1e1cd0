"""Water-network description and hydraulic scenario.

A network is a directed graph of junctions, reservoirs and tanks connected
by pipes, pumps and valves.  Hydraulics (per-period flows, velocities and
demands) are inputs, never computed here: transport assembly consumes them
as given.  Objects are immutable after parsing and safe to share across
threads.

The on-disk format is JSON with units spelled out in field names; the
exact schema is documented in ``docs/network_schema.md`` (version 1).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

from .errors import CourantError, NetworkError, NetworkSyntaxError

SCHEMA_VERSION = 1

NODE_KINDS = ("junction", "reservoir", "tank")
LINK_KINDS = ("pipe", "pump", "valve")

# Relative tolerance for the per-junction flow balance check.
FLOW_BALANCE_RTOL = 1e-9


@dataclass(frozen=True)
class Node:
    id: str
    kind: str
    tank_volume_l: float | None = None
    source_concentration_mgl: float | None = None

    def __post_init__(self):
        if self.kind not in NODE_KINDS:
            raise NetworkError(f"node {self.id!r}: unknown kind {self.kind!r}")
        if self.kind == "tank":
            if self.tank_volume_l is None or self.tank_volume_l <= 0:
                raise NetworkError(f"tank {self.id!r}: tank_volume_l must be > 0")
        elif self.tank_volume_l is not None:
            raise NetworkError(f"node {self.id!r}: tank_volume_l only valid for tanks")
        if self.source_concentration_mgl is not None:
            if self.kind != "reservoir":
                raise NetworkError(
                    f"node {self.id!r}: source_concentration_mgl only valid for reservoirs"
                )
            if self.source_concentration_mgl < 0:
                raise NetworkError(f"reservoir {self.id!r}: source concentration must be >= 0")


@dataclass(frozen=True)
class Link:
    id: str
    kind: str
    from_node: str
    to_node: str
    length_m: float | None = None
    diameter_m: float | None = None

    def __post_init__(self):
        if self.kind not in LINK_KINDS:
            raise NetworkError(f"link {self.id!r}: unknown kind {self.kind!r}")
        if self.from_node == self.to_node:
            raise NetworkError(f"link {self.id!r}: endpoints must be distinct nodes")
        if self.kind == "pipe":
            if self.length_m is None or self.length_m <= 0:
                raise NetworkError(f"pipe {self.id!r}: length_m must be > 0")
            if self.diameter_m is None or self.diameter_m <= 0:
                raise NetworkError(f"pipe {self.id!r}: diameter_m must be > 0")
        else:
            if self.length_m is not None or self.diameter_m is not None:
                raise NetworkError(f"{self.kind} {self.id!r}: carries no length or diameter")

    @property
    def area_m2(self) -> float:
        return math.pi * self.diameter_m**2 / 4.0


@dataclass(frozen=True)
class Network:
    name: str
    nodes: tuple[Node, ...]
    links: tuple[Link, ...]
    _node_index: dict[str, Node] = field(init=False, repr=False, compare=False)
    _link_index: dict[str, Link] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not self.nodes:
            raise NetworkError("network has an empty node list")
        node_index: dict[str, Node] = {}
        for node in self.nodes:
            if node.id in node_index:
                raise NetworkError(f"duplicate node id {node.id!r}")
            node_index[node.id] = node
        link_index: dict[str, Link] = {}
        for link in self.links:
            if link.id in link_index:
                raise NetworkError(f"duplicate link id {link.id!r}")
            for endpoint in (link.from_node, link.to_node):
                if endpoint not in node_index:
                    raise NetworkError(f"link {link.id!r}: unknown node {endpoint!r}")
            link_index[link.id] = link
        object.__setattr__(self, "_node_index", node_index)
        object.__setattr__(self, "_link_index", link_index)

    def node(self, node_id: str) -> Node:
        try:
            return self._node_index[node_id]
        except KeyError:
            raise NetworkError(f"unknown node {node_id!r}") from None

    def link(self, link_id: str) -> Link:
        try:
            return self._link_index[link_id]
        except KeyError:
            raise NetworkError(f"unknown link {link_id!r}") from None

    def nodes_of_kind(self, kind: str) -> list[Node]:
        return [n for n in self.nodes if n.kind == kind]

    def links_of_kind(self, kind: str) -> list[Link]:
        return [l for l in self.links if l.kind == kind]

    @property
    def counts(self) -> dict[str, int]:
        """Derived component counts {n_J, n_R, n_TK, n_P, n_M, n_V}."""
        return {
            "n_J": sum(1 for n in self.nodes if n.kind == "junction"),
            "n_R": sum(1 for n in self.nodes if n.kind == "reservoir"),
            "n_TK": sum(1 for n in self.nodes if n.kind == "tank"),
            "n_P": sum(1 for l in self.links if l.kind == "pipe"),
            "n_M": sum(1 for l in self.links if l.kind == "pump"),
            "n_V": sum(1 for l in self.links if l.kind == "valve"),
        }


@dataclass(frozen=True)
class HydraulicPeriod:
    """Constant-hydraulics interval: one LTI piece of the transport model.

    Flows are signed (negative reverses the declared link direction);
    demands are consumption, so the balance at each junction is
    inflows = outflows + demand.
    """

    duration_s: float
    flows_m3s: dict[str, float]
    velocities_ms: dict[str, float]
    demands_m3s: dict[str, float]
    decay_per_s: float

    def flow(self, link_id: str) -> float:
        return self.flows_m3s.get(link_id, 0.0)

    def velocity(self, pipe_id: str) -> float:
        return self.velocities_ms.get(pipe_id, 0.0)

    def demand(self, junction_id: str) -> float:
        return self.demands_m3s.get(junction_id, 0.0)


@dataclass(frozen=True)
class HydraulicScenario:
    dt_s: float
    periods: tuple[HydraulicPeriod, ...]

    def __post_init__(self):
        if self.dt_s <= 0:
            raise NetworkError("scenario: dt_s must be > 0")
        if not self.periods:
            raise NetworkError("scenario: periods must be nonempty")

    def steps(self, period: HydraulicPeriod) -> int:
        """Number of samples in a period (its duration in units of dt)."""
        ratio = period.duration_s / self.dt_s
        steps = round(ratio)
        if steps < 1 or abs(ratio - steps) > 1e-9 * max(1.0, steps):
            raise NetworkError(
                f"period duration {period.duration_s} s is not a positive "
                f"integer multiple of dt = {self.dt_s} s"
            )
        return steps


def _require(mapping: dict, key: str, context: str):
    if key not in mapping:
        raise NetworkError(f"{context}: missing required key {key!r}")
    return mapping[key]


def _validate_period(network: Network, period: HydraulicPeriod, index: int) -> None:
    ctx = f"period {index}"
    if period.duration_s <= 0:
        raise NetworkError(f"{ctx}: duration_s must be > 0")
    if period.decay_per_s < 0:
        raise NetworkError(f"{ctx}: decay_per_s must be >= 0")
    for link_id in period.flows_m3s:
        network.link(link_id)
    for junction_id in period.demands_m3s:
        if network.node(junction_id).kind != "junction":
            raise NetworkError(f"{ctx}: demand given for non-junction {junction_id!r}")
    for pipe_id, velocity in period.velocities_ms.items():
        link = network.link(pipe_id)
        if link.kind != "pipe":
            raise NetworkError(f"{ctx}: velocity given for non-pipe {pipe_id!r}")
        flow = period.flow(pipe_id)
        if flow != 0.0 and velocity == 0.0:
            raise NetworkError(f"{ctx}: pipe {pipe_id!r} carries flow but has zero velocity")
        if flow != 0.0 and velocity != 0.0 and (flow > 0) != (velocity > 0):
            raise NetworkError(f"{ctx}: pipe {pipe_id!r} velocity sign disagrees with flow sign")
    for link in network.links:
        if link.kind == "pipe" and period.flow(link.id) != 0.0:
            if period.velocity(link.id) == 0.0:
                raise NetworkError(
                    f"{ctx}: pipe {link.id!r} carries flow but has no velocity entry"
                )
    # Flow balance at every junction: inflows = outflows + demand.
    for node in network.nodes:
        if node.kind != "junction":
            continue
        inflow = outflow = 0.0
        for link in network.links:
            q = period.flow(link.id)
            if link.to_node == node.id:
                inflow += max(q, 0.0)
                outflow += max(-q, 0.0)
            elif link.from_node == node.id:
                outflow += max(q, 0.0)
                inflow += max(-q, 0.0)
        imbalance = inflow - outflow - period.demand(node.id)
        scale = max(inflow, outflow, abs(period.demand(node.id)), 1e-30)
        if abs(imbalance) > FLOW_BALANCE_RTOL * scale:
            raise NetworkError(
                f"{ctx}: flow conservation violated at junction {node.id!r} "
                f"(inflow {inflow:.6g}, outflow {outflow:.6g}, "
                f"demand {period.demand(node.id):.6g})"
            )


def parse_network(text: str | bytes) -> tuple[Network, HydraulicScenario]:
    """Parse and validate a network file (UTF-8 JSON, schema version 1).

    Returns the network and its hydraulic scenario.  Syntax problems raise
    :class:`NetworkSyntaxError` with line/column; semantic problems raise
    :class:`NetworkError` naming the offending entity.
    """
    if isinstance(text, bytes):
        text = text.decode("utf-8")
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise NetworkSyntaxError(
            f"invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}",
            lineno=exc.lineno,
            colno=exc.colno,
        ) from exc
    if not isinstance(raw, dict):
        raise NetworkError("top level must be a JSON object")

    version = raw.get("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise NetworkError(f"unsupported schema_version {version!r}")

    nodes = []
    for entry in _require(raw, "nodes", "network"):
        nodes.append(
            Node(
                id=str(_require(entry, "id", "node")),
                kind=str(_require(entry, "kind", f"node {entry.get('id')!r}")),
                tank_volume_l=entry.get("tank_volume_l"),
                source_concentration_mgl=entry.get("source_concentration_mgl"),
            )
        )
    links = []
    for entry in _require(raw, "links", "network"):
        links.append(
            Link(
                id=str(_require(entry, "id", "link")),
                kind=str(_require(entry, "kind", f"link {entry.get('id')!r}")),
                from_node=str(_require(entry, "from", f"link {entry.get('id')!r}")),
                to_node=str(_require(entry, "to", f"link {entry.get('id')!r}")),
                length_m=entry.get("length_m"),
                diameter_m=entry.get("diameter_m"),
            )
        )
    network = Network(name=str(raw.get("name", "unnamed")), nodes=tuple(nodes), links=tuple(links))

    scenario_raw = _require(raw, "scenario", "network")
    periods = []
    for i, entry in enumerate(_require(scenario_raw, "periods", "scenario")):
        periods.append(
            HydraulicPeriod(
                duration_s=float(_require(entry, "duration_s", f"period {i}")),
                flows_m3s={str(k): float(v) for k, v in _require(entry, "flows", f"period {i}").items()},
                velocities_ms={str(k): float(v) for k, v in entry.get("velocities", {}).items()},
                demands_m3s={str(k): float(v) for k, v in entry.get("demands", {}).items()},
                decay_per_s=float(entry.get("decay_per_s", 0.0)),
            )
        )
    scenario = HydraulicScenario(dt_s=float(_require(scenario_raw, "dt_s", "scenario")), periods=tuple(periods))
    for i, period in enumerate(scenario.periods):
        scenario.steps(period)
        _validate_period(network, period, i)
    return network, scenario


def serialize_network(network: Network, scenario: HydraulicScenario) -> str:
    """Inverse of :func:`parse_network` (round-trips exactly)."""
    doc = {
        "schema_version": SCHEMA_VERSION,
        "name": network.name,
        "nodes": [],
        "links": [],
        "scenario": {
            "dt_s": scenario.dt_s,
            "periods": [
                {
                    "duration_s": p.duration_s,
                    "flows": p.flows_m3s,
                    "velocities": p.velocities_ms,
                    "demands": p.demands_m3s,
                    "decay_per_s": p.decay_per_s,
                }
                for p in scenario.periods
            ],
        },
    }
    for node in network.nodes:
        entry: dict = {"id": node.id, "kind": node.kind}
        if node.tank_volume_l is not None:
            entry["tank_volume_l"] = node.tank_volume_l
        if node.source_concentration_mgl is not None:
            entry["source_concentration_mgl"] = node.source_concentration_mgl
        doc["nodes"].append(entry)
    for link in network.links:
        entry = {"id": link.id, "kind": link.kind, "from": link.from_node, "to": link.to_node}
        if link.length_m is not None:
            entry["length_m"] = link.length_m
        if link.diameter_m is not None:
            entry["diameter_m"] = link.diameter_m
        doc["links"].append(entry)
    return json.dumps(doc, indent=2)


def normalize_segments(network: Network, segments_per_pipe) -> dict[str, int]:
    """Expand a uniform segment count or per-pipe map to a complete map."""
    pipes = network.links_of_kind("pipe")
    if isinstance(segments_per_pipe, int):
        segmap = {p.id: segments_per_pipe for p in pipes}
    else:
        segmap = dict(segments_per_pipe)
        missing = [p.id for p in pipes if p.id not in segmap]
        if missing:
            raise NetworkError(f"segments_per_pipe missing entries for pipes {missing}")
    for pipe_id, count in segmap.items():
        if network.link(pipe_id).kind != "pipe":
            raise NetworkError(f"segment count given for non-pipe {pipe_id!r}")
        if count < 2:
            raise NetworkError(f"pipe {pipe_id!r}: needs at least 2 segments, got {count}")
    return segmap


@dataclass(frozen=True)
class CourantEntry:
    pipe_id: str
    worst_nu: float
    worst_period: int
    ok: bool


@dataclass(frozen=True)
class CourantReport:
    entries: tuple[CourantEntry, ...]

    @property
    def ok(self) -> bool:
        return all(e.ok for e in self.entries)

    def worst(self) -> CourantEntry | None:
        return max(self.entries, key=lambda e: e.worst_nu, default=None)

    def require_ok(self) -> None:
        bad = [e for e in self.entries if not e.ok]
        if bad:
            worst = max(bad, key=lambda e: e.worst_nu)
            raise CourantError(
                f"advection stability violated: pipe {worst.pipe_id!r} has "
                f"Courant number {worst.worst_nu:.4g} > 1 in period {worst.worst_period}"
            )


# Courant numbers this close to 1 count as the stable boundary case.
COURANT_BOUNDARY_TOL = 1e-9


def validate_courant(network: Network, scenario: HydraulicScenario, segments_per_pipe) -> CourantReport:
    """Per-pipe worst Courant number nu = |v| dt / dx over all periods.

    Report-only: callers decide whether nu > 1 is fatal (assembly does).
    """
    segmap = normalize_segments(network, segments_per_pipe)
    entries = []
    for pipe in network.links_of_kind("pipe"):
        dx = pipe.length_m / segmap[pipe.id]
        worst_nu, worst_period = 0.0, 0
        for i, period in enumerate(scenario.periods):
            nu = abs(period.velocity(pipe.id)) * scenario.dt_s / dx
            if nu > worst_nu:
                worst_nu, worst_period = nu, i
        entries.append(
            CourantEntry(
                pipe_id=pipe.id,
                worst_nu=worst_nu,
                worst_period=worst_period,
                ok=worst_nu <= 1.0 + COURANT_BOUNDARY_TOL,
            )
        )
    return CourantReport(entries=tuple(entries))
