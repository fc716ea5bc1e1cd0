"""Bundled demonstration networks.

Three synthetic networks at increasing scale, sized so that the full
pipeline (assemble, reduce, validate, control) runs on a desk machine:

* ``three_node``: one reservoir feeding one junction through a pump, one
  pipe to a terminal tank; 154 states at 150 segments.  Booster at the
  junction, sensor at the tank.  The booster-to-sensor travel time is
  3200 s = 160 samples.
* ``net1_style``: a nine-junction branched network with a pump, a tank
  and twelve pipes (1293 states); booster at the head junction, two
  sensors downstream.  The longest booster-to-sensor travel time is
  39750 s = 2650 samples, and the decay rate puts the dominant pole at
  magnitude 0.9983.
* ``net3_scale``: a generated 97-node, 119-link system with 29374 states,
  two boosters and three sensors, plus two dozen stagnant loop-closure
  pipes.  Used for the scale/performance properties.

Decay rates are deliberately aggressive compared to field bulk-decay
numbers; they keep settling times (and therefore snapshot lengths) at
desk scale.

The first two ship as JSON files (same directory) so the CLI can consume
them directly; a test pins the files to these generators.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from importlib import resources

from .netmodel import (
    HydraulicPeriod,
    HydraulicScenario,
    Link,
    Network,
    Node,
    parse_network,
    serialize_network,
)
from .wqss import IoPlacement

THREE_NODE_X0 = {"R1": 1.0, "J2": 0.5, "TK3": 0.3, "PM12": 0.75, "P23": 0.3}


@dataclass(frozen=True)
class FixtureBundle:
    name: str
    network: Network
    scenario: HydraulicScenario
    io: IoPlacement
    segments_per_pipe: int | dict[str, int]

    def assemble(self):
        from .wqss import assemble

        return assemble(self.network, self.scenario, self.io, self.segments_per_pipe)


def _pipe_diameter(flow_m3s: float, velocity_ms: float) -> float:
    return math.sqrt(4.0 * abs(flow_m3s) / (math.pi * abs(velocity_ms)))


def three_node() -> FixtureBundle:
    area = math.pi * 0.4**2 / 4.0
    q_pipe = 0.05 * area
    q_pump = 7.0e-3
    nodes = (
        Node(id="R1", kind="reservoir", source_concentration_mgl=1.0),
        Node(id="J2", kind="junction"),
        Node(id="TK3", kind="tank", tank_volume_l=200_000.0),
    )
    links = (
        Link(id="PM12", kind="pump", from_node="R1", to_node="J2"),
        Link(id="P23", kind="pipe", from_node="J2", to_node="TK3", length_m=160.0, diameter_m=0.4),
    )
    period = HydraulicPeriod(
        duration_s=86_400.0,
        flows_m3s={"PM12": q_pump, "P23": q_pipe},
        velocities_ms={"P23": 0.05},
        demands_m3s={"J2": q_pump - q_pipe},
        decay_per_s=2.1e-4,
    )
    return FixtureBundle(
        name="three_node",
        network=Network(name="three_node", nodes=nodes, links=links),
        scenario=HydraulicScenario(dt_s=20.0, periods=(period,)),
        io=IoPlacement(boosters=(("J2", 1.0),), sensors=("TK3",)),
        segments_per_pipe=150,
    )


# Net1-style pipe table: (id, from, to, flow m3/s, travel time s, segments).
_NET1_PIPES = (
    ("P1", "J10", "J11", 0.030, 6000.0, 90),
    ("P2", "J10", "J21", 0.020, 5000.0, 75),
    ("P3", "J11", "J12", 0.018, 12000.0, 180),
    ("P4", "J11", "J22", 0.012, 10000.0, 150),
    ("P5", "J12", "J13", 0.008, 11000.0, 165),
    ("P6", "J12", "TK2", 0.010, 3000.0, 45),
    ("P7", "J13", "J23", 0.008, 10750.0, 162),
    ("P8", "J21", "J22", 0.010, 9000.0, 135),
    ("P9", "J21", "J31", 0.010, 4000.0, 60),
    ("P10", "J22", "J23", 0.007, 8000.0, 120),
    ("P11", "J23", "J32", 0.005, 3000.0, 45),
    ("P12", "J31", "J32", 0.010, 3600.0, 54),
)

_NET1_VELOCITY = 0.25
_NET1_DEMANDS = {"J22": 0.015, "J23": 0.010, "J32": 0.015}


def net1_style() -> FixtureBundle:
    junctions = ("J10", "J11", "J12", "J13", "J21", "J22", "J23", "J31", "J32")
    nodes = (
        Node(id="R1", kind="reservoir", source_concentration_mgl=1.0),
        *(Node(id=j, kind="junction") for j in junctions),
        Node(id="TK2", kind="tank", tank_volume_l=200_000.0),
    )
    links = [Link(id="PM9", kind="pump", from_node="R1", to_node="J10")]
    flows = {"PM9": 0.05}
    velocities = {}
    segments = {}
    for pid, head, tail, q, travel, segs in _NET1_PIPES:
        links.append(
            Link(
                id=pid,
                kind="pipe",
                from_node=head,
                to_node=tail,
                length_m=_NET1_VELOCITY * travel,
                diameter_m=_pipe_diameter(q, _NET1_VELOCITY),
            )
        )
        flows[pid] = q
        velocities[pid] = _NET1_VELOCITY
        segments[pid] = segs
    period = HydraulicPeriod(
        duration_s=86_400.0,
        flows_m3s=flows,
        velocities_ms=velocities,
        demands_m3s=dict(_NET1_DEMANDS),
        decay_per_s=1.1343e-4,
    )
    return FixtureBundle(
        name="net1_style",
        network=Network(name="net1_style", nodes=nodes, links=tuple(links)),
        scenario=HydraulicScenario(dt_s=15.0, periods=(period,)),
        io=IoPlacement(boosters=(("J10", 1.0),), sensors=("J22", "J23")),
        segments_per_pipe=segments,
    )


def net3_scale() -> FixtureBundle:
    """Two pump-fed chains with branch tanks, 92 junctions, 117 pipes.

    Flows accumulate leaf demands up each chain; 24 extra zero-flow pipes
    close loops without moving water.  Segment counts put the state count
    at 29374.
    """
    chain_a = [f"J{i:03d}" for i in range(1, 47)]
    chain_b = [f"J{i:03d}" for i in range(47, 93)]
    nodes = [
        Node(id="R1", kind="reservoir", source_concentration_mgl=1.0),
        Node(id="R2", kind="reservoir", source_concentration_mgl=1.0),
    ]
    nodes += [Node(id=j, kind="junction") for j in chain_a + chain_b]
    nodes += [
        Node(id="TK1", kind="tank", tank_volume_l=50_000.0),
        Node(id="TK2", kind="tank", tank_volume_l=50_000.0),
        Node(id="TK3", kind="tank", tank_volume_l=50_000.0),
    ]

    links = [
        Link(id="PM1", kind="pump", from_node="R1", to_node="J001"),
        Link(id="PM2", kind="pump", from_node="R2", to_node="J047"),
    ]
    demand = 0.001
    demands = {j: demand for j in chain_a[1:] + chain_b[1:]}
    tank_feed = {("J010", "TK1"): 0.003, ("J046", "TK2"): 0.005, ("J092", "TK3"): 0.005}
    flows: dict[str, float] = {}
    velocities: dict[str, float] = {}
    segments: dict[str, int] = {}

    def add_chain(chain: list[str], prefix: str) -> float:
        # Pipe k carries everything consumed at or beyond its tail.
        downstream = [demands.get(j, 0.0) for j in chain]
        for (head, tail), feed in tank_feed.items():
            if head in chain:
                downstream[chain.index(head)] += feed
        total = 0.0
        for k in range(len(chain) - 1, 0, -1):
            total += downstream[k]
            pid = f"{prefix}{k:03d}"
            links.append(
                Link(
                    id=pid,
                    kind="pipe",
                    from_node=chain[k - 1],
                    to_node=chain[k],
                    length_m=75.0,
                    diameter_m=_pipe_diameter(total, 1.0),
                )
            )
            flows[pid] = total
            velocities[pid] = 1.0
            segments[pid] = 250
        return total + downstream[0]

    supply_a = add_chain(chain_a, "PA")
    supply_b = add_chain(chain_b, "PB")
    flows["PM1"] = supply_a
    flows["PM2"] = supply_b

    for n, ((head, tank), feed) in enumerate(tank_feed.items(), start=1):
        pid = f"PT{n}"
        links.append(
            Link(
                id=pid,
                kind="pipe",
                from_node=head,
                to_node=tank,
                length_m=75.0,
                diameter_m=_pipe_diameter(feed, 1.0),
            )
        )
        flows[pid] = feed
        velocities[pid] = 1.0
        segments[pid] = 250

    # Loop-closure pipes carrying no flow (closed): they add stagnant
    # volume and bring the pipe count to 117.
    for n in range(24):
        pid = f"PX{n:02d}"
        head = chain_a[2 * n]
        tail = chain_b[2 * n + 1]
        links.append(
            Link(id=pid, kind="pipe", from_node=head, to_node=tail, length_m=100.0, diameter_m=0.3)
        )
        segments[pid] = 252 if n == 0 else 251

    period = HydraulicPeriod(
        duration_s=3600.0,
        flows_m3s=flows,
        velocities_ms=velocities,
        demands_m3s=demands,
        decay_per_s=1.02e-2,
    )
    return FixtureBundle(
        name="net3_scale",
        network=Network(name="net3_scale", nodes=tuple(nodes), links=tuple(links)),
        scenario=HydraulicScenario(dt_s=0.25, periods=(period,)),
        io=IoPlacement(boosters=(("J084", 1.0), ("J085", 1.0)), sensors=("J086", "J087", "J089")),
        segments_per_pipe=segments,
    )


_GENERATORS = {
    "three_node": three_node,
    "net1_style": net1_style,
    "net3_scale": net3_scale,
}


def bundle(name: str) -> FixtureBundle:
    try:
        return _GENERATORS[name]()
    except KeyError:
        raise KeyError(f"unknown fixture {name!r}; have {sorted(_GENERATORS)}") from None


def fixture_json(name: str) -> str:
    """Network-file text for a bundled fixture (from package data)."""
    return resources.files("wqmor.fixtures_data").joinpath(f"{name}.json").read_text()


def write_fixture_files(directory) -> list[str]:
    """Materialize every fixture as a network JSON under `directory`."""
    import pathlib

    directory = pathlib.Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    written = []
    for name, gen in _GENERATORS.items():
        bundle = gen()
        path = directory / f"{name}.json"
        path.write_text(serialize_network(bundle.network, bundle.scenario))
        written.append(str(path))
    return written


def load_fixture_network(name: str):
    """Parse the bundled JSON (round-trips the generator output)."""
    return parse_network(fixture_json(name))
