"""Full-order water-quality state-space assembly and simulation.

States are disinfectant concentrations (mg/L), ordered nodes first
(junctions, reservoirs, tanks) then links (pipe segments pipe-major in
physical order, pumps, valves).  Within one hydraulic period the model is
linear time-invariant; a scenario with several periods yields a piecewise
sequence of LTI systems.

Update rules, one row per state (d = exp(-k_b dt) is the per-step decay
factor):

* pipe segments: explicit conservative advection in flux form.  Interior
  faces use the second-order three-point (Lax-Wendroff) flux, the inlet
  face takes the upstream node state and the outlet face the last segment
  (both first-order upwind, which keeps the total advected mass exactly
  telescoping).  At Courant number 1 every rule degenerates to an exact
  one-cell shift.
* junctions: flow-weighted average of the upstream link outlet states;
  instantaneous mixing, no residence volume, hence no decay on the row.
* tanks: completely mixed balance
  c(k+1) = d * [c + (dt/V) * sum q_in (c_in - c)].
* reservoirs: hold their concentration, scaled by the decay factor (the
  source stores finished water, so bulk decay applies there too; this also
  keeps every assembled system strictly stable whenever k_b > 0).
* pumps/valves: single state, one-step delay of the upstream node.

Boosters add a column to B converting an injected mass (mg per sample)
into a concentration increment via the receiving node's volume: the
per-step throughput volume for junctions and reservoirs, the stored
volume for tanks.  Sensors select node states in C; D is nonzero only for
collocated booster/sensor pairs.

The update is positivity-preserving only in the pure-upwind limit
(Courant number 1); away from it the second-order interior flux can
produce small dispersive undershoots, as any linear second-order scheme
must.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import CourantError, NetworkError, WqmorError
from .netmodel import (
    HydraulicPeriod,
    HydraulicScenario,
    Network,
    normalize_segments,
    validate_courant,
)

# simulate() stores full state trajectories only below this dimension
# unless told otherwise.
STATE_RECORD_LIMIT = 2000


@dataclass(frozen=True)
class StateLayout:
    """Bijection between model entities and state-vector indices."""

    roles: tuple[tuple[str, str, int | None], ...]  # (kind, entity id, segment index)
    node_index: dict[str, int] = field(repr=False)
    link_index: dict[str, int] = field(repr=False)  # pumps/valves only
    pipe_segments: dict[str, tuple[int, int]] = field(repr=False)  # pipe id -> (start, count)
    counts: dict[str, int] = field(repr=False)

    @property
    def n_nodes(self) -> int:
        return self.counts["n_J"] + self.counts["n_R"] + self.counts["n_TK"]

    @property
    def n_links(self) -> int:
        return (
            sum(count for _, count in self.pipe_segments.values())
            + self.counts["n_M"]
            + self.counts["n_V"]
        )

    @property
    def n_x(self) -> int:
        return len(self.roles)

    def index_of_node(self, node_id: str) -> int:
        try:
            return self.node_index[node_id]
        except KeyError:
            raise NetworkError(f"no state for node {node_id!r}") from None

    def segment_range(self, pipe_id: str) -> tuple[int, int]:
        start, count = self.pipe_segments[pipe_id]
        return start, start + count


def build_layout(network: Network, segments_per_pipe) -> StateLayout:
    segmap = normalize_segments(network, segments_per_pipe)
    roles: list[tuple[str, str, int | None]] = []
    node_index: dict[str, int] = {}
    link_index: dict[str, int] = {}
    pipe_segments: dict[str, tuple[int, int]] = {}

    for kind in ("junction", "reservoir", "tank"):
        for node in network.nodes_of_kind(kind):
            node_index[node.id] = len(roles)
            roles.append((kind, node.id, None))
    for pipe in network.links_of_kind("pipe"):
        pipe_segments[pipe.id] = (len(roles), segmap[pipe.id])
        for seg in range(1, segmap[pipe.id] + 1):
            roles.append(("pipe-segment", pipe.id, seg))
    for kind in ("pump", "valve"):
        for link in network.links_of_kind(kind):
            link_index[link.id] = len(roles)
            roles.append((kind, link.id, None))

    return StateLayout(
        roles=tuple(roles),
        node_index=node_index,
        link_index=link_index,
        pipe_segments=pipe_segments,
        counts=network.counts,
    )


@dataclass(frozen=True)
class IoPlacement:
    """Booster (input) and sensor (output) locations, all at nodes."""

    boosters: tuple[tuple[str, float], ...]  # (node id, injection gain)
    sensors: tuple[str, ...]

    def __post_init__(self):
        if not self.boosters:
            raise NetworkError("at least one booster is required")
        if not self.sensors:
            raise NetworkError("at least one sensor is required")

    @property
    def n_u(self) -> int:
        return len(self.boosters)

    @property
    def n_y(self) -> int:
        return len(self.sensors)

    def collocated_pairs(self) -> list[tuple[int, int]]:
        pairs = []
        for i, sensor in enumerate(self.sensors):
            for j, (node_id, _) in enumerate(self.boosters):
                if node_id == sensor:
                    pairs.append((i, j))
        return pairs


@dataclass(frozen=True)
class LtiSystem:
    """One (A, B, C, D) tuple with sparse A, sampled at dt seconds."""

    A: sp.csr_matrix
    B: np.ndarray
    C: sp.csr_matrix
    D: np.ndarray
    dt: float
    layout: StateLayout | None = None

    def __post_init__(self):
        n = self.A.shape[0]
        if self.A.shape != (n, n):
            raise WqmorError("A must be square")
        if self.B.shape[0] != n or self.C.shape[1] != n:
            raise WqmorError("B/C dimensions do not match A")
        if self.D.shape != (self.C.shape[0], self.B.shape[1]):
            raise WqmorError("D dimensions do not match B and C")
        if self.dt <= 0:
            raise WqmorError("dt must be > 0")

    @property
    def n_x(self) -> int:
        return self.A.shape[0]

    @property
    def n_u(self) -> int:
        return self.B.shape[1]

    @property
    def n_y(self) -> int:
        return self.C.shape[0]

    @property
    def sparsity(self) -> float:
        """Fraction of zero entries in A."""
        return 1.0 - self.A.nnz / float(self.n_x) ** 2


@dataclass(frozen=True)
class LtvSystem:
    """Piecewise-LTI system: ordered (system, step count) pieces."""

    pieces: tuple[tuple[LtiSystem, int], ...]

    def __post_init__(self):
        if not self.pieces:
            raise WqmorError("LTV system needs at least one piece")
        first = self.pieces[0][0]
        for lti, steps in self.pieces:
            if steps < 1:
                raise WqmorError("piece step count must be >= 1")
            if (lti.n_x, lti.n_u, lti.n_y) != (first.n_x, first.n_u, first.n_y):
                raise WqmorError("all LTV pieces must share dimensions")
            if lti.dt != first.dt:
                raise WqmorError("all LTV pieces must share dt")

    @property
    def n_x(self) -> int:
        return self.pieces[0][0].n_x

    @property
    def n_u(self) -> int:
        return self.pieces[0][0].n_u

    @property
    def n_y(self) -> int:
        return self.pieces[0][0].n_y

    @property
    def dt(self) -> float:
        return self.pieces[0][0].dt

    @property
    def layout(self) -> StateLayout | None:
        return self.pieces[0][0].layout

    @property
    def total_steps(self) -> int:
        return sum(steps for _, steps in self.pieces)

    def piece_at(self, k: int) -> LtiSystem:
        """LTI piece active at step k (the schedule repeats periodically)."""
        k = k % self.total_steps
        for lti, steps in self.pieces:
            if k < steps:
                return lti
            k -= steps
        raise AssertionError("unreachable")


def _pipe_inflow_sources(network, layout, period, node_id):
    """(state index, |q|) pairs for every link delivering water to a node."""
    sources = []
    for link in network.links:
        q = period.flow(link.id)
        if q > 0 and link.to_node == node_id:
            pass
        elif q < 0 and link.from_node == node_id:
            pass
        else:
            continue
        if link.kind == "pipe":
            start, count = layout.pipe_segments[link.id]
            outlet = start + count - 1 if q > 0 else start
            sources.append((outlet, abs(q)))
        else:
            sources.append((layout.link_index[link.id], abs(q)))
    return sources


def _node_outflow(network, period, node_id) -> float:
    total = 0.0
    for link in network.links:
        q = period.flow(link.id)
        if (q > 0 and link.from_node == node_id) or (q < 0 and link.to_node == node_id):
            total += abs(q)
    return total


def _booster_column_entry(network, layout, period, dt, node_id, gain):
    """B entry converting mg per sample to mg/L at the receiving node."""
    node = network.node(node_id)
    if node.kind == "tank":
        return gain / node.tank_volume_l
    if node.kind == "junction":
        throughput = sum(q for _, q in _pipe_inflow_sources(network, layout, period, node_id))
    else:  # reservoir: paced by what it sends out
        throughput = _node_outflow(network, period, node_id)
    if throughput <= 0:
        raise NetworkError(
            f"booster at {node_id!r}: node has no throughput in this period, "
            "flow-paced dosing is undefined"
        )
    return gain / (1000.0 * dt * throughput)


def _assemble_period(network, layout, period, io, dt) -> LtiSystem:
    n_x = layout.n_x
    decay = math.exp(-period.decay_per_s * dt)
    rows: list[np.ndarray] = []
    cols: list[np.ndarray] = []
    vals: list[np.ndarray] = []

    def put(i, j, v):
        rows.append(np.atleast_1d(np.asarray(i, dtype=np.int64)))
        cols.append(np.atleast_1d(np.asarray(j, dtype=np.int64)))
        vals.append(np.atleast_1d(np.asarray(v, dtype=np.float64)))

    # Node rows.
    for node in network.nodes:
        i = layout.node_index[node.id]
        if node.kind == "junction":
            sources = _pipe_inflow_sources(network, layout, period, node.id)
            total = sum(q for _, q in sources)
            if total <= 0:
                put(i, i, decay)  # stagnant junction: held water only decays
            else:
                for src, q in sources:
                    put(i, src, q / total)
        elif node.kind == "reservoir":
            put(i, i, decay)
        else:  # tank
            volume_m3 = node.tank_volume_l / 1000.0
            sources = _pipe_inflow_sources(network, layout, period, node.id)
            exchange = sum(dt * q / volume_m3 for _, q in sources)
            if exchange > 1.0:
                raise CourantError(
                    f"tank {node.id!r}: inflow exchanges {exchange:.3g} tank volumes "
                    "per step; reduce dt or the inflow"
                )
            put(i, i, decay * (1.0 - exchange))
            for src, q in sources:
                put(i, src, decay * dt * q / volume_m3)

    # Pipe rows, vectorized per pipe.
    for pipe in network.links_of_kind("pipe"):
        start, count = layout.pipe_segments[pipe.id]
        q = period.flow(pipe.id)
        if q == 0.0:
            idx = np.arange(start, start + count)
            put(idx, idx, np.full(count, decay))
            continue
        speed = abs(period.velocity(pipe.id))
        dx = pipe.length_m / count
        nu = speed * dt / dx
        if nu > 1.0 + 1e-9:
            raise CourantError(
                f"pipe {pipe.id!r}: Courant number {nu:.4g} > 1; "
                "increase dt resolution or reduce segments"
            )
        nu = min(nu, 1.0)
        upstream = network.node(pipe.from_node if q > 0 else pipe.to_node)
        up_idx = layout.node_index[upstream.id]
        # Physical segment indices in flow order.
        flow_idx = (
            np.arange(start, start + count)
            if q > 0
            else np.arange(start + count - 1, start - 1, -1)
        )
        # Inlet cell: upwind inlet face + second-order downstream face.
        put(flow_idx[0], up_idx, decay * nu)
        put(flow_idx[0], flow_idx[0], decay * (1.0 - nu * (1.0 + nu) / 2.0))
        put(flow_idx[0], flow_idx[1], decay * (-nu * (1.0 - nu) / 2.0))
        # Interior cells: classical three-point second-order update.
        if count > 2:
            interior = flow_idx[1:-1]
            put(interior, flow_idx[:-2], np.full(count - 2, decay * nu * (1.0 + nu) / 2.0))
            put(interior, interior, np.full(count - 2, decay * (1.0 - nu**2)))
            put(interior, flow_idx[2:], np.full(count - 2, decay * (-nu * (1.0 - nu) / 2.0)))
        # Outlet cell: upwind closure.
        put(flow_idx[-1], flow_idx[-2], decay * nu)
        put(flow_idx[-1], flow_idx[-1], decay * (1.0 - nu))

    # Pump/valve rows: one-step delay of the upstream node.
    for kind in ("pump", "valve"):
        for link in network.links_of_kind(kind):
            i = layout.link_index[link.id]
            q = period.flow(link.id)
            if q == 0.0:
                put(i, i, decay)
            else:
                upstream = link.from_node if q > 0 else link.to_node
                put(i, layout.node_index[upstream], decay)

    A = sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(n_x, n_x),
    )

    B = np.zeros((n_x, io.n_u))
    for j, (node_id, gain) in enumerate(io.boosters):
        B[layout.index_of_node(node_id), j] = _booster_column_entry(
            network, layout, period, dt, node_id, gain
        )
    C = sp.csr_matrix(
        (np.ones(io.n_y), (np.arange(io.n_y), [layout.index_of_node(s) for s in io.sensors])),
        shape=(io.n_y, n_x),
    )
    D = np.zeros((io.n_y, io.n_u))
    for i, j in io.collocated_pairs():
        D[i, j] = B[layout.index_of_node(io.sensors[i]), j]

    return LtiSystem(A=A, B=B, C=C, D=D, dt=dt, layout=layout)


def assemble(
    network: Network,
    scenario: HydraulicScenario,
    io: IoPlacement,
    segments_per_pipe,
) -> LtvSystem:
    """Assemble the piecewise-LTI transport model, one piece per period.

    Fails fast on a Courant violation in any period, on boosters/sensors
    placed anywhere but a node, and on tanks exchanging more than one
    volume per step.
    """
    for node_id in [b for b, _ in io.boosters] + list(io.sensors):
        try:
            network.node(node_id)
        except NetworkError:
            try:
                network.link(node_id)
            except NetworkError:
                raise NetworkError(f"booster/sensor location {node_id!r} does not exist") from None
            raise NetworkError(
                f"booster/sensor at {node_id!r}: link-interior placement is unsupported, "
                "use an adjacent node"
            ) from None
    validate_courant(network, scenario, segments_per_pipe).require_ok()
    layout = build_layout(network, segments_per_pipe)
    pieces = []
    for period in scenario.periods:
        lti = _assemble_period(network, layout, period, io, scenario.dt_s)
        pieces.append((lti, scenario.steps(period)))
    return LtvSystem(pieces=tuple(pieces))


@dataclass(frozen=True)
class SimResult:
    """Trajectories from one simulation run; y[k] = C x[k] + D u[k]."""

    t: np.ndarray  # (steps,) seconds
    u: np.ndarray  # (steps, n_u)
    y: np.ndarray  # (steps, n_y)
    x: np.ndarray | None  # (steps + 1, n_x) when recorded
    dt: float

    @property
    def steps(self) -> int:
        return len(self.t)

    def to_csv(self, path) -> None:
        header = (
            ["t"]
            + [f"u{j}" for j in range(self.u.shape[1])]
            + [f"y{i}" for i in range(self.y.shape[1])]
        )
        data = np.column_stack([self.t, self.u, self.y])
        with open(path, "w") as fh:
            fh.write(",".join(header) + "\n")
            for row in data:
                fh.write(",".join(format(v, ".12g") for v in row) + "\n")


def _input_array(u, steps: int, n_u: int) -> np.ndarray:
    if u is None:
        return np.zeros((steps, n_u))
    u = np.asarray(u, dtype=float)
    if u.ndim == 0:
        return np.full((steps, n_u), float(u))
    if u.ndim == 1:
        if u.shape[0] != n_u:
            raise WqmorError(f"constant input has {u.shape[0]} channels, expected {n_u}")
        return np.tile(u, (steps, 1))
    if u.shape != (steps, n_u):
        raise WqmorError(f"input shaped {u.shape}, expected ({steps}, {n_u})")
    return u


def simulate(system, u, x0=None, steps: int | None = None, record_states: bool | None = None) -> SimResult:
    """Run the recursion x(k+1) = A x(k) + B u(k) with sparse products only.

    `u` may be None (zero input), a constant vector, or a (steps, n_u)
    array; `steps` is required unless implied by the input array.  For
    piecewise systems the period schedule repeats when the horizon
    outruns it.
    """
    if steps is None:
        u_arr = np.asarray(u, dtype=float) if u is not None else None
        if u_arr is None or u_arr.ndim != 2:
            raise WqmorError("steps must be given unless u is a full (steps, n_u) array")
        steps = u_arr.shape[0]
    if steps < 1:
        raise WqmorError("steps must be >= 1")

    n_x, n_u, n_y = system.n_x, system.n_u, system.n_y
    u = _input_array(u, steps, n_u)
    x = np.zeros(n_x) if x0 is None else np.asarray(x0, dtype=float).copy()
    if x.shape != (n_x,):
        raise WqmorError(f"x0 shaped {x.shape}, expected ({n_x},)")
    if record_states is None:
        record_states = n_x <= STATE_RECORD_LIMIT

    pieces = system.pieces if isinstance(system, LtvSystem) else ((system, steps),)
    y = np.empty((steps, n_y))
    xs = np.empty((steps + 1, n_x)) if record_states else None
    if xs is not None:
        xs[0] = x

    k = 0
    while k < steps:
        for lti, piece_steps in pieces:
            span = min(piece_steps, steps - k)
            A, B, C, D = lti.A, lti.B, lti.C, lti.D
            for _ in range(span):
                y[k] = C @ x + D @ u[k]
                x = A @ x + B @ u[k]
                k += 1
                if xs is not None:
                    xs[k] = x
            if k >= steps:
                break

    t = np.arange(steps) * system.dt
    return SimResult(t=t, u=u, y=y, x=xs, dt=system.dt)


def initial_state(layout: StateLayout, values: dict[str, float]) -> np.ndarray:
    """Concentration vector from an entity-keyed map (mg/L).

    Keys are node ids or link ids; a pipe id fills all its segments.
    Unlisted states start at zero.
    """
    x0 = np.zeros(layout.n_x)
    for entity, value in values.items():
        if entity in layout.node_index:
            x0[layout.node_index[entity]] = value
        elif entity in layout.link_index:
            x0[layout.link_index[entity]] = value
        elif entity in layout.pipe_segments:
            start, stop = layout.segment_range(entity)
            x0[start:stop] = value
        else:
            raise NetworkError(f"initial state names unknown entity {entity!r}")
    return x0


def mass_weights(lti: LtiSystem, network: Network, period: HydraulicPeriod) -> np.ndarray:
    """Volume weights (m^3) so that weights @ x is total stored mass (g).

    Pipe segments weigh their cell volume, tanks their stored volume,
    junctions / pumps / valves the volume passing through them per step
    (they hold exactly one step of throughput).  Reservoirs are boundary
    states and weigh zero.
    """
    layout = lti.layout
    if layout is None:
        raise WqmorError("mass weights need a layout-carrying system")
    w = np.zeros(layout.n_x)
    for node in network.nodes:
        i = layout.node_index[node.id]
        if node.kind == "tank":
            w[i] = node.tank_volume_l / 1000.0
        elif node.kind == "junction":
            w[i] = lti.dt * sum(
                q for _, q in _pipe_inflow_sources(network, layout, period, node.id)
            )
    for pipe in network.links_of_kind("pipe"):
        start, count = layout.pipe_segments[pipe.id]
        w[start : start + count] = pipe.area_m2 * pipe.length_m / count
    for kind in ("pump", "valve"):
        for link in network.links_of_kind(kind):
            w[layout.link_index[link.id]] = lti.dt * abs(period.flow(link.id))
    return w


def export_triplets(lti: LtiSystem, path) -> None:
    """Plain-text sparse dump for cross-checking with external tools.

    First line: ``n_x n_u n_y dt``.  Then one section per matrix headed
    by ``# A`` etc., with ``row col value`` lines (documented in
    docs/formats.md).
    """
    with open(path, "w") as fh:
        fh.write(f"{lti.n_x} {lti.n_u} {lti.n_y} {format(lti.dt, '.17g')}\n")
        coo = lti.A.tocoo()
        fh.write("# A\n")
        for i, j, v in zip(coo.row, coo.col, coo.data):
            fh.write(f"{i} {j} {format(v, '.17g')}\n")
        fh.write("# B\n")
        for i, j in zip(*np.nonzero(lti.B)):
            fh.write(f"{i} {j} {format(lti.B[i, j], '.17g')}\n")
        coo = lti.C.tocoo()
        fh.write("# C\n")
        for i, j, v in zip(coo.row, coo.col, coo.data):
            fh.write(f"{i} {j} {format(v, '.17g')}\n")
        fh.write("# D\n")
        for i, j in zip(*np.nonzero(lti.D)):
            fh.write(f"{i} {j} {format(lti.D[i, j], '.17g')}\n")
