"""Model order reduction: balanced truncation, POD, balanced POD, and a
stability-preserving balanced POD wrapper.

All methods produce an oblique projection pair (T_r, S_r) and the reduced
tuple A_r = S_r A T_r, B_r = S_r B, C_r = C T_r, D_r = D.  S_r is stored
alongside T_r and is never recomputed as a pseudo-inverse.

* Balanced truncation factorizes both exact Gramians and takes the SVD of
  L_O^T L_C (square-root balancing).  This is mathematically the
  eigendecomposition of W_O W_C: the singular values are the Hankel
  singular values, the projections diagonalize both Gramians.  Stability
  of the reduced model is guaranteed; cost is cubic in n_x, so it is
  refused above the dense threshold.
* POD eigendecomposes the small cross product X_m^T X_m of the
  impulse-response snapshot (the m-step controllability Gramian in
  factored form).  Cheap at any scale, but observability-blind: the
  result records its spectral radius because stability is not preserved.
* Balanced POD takes a truncated SVD of the impulse-response cross
  matrix Y_m^T X_m.  That matrix is block-Hankel in the impulse-response
  outputs, so it is assembled directly from 2m - 1 output samples without
  ever forming the snapshots; the projections are then accumulated in a
  streaming pass when the snapshots exceed the memory budget.
* The stability-preserving wrapper either picks the snapshot length from
  the transport/settling floors (a-priori) or repairs an unstable reduced
  matrix through the convex stabilization of :mod:`wqmor.stabilize`
  (a-posteriori).  Either way the returned model is strictly stable.

Reduced models persist to a binary-free JSON container (see
docs/formats.md).
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, replace

import networkx as nx
import numpy as np
import scipy.linalg
import scipy.sparse as sp

from .errors import BudgetError, NetworkError, NumericalError, RankError, WqmorError
from .gramians import (
    DENSE_THRESHOLD,
    SNAPSHOT_BUDGET_BYTES,
    ctrl_gramian,
    impulse_state_snapshot,
    obs_gramian,
)
from .netmodel import HydraulicScenario, Network
from .sim import dominant_pole, spectral_radius
from .wqss import IoPlacement, LtiSystem, LtvSystem

# Order selection captures this cumulative spectrum fraction by default.
ENERGY_DEFAULT = 0.9999

# Spectral radii above 1 - RHO_MARGIN count as unstable for the
# stability-preserving route.
RHO_MARGIN = 1e-9

# Singular values below this fraction of the largest are numerically rank
# deficient and are truncated with a warning.
SV_FLOOR = 1e-12

# Full SVD of the cross matrix up to this edge length; randomized above.
_FULL_SVD_LIMIT = 3500

# Priori stabilization: snapshot length = ceil(safety * floor).
SAFETY_FACTOR = 1.5


@dataclass(frozen=True)
class SpectrumReport:
    """Descending spectrum with the cumulative-energy rule attached."""

    values: np.ndarray
    kind: str  # "hankel" | "pod-eigen"

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if np.any(v < -1e-12 * (v[0] if v.size else 1.0)):
            raise WqmorError("spectrum values must be nonnegative")
        if np.any(np.diff(v) > 1e-12 * (v[0] if v.size else 1.0)):
            raise WqmorError("spectrum values must be descending")
        object.__setattr__(self, "values", np.maximum(v, 0.0))

    def energy(self, n: int) -> float:
        total = self.values.sum()
        if total == 0.0:
            return 1.0
        return float(self.values[: max(n, 0)].sum() / total)

    def order_for_energy(self, level: float) -> int:
        total = self.values.sum()
        if total == 0.0:
            return 1
        cum = np.cumsum(self.values) / total
        return int(np.searchsorted(cum, level - 1e-15) + 1)

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("index,value,cumulative_energy\n")
            total = self.values.sum() or 1.0
            cum = 0.0
            for i, v in enumerate(self.values, start=1):
                cum += v
                fh.write(f"{i},{format(v, '.12g')},{format(cum / total, '.12g')}\n")


@dataclass(frozen=True)
class ReducedModel:
    """Reduced tuple plus the projections and provenance that made it."""

    A_r: np.ndarray
    B_r: np.ndarray
    C_r: np.ndarray
    D_r: np.ndarray
    T_r: np.ndarray
    S_r: np.ndarray
    method: str  # "BT" | "POD" | "BPOD" | "SBPOD"
    n_r: int
    dt: float
    m: int | None = None
    energy_captured: float = float("nan")
    stabilized_by: str = "none"  # "none" | "posterior" | "priori"
    rho: float = float("nan")

    @property
    def n_u(self) -> int:
        return self.B_r.shape[1]

    @property
    def n_y(self) -> int:
        return self.C_r.shape[0]

    def to_lti(self, dt: float | None = None) -> LtiSystem:
        return LtiSystem(
            A=sp.csr_matrix(self.A_r),
            B=self.B_r,
            C=sp.csr_matrix(self.C_r),
            D=self.D_r,
            dt=self.dt if dt is None else dt,
        )

    def project_state(self, x: np.ndarray) -> np.ndarray:
        return self.S_r @ np.asarray(x, dtype=float)

    def save(self, path) -> None:
        doc = {
            "format": "wqmor-reduced-model",
            "version": 1,
            "method": self.method,
            "n_r": self.n_r,
            "dt": self.dt,
            "m": self.m,
            "energy_captured": self.energy_captured,
            "stabilized_by": self.stabilized_by,
            "rho": self.rho,
            "A_r": self.A_r.tolist(),
            "B_r": self.B_r.tolist(),
            "C_r": self.C_r.tolist(),
            "D_r": self.D_r.tolist(),
            "T_r": self.T_r.tolist(),
            "S_r": self.S_r.tolist(),
        }
        with open(path, "w") as fh:
            json.dump(doc, fh)

    @staticmethod
    def load(path) -> "ReducedModel":
        with open(path) as fh:
            doc = json.load(fh)
        if doc.get("format") != "wqmor-reduced-model":
            raise WqmorError(f"{path}: not a reduced-model container")
        return ReducedModel(
            A_r=np.asarray(doc["A_r"], dtype=float),
            B_r=np.asarray(doc["B_r"], dtype=float),
            C_r=np.asarray(doc["C_r"], dtype=float),
            D_r=np.asarray(doc["D_r"], dtype=float),
            T_r=np.asarray(doc["T_r"], dtype=float),
            S_r=np.asarray(doc["S_r"], dtype=float),
            method=doc["method"],
            n_r=doc["n_r"],
            dt=doc["dt"],
            m=doc.get("m"),
            energy_captured=doc.get("energy_captured", float("nan")),
            stabilized_by=doc.get("stabilized_by", "none"),
            rho=doc.get("rho", float("nan")),
        )


def _select_order(spectrum: SpectrumReport, order: int | None, energy: float | None, n_max: int) -> int:
    if order is not None and energy is not None:
        raise WqmorError("give either a fixed order or an energy level, not both")
    if order is not None:
        if not 1 <= order <= n_max:
            raise WqmorError(f"requested order {order} outside [1, {n_max}]")
        return int(order)
    level = ENERGY_DEFAULT if energy is None else float(energy)
    if not 0.0 < level <= 1.0:
        raise WqmorError(f"energy level must be in (0, 1], got {level}")
    return min(spectrum.order_for_energy(level), n_max)


def _reduced_from_projections(sys: LtiSystem, T_r, S_r, method, m, spectrum, n_r) -> ReducedModel:
    A_r = S_r @ (sys.A @ T_r)
    B_r = S_r @ sys.B
    C_r = np.asarray(sys.C @ T_r)
    D_r = np.array(sys.D, dtype=float, copy=True)
    rho = spectral_radius(A_r)
    return ReducedModel(
        A_r=A_r,
        B_r=B_r,
        C_r=C_r,
        D_r=D_r,
        T_r=T_r,
        S_r=S_r,
        method=method,
        n_r=n_r,
        dt=sys.dt,
        m=m,
        energy_captured=spectrum.energy(n_r),
        rho=rho,
    )


def _psd_factor(W: np.ndarray) -> np.ndarray:
    """Factor a symmetric PSD matrix as L L^T, tolerating tiny negatives."""
    try:
        return np.linalg.cholesky(W)
    except np.linalg.LinAlgError:
        vals, vecs = np.linalg.eigh(W)
        floor = -1e-8 * max(vals[-1], 0.0)
        if vals[0] < floor:
            raise NumericalError(
                f"Gramian indefinite: min eigenvalue {vals[0]:.3e}"
            ) from None
        vals = np.clip(vals, 0.0, None)
        return vecs * np.sqrt(vals)


def reduce_bt(
    sys: LtiSystem,
    order: int | None = None,
    energy: float | None = None,
    *,
    dense_threshold: int | None = None,
) -> tuple[ReducedModel, SpectrumReport]:
    """Balanced truncation via square-root balancing.

    Needs the exact Gramians, hence a strictly stable system within the
    dense threshold.  The reduced model inherits stability.
    """
    threshold = DENSE_THRESHOLD if dense_threshold is None else dense_threshold
    if sys.n_x > threshold:
        raise BudgetError(
            f"balanced truncation refused for n_x = {sys.n_x} > {threshold}: "
            "the dense Gramian route does not scale; use the snapshot methods"
        )
    W_C = ctrl_gramian(sys.A, sys.B, dense_threshold=threshold)
    W_O = obs_gramian(sys.A, sys.C, dense_threshold=threshold)
    L_C = _psd_factor(W_C)
    L_O = _psd_factor(W_O)
    U, s, Vt = np.linalg.svd(L_O.T @ L_C, full_matrices=False)
    spectrum = SpectrumReport(values=s, kind="hankel")
    n_r = _select_order(spectrum, order, energy, n_max=int(np.sum(s > SV_FLOOR * s[0])))
    n_r = _truncate_tiny(s, n_r, "balanced truncation")
    scale = 1.0 / np.sqrt(s[:n_r])
    T_r = L_C @ Vt[:n_r].T * scale
    S_r = (U[:, :n_r] * scale).T @ L_O.T
    return _reduced_from_projections(sys, T_r, S_r, "BT", None, spectrum, n_r), spectrum


def _truncate_tiny(s: np.ndarray, n_r: int, label: str) -> int:
    keep = int(np.sum(s >= SV_FLOOR * s[0]))
    if keep < n_r:
        warnings.warn(
            f"{label}: requested order {n_r} reaches singular values below "
            f"{SV_FLOOR:g} of the largest; truncating to {keep}",
            stacklevel=3,
        )
        return keep
    return n_r


def reduce_pod(
    sys: LtiSystem,
    m: int,
    order: int | None = None,
    energy: float | None = None,
    *,
    budget_bytes: int | None = None,
) -> tuple[ReducedModel, SpectrumReport]:
    """Snapshot POD on the impulse-response data.

    Eigendecomposes X_m^T X_m (small) instead of X_m X_m^T (state-sized).
    Stability of the result is not guaranteed: check `.rho`.
    """
    if m < 1:
        raise WqmorError("snapshot length m must be >= 1")
    X = impulse_state_snapshot(sys.A, sys.B, m, budget_bytes=budget_bytes)
    G = X.T @ X
    vals, vecs = np.linalg.eigh(G)
    vals, vecs = vals[::-1], vecs[:, ::-1]
    vals = np.maximum(vals, 0.0)
    spectrum = SpectrumReport(values=vals, kind="pod-eigen")
    significant = int(np.sum(vals > 1e-12 * vals[0]))
    if order is not None and order > significant:
        raise RankError(
            f"snapshot supports only {significant} modes above 1e-12 of the "
            f"largest eigenvalue, requested {order}"
        )
    n_r = _select_order(spectrum, order, energy, n_max=significant)
    scale = 1.0 / np.sqrt(vals[:n_r])
    T_r = X @ (vecs[:, :n_r] * scale)
    S_r = (vecs[:, :n_r] * scale).T @ X.T
    return _reduced_from_projections(sys, T_r, S_r, "POD", m, spectrum, n_r), spectrum


def markov_parameters(sys: LtiSystem, count: int) -> np.ndarray:
    """Impulse-response output samples h_k = C A^k B, shape (count, n_y, n_u)."""
    h = np.empty((count, sys.n_y, sys.n_u))
    P = np.asarray(sys.B, dtype=float).copy()
    for k in range(count):
        h[k] = sys.C @ P
        if k + 1 < count:
            P = sys.A @ P
    return h


def build_hankel(sys: LtiSystem, m: int) -> np.ndarray:
    """Cross matrix Y_m^T X_m assembled from 2m - 1 Markov parameters.

    Entry ((i, a), (j, b)) equals c_i A^(a+b) b_j, so each (sensor,
    booster) channel is an m x m Hankel block; nothing larger than the
    result itself is ever formed.
    """
    h = markov_parameters(sys, 2 * m - 1)
    H = np.empty((m * sys.n_y, m * sys.n_u))
    for i in range(sys.n_y):
        for j in range(sys.n_u):
            H[i * m : (i + 1) * m, j * m : (j + 1) * m] = scipy.linalg.hankel(
                h[:m, i, j], h[m - 1 :, i, j]
            )
    return H


def _randomized_svd(H: np.ndarray, k: int, seed: int = 0, oversample: int = 20, power_iters: int = 2):
    rng = np.random.default_rng(seed)
    p = min(H.shape[1], k + oversample)
    Z = H @ rng.standard_normal((H.shape[1], p))
    for _ in range(power_iters):
        Z = H @ (H.T @ Z)
    Q, _ = np.linalg.qr(Z)
    Ub, s, Vt = np.linalg.svd(Q.T @ H, full_matrices=False)
    k = min(k, s.size)
    return Q @ Ub[:, :k], s[:k], Vt[:k]


def _hankel_svd(H: np.ndarray, order: int | None, energy: float | None, seed: int):
    """SVD of the cross matrix, truncated adaptively when H is large.

    The randomized path treats singular values below 1e-7 of the largest
    as zero for the energy rule, which is far below any practical level.
    """
    if max(H.shape) <= _FULL_SVD_LIMIT:
        U, s, Vt = np.linalg.svd(H, full_matrices=False)
        return U, s, Vt
    if order is not None:
        return _randomized_svd(H, min(order + 8, min(H.shape)), seed=seed)
    k = 256
    while True:
        U, s, Vt = _randomized_svd(H, min(k, min(H.shape)), seed=seed)
        if s[-1] <= 1e-7 * s[0] or k >= min(H.shape):
            return U, s, Vt
        k *= 2


def reduce_bpod(
    sys: LtiSystem,
    m: int,
    order: int | None = None,
    energy: float | None = None,
    *,
    budget_bytes: int | None = None,
    seed: int = 0,
) -> tuple[ReducedModel, SpectrumReport]:
    """Balanced POD from m-step primal and dual impulse responses.

    Balances controllability against observability like balanced
    truncation, at snapshot cost; stability depends on m (see the
    snapshot-floor helpers).  Check `.rho` on the result.
    """
    if m < 1:
        raise WqmorError("snapshot length m must be >= 1")
    budget = SNAPSHOT_BUDGET_BYTES if budget_bytes is None else budget_bytes
    H = build_hankel(sys, m)
    U, s, Vt = _hankel_svd(H, order, energy, seed)
    if s[0] == 0.0:
        raise RankError("zero impulse response: nothing to balance")
    spectrum = SpectrumReport(values=s, kind="hankel")
    n_r = _select_order(spectrum, order, energy, n_max=int(np.sum(s > 0)))
    n_r = _truncate_tiny(s, n_r, "balanced POD")
    scale = 1.0 / np.sqrt(s[:n_r])
    V_r = Vt[:n_r].T * scale  # (m n_u, n_r)
    U_r = U[:, :n_r] * scale  # (m n_y, n_r)

    snapshot_bytes = sys.n_x * m * (sys.n_u + sys.n_y) * 8
    if snapshot_bytes <= budget:
        X = impulse_state_snapshot(sys.A, sys.B, m, budget_bytes=budget)
        Y = impulse_state_snapshot(sys.A.T, _dense_ct(sys), m, budget_bytes=budget)
        T_r = X @ V_r
        S_r = (Y @ U_r).T
    else:
        T_r = _stream_projection(sys.A, np.asarray(sys.B, dtype=float), V_r, m, sys.n_u)
        S_r = _stream_projection(sys.A.T, _dense_ct(sys), U_r, m, sys.n_y).T
    return _reduced_from_projections(sys, T_r, S_r, "BPOD", m, spectrum, n_r), spectrum


def _dense_ct(sys: LtiSystem) -> np.ndarray:
    C = sys.C.toarray() if sp.issparse(sys.C) else np.asarray(sys.C, dtype=float)
    return np.ascontiguousarray(C.T)


def _stream_projection(A, B0: np.ndarray, W: np.ndarray, m: int, n_chan: int) -> np.ndarray:
    """sum_b (A^b B0) W[(., b), :] without materializing the snapshot."""
    k = W.shape[1]
    W3 = W.reshape(n_chan, m, k)
    out = np.zeros((B0.shape[0], k))
    P = B0.copy()
    for b in range(m):
        out += P @ W3[:, b, :]
        if b + 1 < m:
            P = A @ P
    return out


def augment_nonzero_ic(sys: LtiSystem, x0) -> LtiSystem:
    """Fold a nonzero initial state into an extra input channel.

    The returned system has B extended by the column A x0 and D by C x0;
    driving the extra channel with a unit pulse at k = 0 (see
    :func:`wqmor.sim.augmented_input`) reproduces, from rest, exactly the
    trajectory the original system produces from x0.
    """
    x0 = np.asarray(x0, dtype=float)
    if x0.shape != (sys.n_x,):
        raise WqmorError(f"x0 shaped {x0.shape}, expected ({sys.n_x},)")
    b_extra = np.asarray(sys.A @ x0, dtype=float).reshape(-1, 1)
    d_extra = np.asarray(sys.C @ x0, dtype=float).reshape(-1, 1)
    return LtiSystem(
        A=sys.A,
        B=np.hstack([np.asarray(sys.B, dtype=float), b_extra]),
        C=sys.C,
        D=np.hstack([np.asarray(sys.D, dtype=float), d_extra]),
        dt=sys.dt,
        layout=sys.layout,
    )


def min_snapshot_travel_time(
    network: Network, scenario: HydraulicScenario, io: IoPlacement
) -> int:
    """Snapshot-length floor from transport: the longest booster-to-sensor
    travel time, in samples.

    Edges follow the per-period flow directions; pipe traversal costs
    L / |v|, pumps and valves are instantaneous.  The floor is the worst
    case over periods.  A cycle on a booster-to-sensor route makes the
    longest path ill-defined: that raises, with the settling-time floor
    as the stated fallback.
    """
    booster_nodes = [b for b, _ in io.boosters]
    best = -math.inf
    reachable_sensors: set[str] = set()
    for index, period in enumerate(scenario.periods):
        graph = nx.MultiDiGraph()
        graph.add_nodes_from(n.id for n in network.nodes)
        for link in network.links:
            q = period.flow(link.id)
            if q == 0.0:
                continue
            head, tail = (link.from_node, link.to_node) if q > 0 else (link.to_node, link.from_node)
            if link.kind == "pipe":
                tau = link.length_m / abs(period.velocity(link.id))
            else:
                tau = 0.0
            graph.add_edge(head, tail, weight=tau)
        for booster in booster_nodes:
            targets = set(io.sensors) & (nx.descendants(graph, booster) | {booster})
            if not targets:
                continue
            relevant = {booster} | nx.descendants(graph, booster)
            sub = graph.subgraph(relevant)
            if not nx.is_directed_acyclic_graph(sub):
                raise NetworkError(
                    f"period {index}: flow directions form a cycle downstream of "
                    f"booster {booster!r}; the longest travel time is ill-defined, "
                    "fall back to the settling-time floor"
                )
            longest = _longest_path_from(sub, booster)
            for sensor in targets:
                reachable_sensors.add(sensor)
                best = max(best, longest[sensor])
    unreachable = set(io.sensors) - reachable_sensors
    if unreachable:
        raise NetworkError(
            f"sensors {sorted(unreachable)} are unreachable from every booster "
            "in every period; the travel-time floor is undefined"
        )
    return max(1, math.ceil(best / scenario.dt_s))


def _longest_path_from(graph: nx.MultiDiGraph, source: str) -> dict[str, float]:
    dist = {source: 0.0}
    for node in nx.topological_sort(graph):
        if node not in dist:
            continue
        for _, succ, data in graph.out_edges(node, data=True):
            cand = dist[node] + data["weight"]
            if cand > dist.get(succ, -math.inf):
                dist[succ] = cand
    return dist


def min_snapshot_settling_time(sys: LtiSystem) -> int:
    """Snapshot-length floor from the settling time of the dominant pole."""
    p = dominant_pole(sys.A)
    mag = abs(p)
    if mag >= 1.0:
        raise NumericalError(
            f"dominant pole magnitude {mag:.6g} >= 1: the system does not settle"
        )
    return max(1, math.ceil(-4.0 / math.log(mag)))


def reduce_sbpod(
    sys: LtiSystem,
    order: int | None = None,
    energy: float | None = None,
    *,
    mode: str = "priori",
    x0=None,
    m: int | None = None,
    travel_floor: int | None = None,
    safety: float = SAFETY_FACTOR,
    budget_bytes: int | None = None,
    seed: int = 0,
) -> ReducedModel:
    """Balanced POD with a stability guarantee.

    priori mode picks the snapshot length as `safety` times the larger of
    the settling-time floor and the (caller-supplied) travel-time floor,
    then runs balanced POD; should the result still be unstable the
    length is doubled twice before falling back to the convex repair.
    posterior mode runs balanced POD at the caller's m and repairs the
    reduced matrix through the stabilization program only when needed.
    A nonzero x0 is folded in through the input augmentation first.  The
    returned model always has spectral radius < 1.
    """
    if mode not in ("priori", "posterior"):
        raise WqmorError(f"unknown mode {mode!r}")
    work = sys
    if x0 is not None and np.any(np.asarray(x0) != 0.0):
        work = augment_nonzero_ic(sys, x0)

    if mode == "priori":
        floors = [min_snapshot_settling_time(work)]
        if travel_floor is not None:
            floors.append(int(travel_floor))
        m_run = math.ceil(safety * max(floors))
    else:
        if m is None:
            raise WqmorError("posterior mode needs the caller's snapshot length m")
        m_run = int(m)

    attempts = 3 if mode == "priori" else 1
    rm = None
    for attempt in range(attempts):
        rm, _ = reduce_bpod(
            work, m_run, order=order, energy=energy, budget_bytes=budget_bytes, seed=seed
        )
        if rm.rho < 1.0 - RHO_MARGIN:
            return replace(rm, method="SBPOD", stabilized_by="priori" if mode == "priori" else "none")
        if attempt + 1 < attempts:
            m_run *= 2

    from .stabilize import stabilize_posterior  # deferred import, keeps modules separable

    result = stabilize_posterior(rm.A_r)
    rm = replace(
        rm,
        A_r=result.A_r_stab,
        method="SBPOD",
        stabilized_by="posterior",
        rho=spectral_radius(result.A_r_stab),
    )
    if rm.rho >= 1.0 - RHO_MARGIN:
        raise NumericalError(f"stabilization left spectral radius at {rm.rho:.6g}")
    return rm


def reduce_ltv(
    sys: LtvSystem,
    method: str,
    *,
    energy: float | None = None,
    order: int | None = None,
    **kwargs,
) -> list[ReducedModel]:
    """Reduce each LTI piece independently with a shared order.

    A first pass selects per-piece orders (energy rule); every piece is
    then re-reduced at the maximum so the pieces compose.
    """
    reducers = {"BT": reduce_bt, "POD": reduce_pod, "BPOD": reduce_bpod}
    if method == "SBPOD":
        models = [
            reduce_sbpod(lti, order=order, energy=energy, **kwargs) for lti, _ in sys.pieces
        ]
        shared = max(rm.n_r for rm in models)
        return [
            reduce_sbpod(lti, order=shared, **kwargs) for lti, _ in sys.pieces
        ]
    reducer = reducers.get(method)
    if reducer is None:
        raise WqmorError(f"unknown reduction method {method!r}")
    models = [reducer(lti, order=order, energy=energy, **kwargs)[0] for lti, _ in sys.pieces]
    shared = max(rm.n_r for rm in models)
    return [reducer(lti, order=shared, **kwargs)[0] for lti, _ in sys.pieces]


def reduced_ltv_system(models: list[ReducedModel], sys: LtvSystem) -> LtvSystem:
    """Assemble reduced pieces back into a piecewise system."""
    if len(models) != len(sys.pieces):
        raise WqmorError("one reduced model per LTV piece required")
    pieces = tuple(
        (rm.to_lti(), steps) for rm, (_, steps) in zip(models, sys.pieces)
    )
    return LtvSystem(pieces=pieces)
