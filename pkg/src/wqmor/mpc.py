"""Constrained tracking MPC over a full or reduced predictor.

At every step a condensed quadratic program in the stacked inputs is
solved: tracking, effort and move-suppression costs subject to hard box
bounds on the inputs and soft (heavily penalized slack) bounds on the
predicted outputs.  The first move is applied to the plant and the
predictor state is advanced open loop by the applied input; there is no
output-correction observer.

Because the program is condensed, its variable count is N_p * n_u plus
output slacks, independent of the plant dimension: predicting with a
reduced model shrinks the condensation work, not just the model.  The QP
itself is handled by an operator-splitting (ADMM) solver with a polish
step; the sparsity pattern is fixed over the run, so each step only
updates the linear term and the bound vectors.
"""

from __future__ import annotations

import contextlib
import io
import time
from dataclasses import dataclass

import numpy as np
import osqp
import scipy.sparse as sp

from .errors import QpError, WqmorError
from .wqss import LtiSystem, LtvSystem

SLACK_PENALTY = 1e6

_QP_EPS = 1e-8


@contextlib.contextmanager
def _quiet_solver():
    """Drop the QP library's stdout chatter (the polish step reports on
    sys.stdout even when told to be quiet)."""
    with contextlib.redirect_stdout(io.StringIO()):
        yield


def _weight_matrix(w, n: int, name: str) -> np.ndarray:
    W = np.asarray(w, dtype=float)
    if W.ndim == 0:
        W = float(W) * np.eye(n)
    if W.shape != (n, n):
        raise WqmorError(f"{name} must be scalar or ({n}, {n}), got {W.shape}")
    if np.linalg.eigvalsh(0.5 * (W + W.T)).min() < -1e-12:
        raise WqmorError(f"{name} must be positive semidefinite")
    return 0.5 * (W + W.T)


def _bound_vector(b, n: int, default: float) -> np.ndarray:
    if b is None:
        return np.full(n, default)
    v = np.asarray(b, dtype=float)
    if v.ndim == 0:
        return np.full(n, float(v))
    if v.shape != (n,):
        raise WqmorError(f"bound must be scalar or ({n},), got {v.shape}")
    return v


@dataclass(frozen=True)
class MpcConfig:
    """Horizon, reference, bounds and weights for the tracking controller."""

    horizon: int
    reference: np.ndarray | float
    u_min: np.ndarray | float | None = None
    u_max: np.ndarray | float | None = None
    y_min: np.ndarray | float | None = None
    y_max: np.ndarray | float | None = None
    q_y: np.ndarray | float = 1.0
    r_u: np.ndarray | float = 1e-8
    r_du: np.ndarray | float = 0.0
    slack_penalty: float = SLACK_PENALTY

    def __post_init__(self):
        if self.horizon < 1:
            raise WqmorError("horizon must be >= 1")
        if self.slack_penalty <= 0:
            raise WqmorError("slack penalty must be > 0")

    def resolved(self, n_u: int, n_y: int) -> "_ResolvedConfig":
        r = np.asarray(self.reference, dtype=float)
        if r.ndim == 0:
            r = np.full(n_y, float(r))
        if r.shape != (n_y,):
            raise WqmorError(f"reference must be scalar or ({n_y},)")
        u_lo = _bound_vector(self.u_min, n_u, -np.inf)
        u_hi = _bound_vector(self.u_max, n_u, np.inf)
        y_lo = _bound_vector(self.y_min, n_y, -np.inf)
        y_hi = _bound_vector(self.y_max, n_y, np.inf)
        if np.any(u_lo > u_hi) or np.any(y_lo > y_hi):
            raise WqmorError("bounds must satisfy min <= max")
        return _ResolvedConfig(
            horizon=self.horizon,
            reference=r,
            u_lo=u_lo,
            u_hi=u_hi,
            y_lo=y_lo,
            y_hi=y_hi,
            Q=_weight_matrix(self.q_y, n_y, "q_y"),
            R=_weight_matrix(self.r_u, n_u, "r_u"),
            R_du=_weight_matrix(self.r_du, n_u, "r_du"),
            slack_penalty=self.slack_penalty,
        )


@dataclass(frozen=True)
class _ResolvedConfig:
    horizon: int
    reference: np.ndarray
    u_lo: np.ndarray
    u_hi: np.ndarray
    y_lo: np.ndarray
    y_hi: np.ndarray
    Q: np.ndarray
    R: np.ndarray
    R_du: np.ndarray
    slack_penalty: float


@dataclass
class MpcResult:
    """Closed-loop record: applied inputs, achieved outputs, solve times."""

    t: np.ndarray
    u: np.ndarray
    y: np.ndarray
    qp_time_s: np.ndarray
    cost: float
    predictor_dim: int

    def to_csv(self, path) -> None:
        header = (
            ["t"]
            + [f"u{j}" for j in range(self.u.shape[1])]
            + [f"y{i}" for i in range(self.y.shape[1])]
            + ["qp_time_s"]
        )
        with open(path, "w") as fh:
            fh.write(",".join(header) + "\n")
            for k in range(len(self.t)):
                row = [self.t[k], *self.u[k], *self.y[k], self.qp_time_s[k]]
                fh.write(",".join(format(v, ".12g") for v in row) + "\n")


def condensed_prediction(predictor: LtiSystem, horizon: int) -> tuple[np.ndarray, np.ndarray]:
    """Stacked prediction maps: y(k+1..k+N) = Phi x(k) + Theta u(k..k+N-1).

    Row block i (0-based) predicts y(k+i+1): Phi rows are C A^(i+1); Theta
    holds the impulse-response samples C A^(i-j) B below the diagonal and
    the feedthrough D on the first superdiagonal (inputs beyond the stack
    do not exist, so the last block's feedthrough is dropped).
    """
    n_x, n_u, n_y = predictor.n_x, predictor.n_u, predictor.n_y
    A, B, C, D = predictor.A, predictor.B, predictor.C, predictor.D
    Phi = np.empty((horizon * n_y, n_x))
    markov = np.empty((horizon, n_y, n_u))
    CA = C.toarray() if sp.issparse(C) else np.asarray(C, dtype=float)
    P = np.asarray(B, dtype=float).copy()
    for i in range(horizon):
        markov[i] = np.asarray(predictor.C @ P)
        P = A @ P
        CA = CA @ A
        Phi[i * n_y : (i + 1) * n_y] = CA
    Theta = np.zeros((horizon * n_y, horizon * n_u))
    for i in range(horizon):
        for j in range(i + 1):
            Theta[i * n_y : (i + 1) * n_y, j * n_u : (j + 1) * n_u] = markov[i - j]
        if i + 1 < horizon:
            Theta[i * n_y : (i + 1) * n_y, (i + 1) * n_u : (i + 2) * n_u] = D
    return Phi, Theta


class _CondensedQp:
    """One OSQP instance reused across the receding-horizon loop."""

    def __init__(self, predictor: LtiSystem, cfg: _ResolvedConfig):
        N, n_u, n_y = cfg.horizon, predictor.n_u, predictor.n_y
        self.N, self.n_u, self.n_y = N, n_u, n_y
        self.cfg = cfg
        self.Phi, self.Theta = condensed_prediction(predictor, N)

        Qbar = np.kron(np.eye(N), cfg.Q)
        Rbar = np.kron(np.eye(N), cfg.R)
        S = np.kron(np.eye(N), np.eye(n_u)) - np.kron(np.eye(N, k=-1), np.eye(n_u))
        Rdbar = np.kron(np.eye(N), cfg.R_du)
        H = self.Theta.T @ Qbar @ self.Theta + Rbar + S.T @ Rdbar @ S
        if np.linalg.eigvalsh(0.5 * (H + H.T)).min() <= 0:
            raise WqmorError(
                "condensed program is not strictly convex; give r_u (or q_y along "
                "a reachable direction) a positive value"
            )
        self.Qbar, self.S, self.Rdbar = Qbar, S, Rdbar
        self.soft_outputs = np.any(np.isfinite(cfg.y_lo)) or np.any(np.isfinite(cfg.y_hi))

        n_slack = 2 * N * n_y if self.soft_outputs else 0
        dim = N * n_u + n_slack
        P = np.zeros((dim, dim))
        P[: N * n_u, : N * n_u] = 2.0 * H
        if n_slack:
            P[N * n_u :, N * n_u :] = 2.0 * cfg.slack_penalty * np.eye(n_slack)

        rows = [np.hstack([np.eye(N * n_u), np.zeros((N * n_u, n_slack))])]
        if self.soft_outputs:
            Zy = np.zeros((N * n_y, N * n_y))
            Iy = np.eye(N * n_y)
            # Theta u - s_up <= y_hi - Phi x  and  Theta u + s_lo >= y_lo - Phi x
            rows.append(np.hstack([self.Theta, -Iy, Zy]))
            rows.append(np.hstack([self.Theta, Zy, Iy]))
            rows.append(np.hstack([np.zeros((n_slack, N * n_u)), np.eye(n_slack)]))
        self.A_con = sp.csc_matrix(np.vstack(rows))
        self.P_qp = sp.csc_matrix(P)
        self.dim = dim
        self.n_slack = n_slack

        self.solver = osqp.OSQP()
        self._setup_done = False

    def _bounds(self, x_hat: np.ndarray):
        cfg, N, n_u, n_y = self.cfg, self.N, self.n_u, self.n_y
        lo = [np.tile(cfg.u_lo, N)]
        hi = [np.tile(cfg.u_hi, N)]
        if self.soft_outputs:
            offset = self.Phi @ x_hat
            hi_stack = np.tile(cfg.y_hi, N) - offset
            lo_stack = np.tile(cfg.y_lo, N) - offset
            lo += [np.full(N * n_y, -np.inf), lo_stack, np.zeros(self.n_slack)]
            hi += [hi_stack, np.full(N * n_y, np.inf), np.full(self.n_slack, np.inf)]
        return np.concatenate(lo), np.concatenate(hi)

    def _linear_term(self, x_hat: np.ndarray, u_prev: np.ndarray) -> np.ndarray:
        cfg, N, n_u = self.cfg, self.N, self.n_u
        err = self.Phi @ x_hat - np.tile(cfg.reference, N)
        c = np.zeros(N * n_u)
        c[:n_u] = u_prev
        q_u = 2.0 * (self.Theta.T @ (self.Qbar @ err) - self.S.T @ (self.Rdbar @ c))
        return np.concatenate([q_u, np.zeros(self.n_slack)])

    def solve(self, x_hat: np.ndarray, u_prev: np.ndarray) -> np.ndarray:
        q = self._linear_term(x_hat, u_prev)
        lo, hi = self._bounds(x_hat)
        with _quiet_solver():
            if not self._setup_done:
                self.solver.setup(
                    P=self.P_qp,
                    q=q,
                    A=self.A_con,
                    l=lo,
                    u=hi,
                    eps_abs=_QP_EPS,
                    eps_rel=_QP_EPS,
                    max_iter=200000,
                    polishing=True,
                    verbose=False,
                )
                self._setup_done = True
            else:
                self.solver.update(q=q, l=lo, u=hi)
            result = self.solver.solve()
        status = result.info.status
        if "solved" not in status:
            raise QpError(f"QP solver returned status {status!r}")
        u0 = result.x[: self.n_u]
        # The splitting solver meets bounds to tolerance; the applied move
        # must respect them exactly.
        return np.clip(u0, self.cfg.u_lo, self.cfg.u_hi)


def _plant_piece(plant, k: int) -> LtiSystem:
    if isinstance(plant, LtvSystem):
        return plant.piece_at(k)
    return plant


def run_mpc(plant, predictor, cfg: MpcConfig, steps: int, x0=None) -> MpcResult:
    """Receding-horizon loop: solve, apply first move, advance.

    `predictor` is an LtiSystem or a reduced model (anything with
    to_lti / project_state); a reduced predictor starts from the
    projection of the plant's initial state.
    """
    if steps < 1:
        raise WqmorError("steps must be >= 1")
    pred_sys = predictor if isinstance(predictor, LtiSystem) else predictor.to_lti(plant.dt)
    if pred_sys.n_y != plant.n_y or pred_sys.n_u != plant.n_u:
        raise WqmorError(
            f"predictor io ({pred_sys.n_u}, {pred_sys.n_y}) does not match "
            f"plant io ({plant.n_u}, {plant.n_y})"
        )
    rcfg = cfg.resolved(plant.n_u, plant.n_y)
    qp = _CondensedQp(pred_sys, rcfg)

    x_plant = np.zeros(plant.n_x) if x0 is None else np.asarray(x0, dtype=float).copy()
    if isinstance(predictor, LtiSystem):
        x_pred = x_plant.copy() if pred_sys.n_x == plant.n_x else np.zeros(pred_sys.n_x)
    else:
        x_pred = predictor.project_state(x_plant)

    n_u, n_y = plant.n_u, plant.n_y
    u_hist = np.empty((steps, n_u))
    y_hist = np.empty((steps, n_y))
    qp_times = np.empty(steps)
    u_prev = np.zeros(n_u)
    cost = 0.0

    for k in range(steps):
        t0 = time.perf_counter()
        u0 = qp.solve(x_pred, u_prev)
        x_pred = pred_sys.A @ x_pred + pred_sys.B @ u0
        qp_times[k] = time.perf_counter() - t0

        piece = _plant_piece(plant, k)
        y_k = piece.C @ x_plant + piece.D @ u0
        x_plant = piece.A @ x_plant + piece.B @ u0

        err = y_k - rcfg.reference
        du = u0 - u_prev
        cost += float(err @ rcfg.Q @ err + u0 @ rcfg.R @ u0 + du @ rcfg.R_du @ du)
        u_hist[k] = u0
        y_hist[k] = y_k
        u_prev = u0

    return MpcResult(
        t=np.arange(steps) * plant.dt,
        u=u_hist,
        y=y_hist,
        qp_time_s=qp_times,
        cost=cost,
        predictor_dim=pred_sys.n_x,
    )
