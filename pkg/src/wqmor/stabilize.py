"""A-posteriori stabilization of a reduced state matrix.

Finds a small perturbation dA with rho(A_r + dA) < 1 by solving a convex
semidefinite program in a Lyapunov certificate P, the lifted variable
dY = P dA, and a norm bound alpha_y on dY:

    minimize    alpha_y
    subject to  P >= I
                [[P, (P A_r + dY)^T], [P A_r + dY, P]] >= eps * I
                [[I, dY^T], [dY, alpha_y * I]] >= 0

The Lyapunov block is the Schur complement form of
(A_r + dA)^T P (A_r + dA) - P < 0, written with positive diagonal blocks
(the textbook sign convention).  Two departures from a literal
transcription are deliberate:

* Strict inequalities are represented as >= with margin eps; margins are
  what interior-point solvers can certify.
* P carries a unit normalization (P >= I) instead of mere positivity.
  The program is invariant under scaling (P, dY) -> (t P, t dY), so the
  normalization costs nothing, but it pins the gauge in which
  ||dA||_2 <= ||dY||_2 <= alpha_y, making the objective an actual bound
  on the applied perturbation.  Without it the solver can shrink P and
  report a tiny alpha_y for an arbitrarily large dA.

The relaxation from alpha_y^2 to alpha_y in the norm block is kept: by
the Schur complement the block enforces alpha_y >= ||dY||_2^2, so the
objective still drives ||dY|| down but only sqrt(alpha_y) bounds it;
both alpha_y and the true ||dA||_2 are reported.  The solve itself is
delegated to a primal-dual interior-point conic solver (Nesterov-Todd
scaled; dense per-iteration linear algebra is fine at reduced order).

Every result is re-checked by an explicit eigenvalue computation.  A
solver returns an approximately-feasible point, and with the default
margin the approximation error can eat the entire stability margin; on a
failed post-check the margin is escalated and the program re-solved.  An
unstable outcome is never returned silently.
"""

from __future__ import annotations

from dataclasses import dataclass

import cvxpy as cp
import numpy as np

from .errors import StabilizationError, WqmorError

# Margin standing in for strict LMI inequalities.
EPS_MARGIN = 1e-7

# Dense SDP budget: variables scale with n_r^2.
MAX_ORDER = 200

_SOLVERS = ("CLARABEL", "SCS")


@dataclass(frozen=True)
class SdpProblem:
    """The stabilization program for one reduced matrix (see module doc)."""

    A_r: np.ndarray
    eps: float = EPS_MARGIN

    @property
    def n_r(self) -> int:
        return self.A_r.shape[0]

    def build(self):
        n = self.n_r
        P = cp.Variable((n, n), symmetric=True)
        dY = cp.Variable((n, n))
        alpha_y = cp.Variable(nonneg=True)
        PA = P @ self.A_r + dY
        lyap_block = cp.bmat([[P, PA.T], [PA, P]])
        norm_block = cp.bmat([[np.eye(n), dY.T], [dY, alpha_y * np.eye(n)]])
        constraints = [
            P >> np.eye(n),
            lyap_block >> self.eps * np.eye(2 * n),
            norm_block >> 0,
        ]
        return cp.Problem(cp.Minimize(alpha_y), constraints), P, dY, alpha_y

    def dump(self, path) -> None:
        """Write the program data in a plain-text form for cross-checks."""
        with open(path, "w") as fh:
            fh.write("wqmor-stabilization-sdp version 1\n")
            fh.write(f"n_r {self.n_r}\n")
            fh.write(f"eps {format(self.eps, '.17g')}\n")
            fh.write("minimize alpha_y\n")
            fh.write("subject to P >= I\n")
            fh.write("           [[P, (P A_r + dY)'], [P A_r + dY, P]] >= eps I\n")
            fh.write("           [[I, dY'], [dY, alpha_y I]] >= 0\n")
            fh.write("# A_r (row col value)\n")
            for i in range(self.n_r):
                for j in range(self.n_r):
                    if self.A_r[i, j] != 0.0:
                        fh.write(f"{i} {j} {format(self.A_r[i, j], '.17g')}\n")


@dataclass(frozen=True)
class StabilizationResult:
    dA_r: np.ndarray
    A_r_stab: np.ndarray
    alpha_y: float
    dA_norm: float
    rho: float
    eps_used: float
    solver: str
    iterations: int | None
    solve_time_s: float | None


# Clarabel accepts these; other solvers get a plain solve call.
_CLARABEL_OPTS = {"tol_feas": 1e-10, "tol_gap_abs": 1e-10, "tol_gap_rel": 1e-10}


def _solve_once(A_r: np.ndarray, eps: float):
    problem, P, dY, alpha_y = SdpProblem(A_r=A_r, eps=eps).build()
    last_error = None
    for solver in _SOLVERS:
        opts = _CLARABEL_OPTS if solver == "CLARABEL" else {}
        try:
            problem.solve(solver=solver, **opts)
        except (cp.SolverError, TypeError) as exc:
            if isinstance(exc, TypeError) and opts:
                try:
                    problem.solve(solver=solver)
                except cp.SolverError as exc2:
                    last_error = exc2
                    continue
            else:
                last_error = exc
                continue
        if problem.status in (cp.OPTIMAL, cp.OPTIMAL_INACCURATE):
            return problem, P, dY, alpha_y
        last_error = RuntimeError(f"{solver}: status {problem.status}")
    raise StabilizationError(f"stabilization program not solved: {last_error}")


def stabilize_posterior(A_r: np.ndarray, *, eps: float = EPS_MARGIN) -> StabilizationResult:
    """Minimally perturb A_r so the perturbed matrix is strictly stable.

    Solves at the given margin, verifies by eigenvalues, and escalates
    the margin when solver slack consumed it.  Raises StabilizationError
    when the program cannot be solved or certified; never returns an
    unstable matrix.
    """
    A_r = np.asarray(A_r, dtype=float)
    if A_r.ndim != 2 or A_r.shape[0] != A_r.shape[1]:
        raise WqmorError("A_r must be a square matrix")
    n = A_r.shape[0]
    if n > MAX_ORDER:
        raise WqmorError(f"stabilization limited to order {MAX_ORDER}, got {n}")

    failure = "no margin attempted"
    for margin in (eps, max(eps * 1e2, 1e-5), max(eps * 1e4, 1e-3)):
        problem, P, dY, alpha_y = _solve_once(A_r, margin)
        dA = np.linalg.solve(np.asarray(P.value), np.asarray(dY.value))
        A_stab = A_r + dA
        rho = float(np.abs(np.linalg.eigvals(A_stab)).max())
        if np.isfinite(rho) and rho < 1.0:
            stats = problem.solver_stats
            return StabilizationResult(
                dA_r=dA,
                A_r_stab=A_stab,
                alpha_y=float(alpha_y.value),
                dA_norm=float(np.linalg.norm(dA, 2)),
                rho=rho,
                eps_used=margin,
                solver=stats.solver_name if stats is not None else "unknown",
                iterations=getattr(stats, "num_iters", None) if stats is not None else None,
                solve_time_s=getattr(stats, "solve_time", None) if stats is not None else None,
            )
        failure = f"spectral radius {rho:.8g} at margin {margin:g}"
    raise StabilizationError(
        f"post-check failed: {failure}; the program was solved but solver "
        "slack consumed the stability margin at every attempted level"
    )
