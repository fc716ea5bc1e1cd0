"""Controllability/observability Gramians and the discrete Lyapunov solve.

The exact Gramians solve W - A W A^T = Q; we use the Smith squaring
iteration (W_{j+1} = W_j + A^(2^j) W_j A^(2^j)^T), which needs only
matrix products, so a sparse A pays off in the early doublings.  The
finite-horizon variants never materialize an n_x * n_x matrix unless
asked: they return the impulse-response snapshot whose outer product is
the Gramian.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import BudgetError, NumericalError, WqmorError

# Exact dense Gramians are refused above this dimension; beyond it the
# whole dense-balancing route is declared intractable.
DENSE_THRESHOLD = 3000

# Default ceiling for materializing snapshot matrices (bytes).
SNAPSHOT_BUDGET_BYTES = 1 << 29  # 512 MiB

_MAX_DOUBLINGS = 64
_RESIDUAL_RTOL = 1e-10


def _as_dense(A) -> np.ndarray:
    if sp.issparse(A):
        return A.toarray()
    return np.asarray(A, dtype=float)


def solve_dlyap(A, Q, *, dense_threshold: int | None = None) -> np.ndarray:
    """Solve W - A W A^T = Q for symmetric PSD Q and strictly stable A.

    Smith squaring iteration with a convergence test on the additive
    term; the returned W satisfies ||W - A W A^T - Q||_F <= 1e-10 ||Q||_F
    or a NumericalError is raised.  Failure to converge within 64
    doublings signals a spectral radius at or beyond 1.
    """
    threshold = DENSE_THRESHOLD if dense_threshold is None else dense_threshold
    n = A.shape[0]
    if A.shape != (n, n) or Q.shape != (n, n):
        raise WqmorError("A and Q must be square and compatible")
    if n > threshold:
        raise BudgetError(
            f"dense Lyapunov solve refused for n_x = {n} > {threshold}; "
            "the exact-Gramian route is intractable at this scale"
        )
    Q = _as_dense(Q)
    if not np.allclose(Q, Q.T, atol=1e-12 * max(1.0, float(np.abs(Q).max()))):
        raise WqmorError("Q must be symmetric")

    W = Q.copy()
    # Keep the doubled propagator sparse while it stays sparse enough.
    Ak = A.copy() if sp.issparse(A) else np.asarray(A, dtype=float).copy()
    q_norm = np.linalg.norm(Q, "fro")
    if q_norm == 0.0:
        return W
    for _ in range(_MAX_DOUBLINGS):
        # A_k W A_k^T via two products; W stays symmetric throughout.
        term = Ak @ np.ascontiguousarray((Ak @ W).T)
        W = W + term
        if np.linalg.norm(term, "fro") <= 1e-16 * np.linalg.norm(W, "fro"):
            break
        Ak = Ak @ Ak
        if sp.issparse(Ak) and Ak.nnz > 0.25 * n * n:
            Ak = _as_dense(Ak)
    else:
        raise NumericalError(
            "Lyapunov iteration did not converge in 64 doublings; "
            "the spectral radius is at or near 1"
        )
    W = 0.5 * (W + W.T)
    A_dense = _as_dense(A)
    residual = np.linalg.norm(W - A_dense @ W @ A_dense.T - Q, "fro")
    if residual > _RESIDUAL_RTOL * q_norm:
        raise NumericalError(
            f"Lyapunov residual {residual:.3e} exceeds {_RESIDUAL_RTOL:.0e} * ||Q||_F"
        )
    return W


def ctrl_gramian(A, B, *, dense_threshold: int | None = None) -> np.ndarray:
    """Exact controllability Gramian: solution of W - A W A^T = B B^T."""
    B = np.atleast_2d(np.asarray(B, dtype=float))
    return solve_dlyap(A, B @ B.T, dense_threshold=dense_threshold)


def obs_gramian(A, C, *, dense_threshold: int | None = None) -> np.ndarray:
    """Exact observability Gramian, by duality the controllability
    Gramian of (A^T, C^T)."""
    C = np.atleast_2d(_as_dense(C))
    return solve_dlyap(A.T, C.T @ C, dense_threshold=dense_threshold)


def impulse_state_snapshot(A, B, m: int, *, budget_bytes: int | None = None) -> np.ndarray:
    """Columns [b_i, A b_i, ..., A^(m-1) b_i] for each input channel i.

    Column ordering is input-major: all m states of channel 0, then
    channel 1, and so on.  Guarded by the snapshot memory budget.
    """
    if m < 1:
        raise WqmorError("snapshot length m must be >= 1")
    B = np.atleast_2d(np.asarray(B, dtype=float))
    if B.ndim == 1:
        B = B[:, None]
    n_x, n_u = B.shape
    budget = SNAPSHOT_BUDGET_BYTES if budget_bytes is None else budget_bytes
    need = n_x * m * n_u * 8
    if need > budget:
        raise BudgetError(
            f"snapshot of {n_x} x {m * n_u} doubles ({need / 2**20:.0f} MiB) exceeds "
            f"the budget ({budget / 2**20:.0f} MiB)"
        )
    X = np.empty((n_x, m * n_u))
    P = B.copy()
    for k in range(m):
        X[:, k::m] = P
        if k + 1 < m:
            P = A @ P
    return X


@dataclass(frozen=True)
class GramianPair:
    """Both Gramians of one system, with how they were obtained."""

    W_C: np.ndarray
    W_O: np.ndarray
    method: str  # "lyapunov" | "finite-sum"
    m: int | None = None

    def __post_init__(self):
        for name, W in (("W_C", self.W_C), ("W_O", self.W_O)):
            sym_err = np.abs(W - W.T).max()
            if sym_err > 1e-10 * max(1.0, float(np.abs(W).max())):
                raise NumericalError(f"{name} asymmetric by {sym_err:.3e}")
            min_eig = float(np.linalg.eigvalsh(W).min())
            if min_eig < -1e-8 * np.linalg.norm(W, 2):
                raise NumericalError(f"{name} indefinite: min eigenvalue {min_eig:.3e}")


def mstep_ctrl_gramian(A, B, m: int, *, return_gramian: bool = False, budget_bytes: int | None = None):
    """Finite-horizon controllability Gramian as a snapshot factorization.

    Returns the impulse-response snapshot X_m with W_Cm = X_m X_m^T; the
    dense W_Cm itself is materialized only when `return_gramian` is set
    (small systems), since reduction algorithms only ever need X_m^T X_m.
    """
    X = impulse_state_snapshot(A, B, m, budget_bytes=budget_bytes)
    if return_gramian:
        return X, X @ X.T
    return X, None


def gramian_pair(A, B, C, *, dense_threshold: int | None = None) -> GramianPair:
    """Exact Gramian pair via the Lyapunov route (dense, desk scale)."""
    return GramianPair(
        W_C=ctrl_gramian(A, B, dense_threshold=dense_threshold),
        W_O=obs_gramian(A, C, dense_threshold=dense_threshold),
        method="lyapunov",
    )
