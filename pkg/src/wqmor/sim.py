"""Validation harness: full-vs-reduced step experiments and error reports.

The error metric is the root-mean-square of the per-step output error
2-norm over the whole horizon, transients included; the full error time
series is kept so any window can be re-examined afterwards.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import NumericalError, WqmorError
from .wqss import LtiSystem, LtvSystem, simulate

# Dense eigensolve below this size; Arnoldi iteration above it.
_DENSE_EIG_LIMIT = 400


def spectral_radius(A, tol: float = 1e-9) -> float:
    """Largest eigenvalue magnitude of a square matrix.

    Small or dense inputs use a full eigensolve; large sparse ones use a
    Krylov power iteration (implicitly restarted Arnoldi) with a dense
    fallback on non-convergence.
    """
    n = A.shape[0]
    if A.shape != (n, n):
        raise WqmorError("spectral radius needs a square matrix")
    if n == 1:
        return float(abs(A[0, 0])) if not sp.issparse(A) else float(abs(A.toarray()[0, 0]))
    if n <= _DENSE_EIG_LIMIT or not sp.issparse(A):
        dense = A.toarray() if sp.issparse(A) else np.asarray(A, dtype=float)
        return float(np.abs(np.linalg.eigvals(dense)).max())
    # Ask for a few eigenvalues: the dominant one may be a multiple root
    # (one per reservoir) or a complex pair.
    k = min(6, n - 2)
    try:
        vals = spla.eigs(A.astype(float), k=k, which="LM", return_eigenvectors=False, tol=tol)
        return float(np.abs(vals).max())
    except (spla.ArpackNoConvergence, spla.ArpackError) as exc:
        if n <= 5000:
            return float(np.abs(np.linalg.eigvals(A.toarray())).max())
        raise NumericalError(f"dominant-eigenvalue iteration failed: {exc}") from exc


def dominant_pole(A, tol: float = 1e-9) -> complex:
    """Eigenvalue of largest magnitude (complex in general)."""
    n = A.shape[0]
    if n <= _DENSE_EIG_LIMIT or not sp.issparse(A):
        dense = A.toarray() if sp.issparse(A) else np.asarray(A, dtype=float)
        vals = np.linalg.eigvals(dense)
    else:
        k = min(6, n - 2)
        try:
            vals = spla.eigs(A.astype(float), k=k, which="LM", return_eigenvectors=False, tol=tol)
        except (spla.ArpackNoConvergence, spla.ArpackError) as exc:
            if n <= 5000:
                vals = np.linalg.eigvals(A.toarray())
            else:
                raise NumericalError(f"dominant-eigenvalue iteration failed: {exc}") from exc
    return complex(vals[np.argmax(np.abs(vals))])


def rmse(y: np.ndarray, y_hat: np.ndarray) -> float:
    """sqrt((1/m) sum_k ||y(k) - y_hat(k)||_2^2) over the shared horizon."""
    y = np.atleast_2d(y)
    y_hat = np.atleast_2d(y_hat)
    if y.shape != y_hat.shape:
        raise WqmorError(f"trajectory shapes differ: {y.shape} vs {y_hat.shape}")
    err = y - y_hat
    return float(np.sqrt(np.mean(np.sum(err * err, axis=1))))


CSV_COLUMNS = [
    "network",
    "method",
    "n_x",
    "n_r",
    "m",
    "x0_mode",
    "rmse",
    "max_err",
    "rho_Ar",
    "t_assemble_s",
    "t_reduce_s",
    "t_sim_s",
]


@dataclass
class ComparisonReport:
    """Outcome of one full-vs-reduced experiment."""

    network: str
    method: str
    n_x: int
    n_r: int
    m: int | None
    x0_mode: str  # "zero" | "nonzero"
    rmse: float
    rmse_per_output: np.ndarray
    max_err: float
    error_series: np.ndarray  # (steps, n_y)
    rho_Ar: float
    t_assemble_s: float = 0.0
    t_reduce_s: float = 0.0
    t_sim_s: float = 0.0
    y_full: np.ndarray | None = field(default=None, repr=False)
    y_reduced: np.ndarray | None = field(default=None, repr=False)

    def csv_row(self, with_timings: bool = True) -> list[str]:
        row = [
            self.network,
            self.method,
            str(self.n_x),
            str(self.n_r),
            "" if self.m is None else str(self.m),
            self.x0_mode,
            format(self.rmse, ".12g"),
            format(self.max_err, ".12g"),
            format(self.rho_Ar, ".12g"),
        ]
        if with_timings:
            row += [
                format(self.t_assemble_s, ".6g"),
                format(self.t_reduce_s, ".6g"),
                format(self.t_sim_s, ".6g"),
            ]
        return row

    def emit_error_series(self, path) -> None:
        """Whitespace-separated time/error columns, plottable directly."""
        with open(path, "w") as fh:
            fh.write("# t_s " + " ".join(f"err_y{i}" for i in range(self.error_series.shape[1])) + "\n")
            for k, row in enumerate(self.error_series):
                fh.write(" ".join(format(v, ".12g") for v in np.concatenate([[k], row])) + "\n")


def write_reports_csv(path, reports, with_timings: bool = True) -> None:
    cols = CSV_COLUMNS if with_timings else CSV_COLUMNS[:-3]
    with open(path, "w") as fh:
        fh.write(",".join(cols) + "\n")
        for report in reports:
            fh.write(",".join(report.csv_row(with_timings)) + "\n")


def _reduced_lti(reduced, dt: float) -> LtiSystem:
    if isinstance(reduced, (LtiSystem, LtvSystem)):
        return reduced
    to_lti = getattr(reduced, "to_lti", None)
    if to_lti is None:
        raise WqmorError("reduced argument must be an LtiSystem or provide to_lti()")
    return to_lti(dt)


def step_experiment(
    full,
    reduced,
    amplitudes,
    steps: int,
    x0: np.ndarray | None = None,
    *,
    network: str = "",
    t_assemble_s: float = 0.0,
    t_reduce_s: float = 0.0,
) -> ComparisonReport:
    """Apply the same step input to both models and compare outputs.

    With a nonzero x0 both sides must already be on the augmented-input
    path: the reduced model must have been built from the initial-state
    augmentation of `full`, which gains one input channel driven by a
    constant 1 while both start from rest.
    """
    amplitudes = np.atleast_1d(np.asarray(amplitudes, dtype=float))
    nonzero_ic = x0 is not None and np.any(np.asarray(x0) != 0.0)
    reduced_sys = _reduced_lti(reduced, full.dt)

    if nonzero_ic:
        from .mor import augment_nonzero_ic  # deferred: mor depends on sim

        if reduced_sys.n_u != full.n_u + 1:
            raise WqmorError(
                "nonzero-x0 experiment needs a reduced model built from the "
                f"augmented system ({full.n_u + 1} inputs), got {reduced_sys.n_u}"
            )
        if amplitudes.shape[0] != full.n_u:
            raise WqmorError(f"expected {full.n_u} amplitudes, got {amplitudes.shape[0]}")
        full_run = (
            augment_nonzero_ic(full, x0) if isinstance(full, LtiSystem) else _augment_ltv(full, x0)
        )
        u = augmented_input(np.tile(amplitudes, (steps, 1)))
        x0_run = None
    else:
        if amplitudes.shape[0] != full.n_u:
            raise WqmorError(f"expected {full.n_u} amplitudes, got {amplitudes.shape[0]}")
        if reduced_sys.n_u != full.n_u:
            raise WqmorError(
                f"reduced model has {reduced_sys.n_u} inputs, plant has {full.n_u}"
            )
        full_run = full
        u = np.tile(amplitudes, (steps, 1))
        x0_run = x0

    t0 = time.perf_counter()
    res_full = simulate(full_run, u, x0=x0_run, steps=steps, record_states=False)
    res_red = simulate(reduced_sys, u, steps=steps, record_states=False)
    t_sim = time.perf_counter() - t0

    err = res_full.y - res_red.y
    per_output = np.sqrt(np.mean(err * err, axis=0))
    rho = spectral_radius(reduced_sys.A) if isinstance(reduced_sys, LtiSystem) else float("nan")
    return ComparisonReport(
        network=network,
        method=getattr(reduced, "method", "identity"),
        n_x=full.n_x,
        n_r=reduced_sys.n_x,
        m=getattr(reduced, "m", None),
        x0_mode="nonzero" if nonzero_ic else "zero",
        rmse=rmse(res_full.y, res_red.y),
        rmse_per_output=per_output,
        max_err=float(np.abs(err).max()),
        error_series=err,
        rho_Ar=rho,
        t_assemble_s=t_assemble_s,
        t_reduce_s=t_reduce_s,
        t_sim_s=t_sim,
        y_full=res_full.y,
        y_reduced=res_red.y,
    )


def _augment_ltv(system: LtvSystem, x0) -> LtvSystem:
    from .mor import augment_nonzero_ic

    pieces = tuple((augment_nonzero_ic(lti, x0), steps) for lti, steps in system.pieces)
    return LtvSystem(pieces=pieces)


def augmented_input(u: np.ndarray) -> np.ndarray:
    """Append the initial-state channel to an input sequence.

    The channel carries a unit pulse at k = 0 and zero afterwards, which
    is what makes the initial-state augmentation reproduce the original
    trajectory exactly from rest.
    """
    u = np.atleast_2d(np.asarray(u, dtype=float))
    extra = np.zeros((u.shape[0], 1))
    extra[0, 0] = 1.0
    return np.hstack([u, extra])
