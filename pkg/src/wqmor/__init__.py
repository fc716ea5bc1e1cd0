"""Sparse water-quality transport models, their reduction, and control.

Build a discrete-time state-space model of disinfectant transport from a
network description, reduce it by balanced truncation / POD / balanced
POD (with stability preservation), validate the reduction against the
full model, and run constrained tracking MPC on the reduced predictor.
"""

from .errors import (
    BudgetError,
    CourantError,
    NetworkError,
    NetworkSyntaxError,
    NumericalError,
    QpError,
    RankError,
    RunFileError,
    StabilizationError,
    WqmorError,
)
from .gramians import (
    GramianPair,
    ctrl_gramian,
    gramian_pair,
    impulse_state_snapshot,
    mstep_ctrl_gramian,
    obs_gramian,
    solve_dlyap,
)
from .mor import (
    ReducedModel,
    SpectrumReport,
    augment_nonzero_ic,
    min_snapshot_settling_time,
    min_snapshot_travel_time,
    reduce_bpod,
    reduce_bt,
    reduce_ltv,
    reduce_pod,
    reduce_sbpod,
)
from .mpc import MpcConfig, MpcResult, run_mpc
from .netmodel import (
    HydraulicPeriod,
    HydraulicScenario,
    Link,
    Network,
    Node,
    parse_network,
    serialize_network,
    validate_courant,
)
from .sim import ComparisonReport, augmented_input, rmse, spectral_radius, step_experiment
from .stabilize import SdpProblem, StabilizationResult, stabilize_posterior
from .wqss import (
    IoPlacement,
    LtiSystem,
    LtvSystem,
    SimResult,
    StateLayout,
    assemble,
    initial_state,
    mass_weights,
    simulate,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
