"""Symbolic abstraction and safe switching-controller synthesis for
incrementally stable switched affine systems."""

from .abstraction import (
    Lattice,
    Region,
    SymbolicModel,
    ball_points,
    build_common_abstraction,
    build_dwell_abstraction,
    quantize,
)
from .closedloop import ClosedLoopTrace, refine_and_run, safety_monitor
from .config import ProblemConfig
from .dynamics import (
    AffineMode,
    SampledSwitchingSignal,
    SwitchedSystem,
    Trajectory,
    exact_affine_flow,
    rk4_flow,
    simulate_switched,
)
from .lyapunov import (
    CertCharacteristics,
    KLBound,
    QuadraticCertificateSet,
    characteristics,
    compute_mu,
    epsilon_for_eta_common,
    epsilon_for_eta_dwell,
    eta_budget_common,
    eta_budget_dwell,
    kl_bound,
    min_dwell_time,
    v_eval,
    verify_mode_certificate,
)
from .synthesis import (
    LazyController,
    SafetyController,
    SafetySpec,
    classification_map,
    dwell_projection_map,
    lazy_controller,
    maximal_safety_controller,
)
from .transys import (
    FiniteTS,
    RelationCertificate,
    are_bisimilar,
    check_relation_closure,
    common_relation,
    delta_schedule,
    dwell_relation,
    finite_ts_from_model,
    is_approx_bisim,
    max_approx_bisim,
    relation_member,
)

__version__ = "0.1.0"
