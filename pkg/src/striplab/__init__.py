"""striplab: a numerical laboratory for geodesic flows near flat strips.

Warped-product strip models, the geodesic flow in Fermi coordinates, the
shadowing construction along the singular torus, scalar Riccati limits for
the unstable shape operator, power-law decay certificates, and the
separated-set pressure machinery with its quantitative gap lower bound.
"""

from .errors import (
    BlowUp,
    BoundViolated,
    BoundViolationError,
    ConclusionViolated,
    ConfigError,
    DegenerateSample,
    DomainTooWide,
    EscapeNotObserved,
    HypothesisViolated,
    Inconclusive,
    InsufficientData,
    InvalidCase,
    NoConvergence,
    NotConverged,
    OrderMismatch,
    OutOfStrip,
    RegimeMismatch,
    SandwichViolated,
    SeparationViolated,
    StepFailure,
    StripLabError,
    StripTooWide,
    Unsupported,
)
from .geometry import (
    CappedPowerProfile,
    ConstantCurvatureProfile,
    CurvatureSample,
    FlatProfile,
    MetricModel,
    PowerProfile,
    SDependentProfile,
    capped_power_model,
    constant_curvature_model,
    eval_metric,
    flat_model,
    normal_curvature,
    power_model,
    principal_curvatures,
    ricci_order_certificate,
    s_dependent_model,
    sectional_and_ricci,
    verify_curvature_order,
    warp_excess_certificate,
)
from .geodesics import (
    PhaseState,
    ShadowResult,
    Trajectory,
    VectorClass,
    classify_vector,
    clairaut_invariant,
    descent_angle,
    descent_orbit,
    dt_distance,
    geodesic_rhs,
    integrate,
    launch_angle,
    phase_distance,
    reflected_conservation_orbit,
    separated_preservation_check,
    shadow_map,
)
from .pressure import (
    GapCertificate,
    PotentialSpec,
    SeparatedSetEstimate,
    classify_potential_region,
    escape_time_L,
    evaluate_potential,
    evaluate_potential_arrays,
    gap_lower_bound,
    lambda_estimate,
    potential_sup_norm,
    sing_pressure,
)
from .riccati import (
    PotentialSample,
    RiccatiCurve,
    SampleWindow,
    ScalingEnvelope,
    backward_band_time,
    comparison_domain_limit,
    psi_u,
    scaling_check,
    solve_comparison_riccati,
    trace_comparison_bounds,
    unstable_riccati_limit,
)
from .scaling import (
    DecayReport,
    KeyInequalityReport,
    check_ode_discont_lemma,
    fit_loglog_exponent,
    graded_grid,
    key_inequality_integral,
    lemma_q0,
    make_synthetic_decreasing,
    measure_envelope,
    verify_decay_bounds,
)

__version__ = "0.1.0"
