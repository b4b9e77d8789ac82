"""spinldp: large-deviation numerics for quantum spin chains.

Log moment generating functions, Legendre-transform rate functions, and exact
finite-volume spectral distributions of energy-density observables for Gibbs
and C*-finitely correlated states, verified at desk scale through truncated
transfer operators.
"""

__version__ = "0.1.0"

from .chain_algebra import (
    Interaction,
    boundary_term,
    hamiltonian,
    interaction_norm,
    load_interaction,
    save_interaction,
    theta_norm,
    variation_seminorm,
)
from .errors import (
    CapExceededError,
    ConfigError,
    ConvergenceError,
    DomainError,
    InvariantViolation,
    SpinLDPError,
)
from .expansionals import (
    expansional,
    expansional_identities_check,
    imaginary_time_conjugation,
    kms_weight_decay_table,
    kms_weight_element,
)
from .ldp_engine import (
    RateCurve,
    SpectralMeasure,
    ensembles_equivalence,
    ldp_bounds_check,
    legendre_transform,
    log_mgf_curve,
    log_pn_alpha,
    pn_alpha,
    spectral_measure,
)
from .operator_kernel import (
    LocalOperator,
    embed,
    herm_spectral,
    mat_exp,
    partial_trace,
    spectral_projection,
)
from .states import (
    FCSTriple,
    GibbsFiniteState,
    fcs_channel_spectrum,
    fcs_local_density,
    fcs_primitivity_reduce,
    gibbs_density,
    load_fcs_triple,
    save_fcs_triple,
    state_sandwich_check,
)
from .transfer import (
    TruncatedTransferOperator,
    build_fcs_operator,
    build_kms_operator,
    fc_deformed_transfer,
    kms_log_increment,
    leading_eigen,
    theorem22_diagnostics,
)
