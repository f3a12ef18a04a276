"""Adaptation dynamics tracing moving equilibria, with verified tracking bounds.

Core objects: CES Fisher markets with price (tatonnement) and bid
(proportional response) dynamics, perturbation schedules with closed-form
potential-jump caps, and generic geometric tracking envelopes instantiated on
markets, drifting-optimum gradient descent, and diffusive load balancing.
"""

from .applications import (
    DiffusionTrace,
    GdTrace,
    LoadNetwork,
    ShiftingQuadratic,
    balanced_state,
    diffusion_step,
    diffusion_tracking_bound,
    gd_contraction,
    gd_regret_bound,
    gd_step,
    gd_steady_state,
    gd_tracking_bound,
    second_eigenvalue,
    simulate_diffusion,
    simulate_shifting_quadratic,
)
from .equilibrium import ConvergenceError, EquilibriumResult, solve_equilibrium
from .lyapunov import (
    LyapunovTrace,
    MarketPriceSystem,
    bregman_bound,
    dominant_window,
    meta_bound,
    schedule_perturbations,
    track,
    windowed_bound,
)
from .market import (
    CesMarket,
    DegenerateDemandError,
    DemandProfile,
    LinearUtilityError,
    cpf_potential,
    demand,
    misspending_potential,
    normalized_cpf_potential,
    unit_cost,
)
from .perturbation import (
    BUDGET,
    CHANNELS,
    SUPPLY,
    UTILITY,
    PerturbationEvent,
    PerturbationSchedule,
    ScheduleSpec,
    apply_event,
    calibrate_c_prime,
    delta_cpf_budget,
    delta_cpf_supply,
    delta_cpf_utility,
    delta_ms_budget,
    delta_ms_supply,
    delta_ms_utility,
    delta_prd_utility,
    extremize_shares,
    generate_schedule,
    share_deviation,
)
from .prd import (
    PrdBoundConfig,
    check_bids,
    fit_prd_constants,
    kl_divergence,
    prd_normalized_potential,
    prd_potential_g,
    prd_step,
    proportional_bids,
    reduce_supply_to_utility,
    run_prd_trace,
)
from .tatonnement import (
    CPF,
    MISSPENDING,
    TatonnementConfig,
    default_step_size,
    fit_contraction,
    run_tatonnement_trace,
    step_cpf,
    step_ms,
)
from .trace import CSV_HEADER, TraceRecord, file_sha256, trace_csv_lines, write_trace_csv

__version__ = "0.1.0"
