"""Active-RIS downlink beamforming for demand-aware energy efficiency.

Library layout:
  config      system parameters, unit conversions
  channel     mmWave multipath generation, CSI outdating
  linkmodel   rates, power models, efficiency and service metrics
  conic       conic-program IR and interior-point solve layer
  optimizer   alternating beam/surface optimization with quantized surfaces
  experiments scenario sweeps, result emission
"""

from .config import SystemConfig, db_to_linear, dbi_to_amplitude, dbm_to_watt
from .channel import (
    ChannelRealization,
    draw_channels,
    nearest_square_factors,
    path_loss_db,
    realize_true_channel,
    sample_bs_ris_channel,
    sample_ris_user_channel,
    ula_steering,
    upa_steering,
)
from .linkmodel import (
    BeamformerState,
    DemandProfile,
    ErrorStats,
    PowerBreakdown,
    average_rate,
    bs_power,
    build_error_stats,
    ee,
    instantaneous_rate,
    interference_denominator,
    iree,
    power_breakdown,
    qos,
    qos_literal,
    ris_emitted_power,
    ris_power,
    signal_amplitudes,
    total_power,
)
from .optimizer import (
    Codebook,
    ComplexityReport,
    InfeasibleConfigurationError,
    MonotonicityError,
    OptimizationResult,
    OptimizerConfig,
    StageRecord,
    SubproblemError,
    build_codebook,
    complexity_report,
    exhaustive_surface_search,
    feasibility_report,
    initialize_state,
    normalized_distance,
    optimize,
    phase_only_codebook,
    project_to_codebook,
    write_trace,
)
from .experiments import (
    METHODS,
    ScenarioSpec,
    TrialRecord,
    emit_results,
    lognormal_params,
    run_sweep,
    run_trial,
    sample_demands,
    summarize,
)

__version__ = "0.1.0"
