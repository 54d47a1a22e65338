"""OFDM over-the-air computation with a two-dimensional fluid antenna array.

Alternating optimization of per-subcarrier precoders, MMSE combiners and
antenna positions, plus fixed-position and exhaustive-selection baselines.
"""

from .channel import assemble_factors, channel_matrix, field_response_vector, path_difference
from .harness import (
    ExperimentSpec,
    TrialResult,
    run_experiment,
    solve_eas,
    solve_fpa,
    solve_proposed,
)
from .model import (
    AntennaLayout,
    ChannelRealization,
    ConfigError,
    FrequencyChannel,
    SystemConfig,
    TransceiverState,
    default_config,
    load_config,
    sample_channel,
)
from .position_opt import PositionGrid, build_surrogate, mm_position_step, surrogate_value
from .transceiver import (
    overall_mse,
    position_objective,
    update_combiners,
    update_precoders,
)

__version__ = "0.1.0"
