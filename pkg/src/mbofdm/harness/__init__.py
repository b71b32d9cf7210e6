"""Campaign orchestration, persistence, figure data and the command line."""

from .campaigns import (
    BerPoint,
    CapacityOutageResult,
    ChannelStatsResult,
    OutageBerResult,
    load_result,
    realization_seed,
    required_snr,
    run_ber_outage,
    run_capacity_outage,
    run_channel_stats,
    run_experiment,
    run_loading_study,
    write_result,
)
from .config import ConfigError, ExperimentConfig, load_config, load_preset
from .emit import FigureDataError, emit_figure_data, range_table

__all__ = [
    "BerPoint",
    "CapacityOutageResult",
    "ChannelStatsResult",
    "ConfigError",
    "ExperimentConfig",
    "FigureDataError",
    "OutageBerResult",
    "emit_figure_data",
    "load_config",
    "load_preset",
    "load_result",
    "range_table",
    "realization_seed",
    "required_snr",
    "run_ber_outage",
    "run_capacity_outage",
    "run_channel_stats",
    "run_experiment",
    "run_loading_study",
    "write_result",
]
