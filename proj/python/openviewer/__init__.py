from ._openviewer import (
    ConfigError,
    DataError,
    DimensionError,
    DomainError,
    Error,
    __version__,
    gradcheck,
    group_soft_threshold,
    openness_split,
    openness_value,
    oscr_curve,
    run_experiment,
    soft_threshold,
    solve,
    synthesize,
    version_info,
)

__all__ = [
    "ConfigError",
    "DataError",
    "DimensionError",
    "DomainError",
    "Error",
    "__version__",
    "gradcheck",
    "group_soft_threshold",
    "openness_split",
    "openness_value",
    "oscr_curve",
    "run_experiment",
    "soft_threshold",
    "solve",
    "synthesize",
    "version_info",
]
