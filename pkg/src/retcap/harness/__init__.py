from .config import (
    DEFAULT_MIN_CAP,
    MIN_CAP_CHOICES,
    MIN_CAPS,
    ConfigError,
    ExperimentConfig,
    default_config,
    parse_config,
    parse_config_text,
    resolve_min_cap,
    serialize_config,
    table_defaults,
)
from .experiment import (
    METRIC_COLUMNS,
    RunError,
    emit_plotdata,
    evaluate,
    evaluate_fn,
    read_metrics,
    run_experiment,
    run_seed,
    summarize,
)
