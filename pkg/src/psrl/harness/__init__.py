"""Config-driven experiment harness: run-matrix expansion, per-episode
logging with exact regret accounting, CSV output and summaries."""
from psrl.harness.config import ConfigError, load_config, validate_config
from psrl.harness.runner import (
    RESULT_COLUMNS,
    EnvOracle,
    build_agent,
    build_environment,
    build_probes,
    expand_and_run,
    expand_cells,
    run_single,
)
from psrl.harness.summary import (
    SUMMARY_COLUMNS,
    format_summary_table,
    summarize_csv_files,
    summarize_results,
    write_outputs,
)

__all__ = [
    "ConfigError", "load_config", "validate_config", "RESULT_COLUMNS",
    "EnvOracle", "build_agent", "build_environment", "build_probes",
    "expand_and_run", "expand_cells", "run_single", "SUMMARY_COLUMNS",
    "format_summary_table", "summarize_csv_files", "summarize_results",
    "write_outputs",
]
