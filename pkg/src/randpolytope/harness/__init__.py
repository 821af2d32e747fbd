from .config import ExperimentConfig, load_config, parse_config
from .experiments import (run_convergence, run_decomposition, run_diagnostics, run_experiment,
                          run_limit_constants, run_variance_scan)
from .results import ResultRow, fit_log_power, write_meta, write_results
