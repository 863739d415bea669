from .config import (ConfigError, PolicySpec, ScenarioConfig, load_config, parse_config,
                     preset, preset_topology)
from .engine import (EmptyTrace, RunMetrics, SimulationError, aggregate, block_features,
                     convergence_time, run_batch, run_replicates, run_scenario)
from .export import csv_header, export, read_summary
