"""Worst-case publication-bias bounds for random-effects meta-analysis.

Public API: dataset handling (`core`), the random-effects ML fit
(`relik`), selection models (`selmodels`), the closed-form C-J bound
(`cjbound`), the optimization-based extended bound (`extbound`),
sensitivity sweeps (`sensitivity`), and the simulation harness (`sim`).
"""

from .cjbound import BoundResult, cj_bound, cj_bound_sweep
from .core import (CountTable, DatasetError, MetaDataset, Study,
                   lnor_from_counts, load_dataset, load_example,
                   DATASET_NAMES)
from .extbound import (ExtBoundResult, ExtendedBound, MCGrid, OptConfig,
                       Opt2Solution, SolverError, a1_bound, bias_objective,
                       extended_bound, model_bias, solve_opt2)
from .relik import REFit, fit_ml, loglik
from .selmodels import (CalibrationError, REContext, SelectionModel,
                        calibrate_intercept, check_A0, discretize_p1,
                        find_a1_threshold, p0, p1, p2)
from .sensitivity import AdjustedEstimate, SweepRow, adjusted_estimate, sweep
from .sim import (RepOutcome, Scenario, ScenarioCell, SCENARIOS,
                  generate_replication, get_scenario, run_scenario)

__version__ = "1.0.0"

__all__ = [
    "BoundResult", "cj_bound", "cj_bound_sweep",
    "CountTable", "DatasetError", "MetaDataset", "Study",
    "lnor_from_counts", "load_dataset", "load_example", "DATASET_NAMES",
    "ExtBoundResult", "ExtendedBound", "MCGrid", "OptConfig",
    "Opt2Solution", "SolverError", "a1_bound", "bias_objective",
    "extended_bound", "model_bias", "solve_opt2",
    "REFit", "fit_ml", "loglik",
    "CalibrationError", "REContext", "SelectionModel",
    "calibrate_intercept", "check_A0", "discretize_p1",
    "find_a1_threshold", "p0", "p1", "p2",
    "AdjustedEstimate", "SweepRow", "adjusted_estimate", "sweep",
    "RepOutcome", "Scenario", "ScenarioCell", "SCENARIOS",
    "generate_replication", "get_scenario", "run_scenario",
    "__version__",
]
