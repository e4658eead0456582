"""Scenario-based stochastic model predictive control.

Sample-complexity bounds for sample-removal pairs, condensed scenario
programs solved by a dual active-set QP, a-posteriori scenario removal,
the receding-horizon feedback law and closed-loop Monte Carlo.
"""

from .complexity import (SampleRemovalPair, expected_violation_bound, min_sample_size,
                         support_rank_bound, violation_bound)
from .controller import ControllerConfig, ScenarioMPC, admissibility_check, step
from .errors import (ConfigurationError, InadmissiblePairError, InfeasibleProgramError,
                     NumericalError, RemovalGuardError, SCMPCError, UsageError)
from .model import (ChanceConstraintSpec, Normal, Polytope, StageCost, SystemModel, Uniform,
                    example_sets, example_system, sample_scenarios)
from .removal import RemovalOutcome, remove, remove_greedy, remove_marginal, remove_optimal
from .scenario_program import QPSolution, ScenarioProgram, assemble, condense, solve
from .simulator import (AdditiveToy, ClosedLoopRecord, bound_validation_experiment,
                        estimate_violation_probability, simulate)

__version__ = "0.1.0"

__all__ = [
    "AdditiveToy", "ChanceConstraintSpec", "ClosedLoopRecord", "ConfigurationError",
    "ControllerConfig", "InadmissiblePairError", "InfeasibleProgramError", "Normal",
    "NumericalError", "Polytope", "QPSolution", "RemovalGuardError", "RemovalOutcome",
    "SCMPCError", "SampleRemovalPair", "ScenarioMPC", "ScenarioProgram", "StageCost",
    "SystemModel", "Uniform", "UsageError", "admissibility_check", "assemble",
    "bound_validation_experiment", "condense", "estimate_violation_probability",
    "example_sets", "example_system", "expected_violation_bound", "min_sample_size", "remove",
    "remove_greedy", "remove_marginal", "remove_optimal", "sample_scenarios", "simulate",
    "solve", "step", "support_rank_bound", "violation_bound",
]
