"""Optimal and blocking-constrained LTE/WiFi association policies.

The package solves the population-level association MDP by relative value
iteration, searches the Lagrange multiplier for a voice-blocking bound,
checks the threshold structure of the solutions, evaluates any policy
exactly from its stationary distribution and simulates it event by event.
"""
from .model import (ActionKind, EventKind, InfeasibleActionError, ModelParams, State, StateSpace,
                    ValidationError, build_tables, cost, data_threshold, enumerate_states, event_rate,
                    feasible_actions, reward, state_throughput, total_rate, transition)
from .wifi import (CurveError, FixedPointError, ThroughputCurve, WifiParams, bianchi_curve, compute_W,
                   compute_k_th, table_curve)
from .policy import (Policy, RandomizedPolicy, maximal_acceptance_policy, on_the_spot_policy,
                     read_policy_csv)
from .oracle import (PolicyEvaluation, brute_force_optimal, enumerate_policies, erlang_b,
                     evaluate_policy_exact)
from .solver import (CMDPResult, ConvergenceError, InfeasibleConstraintError, SolveResult, SolverConfig,
                     SolverError, UniformizedModel, ValueFunction, bellman_update, solve_cmdp,
                     solve_unconstrained, uniformize, value_iteration)
from .structure import (StructureReport, ThresholdExtractionError, ThresholdTables, extract_thresholds,
                        verify_data_rules, verify_structure, verify_value_structure, verify_voice_rules)
from .simulator import (SimConfig, SimMetrics, policy_algorithm1, policy_algorithm2, policy_on_the_spot,
                        simulate)
from .config import ModelConfig, load_config
from .experiment import ExperimentSpec, SweepResult, emit_outputs, run_sweep

__version__ = "0.1.0"
