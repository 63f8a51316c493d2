"""Solver library and simulation harness for the dynamic and stochastic
VRPTW: scenario-sampling decision rules with nonanticipativity preserved,
travel-cost and expectation baselines, an exact small-instance oracle, and a
replay benchmark over a discrete horizon."""

from ._accel import NUMBA_ENABLED
from .instances import (CLASS_PROFILES, ClassProfile, Instance, Request,
                        build_nonanticipation_fixture, generate_dynamic_instance,
                        make_synthetic_base, parse_static_instance,
                        read_dynamic_instance, write_dynamic_instance)
from .plan import (DecisionLog, RoutePlan, Schedule, VehicleState, Visit,
                   compute_schedule, objective_omega, total_travel_cost)
from .scenarios import (Scenario, ScenarioPool, latest_useful_epoch, new_pool,
                        resample_pool, sample_scenario, update_pool)
from .evaluation import EvalResult, Evaluator, qbar, qbar_trace, try_to_serve
from .oracle import (Action, GuardExceededError, OracleGuard, OracleState,
                     exact_multistage_value, two_stage_value)

__version__ = "0.1.0"
