"""Pricing-game coordination of electric ride-hailing fleet charging.

A numpy/scipy library covering:

* cost model and feedback pricing policies (:mod:`chargegame.model`),
* admissible allocation sets, matching feasibility, projection, and
  rounding (:mod:`chargegame.feasible`),
* decentralized Nash computation (:mod:`chargegame.equilibrium`),
* robustness to demand-estimate noise (:mod:`chargegame.robustness`),
* driver-side surge pricing (:mod:`chargegame.surge`),
* fleet/traffic simulation and parameter estimation
  (:mod:`chargegame.scenario`, :mod:`chargegame.network`),
* baselines, grid search, and the end-to-end pipeline
  (:mod:`chargegame.harness`).
"""

from .errors import (ChargeGameError, DegenerateFleetError, EmptyPolytopeError,
                     InfeasibleTargetError, PipelineStageError, ZeroGainError)
from .feasible import (AdmissiblePolytope, FeasibilityStructure,
                       admissible_polytope, discretize, hall_condition, project)
from .model import (AllocationProfile, CompanyParams, GameInstance,
                    GovernmentObjective, StationSet, aggregate, company_cost,
                    derive_queuing_params, government_cost,
                    pseudo_inverse_diag, queuing_cost, reduced_cost,
                    setpoint_from_distribution, system_optimal_prices,
                    approximate_prices)
from .equilibrium import (SolveReport, default_start, game_map,
                          lambda_max_closed_form, nash_residual,
                          pseudo_gradient, solve_nash, step_size_bound)
from .robustness import (GapBound, Perturbation, SweepResult,
                         best_response_gap, build_perturbation,
                         check_convexity_assumption, epsilon_bound,
                         jg_gap_bound, lipschitz_bound, psi_values,
                         robustness_sweep)
from .surge import (DriverParams, SurgeSolution, assign_vehicles,
                    driver_best_response, equal_price_solve,
                    per_vehicle_prices, two_step, verify_zero_cost)
from .scenario import (FleetSnapshot, Scenario, ScenarioParams, build_game,
                       compute_feasibility, demo_scenario, discharge_step,
                       estimate_company_params, estimate_driver_params,
                       mfd_speed, reference_game, simulate_period)
from .network import RoadNetwork, grid_network, read_network, write_network
from .harness import (ExperimentConfig, GridSearchResult, fixed_price_nash,
                      grid_search, run_pipeline)

__version__ = "0.1.0"
