"""Market equilibrium on moving feasible sets: models, price oracles, solvers, certificates."""
from .balance import (AffinePriceSpec, Buyer, ClearingPrices, Trader, check_single_equilibrium,
                      lmo_balanced, lmo_market, project_balanced, project_market,
                      single_commodity_equilibrium)
from .errors import *  # noqa: F401,F403
from .model import (AgentSpec, Dimensions, GeneratorParams, LPSetValued, Regularized, Scenario,
                    TechnologySpec, feasible_window, is_balanced_feasible, random_scenario,
                    validate_assumptions)
from .pricing import PricePolytope, eta_gradient, eta_value, lp_max, mu_subgradient, mu_value
from .solvers import (ConvergenceTrace, PCGMConfig, SGPConfig, gap, solve_fpi, solve_pcgm,
                      solve_sgp)
from .verify import (brute_force_eta_optimum, brute_force_mu_optimum, check_qvi_solution,
                     convexity_check, gradient_check)

__version__ = "0.1.0"
