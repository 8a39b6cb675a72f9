"""Shape-gradient descent loop: Hilbertian direction extraction, step
halving line search, mesh update and history logging.

The direction solve inverts the 1d inner product

    b(theta, eta) = int_D alpha theta' eta' + beta theta eta dxi

with homogeneous Dirichlet values at the design boundary; the reported
direction norm is sqrt(b(theta, theta)), which is also the stopping
quantity.
"""

import csv
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .derivative import pde_volume_densities
from .errors import ConfigError, InvertedElementError
from .fem import evaluate_objective, solve_adjoint, solve_state
from .mesh import deform_mesh

HISTORY_HEADER = ("iter", "J", "theta_norm", "tau", "newton_iters")


@dataclass(frozen=True)
class DescentConfig:
    alpha: float = 0.5
    beta: float = 0.0
    include_cauchy_riemann: bool = False
    tau_init: float = 1.0
    tau_min: float = 1e-10
    theta_tol: float = 1e-9
    max_outer: int = 200
    max_halvings: int = 60

    def __post_init__(self):
        if self.alpha <= 0.0:
            raise ConfigError(f"descent weight alpha must be positive, "
                              f"got {self.alpha}")
        if self.beta < 0.0:
            raise ConfigError(f"descent weight beta must be nonnegative, "
                              f"got {self.beta}")
        if not self.tau_min < self.tau_init:
            raise ConfigError("descent needs tau_min < tau_init")
        if self.include_cauchy_riemann:
            raise ConfigError("the Cauchy-Riemann augmentation needs a "
                              "two-dimensional design space")


@dataclass
class IterationRecord:
    iteration: int
    objective: float
    theta_norm: float
    tau: float
    newton_iterations: int


@dataclass
class OptimizationReport:
    records: list
    termination: str
    mesh: object
    state: object
    objective_value: float
    metadata: dict = field(default_factory=dict)


def _inner_product_matrix(spatial_mesh, config):
    h = spatial_mesh.widths
    n = len(spatial_mesh.nodes)
    main = np.zeros(n)
    off = np.zeros(n - 1)
    main[:-1] += config.alpha / h + config.beta * h / 3.0
    main[1:] += config.alpha / h + config.beta * h / 3.0
    off += -config.alpha / h + config.beta * h / 6.0
    return sp.diags([off, main, off], offsets=[-1, 0, 1], format="csc")


def hilbertian_direction(spatial_mesh, densities, config):
    """Solve b(theta, eta) = J'(eta) and return (-theta, sqrt(b(theta,
    theta))); the returned direction makes the pairing nonpositive by
    construction."""
    n = len(spatial_mesh.nodes)
    h = spatial_mesh.widths
    load = np.zeros(n)
    load[:-1] += 0.5 * h * densities.g0 - densities.g1
    load[1:] += 0.5 * h * densities.g0 + densities.g1

    matrix = _inner_product_matrix(spatial_mesh, config)
    interior = slice(1, n - 1)
    theta = np.zeros(n)
    theta[interior] = spla.spsolve(matrix[interior, interior],
                                   load[interior])
    norm = float(np.sqrt(max(theta @ (matrix @ theta), 0.0)))
    return -theta, norm


@dataclass
class LineSearchResult:
    tau: float
    mesh: object
    state: object
    objective_value: float
    trials: int


def line_search(mesh, layout, source, objective, state, j_current,
                direction, tau0, config, newton=None):
    """First step halving of tau0 that decreases the objective on a valid
    mesh; every candidate re-solves the state.  Returns None when tau falls
    below tau_min or the halving budget is exhausted."""
    tau = tau0
    for trial_count in range(config.max_halvings):
        if tau < config.tau_min:
            return None
        try:
            trial_mesh = deform_mesh(mesh, direction, tau)
        except InvertedElementError:
            tau *= 0.5
            continue
        trial = solve_state(trial_mesh, layout, source, newton=newton,
                            initial_guess=state.u)
        j_trial = evaluate_objective(trial_mesh, trial.u, objective)
        if j_trial < j_current:
            return LineSearchResult(tau=tau, mesh=trial_mesh, state=trial,
                                    objective_value=j_trial,
                                    trials=trial_count + 1)
        tau *= 0.5
    return None


def optimize(mesh, layout, source, objective, config, newton=None,
             callback=None):
    """Run the descent loop from the given design.

    Each iteration solves state and adjoint, assembles the derivative
    densities, extracts the Hilbertian direction, line-searches a step and
    deforms the mesh; the state solve warm-starts from the previous
    iterate.  Stops on the direction-norm tolerance, a failed line search,
    or the iteration cap; the accepted objective sequence is strictly
    decreasing by construction.
    """
    state = solve_state(mesh, layout, source, newton=newton)
    j_value = evaluate_objective(mesh, state.u, objective)
    records = []
    termination = "max_outer"
    tau_prev = config.tau_init

    for n in range(config.max_outer):
        adjoint = solve_adjoint(mesh, layout, state.u, objective)
        densities = pde_volume_densities(mesh, layout, state.u, adjoint,
                                         source, objective)
        direction, norm = hilbertian_direction(mesh.spatial_mesh(),
                                               densities, config)
        # by construction the pairing equals -b(theta, theta)
        assert densities.pairing(direction) <= 1e-12 * (abs(j_value) + 1.0)
        if norm <= config.theta_tol:
            records.append(IterationRecord(n, j_value, norm, 0.0,
                                           state.iterations))
            termination = "theta_tolerance"
            break
        tau0 = config.tau_init if n == 0 else min(2.0 * tau_prev,
                                                  config.tau_init)
        result = line_search(mesh, layout, source, objective, state,
                             j_value, direction, tau0, config, newton=newton)
        if result is None:
            records.append(IterationRecord(n, j_value, norm, 0.0,
                                           state.iterations))
            termination = "line_search_failure"
            break
        records.append(IterationRecord(n, j_value, norm, result.tau,
                                       state.iterations))
        if callback is not None:
            callback(n, result)
        mesh = result.mesh
        state = result.state
        j_value = result.objective_value
        tau_prev = result.tau
    else:
        records.append(IterationRecord(config.max_outer, j_value, 0.0, 0.0,
                                       state.iterations))

    return OptimizationReport(
        records=records, termination=termination, mesh=mesh, state=state,
        objective_value=j_value,
        metadata={"theta_norm": "sqrt(b(theta, theta))",
                  "inner_product":
                      f"alpha={config.alpha} grad-grad + beta={config.beta} "
                      f"mass, Dirichlet design boundary"})


def write_history_csv(path, records):
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(HISTORY_HEADER)
        for r in records:
            writer.writerow([r.iteration, f"{r.objective:.12e}",
                             f"{r.theta_norm:.12e}", f"{r.tau:.12e}",
                             r.newton_iterations])
