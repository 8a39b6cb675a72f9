"""Shape derivatives: academic volume/surface forms, PDE-constrained volume
densities and interface densities, and the magnetization supplement.

The volume form of every derivative here is a pairing

    J'(theta) = int_D g0 . theta + g1 : grad theta dxi

with piecewise-constant densities g0, g1 on the spatial design mesh.  Each
density is a time integral of pullback-kernel coefficients along the
trajectory t -> phi_t(xi) of the element centroid, evaluated with a composite
trapezoidal rule whose nodes are the slab boundaries and the diagonal
crossing times of the trajectory.
"""

from dataclasses import dataclass

import numpy as np

from .errors import UnsupportedCaseError
from .fem import NQ, evaluate_objective, solve_state
from .kernels import jet1d, m_prime, pullback_scalar_derivative
from .mesh import deform_mesh, trajectory_intervals


@dataclass
class DerivativeDensities:
    """P0 densities on the spatial design mesh; g1 pairs with theta'."""

    g0: np.ndarray
    g1: np.ndarray
    spatial_mesh: object
    metadata: dict

    def pairing(self, theta):
        """Exact integral of g0 . theta + g1 theta' for P1 nodal theta."""
        theta = np.asarray(theta, dtype=float)
        mean = 0.5 * (theta[:-1] + theta[1:])
        jump = np.diff(theta)
        return float(np.sum(self.spatial_mesh.widths * self.g0 * mean)
                     + np.sum(self.g1 * jump))

    def add(self, other):
        return DerivativeDensities(
            g0=self.g0 + other.g0, g1=self.g1 + other.g1,
            spatial_mesh=self.spatial_mesh,
            metadata={**self.metadata, **other.metadata})


@dataclass
class InterfaceDensities:
    """Surface-form density per interface point: J'(theta) = sum v (theta.n)."""

    node_ids: np.ndarray
    positions: np.ndarray
    values: np.ndarray
    normals: np.ndarray

    def pairing(self, theta):
        theta = np.asarray(theta, dtype=float)
        return float(np.sum(self.values * theta[self.node_ids] * self.normals))


def _element_planes(mesh, nodal):
    """Affine representation (value at vertex 0, dt-slope, dx-slope, anchor)
    of a P1 field on every element."""
    tri = mesh.elements
    p = mesh.vertices[tri]
    d1 = p[:, 1] - p[:, 0]
    d2 = p[:, 2] - p[:, 0]
    two_a = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]
    vals = nodal[tri]
    e1 = vals[:, 1] - vals[:, 0]
    e2 = vals[:, 2] - vals[:, 0]
    slope_t = (e1 * d2[:, 1] - e2 * d1[:, 1]) / two_a
    slope_x = (e2 * d1[:, 0] - e1 * d2[:, 0]) / two_a
    return vals[:, 0], slope_t, slope_x, p[:, 0, 0], p[:, 0, 1]


def _phase_nu(mesh, layout, u_x):
    nu = np.empty(mesh.n_elements)
    nu_prime = np.empty(mesh.n_elements)
    for pid, mat in layout.materials.items():
        mask = mesh.phases == pid
        if np.any(mask):
            nu[mask], nu_prime[mask] = mat.nu.eval(np.abs(u_x[mask]))
    return nu, nu_prime


def pde_volume_densities(mesh, layout, u, p, source, objective):
    """Volume-form densities of the PDE-constrained objective.

    Expands every term of the derivative through the pullback kernels into
    coefficients for (theta, theta') and integrates them along the centroid
    trajectories; covers the nonlinear reluctivity correction term, with the
    nu'/|grad u| quotient guarded by its removable-singularity limit.
    """
    sm = mesh.spatial_mesh()
    u_nodal = u.nodal()
    p_nodal = p.nodal()
    u0, u_t, u_x, _, _ = _element_planes(mesh, u_nodal)
    p0, p_t, p_x, t0, x0 = _element_planes(mesh, p_nodal)
    sigma_e = layout.sigma(mesh.phases)
    nu_e, nu_prime_e = _phase_nu(mesh, layout, u_x)

    xi_c = sm.centroids
    els, t_nodes = trajectory_intervals(mesh, xi_c)
    t_eval = np.stack([t_nodes[:, :-1], t_nodes[:, 1:]], axis=-1)
    e_eval = np.broadcast_to(els[:, :, None], t_eval.shape)
    xi_eval = np.broadcast_to(xi_c[:, None, None], t_eval.shape)

    x_eval = mesh.motion.forward(t_eval.ravel(),
                                 xi_eval.ravel()[:, None])[:, 0] \
        .reshape(t_eval.shape)
    jets = jet1d(mesh.motion, t_eval, xi_eval)

    u_pt = u0[e_eval] + u_t[e_eval] * (t_eval - t0[e_eval]) \
        + u_x[e_eval] * (x_eval - x0[e_eval])
    p_pt = p0[e_eval] + p_t[e_eval] * (t_eval - t0[e_eval]) \
        + p_x[e_eval] * (x_eval - x0[e_eval])
    ux = u_x[e_eval]
    px = p_x[e_eval]
    du_dt = u_t[e_eval] + jets.vhat * ux
    sig = sigma_e[e_eval]
    nu = nu_e[e_eval]
    nu_p = nu_prime_e[e_eval]

    f_pt = source.values(t_eval, x_eval, xi_eval)
    grad_f_pt = source.gradient(t_eval, x_eval, xi_eval)
    ju = objective.j(u_pt)

    hog = jets.h_over_g
    c_m = ju + sig * du_dt * p_pt - f_pt * p_pt
    s0 = c_m * hog
    s1 = c_m.copy()
    # transported convection of the state gradient
    s0 += -sig * p_pt * jets.vhat * ux * hog
    s1 += -sig * p_pt * jets.vhat * ux
    # derivative of the velocity pullback
    s0 += sig * p_pt * ux * jets.W
    # derivative of the transported time direction
    s0 += -sig * p_pt * ux * (jets.W + jets.H * jets.q)
    s1 += -sig * p_pt * ux * jets.G * jets.q
    # diffusion tensor derivative, with the nonlinear correction
    flux = -(nu + nu_p * np.abs(ux)) * ux * px
    s0 += flux * hog
    s1 += flux
    # derivative of the source pullback
    s0 += -p_pt * jets.G * grad_f_pt

    det = np.abs(jets.G)
    dt = np.diff(t_nodes, axis=1)
    g0 = np.sum(0.5 * dt * (det[..., 0] * s0[..., 0]
                            + det[..., 1] * s0[..., 1]), axis=1)
    g1 = np.sum(0.5 * dt * (det[..., 0] * s1[..., 0]
                            + det[..., 1] * s1[..., 1]), axis=1)
    return DerivativeDensities(
        g0=g0, g1=g1, spatial_mesh=sm,
        metadata={"functional": "pde_objective",
                  "time_rule": "trapezoid on slab boundaries and crossings"})


def pde_surface_derivative(mesh, layout, u, p):
    """Interface density of the derivative in the piecewise-constant
    reluctivity case; one-sided interface values are averaged."""
    if not layout.all_constant:
        raise UnsupportedCaseError(
            "surface form is only available for constant reluctivity laws")
    sm = mesh.spatial_mesh()
    nodes = sm.interface_nodes()
    if len(nodes) == 0:
        return InterfaceDensities(node_ids=np.array([], dtype=int),
                                  positions=np.array([]),
                                  values=np.array([]), normals=np.array([]))

    u_nodal = u.nodal()
    p_nodal = p.nodal()
    u0, u_t, u_x, _, _ = _element_planes(mesh, u_nodal)
    p0, p_t, p_x, t0, x0 = _element_planes(mesh, p_nodal)

    values = np.empty(len(nodes))
    normals = np.empty(len(nodes))
    positions = sm.nodes[nodes]
    t_grid = mesh.t_grid
    for idx, a in enumerate(nodes):
        xi_a = sm.nodes[a]
        inner_is_right = sm.phases[a] == 1
        normals[idx] = -1.0 if inner_is_right else 1.0
        mat_in = layout.material(1)
        mat_out = layout.material(2)
        sigma_jump = mat_out.sigma - mat_in.sigma
        inv_nu_jump = 1.0 / mat_out.nu.value - 1.0 / mat_in.nu.value

        total = 0.0
        for j in range(mesh.n_t):
            e_minus = mesh.edge_element(a, j, "minus")
            e_plus = mesh.edge_element(a, j, "plus")
            contrib = np.empty(2)
            for k, t in enumerate((t_grid[j], t_grid[j + 1])):
                x_a = mesh.motion.forward(np.array([t]),
                                          np.array([[xi_a]]))[0, 0]
                jet = jet1d(mesh.motion, np.array([t]), np.array([xi_a]))
                det = abs(jet.G[0])
                v_pt = jet.vhat[0]
                dudt = np.empty(2)
                fluxprod = np.empty(2)
                for s, e in enumerate((e_minus, e_plus)):
                    p_val = p0[e] + p_t[e] * (t - t0[e]) \
                        + p_x[e] * (x_a - x0[e])
                    dudt[s] = (u_t[e] + v_pt * u_x[e]) * p_val
                    nu_side = layout.material(mesh.phases[e]).nu.value
                    fluxprod[s] = (nu_side * u_x[e]) * (nu_side * p_x[e])
                contrib[k] = det * (-sigma_jump * np.mean(dudt)
                                    + inv_nu_jump * np.mean(fluxprod))
            total += 0.5 * (t_grid[j + 1] - t_grid[j]) * np.sum(contrib)
        values[idx] = total
    return InterfaceDensities(node_ids=nodes, positions=positions,
                              values=values, normals=normals)


def magnetization_supplement(mesh, magnetization, magnetization_grad, p,
                             element_mask):
    """Density increment from a smooth transported field supported on the
    masked spatial elements; the field and its spatial derivative are
    callables of (t, x)."""
    sm = mesh.spatial_mesh()
    p_nodal = p.nodal()
    _, _, p_x, _, _ = _element_planes(mesh, p_nodal)

    mask = np.asarray(element_mask, dtype=bool)
    g0 = np.zeros(sm.n_elements)
    g1 = np.zeros(sm.n_elements)
    active = np.nonzero(mask)[0]
    if len(active) > 0:
        xi_c = sm.centroids[active]
        els, t_nodes = trajectory_intervals(mesh, xi_c)
        t_eval = np.stack([t_nodes[:, :-1], t_nodes[:, 1:]], axis=-1)
        e_eval = np.broadcast_to(els[:, :, None], t_eval.shape)
        xi_eval = np.broadcast_to(xi_c[:, None, None], t_eval.shape)
        x_eval = mesh.motion.forward(t_eval.ravel(),
                                     xi_eval.ravel()[:, None])[:, 0] \
            .reshape(t_eval.shape)
        jets = jet1d(mesh.motion, t_eval, xi_eval)
        hog = jets.h_over_g

        big_l = magnetization(t_eval, x_eval)
        grad_l = magnetization_grad(t_eval, x_eval)
        px = p_x[e_eval]

        # -(m' L + L_1 - Fxx' L) . grad p expanded in (theta, theta')
        s0 = -big_l * px * hog - grad_l * jets.G * px + big_l * px * hog
        s1 = -big_l * px + big_l * px

        det = np.abs(jets.G)
        dt = np.diff(t_nodes, axis=1)
        g0[active] = np.sum(0.5 * dt * (det[..., 0] * s0[..., 0]
                                        + det[..., 1] * s0[..., 1]), axis=1)
        g1[active] = np.sum(0.5 * dt * (det[..., 0] * s1[..., 0]
                                        + det[..., 1] * s1[..., 1]), axis=1)
    return DerivativeDensities(
        g0=g0, g1=g1, spatial_mesh=sm,
        metadata={"functional": "magnetization_supplement"})


def academic_objective(mesh, f):
    """Quadrature of the fixed integrand f over the design phase of the
    space-time mesh."""
    geom = _light_geometry(mesh)
    f_q = f.values(geom["qp_t"], geom["qp_x"], geom["qp_xi"])
    inside = mesh.phases == 1
    return float(np.sum((geom["area"][inside] / 3.0)
                        * np.sum(f_q[inside], axis=1)))


def _light_geometry(mesh):
    p = mesh.vertices[mesh.elements]
    d1 = p[:, 1] - p[:, 0]
    d2 = p[:, 2] - p[:, 0]
    area = 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])
    qp = np.einsum("qi,eid->eqd", NQ, p)
    qp_t = qp[:, :, 0]
    qp_x = qp[:, :, 1]
    qp_xi = mesh.motion.inverse(qp_t.ravel(), qp_x.ravel()[:, None])[:, 0] \
        .reshape(qp_t.shape)
    return {"area": area, "qp_t": qp_t, "qp_x": qp_x, "qp_xi": qp_xi}


def academic_volume_derivative(mesh, f, theta):
    """Volume form of the derivative of the academic functional: quadrature
    of m'(theta) f + f_1(theta) over the design phase."""
    geom = _light_geometry(mesh)
    sm = mesh.spatial_mesh()
    jets = jet1d(mesh.motion, geom["qp_t"], geom["qp_xi"])
    theta_q = sm.interpolate(theta, geom["qp_xi"])
    theta_x_q = sm.interpolate_gradient(theta, geom["qp_xi"])
    m_q = jets.h_over_g * theta_q + theta_x_q
    f_q = f.values(geom["qp_t"], geom["qp_x"], geom["qp_xi"])
    grad_f_q = f.gradient(geom["qp_t"], geom["qp_x"], geom["qp_xi"])
    f1_q = jets.G * grad_f_q * theta_q
    val = m_q * f_q + f1_q
    inside = mesh.phases == 1
    return float(np.sum((geom["area"][inside] / 3.0)
                        * np.sum(val[inside], axis=1)))


def academic_surface_density(motion, f, x, t_nodes):
    """Time integral of |det grad phi_t| f(t, phi_t(x)) at a boundary point."""
    t_nodes = np.asarray(t_nodes, dtype=float)
    xi = np.full_like(t_nodes, float(x))
    jets = jet1d(motion, t_nodes, xi)
    y = motion.forward(t_nodes, xi[:, None])[:, 0]
    vals = np.abs(jets.G) * f.values(t_nodes, y, xi)
    return float(np.trapezoid(vals, t_nodes))


def academic_surface_derivative(mesh, f, theta, t_nodes=None):
    """Surface form on the 1d mesh: interface points carry normals +-1."""
    sm = mesh.spatial_mesh()
    nodes = sm.interface_nodes()
    if t_nodes is None:
        t_nodes = mesh.t_grid
    total = 0.0
    for a in nodes:
        normal = -1.0 if sm.phases[a] == 1 else 1.0
        v = academic_surface_density(mesh.motion, f, sm.nodes[a], t_nodes)
        total += v * theta[a] * normal
    return total


def academic_volume_derivative_sampled(motion, f_value, f_grad, theta_fn,
                                       points, weights, t_points, t_weights):
    """Dimension-generic volume form via a user-supplied spatial quadrature
    of the design region in reference coordinates.

    ``theta_fn(xi) -> (theta, grad_theta)`` and f_value/f_grad take a time
    and a physical point.  Intended for smooth benchmark domains; the meshed
    1d path is `academic_volume_derivative`.
    """
    total = 0.0
    for tq, wt in zip(t_points, t_weights):
        for xi, wx in zip(points, weights):
            xi = np.asarray(xi, dtype=float)
            y = motion.forward(tq, xi)
            det = abs(motion.det(tq, xi))
            theta_val, grad_theta = theta_fn(xi)
            m_form = m_prime(motion, tq, y)
            f1_form = pullback_scalar_derivative(motion, tq, y, f_grad)
            val = m_form.value(theta_val, grad_theta) * f_value(tq, y) \
                + f1_form.value(theta_val, grad_theta)
            total += wt * wx * det * val
    return total


def academic_surface_derivative_polyline(motion, f_value, theta_fn, vertices,
                                         t_points, t_weights):
    """Dimension-generic surface form over a closed, counterclockwise
    polygonal interface; midpoint rule per segment."""
    vertices = np.asarray(vertices, dtype=float)
    total = 0.0
    n_seg = len(vertices)
    for k in range(n_seg):
        a = vertices[k]
        b = vertices[(k + 1) % n_seg]
        edge = b - a
        length = np.hypot(edge[0], edge[1])
        normal = np.array([edge[1], -edge[0]]) / length
        mid = 0.5 * (a + b)
        dens = 0.0
        for tq, wt in zip(t_points, t_weights):
            y = motion.forward(tq, mid)
            dens += wt * abs(motion.det(tq, mid)) * f_value(tq, y)
        theta_val, _ = theta_fn(mid)
        total += length * dens * float(np.dot(theta_val, normal))
    return total


def fd_objective_derivative(mesh, layout, source, objective, theta, eps,
                            newton=None, base_solution=None):
    """One-sided finite difference of the objective under the design
    deformation eps * theta, re-solving the state on the deformed mesh."""
    if base_solution is None:
        base_solution = solve_state(mesh, layout, source, newton=newton)
    j_base = evaluate_objective(mesh, base_solution.u, objective)
    trial_mesh = deform_mesh(mesh, theta, eps)
    trial = solve_state(trial_mesh, layout, source, newton=newton,
                        initial_guess=base_solution.u)
    j_trial = evaluate_objective(trial_mesh, trial.u, objective)
    return (j_trial - j_base) / eps
