"""Continuous P1 space-time finite elements on the moving-interface mesh.

Solves the time-periodic evolution problem

    sigma (du/dt + v . grad u) - div( nu(|grad u|) grad u ) = f

in weak form on the space-time mesh, with homogeneous Dirichlet data on the
lateral boundary and the generalized periodic identification u(0, xi) =
u(T, phi_T(xi)) folded into the degree-of-freedom map (trial and test
functions alike, which keeps the system square).

The adjoint solve uses the transpose of the state Jacobian at the solved
state, so the tangent/adjoint duality holds in exact arithmetic on any mesh.
Quadrature is the second-order edge-midpoint rule; under P1 the reluctivity
argument |grad u| is constant per element.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import AssemblyError, NonconvergenceError, SolverError
from .kernels import jet1d

# Interior second-order triangle rule (barycentric 2/3, 1/6, 1/6; weights
# area/3): rows = points, cols = P1 basis.  Strictly interior points keep
# boundary-singular source gradients out of the quadrature.
NQ = np.array([[2.0 / 3.0, 1.0 / 6.0, 1.0 / 6.0],
               [1.0 / 6.0, 2.0 / 3.0, 1.0 / 6.0],
               [1.0 / 6.0, 1.0 / 6.0, 2.0 / 3.0]])

LINEAR_RESIDUAL_TOL = 1e-12


@dataclass(frozen=True)
class DofMap:
    """Reduced index set: lateral vertices fixed to zero, top-row vertices
    aliased to their periodic bottom partner."""

    vertex_dof: np.ndarray
    n_free: int

    @classmethod
    def from_mesh(cls, mesh):
        n_v = mesh.n_vertices
        lateral = mesh.lateral_vertex_mask()
        top = mesh.row == mesh.n_t
        own = ~lateral & ~top
        vertex_dof = np.full(n_v, -1, dtype=int)
        vertex_dof[own] = np.arange(np.count_nonzero(own))
        # Bottom-row vertex ids equal the column index.
        top_ids = np.nonzero(top & ~lateral)[0]
        vertex_dof[top_ids] = vertex_dof[mesh.column[top_ids]]
        return cls(vertex_dof=vertex_dof, n_free=int(np.count_nonzero(own)))


@dataclass
class Field:
    """Nodal coefficients over the free degrees of freedom."""

    dofmap: DofMap
    values: np.ndarray

    @classmethod
    def zeros(cls, dofmap):
        return cls(dofmap, np.zeros(dofmap.n_free))

    def nodal(self):
        """Full vertex vector; Dirichlet vertices are exactly zero and top
        vertices repeat their periodic partner."""
        out = np.zeros(len(self.dofmap.vertex_dof))
        has = self.dofmap.vertex_dof >= 0
        out[has] = self.values[self.dofmap.vertex_dof[has]]
        return out


@dataclass(frozen=True)
class Objective:
    """Integrand j and derivative j' of the space-time objective."""

    j: object
    jprime: object


@dataclass
class ElementGeometry:
    area: np.ndarray
    grad_t: np.ndarray
    grad_x: np.ndarray
    qp_t: np.ndarray
    qp_x: np.ndarray
    qp_xi: np.ndarray
    qp_v: np.ndarray
    sigma: np.ndarray
    phase_groups: list


def element_geometry(mesh, layout):
    """Per-element data shared by the assembly routines."""
    p = mesh.vertices[mesh.elements]
    d1 = p[:, 1] - p[:, 0]
    d2 = p[:, 2] - p[:, 0]
    area = 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])
    two_a = 2.0 * area
    # grad N_i = rotate(v_{i+1} - v_{i+2}) / (2A) in (t, x) coordinates
    grad_t = np.empty((mesh.n_elements, 3))
    grad_x = np.empty((mesh.n_elements, 3))
    for i in range(3):
        e = p[:, (i + 1) % 3] - p[:, (i + 2) % 3]
        grad_t[:, i] = e[:, 1] / two_a
        grad_x[:, i] = -e[:, 0] / two_a

    qp = np.einsum("qi,eid->eqd", NQ, p)
    qp_t = qp[:, :, 0]
    qp_x = qp[:, :, 1]
    flat_xi = mesh.motion.inverse(qp_t.ravel(), qp_x.ravel()[:, None])[:, 0]
    qp_xi = flat_xi.reshape(qp_t.shape)
    qp_v = mesh.motion.dt(qp_t.ravel(), flat_xi[:, None])[:, 0] \
        .reshape(qp_t.shape)

    sigma = layout.sigma(mesh.phases)
    groups = [(mesh.phases == pid, mat.nu)
              for pid, mat in layout.materials.items()]
    return ElementGeometry(area=area, grad_t=grad_t, grad_x=grad_x,
                           qp_t=qp_t, qp_x=qp_x, qp_xi=qp_xi, qp_v=qp_v,
                           sigma=sigma, phase_groups=groups)


def _reluctivity_arrays(geom, grad_norm):
    nu = np.empty_like(grad_norm)
    nu_prime = np.empty_like(grad_norm)
    for mask, law in geom.phase_groups:
        if np.any(mask):
            nu[mask], nu_prime[mask] = law.eval(grad_norm[mask])
    return nu, nu_prime


def _element_fields(mesh, geom, u_nodal):
    ue = u_nodal[mesh.elements]
    u_t = np.sum(ue * geom.grad_t, axis=1)
    u_x = np.sum(ue * geom.grad_x, axis=1)
    u_q = ue @ NQ.T
    return u_t, u_x, u_q


def _scatter_vector(mesh, dofmap, local):
    rows = dofmap.vertex_dof[mesh.elements]
    out = np.zeros(dofmap.n_free)
    valid = rows >= 0
    np.add.at(out, rows[valid], local[valid])
    return out


def _scatter_matrix(mesh, dofmap, local):
    rows = np.repeat(dofmap.vertex_dof[mesh.elements], 3, axis=1)
    cols = np.tile(dofmap.vertex_dof[mesh.elements], (1, 3))
    data = local.reshape(mesh.n_elements, 9)
    valid = (rows >= 0) & (cols >= 0)
    mat = sp.coo_matrix((data[valid], (rows[valid], cols[valid])),
                        shape=(dofmap.n_free, dofmap.n_free))
    return mat.tocsc()


def _load_vector(mesh, geom, dofmap, source):
    f_q = source.values(geom.qp_t, geom.qp_x, geom.qp_xi)
    local = (geom.area / 3.0)[:, None] * (f_q @ NQ)
    if not np.all(np.isfinite(local)):
        bad = int(np.nonzero(~np.isfinite(local).all(axis=1))[0][0])
        raise AssemblyError(f"non-finite load contribution in element {bad}")
    return _scatter_vector(mesh, dofmap, local)


def _residual_local(mesh, geom, u_nodal):
    u_t, u_x, _ = _element_fields(mesh, geom, u_nodal)
    nu, _ = _reluctivity_arrays(geom, np.abs(u_x))
    conv = (geom.area / 3.0)[:, None] * (geom.qp_v @ NQ)
    local = geom.sigma[:, None] * (u_t[:, None] * (geom.area / 3.0)[:, None]
                                   + u_x[:, None] * conv)
    local += (nu * u_x * geom.area)[:, None] * geom.grad_x
    if not np.all(np.isfinite(local)):
        bad = int(np.nonzero(~np.isfinite(local).all(axis=1))[0][0])
        raise AssemblyError(f"non-finite residual contribution in element {bad}")
    return local


def _jacobian_matrix(mesh, geom, dofmap, u_nodal):
    _, u_x, _ = _element_fields(mesh, geom, u_nodal)
    nu, nu_prime = _reluctivity_arrays(geom, np.abs(u_x))
    d_nu = nu + nu_prime * np.abs(u_x)

    conv = (geom.area / 3.0)[:, None] * (geom.qp_v @ NQ)
    k = (geom.sigma * geom.area / 3.0)[:, None, None] \
        * geom.grad_t[:, None, :] * np.ones((1, 3, 1))
    k += geom.sigma[:, None, None] * conv[:, :, None] * geom.grad_x[:, None, :]
    k += (d_nu * geom.area)[:, None, None] \
        * geom.grad_x[:, :, None] * geom.grad_x[:, None, :]
    return _scatter_matrix(mesh, dofmap, k)


def assemble_state_residual(mesh, layout, u, source):
    """Weak-form residual of the state equation at the field u."""
    geom = element_geometry(mesh, layout)
    dofmap = u.dofmap
    local = _residual_local(mesh, geom, u.nodal())
    return _scatter_vector(mesh, dofmap, local) \
        - _load_vector(mesh, geom, dofmap, source)


def assemble_state_jacobian(mesh, layout, u):
    """Gateaux derivative of the state residual; u-independent when all
    reluctivity laws are constant."""
    geom = element_geometry(mesh, layout)
    return _jacobian_matrix(mesh, geom, u.dofmap, u.nodal())


class LinearSystem:
    """Sparse direct solve with a relative-residual contract of 1e-12."""

    def __init__(self, matrix):
        self.matrix = matrix
        try:
            self.lu = spla.splu(matrix)
        except RuntimeError as exc:
            raise SolverError(f"factorization failed: {exc}") from exc

    def _refined(self, b, transpose):
        trans = "T" if transpose else "N"
        mat = self.matrix.T if transpose else self.matrix
        x = self.lu.solve(b, trans=trans)
        scale = max(np.linalg.norm(b), 1.0)
        for _ in range(2):
            r = b - mat @ x
            if np.linalg.norm(r) <= LINEAR_RESIDUAL_TOL * scale:
                return x
            x = x + self.lu.solve(r, trans=trans)
        r = b - mat @ x
        if np.linalg.norm(r) > LINEAR_RESIDUAL_TOL * scale:
            raise SolverError("direct solve missed the residual contract")
        return x

    def solve(self, b):
        return self._refined(b, transpose=False)

    def solve_transpose(self, b):
        return self._refined(b, transpose=True)


@dataclass(frozen=True)
class NewtonOptions:
    tol: float = 1e-10
    max_iter: int = 30
    max_halvings: int = 30
    min_damping: float = 1e-6


@dataclass
class SolveResult:
    u: Field
    iterations: int
    residual_norms: list = field(default_factory=list)


def solve_state(mesh, layout, source, newton=None, initial_guess=None):
    """Damped Newton solve of the state problem.

    Args:
        mesh, layout, source: problem data; the motion is carried by the mesh.
        newton: NewtonOptions; the tolerance is relative to the larger of the
            load norm and the initial residual norm.
        initial_guess: optional Field used to warm-start the iteration.

    Returns a SolveResult; constant reluctivity converges in one iteration.
    """
    newton = newton or NewtonOptions()
    geom = element_geometry(mesh, layout)
    dofmap = DofMap.from_mesh(mesh)
    if initial_guess is not None:
        u = Field(dofmap, initial_guess.values.copy())
    else:
        u = Field.zeros(dofmap)

    load = _load_vector(mesh, geom, dofmap, source)

    def residual(u_field):
        local = _residual_local(mesh, geom, u_field.nodal())
        return _scatter_vector(mesh, dofmap, local) - load

    res = residual(u)
    res_norm = np.linalg.norm(res)
    scale = max(np.linalg.norm(load), res_norm)
    if scale == 0.0:
        return SolveResult(u=u, iterations=0, residual_norms=[0.0])

    norms = [res_norm]
    for it in range(newton.max_iter):
        if res_norm <= newton.tol * scale:
            return SolveResult(u=u, iterations=it, residual_norms=norms)
        system = LinearSystem(_jacobian_matrix(mesh, geom, dofmap, u.nodal()))
        delta = system.solve(-res)
        damping = 1.0
        for _ in range(newton.max_halvings):
            if damping < newton.min_damping:
                raise NonconvergenceError(
                    f"Newton damping underflow at residual {res_norm:.3e}",
                    residual=res_norm)
            trial = Field(dofmap, u.values + damping * delta)
            trial_res = residual(trial)
            trial_norm = np.linalg.norm(trial_res)
            if trial_norm < res_norm:
                u, res, res_norm = trial, trial_res, trial_norm
                norms.append(res_norm)
                break
            damping *= 0.5
        else:
            raise NonconvergenceError(
                f"Newton line search stalled at residual {res_norm:.3e}",
                residual=res_norm)
    if res_norm <= newton.tol * scale:
        return SolveResult(u=u, iterations=newton.max_iter,
                           residual_norms=norms)
    raise NonconvergenceError(
        f"Newton did not converge in {newton.max_iter} iterations "
        f"(residual {res_norm:.3e})", residual=res_norm)


def objective_gradient_vector(mesh, u, objective):
    """Exact derivative of the discrete objective with respect to the free
    coefficients of u."""
    geom_p = mesh.vertices[mesh.elements]
    d1 = geom_p[:, 1] - geom_p[:, 0]
    d2 = geom_p[:, 2] - geom_p[:, 0]
    area = 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])
    u_q = u.nodal()[mesh.elements] @ NQ.T
    local = (area / 3.0)[:, None] * (objective.jprime(u_q) @ NQ)
    return _scatter_vector(mesh, u.dofmap, local)


def solve_adjoint(mesh, layout, u, objective):
    """Adjoint field from the transposed state Jacobian at u, loaded with
    the negative objective derivative."""
    geom = element_geometry(mesh, layout)
    system = LinearSystem(_jacobian_matrix(mesh, geom, u.dofmap, u.nodal()))
    b = -objective_gradient_vector(mesh, u, objective)
    return Field(u.dofmap, system.solve_transpose(b))


def tangent_rhs(mesh, layout, u, source, spatial_mesh, theta):
    """Right-hand side of the tangent (material-derivative) problem for the
    spatial design velocity theta, assembled from the pullback kernels."""
    geom = element_geometry(mesh, layout)
    dofmap = u.dofmap
    u_nodal = u.nodal()
    u_t, u_x, _ = _element_fields(mesh, geom, u_nodal)
    abs_ux = np.abs(u_x)
    nu, nu_prime = _reluctivity_arrays(geom, abs_ux)

    jets = jet1d(mesh.motion, geom.qp_t, geom.qp_xi)
    theta_q = spatial_mesh.interpolate(theta, geom.qp_xi)
    theta_x_q = spatial_mesh.interpolate_gradient(theta, geom.qp_xi)

    hog = jets.h_over_g
    m_prime_q = hog * theta_q + theta_x_q
    fxx_q = m_prime_q
    a_prime_q = -m_prime_q
    fxt_q = (jets.W + jets.H * jets.q) * theta_q + jets.G * jets.q * theta_x_q
    b_prime_q = -fxt_q
    v1_q = jets.W * theta_q

    f_q = source.values(geom.qp_t, geom.qp_x, geom.qp_xi)
    grad_f_q = source.gradient(geom.qp_t, geom.qp_x, geom.qp_xi)
    f1_q = jets.G * grad_f_q * theta_q

    du_dt_q = u_t[:, None] + geom.qp_v * u_x[:, None]
    sig = geom.sigma[:, None]
    point_val = (-sig * m_prime_q * du_dt_q
                 + sig * fxx_q * geom.qp_v * u_x[:, None]
                 - sig * v1_q * u_x[:, None]
                 - sig * b_prime_q * u_x[:, None]
                 + m_prime_q * f_q + f1_q)
    local = (geom.area / 3.0)[:, None] * (point_val @ NQ)

    flux_coeff = nu[:, None] * a_prime_q - (nu_prime * abs_ux)[:, None] * fxx_q
    flux = np.sum((geom.area / 3.0)[:, None] * flux_coeff, axis=1)
    local += -(flux * u_x)[:, None] * geom.grad_x
    return _scatter_vector(mesh, dofmap, local)


def volume_form_pairing(mesh, layout, u, p, source, objective, spatial_mesh,
                        theta):
    """Shape derivative J'(theta) evaluated with the element quadrature:
    the determinant-derivative term paired with j(u) plus the adjoint
    contraction of the tangent right-hand side.  Same volume form as the
    trajectory densities, different quadrature."""
    geom = element_geometry(mesh, layout)
    jets = jet1d(mesh.motion, geom.qp_t, geom.qp_xi)
    theta_q = spatial_mesh.interpolate(theta, geom.qp_xi)
    theta_x_q = spatial_mesh.interpolate_gradient(theta, geom.qp_xi)
    m_prime_q = jets.h_over_g * theta_q + theta_x_q
    u_q = u.nodal()[mesh.elements] @ NQ.T
    m_term = float(np.sum((geom.area / 3.0)[:, None] * m_prime_q
                          * objective.j(u_q)))
    rhs = tangent_rhs(mesh, layout, u, source, spatial_mesh, theta)
    return m_term - float(p.values @ rhs)


def solve_tangent(mesh, layout, u, source, spatial_mesh, theta):
    """Material derivative of the state with respect to the design velocity
    theta; the right side is linear in theta."""
    geom = element_geometry(mesh, layout)
    system = LinearSystem(_jacobian_matrix(mesh, geom, u.dofmap, u.nodal()))
    rhs = tangent_rhs(mesh, layout, u, source, spatial_mesh, theta)
    return Field(u.dofmap, system.solve(rhs))


def evaluate_objective(mesh, u, objective):
    """Element quadrature of j(u) over the space-time region."""
    p = mesh.vertices[mesh.elements]
    d1 = p[:, 1] - p[:, 0]
    d2 = p[:, 2] - p[:, 0]
    area = 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])
    u_q = u.nodal()[mesh.elements] @ NQ.T
    return float(np.sum((area / 3.0) * np.sum(objective.j(u_q), axis=1)))
