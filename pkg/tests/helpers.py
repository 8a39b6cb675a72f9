"""Shared builders and independent oracles for the test suite."""

import numpy as np

from stshapeopt import (AnalyticSource, ConstantReluctivity, Objective,
                        PhaseLayout, PhaseMaterial, Polynomial1D,
                        ReluctivityCurve, Identity, generate_mesh)
from stshapeopt import kernels as kn
from stshapeopt.derivative import _element_planes
from stshapeopt.mesh import trajectory_intervals

PAPER_INTERFACES = (0.4, 0.6)
# Independently computed limit of the initial objective for the moving
# interface benchmark (periodic Crank-Nicolson reference solver, converged
# to five digits, matching Richardson extrapolation of the FEM values).
J0_LIMIT = 5.4283e-4


def objective_u():
    return Objective(j=lambda u: np.asarray(u, dtype=float),
                     jprime=lambda u: np.ones_like(np.asarray(u, float)))


def moving_interface_problem(n_x, n_t=None):
    """The linear benchmark: Polynomial1D motion, sigma (10, 0), nu (1, 10)."""
    motion = Polynomial1D()
    layout = PhaseLayout({1: PhaseMaterial(10.0, ConstantReluctivity(1.0)),
                          2: PhaseMaterial(0.0, ConstantReluctivity(10.0))})
    source = AnalyticSource("(xref-0.4)*(xref-0.6)*sqrt(x)*(1+t-x)", motion)
    mesh = generate_mesh(n_x, n_t or n_x, PAPER_INTERFACES, motion)
    return mesh, layout, source, objective_u()


def nonlinear_problem(n_x, n_t=None):
    """Saturating-reluctivity variant of the benchmark."""
    motion = Polynomial1D()
    curve = ReluctivityCurve(nu_a=10.0, c1=1.0, c2=4.0e4, c3=2.0)
    layout = PhaseLayout({1: PhaseMaterial(10.0, curve),
                          2: PhaseMaterial(0.0, ConstantReluctivity(10.0))})
    source = AnalyticSource("(xref-0.4)*(xref-0.6)*sqrt(x)*(1+t-x)", motion)
    mesh = generate_mesh(n_x, n_t or n_x, PAPER_INTERFACES, motion)
    return mesh, layout, source, objective_u()


def identity_problem(n_x, n_t=None):
    """Static-motion control problem with both conductivities positive; the
    source is deliberately asymmetric about the design midpoint."""
    motion = Identity(dim=1)
    layout = PhaseLayout({1: PhaseMaterial(2.0, ConstantReluctivity(1.0)),
                          2: PhaseMaterial(0.5, ConstantReluctivity(3.0))})
    source = AnalyticSource("sin(pi*x)*(1+sin(2*pi*t))*(1+0.5*x)", motion)
    mesh = generate_mesh(n_x, n_t or n_x, PAPER_INTERFACES, motion)
    return mesh, layout, source, objective_u()


def theta_bump(spatial_mesh):
    """Smooth asymmetric design velocity vanishing at the design boundary."""
    x = spatial_mesh.nodes
    return np.sin(np.pi * x) * (0.5 + 0.3 * np.sin(2.0 * np.pi * x))


# ---------------------------------------------------------------------------
# finite-difference oracles for the pullback kernels


def transported_blocks(motion, t, x, theta_fn, eps):
    """F_xx, F_xt, m and A of the transported map at perturbation size eps."""
    x = np.asarray(x, dtype=float)
    xi = motion.inverse(t, x)
    th, gth = theta_fn(xi)
    y = xi + eps * th
    eye = np.eye(motion.dim)
    g_y = motion.grad(t, y)
    ginv_x = np.linalg.inv(motion.grad(t, xi))
    fxx = g_y @ (eye + eps * gth) @ ginv_x
    q = -np.linalg.inv(motion.grad(t, xi)) @ motion.dt(t, xi)
    fxt = motion.dt(t, y) + g_y @ (eye + eps * gth) @ q
    m = abs(np.linalg.det(fxx))
    fxx_inv = np.linalg.inv(fxx)
    a_mat = m * fxx_inv @ fxx_inv.T
    return m, fxx, fxt, a_mat


def kernel_fd(motion, t, x, theta_fn, eps, which, f_value=None, w_value=None):
    """Central difference quotient of one transported quantity."""
    def at(sign):
        if which in ("m", "Fxx", "Fxt", "A"):
            m, fxx, fxt, a_mat = transported_blocks(motion, t, x, theta_fn,
                                                    sign * eps)
            return {"m": m, "Fxx": fxx, "Fxt": fxt, "A": a_mat}[which]
        xi = motion.inverse(t, np.asarray(x, dtype=float))
        th, _ = theta_fn(xi)
        y = motion.forward(t, xi + sign * eps * th)
        return f_value(t, y) if which == "f" else w_value(t, y)
    return (at(+1.0) - at(-1.0)) / (2.0 * eps)


# ---------------------------------------------------------------------------
# direct term-by-term evaluation of the volume-form derivative along the
# same trajectory quadrature as the density assembly, through the generic
# (single-point) kernels


def direct_volume_pairing(mesh, layout, u, p, source, objective, theta):
    sm = mesh.spatial_mesh()
    motion = mesh.motion
    u_nodal, p_nodal = u.nodal(), p.nodal()
    u0, u_t, u_x, _, _ = _element_planes(mesh, u_nodal)
    p0, p_t, p_x, t0, x0 = _element_planes(mesh, p_nodal)
    sigma_e = layout.sigma(mesh.phases)

    def jac_v(t, y):
        return motion.velocity_grad(t, np.asarray(y, dtype=float))

    def grad_f(t, y):
        y = np.asarray(y, dtype=float)
        xi = motion.inverse(t, y)
        return np.atleast_1d(source.gradient(np.asarray(t), y[0], xi[0]))

    total = 0.0
    widths = sm.widths
    slopes = np.diff(theta) / widths
    for e, xi_c in enumerate(sm.centroids):
        th_c = np.array([np.interp(xi_c, sm.nodes, theta)])
        gth_c = np.array([[slopes[e]]])
        els, t_nodes = trajectory_intervals(mesh, np.array([xi_c]))
        track = 0.0
        for k in range(els.shape[1]):
            ta, tb = t_nodes[0, k], t_nodes[0, k + 1]
            elem = els[0, k]
            vals = []
            for t in (ta, tb):
                x_pt = motion.forward(t, np.array([xi_c]))
                det = abs(motion.det(t, np.array([xi_c])))
                mat = layout.material(mesh.phases[elem])
                nu, nu_prime = mat.nu.eval(abs(u_x[elem]))
                u_val = u0[elem] + u_t[elem] * (t - t0[elem]) \
                    + u_x[elem] * (x_pt[0] - x0[elem])
                p_val = p0[elem] + p_t[elem] * (t - t0[elem]) \
                    + p_x[elem] * (x_pt[0] - x0[elem])
                v_pt = motion.velocity(t, x_pt)[0]
                du_dt = u_t[elem] + v_pt * u_x[elem]

                m_val = kn.m_prime(motion, t, x_pt).value(th_c, gth_c)
                fxx_val = kn.Fxx_prime(motion, t, x_pt).value(th_c, gth_c)[0, 0]
                b_val = kn.b_prime(motion, t, x_pt).value(th_c, gth_c)[0]
                a_val = kn.A_prime(motion, t, x_pt).value(th_c, gth_c)[0, 0]
                v1_val = kn.pullback_vector_derivative(
                    motion, t, x_pt, jac_v).value(th_c, gth_c)[0]
                f1_val = kn.pullback_scalar_derivative(
                    motion, t, x_pt, grad_f).value(th_c, gth_c)
                f_val = float(source.values(np.asarray(t), x_pt[0], xi_c))
                ju = float(objective.j(u_val))

                integrand = (m_val * ju
                             + sigma_e[elem] * (m_val * du_dt
                                                - fxx_val * v_pt * u_x[elem]
                                                + v1_val * u_x[elem]
                                                + b_val * u_x[elem]) * p_val
                             + (nu * a_val
                                - nu_prime * abs(u_x[elem]) * fxx_val)
                             * u_x[elem] * p_x[elem]
                             - (m_val * f_val + f1_val) * p_val)
                vals.append(det * integrand)
            track += 0.5 * (tb - ta) * (vals[0] + vals[1])
        total += widths[e] * track
    return total


def direct_magnetization_pairing(mesh, big_l, big_l_grad, p, element_mask,
                                 theta):
    sm = mesh.spatial_mesh()
    motion = mesh.motion
    _, _, p_x, _, _ = _element_planes(mesh, p.nodal())
    slopes = np.diff(theta) / sm.widths
    total = 0.0
    for e in np.nonzero(np.asarray(element_mask, dtype=bool))[0]:
        xi_c = sm.centroids[e]
        th_c = np.array([np.interp(xi_c, sm.nodes, theta)])
        gth_c = np.array([[slopes[e]]])
        els, t_nodes = trajectory_intervals(mesh, np.array([xi_c]))
        track = 0.0
        for k in range(els.shape[1]):
            ta, tb = t_nodes[0, k], t_nodes[0, k + 1]
            elem = els[0, k]
            vals = []
            for t in (ta, tb):
                x_pt = motion.forward(t, np.array([xi_c]))
                det = abs(motion.det(t, np.array([xi_c])))
                m_val = kn.m_prime(motion, t, x_pt).value(th_c, gth_c)
                fxx = kn.Fxx_prime(motion, t, x_pt).value(th_c, gth_c)[0, 0]
                l1 = kn.pullback_vector_derivative(
                    motion, t, x_pt,
                    lambda tt, yy: np.array([[big_l_grad(tt, yy[0])]])
                ).value(th_c, gth_c)[0]
                l_val = big_l(t, x_pt[0])
                integrand = -(m_val * l_val + l1 - fxx * l_val) * p_x[elem]
                vals.append(det * integrand)
            track += 0.5 * (tb - ta) * (vals[0] + vals[1])
        total += sm.widths[e] * track
    return total


# ---------------------------------------------------------------------------
# misc quadrature and meshing utilities


def gauss_rule(a, b, n):
    pts, wts = np.polynomial.legendre.leggauss(n)
    return 0.5 * (b - a) * pts + 0.5 * (a + b), 0.5 * (b - a) * wts


def annulus_mesh(r_inner, r_outer, n_r, n_phi):
    """Structured polar triangulation of a full annulus."""
    radii = np.linspace(r_inner, r_outer, n_r + 1)
    phis = np.linspace(0.0, 2.0 * np.pi, n_phi, endpoint=False)
    points = np.array([[r * np.cos(p), r * np.sin(p)]
                       for r in radii for p in phis])
    tris = []
    for i in range(n_r):
        for j in range(n_phi):
            jn = (j + 1) % n_phi
            a = i * n_phi + j
            b = i * n_phi + jn
            c = (i + 1) * n_phi + j
            d = (i + 1) * n_phi + jn
            tris.append((a, b, d))
            tris.append((a, d, c))
    return points, np.array(tris)


def observed_orders(values):
    """Pairwise log2 reduction rates of a halving-refinement sequence."""
    values = np.asarray(values, dtype=float)
    return np.log2(values[:-1] / values[1:])
