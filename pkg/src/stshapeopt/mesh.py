"""Space-time meshes of the moving one-dimensional design region.

The mesh is a structured triangulation of the reference rectangle
[0, T] x [0, 1] pushed through the motion vertex-wise, (t, xi) -> (t,
phi_t(xi)).  Spatial grid lines are placed exactly on the phase interfaces,
so every element lies in a single phase at all times.  Cells are split along
alternating diagonals; top and bottom rows share spatial reference nodes,
which makes the generalized time-periodic identification an index map.

Deformations move the spatial reference nodes only (per-node displacement),
so a deformation followed by its negation restores the mesh exactly.
"""

from dataclasses import dataclass, replace

import numpy as np

from .errors import GeometryError, InvertedElementError

FACET_LATERAL = 1
FACET_BOTTOM = 2
FACET_TOP = 3

_EDGE_NUDGE = 1e-12
_EXIT_TOL = 1e-10


@dataclass(frozen=True)
class SpatialMesh:
    """Bottom trace of a space-time mesh: the 1d design mesh."""

    nodes: np.ndarray          # (n_x + 1,) reference abscissae
    phases: np.ndarray         # (n_x,) phase label per segment

    @property
    def n_elements(self):
        return len(self.nodes) - 1

    @property
    def widths(self):
        return np.diff(self.nodes)

    @property
    def centroids(self):
        return 0.5 * (self.nodes[:-1] + self.nodes[1:])

    def interface_nodes(self):
        """Indices of interior nodes where the phase label changes."""
        change = np.nonzero(self.phases[1:] != self.phases[:-1])[0] + 1
        return change

    def interpolate(self, values, xi):
        """P1 interpolation of nodal values at points xi."""
        return np.interp(xi, self.nodes, values)

    def interpolate_gradient(self, values, xi):
        """Piecewise-constant derivative of the P1 interpolant at points xi."""
        seg = np.clip(np.searchsorted(self.nodes, xi, side="right") - 1,
                      0, self.n_elements - 1)
        slopes = np.diff(values) / self.widths
        return slopes[seg]


@dataclass(frozen=True)
class SpaceTimeMesh:
    vertices: np.ndarray       # (n_v, 2) -> (t, x)
    elements: np.ndarray       # (n_e, 3) vertex indices, positive orientation
    phases: np.ndarray         # (n_e,) phase label
    ref_xi: np.ndarray         # (n_v,) reference spatial coordinate
    column: np.ndarray         # (n_v,) spatial node index
    row: np.ndarray            # (n_v,) time level index
    xi_nodes: np.ndarray       # (n_x + 1,) reference spatial grid
    t_grid: np.ndarray         # (n_t + 1,)
    periodic_pairs: np.ndarray  # (n_x + 1, 2) bottom/top vertex indices
    facets: np.ndarray         # (n_f, 2) boundary edges
    facet_tags: np.ndarray     # (n_f,)
    motion: object

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_elements(self):
        return len(self.elements)

    @property
    def n_x(self):
        return len(self.xi_nodes) - 1

    @property
    def n_t(self):
        return len(self.t_grid) - 1

    @property
    def t_final(self):
        return self.t_grid[-1]

    def vertex_id(self, j, i):
        return j * (self.n_x + 1) + i

    def cell_base_element(self, i, j):
        return 2 * (j * self.n_x + i)

    def cell_diag_rising(self, i, j):
        """True when cell (i, j) is split along the low-to-high diagonal."""
        return (i + j) % 2 == 0

    def lateral_vertex_mask(self):
        mask = np.zeros(self.n_vertices, dtype=bool)
        mask[self.column == 0] = True
        mask[self.column == self.n_x] = True
        return mask

    def signed_areas(self):
        p = self.vertices[self.elements]
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    def spatial_mesh(self):
        column_phase = self.phases[:2 * self.n_x:2]
        return SpatialMesh(nodes=self.xi_nodes.copy(), phases=column_phase)

    def edge_element(self, node_index, slab, side):
        """Element adjacent to the vertical grid edge at spatial node
        ``node_index`` for time slab ``slab``; side is 'minus' (lower xi)
        or 'plus'."""
        if side == "minus":
            i = node_index - 1
            if self.cell_diag_rising(i, slab):
                return self.cell_base_element(i, slab)        # holds edge p01-p11
            return self.cell_base_element(i, slab) + 1        # holds edge p01-p11
        i = node_index
        if self.cell_diag_rising(i, slab):
            return self.cell_base_element(i, slab) + 1        # holds edge p00-p10
        return self.cell_base_element(i, slab)                # holds edge p00-p10


def generate_mesh(n_x, n_t, interfaces, motion, t_final=1.0):
    """Structured space-time mesh with grid lines on every interface.

    ``interfaces`` are strictly increasing abscissae in (0, 1); the nearest
    uniform grid line is snapped onto each of them.
    """
    if n_x < 4 or n_t < 2:
        raise GeometryError(f"mesh needs n_x >= 4 and n_t >= 2, "
                            f"got {n_x}, {n_t}")
    interfaces = np.atleast_1d(np.asarray(interfaces, dtype=float))
    if np.any(interfaces <= 0.0) or np.any(interfaces >= 1.0):
        raise GeometryError("interfaces must lie strictly inside (0, 1)")
    if np.any(np.diff(interfaces) <= 0.0):
        raise GeometryError("interfaces must be strictly increasing")

    xi = np.linspace(0.0, 1.0, n_x + 1)
    taken = set()
    for a in interfaces:
        k = int(np.clip(round(a * n_x), 1, n_x - 1))
        while k in taken:
            k += 1
        if k > n_x - 1:
            raise GeometryError("too many interfaces for the grid resolution")
        xi[k] = a
        taken.add(k)
    if np.any(np.diff(xi) <= 0.0):
        raise GeometryError("interface snapping produced a degenerate grid")

    t_grid = np.linspace(0.0, float(t_final), n_t + 1)

    ii, jj = np.meshgrid(np.arange(n_x + 1), np.arange(n_t + 1))
    column = ii.ravel()
    row = jj.ravel()
    ref = xi[column]
    t_v = t_grid[row]
    x_v = motion.forward(t_v, ref[:, None])[:, 0]
    vertices = np.column_stack([t_v, x_v])

    elements = np.empty((2 * n_x * n_t, 3), dtype=int)
    phases = np.empty(2 * n_x * n_t, dtype=int)
    centroids = 0.5 * (xi[:-1] + xi[1:])
    region = np.searchsorted(interfaces, centroids)
    cell_phase = np.where(region % 2 == 1, 1, 2)

    def vid(j, i):
        return j * (n_x + 1) + i

    for j in range(n_t):
        for i in range(n_x):
            base = 2 * (j * n_x + i)
            p00, p01 = vid(j, i), vid(j, i + 1)
            p10, p11 = vid(j + 1, i), vid(j + 1, i + 1)
            if (i + j) % 2 == 0:
                elements[base] = (p00, p11, p01)
                elements[base + 1] = (p00, p10, p11)
            else:
                elements[base] = (p00, p10, p01)
                elements[base + 1] = (p01, p10, p11)
            phases[base] = cell_phase[i]
            phases[base + 1] = cell_phase[i]

    pairs = np.column_stack([np.arange(n_x + 1),
                             n_t * (n_x + 1) + np.arange(n_x + 1)])

    facets = []
    tags = []
    for i in range(n_x):
        facets.append((vid(0, i), vid(0, i + 1)))
        tags.append(FACET_BOTTOM)
        facets.append((vid(n_t, i), vid(n_t, i + 1)))
        tags.append(FACET_TOP)
    for j in range(n_t):
        facets.append((vid(j, 0), vid(j + 1, 0)))
        tags.append(FACET_LATERAL)
        facets.append((vid(j, n_x), vid(j + 1, n_x)))
        tags.append(FACET_LATERAL)

    mesh = SpaceTimeMesh(vertices=vertices, elements=elements, phases=phases,
                         ref_xi=ref, column=column, row=row, xi_nodes=xi,
                         t_grid=t_grid, periodic_pairs=pairs,
                         facets=np.array(facets), facet_tags=np.array(tags),
                         motion=motion)
    if np.any(mesh.signed_areas() <= 0.0):
        raise GeometryError("generated mesh has non-positive element areas")
    return mesh


def deform_mesh(mesh, theta, tau):
    """Move the spatial reference nodes by tau * theta and push forward.

    ``theta`` holds one displacement per spatial node; connectivity, phase
    labels and the periodic pairing are unchanged.  Raises
    InvertedElementError when the update flips an element.
    """
    theta = np.asarray(theta, dtype=float)
    if theta.shape != mesh.xi_nodes.shape:
        raise GeometryError(f"deformation has {theta.shape[0]} nodes, mesh "
                            f"has {mesh.xi_nodes.shape[0]}")
    new_xi_nodes = mesh.xi_nodes + tau * theta
    new_ref = new_xi_nodes[mesh.column]
    t_v = mesh.vertices[:, 0]
    x_v = mesh.motion.forward(t_v, new_ref[:, None])[:, 0]
    new = replace(mesh, vertices=np.column_stack([t_v, x_v]),
                  ref_xi=new_ref, xi_nodes=new_xi_nodes)
    if np.any(new.signed_areas() <= 0.0):
        raise InvertedElementError(
            f"deformation with step {tau} inverts an element")
    return new


def _diagonal_crossing_times(mesh, x0, cells):
    """Bisection for the times where the trajectories t -> phi_t(x0[p])
    cross the cell diagonals, one time per (point, slab)."""
    n_pts = len(x0)
    n_t = mesh.n_t
    n_x = mesh.n_x
    slabs = np.arange(n_t)

    i_grid = np.broadcast_to(cells[:, None], (n_pts, n_t))
    j_grid = np.broadcast_to(slabs[None, :], (n_pts, n_t))
    rising = (i_grid + j_grid) % 2 == 0

    # Diagonal endpoints in physical coordinates: rising runs from
    # (t_j, node i) to (t_j+1, node i+1), falling the other way.
    start_col = np.where(rising, i_grid, i_grid + 1)
    end_col = np.where(rising, i_grid + 1, i_grid)
    v_start = j_grid * (n_x + 1) + start_col
    v_end = (j_grid + 1) * (n_x + 1) + end_col
    x_start = mesh.vertices[v_start, 1]
    x_end = mesh.vertices[v_end, 1]
    t_lo = np.broadcast_to(mesh.t_grid[:-1][None, :], (n_pts, n_t))
    t_hi = np.broadcast_to(mesh.t_grid[1:][None, :], (n_pts, n_t))

    x0_grid = np.broadcast_to(x0[:, None], (n_pts, n_t))

    def gap(t):
        traj = mesh.motion.forward(t.ravel(), x0_grid.ravel()[:, None])[:, 0]
        frac = (t - t_lo) / (t_hi - t_lo)
        diag = x_start + frac * (x_end - x_start)
        return traj.reshape(t.shape) - diag

    lo = t_lo.astype(float).copy()
    hi = t_hi.astype(float).copy()
    sign_lo = np.sign(gap(lo))
    for _ in range(50):
        mid = 0.5 * (lo + hi)
        gm = gap(mid)
        same = np.sign(gm) == sign_lo
        lo = np.where(same, mid, lo)
        hi = np.where(same, hi, mid)
    return 0.5 * (lo + hi)


def trajectory_intervals(mesh, x0_points):
    """For each reference point, the element covering each sub-interval of
    the vertical trajectory (t, phi_t(x0)).

    Returns (elements, t_nodes): elements has shape (n_pts, 2 * n_t) and
    t_nodes shape (n_pts, 2 * n_t + 1); interval k of point p spans
    t_nodes[p, k] .. t_nodes[p, k + 1] inside elements[p, k].
    """
    x0 = np.asarray(x0_points, dtype=float).copy()
    xi = mesh.xi_nodes
    if np.any(x0 < xi[0] - _EXIT_TOL) or np.any(x0 > xi[-1] + _EXIT_TOL):
        raise GeometryError("trajectory leaves the meshed region")
    on_node = np.isclose(x0[:, None], xi[None, :], rtol=0.0,
                         atol=_EDGE_NUDGE).any(axis=1)
    x0[on_node & (x0 < xi[-1] - _EXIT_TOL)] += _EDGE_NUDGE
    x0[on_node & (x0 >= xi[-1] - _EXIT_TOL)] -= _EDGE_NUDGE

    cells = np.clip(np.searchsorted(xi, x0, side="right") - 1,
                    0, mesh.n_x - 1)
    t_star = _diagonal_crossing_times(mesh, x0, cells)

    n_pts = len(x0)
    n_t = mesh.n_t
    t_nodes = np.empty((n_pts, 2 * n_t + 1))
    t_nodes[:, 0::2] = mesh.t_grid[None, :]
    t_nodes[:, 1::2] = t_star

    base = 2 * (np.arange(n_t)[None, :] * mesh.n_x + cells[:, None])
    elements = np.empty((n_pts, 2 * n_t), dtype=int)
    elements[:, 0::2] = base
    elements[:, 1::2] = base + 1
    return elements, t_nodes


def vertical_line_elements(mesh, x0):
    """Ordered (element, (t_start, t_end)) pairs covering the trajectory of
    the single reference point x0."""
    elements, t_nodes = trajectory_intervals(mesh, np.array([float(x0)]))
    return [(int(elements[0, k]), (float(t_nodes[0, k]),
                                   float(t_nodes[0, k + 1])))
            for k in range(elements.shape[1])]
