"""Analytic motion maps of the design region.

A motion is a time-dependent diffeomorphism ``phi_t`` with ``phi_0 = Id``,
together with its hand-coded derivatives.  All methods are numpy-batched:
``x`` has shape ``(..., dim)`` and ``t`` broadcasts against the batch shape.
Derivative conventions:

    grad(t, x)[..., i, j]     = d phi_i / d x_j
    grad2(t, x)[..., i, j, k] = d^2 phi_i / d x_j d x_k
    dt(t, x)[..., i]          = d phi_i / d t
    dt_grad(t, x)[..., i, j]  = d (d phi_i / d t) / d x_j

``velocity(t, y)`` is the Eulerian velocity at a point of the deformed
configuration, i.e. ``dt(t, inverse(t, y))``.
"""

import numpy as np

from .errors import GeometryError

_NEWTON_TOL = 1e-14
_NEWTON_MAX_ITER = 50


class Motion:
    """Base class; subclasses provide forward/grad/grad2/dt/dt_grad."""

    dim = None

    def forward(self, t, x):
        raise NotImplementedError

    def grad(self, t, x):
        raise NotImplementedError

    def grad2(self, t, x):
        raise NotImplementedError

    def dt(self, t, x):
        raise NotImplementedError

    def dt_grad(self, t, x):
        raise NotImplementedError

    def det(self, t, x):
        g = self.grad(t, x)
        if self.dim == 1:
            return g[..., 0, 0]
        return np.linalg.det(g)

    def inverse(self, t, y):
        """Newton inversion of ``x -> phi_t(x)``; subclasses may override."""
        y = np.asarray(y, dtype=float)
        xi = y.copy()
        for _ in range(_NEWTON_MAX_ITER):
            r = self.forward(t, xi) - y
            if not np.all(np.isfinite(r)):
                break
            if np.max(np.abs(r)) < _NEWTON_TOL:
                return xi
            g = self.grad(t, xi)
            # a singular step signals leaving the image; caught below
            with np.errstate(divide="ignore", invalid="ignore"):
                if self.dim == 1:
                    step = r / g[..., 0]
                else:
                    step = np.linalg.solve(g, r[..., None])[..., 0]
            xi = xi - step
            if not np.all(np.isfinite(xi)):
                break
        raise GeometryError("motion inversion did not converge; point may lie "
                            "outside the image of the map")

    def velocity(self, t, y):
        return self.dt(t, self.inverse(t, y))

    def velocity_grad(self, t, y):
        """Spatial Jacobian of the Eulerian velocity field."""
        xi = self.inverse(t, y)
        w = self.dt_grad(t, xi)
        g = self.grad(t, xi)
        if self.dim == 1:
            return w / g
        return w @ np.linalg.inv(g)


class Identity(Motion):
    def __init__(self, dim=1):
        self.dim = dim

    def forward(self, t, x):
        return np.array(x, dtype=float, copy=True)

    def inverse(self, t, y):
        return np.array(y, dtype=float, copy=True)

    def grad(self, t, x):
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(np.eye(self.dim), x.shape + (self.dim,)).copy()

    def grad2(self, t, x):
        x = np.asarray(x, dtype=float)
        return np.zeros(x.shape + (self.dim, self.dim))

    def dt(self, t, x):
        return np.zeros_like(np.asarray(x, dtype=float))

    def dt_grad(self, t, x):
        x = np.asarray(x, dtype=float)
        return np.zeros(x.shape + (self.dim,))


class Rotation2D(Motion):
    """Rigid rotation about the origin with angle 2*pi*t/period."""

    dim = 2

    def __init__(self, period=1.0):
        self.period = float(period)

    def _alpha(self, t):
        return 2.0 * np.pi * np.asarray(t, dtype=float) / self.period

    def _rot(self, alpha):
        c, s = np.cos(alpha), np.sin(alpha)
        r = np.empty(np.shape(alpha) + (2, 2))
        r[..., 0, 0] = c
        r[..., 0, 1] = -s
        r[..., 1, 0] = s
        r[..., 1, 1] = c
        return r

    def _rot_dalpha(self, alpha):
        c, s = np.cos(alpha), np.sin(alpha)
        r = np.empty(np.shape(alpha) + (2, 2))
        r[..., 0, 0] = -s
        r[..., 0, 1] = -c
        r[..., 1, 0] = c
        r[..., 1, 1] = -s
        return r

    def forward(self, t, x):
        x = np.asarray(x, dtype=float)
        return np.einsum("...ij,...j->...i", self._rot(self._alpha(t)), x)

    def inverse(self, t, y):
        y = np.asarray(y, dtype=float)
        return np.einsum("...ij,...j->...i", self._rot(-self._alpha(t)), y)

    def grad(self, t, x):
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(self._rot(self._alpha(t)),
                               x.shape + (2,)).copy()

    def grad2(self, t, x):
        x = np.asarray(x, dtype=float)
        return np.zeros(x.shape + (2, 2))

    def dt(self, t, x):
        rate = 2.0 * np.pi / self.period
        rp = self._rot_dalpha(self._alpha(t))
        return rate * np.einsum("...ij,...j->...i", rp, np.asarray(x, float))

    def dt_grad(self, t, x):
        x = np.asarray(x, dtype=float)
        rate = 2.0 * np.pi / self.period
        rp = rate * self._rot_dalpha(self._alpha(t))
        return np.broadcast_to(rp, x.shape + (2,)).copy()

    def det(self, t, x):
        x = np.asarray(x, dtype=float)
        return np.ones(x.shape[:-1])

    def velocity(self, t, y):
        y = np.asarray(y, dtype=float)
        v = np.empty_like(y)
        rate = 2.0 * np.pi / self.period
        v[..., 0] = -rate * y[..., 1]
        v[..., 1] = rate * y[..., 0]
        return v


class Polynomial1D(Motion):
    """phi_t(x) = x + t*x**2, strictly monotone on [0, 1] for t in [0, 1]."""

    dim = 1

    def forward(self, t, x):
        x = np.asarray(x, dtype=float)
        tb = np.asarray(t, dtype=float)[..., None] if np.ndim(t) else t
        return x + tb * x * x

    def grad(self, t, x):
        x = np.asarray(x, dtype=float)
        tb = np.asarray(t, dtype=float)[..., None] if np.ndim(t) else t
        return (1.0 + 2.0 * tb * x)[..., None]

    def grad2(self, t, x):
        x = np.asarray(x, dtype=float)
        tb = np.asarray(t, dtype=float)[..., None] if np.ndim(t) else t
        return np.broadcast_to(np.asarray(2.0 * tb)[..., None, None],
                               x.shape + (1, 1)).copy()

    def dt(self, t, x):
        x = np.asarray(x, dtype=float)
        return x * x

    def dt_grad(self, t, x):
        x = np.asarray(x, dtype=float)
        return (2.0 * x)[..., None]


class CustomMotion(Motion):
    """User-supplied motion built from closures matching the base contract.

    ``inverse`` is optional; the generic Newton inversion is used when it is
    omitted.  The closures must implement the batched shape conventions of
    this module and satisfy phi_0 = Id.
    """

    def __init__(self, dim, forward, grad, grad2, dt, dt_grad, inverse=None):
        self.dim = dim
        self._forward = forward
        self._grad = grad
        self._grad2 = grad2
        self._dt = dt
        self._dt_grad = dt_grad
        self._inverse = inverse

    def forward(self, t, x):
        return self._forward(t, np.asarray(x, dtype=float))

    def grad(self, t, x):
        return self._grad(t, np.asarray(x, dtype=float))

    def grad2(self, t, x):
        return self._grad2(t, np.asarray(x, dtype=float))

    def dt(self, t, x):
        return self._dt(t, np.asarray(x, dtype=float))

    def dt_grad(self, t, x):
        return self._dt_grad(t, np.asarray(x, dtype=float))

    def inverse(self, t, y):
        if self._inverse is not None:
            return self._inverse(t, np.asarray(y, dtype=float))
        return super().inverse(t, y)
