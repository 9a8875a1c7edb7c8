"""Analytic initial shapes: closed curves in the plane and closed surfaces in space.

Each shape provides ``project`` (move nearby points onto the shape, used when
placing Lagrange nodes and when reprojecting after refinement) and, for
curves, a counterclockwise parametrization ``point``.
"""

import numpy as np


class Circle:
    """Circle of radius ``r`` centered at the origin."""

    dim = 1
    ambient_dim = 2

    def __init__(self, r=1.0):
        if r <= 0:
            raise ValueError("radius must be positive")
        self.r = r

    def point(self, t):
        t = np.asarray(t, dtype=float)
        theta = 2.0 * np.pi * t
        return self.r * np.stack([np.cos(theta), np.sin(theta)], axis=-1)

    def project(self, p):
        p = np.asarray(p, dtype=float)
        norm = np.linalg.norm(p, axis=-1, keepdims=True)
        return self.r * p / norm

    def residual(self, p):
        return np.abs(np.linalg.norm(p, axis=-1) - self.r)

    def __repr__(self):
        return f"Circle(r={self.r})"


class Ellipse:
    """Ellipse x^2/a^2 + y^2/b^2 = 1."""

    dim = 1
    ambient_dim = 2

    def __init__(self, a=2.0, b=1.0):
        if a <= 0 or b <= 0:
            raise ValueError("semi-axes must be positive")
        self.a = a
        self.b = b

    def point(self, t):
        t = np.asarray(t, dtype=float)
        theta = 2.0 * np.pi * t
        return np.stack([self.a * np.cos(theta), self.b * np.sin(theta)], axis=-1)

    def project(self, p):
        # Normalize in stretched coordinates; the image lies exactly on the
        # ellipse (not the closest point, which is fine for node placement).
        p = np.asarray(p, dtype=float)
        q = p / np.array([self.a, self.b])
        q /= np.linalg.norm(q, axis=-1, keepdims=True)
        return q * np.array([self.a, self.b])

    def residual(self, p):
        p = np.asarray(p, dtype=float)
        return np.abs((p[..., 0] / self.a) ** 2 + (p[..., 1] / self.b) ** 2 - 1.0)

    def __repr__(self):
        return f"Ellipse(a={self.a}, b={self.b})"


class Flower:
    """Five-petal flower r(theta) = r0 + amp*cos(petals*theta)."""

    dim = 1
    ambient_dim = 2

    def __init__(self, r0=1.0, amp=0.2, petals=5):
        self.r0 = r0
        self.amp = amp
        self.petals = petals

    def _radius(self, theta):
        return self.r0 + self.amp * np.cos(self.petals * theta)

    def point(self, t):
        t = np.asarray(t, dtype=float)
        theta = 2.0 * np.pi * t
        r = self._radius(theta)
        return np.stack([r * np.cos(theta), r * np.sin(theta)], axis=-1)

    def project(self, p):
        p = np.asarray(p, dtype=float)
        theta = np.arctan2(p[..., 1], p[..., 0])
        r = self._radius(theta)
        return np.stack([r * np.cos(theta), r * np.sin(theta)], axis=-1)

    def residual(self, p):
        p = np.asarray(p, dtype=float)
        theta = np.arctan2(p[..., 1], p[..., 0])
        return np.abs(np.linalg.norm(p, axis=-1) - self._radius(theta))

    def __repr__(self):
        return f"Flower(r0={self.r0}, amp={self.amp}, petals={self.petals})"


class Sphere:
    """Sphere of radius ``r`` centered at the origin."""

    dim = 2
    ambient_dim = 3

    def __init__(self, r=1.0):
        if r <= 0:
            raise ValueError("radius must be positive")
        self.r = r

    def project(self, p):
        p = np.asarray(p, dtype=float)
        norm = np.linalg.norm(p, axis=-1, keepdims=True)
        return self.r * p / norm

    def residual(self, p):
        return np.abs(np.linalg.norm(p, axis=-1) - self.r)

    def __repr__(self):
        return f"Sphere(r={self.r})"


class Ellipsoid:
    """Ellipsoid x^2/a^2 + y^2/b^2 + z^2/c^2 = 1."""

    dim = 2
    ambient_dim = 3

    def __init__(self, a=2.0, b=1.0, c=1.0):
        if min(a, b, c) <= 0:
            raise ValueError("semi-axes must be positive")
        self.axes = np.array([a, b, c], dtype=float)

    def project(self, p):
        p = np.asarray(p, dtype=float)
        q = p / self.axes
        q /= np.linalg.norm(q, axis=-1, keepdims=True)
        return q * self.axes

    def residual(self, p):
        p = np.asarray(p, dtype=float)
        return np.abs(np.sum((p / self.axes) ** 2, axis=-1) - 1.0)

    def __repr__(self):
        a, b, c = self.axes
        return f"Ellipsoid(a={a}, b={b}, c={c})"


class Torus:
    """Torus (sqrt(x^2+y^2) - R)^2 + z^2 = r^2, axis along z."""

    dim = 2
    ambient_dim = 3

    def __init__(self, R=2.0, r=1.0):
        if not 0 < r < R:
            raise ValueError("requires 0 < r < R")
        self.R = R
        self.r = r

    def project(self, p):
        p = np.asarray(p, dtype=float)
        rho = np.linalg.norm(p[..., :2], axis=-1, keepdims=True)
        ring = np.concatenate([self.R * p[..., :2] / rho,
                               np.zeros_like(p[..., 2:])], axis=-1)
        d = p - ring
        d /= np.linalg.norm(d, axis=-1, keepdims=True)
        return ring + self.r * d

    def residual(self, p):
        p = np.asarray(p, dtype=float)
        rho = np.linalg.norm(p[..., :2], axis=-1)
        return np.abs((rho - self.R) ** 2 + p[..., 2] ** 2 - self.r ** 2)

    def __repr__(self):
        return f"Torus(R={self.R}, r={self.r})"


_DEFAULTS = {
    "circle": Circle,
    "ellipse": Ellipse,
    "flower": Flower,
    "sphere": Sphere,
    "ellipsoid": Ellipsoid,
    "torus": Torus,
}


def make_shape(name, **params):
    """Construct a shape by name, e.g. ``make_shape('ellipse', a=2, b=1)``."""
    try:
        cls = _DEFAULTS[name.lower()]
    except KeyError:
        raise ValueError(f"unknown shape {name!r}; choose from {sorted(_DEFAULTS)}")
    return cls(**params)
