"""Geometry on the unit sphere.

Directions are plain numpy arrays of shape (3,) with unit norm.  Grids pair
Gauss-Legendre colatitudes with equispaced longitudes, which makes quadrature
of band-limited products exact.  Random streams are counter-based so Monte
Carlo replicas are reproducible and parallel-safe.
"""

from dataclasses import dataclass

import numpy as np

__all__ = [
    "stream",
    "normalize",
    "unit_vector",
    "sample_uniform",
    "sample_uniform_many",
    "rotate",
    "rotation_about_z",
    "rotation_from_axis_angle",
    "random_rotation",
    "is_rotation",
    "SphereGrid",
    "gauss_legendre_grid",
    "fibonacci_lattice",
]


def stream(seed, index=0):
    """Return reproducible random stream ``index`` under a master ``seed``.

    The splitting rule is fixed: stream ``i`` is a Philox (counter-based)
    generator keyed by ``SeedSequence((seed, i))``.  Distinct indices give
    statistically independent streams that can be consumed in parallel while
    staying bit-reproducible.
    """
    key = np.random.SeedSequence((int(seed), int(index)))
    return np.random.Generator(np.random.Philox(key))


def normalize(v):
    """Scale a 3-vector to unit length."""
    v = np.asarray(v, dtype=float)
    n = float(np.sqrt(np.sum(v * v)))
    if n == 0.0 or not np.isfinite(n):
        raise ValueError("cannot normalize a zero or non-finite vector")
    return v / n


def unit_vector(x, y, z):
    """Unit vector with the direction of (x, y, z)."""
    return normalize(np.array([x, y, z], dtype=float))


def sample_uniform(rng):
    """Draw one point uniformly on the sphere (normalized Gaussian triple)."""
    while True:
        g = rng.standard_normal(3)
        n = float(np.sqrt(np.sum(g * g)))
        if n > 0.0:
            return g / n


def sample_uniform_many(rng, n):
    """Draw ``n`` independent uniform points, shape (n, 3)."""
    g = rng.standard_normal((int(n), 3))
    norms = np.sqrt(np.sum(g * g, axis=1))
    bad = norms == 0.0
    while np.any(bad):  # probability zero, kept for safety
        g[bad] = rng.standard_normal((int(np.count_nonzero(bad)), 3))
        norms = np.sqrt(np.sum(g * g, axis=1))
        bad = norms == 0.0
    return g / norms[:, None]


def rotate(rotation, v):
    """Apply a rotation matrix to a 3-vector."""
    return np.asarray(rotation, dtype=float) @ np.asarray(v, dtype=float)


def rotation_about_z(angle):
    """Rotation matrix about the z axis by ``angle`` radians."""
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def rotation_from_axis_angle(axis, angle):
    """Rodrigues rotation about ``axis`` by ``angle`` radians."""
    k = normalize(axis)
    kx = np.array(
        [[0.0, -k[2], k[1]], [k[2], 0.0, -k[0]], [-k[1], k[0], 0.0]]
    )
    return np.eye(3) + np.sin(angle) * kx + (1.0 - np.cos(angle)) * (kx @ kx)


def random_rotation(rng):
    """Haar-uniform rotation via a normalized Gaussian quaternion."""
    q = rng.standard_normal(4)
    q /= np.sqrt(np.sum(q * q))
    w, x, y, z = q
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
            [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
            [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
        ]
    )


def is_rotation(matrix, tol=1e-12):
    """True when ``matrix`` is orthonormal with determinant +1 within tol."""
    r = np.asarray(matrix, dtype=float)
    if r.shape != (3, 3):
        return False
    ortho = np.max(np.abs(r.T @ r - np.eye(3)))
    return bool(ortho <= tol and abs(np.linalg.det(r) - 1.0) <= tol)


@dataclass
class SphereGrid:
    """Band-limited quadrature grid.

    ``cos_theta``/``weights`` hold the Gauss-Legendre nodes and weights for
    the colatitude (rows ordered north to south, i.e. theta increasing), and
    longitudes are the ``n_phi`` equispaced angles 2*pi*j/n_phi.
    """

    lgrid: int
    cos_theta: np.ndarray
    weights: np.ndarray
    n_phi: int

    @property
    def n_theta(self):
        return len(self.cos_theta)

    @property
    def theta(self):
        return np.arccos(np.clip(self.cos_theta, -1.0, 1.0))

    @property
    def phi(self):
        return 2.0 * np.pi * np.arange(self.n_phi) / self.n_phi

    def points(self):
        """All grid nodes as unit vectors, shape (n_theta*n_phi, 3), theta-major."""
        st = np.sqrt(np.clip(1.0 - self.cos_theta**2, 0.0, None))
        phi = self.phi
        x = st[:, None] * np.cos(phi)[None, :]
        y = st[:, None] * np.sin(phi)[None, :]
        z = np.broadcast_to(self.cos_theta[:, None], x.shape)
        return np.stack([x.ravel(), y.ravel(), z.ravel()], axis=1)


def gauss_legendre_grid(lgrid, n_phi=None):
    """Build the Gauss-Legendre x equispaced-longitude grid for band limit ``lgrid``.

    Uses n_theta = lgrid + 1 colatitude nodes and n_phi >= 2*lgrid + 1
    longitudes (the minimum by default), exact for products of two band-lgrid
    harmonics.
    """
    lgrid = int(lgrid)
    if lgrid < 0:
        raise ValueError("lgrid must be nonnegative")
    x, w = np.polynomial.legendre.leggauss(lgrid + 1)
    # leggauss returns ascending cos(theta); flip so row 0 is the north end
    x = x[::-1].copy()
    w = w[::-1].copy()
    if n_phi is None:
        n_phi = 2 * lgrid + 1
    n_phi = int(n_phi)
    if n_phi < 2 * lgrid + 1:
        raise ValueError("n_phi must be at least 2*lgrid + 1")
    return SphereGrid(lgrid, x, w, n_phi)


def fibonacci_lattice(m):
    """Deterministic quasi-uniform lattice of ``m`` points (golden angle,
    half-integer offset).  Ordering is fixed by index for tie-breaking."""
    m = int(m)
    if m < 1:
        raise ValueError("lattice size must be at least 1")
    i = np.arange(m, dtype=float)
    z = 1.0 - 2.0 * (i + 0.5) / m
    phi = np.pi * (3.0 - np.sqrt(5.0)) * i
    r = np.sqrt(np.clip(1.0 - z * z, 0.0, None))
    return np.stack([r * np.cos(phi), r * np.sin(phi), z], axis=1)
