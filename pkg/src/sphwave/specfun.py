"""Special functions for spherical analysis.

Legendre polynomials, orthonormal complex and real spherical harmonics with
the Condon-Shortley phase, exact big-integer Wigner 3j symbols and Gaunt
coefficients, probabilists' Hermite polynomials, and an Isserlis/Wick moment
oracle for products of jointly Gaussian variables.
"""

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

__all__ = [
    "WIGNER_LMAX",
    "legendre_p",
    "legendre_p_all",
    "normalized_legendre",
    "sph_harm",
    "sph_harm_row",
    "real_sph_harm",
    "addition_kernel",
    "wigner3j",
    "wigner3j_exact",
    "gaunt",
    "hermite",
    "WickMonomial",
    "wick_expectation",
]

FOUR_PI = 4.0 * math.pi

# Exact rational evaluation is capped here; beyond this raise a range error.
WIGNER_LMAX = 64

# Full-pairing enumeration budget for the Wick oracle.
WICK_MAX_DEGREE = 12

_T_SLACK = 1.0 + 1e-12


def _check_argument(t):
    t = np.asarray(t, dtype=float)
    if np.any(np.abs(t) > _T_SLACK) or not np.all(np.isfinite(t)):
        raise ValueError("Legendre argument must lie in [-1, 1]")
    return np.clip(t, -1.0, 1.0)


def legendre_p(ell, t):
    """Legendre polynomial P_ell(t) by the upward three-term recurrence.

    Accepts scalars or arrays; values satisfy |P_ell| <= 1 on [-1, 1].
    """
    ell = int(ell)
    if ell < 0:
        raise ValueError("degree must be nonnegative")
    scalar = np.isscalar(t) or getattr(t, "ndim", 0) == 0
    t = _check_argument(t)
    p_prev = np.ones_like(t)
    if ell == 0:
        return float(p_prev) if scalar else p_prev
    p = t.copy()
    for n in range(1, ell):
        p, p_prev = ((2 * n + 1) * t * p - n * p_prev) / (n + 1), p
    return float(p) if scalar else p


def legendre_p_all(lmax, t):
    """All Legendre polynomials P_0..P_lmax at ``t``; shape (lmax+1,) + t.shape."""
    lmax = int(lmax)
    if lmax < 0:
        raise ValueError("degree must be nonnegative")
    t = _check_argument(t)
    out = np.empty((lmax + 1,) + t.shape, dtype=float)
    out[0] = 1.0
    if lmax >= 1:
        out[1] = t
    for n in range(1, lmax):
        out[n + 1] = ((2 * n + 1) * t * out[n] - n * out[n - 1]) / (n + 1)
    return out


def _p00_like(x):
    return np.full_like(x, 1.0 / math.sqrt(FOUR_PI))


def _next_sectoral(m, s, pmm):
    # P̄_mm from P̄_{m-1,m-1}; the minus sign carries the Condon-Shortley phase
    return -math.sqrt((2 * m + 1) / (2.0 * m)) * s * pmm


def normalized_legendre(lmax, m, x):
    """Fully normalized associated Legendre values P̄_{ell m}(x), ell = m..lmax.

    Normalized so that Y_{ell m}(theta, phi) = P̄_{ell m}(cos theta) e^{i m phi}
    is orthonormal on the sphere.  Returns shape (lmax - m + 1,) + x.shape.
    """
    lmax, m = int(lmax), int(m)
    if m < 0 or lmax < m:
        raise ValueError("need 0 <= m <= lmax")
    x = _check_argument(np.atleast_1d(x))
    s = np.sqrt(np.clip(1.0 - x * x, 0.0, None))
    pmm = _p00_like(x)
    for mm in range(1, m + 1):
        pmm = _next_sectoral(mm, s, pmm)
    rows = np.empty((lmax - m + 1,) + x.shape, dtype=float)
    rows[0] = pmm
    if lmax > m:
        rows[1] = math.sqrt(2 * m + 3) * x * pmm
    for ell in range(m + 2, lmax + 1):
        a = math.sqrt((4.0 * ell * ell - 1.0) / (ell * ell - m * m))
        b = math.sqrt(((ell - 1.0) ** 2 - m * m) / (4.0 * (ell - 1.0) ** 2 - 1.0))
        rows[ell - m] = a * (x * rows[ell - m - 1] - b * rows[ell - m - 2])
    return rows


def _legendre_single_ell(ell, x, s):
    """P̄_{ell m}(x) for m = 0..ell at one degree; shape (ell+1,) + x.shape."""
    out = np.empty((ell + 1,) + x.shape, dtype=float)
    pmm = _p00_like(x)
    for m in range(ell + 1):
        if m > 0:
            pmm = _next_sectoral(m, s, pmm)
        if m == ell:
            out[m] = pmm
            continue
        p_prev = pmm
        p = math.sqrt(2 * m + 3) * x * pmm
        for ll in range(m + 2, ell + 1):
            a = math.sqrt((4.0 * ll * ll - 1.0) / (ll * ll - m * m))
            b = math.sqrt(((ll - 1.0) ** 2 - m * m) / (4.0 * (ll - 1.0) ** 2 - 1.0))
            p, p_prev = a * (x * p - b * p_prev), p
        out[m] = p
    return out


def _points_to_angles(points):
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    norms = np.sqrt(np.sum(pts * pts, axis=1))
    if np.any(norms == 0.0):
        raise ValueError("points must be nonzero vectors")
    pts = pts / norms[:, None]
    x = np.clip(pts[:, 2], -1.0, 1.0)
    phi = np.arctan2(pts[:, 1], pts[:, 0])
    s = np.sqrt(np.clip(1.0 - x * x, 0.0, None))
    return x, s, phi


def sph_harm_row(ell, points):
    """Matrix of Y_{ell m}(points) for m = -ell..ell; shape (n, 2*ell+1)."""
    ell = int(ell)
    if ell < 0:
        raise ValueError("degree must be nonnegative")
    x, s, phi = _points_to_angles(points)
    p = _legendre_single_ell(ell, x, s)
    out = np.empty((x.shape[0], 2 * ell + 1), dtype=complex)
    out[:, ell] = p[0]
    for m in range(1, ell + 1):
        e = np.exp(1j * m * phi)
        out[:, ell + m] = p[m] * e
        out[:, ell - m] = ((-1) ** m) * p[m] * np.conj(e)
    return out


def sph_harm(ell, m, point):
    """Orthonormal complex spherical harmonic Y_{ell m} at a point.

    Condon-Shortley phase; conj(Y_{ell m}) = (-1)^m Y_{ell,-m}.
    """
    ell, m = int(ell), int(m)
    if ell < 0:
        raise ValueError("degree must be nonnegative")
    if abs(m) > ell:
        raise ValueError("order must satisfy |m| <= ell")
    x, s, phi = _points_to_angles(point)
    mm = abs(m)
    pmm = _p00_like(x)
    for k in range(1, mm + 1):
        pmm = _next_sectoral(k, s, pmm)
    if ell == mm:
        p = pmm
    else:
        p_prev = pmm
        p = math.sqrt(2 * mm + 3) * x * pmm
        for ll in range(mm + 2, ell + 1):
            a = math.sqrt((4.0 * ll * ll - 1.0) / (ll * ll - mm * mm))
            b = math.sqrt(((ll - 1.0) ** 2 - mm * mm) / (4.0 * (ll - 1.0) ** 2 - 1.0))
            p, p_prev = a * (x * p - b * p_prev), p
    val = p[0] * np.exp(1j * mm * phi[0])
    if m < 0:
        val = ((-1) ** mm) * np.conj(val)
    return complex(val)


def real_sph_harm(ell, m, point):
    """Orthonormal real spherical harmonic (cosine/sine combinations)."""
    if m == 0:
        return float(sph_harm(ell, 0, point).real)
    y = sph_harm(ell, abs(m), point)
    sign = (-1) ** abs(m)
    if m > 0:
        return float(math.sqrt(2.0) * sign * y.real)
    return float(math.sqrt(2.0) * sign * y.imag)


def addition_kernel(ell, u, v):
    """(2*ell+1)/(4*pi) * P_ell(<u, v>), the degree-ell reproducing kernel."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    t = float(np.sum(u * v) / math.sqrt(np.sum(u * u) * np.sum(v * v)))
    return (2 * ell + 1) / FOUR_PI * legendre_p(ell, t)


def _validate_triple(l1, l2, l3, m1, m2, m3):
    for l, m in ((l1, m1), (l2, m2), (l3, m3)):
        if l < 0:
            raise ValueError("degrees must be nonnegative")
        if abs(m) > l:
            raise ValueError("orders must satisfy |m| <= ell")
    if max(l1, l2, l3) > WIGNER_LMAX:
        raise ValueError(f"degrees above {WIGNER_LMAX} are outside the exact range")


def wigner3j_exact(l1, l2, l3, m1, m2, m3):
    """Exact Wigner 3j as (sign, squared value) with the square a Fraction.

    Uses the Racah single-sum formula in arbitrary-precision integers, so
    orthogonality sums can be verified exactly in rational arithmetic.
    """
    l1, l2, l3 = int(l1), int(l2), int(l3)
    m1, m2, m3 = int(m1), int(m2), int(m3)
    _validate_triple(l1, l2, l3, m1, m2, m3)
    if m1 + m2 + m3 != 0:
        return 0, Fraction(0)
    if l3 < abs(l1 - l2) or l3 > l1 + l2:
        return 0, Fraction(0)
    f = math.factorial
    ratio = Fraction(
        f(l1 + l2 - l3) * f(l1 - l2 + l3) * f(-l1 + l2 + l3), f(l1 + l2 + l3 + 1)
    )
    ratio *= (
        f(l1 + m1) * f(l1 - m1) * f(l2 + m2) * f(l2 - m2) * f(l3 + m3) * f(l3 - m3)
    )
    tmin = max(0, l2 - l3 - m1, l1 - l3 + m2)
    tmax = min(l1 + l2 - l3, l1 - m1, l2 + m2)
    ssum = Fraction(0)
    for t in range(tmin, tmax + 1):
        den = (
            f(t)
            * f(l1 + l2 - l3 - t)
            * f(l1 - m1 - t)
            * f(l2 + m2 - t)
            * f(l3 - l2 + m1 + t)
            * f(l3 - l1 - m2 + t)
        )
        ssum += Fraction((-1) ** t, den)
    if ssum == 0:
        return 0, Fraction(0)
    sign = 1 if ssum > 0 else -1
    if (l1 - l2 - m3) % 2:
        sign = -sign
    return sign, ssum * ssum * ratio


def wigner3j(l1, l2, l3, m1, m2, m3):
    """Wigner 3j symbol as a float (exact rational evaluation under the hood)."""
    sign, sq = wigner3j_exact(l1, l2, l3, m1, m2, m3)
    return sign * math.sqrt(float(sq))


def gaunt(l1, l2, l3, m1, m2, m3):
    """Gaunt coefficient: the integral of Y_{l1 m1} Y_{l2 m2} Y_{l3 m3}."""
    _validate_triple(l1, l2, l3, m1, m2, m3)
    w0 = wigner3j(l1, l2, l3, 0, 0, 0)
    if w0 == 0.0:
        return 0.0
    wm = wigner3j(l1, l2, l3, m1, m2, m3)
    if wm == 0.0:
        return 0.0
    norm = math.sqrt((2 * l1 + 1) * (2 * l2 + 1) * (2 * l3 + 1) / FOUR_PI)
    return norm * w0 * wm


def hermite(k, z):
    """Probabilists' Hermite polynomial He_k(z) via the standard recurrence."""
    k = int(k)
    if k < 0:
        raise ValueError("order must be nonnegative")
    scalar = np.isscalar(z) or getattr(z, "ndim", 0) == 0
    z = np.asarray(z, dtype=float)
    h_prev = np.ones_like(z)
    if k == 0:
        return float(h_prev) if scalar else h_prev
    h = z.copy()
    for n in range(1, k):
        h, h_prev = z * h - n * h_prev, h
    return float(h) if scalar else h


@dataclass(frozen=True)
class WickMonomial:
    """A product of Gaussian factors, optionally normal ordered.

    ``indices`` are variable labels into the covariance matrix; ``wick=True``
    means the factor is :Z_{i1}...Z_{ik}: (no internal contractions allowed).
    """

    indices: tuple
    wick: bool = True

    def __post_init__(self):
        idx = tuple(int(i) for i in self.indices)
        if any(i < 0 for i in idx):
            raise ValueError("variable indices must be nonnegative")
        object.__setattr__(self, "indices", idx)


def wick_expectation(factors, covariance):
    """Exact expectation of a product of (Wick) monomials of Gaussians.

    Enumerates all Isserlis pairings of the variable slots, skipping pairs
    inside a single normal-ordered factor, and sums the covariance products.
    Plain tuples are accepted as shorthand for Wick-ordered monomials.
    Total degree is capped at WICK_MAX_DEGREE.
    """
    monos = []
    for fac in factors:
        if isinstance(fac, WickMonomial):
            monos.append(fac)
        else:
            monos.append(WickMonomial(tuple(fac)))
    cov = np.asarray(covariance, dtype=float)
    if cov.ndim != 2 or cov.shape[0] != cov.shape[1]:
        raise ValueError("covariance must be a square matrix")
    if not np.allclose(cov, cov.T, atol=1e-12):
        raise ValueError("covariance must be symmetric")

    slots = []
    for fid, mono in enumerate(monos):
        for idx in mono.indices:
            if idx >= cov.shape[0]:
                raise ValueError("variable index outside the covariance matrix")
            slots.append((idx, fid))
    if len(slots) > WICK_MAX_DEGREE:
        raise ValueError(
            f"total degree {len(slots)} exceeds the enumeration budget "
            f"{WICK_MAX_DEGREE}"
        )
    if len(slots) % 2:
        return 0.0
    wick_flags = [mono.wick for mono in monos]

    def pair_sum(remaining):
        if not remaining:
            return 1.0
        v0, f0 = remaining[0]
        rest = remaining[1:]
        total = 0.0
        for j, (v, f) in enumerate(rest):
            if f == f0 and wick_flags[f0]:
                continue
            c = cov[v0, v]
            if c == 0.0:
                continue
            sub = pair_sum(rest[:j] + rest[j + 1 :])
            if sub != 0.0:
                total += c * sub
        return total

    return float(pair_sum(slots))
