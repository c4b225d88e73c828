"""Grid-based spherical harmonic analysis and synthesis.

Transforms pair the Gauss-Legendre colatitude quadrature with a longitude
DFT, which is exact (to roundoff) for band-limited fields on grids built by
:func:`sphwave.geom.gauss_legendre_grid`.  Also hosts spectrum and bispectrum
estimation from coefficients, least-squares recovery of wave weights, and the
rank of random harmonic matrices.
"""

import json
import math
import os
import struct
from dataclasses import dataclass

import numpy as np

from . import specfun
from .errors import FormatError, RankDeficientError
from .geom import SphereGrid, gauss_legendre_grid

__all__ = [
    "HarmonicCoefficients",
    "GridField",
    "synthesize",
    "analyze",
    "power_spectrum",
    "evaluate_at_points",
    "harmonic_matrix",
    "matrix_rank",
    "recover_weights",
    "map_bispectrum_estimate",
    "is_valid_triangle",
    "gaussian_coeffs",
    "write_grid",
    "read_grid",
    "write_coeffs",
    "read_coeffs",
]

_GRID_MAGIC = b"SGF1"


@dataclass
class HarmonicCoefficients:
    """Complex coefficients a_{ell m} in triangular storage.

    ``a`` has shape (lmax+1, 2*lmax+1) with entry [ell, lmax+m]; slots with
    |m| > ell are unused and stay zero.  Real fields satisfy
    a_{ell,-m} = (-1)^m conj(a_{ell m}).
    """

    lmax: int
    a: np.ndarray

    def __post_init__(self):
        self.lmax = int(self.lmax)
        a = np.asarray(self.a, dtype=complex)
        if a.shape != (self.lmax + 1, 2 * self.lmax + 1):
            raise ValueError("coefficient array shape must be (lmax+1, 2*lmax+1)")
        self.a = a

    @classmethod
    def zeros(cls, lmax):
        lmax = int(lmax)
        return cls(lmax, np.zeros((lmax + 1, 2 * lmax + 1), dtype=complex))

    def get(self, ell, m):
        self._check(ell, m)
        return complex(self.a[ell, self.lmax + m])

    def set(self, ell, m, value):
        self._check(ell, m)
        self.a[ell, self.lmax + m] = value

    def ell_vector(self, ell):
        """Coefficients (a_{ell,-ell}, ..., a_{ell,ell}) as a copy."""
        self._check(ell, 0)
        return self.a[ell, self.lmax - ell : self.lmax + ell + 1].copy()

    def set_ell_vector(self, ell, values):
        self._check(ell, 0)
        values = np.asarray(values, dtype=complex)
        if values.shape != (2 * ell + 1,):
            raise ValueError("vector length must be 2*ell + 1")
        self.a[ell, self.lmax - ell : self.lmax + ell + 1] = values

    def copy(self):
        return HarmonicCoefficients(self.lmax, self.a.copy())

    def conjugate_asymmetry(self):
        """max over (ell, m) of |a_{ell,-m} - (-1)^m conj(a_{ell m})|."""
        worst = 0.0
        for ell in range(self.lmax + 1):
            v = self.a[ell, self.lmax - ell : self.lmax + ell + 1]
            flipped = ((-1.0) ** np.arange(-ell, ell + 1)) * np.conj(v[::-1])
            worst = max(worst, float(np.max(np.abs(v - flipped))))
        return worst

    def _check(self, ell, m):
        if not (0 <= ell <= self.lmax):
            raise ValueError("ell out of range")
        if abs(m) > ell:
            raise ValueError("|m| must not exceed ell")


@dataclass
class GridField:
    """Real field samples on a quadrature grid, shape (n_theta, n_phi)."""

    grid: SphereGrid
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != (self.grid.n_theta, self.grid.n_phi):
            raise ValueError("value array does not match the grid dimensions")
        if not np.all(np.isfinite(v)):
            raise ValueError("field values must be finite")
        self.values = v


def _sectoral_update(m, s, pmm):
    return -math.sqrt((2 * m + 1) / (2.0 * m)) * s * pmm


def synthesize(coeffs, grid):
    """Evaluate the harmonic sum on a grid; the result must be real.

    Requires grid.lgrid >= coeffs.lmax.  The imaginary residue left by the
    m/-m cancellation is checked against 1e-10 (scaled by the field amplitude)
    so non conjugate-symmetric inputs fail loudly.
    """
    if grid.lgrid < coeffs.lmax:
        raise ValueError("grid band limit is below the coefficient band limit")
    lmax = coeffs.lmax
    x = grid.cos_theta
    s = np.sqrt(np.clip(1.0 - x * x, 0.0, None))
    nphi = grid.n_phi
    spec = np.zeros((grid.n_theta, nphi), dtype=complex)
    pmm = np.full_like(x, 1.0 / math.sqrt(4.0 * math.pi))
    for m in range(lmax + 1):
        if m > 0:
            pmm = _sectoral_update(m, s, pmm)
        gp = np.zeros_like(x, dtype=complex)
        gm = np.zeros_like(x, dtype=complex)
        p_prev = None
        p = pmm
        for ell in range(m, lmax + 1):
            if ell == m + 1:
                p_prev, p = p, math.sqrt(2 * m + 3) * x * pmm
            elif ell > m + 1:
                a = math.sqrt((4.0 * ell * ell - 1.0) / (ell * ell - m * m))
                b = math.sqrt(
                    ((ell - 1.0) ** 2 - m * m) / (4.0 * (ell - 1.0) ** 2 - 1.0)
                )
                p_prev, p = p, a * (x * p - b * p_prev)
            gp += coeffs.a[ell, lmax + m] * p
            if m > 0:
                gm += coeffs.a[ell, lmax - m] * p
        spec[:, m % nphi] += gp
        if m > 0:
            spec[:, (-m) % nphi] += ((-1.0) ** m) * gm
    values = np.fft.ifft(spec, axis=1) * nphi
    scale = max(1.0, float(np.max(np.abs(values.real))))
    residue = float(np.max(np.abs(values.imag)))
    if residue > 1e-10 * scale:
        raise ValueError(
            f"synthesis left imaginary residue {residue:.3e}; "
            "coefficients are not conjugate symmetric"
        )
    return GridField(grid, values.real.copy())


def analyze(field):
    """Harmonic coefficients of a grid field by exact quadrature.

    The input must be band-limited at the grid band limit; aliased content is
    the caller's responsibility.
    """
    grid = field.grid
    lmax = grid.lgrid
    x = grid.cos_theta
    s = np.sqrt(np.clip(1.0 - x * x, 0.0, None))
    nphi = grid.n_phi
    fourier = np.fft.fft(field.values, axis=1) * (2.0 * math.pi / nphi)
    out = HarmonicCoefficients.zeros(lmax)
    pmm = np.full_like(x, 1.0 / math.sqrt(4.0 * math.pi))
    for m in range(lmax + 1):
        if m > 0:
            pmm = _sectoral_update(m, s, pmm)
        wpos = grid.weights * fourier[:, m % nphi]
        wneg = grid.weights * fourier[:, (-m) % nphi] if m > 0 else None
        p_prev = None
        p = pmm
        for ell in range(m, lmax + 1):
            if ell == m + 1:
                p_prev, p = p, math.sqrt(2 * m + 3) * x * pmm
            elif ell > m + 1:
                a = math.sqrt((4.0 * ell * ell - 1.0) / (ell * ell - m * m))
                b = math.sqrt(
                    ((ell - 1.0) ** 2 - m * m) / (4.0 * (ell - 1.0) ** 2 - 1.0)
                )
                p_prev, p = p, a * (x * p - b * p_prev)
            out.a[ell, lmax + m] = np.sum(p * wpos)
            if m > 0:
                out.a[ell, lmax - m] = ((-1.0) ** m) * np.sum(p * wneg)
    return out


def power_spectrum(coeffs):
    """Empirical spectrum C_hat_ell = (2*ell+1)^{-1} * sum_m |a_{ell m}|^2."""
    out = np.empty(coeffs.lmax + 1)
    for ell in range(coeffs.lmax + 1):
        v = coeffs.a[ell, coeffs.lmax - ell : coeffs.lmax + ell + 1]
        out[ell] = float(np.sum(np.abs(v) ** 2)) / (2 * ell + 1)
    return out


def evaluate_at_points(coeffs, points):
    """Pointwise harmonic sum sum_{ell,m} a_{ell m} Y_{ell m} at arbitrary points.

    Returns a complex array; real fields leave only roundoff in the imaginary
    part.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    norms = np.sqrt(np.sum(pts * pts, axis=1))
    pts = pts / norms[:, None]
    x = np.clip(pts[:, 2], -1.0, 1.0)
    phi = np.arctan2(pts[:, 1], pts[:, 0])
    s = np.sqrt(np.clip(1.0 - x * x, 0.0, None))
    lmax = coeffs.lmax
    acc = np.zeros(pts.shape[0], dtype=complex)
    pmm = np.full_like(x, 1.0 / math.sqrt(4.0 * math.pi))
    for m in range(lmax + 1):
        if m > 0:
            pmm = _sectoral_update(m, s, pmm)
        gp = np.zeros_like(acc)
        gm = np.zeros_like(acc)
        p_prev = None
        p = pmm
        for ell in range(m, lmax + 1):
            if ell == m + 1:
                p_prev, p = p, math.sqrt(2 * m + 3) * x * pmm
            elif ell > m + 1:
                a = math.sqrt((4.0 * ell * ell - 1.0) / (ell * ell - m * m))
                b = math.sqrt(
                    ((ell - 1.0) ** 2 - m * m) / (4.0 * (ell - 1.0) ** 2 - 1.0)
                )
                p_prev, p = p, a * (x * p - b * p_prev)
            gp += coeffs.a[ell, lmax + m] * p
            if m > 0:
                gm += coeffs.a[ell, lmax - m] * p
        if m == 0:
            acc += gp
        else:
            e = np.exp(1j * m * phi)
            acc += gp * e + ((-1.0) ** m) * gm * np.conj(e)
    return acc


def harmonic_matrix(ell, directions):
    """(2*ell+1) x K complex matrix with columns Y_ell(xi_k)."""
    dirs = np.atleast_2d(np.asarray(directions, dtype=float))
    return specfun.sph_harm_row(ell, dirs).T.copy()


def matrix_rank(ell, directions):
    """Numerical rank of the harmonic matrix (threshold 1e-10 * sigma_max)."""
    mat = harmonic_matrix(ell, directions)
    sv = np.linalg.svd(mat, compute_uv=False)
    if sv.size == 0 or sv[0] == 0.0:
        return 0
    return int(np.sum(sv > 1e-10 * sv[0]))


def recover_weights(a_ell, directions):
    """Least-squares wave weights from one multipole's coefficients.

    Solves min over eta of ||M eta - a_ell|| where M has columns
    conj(Y_ell(xi_k)), the coefficient pattern of a unit wave at xi_k, via
    the SVD pseudo-inverse.  Returns (eta_real, diagnostics) where the
    diagnostics report the residual norm, the largest imaginary part that was
    dropped, and the condition number.
    """
    a = np.asarray(a_ell, dtype=complex)
    if a.ndim != 1 or a.size % 2 == 0:
        raise ValueError("a_ell must be a vector of odd length 2*ell + 1")
    ell = (a.size - 1) // 2
    mat = np.conj(harmonic_matrix(ell, directions))
    u, sv, vh = np.linalg.svd(mat, full_matrices=False)
    if sv[0] == 0.0 or sv[-1] < 1e-10 * sv[0]:
        raise RankDeficientError(
            "harmonic matrix is numerically rank deficient "
            f"(condition {sv[0] / sv[-1] if sv[-1] > 0 else math.inf:.3e})"
        )
    eta = vh.conj().T @ ((u.conj().T @ a) / sv)
    residual = float(np.linalg.norm(mat @ eta - a))
    diagnostics = {
        "residual_norm": residual,
        "max_imag": float(np.max(np.abs(eta.imag))),
        "condition_number": float(sv[0] / sv[-1]),
    }
    return eta.real.copy(), diagnostics


def is_valid_triangle(l1, l2, l3):
    """Triangle inequality plus even parity, the bispectrum selection rules."""
    if (l1 + l2 + l3) % 2:
        return False
    return abs(l1 - l2) <= l3 <= l1 + l2


def map_bispectrum_estimate(samples, l1, l2, l3):
    """Least-squares reduced bispectrum from coefficient realizations.

    Projects the per-realization third moment onto the Gaunt pattern,
    b_hat = sum_m G * a a a / sum_m G^2, and averages over realizations;
    the standard error comes from the spread of the per-realization values.
    Degenerate configurations (all Gaunt weights zero) return (0.0, 0.0).
    """
    samples = list(samples)
    if len(samples) < 2:
        raise ValueError("need at least two realizations")
    terms = []
    for m1 in range(-l1, l1 + 1):
        for m2 in range(-l2, l2 + 1):
            m3 = -m1 - m2
            if abs(m3) > l3:
                continue
            g = specfun.gaunt(l1, l2, l3, m1, m2, m3)
            if g != 0.0:
                terms.append((m1, m2, m3, g))
    if not terms:
        return 0.0, 0.0
    gsq = sum(g * g for _, _, _, g in terms)
    a1 = np.stack([s.ell_vector(l1) for s in samples])
    a2 = np.stack([s.ell_vector(l2) for s in samples])
    a3 = np.stack([s.ell_vector(l3) for s in samples])
    proj = np.zeros(len(samples), dtype=complex)
    for m1, m2, m3, g in terms:
        proj += g * a1[:, l1 + m1] * a2[:, l2 + m2] * a3[:, l3 + m3]
    per_real = proj.real / gsq
    est = float(np.mean(per_real))
    se = float(np.std(per_real, ddof=1) / math.sqrt(len(per_real)))
    return est, se


def gaussian_coeffs(spectrum, rng):
    """Draw coefficients of a Gaussian isotropic field with the given spectrum.

    a_{ell 0} ~ N(0, C_ell) real; for m > 0, a_{ell m} has independent real
    and imaginary parts of variance C_ell/2 and a_{ell,-m} follows by
    conjugate symmetry.  Draw order is ell ascending, then m.
    """
    lmax = spectrum.lmax
    out = HarmonicCoefficients.zeros(lmax)
    for ell in range(lmax + 1):
        z = rng.standard_normal(2 * ell + 1)
        c = spectrum.c[ell]
        out.a[ell, lmax] = math.sqrt(c) * z[0]
        for m in range(1, ell + 1):
            val = math.sqrt(c / 2.0) * (z[2 * m - 1] + 1j * z[2 * m])
            out.a[ell, lmax + m] = val
            out.a[ell, lmax - m] = ((-1.0) ** m) * np.conj(val)
    return out


def _atomic_write_bytes(path, data):
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as fh:
        fh.write(data)
    os.replace(tmp, path)


def write_grid(path, field):
    """Write a grid field in the SGF1 binary format.

    Layout: magic "SGF1", little-endian uint32 header length, JSON header
    {format_version, lmax, ntheta, nphi}, then ntheta*nphi float64 values
    (little endian, row-major in colatitude).
    """
    header = json.dumps(
        {
            "format_version": 1,
            "lmax": field.grid.lgrid,
            "ntheta": field.grid.n_theta,
            "nphi": field.grid.n_phi,
        }
    ).encode("utf-8")
    payload = field.values.astype("<f8").tobytes()
    _atomic_write_bytes(
        path, _GRID_MAGIC + struct.pack("<I", len(header)) + header + payload
    )


def read_grid(path):
    """Read a grid field written by :func:`write_grid`."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 8 or blob[:4] != _GRID_MAGIC:
        raise FormatError("not a grid field file (bad magic)")
    (hlen,) = struct.unpack("<I", blob[4:8])
    if len(blob) < 8 + hlen:
        raise FormatError("truncated grid field header")
    try:
        header = json.loads(blob[8 : 8 + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"unreadable grid field header: {exc}") from exc
    try:
        version = header["format_version"]
        lmax = int(header["lmax"])
        ntheta = int(header["ntheta"])
        nphi = int(header["nphi"])
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"incomplete grid field header: {exc}") from exc
    if version != 1:
        raise FormatError(f"unsupported grid format version {version!r}")
    if ntheta != lmax + 1:
        raise FormatError("header ntheta does not match lmax + 1")
    expected = ntheta * nphi * 8
    payload = blob[8 + hlen :]
    if len(payload) != expected:
        raise FormatError(
            f"grid payload has {len(payload)} bytes, expected {expected}"
        )
    values = np.frombuffer(payload, dtype="<f8").reshape(ntheta, nphi).copy()
    grid = gauss_legendre_grid(lmax, nphi)
    return GridField(grid, values)


def write_coeffs(path, coeffs):
    """Write coefficients as text: a band-limit line then (ell, m, re, im) rows."""
    lines = [f"lmax {coeffs.lmax}"]
    for ell in range(coeffs.lmax + 1):
        for m in range(-ell, ell + 1):
            v = coeffs.a[ell, coeffs.lmax + m]
            lines.append(f"{ell} {m} {v.real:.17g} {v.imag:.17g}")
    tmp = f"{path}.tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
    os.replace(tmp, path)


def read_coeffs(path):
    """Read coefficients written by :func:`write_coeffs`."""
    with open(path, "r", encoding="utf-8") as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    if not lines or not lines[0].startswith("lmax "):
        raise FormatError("missing 'lmax' line in coefficient file")
    try:
        lmax = int(lines[0].split()[1])
    except (IndexError, ValueError) as exc:
        raise FormatError(f"bad band limit line: {lines[0]!r}") from exc
    out = HarmonicCoefficients.zeros(lmax)
    for ln in lines[1:]:
        parts = ln.split()
        if len(parts) != 4:
            raise FormatError(f"malformed coefficient row: {ln!r}")
        ell, m = int(parts[0]), int(parts[1])
        if not (0 <= ell <= lmax) or abs(m) > ell:
            raise FormatError(f"coefficient indices out of range: {ln!r}")
        out.a[ell, lmax + m] = float(parts[2]) + 1j * float(parts[3])
    return out
