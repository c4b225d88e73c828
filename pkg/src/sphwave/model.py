"""Sparse directional-wave random fields.

A field is a finite superposition of Legendre waves,

    T(x) = sum_ell sum_k eta_{ell k} * (2*ell+1)/(4*pi) * P_ell(<xi_k, x>),

with uniformly random directions xi_k and random weights eta.  The module
provides weight generators (i.i.d. with prescribed variance, quadratic
Gaussian of local type, general quadratic), exact harmonic coefficients and
per-realization spectra, reduced-bispectrum formulas with an Isserlis oracle,
and Monte Carlo estimators.
"""

import json
import math
import os
from dataclasses import dataclass, field as dc_field

import numpy as np

from . import harmonic, specfun
from .errors import FormatError
from .geom import sample_uniform_many
from .specfun import FOUR_PI, WickMonomial, legendre_p_all, wick_expectation

__all__ = [
    "SparseField",
    "SeparableQuadratic",
    "fnl_quadratic",
    "band_decay_quadratic",
    "gen_iid_weights",
    "gen_fnl_weights",
    "gen_general_quadratic_weights",
    "synthesize_at",
    "synthesize_many",
    "synthesize_grid",
    "harmonic_coeffs",
    "exact_empirical_spectrum",
    "reduced_bispectrum_formula",
    "reduced_bispectrum_isserlis",
    "mc_reduced_bispectrum",
    "write_field",
    "read_field",
]

_UNIT_TOL = 1e-9


def _check_directions(d):
    d = np.asarray(d, dtype=float)
    if d.ndim != 2 or d.shape[1] != 3:
        raise ValueError("directions must have shape (K, 3)")
    if d.shape[0]:
        norms = np.sqrt(np.sum(d * d, axis=1))
        if np.max(np.abs(norms - 1.0)) > _UNIT_TOL:
            raise ValueError("directions must be unit vectors")
    return d


@dataclass
class SparseField:
    """State of a directional-wave superposition.

    Two layouts are supported.  The shared layout (the default, used by all
    generators here) stores one list of K directions reused by every
    multipole: ``directions`` is (K, 3) and ``weights`` is (lmax+1, K).  The
    ragged layout stores per-multipole lists: ``directions[ell]`` is
    (K_ell, 3) and ``weights[ell]`` is (K_ell,).  ``provenance`` records how
    the field was generated (generator name, spectrum model, parameters,
    seed) and travels with the field file.
    """

    lmax: int
    directions: object
    weights: object
    shared: bool = True
    provenance: dict = dc_field(default_factory=dict)

    def __post_init__(self):
        self.lmax = int(self.lmax)
        if self.lmax < 0:
            raise ValueError("lmax must be nonnegative")
        n_ell = self.lmax + 1
        if self.shared:
            self.directions = _check_directions(self.directions)
            w = np.asarray(self.weights, dtype=float)
            if w.shape != (n_ell, self.directions.shape[0]):
                raise ValueError("shared weights must have shape (lmax+1, K)")
            if not np.all(np.isfinite(w)):
                raise ValueError("weights must be finite")
            self.weights = w
        else:
            if len(self.directions) != n_ell or len(self.weights) != n_ell:
                raise ValueError("ragged layout needs one entry per multipole")
            dirs, wts = [], []
            for ell in range(n_ell):
                d = _check_directions(np.asarray(self.directions[ell], float).reshape(-1, 3))
                w = np.asarray(self.weights[ell], dtype=float).reshape(-1)
                if w.shape[0] != d.shape[0]:
                    raise ValueError(f"weights and directions disagree at ell={ell}")
                if not np.all(np.isfinite(w)):
                    raise ValueError("weights must be finite")
                dirs.append(d)
                wts.append(w)
            self.directions = dirs
            self.weights = wts

    def k_counts(self):
        """Number of directions per multipole."""
        if self.shared:
            return np.full(self.lmax + 1, self.directions.shape[0], dtype=int)
        return np.array([d.shape[0] for d in self.directions], dtype=int)

    def directions_for(self, ell):
        return self.directions if self.shared else self.directions[ell]

    def weights_for(self, ell):
        return self.weights[ell]

    def rotated(self, rotation):
        """Same weights with every direction rotated by a common rotation."""
        r = np.asarray(rotation, dtype=float)
        if self.shared:
            dirs = self.directions @ r.T
            return SparseField(self.lmax, dirs, self.weights.copy(), True,
                               dict(self.provenance))
        dirs = [d @ r.T for d in self.directions]
        wts = [w.copy() for w in self.weights]
        return SparseField(self.lmax, dirs, wts, False, dict(self.provenance))


def gen_iid_weights(spectrum, k, dist, rng):
    """Shared-direction field with i.i.d. weights of variance 4*pi*C_ell/K.

    ``dist`` is "gaussian" or "rademacher"; Rademacher weights take the two
    values +-sqrt(4*pi*C_ell/K) with equal probability.  Stream order is
    directions first, then weights by ascending ell, then k.
    """
    k = int(k)
    if k < 1:
        raise ValueError("K must be at least 1")
    if dist not in ("gaussian", "rademacher"):
        raise ValueError("dist must be 'gaussian' or 'rademacher'")
    n_ell = spectrum.lmax + 1
    directions = sample_uniform_many(rng, k)
    scale = np.sqrt(FOUR_PI * spectrum.c / k)
    if dist == "gaussian":
        u = rng.standard_normal((n_ell, k))
    else:
        u = 2.0 * rng.integers(0, 2, size=(n_ell, k)).astype(float) - 1.0
    weights = scale[:, None] * u
    prov = {"generator": f"iid-{dist}", "parameters": {"K": k, "dist": dist}}
    return SparseField(spectrum.lmax, directions, weights, True, prov)


@dataclass(frozen=True)
class SeparableQuadratic:
    """Quadratic coefficients c^ell_{l1 l2} = scale[ell] * factor[l1] * factor[l2].

    The separable structure admits the closed-form contraction
    sum_{l1,l2} c :z_{l1} z_{l2}: = scale * ((sum_l factor_l z_l)^2 - sum_l factor_l^2),
    an O(L) evaluation of the O(L^2) double sum.
    """

    scale: np.ndarray
    factor: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.scale, dtype=float)
        f = np.asarray(self.factor, dtype=float)
        if s.shape != f.shape or s.ndim != 1:
            raise ValueError("scale and factor must be 1-D arrays of equal length")
        object.__setattr__(self, "scale", s.copy())
        object.__setattr__(self, "factor", f.copy())

    def coefficient(self, ell, l1, l2):
        return float(self.scale[ell] * self.factor[l1] * self.factor[l2])


def fnl_quadratic(spectrum, f_nl):
    """Quadratic family c^ell_{l1 l2} = 3*f_nl*sqrt(C_{l1} C_{l2}) of the
    local-type nonlinear model."""
    n_ell = spectrum.lmax + 1
    return SeparableQuadratic(
        np.full(n_ell, 3.0 * float(f_nl)), np.sqrt(spectrum.c)
    )


def band_decay_quadratic(spectrum, gamma_c):
    """Built-in non-separable family c^ell_{l1 l2} = sqrt(C_ell)/(1+|l1-l2|)^gamma_c."""
    root_c = np.sqrt(spectrum.c)
    gamma_c = float(gamma_c)

    def coefficient(ell, l1, l2):
        return float(root_c[ell] / (1.0 + abs(l1 - l2)) ** gamma_c)

    return coefficient


def gen_general_quadratic_weights(spectrum, coefficients, rng):
    """K=1 field with weights eta_ell = sqrt(4*pi*C_ell) z_ell + quadratic Wick sum.

    ``coefficients`` is either a :class:`SeparableQuadratic` (evaluated in
    closed form) or a callable (ell, l1, l2) -> real, which is symmetrized in
    (l1, l2) and contracted against :z_{l1} z_{l2}: = z_{l1} z_{l2} - delta.
    Stream order is the direction first, then z_0..z_lmax.
    """
    n_ell = spectrum.lmax + 1
    directions = sample_uniform_many(rng, 1)
    z = rng.standard_normal(n_ell)
    linear = np.sqrt(FOUR_PI * spectrum.c) * z
    if isinstance(coefficients, SeparableQuadratic):
        if coefficients.scale.shape[0] != n_ell:
            raise ValueError("coefficient arrays must cover ell = 0..lmax")
        w = coefficients.factor
        contraction = np.sum(w * z) ** 2 - np.sum(w * w)
        quad = coefficients.scale * contraction
        name = "separable-quadratic"
    else:
        pair = np.outer(z, z) - np.eye(n_ell)
        quad = np.empty(n_ell)
        ells = np.arange(n_ell)
        for ell in range(n_ell):
            mat = np.array(
                [[coefficients(ell, int(a), int(b)) for b in ells] for a in ells],
                dtype=float,
            )
            mat = 0.5 * (mat + mat.T)
            quad[ell] = np.sum(mat * pair)
        name = "general-quadratic"
    weights = (linear + quad)[:, None]
    prov = {"generator": name, "parameters": {"K": 1}}
    return SparseField(spectrum.lmax, directions, weights, True, prov)


def gen_fnl_weights(spectrum, f_nl, rng):
    """K=1 field whose weights carry the local-type quadratic perturbation.

    eta_ell = sqrt(4*pi*C_ell) z_ell
              + 3*f_nl * sum_{l1,l2} sqrt(C_{l1} C_{l2}) :z_{l1} z_{l2}:,
    with i.i.d. standard Gaussian z_ell.  The double Wick sum is evaluated by
    the closed form (sum_l sqrt(C_l) z_l)^2 - sum_l C_l; the sum is truncated
    at the spectrum band limit.
    """
    out = gen_general_quadratic_weights(spectrum, fnl_quadratic(spectrum, f_nl), rng)
    out.provenance = {"generator": "fnl", "parameters": {"f_nl": float(f_nl), "K": 1}}
    return out


def _wave_values(directions, weights_rows, points, lmax):
    """Accumulate sum_ell sum_k eta (2l+1)/(4pi) P_l(<xi_k, x>) over points.

    ``weights_rows`` maps ell -> (K,) weights; directions shape (K, 3).  The
    Legendre recurrence over ell is shared across all (point, direction)
    pairs, and reductions are plain elementwise sums so results do not depend
    on BLAS threading.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if directions.shape[0] == 0:
        return np.zeros(pts.shape[0])
    t = (
        pts[:, 0:1] * directions[None, :, 0]
        + pts[:, 1:2] * directions[None, :, 1]
        + pts[:, 2:3] * directions[None, :, 2]
    )
    t = np.clip(t, -1.0, 1.0)
    acc = np.zeros(pts.shape[0])
    p_prev = np.ones_like(t)
    p = None
    for ell in range(lmax + 1):
        if ell == 1:
            p = t.copy()
        elif ell > 1:
            n = ell - 1
            p, p_prev = ((2 * n + 1) * t * p - n * p_prev) / (n + 1), p
        cur = p_prev if ell == 0 else p
        row = weights_rows(ell)
        if row is None:
            continue
        coef = (2 * ell + 1) / FOUR_PI * row
        acc += np.sum(cur * coef[None, :], axis=1)
    return acc


def synthesize_many(field, points):
    """Field values at an (n, 3) array of points."""
    if field.shared:
        w = field.weights
        return _wave_values(field.directions, lambda ell: w[ell], points, field.lmax)
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    acc = np.zeros(pts.shape[0])
    for ell in range(field.lmax + 1):
        d = field.directions[ell]
        if d.shape[0] == 0:
            continue
        w = field.weights[ell]
        rows = [None] * ell + [w]
        acc += _wave_values(d, lambda l: rows[l], pts, ell)
    return acc


def synthesize_at(field, x):
    """Field value at a single point."""
    return float(synthesize_many(field, np.asarray(x, dtype=float)[None, :])[0])


def synthesize_grid(field, grid):
    """Sample the field on a quadrature grid (direct wave evaluation)."""
    values = synthesize_many(field, grid.points())
    return harmonic.GridField(grid, values.reshape(grid.n_theta, grid.n_phi))


def harmonic_coeffs(field):
    """Exact harmonic coefficients a_{ell m} = sum_k eta_{ell k} conj(Y_{ell m}(xi_k)).

    No quadrature is involved; conjugate symmetry holds by construction since
    the weights are real.
    """
    lmax = field.lmax
    out = harmonic.HarmonicCoefficients.zeros(lmax)
    if field.shared:
        d = field.directions
        if d.shape[0] == 0:
            return out
        x = np.clip(d[:, 2], -1.0, 1.0)
        phi = np.arctan2(d[:, 1], d[:, 0])
        s = np.sqrt(np.clip(1.0 - x * x, 0.0, None))
        w = field.weights
        pmm = np.full_like(x, 1.0 / math.sqrt(FOUR_PI))
        for m in range(lmax + 1):
            if m > 0:
                pmm = -math.sqrt((2 * m + 1) / (2.0 * m)) * s * pmm
            e = np.exp(-1j * m * phi)
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
                val = np.sum(w[ell] * p * e)
                out.a[ell, lmax + m] = val
                if m > 0:
                    out.a[ell, lmax - m] = ((-1.0) ** m) * np.conj(val)
        return out
    for ell in range(lmax + 1):
        d = field.directions[ell]
        if d.shape[0] == 0:
            continue
        rows = specfun.sph_harm_row(ell, d)
        vec = np.sum(field.weights[ell][:, None] * np.conj(rows), axis=0)
        out.set_ell_vector(ell, vec)
    return out


def exact_empirical_spectrum(field):
    """Per-realization spectrum from the weight/direction quadratic form.

    C_hat_ell = (4*pi)^{-1} sum_{h,k} eta_{ell k} eta_{ell h} P_ell(<xi_k, xi_h>),
    which for K=1 reduces exactly to eta_ell^2 / (4*pi).  Agrees with the
    coefficient-based spectrum up to roundoff.
    """
    lmax = field.lmax
    out = np.zeros(lmax + 1)
    if field.shared:
        d = field.directions
        if d.shape[0] == 0:
            return out
        gram = np.clip(d @ d.T, -1.0, 1.0)
        np.fill_diagonal(gram, 1.0)
        pl = legendre_p_all(lmax, gram)
        for ell in range(lmax + 1):
            w = field.weights[ell]
            out[ell] = float(np.sum(w[:, None] * w[None, :] * pl[ell])) / FOUR_PI
        return out
    for ell in range(lmax + 1):
        d = field.directions[ell]
        if d.shape[0] == 0:
            continue
        gram = np.clip(d @ d.T, -1.0, 1.0)
        np.fill_diagonal(gram, 1.0)
        pl = legendre_p_all(ell, gram)[ell]
        w = field.weights[ell]
        out[ell] = float(np.sum(w[:, None] * w[None, :] * pl)) / FOUR_PI
    return out


def reduced_bispectrum_formula(spectrum, f_nl, l1, l2, l3):
    """Closed-form reduced bispectrum of the quadratic local-type weights:

        b = 6 f_nl (C1 C2 + C2 C3 + C3 C1) + (54 f_nl^3 / pi) (sum_l C_l)^3.

    The cubic constant matches the Isserlis oracle (see
    :func:`reduced_bispectrum_isserlis`), which the tests enforce.
    """
    c = spectrum.c
    f = float(f_nl)
    first = 6.0 * f * (c[l1] * c[l2] + c[l2] * c[l3] + c[l3] * c[l1])
    cubic = (54.0 * f**3 / math.pi) * float(np.sum(c)) ** 3
    return first + cubic


def reduced_bispectrum_isserlis(spectrum, f_nl, l1, l2, l3):
    """Reduced bispectrum (4*pi)^{-1} E[eta_{l1} eta_{l2} eta_{l3}] computed by
    brute-force Isserlis enumeration over the expanded double Wick sums.

    Ground-truth oracle; cost grows as (1 + (lmax+1)^2)^3, so keep the
    spectrum short (lmax <= 5 or so).
    """
    c = spectrum.c
    n_ell = c.size
    f = float(f_nl)
    cov = np.eye(n_ell)

    def eta_terms(ell):
        terms = [(math.sqrt(FOUR_PI * c[ell]), WickMonomial((ell,), wick=False))]
        if f != 0.0:
            for a in range(n_ell):
                if c[a] == 0.0:
                    continue
                for b in range(n_ell):
                    if c[b] == 0.0:
                        continue
                    terms.append(
                        (3.0 * f * math.sqrt(c[a] * c[b]), WickMonomial((a, b)))
                    )
        return terms

    total = 0.0
    for w1, t1 in eta_terms(l1):
        for w2, t2 in eta_terms(l2):
            w12 = w1 * w2
            if w12 == 0.0:
                continue
            for w3, t3 in eta_terms(l3):
                w = w12 * w3
                if w == 0.0:
                    continue
                total += w * wick_expectation([t1, t2, t3], cov)
    return total / FOUR_PI


def mc_reduced_bispectrum(spectrum, f_nl, l1, l2, l3, m, rng):
    """Monte Carlo reduced bispectrum from ``m`` independent weight draws.

    Returns (estimate, standard error) for the sample mean of
    (4*pi)^{-1} eta_{l1} eta_{l2} eta_{l3}.
    """
    m = int(m)
    if m < 2:
        raise ValueError("need at least two draws")
    c = spectrum.c
    f = float(f_nl)
    z = rng.standard_normal((m, c.size))
    root_c = np.sqrt(c)
    quad = (z @ root_c) ** 2 - float(np.sum(c))
    eta = {}
    for ell in {l1, l2, l3}:
        eta[ell] = math.sqrt(FOUR_PI * c[ell]) * z[:, ell] + 3.0 * f * quad
    prod = eta[l1] * eta[l2] * eta[l3] / FOUR_PI
    est = float(np.mean(prod))
    se = float(np.std(prod, ddof=1) / math.sqrt(m))
    return est, se


def _field_document(field):
    doc = {
        "format_version": 1,
        "lmax": field.lmax,
        "shared_directions": bool(field.shared),
    }
    if field.shared:
        doc["K"] = int(field.directions.shape[0])
        doc["directions"] = field.directions.tolist()
        doc["weights"] = field.weights.tolist()
    else:
        doc["K_per_ell"] = [int(k) for k in field.k_counts()]
        doc["directions"] = [d.tolist() for d in field.directions]
        doc["weights"] = [w.tolist() for w in field.weights]
    prov = field.provenance or {}
    doc["generator"] = prov.get("generator")
    doc["spectrum_model"] = prov.get("spectrum_model")
    doc["parameters"] = prov.get("parameters", {})
    doc["seed"] = prov.get("seed")
    return doc


def write_field(path, field):
    """Write a sparse field as a JSON document with canonical key order.

    Floats are serialized with shortest round-trip representations, so a
    write/read cycle reproduces the field bit-exactly.
    """
    text = json.dumps(_field_document(field), indent=2)
    tmp = f"{path}.tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write(text + "\n")
    os.replace(tmp, path)


def read_field(path):
    """Read a sparse field written by :func:`write_field`."""
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise FormatError(f"not a sparse field file: {exc}") from exc
    if not isinstance(doc, dict) or doc.get("format_version") != 1:
        raise FormatError("unsupported sparse field format")
    try:
        lmax = int(doc["lmax"])
        shared = bool(doc["shared_directions"])
        if shared:
            directions = np.array(doc["directions"], dtype=float)
            weights = np.array(doc["weights"], dtype=float)
        else:
            directions = [np.array(d, dtype=float).reshape(-1, 3) for d in doc["directions"]]
            weights = [np.array(w, dtype=float) for w in doc["weights"]]
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"malformed sparse field file: {exc}") from exc
    prov = {
        "generator": doc.get("generator"),
        "spectrum_model": doc.get("spectrum_model"),
        "parameters": doc.get("parameters", {}),
        "seed": doc.get("seed"),
    }
    try:
        return SparseField(lmax, directions, weights, shared, prov)
    except ValueError as exc:
        raise FormatError(f"inconsistent sparse field file: {exc}") from exc
