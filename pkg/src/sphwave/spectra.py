"""Angular power spectrum models, support sets, and sparsity budgets."""

import math
import os
from dataclasses import dataclass

import numpy as np

from .errors import FormatError

__all__ = [
    "PowerSpectrum",
    "whittle_matern",
    "whittle_matern_exact",
    "support",
    "sparsity_budget",
    "write_spectrum_csv",
    "read_spectrum_csv",
]


@dataclass(frozen=True)
class PowerSpectrum:
    """Nonnegative sequence C_ell for ell = 0..lmax."""

    c: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.c, dtype=float)
        if c.ndim != 1 or c.size == 0:
            raise ValueError("spectrum must be a nonempty 1-D sequence")
        if not np.all(np.isfinite(c)) or np.any(c < 0.0):
            raise ValueError("spectrum values must be finite and nonnegative")
        object.__setattr__(self, "c", c.copy())

    @property
    def lmax(self):
        return self.c.size - 1

    def __getitem__(self, ell):
        return float(self.c[ell])

    def total_power(self):
        """Sum over ell of (2*ell+1) * C_ell."""
        ells = np.arange(self.c.size)
        return float(np.sum((2 * ells + 1) * self.c))


def whittle_matern(beta, lmax):
    """Power-law spectrum C_ell = (1+ell)^(-2*beta).

    beta must exceed 1/2, otherwise the total power sum(2l+1)C_l diverges
    as the band limit grows.
    """
    beta = float(beta)
    if beta <= 0.5:
        raise ValueError("beta must exceed 0.5 (total power not summable)")
    lmax = int(lmax)
    if lmax < 0:
        raise ValueError("lmax must be nonnegative")
    ells = np.arange(lmax + 1, dtype=float)
    return PowerSpectrum((1.0 + ells) ** (-2.0 * beta))


def whittle_matern_exact(beta, lmax):
    """Laplacian form C_ell = (1 + ell*(ell+1))^(-beta) of the same family."""
    beta = float(beta)
    if beta <= 0.5:
        raise ValueError("beta must exceed 0.5 (total power not summable)")
    lmax = int(lmax)
    if lmax < 0:
        raise ValueError("lmax must be nonnegative")
    ells = np.arange(lmax + 1, dtype=float)
    return PowerSpectrum((1.0 + ells * (ells + 1.0)) ** (-beta))


def support(spectrum, ell_max, zero_tol=0.0):
    """Multipoles ell <= ell_max with C_ell > zero_tol, sorted ascending."""
    ell_max = int(ell_max)
    if ell_max > spectrum.lmax:
        raise ValueError("ell_max exceeds the spectrum band limit")
    if ell_max < 0:
        raise ValueError("ell_max must be nonnegative")
    return [ell for ell in range(ell_max + 1) if spectrum.c[ell] > zero_tol]


def sparsity_budget(spectrum, ell_max, gamma, kind):
    """Coefficient budget that classifies a field as sparse at exponent gamma.

    kind="weak" gives ceil(L^(2*gamma)); kind="strong" gives
    ceil((sum over the support of 2*ell+1)^gamma).  A representation using
    at most this many real random coefficients qualifies.
    """
    gamma = float(gamma)
    if not (0.0 <= gamma < 1.0):
        raise ValueError("gamma must lie in [0, 1)")
    ell_max = int(ell_max)
    if kind == "weak":
        return math.ceil(float(ell_max) ** (2.0 * gamma))
    if kind == "strong":
        dims = sum(2 * ell + 1 for ell in support(spectrum, ell_max))
        return math.ceil(float(dims) ** gamma)
    raise ValueError("kind must be 'weak' or 'strong'")


def _atomic_write_text(path, text):
    tmp = f"{path}.tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write(text)
    os.replace(tmp, path)


def write_spectrum_csv(path, spectrum):
    """Write a spectrum as CSV with header ``ell,C_ell`` (17 significant digits)."""
    lines = ["ell,C_ell"]
    for ell in range(spectrum.lmax + 1):
        lines.append(f"{ell},{spectrum.c[ell]:.17g}")
    _atomic_write_text(path, "\n".join(lines) + "\n")


def read_spectrum_csv(path):
    """Read a spectrum CSV written by :func:`write_spectrum_csv`."""
    with open(path, "r", encoding="utf-8") as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    if not lines or lines[0] != "ell,C_ell":
        raise FormatError("missing 'ell,C_ell' header")
    values = []
    for ln in lines[1:]:
        parts = ln.split(",")
        if len(parts) != 2:
            raise FormatError(f"malformed spectrum row: {ln!r}")
        ell, c = int(parts[0]), float(parts[1])
        if ell != len(values):
            raise FormatError("spectrum rows must be consecutive in ell")
        values.append(c)
    return PowerSpectrum(np.array(values))
