"""Spin-j operators, the kicked-top Floquet operator and spectral statistics.

Natural units (hbar = 1) throughout.  The spin operators are built in the
Jz eigenbasis with eigenvalues ordered descending, m = j, j-1, ..., -j.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, NumericalError


@dataclass(frozen=True)
class SpinSector:
    """Angular-momentum operators and bases for a fixed quantum number j."""

    j: float
    dim: int
    Jx: np.ndarray
    Jy: np.ndarray
    Jz: np.ndarray
    jy_basis: np.ndarray   # columns are Jy eigenvectors
    jy_values: np.ndarray  # ascending, {-j, ..., +j}


@dataclass(frozen=True)
class KickedTopParams:
    """Kick strength K, precession angle p, kick period tau, shift beta."""

    K: float
    p: float = 1.7
    tau: float = 1.0
    beta: float = 0.1

    def __post_init__(self):
        if not self.tau > 0:
            raise ConfigError(f"tau must be positive, got {self.tau}")


@dataclass(frozen=True)
class SpectrumStats:
    """Quasi-energy spacing statistics of a Floquet spectrum."""

    quasienergies: np.ndarray  # eigenphases in [0, 2pi), sorted
    spacings: np.ndarray       # unit-mean nearest-neighbor spacings (with wrap)
    ks_poisson: float
    ks_wigner: float
    mean_r: float
    has_degeneracies: bool


def _validate_j(j: float) -> int:
    """Return 2j as an int, rejecting negative or non-half-integer j."""
    twoj = 2.0 * j
    if twoj < 0 or abs(twoj - round(twoj)) > 1e-12:
        raise ConfigError(f"j must be a nonnegative half-integer, got {j}")
    return int(round(twoj))


def build_spin_sector(j: float) -> SpinSector:
    """Construct Jx, Jy, Jz for spin j in the descending-m Jz basis."""
    twoj = _validate_j(j)
    dim = twoj + 1
    m = j - np.arange(dim)  # descending: j, j-1, ..., -j
    Jz = np.diag(m).astype(complex)
    # J+ |j,m> = sqrt(j(j+1) - m(m+1)) |j,m+1>; index i <-> m_i = j - i,
    # so J+ maps column i to row i-1.
    raise_amp = np.sqrt(j * (j + 1) - m[1:] * (m[1:] + 1))
    Jp = np.zeros((dim, dim), dtype=complex)
    Jp[np.arange(dim - 1), np.arange(1, dim)] = raise_amp
    Jm = Jp.conj().T
    Jx = (Jp + Jm) / 2.0
    Jy = (Jp - Jm) / 2.0j
    jy_values, jy_basis = np.linalg.eigh(Jy)
    return SpinSector(j=float(j), dim=dim, Jx=Jx, Jy=Jy, Jz=Jz,
                      jy_basis=jy_basis, jy_values=jy_values)


def kick_unitary(sector: SpinSector, params: KickedTopParams) -> np.ndarray:
    """Instantaneous kick exp(-i (K/2j) (Jz - beta)^2).

    Computed by eigendecomposition of the Hermitian generator so it stays
    correct for operators given in any basis.
    """
    if sector.j == 0:
        return np.ones((1, 1), dtype=complex)
    gen = (sector.Jz - params.beta * np.eye(sector.dim)) @ \
          (sector.Jz - params.beta * np.eye(sector.dim))
    w, v = np.linalg.eigh(gen)
    phases = np.exp(-1j * (params.K / (2.0 * sector.j)) * w)
    return (v * phases) @ v.conj().T


def precession_unitary(sector: SpinSector, angle: float) -> np.ndarray:
    """exp(-i angle Jy) via the stored Jy eigendecomposition."""
    v = sector.jy_basis
    phases = np.exp(-1j * angle * sector.jy_values)
    return (v * phases) @ v.conj().T


def floquet_operator(sector: SpinSector, params: KickedTopParams) -> np.ndarray:
    """One-period propagator U = kick * precession (kick at period end)."""
    return kick_unitary(sector, params) @ precession_unitary(sector, params.p)


def _ks_distance(sorted_samples: np.ndarray, cdf) -> float:
    """Kolmogorov-Smirnov distance of samples against a theoretical CDF."""
    n = sorted_samples.size
    f = cdf(sorted_samples)
    upper = np.arange(1, n + 1) / n - f
    lower = f - np.arange(0, n) / n
    return float(max(upper.max(), lower.max()))


def quasienergy_spacings(U: np.ndarray, unitarity_tol: float = 1e-10) -> SpectrumStats:
    """Eigenphase spacing statistics of a Floquet operator.

    Spacings include the wrap-around gap on the circle and are rescaled
    to unit mean (uniform mean density, no polynomial unfolding).  KS
    distances are computed against the Poisson law P(s)=exp(-s) and the
    Wigner surmise P(s)=(pi s/2) exp(-pi s^2 / 4); mean_r averages
    min/max ratios of adjacent spacings around the circle.
    """
    U = np.asarray(U, dtype=complex)
    n = U.shape[0]
    dev = np.max(np.abs(U.conj().T @ U - np.eye(n)))
    if dev > max(unitarity_tol, 1e-10 * n):
        raise NumericalError(f"matrix is not unitary (deviation {dev:.2e})")
    phases = np.sort(np.mod(np.angle(np.linalg.eigvals(U)), 2.0 * np.pi))
    raw = np.diff(phases)
    wrap = phases[0] + 2.0 * np.pi - phases[-1]
    raw = np.append(raw, wrap)
    has_degeneracies = bool(np.any(raw < 1e-12))
    mean = raw.mean()
    spacings = raw / mean
    s_sorted = np.sort(spacings)
    ks_poisson = _ks_distance(s_sorted, lambda s: 1.0 - np.exp(-s))
    ks_wigner = _ks_distance(
        s_sorted, lambda s: 1.0 - np.exp(-np.pi * s * s / 4.0))
    nxt = np.roll(raw, -1)
    mean_r = float(np.mean(np.minimum(raw, nxt) / np.maximum(raw, nxt)))
    return SpectrumStats(quasienergies=phases, spacings=spacings,
                         ks_poisson=ks_poisson, ks_wigner=ks_wigner,
                         mean_r=mean_r, has_degeneracies=has_degeneracies)
