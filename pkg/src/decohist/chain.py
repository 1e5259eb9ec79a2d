"""Tridiagonal chain representation of the bosonic bath.

The bath is either specified directly by its chain coefficients or mapped
from a spectral density via the recurrence coefficients of the monic
orthogonal polynomials of the measure w(omega) d(omega) (Stieltjes
procedure: Lanczos on the discretized measure with full
reorthogonalization).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, NumericalError


@dataclass(frozen=True)
class SpectralDensity:
    """Nonnegative weight w(omega) sampled on a positive quadrature grid."""

    nodes: np.ndarray
    quad_weights: np.ndarray
    values: np.ndarray  # w(nodes)

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float)
        qw = np.asarray(self.quad_weights, dtype=float)
        vals = np.asarray(self.values, dtype=float)
        if nodes.shape != qw.shape or nodes.shape != vals.shape:
            raise ConfigError("nodes, quad_weights and values must match in shape")
        if np.any(qw <= 0):
            raise ConfigError("quadrature weights must be positive")
        if np.any(vals < 0):
            raise ConfigError("spectral density must be nonnegative")
        total = float(np.sum(qw * vals))
        if not (np.isfinite(total) and total > 0):
            raise ConfigError("integral of the spectral density must be finite and positive")
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "quad_weights", qw)
        object.__setattr__(self, "values", vals)

    @property
    def masses(self) -> np.ndarray:
        """Discrete point masses w(omega_i) * weight_i of the measure."""
        return self.quad_weights * self.values

    @property
    def support(self) -> tuple[float, float]:
        return float(self.nodes.min()), float(self.nodes.max())


@dataclass(frozen=True)
class ChainSpec:
    """Site energies eps_n, hoppings h_n and the system-site-0 coupling."""

    eps: np.ndarray
    hop: np.ndarray
    h_sys: float
    M: int = field(init=False)

    def __post_init__(self):
        eps = np.atleast_1d(np.asarray(self.eps, dtype=float))
        hop = np.atleast_1d(np.asarray(self.hop, dtype=float)) if np.size(self.hop) \
            else np.zeros(0)
        object.__setattr__(self, "eps", eps)
        object.__setattr__(self, "hop", hop)
        object.__setattr__(self, "M", eps.size)
        if self.M < 1:
            raise ConfigError("chain must have at least one site")
        if hop.size != self.M - 1:
            raise ConfigError(f"expected {self.M - 1} hoppings, got {hop.size}")
        if hop.size and np.any(hop <= 0):
            raise ConfigError("hoppings must be strictly positive")
        if not (np.all(np.isfinite(eps)) and np.all(np.isfinite(hop))
                and np.isfinite(self.h_sys)):
            raise ConfigError("chain coefficients must be finite")

    def one_particle_matrix(self) -> np.ndarray:
        """Dense real symmetric tridiagonal one-particle Hamiltonian."""
        T = np.diag(self.eps)
        if self.M > 1:
            idx = np.arange(self.M - 1)
            T[idx, idx + 1] = self.hop
            T[idx + 1, idx] = self.hop
        return T


def uniform_chain(eps: float, hop: float, h_sys: float, M: int) -> ChainSpec:
    """Constant-coefficient chain (the bath used throughout the figures)."""
    if M < 1:
        raise ConfigError(f"M must be >= 1, got {M}")
    if M > 1 and hop <= 0:
        raise ConfigError(f"hop must be positive, got {hop}")
    return ChainSpec(eps=np.full(M, float(eps)),
                     hop=np.full(max(M - 1, 0), float(hop)),
                     h_sys=float(h_sys))


def auto_chain_length(hop_max: float, horizon: float) -> int:
    """Chain length so the light-cone front (speed 2*hop) never reflects."""
    return int(math.ceil(2.0 * hop_max * horizon)) + 50


def chain_from_spectral_density(sd: SpectralDensity, M: int) -> ChainSpec:
    """Jacobi coefficients of the measure by Lanczos with reorthogonalization.

    eps_n are the diagonal recurrence coefficients alpha_n, hop_n =
    sqrt(beta_{n+1}), and h_sys = sqrt of the total measure mass.
    """
    masses = sd.masses
    active = masses > 0
    n_support = int(np.count_nonzero(active))
    if n_support < M:
        raise ConfigError(
            f"measure supported on {n_support} points, cannot build a chain of length {M}")
    x = sd.nodes[active]
    w = masses[active]
    total = float(np.sum(w))
    q = np.sqrt(w / total)
    basis = np.empty((M, x.size))
    eps = np.empty(M)
    hop = np.empty(max(M - 1, 0))
    v = q
    for n in range(M):
        basis[n] = v
        xv = x * v
        alpha = float(np.dot(v, xv))
        eps[n] = alpha
        r = xv - alpha * v
        if n > 0:
            r -= hop[n - 1] * basis[n - 1]
        # full reorthogonalization against all previous Lanczos vectors
        r -= basis[: n + 1].T @ (basis[: n + 1] @ r)
        ortho_loss = float(np.max(np.abs(basis[: n + 1] @ r)))
        if ortho_loss > 1e-8:
            raise NumericalError(
                f"loss of orthogonality {ortho_loss:.2e} at step {n}; "
                "use a finer or higher-precision quadrature")
        if n < M - 1:
            b = float(np.linalg.norm(r))
            if b <= 1e-14 * max(1.0, np.abs(x).max()):
                raise NumericalError(
                    f"measure is numerically supported on {n + 1} points; "
                    "cannot extend the chain further")
            hop[n] = b
            v = r / b
    return ChainSpec(eps=eps, hop=hop, h_sys=math.sqrt(total))


def spectral_density_of_chain(spec: ChainSpec) -> SpectralDensity:
    """Discrete eigenvalue/weight measure of a chain's Jacobi matrix."""
    T = spec.one_particle_matrix()
    evals, evecs = np.linalg.eigh(T)
    weights = (spec.h_sys ** 2) * np.abs(evecs[0, :]) ** 2
    return SpectralDensity(nodes=evals, quad_weights=np.ones_like(evals),
                           values=weights)


def chain_moments(spec: ChainSpec, order: int) -> np.ndarray:
    """<e0| T^k |e0> for k = 0..order with T the one-particle matrix.

    For chains built from a spectral density these equal the normalized
    measure moments int w omega^k / int w.
    """
    if order < 0:
        raise ConfigError(f"order must be >= 0, got {order}")
    T = spec.one_particle_matrix()
    v = np.zeros(spec.M)
    v[0] = 1.0
    e0 = v.copy()
    out = np.empty(order + 1)
    out[0] = 1.0
    for k in range(1, order + 1):
        v = T @ v
        out[k] = float(np.dot(e0, v))
    return out
