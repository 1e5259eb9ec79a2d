"""Joint evolution of the kicked top with the relevant environment modes.

The joint state lives on spin x truncated Fock space of the currently
relevant modes and evolves in the interaction picture with respect to the
free bath.  Every Hamiltonian term is Jy (x) (bath operator), so the
propagation is done per Jy eigenvalue block with a 4th-order Magnus
stepper (two-point Gauss-Legendre quadrature); kicks are applied as exact
instantaneous unitaries at multiples of the kick period.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp

from .chain import ChainSpec
from .errors import ConfigError, CapLeakageError, NumericalError
from .fock import FockBasis, get_basis
from .lightcone import OneParticleTrajectory, InEvent, DEFAULT_A_CUT
from .linalg import expmv
from .spin import SpinSector, KickedTopParams, kick_unitary

_GL_LO = 0.5 - np.sqrt(3.0) / 6.0
_GL_HI = 0.5 + np.sqrt(3.0) / 6.0
_TIME_EPS = 1e-9


@dataclass(frozen=True)
class EngineConfig:
    """Integrator step, quanta cap, threshold, seeding and guards."""

    dt: float = 0.01
    n_max: int = 7
    a_cut: float = DEFAULT_A_CUT
    seed: int = 0
    leak_tol: float = 1e-3
    max_modes: int = 16
    observables: tuple[str, ...] = ("Jy",)

    def __post_init__(self):
        if self.dt <= 0:
            raise ConfigError(f"dt must be positive, got {self.dt}")
        if self.n_max < 1:
            raise ConfigError(f"n_max must be >= 1, got {self.n_max}")


@dataclass(frozen=True)
class JointState:
    """Normalized amplitudes over spin x Fock(relevant modes)."""

    time: float
    spin_dim: int
    basis: FockBasis
    amplitudes: np.ndarray   # (spin_dim, basis.size)
    frame: np.ndarray        # (M, r), orthonormal columns

    @property
    def r(self) -> int:
        return self.basis.r

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))


def init_joint(sector: SpinSector, spin_state: np.ndarray,
               n_max: int, M: int) -> JointState:
    """Product state spin_state (x) vacuum with no relevant modes yet."""
    spin_state = np.asarray(spin_state, dtype=complex)
    if spin_state.shape != (sector.dim,):
        raise ConfigError(
            f"spin state must have dimension {sector.dim}, got {spin_state.shape}")
    if abs(np.linalg.norm(spin_state) - 1.0) > 1e-8:
        raise ConfigError("spin state must be normalized")
    basis = get_basis(0, n_max)
    amps = spin_state[:, None].copy()
    return JointState(time=0.0, spin_dim=sector.dim, basis=basis,
                      amplitudes=amps, frame=np.zeros((M, 0), dtype=complex))


def jy_zero_state(sector: SpinSector) -> np.ndarray:
    """The |Jy = 0> eigenstate (integer j only)."""
    idx = int(np.argmin(np.abs(sector.jy_values)))
    if abs(sector.jy_values[idx]) > 1e-9:
        raise ConfigError("Jy has no zero eigenvalue for half-integer j")
    return sector.jy_basis[:, idx].copy()


def coupling_amplitudes(frame: np.ndarray, phi: np.ndarray) -> np.ndarray:
    """Coupling amplitude g_l(t) of every relevant mode.

    The interaction-picture site operator is a_0(t) = sum_k phi_k(t) a_k,
    and slot l annihilates mode kappa_l, so g_l = sum_k kappa_kl phi_k
    (no conjugation on phi).
    """
    return phi @ frame


def _coupling_operator(basis: FockBasis, g: np.ndarray, h_sys: float) -> sp.csr_matrix:
    """h_sys * sum_l (g_l a_l + conj(g_l) a_l^dag) on the Fock factor."""
    B = sp.csr_matrix((basis.size, basis.size), dtype=complex)
    for l in range(basis.r):
        a = basis.annihilation(l)
        B = B + (h_sys * g[l]) * a + (h_sys * np.conj(g[l])) * a.conj().T
    return B


def effective_hamiltonian(ts: JointState, t: float, sector: SpinSector,
                          params: KickedTopParams, spec: ChainSpec,
                          traj: OneParticleTrajectory) -> sp.csr_matrix:
    """H_eff(t) on spin x Fock between kicks (sparse, Hermitian)."""
    nb = ts.basis.size
    g = coupling_amplitudes(ts.frame, traj.phi_at(t))
    Bc = _coupling_operator(ts.basis, g, spec.h_sys)
    Hs = (params.p / params.tau) * sector.Jy
    return (sp.kron(sp.csr_matrix(Hs), sp.identity(nb, format="csr")) +
            sp.kron(sp.csr_matrix(sector.Jy), Bc)).tocsr()


def _kick_times(t0: float, t1: float, tau: float) -> list[float]:
    """Kick instants n*tau with n >= 1 and t0 < n*tau <= t1."""
    n = int(np.floor(t0 / tau + _TIME_EPS)) + 1
    out = []
    while n * tau <= t1 + _TIME_EPS:
        if n >= 1 and n * tau > t0 + _TIME_EPS:
            out.append(n * tau)
        n += 1
    return out


def propagate_amplitudes(amps: np.ndarray, t0: float, t1: float,
                         frame: np.ndarray, basis: FockBasis,
                         sector: SpinSector, params: KickedTopParams,
                         spec: ChainSpec, traj: OneParticleTrajectory,
                         config: EngineConfig) -> np.ndarray:
    """Magnus-4 propagation of amplitudes (..., spin, fock) over [t0, t1].

    The leading axes are an arbitrary batch: every batch element shares
    the same relevant frame and Fock basis, so the per-step block
    propagators are applied to all of them at once.
    """
    if t1 < t0 - _TIME_EPS:
        raise ConfigError("t_target must not precede the current time")
    batch_shape = amps.shape[:-2]
    S, F = amps.shape[-2], amps.shape[-1]
    flat = amps.reshape(-1, S, F)
    V = sector.jy_basis
    psi = np.einsum("ij,bjf->bif", V.conj().T, flat)
    kick_y = None  # lazily built kick unitary in the Jy basis
    mvals = sector.jy_values
    h_sys = spec.h_sys
    omega0 = params.p / params.tau

    boundaries = _kick_times(t0, t1, params.tau)
    segments = []
    a = t0
    for tk in boundaries:
        segments.append((a, tk, True))
        a = tk
    if t1 > a + _TIME_EPS or not segments:
        segments.append((a, t1, False))

    for (a, b, kicked) in segments:
        span = b - a
        if span > _TIME_EPS and basis.r == 0:
            # no relevant modes: pure precession phase per Jy block
            phases = np.exp(-1j * mvals * omega0 * span)
            psi = psi * phases[None, :, None]
        elif span > _TIME_EPS:
            n_steps = max(1, int(np.ceil(span / config.dt - _TIME_EPS)))
            h = span / n_steps
            coeff_c = np.sqrt(3.0) * h * h / 12.0
            for k in range(n_steps):
                s = a + k * h
                g1 = coupling_amplitudes(frame, traj.phi_at(s + h * _GL_LO))
                g2 = coupling_amplitudes(frame, traj.phi_at(s + h * _GL_HI))
                B1 = _coupling_operator(basis, g1, h_sys)
                B2 = _coupling_operator(basis, g2, h_sys)
                P = (-0.5j * h) * (B1 + B2)
                Q = (-coeff_c) * (B2 @ B1 - B1 @ B2)
                for i, m in enumerate(mvals):
                    if abs(m) < 1e-12:
                        continue
                    block = psi[:, i, :].T.copy()  # (F, batch)
                    block = expmv(m * P + (m * m) * Q, block)
                    psi[:, i, :] = block.T
                psi *= np.exp(-1j * mvals * omega0 * h)[None, :, None]
        if kicked:
            if kick_y is None:
                kick_y = V.conj().T @ kick_unitary(sector, params) @ V
            psi = np.einsum("ij,bjf->bif", kick_y, psi)

    out = np.einsum("ij,bjf->bif", V, psi)
    return out.reshape(*batch_shape, S, F)


def check_cap_leakage(amps: np.ndarray, basis: FockBasis,
                      leak_tol: float) -> float:
    """Population at the total-quanta cap; raises above leak_tol."""
    if basis.r == 0:
        return 0.0
    mask = basis.cap_mask()
    leak = float(np.max(np.sum(np.abs(amps[..., mask]) ** 2, axis=(-2, -1))))
    if leak > leak_tol:
        raise CapLeakageError(
            f"population {leak:.3e} at the quanta cap exceeds {leak_tol:.1e}; "
            "raise n_max")
    return leak


def evolve_to(ts: JointState, t_target: float, sector: SpinSector,
              params: KickedTopParams, spec: ChainSpec,
              traj: OneParticleTrajectory, config: EngineConfig) -> JointState:
    """Integrate to t_target (no schedule event strictly inside)."""
    amps = propagate_amplitudes(ts.amplitudes, ts.time, t_target, ts.frame,
                                ts.basis, sector, params, spec, traj, config)
    check_cap_leakage(amps, ts.basis, config.leak_tol)
    return replace(ts, time=float(t_target), amplitudes=amps)


def attach_mode(ts: JointState, event: InEvent,
                max_modes: int = 16) -> JointState:
    """Append a newly coupled mode as a vacuum Fock slot (isometric)."""
    if abs(event.t - ts.time) > 1e-6:
        raise ConfigError(
            f"attach at t={event.t} but state is at t={ts.time}")
    if ts.r + 1 > max_modes:
        raise ConfigError(
            f"attaching mode {ts.r + 1} exceeds the configured cap {max_modes}")
    new_basis = get_basis(ts.r + 1, ts.basis.n_max)
    emb = ts.basis.embed_map(new_basis)
    amps = np.zeros((ts.spin_dim, new_basis.size), dtype=complex)
    amps[:, emb] = ts.amplitudes
    frame = np.hstack([ts.frame, event.kappa[:, None]])
    return replace(ts, basis=new_basis, amplitudes=amps, frame=frame)


def expectation(ts: JointState, sector: SpinSector) -> float:
    """<Psi| Jy (x) 1 |Psi>, real up to numerical noise."""
    val = np.einsum("if,ij,jf->", ts.amplitudes.conj(), sector.Jy,
                    ts.amplitudes)
    if abs(val.imag) > 1e-8:
        raise NumericalError(f"expectation has imaginary part {val.imag:.2e}")
    return float(val.real)
