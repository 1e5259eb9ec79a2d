"""Brute-force references on desk-scale instances.

The oracle evolves the full spin x chain state in the Schroedinger
picture with the explicit chain Hamiltonian (no interaction picture, no
mode truncation beyond the shared quanta cap), providing the authority
against which the threshold-truncated engine is validated, plus a direct
evaluation of the decoherence functional over record projectors.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import product

import numpy as np
import scipy.sparse as sp

from .chain import ChainSpec
from .engine import JointState
from .errors import ConfigError, NumericalError
from .fock import FockBasis, get_basis
from .histories import _split_maps
from .linalg import complete_unitary, expmv
from .spin import KickedTopParams, SpinSector, kick_unitary

SIZE_CAP = 10 ** 6
DENSE_CAP = 4000  # above this, spectral evolution falls back to sparse expmv


def second_quantize(h1: np.ndarray, basis: FockBasis) -> sp.csr_matrix:
    """sum_jk (h1)_jk a_j^dag a_k on a truncated Fock basis."""
    out = sp.csr_matrix((basis.size, basis.size), dtype=complex)
    for j in range(basis.r):
        aj_dag = basis.annihilation(j).conj().T
        for k in range(basis.r):
            if abs(h1[j, k]) > 1e-15:
                out = out + h1[j, k] * (aj_dag @ basis.annihilation(k))
    return out.tocsr()


class ExactModel:
    """Dense spectral evolution of the joint spin-chain state."""

    def __init__(self, sector: SpinSector, params: KickedTopParams,
                 spec: ChainSpec, n_max: int):
        self.sector = sector
        self.params = params
        self.spec = spec
        self.n_max = n_max
        self.basis = get_basis(spec.M, n_max)
        self.dim = sector.dim * self.basis.size
        if self.dim > SIZE_CAP:
            raise ConfigError(
                f"instance size {self.dim} exceeds the oracle cap {SIZE_CAP}")
        self.h1 = spec.one_particle_matrix()
        h_env = second_quantize(self.h1, self.basis)
        a0 = self.basis.annihilation(0)
        coupling = spec.h_sys * (a0 + a0.conj().T)
        eye_f = sp.identity(self.basis.size, format="csr")
        hs = (params.p / params.tau) * sector.Jy
        H = (sp.kron(sp.csr_matrix(hs), eye_f) +
             sp.kron(sp.csr_matrix(sector.Jy), coupling) +
             sp.kron(sp.identity(sector.dim, format="csr"), h_env))
        self.H = H.tocsr()
        herm_dev = self.H - self.H.conj().T
        if herm_dev.nnz and np.max(np.abs(herm_dev.data)) > 1e-12:
            raise NumericalError("oracle Hamiltonian is not Hermitian")
        if self.dim <= DENSE_CAP:
            self.evals, self.evecs = np.linalg.eigh(self.H.toarray())
        else:
            self.evals = self.evecs = None
        kick = kick_unitary(sector, params)
        self.kick_full = sp.kron(sp.csr_matrix(kick),
                                 sp.identity(self.basis.size, format="csr")).tocsr()
        self._env_gen = h_env  # reused for interaction-picture transforms

    def initial_state(self, spin_state: np.ndarray) -> np.ndarray:
        vac = np.zeros(self.basis.size, dtype=complex)
        vac[self.basis.index[(0,) * self.spec.M]] = 1.0
        return np.kron(np.asarray(spin_state, dtype=complex), vac)

    def _free_evolve(self, psi: np.ndarray, dt: float) -> np.ndarray:
        if self.evecs is not None:
            c = self.evecs.conj().T @ psi
            return self.evecs @ (np.exp(-1j * self.evals * dt) * c)
        return expmv(-1j * dt * self.H, psi)

    def evolve(self, psi: np.ndarray, t0: float, t1: float) -> np.ndarray:
        """Evolution over [t0, t1] with kicks at n*tau (n >= 1) applied
        when crossed, matching the engine's kick convention."""
        tau = self.params.tau
        eps = 1e-9
        n = int(np.floor(t0 / tau + eps)) + 1
        now = t0
        while n * tau <= t1 + eps:
            tk = n * tau
            if tk > now + eps:
                psi = self._free_evolve(psi, tk - now)
            psi = self.kick_full @ psi
            now = tk
            n += 1
        if t1 > now + eps:
            psi = self._free_evolve(psi, t1 - now)
        return psi

    def to_interaction_picture(self, psi: np.ndarray, t: float) -> np.ndarray:
        """Apply exp(+i t H_env) (second-quantized free chain)."""
        block = psi.reshape(self.sector.dim, self.basis.size)
        return expmv(1j * t * self._env_gen, block.T).T.reshape(-1)

    def jy_expectation(self, psi: np.ndarray) -> float:
        block = psi.reshape(self.sector.dim, self.basis.size)
        return float(np.einsum("if,ij,jf->", block.conj(), self.sector.Jy,
                               block).real)

    def energy(self, psi: np.ndarray) -> float:
        return float(np.real(np.vdot(psi, self.H @ psi)))


def exact_evolve(sector: SpinSector, params: KickedTopParams, spec: ChainSpec,
                 n_max: int, T: float, dt: float,
                 spin_state: np.ndarray) -> tuple[np.ndarray, np.ndarray, ExactModel]:
    """Reference evolution sampled on a uniform grid.

    Returns (times, states, model); states[i] is the full joint vector at
    times[i].
    """
    model = ExactModel(sector, params, spec, n_max)
    n_steps = int(round(T / dt))
    if abs(n_steps * dt - T) > 1e-9 * max(T, 1.0):
        raise ConfigError("T must be a multiple of dt")
    times = np.arange(n_steps + 1) * dt
    psi = model.initial_state(spin_state)
    states = np.empty((n_steps + 1, model.dim), dtype=complex)
    states[0] = psi
    for i in range(1, n_steps + 1):
        psi = model.evolve(psi, times[i - 1], times[i])
        states[i] = psi
    return times, states, model


def complete_frame(frame: np.ndarray) -> np.ndarray:
    """Extend orthonormal columns to a full unitary (frame columns first)."""
    M, r = frame.shape
    comp = np.eye(M, dtype=complex) - frame @ frame.conj().T
    u, s, _ = np.linalg.svd(comp)
    comp_basis = u[:, : M - r]
    if M > r and s[M - r - 1] < 0.5:
        raise NumericalError("could not complete the frame to a unitary")
    comp_basis = comp_basis - frame @ (frame.conj().T @ comp_basis)
    if comp_basis.shape[1]:
        comp_basis, _ = np.linalg.qr(comp_basis)
    return np.hstack([frame, comp_basis])


def lift_engine_state(ts: JointState, model: ExactModel) -> np.ndarray:
    """Engine state as a full-chain Fock vector (interaction picture)."""
    M = model.spec.M
    if ts.frame.shape[0] != M or ts.basis.n_max != model.n_max:
        raise ConfigError("engine state incompatible with the oracle model")
    big = model.basis
    emb = np.empty(ts.basis.size, dtype=np.int64)
    for i, s in enumerate(ts.basis.states):
        emb[i] = big.index[tuple(s) + (0,) * (M - ts.r)]
    block = np.zeros((ts.spin_dim, big.size), dtype=complex)
    block[:, emb] = ts.amplitudes
    if ts.r:
        V = complete_frame(ts.frame)
        X = big.quanta_transform(V)
        block = expmv(X, block.T).T
    return block.reshape(-1)


def engine_oracle_fidelity(ts: JointState, psi_exact: np.ndarray, t: float,
                           model: ExactModel) -> float:
    """|<engine|exact>| with both states in the interaction picture."""
    lifted = lift_engine_state(ts, model)
    exact_ip = model.to_interaction_picture(psi_exact, t)
    return float(np.abs(np.vdot(lifted, exact_ip)))


def reduced_compare(times_a: np.ndarray, jy_a: np.ndarray,
                    times_b: np.ndarray, jy_b: np.ndarray) -> float:
    """Sup over the common grid of |<Jy>_a - <Jy>_b|."""
    if times_a.shape != times_b.shape or np.max(np.abs(times_a - times_b)) > 1e-9:
        raise ConfigError("time grids do not match")
    return float(np.max(np.abs(np.asarray(jy_a) - np.asarray(jy_b))))


@dataclass(frozen=True)
class RecordProjectors:
    """Complete, exclusive projector set for one decoupling event.

    records holds the kept record states (columns, slot occupation
    basis); the orthogonal remainder of the slot is lumped into one
    'rest' alternative so the set sums to the identity.
    """

    t: float
    mode: np.ndarray        # chain-basis mode vector (interaction picture)
    records: np.ndarray     # (n_max+1, n_kept), orthonormal columns

    @property
    def n_alternatives(self) -> int:
        return self.records.shape[1] + 1


@dataclass(frozen=True)
class BranchProjectorSet:
    """Timestamped record projectors defining the history alternatives."""

    events: tuple[RecordProjectors, ...]

    def validate(self, tol: float = 1e-10) -> None:
        for ev in self.events:
            R = ev.records
            gram = R.conj().T @ R
            if np.max(np.abs(gram - np.eye(R.shape[1]))) > tol:
                raise NumericalError("record states are not orthonormal")


def _project_slot(block: np.ndarray, maps: tuple[np.ndarray, np.ndarray],
                  rest_size: int, n_levels: int,
                  slot_op: np.ndarray) -> np.ndarray:
    """Apply an (n_levels x n_levels) operator to the last Fock slot."""
    S = block.shape[0]
    rest_idx, nu = maps
    cube = np.zeros((S, rest_size, n_levels), dtype=complex)
    cube[:, rest_idx, nu] = block
    cube = cube @ slot_op.T
    return cube[:, rest_idx, nu]


def decoherence_functional(model: ExactModel, spin_state: np.ndarray,
                           projectors: BranchProjectorSet) -> np.ndarray:
    """D[alpha, beta] = Tr(C_alpha rho C_beta^dagger) for a pure initial state.

    Branches are propagated in the Schroedinger picture; at each record
    time the state is moved to the interaction picture, the record mode
    is rotated into a Fock slot, every alternative of the event projects
    its own copy, and evolution continues per branch.  The functional is
    the Gram matrix of the fully projected branches.
    """
    projectors.validate()
    events = sorted(projectors.events, key=lambda e: e.t)
    basis = model.basis
    n_levels = model.n_max + 1
    rest = get_basis(model.spec.M - 1, model.n_max)
    maps = _split_maps(basis)

    branches = {(): model.initial_state(spin_state)}
    now = 0.0
    for ev in events:
        if ev.t < now - 1e-9:
            raise ConfigError("projector timestamps must be nondecreasing")
        kappa = ev.mode / np.linalg.norm(ev.mode)
        W = complete_unitary(kappa)
        X = basis.quanta_transform(W.conj().T)
        Xb = (-X).tocsr()
        ops = [np.outer(ev.records[:, q], ev.records[:, q].conj())
               for q in range(ev.records.shape[1])]
        ops.append(np.eye(n_levels) - sum(ops))
        new_branches = {}
        for key, psi in branches.items():
            psi = model.evolve(psi, now, ev.t)
            psi_ip = model.to_interaction_picture(psi, ev.t)
            block = psi_ip.reshape(model.sector.dim, basis.size)
            block = expmv(X, block.T).T
            for q, op in enumerate(ops):
                projected = _project_slot(block, maps, rest.size, n_levels, op)
                back = expmv(Xb, projected.T).T
                psi_b = model.to_interaction_picture(
                    back.reshape(-1), -ev.t)
                new_branches[key + (q,)] = psi_b
        branches = new_branches
        now = ev.t
    keys = sorted(branches.keys())
    n = len(keys)
    D = np.empty((n, n), dtype=complex)
    for a, ka in enumerate(keys):
        for b, kb in enumerate(keys):
            D[a, b] = np.vdot(branches[kb], branches[ka])
    return D


def bundled_checks() -> dict:
    """Small-instance reference suite for the `oracle-check` subcommand."""
    from .chain import uniform_chain
    from .engine import EngineConfig, jy_zero_state
    from .histories import run_ensemble
    from .lightcone import (accumulate_windows, build_schedule,
                            default_checkpoints, propagate_one_particle)
    from .spin import build_spin_sector, floquet_operator

    checks = []

    # decoupled factorization: h_sys = 0 reduces to the bare kicked top
    sector = build_spin_sector(1.0)
    params = KickedTopParams(K=1.3)
    spec0 = uniform_chain(eps=0.6, hop=0.25, h_sys=0.0, M=2)
    model = ExactModel(sector, params, spec0, 4)
    psi0 = jy_zero_state(sector)
    psi = model.evolve(model.initial_state(psi0), 0.0, 3.0)
    ref = np.linalg.matrix_power(floquet_operator(sector, params), 3) @ psi0
    vac = model.basis.index[(0, 0)]
    dev = abs(abs(np.vdot(ref, psi.reshape(sector.dim, -1)[:, vac])) - 1.0)
    checks.append({"name": "decoupled_factorization", "deviation": dev,
                   "tolerance": 1e-10, "passed": bool(dev < 1e-10)})

    # energy conservation under a time-independent Hamiltonian (K=0, p=0)
    params0 = KickedTopParams(K=0.0, p=0.0)
    spec1 = uniform_chain(eps=0.8, hop=0.0, h_sys=0.2, M=1)
    model1 = ExactModel(sector, params0, spec1, 6)
    psi = model1.initial_state(psi0)
    e0 = model1.energy(psi)
    dev = abs(model1.energy(model1.evolve(psi, 0.0, 7.0)) - e0)
    checks.append({"name": "energy_conservation", "deviation": dev,
                   "tolerance": 1e-8, "passed": bool(dev < 1e-8)})

    # engine vs oracle on the desk-scale instance (threshold sent to zero)
    n_max, T = 6, 5.0
    spec2 = uniform_chain(eps=1.0, hop=0.2, h_sys=0.05, M=3)
    traj = propagate_one_particle(spec2, T, 0.01, enforce_front=False)
    wd = accumulate_windows(traj, default_checkpoints(traj))
    sched = build_schedule(wd, a_cut=1e-10)
    config = EngineConfig(dt=0.01, n_max=n_max, a_cut=1e-10)
    times = np.arange(0, 21) * 0.25
    h = run_ensemble(config, sector, params, spec2, sched, traj, n_traj=1,
                     sample_times=times, collapse_enabled=False)[0]
    t_ex, states, model2 = exact_evolve(sector, params, spec2, n_max, T, 0.25,
                                        jy_zero_state(sector))
    jy_ex = np.array([model2.jy_expectation(s) for s in states])
    dev = reduced_compare(h.jy_times, h.jy_values, t_ex, jy_ex)
    checks.append({"name": "reduced_dynamics", "deviation": dev,
                   "tolerance": 1e-5, "passed": bool(dev < 1e-5)})

    return {"checks": checks, "all_passed": bool(all(c["passed"] for c in checks))}
