"""Quantum-jump histories from recursive Schmidt splits at decoupling times.

Every irreversible decoupling event produces a stable record: the joint
state is Schmidt-decomposed between (spin x remaining relevant modes) and
the outgoing mode, one outcome is sampled from the squared Schmidt
weights, the state collapses to the matching branch and the Shannon
entropy of the weight distribution is the entropy increment of the jump.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .chain import ChainSpec
from .engine import (EngineConfig, JointState, check_cap_leakage,
                     init_joint, jy_zero_state, propagate_amplitudes)
from .errors import ConfigError, NumericalError
from .fock import FockBasis, get_basis
from .lightcone import LightConeSchedule, OneParticleTrajectory, WindowedDensity
from .linalg import complete_unitary, expmv
from .spin import KickedTopParams, SpinSector

SCHMIDT_FLOOR = 1e-12   # singular values below this are numerical noise
MIN_BRANCH_PROB = 1e-14


@dataclass(frozen=True)
class JumpRecord:
    """One quantum jump: outcome, weight distribution, entropy increment."""

    k: int
    t_out: float
    outcome: int
    probs: np.ndarray          # Schmidt weights, descending, sum 1
    delta_S: float
    schmidt_rank: int
    record_states: np.ndarray  # (rank, n_max+1) out-slot record vectors


@dataclass(frozen=True)
class History:
    """One trajectory's ordered jump records and observable series."""

    seed: int
    records: tuple[JumpRecord, ...]
    jy_times: np.ndarray
    jy_values: np.ndarray

    @property
    def log_prob(self) -> float:
        return float(sum(np.log(r.probs[r.outcome]) for r in self.records))

    @property
    def total_delta_S(self) -> float:
        return float(sum(r.delta_S for r in self.records))


@dataclass(frozen=True)
class EnsembleStats:
    """Per-jump entropy statistics over an ensemble of histories."""

    mean_delta_S: float
    total_entropy: float
    jump_probs: np.ndarray  # all Schmidt weights over all jumps, flattened
    n_jumps: int


@dataclass(frozen=True)
class SchmidtSplit:
    """Result of splitting a joint state across an outgoing mode."""

    probs: np.ndarray          # descending, sum 1
    branches: np.ndarray       # (rank, spin_dim, rest_size), orthonormal
    records: np.ndarray        # (rank, n_max+1) record states of the out slot
    new_frame: np.ndarray      # relevant frame without the out mode
    rest_basis: FockBasis
    rank: int


_SPLIT_MAPS: dict[tuple[int, int], tuple[np.ndarray, np.ndarray]] = {}


def _split_maps(basis: FockBasis) -> tuple[np.ndarray, np.ndarray]:
    """(rest_index, last_occupation) arrays for regrouping by the last slot."""
    key = (basis.r, basis.n_max)
    if key not in _SPLIT_MAPS:
        rest = get_basis(basis.r - 1, basis.n_max)
        rest_idx = np.array([rest.index[tuple(s[:-1])] for s in basis.states])
        nu = basis.states[:, -1].copy()
        _SPLIT_MAPS[key] = (rest_idx, nu)
    return _SPLIT_MAPS[key]


def delta_entropy(probs: np.ndarray) -> float:
    """Shannon entropy -sum p ln p of a jump distribution (nats)."""
    p = np.asarray(probs, dtype=float)
    if np.any(p < -1e-12) or abs(p.sum() - 1.0) > 1e-8:
        raise ConfigError("probs must form a distribution")
    p = p[p > 0]
    return float(-np.sum(p * np.log(p)))


def sample_jump(probs: np.ndarray, rng: np.random.Generator) -> int:
    """Draw an outcome index from the jump distribution (seeded, stable)."""
    cum = np.cumsum(np.asarray(probs, dtype=float))
    if abs(cum[-1] - 1.0) > 1e-8:
        raise ConfigError("probs must sum to one")
    u = rng.random()
    return int(min(np.searchsorted(cum, u, side="right"), probs.size - 1))


def _rotation_to_out_slot(frame: np.ndarray, basis: FockBasis,
                          out_mode: np.ndarray) -> tuple[np.ndarray, object]:
    """Unitary W (last column = out mode coords) and the Fock generator."""
    c = frame.conj().T @ out_mode
    nrm = float(np.linalg.norm(c))
    if nrm < 1.0 - 1e-6:
        raise NumericalError(
            f"outgoing mode has only weight {nrm:.6f} inside the relevant frame")
    W = complete_unitary(c / nrm)
    X = basis.quanta_transform(W.conj().T)
    return W, X


def schmidt_split(ts: JointState, out_mode: np.ndarray,
                  wd: WindowedDensity | None = None,
                  a_cut: float | None = None) -> SchmidtSplit:
    """Schmidt decomposition between (spin x rest) and the outgoing mode.

    The Fock frame is rotated so the outgoing mode occupies the last slot
    (an exact number-conserving unitary on the truncated space), then the
    amplitude tensor is regrouped by the occupation of that slot and
    SVD-factorized.  Weights are the squared singular values.
    """
    if ts.r < 1:
        raise ConfigError("no relevant modes to split off")
    if wd is not None and a_cut is not None:
        res = wd.quadratic_minus(out_mode,
                                 int(round(ts.time / wd.traj.dt)))
        if res >= a_cut:
            raise NumericalError(
                f"outgoing mode still couples (residual {res:.3e} >= {a_cut:.1e})")
    W, X = _rotation_to_out_slot(ts.frame, ts.basis, out_mode)
    amps_rot = expmv(X, ts.amplitudes.T).T
    rest_basis = get_basis(ts.r - 1, ts.basis.n_max)
    rest_idx, nu = _split_maps(ts.basis)
    S = ts.spin_dim
    cube = np.zeros((S, rest_basis.size, ts.basis.n_max + 1), dtype=complex)
    cube[:, rest_idx, nu] = amps_rot
    A = cube.reshape(S * rest_basis.size, ts.basis.n_max + 1)
    u, s, vh = np.linalg.svd(A, full_matrices=False)
    keep = s > SCHMIDT_FLOOR
    u, s, vh = u[:, keep], s[keep], vh[keep, :]
    probs = s * s
    probs = probs / probs.sum()
    branches = u.T.reshape(-1, S, rest_basis.size)
    new_frame = (ts.frame @ W)[:, :-1]
    if abs(probs.sum() - 1.0) > 1e-10:
        raise NumericalError("Schmidt weights do not sum to one")
    return SchmidtSplit(probs=probs, branches=branches, records=vh.copy(),
                        new_frame=new_frame, rest_basis=rest_basis,
                        rank=int(probs.size))


def collapse(ts: JointState, split: SchmidtSplit, q: int) -> JointState:
    """Replace the state by branch q, dropping the measured mode."""
    if not 0 <= q < split.rank:
        raise ConfigError(f"outcome {q} out of range")
    if split.probs[q] < MIN_BRANCH_PROB:
        raise ConfigError(f"branch {q} is numerically empty (p={split.probs[q]:.2e})")
    amps = split.branches[q]
    amps = amps / np.linalg.norm(amps)
    return replace(ts, basis=split.rest_basis, amplitudes=amps,
                   frame=split.new_frame)


def trajectory_rng(master_seed: int, index: int) -> np.random.Generator:
    """Independent, platform-stable stream per (master_seed, trajectory)."""
    return np.random.Generator(
        np.random.PCG64(np.random.SeedSequence(entropy=master_seed,
                                               spawn_key=(index,))))


def run_ensemble(config: EngineConfig, sector: SpinSector,
                 params: KickedTopParams, spec: ChainSpec,
                 schedule: LightConeSchedule, traj: OneParticleTrajectory,
                 n_traj: int = 1, spin_state: np.ndarray | None = None,
                 sample_times: np.ndarray | None = None,
                 collapse_enabled: bool = True,
                 wd: WindowedDensity | None = None,
                 chunk_size: int = 100) -> list[History]:
    """Sample n_traj histories in lockstep batches.

    All trajectories share the schedule-determined frames, bases, kick
    times and step propagators; only the sampled outcomes differ, so they
    are propagated as one batched amplitude tensor.  Each trajectory owns
    an independent RNG stream derived from (config.seed, index), making
    the results identical to running the trajectories one at a time.
    """
    out: list[History] = []
    for start in range(0, n_traj, chunk_size):
        size = min(chunk_size, n_traj - start)
        out.extend(_run_chunk(config, sector, params, spec, schedule, traj,
                              start, size, spin_state, sample_times,
                              collapse_enabled, wd))
    return out


def _run_chunk(config, sector, params, spec, schedule, traj, first_index,
               size, spin_state, sample_times, collapse_enabled, wd):
    if spin_state is None:
        spin_state = jy_zero_state(sector)
    horizon = schedule.horizon
    if sample_times is None:
        sample_times = np.array([horizon])
    sample_times = np.asarray(sample_times, dtype=float)

    rngs = [trajectory_rng(config.seed, first_index + i) for i in range(size)]
    proto = init_joint(sector, spin_state, config.n_max, traj.M)
    basis = proto.basis
    frame = proto.frame
    amps = np.broadcast_to(proto.amplitudes, (size,) + proto.amplitudes.shape).copy()

    events = [(t, kind, ev) for (t, kind, ev) in schedule.merged_events()
              if t <= horizon + 1e-9]
    points = sorted(set([float(t) for t, _, _ in events]) |
                    set(float(t) for t in sample_times) | {float(horizon)})
    records: list[list[JumpRecord]] = [[] for _ in range(size)]
    jy_vals: list[list[float]] = [[] for _ in range(size)]
    jy_times: list[float] = []
    jump_counter = 0
    now = 0.0
    ev_ptr = 0

    def sample_jy():
        vals = np.einsum("bif,ij,bjf->b", amps.conj(), sector.Jy, amps).real
        for i in range(size):
            jy_vals[i].append(float(vals[i]))

    if np.any(np.abs(sample_times - 0.0) < 1e-12):
        jy_times.append(0.0)
        sample_jy()

    for t in points:
        if t <= 1e-12:
            continue
        amps = propagate_amplitudes(amps, now, t, frame, basis, sector,
                                    params, spec, traj, config)
        check_cap_leakage(amps, basis, config.leak_tol)
        now = t
        if np.any(np.abs(sample_times - t) < 1e-9):
            jy_times.append(t)
            sample_jy()
        while ev_ptr < len(events) and events[ev_ptr][0] <= t + 1e-12:
            _, kind, ev = events[ev_ptr]
            ev_ptr += 1
            if kind == "in":
                new_basis = get_basis(basis.r + 1, config.n_max)
                if new_basis.r > config.max_modes:
                    raise ConfigError(
                        f"relevant mode count exceeds max_modes={config.max_modes}")
                emb = basis.embed_map(new_basis)
                grown = np.zeros(amps.shape[:-1] + (new_basis.size,), dtype=complex)
                grown[..., emb] = amps
                amps = grown
                frame = np.hstack([frame, ev.kappa[:, None]])
                basis = new_basis
            elif collapse_enabled:
                jump_counter += 1
                state0 = JointState(time=now, spin_dim=sector.dim, basis=basis,
                                    amplitudes=amps[0], frame=frame)
                split0 = schmidt_split(state0, ev.kappa, wd=wd,
                                       a_cut=schedule.a_cut if wd is not None else None)
                rest = split0.rest_basis
                new_amps = np.zeros((size, sector.dim, rest.size), dtype=complex)
                for b in range(size):
                    if b == 0:
                        split = split0
                    else:
                        split = schmidt_split(
                            JointState(time=now, spin_dim=sector.dim,
                                       basis=basis, amplitudes=amps[b],
                                       frame=frame), ev.kappa)
                    q = sample_jump(split.probs, rngs[b])
                    dS = delta_entropy(split.probs)
                    records[b].append(JumpRecord(
                        k=jump_counter, t_out=now, outcome=q,
                        probs=split.probs, delta_S=dS, schmidt_rank=split.rank,
                        record_states=split.records))
                    branch = split.branches[q]
                    new_amps[b] = branch / np.linalg.norm(branch)
                amps = new_amps
                frame = split0.new_frame
                basis = rest

    out = []
    for i in range(size):
        out.append(History(seed=first_index + i,
                           records=tuple(records[i]),
                           jy_times=np.array(jy_times),
                           jy_values=np.array(jy_vals[i])))
    return out


def run_trajectory(config: EngineConfig, sector: SpinSector,
                   params: KickedTopParams, spec: ChainSpec,
                   schedule: LightConeSchedule, traj: OneParticleTrajectory,
                   spin_state: np.ndarray | None = None,
                   sample_times: np.ndarray | None = None,
                   wd: WindowedDensity | None = None) -> History:
    """One sampled history (ensemble of size one, stream index 0)."""
    return run_ensemble(config, sector, params, spec, schedule, traj,
                        n_traj=1, spin_state=spin_state,
                        sample_times=sample_times, wd=wd)[0]


def ensemble_stats(histories: list[History]) -> EnsembleStats:
    """Per-jump entropy average and the sampled-path entropy estimate.

    The ensemble entropy -sum_h P(h) ln P(h) is estimated as the mean
    over sampled histories of the summed conditional jump entropies,
    never by enumerating the exponentially many histories.
    """
    if not histories:
        raise ConfigError("need at least one history")
    all_dS = [r.delta_S for h in histories for r in h.records]
    all_probs = (np.concatenate([r.probs for h in histories for r in h.records])
                 if all_dS else np.zeros(0))
    n_jumps = len(all_dS)
    mean_dS = float(np.mean(all_dS)) if n_jumps else 0.0
    total = float(np.mean([h.total_delta_S for h in histories]))
    return EnsembleStats(mean_delta_S=mean_dS, total_entropy=total,
                         jump_probs=all_probs, n_jumps=n_jumps)


def mean_p_max(histories: list[History]) -> float:
    """Average over jumps of the largest Schmidt weight."""
    vals = [float(r.probs[0]) for h in histories for r in h.records]
    if not vals:
        raise ConfigError("no jumps recorded")
    return float(np.mean(vals))
