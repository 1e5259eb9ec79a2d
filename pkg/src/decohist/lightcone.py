"""One-particle light-cone propagation and the coupled/decoupled schedule.

The interaction operator spreads over the chain as a one-particle
wavefunction phi(t) with phi_k(0) = delta_k0.  Time-averaging the
projector |phi><phi| over the past window [0, t] gives rho_plus(t) and
over the future window [t, T] gives rho_minus(t); their quadratic forms
are the time-averaged interaction intensities of arbitrary modes.  Modes
enter the light cone when an eigenvalue of rho_plus crosses the
significance threshold a_cut, and a coupled mode irreversibly decouples
when its future intensity in rho_minus falls below a_cut.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import eigh_tridiagonal

from .chain import ChainSpec
from .errors import ConfigError, ChainTooShortError, NumericalError
from .linalg import fix_phase, complete_unitary, orthonormalize_against

DEFAULT_A_CUT = 1e-4
FRONT_TOL = 1e-6


@dataclass(frozen=True)
class OneParticleTrajectory:
    """phi_k(t_i) on a uniform grid plus the exact spectral propagator."""

    times: np.ndarray           # t_0 = 0 ... t_G = T, uniform step dt
    phi: np.ndarray             # shape (G+1, M)
    evals: np.ndarray           # eigenvalues of the one-particle matrix
    evecs: np.ndarray           # orthonormal eigenvectors (columns)

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0])

    @property
    def horizon(self) -> float:
        return float(self.times[-1])

    @property
    def M(self) -> int:
        return self.phi.shape[1]

    def phi_at(self, t: float) -> np.ndarray:
        """Exact phi(t) for arbitrary t from the eigendecomposition."""
        return self.evecs @ (np.exp(-1j * self.evals * t) * self.evecs[0, :])


def propagate_one_particle(spec: ChainSpec, T: float, dt: float,
                           enforce_front: bool = True) -> OneParticleTrajectory:
    """Solve i d(phi)/dt = H1 phi with phi(0) = e0 on a uniform grid.

    Uses the exact spectral propagator of the real symmetric tridiagonal
    one-particle matrix, so the norm is preserved to eigensolve accuracy.
    With enforce_front the run aborts when the wavefront reaches the last
    chain site (the chain is too short for the horizon); disable it for
    small closed chains where reflection is physical.
    """
    if dt <= 0:
        raise ConfigError(f"dt must be positive, got {dt}")
    if T < dt:
        raise ConfigError(f"horizon T={T} must be at least dt={dt}")
    n_steps = int(round(T / dt))
    if abs(n_steps * dt - T) > 1e-9 * max(T, 1.0):
        raise ConfigError(f"horizon T={T} must be a multiple of dt={dt}")
    times = np.arange(n_steps + 1) * dt
    if spec.M == 1:
        evals = spec.eps.copy()
        evecs = np.ones((1, 1))
    else:
        evals, evecs = eigh_tridiagonal(spec.eps, spec.hop)
    # phi(t) = V exp(-i L t) V^T e0
    c0 = evecs[0, :]
    phases = np.exp(-1j * np.outer(times, evals))
    phi = (phases * c0) @ evecs.T
    if enforce_front and spec.M > 1:
        front = np.max(np.abs(phi[:, -1]))
        if front > FRONT_TOL:
            raise ChainTooShortError(
                f"wavefront amplitude {front:.2e} at the last site; "
                "increase the chain length M")
    return OneParticleTrajectory(times=times, phi=phi, evals=evals, evecs=evecs)


def instant_otoc(traj: OneParticleTrajectory, j: int, t: float) -> float:
    """Instant interaction intensity C_j(t) = |phi_j(t)|^2."""
    if not 0 <= j < traj.M:
        raise ConfigError(f"site index {j} out of range")
    i = int(round(t / traj.dt))
    if i < 0 or i >= traj.times.size or abs(traj.times[i] - t) > 1e-9 * max(t, 1.0):
        raise ConfigError(f"time {t} is not on the trajectory grid")
    return float(np.abs(traj.phi[i, j]) ** 2)


class WindowedDensity:
    """Past/future time-averaged densities rho_plus / rho_minus.

    rho_plus(t) = int_0^t |phi><phi| dtau (trapezoidal rule on the grid),
    rho_minus(t) = rho_plus(T) - rho_plus(t).  Matrices are stored per
    checkpoint, restricted to the active window of sites that carry
    accumulated weight above 1e-14.
    """

    ACTIVE_TOL = 1e-14

    def __init__(self, traj: OneParticleTrajectory, checkpoints: np.ndarray,
                 blocks: list[np.ndarray], cp_grid: np.ndarray,
                 rho_total: np.ndarray):
        self.traj = traj
        self.checkpoints = checkpoints
        self.cp_grid = cp_grid        # grid indices of the checkpoints
        self._blocks = blocks
        self.rho_total = rho_total    # rho_plus(T), final active window
        self.horizon = traj.horizon

    @property
    def active_size(self) -> int:
        return self.rho_total.shape[0]

    def _cp_index(self, t: float) -> int:
        i = int(np.searchsorted(self.checkpoints, t))
        for k in (i, i - 1):
            if 0 <= k < self.checkpoints.size and \
                    abs(self.checkpoints[k] - t) <= 1e-9 * max(abs(t), 1.0):
                return k
        raise ConfigError(f"time {t} is not a checkpoint")

    def rho_plus(self, t: float) -> np.ndarray:
        return self._blocks[self._cp_index(t)]

    def rho_minus(self, t: float) -> np.ndarray:
        blk = self._blocks[self._cp_index(t)]
        n = self.active_size
        out = self.rho_total.copy()
        out[: blk.shape[0], : blk.shape[0]] -= blk
        return out

    def rho_plus_at_grid(self, g: int) -> np.ndarray:
        """rho_plus at an arbitrary grid index (checkpoint + partial sum)."""
        ci = int(np.searchsorted(self.cp_grid, g, side="right")) - 1
        if ci < 0:
            raise ConfigError("grid index precedes the first checkpoint")
        base_g = int(self.cp_grid[ci])
        blk = self._blocks[ci]
        if g == base_g:
            return blk
        phi = self.traj.phi
        dt = self.traj.dt
        n = min(self._active_at_grid(g), self.active_size)
        out = np.zeros((n, n), dtype=complex)
        out[: blk.shape[0], : blk.shape[0]] = blk
        for i in range(base_g, g):
            a = phi[i, :n]
            b = phi[i + 1, :n]
            out += (dt / 2.0) * (np.outer(a, a.conj()) + np.outer(b, b.conj()))
        return out

    def rho_minus_at_grid(self, g: int) -> np.ndarray:
        blk = self.rho_plus_at_grid(g)
        out = self.rho_total.copy()
        out[: blk.shape[0], : blk.shape[0]] -= blk
        return out

    def _active_at_grid(self, g: int) -> int:
        w = np.max(np.abs(self.traj.phi[: g + 1, :]), axis=0)
        nz = np.nonzero(w ** 2 * self.traj.horizon > self.ACTIVE_TOL)[0]
        return int(nz[-1]) + 1 if nz.size else 1

    def quadratic_minus(self, kappa: np.ndarray, g: int) -> float:
        """<kappa| rho_minus(t_g) |kappa> at grid index g."""
        n = self.active_size
        k = kappa[:n]
        return float(np.real(k.conj() @ self.rho_minus_at_grid(g) @ k))


def accumulate_windows(traj: OneParticleTrajectory,
                       checkpoints: np.ndarray) -> WindowedDensity:
    """Trapezoidal accumulation of |phi><phi| up to each checkpoint."""
    times = traj.times
    dt = traj.dt
    checkpoints = np.asarray(checkpoints, dtype=float)
    cp_grid = np.array([int(round(t / dt)) for t in checkpoints])
    if np.any(cp_grid < 0) or np.any(cp_grid >= times.size):
        raise ConfigError("checkpoints must lie on the trajectory grid")
    if np.any(np.abs(times[cp_grid] - checkpoints) > 1e-9 * max(traj.horizon, 1.0)):
        raise ConfigError("checkpoints must lie on the trajectory grid")
    order = np.argsort(cp_grid)
    cp_grid = cp_grid[order]
    checkpoints = times[cp_grid]

    M = traj.M
    acc = np.zeros((M, M), dtype=complex)
    blocks: list[np.ndarray] = []
    maxamp = np.zeros(M)
    prev_outer = np.outer(traj.phi[0], traj.phi[0].conj())
    maxamp = np.maximum(maxamp, np.abs(traj.phi[0]))
    gi = 0
    horizon = traj.horizon
    cp_iter = list(cp_grid)
    next_cp = 0

    def snapshot():
        nz = np.nonzero(maxamp ** 2 * max(horizon, 1.0) > WindowedDensity.ACTIVE_TOL)[0]
        n = int(nz[-1]) + 1 if nz.size else 1
        blocks.append(acc[:n, :n].copy())

    while next_cp < len(cp_iter) and cp_iter[next_cp] == 0:
        snapshot()
        next_cp += 1
    for gi in range(1, times.size):
        cur = np.outer(traj.phi[gi], traj.phi[gi].conj())
        acc += (dt / 2.0) * (prev_outer + cur)
        prev_outer = cur
        maxamp = np.maximum(maxamp, np.abs(traj.phi[gi]))
        while next_cp < len(cp_iter) and cp_iter[next_cp] == gi:
            snapshot()
            next_cp += 1
        if next_cp >= len(cp_iter) and gi == times.size - 1:
            break
    nz = np.nonzero(maxamp ** 2 * max(horizon, 1.0) > WindowedDensity.ACTIVE_TOL)[0]
    n_final = int(nz[-1]) + 1 if nz.size else 1
    rho_total = acc[:n_final, :n_final].copy()
    return WindowedDensity(traj=traj, checkpoints=checkpoints, blocks=blocks,
                           cp_grid=cp_grid, rho_total=rho_total)


@dataclass(frozen=True)
class InEvent:
    """A mode crossing into the light cone at time t."""
    t: float
    kappa: np.ndarray  # unit M-vector in the chain-site basis


@dataclass(frozen=True)
class OutEvent:
    """A coupled mode irreversibly decoupling at time t."""
    t: float
    kappa: np.ndarray


@dataclass
class LightConeSchedule:
    """Time-stamped coupled/decoupled events and the relevant frame."""

    a_cut: float
    horizon: float
    in_events: list[InEvent]
    out_events: list[OutEvent]
    frames: list[tuple[float, np.ndarray]] = field(default_factory=list)

    def m_in(self, t: float) -> int:
        return sum(1 for e in self.in_events if e.t <= t)

    def m_out(self, t: float) -> int:
        return sum(1 for e in self.out_events if e.t <= t)

    def r(self, t: float) -> int:
        return self.m_in(t) - self.m_out(t)

    def relevant_frame(self, t: float) -> np.ndarray:
        """Orthonormal M x r(t) matrix of the currently relevant modes."""
        best = self.frames[0][1]
        for tf, fr in self.frames:
            if tf <= t + 1e-12:
                best = fr
            else:
                break
        return best

    def merged_events(self) -> list[tuple[float, str, object]]:
        """All events time-ordered; in-events precede out-events on ties."""
        tagged = [(e.t, 0, "in", e) for e in self.in_events] + \
                 [(e.t, 1, "out", e) for e in self.out_events]
        tagged.sort(key=lambda x: (x[0], x[1]))
        return [(t, kind, ev) for t, _, kind, ev in tagged]


def _pad(v: np.ndarray, n: int) -> np.ndarray:
    if v.size >= n:
        return v[:n]
    out = np.zeros(n, dtype=complex)
    out[: v.size] = v
    return out


def coupled_mode_schedule(wd: WindowedDensity, a_cut: float) -> list[InEvent]:
    """In-events from the eigenvalue crossings of rho_plus(t).

    m_in(t) counts eigenvalues above a_cut; each unit increase emits an
    event whose mode is the newly crossed eigenvector, orthonormalized
    against all previously recorded modes (earlier modes stay frozen).
    Crossing times are refined by bisection on the propagation grid.
    """
    if a_cut <= 0:
        raise ConfigError(f"a_cut must be positive, got {a_cut}")
    M = wd.traj.M
    events: list[InEvent] = []
    basis: np.ndarray | None = None
    m_in = 0
    prev_g = int(wd.cp_grid[0])

    def count_above(g: int) -> int:
        return int(np.sum(np.linalg.eigvalsh(wd.rho_plus_at_grid(g)) > a_cut))

    for ci, g in enumerate(wd.cp_grid):
        g = int(g)
        n_now = count_above(g)
        while n_now > m_in:
            target = m_in + 1
            lo, hi = prev_g, g
            while hi - lo > 1:
                mid = (lo + hi) // 2
                if count_above(mid) >= target:
                    hi = mid
                else:
                    lo = mid
            t_ref = wd.traj.times[hi]
            rho = wd.rho_plus_at_grid(hi)
            evals, evecs = np.linalg.eigh(rho)
            # eigh is ascending; the newly crossed mode is the target-th
            # from the top
            vec = evecs[:, evals.size - target]
            vec = _pad(vec, M)
            vec = orthonormalize_against(vec, basis)
            vec = fix_phase(vec)
            basis = vec[:, None] if basis is None else np.hstack([basis, vec[:, None]])
            events.append(InEvent(t=float(t_ref), kappa=vec))
            m_in += 1
        prev_g = g
    return events


def decoupled_mode_schedule(wd: WindowedDensity, in_events: list[InEvent],
                            a_cut: float) -> list[OutEvent]:
    """Out-events: relevant-frame eigenvectors of rho_minus below a_cut.

    At each checkpoint the future density is projected on the span of the
    currently coupled, not yet decoupled modes; eigenvectors whose future
    intensity drops below a_cut decouple (times refined by bisection on
    the grid, ascending-eigenvalue order on ties).
    """
    if a_cut <= 0:
        raise ConfigError(f"a_cut must be positive, got {a_cut}")
    M = wd.traj.M
    n = wd.active_size
    dt = wd.traj.dt
    events: list[OutEvent] = []
    active: list[np.ndarray] = []          # relevant modes, M-vectors
    entry_g: list[int] = []                # earliest admissible out grid index
    pending = sorted(in_events, key=lambda e: e.t)
    pi = 0
    prev_g = int(wd.cp_grid[0])
    for ci, g in enumerate(wd.cp_grid):
        g = int(g)
        t_cp = float(wd.checkpoints[ci])
        while pi < len(pending) and pending[pi].t <= t_cp + 1e-12:
            active.append(pending[pi].kappa)
            entry_g.append(int(round(pending[pi].t / dt)))
            pi += 1
        if active:
            K = np.stack(active, axis=1)[:n, :]
            rho_m = wd.rho_minus_at_grid(g)
            A = K.conj().T @ rho_m @ K
            evals, evecs = np.linalg.eigh(A)
            out_idx = np.nonzero(evals < a_cut)[0]
            if out_idx.size:
                keep_idx = np.nonzero(evals >= a_cut)[0]
                full = np.stack(active, axis=1)  # M x r

                def latest_entry(coeffs):
                    used = np.nonzero(np.abs(coeffs) > 1e-10)[0]
                    return max(entry_g[j] for j in used)

                new_events = []
                for q in out_idx:  # ascending eigenvalue order
                    mode = fix_phase(full @ evecs[:, q])
                    # refine: earliest grid time where the future intensity
                    # of this (fixed) mode falls below a_cut, never before
                    # the latest in-event it involves
                    lo = max(prev_g, latest_entry(evecs[:, q]))
                    hi = g
                    if lo >= hi or wd.quadratic_minus(mode, lo) < a_cut:
                        hi = lo if lo > prev_g else hi
                    else:
                        while hi - lo > 1:
                            mid = (lo + hi) // 2
                            if wd.quadratic_minus(mode, mid) < a_cut:
                                hi = mid
                            else:
                                lo = mid
                    new_events.append(OutEvent(t=float(wd.traj.times[hi]),
                                               kappa=mode))
                new_events.sort(key=lambda e: e.t)
                events.extend(new_events)
                active = [full @ evecs[:, q] for q in keep_idx]
                entry_g = [latest_entry(evecs[:, q]) for q in keep_idx]
        prev_g = g
    return events


def build_schedule(wd: WindowedDensity, a_cut: float = DEFAULT_A_CUT) -> LightConeSchedule:
    """Full coupled/decoupled schedule with piecewise relevant frames."""
    in_events = coupled_mode_schedule(wd, a_cut)
    out_events = decoupled_mode_schedule(wd, in_events, a_cut)
    sched = LightConeSchedule(a_cut=a_cut, horizon=wd.horizon,
                              in_events=in_events, out_events=out_events)
    M = wd.traj.M
    frame = np.zeros((M, 0), dtype=complex)
    frames = [(0.0, frame)]
    for t, kind, ev in sched.merged_events():
        if kind == "in":
            frame = np.hstack([frame, ev.kappa[:, None]])
        else:
            c = frame.conj().T @ ev.kappa
            nrm = np.linalg.norm(c)
            if nrm < 1.0 - 1e-6:
                raise NumericalError(
                    "decoupled mode leaves the span of the coupled modes")
            W = complete_unitary(c / nrm)
            frame = frame @ W[:, :-1]
        if frames and abs(frames[-1][0] - t) < 1e-12:
            frames[-1] = (t, frame)
        else:
            frames.append((t, frame))
    sched.frames = frames
    return sched


def default_checkpoints(traj: OneParticleTrajectory, stride: int = 10) -> np.ndarray:
    """Every stride-th grid time, always including the horizon."""
    idx = np.arange(0, traj.times.size, stride)
    if idx[-1] != traj.times.size - 1:
        idx = np.append(idx, traj.times.size - 1)
    return traj.times[idx]
