"""Truncated multi-mode bosonic Fock space with a global quanta cap."""

from __future__ import annotations

from functools import lru_cache
from math import comb

import numpy as np
import scipy.sparse as sp

from .errors import ConfigError


def _enumerate_states(r: int, n_max: int) -> np.ndarray:
    """All occupation tuples (n_1..n_r) with sum <= n_max, lexicographic."""
    if r == 0:
        return np.zeros((1, 0), dtype=np.int64)
    states = []

    def rec(prefix, remaining, slots):
        if slots == 0:
            states.append(tuple(prefix))
            return
        for n in range(remaining + 1):
            rec(prefix + [n], remaining - n, slots - 1)

    rec([], n_max, r)
    return np.array(states, dtype=np.int64)


class FockBasis:
    """Occupation basis of r modes truncated at n_max total quanta."""

    def __init__(self, r: int, n_max: int):
        if r < 0:
            raise ConfigError(f"mode count must be >= 0, got {r}")
        if n_max < 1:
            raise ConfigError(f"n_max must be >= 1, got {n_max}")
        self.r = r
        self.n_max = n_max
        self.states = _enumerate_states(r, n_max)
        self.size = self.states.shape[0]
        assert self.size == comb(r + n_max, n_max)
        self.index = {tuple(s): i for i, s in enumerate(self.states)}
        self.totals = self.states.sum(axis=1) if r else np.zeros(1, dtype=np.int64)
        self._ann: dict[int, sp.csr_matrix] = {}

    def annihilation(self, slot: int) -> sp.csr_matrix:
        """Sparse a_slot in this basis: <n - e_slot| a |n> = sqrt(n_slot)."""
        if not 0 <= slot < self.r:
            raise ConfigError(f"slot {slot} out of range for r={self.r}")
        if slot not in self._ann:
            rows, cols, vals = [], [], []
            for i, s in enumerate(self.states):
                n = s[slot]
                if n > 0:
                    t = s.copy()
                    t[slot] -= 1
                    rows.append(self.index[tuple(t)])
                    cols.append(i)
                    vals.append(np.sqrt(float(n)))
            self._ann[slot] = sp.csr_matrix(
                (vals, (rows, cols)), shape=(self.size, self.size), dtype=complex)
        return self._ann[slot]

    def cap_mask(self) -> np.ndarray:
        """Boolean mask of states saturating the total-quanta cap."""
        return self.totals == self.n_max

    def embed_map(self, larger: "FockBasis") -> np.ndarray:
        """Index map sending state n of self to (n, 0) in a basis with r+1 modes."""
        if larger.r != self.r + 1 or larger.n_max != self.n_max:
            raise ConfigError("target basis must have one extra mode, same cap")
        out = np.empty(self.size, dtype=np.int64)
        for i, s in enumerate(self.states):
            out[i] = larger.index[tuple(s) + (0,)]
        return out

    def quanta_transform(self, W: np.ndarray) -> sp.csr_matrix:
        """Generator X = sum_ij xi_ij a_i^dag a_j with e^xi = W.

        exp(X) acts exactly as W on the one-particle sector and
        multiplicatively on higher sectors (a linear-optics rotation).
        Number is conserved, so the total-quanta cap subspace is
        invariant and the transform stays exactly unitary after
        truncation.
        """
        from scipy.linalg import logm
        xi = logm(np.asarray(W, dtype=complex))
        X = sp.csr_matrix((self.size, self.size), dtype=complex)
        for i in range(self.r):
            ai_dag = self.annihilation(i).conj().T
            for j in range(self.r):
                if abs(xi[i, j]) > 1e-15:
                    X = X + xi[i, j] * (ai_dag @ self.annihilation(j))
        return X.tocsr()


@lru_cache(maxsize=64)
def get_basis(r: int, n_max: int) -> FockBasis:
    """Memoized basis constructor; bases are immutable after creation."""
    return FockBasis(r, n_max)
