import numpy as np
import pytest
from math import comb
from scipy.linalg import expm

from decohist import FockBasis, ConfigError
from decohist.fock import get_basis


def test_size_formula():
    for r, n in [(0, 3), (1, 5), (3, 4), (4, 7)]:
        b = FockBasis(r, n)
        assert b.size == comb(r + n, n)


def test_zero_mode_basis():
    b = FockBasis(0, 7)
    assert b.size == 1
    assert not b.cap_mask().any() or b.n_max == 0


def test_bad_args():
    with pytest.raises(ConfigError):
        FockBasis(-1, 3)
    with pytest.raises(ConfigError):
        FockBasis(2, 0)


def test_annihilation_matrix_elements():
    b = FockBasis(2, 3)
    a0 = b.annihilation(0).toarray()
    i = b.index[(2, 1)]
    j = b.index[(1, 1)]
    assert abs(a0[j, i] - np.sqrt(2.0)) < 1e-15
    # vacuum is annihilated
    v = np.zeros(b.size)
    v[b.index[(0, 0)]] = 1.0
    assert np.linalg.norm(a0 @ v) == 0.0


def test_commutator_below_cap():
    b = FockBasis(2, 4)
    a = b.annihilation(0)
    comm = (a @ a.conj().T - a.conj().T @ a).toarray()
    below = b.totals < b.n_max
    # [a, a^dag] = 1 on states that cannot leak past the cap
    d = np.diag(comm)
    assert np.allclose(d[below], 1.0)


def test_number_operator():
    b = FockBasis(3, 3)
    n_tot = sum((b.annihilation(i).conj().T @ b.annihilation(i)).toarray()
                for i in range(3))
    assert np.allclose(np.diag(n_tot), b.totals)


def test_embed_map():
    small = FockBasis(2, 3)
    big = FockBasis(3, 3)
    emb = small.embed_map(big)
    for i, s in enumerate(small.states):
        assert tuple(big.states[emb[i]]) == tuple(s) + (0,)
    with pytest.raises(ConfigError):
        small.embed_map(FockBasis(3, 4))


def test_quanta_transform_unitary_and_one_particle_action():
    rng = np.random.default_rng(7)
    A = rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3))
    W = np.linalg.qr(A)[0]
    b = FockBasis(3, 4)
    U = expm(b.quanta_transform(W).toarray())
    assert np.max(np.abs(U.conj().T @ U - np.eye(b.size))) < 1e-12
    # vacuum is fixed
    vac = b.index[(0, 0, 0)]
    e = np.zeros(b.size)
    e[vac] = 1.0
    assert abs((U @ e)[vac] - 1.0) < 1e-12
    # |1_k> -> sum_j W_jk |1_j>
    ones = [b.index[tuple(np.eye(3, dtype=int)[k])] for k in range(3)]
    for k in range(3):
        e = np.zeros(b.size)
        e[ones[k]] = 1.0
        out = U @ e
        assert np.max(np.abs(out[ones] - W[:, k])) < 1e-12
        rest = np.delete(out, ones)
        assert np.max(np.abs(rest)) < 1e-12


def test_quanta_transform_number_conserving():
    rng = np.random.default_rng(3)
    A = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
    W = np.linalg.qr(A)[0]
    b = FockBasis(2, 3)
    U = expm(b.quanta_transform(W).toarray())
    N = np.diag(b.totals.astype(float))
    assert np.max(np.abs(U @ N - N @ U)) < 1e-12


def test_get_basis_cached():
    assert get_basis(2, 5) is get_basis(2, 5)
