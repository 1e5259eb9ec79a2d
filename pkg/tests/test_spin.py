import numpy as np
import pytest

from decohist import (build_spin_sector, floquet_operator, quasienergy_spacings,
                      KickedTopParams, ConfigError)
from decohist.spin import precession_unitary


@pytest.mark.parametrize("j", [0.5, 1, 1.5, 5, 40])
def test_commutators_and_casimir(j):
    s = build_spin_sector(j)
    eye = np.eye(s.dim)
    assert np.max(np.abs(s.Jx @ s.Jy - s.Jy @ s.Jx - 1j * s.Jz)) < 1e-12
    assert np.max(np.abs(s.Jy @ s.Jz - s.Jz @ s.Jy - 1j * s.Jx)) < 1e-12
    assert np.max(np.abs(s.Jz @ s.Jx - s.Jx @ s.Jz - 1j * s.Jy)) < 1e-12
    casimir = s.Jx @ s.Jx + s.Jy @ s.Jy + s.Jz @ s.Jz
    assert np.max(np.abs(casimir - j * (j + 1) * eye)) < 1e-12


def test_spin_half_jy():
    s = build_spin_sector(0.5)
    expect = np.array([[0, -0.5j], [0.5j, 0]])
    assert np.allclose(s.Jy, expect, atol=1e-14)


def test_jz_descending_ordering():
    s = build_spin_sector(1)
    assert np.allclose(np.diag(s.Jz).real, [1, 0, -1])


def test_jy_values_ascending_integers():
    s = build_spin_sector(40)
    assert s.dim == 81
    assert np.max(np.abs(s.jy_values - np.arange(-40, 41))) < 1e-12
    # jy_basis diagonalizes Jy
    d = s.jy_basis.conj().T @ s.Jy @ s.jy_basis
    assert np.max(np.abs(d - np.diag(s.jy_values))) < 1e-11


@pytest.mark.parametrize("j", [-1, 0.3, 1.25])
def test_rejects_bad_j(j):
    with pytest.raises(ConfigError):
        build_spin_sector(j)


def test_rejects_nonpositive_tau():
    with pytest.raises(ConfigError):
        KickedTopParams(K=1.0, tau=0.0)


@pytest.mark.parametrize("j,K", [(2, 0.0), (10, 3.0), (40, 3.0), (60, 20.0)])
def test_floquet_unitary(j, K):
    s = build_spin_sector(j)
    U = floquet_operator(s, KickedTopParams(K=K))
    assert np.max(np.abs(U.conj().T @ U - np.eye(s.dim))) < 1e-10


def test_floquet_k0_is_pure_precession():
    s = build_spin_sector(3)
    p = 1.7
    U = floquet_operator(s, KickedTopParams(K=0.0, p=p))
    assert np.allclose(U, precession_unitary(s, p), atol=1e-12)
    phases = np.sort(np.mod(np.angle(np.linalg.eigvals(U)), 2 * np.pi))
    expect = np.sort(np.mod(-p * np.arange(-3, 4), 2 * np.pi))
    assert np.max(np.abs(phases - expect)) < 1e-10


def test_floquet_commuting_exponents_spin_half():
    s = build_spin_sector(0.5)
    K = 2.3
    U = floquet_operator(s, KickedTopParams(K=K, p=0.0, beta=0.0))
    expect = np.diag(np.exp(-1j * K * np.diag(s.Jz) ** 2))
    assert np.allclose(U, expect, atol=1e-12)


def test_spectrum_conjugation_invariance():
    from dataclasses import replace
    s = build_spin_sector(7)
    rng = np.random.default_rng(11)
    A = rng.normal(size=(s.dim, s.dim)) + 1j * rng.normal(size=(s.dim, s.dim))
    Q, _ = np.linalg.qr(A)
    rot = replace(s, Jy=Q.conj().T @ s.Jy @ Q, Jz=Q.conj().T @ s.Jz @ Q,
                  Jx=Q.conj().T @ s.Jx @ Q,
                  jy_basis=Q.conj().T @ s.jy_basis)
    params = KickedTopParams(K=3.0)
    U1 = floquet_operator(s, params)
    U2 = floquet_operator(rot, params)
    p1 = np.sort(np.mod(np.angle(np.linalg.eigvals(U1)), 2 * np.pi))
    p2 = np.sort(np.mod(np.angle(np.linalg.eigvals(U2)), 2 * np.pi))
    assert np.max(np.abs(p1 - p2)) < 1e-10


def test_equidistant_spectrum_spacings():
    U = np.diag(np.exp(1j * np.array([0, np.pi / 2, np.pi, 3 * np.pi / 2])))
    stats = quasienergy_spacings(U)
    assert np.allclose(stats.spacings, 1.0, atol=1e-12)
    assert abs(np.mean(stats.spacings) - 1.0) < 1e-10
    assert 0.0 <= stats.mean_r <= 1.0


def test_k0_picket_fence_far_from_wigner():
    s = build_spin_sector(40)
    U = floquet_operator(s, KickedTopParams(K=0.0, p=1.7, beta=0.1))
    stats = quasienergy_spacings(U)
    assert stats.ks_wigner > 0.3


def test_crossover_orderings():
    s = build_spin_sector(40)
    stats2 = quasienergy_spacings(floquet_operator(s, KickedTopParams(K=2.0)))
    stats3 = quasienergy_spacings(floquet_operator(s, KickedTopParams(K=3.0)))
    assert stats2.ks_poisson < stats2.ks_wigner
    assert stats3.ks_wigner < stats3.ks_poisson
    assert stats3.mean_r > stats2.mean_r
    for st in (stats2, stats3):
        assert abs(np.mean(st.spacings) - 1.0) < 1e-10
        assert np.all(st.spacings >= 0)
