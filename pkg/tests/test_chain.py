import numpy as np
import pytest

from decohist import (uniform_chain, chain_from_spectral_density, chain_moments,
                      auto_chain_length, SpectralDensity, ConfigError)
from decohist.chain import spectral_density_of_chain
from decohist.errors import NumericalError


def flat_density(n_nodes=400):
    # Gauss-Legendre quadrature for w = 1 on [0, 1]
    x, w = np.polynomial.legendre.leggauss(n_nodes)
    nodes = 0.5 * (x + 1.0)
    qw = 0.5 * w
    return SpectralDensity(nodes=nodes, quad_weights=qw, values=np.ones_like(nodes))


def recurrence_by_gram_schmidt(sd, M):
    """Independent oracle: monic orthogonal polynomials built by explicit
    Gram-Schmidt on monomials under the discrete measure."""
    x = sd.nodes
    mass = sd.masses
    polys = [np.ones_like(x)]
    for n in range(1, M + 1):
        p = x ** n
        for q in polys:
            p = p - (np.sum(mass * q * p) / np.sum(mass * q * q)) * q
        polys.append(p)
    alphas, betas = [], []
    for n in range(M):
        pn = polys[n]
        nrm2 = np.sum(mass * pn * pn)
        alphas.append(np.sum(mass * x * pn * pn) / nrm2)
        if n > 0:
            betas.append(nrm2 / np.sum(mass * polys[n - 1] ** 2))
    return np.array(alphas), np.sqrt(np.array(betas))


def test_uniform_chain_default_bath():
    spec = uniform_chain(eps=1.0, hop=0.2, h_sys=0.05, M=300)
    assert spec.M == 300
    assert np.allclose(spec.eps, 1.0)
    assert np.allclose(spec.hop, 0.2)
    assert spec.h_sys == 0.05


def test_uniform_chain_single_mode():
    spec = uniform_chain(eps=1.0, hop=0.2, h_sys=0.1, M=1)
    assert spec.M == 1
    assert spec.hop.size == 0


def test_two_site_eigenvalues():
    spec = uniform_chain(eps=0.0, hop=0.5, h_sys=0.1, M=2)
    evals = np.linalg.eigvalsh(spec.one_particle_matrix())
    assert np.allclose(evals, [-0.5, 0.5], atol=1e-14)


def test_uniform_chain_rejects_bad_input():
    with pytest.raises(ConfigError):
        uniform_chain(eps=1.0, hop=-0.1, h_sys=0.1, M=5)
    with pytest.raises(ConfigError):
        uniform_chain(eps=1.0, hop=0.2, h_sys=0.1, M=0)


def test_flat_measure_shifted_legendre():
    sd = flat_density()
    spec = chain_from_spectral_density(sd, 3)
    assert np.allclose(spec.eps, 0.5, atol=1e-12)
    # b_n = (n/2)/sqrt(4 n^2 - 1)
    assert abs(spec.hop[0] - 0.5 / np.sqrt(3.0)) < 1e-12
    assert abs(spec.hop[1] - 1.0 / np.sqrt(15.0)) < 1e-12
    assert abs(spec.h_sys - 1.0) < 1e-12


def test_against_gram_schmidt_oracle():
    sd = flat_density()
    M = 8
    spec = chain_from_spectral_density(sd, M)
    alphas, bs = recurrence_by_gram_schmidt(sd, M)
    assert np.max(np.abs(spec.eps - alphas)) < 1e-10
    assert np.max(np.abs(spec.hop - bs[: M - 1])) < 1e-10


def test_point_mass_measure():
    sd = SpectralDensity(nodes=np.array([2.5]), quad_weights=np.array([1.0]),
                         values=np.array([0.49]))
    spec = chain_from_spectral_density(sd, 1)
    assert abs(spec.eps[0] - 2.5) < 1e-14
    assert abs(spec.h_sys - 0.7) < 1e-14


def test_symmetric_measure_zero_eps():
    x, w = np.polynomial.legendre.leggauss(200)
    sd = SpectralDensity(nodes=x, quad_weights=w, values=np.ones_like(x))
    spec = chain_from_spectral_density(sd, 6)
    assert np.max(np.abs(spec.eps)) < 1e-10


def test_rejects_insufficient_support():
    sd = SpectralDensity(nodes=np.array([0.0, 1.0]), quad_weights=np.ones(2),
                         values=np.ones(2))
    with pytest.raises((ConfigError, NumericalError)):
        chain_from_spectral_density(sd, 3)


def test_moments_trivial():
    spec = uniform_chain(eps=1.0, hop=0.2, h_sys=0.05, M=10)
    m = chain_moments(spec, 1)
    assert m[0] == 1.0
    assert abs(m[1] - 1.0) < 1e-14


def test_moments_flat_measure():
    spec = chain_from_spectral_density(flat_density(), 5)
    m = chain_moments(spec, 2)
    assert abs(m[1] - 0.5) < 1e-10
    assert abs(m[2] - 1.0 / 3.0) < 1e-10


def test_moment_matching_up_to_2m_minus_1():
    sd = flat_density()
    M = 6
    spec = chain_from_spectral_density(sd, M)
    k = np.arange(2 * M)
    exact = 1.0 / (k + 1.0)  # int_0^1 x^k dx
    got = chain_moments(spec, 2 * M - 1)
    assert np.max(np.abs(got - exact)) < 1e-8


def test_positive_hoppings_always():
    sd = flat_density()
    spec = chain_from_spectral_density(sd, 10)
    assert np.all(spec.hop > 0)


def test_jacobi_roundtrip_idempotent():
    base = chain_from_spectral_density(flat_density(), 6)
    sd2 = spectral_density_of_chain(base)
    again = chain_from_spectral_density(sd2, 6)
    assert np.max(np.abs(again.eps - base.eps)) < 1e-9
    assert np.max(np.abs(again.hop - base.hop)) < 1e-9
    assert abs(again.h_sys - base.h_sys) < 1e-9


def test_auto_chain_length():
    assert auto_chain_length(0.2, 500.0) == 250
    assert auto_chain_length(0.2, 10.0) == 54
