import math

import numpy as np
import pytest
from scipy import integrate

from wallflip.observables.norms import (
    c_coef,
    direct_fourier_quadrature,
    fourier_hat,
    norm_c_rho,
    norm_h_neg_s0,
    norm_holder,
    norm_w_s1_r,
    slobodeckij_seminorm,
)
from wallflip.observables.scaling import rescale


def _hat(n_nodes, k):
    values = np.zeros(n_nodes)
    values[k] = 1.0
    return values


def test_c_coef_values() -> None:
    eps = 0.1
    assert c_coef(0.0, eps) == eps
    assert c_coef(np.pi / eps, eps) == pytest.approx(4 * eps / np.pi**2)
    assert abs(c_coef(2 * np.pi / eps, eps)) < 1e-20
    zeta = np.linspace(-100, 100, 1001)
    c = c_coef(zeta, eps)
    assert c.shape == zeta.shape
    assert np.all((c >= 0) & (c <= eps))
    np.testing.assert_allclose(c[zeta != 0], 2 * (1 - np.cos(zeta * eps)) / (eps * zeta**2)[zeta != 0], rtol=1e-6)


def test_fourier_hat_matches_quadrature() -> None:
    eps = 0.1
    g = np.random.default_rng(0).normal(size=40)
    g[0] = 0.0
    zeta = np.linspace(-20, 20, 81)
    lattice = fourier_hat(g, zeta, eps)
    assert len(lattice) == 81
    np.testing.assert_allclose(lattice.values, direct_fourier_quadrature(g, eps, zeta), atol=1e-6)
    # real input: hermitian symmetry
    np.testing.assert_allclose(lattice.values, np.conj(lattice.values[::-1]), atol=1e-12)


def test_fourier_hat_of_interface() -> None:
    h = rescale(np.array([0, 1, 2, 1, 0]), 0.25)
    with pytest.raises(ValueError, match="divergent tail"):
        fourier_hat(h, [0.0])
    h.rho = 1.0
    at_zero = fourier_hat(h, [0.0]).values[0]
    assert at_zero.real == pytest.approx(0.25 * h.weighted().sum())

    with pytest.raises(ValueError):
        fourier_hat(np.ones(4), [0.0], 0.1)
    with pytest.raises(ValueError):
        fourier_hat(np.zeros(4), [0.0])


def test_fourier_csv(tmp_path) -> None:
    fourier_hat(_hat(5, 2), np.linspace(-1, 1, 3), 0.5).to_csv(tmp_path / "f.csv")
    rows = (tmp_path / "f.csv").read_text().splitlines()
    assert rows[0] == "zeta,re,im"
    assert len(rows) == 4


def test_h_neg_one_norm_of_hat() -> None:
    eps = 0.1

    def integrand(z):
        return eps**2 * np.sinc(z * eps / (2 * np.pi)) ** 4 / (1 + z**2)

    exact = 2 * (
        integrate.quad(integrand, 0, 10, limit=200)[0]
        + integrate.quad(integrand, 10, 5000, limit=2000)[0]
    )
    norm, tail = norm_h_neg_s0(_hat(30, 10), eps, s0=1.0, return_tail=True)
    assert norm == pytest.approx(math.sqrt(exact), rel=0.01)
    assert 0 < tail <= 0.1 * norm**2


def test_h_neg_norm_properties() -> None:
    eps = 0.1
    g = np.abs(np.random.default_rng(1).normal(size=30))
    g[0] = 0.0
    base = norm_h_neg_s0(g, eps)
    assert norm_h_neg_s0(-3 * g, eps) == pytest.approx(3 * base, rel=1e-10)
    assert norm_h_neg_s0(np.zeros(10), eps) == 0.0

    # translation changes only the phase of the transform
    left = norm_h_neg_s0(_hat(17, 7), 1.0)
    right = norm_h_neg_s0(_hat(17, 8), 1.0)
    assert left == pytest.approx(right, rel=1e-10)


def test_h_neg_norm_rejects_bad_parameters() -> None:
    with pytest.raises(ValueError):
        norm_h_neg_s0(_hat(30, 10), 0.1, s0=0.5)
    with pytest.raises(ValueError, match="too small"):
        norm_h_neg_s0(_hat(30, 10), 0.1, Z=1.0)
    with pytest.raises(ValueError):
        norm_h_neg_s0(_hat(30, 10))


def test_slobodeckij_of_linear_function() -> None:
    eps = 0.1
    f = eps * np.arange(11)
    # ∫∫ |x - y|^2 dx dy over the unit square
    assert slobodeckij_seminorm(f, eps, s1=0.25, r=4.0) == pytest.approx(1 / 6, rel=1e-3)
    assert norm_w_s1_r(f, eps, s1=0.25, r=4.0) == pytest.approx((0.2 + 1 / 6) ** 0.25, rel=1e-3)


def test_slobodeckij_edge_cases() -> None:
    assert slobodeckij_seminorm(np.full(8, 2.0), 0.1) == 0.0
    with pytest.raises(ValueError):
        slobodeckij_seminorm(np.zeros(8), 0.1, s1=1.5)
    with pytest.raises(ValueError):
        slobodeckij_seminorm(np.zeros(8), 0.1, r=0.5)
    with pytest.raises(ValueError):
        slobodeckij_seminorm(np.zeros(8), 0.1, lo=0.5, hi=0.5)


@pytest.mark.parametrize("s1", [0.0, 0.5, 0.75, 1.5])
def test_slobodeckij_rejects_s1_outside_lower_half(s1) -> None:
    with pytest.raises(ValueError, match="s1"):
        slobodeckij_seminorm(0.1 * np.arange(8), 0.1, s1=s1)
    with pytest.raises(ValueError, match="s1"):
        norm_w_s1_r(0.1 * np.arange(8), 0.1, s1=s1)


def test_slobodeckij_accepts_s1_below_half() -> None:
    assert slobodeckij_seminorm(0.1 * np.arange(8), 0.1, s1=0.49) > 0


def test_slobodeckij_restricted_domain() -> None:
    eps = 0.1
    f = eps * np.arange(21)
    whole = slobodeckij_seminorm(f, eps)
    half = slobodeckij_seminorm(f, eps, lo=0.0, hi=1.0)
    assert 0 < half < whole


def test_sup_norms() -> None:
    eps = 0.1
    f = eps * np.arange(11)
    assert norm_c_rho(f, eps, rho=0.0) == pytest.approx(1.0)
    assert norm_c_rho(f, eps, rho=1.0) == pytest.approx(math.exp(-1))
    assert norm_holder(f, eps, b=0.25) == pytest.approx(2.0)
    with pytest.raises(ValueError):
        norm_holder(f, eps, b=1.0)
