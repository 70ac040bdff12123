"""
Class-K algebra, derived thresholds and corpus certificate invariants.

Groups:
  1. ClassKFn invariants and inverses
  2. make_psi / make_beta1_bar
  3. estimate_lipschitz and the plant Lipschitz probe
  4. check_gamma_chain
  5. Corpus certificates (sandwich, psi consistency, equilibrium)
"""
import math

import numpy as np
import pytest

from app.core.errors import CertificateInconsistencyError, InvalidInputError
from app.services.certificates import (
    ClassKFn, check_gamma_chain, estimate_lipschitz, make_beta1_bar, make_psi,
)

GRID = np.linspace(0.0, 5.0, 101)


# 1. ClassKFn ----------------------------------------------------------------

def test_power_inverse_round_trip():
    f = ClassKFn.power(2.0, 3.0)
    f.validate(GRID)
    np.testing.assert_allclose(f.inverse(f(1.7)), 1.7, rtol=1e-12)


def test_numeric_inverse_without_closed_form():
    cube = ClassKFn(lambda r: r ** 3)
    np.testing.assert_allclose(cube.inverse(27.0), 3.0, atol=1e-10)


def test_numeric_inverse_outside_domain_raises():
    bounded = ClassKFn(lambda r: r, domain_hint=1.0)
    with pytest.raises(CertificateInconsistencyError):
        bounded.inverse(2.0)


def test_validate_rejects_nonzero_origin():
    with pytest.raises(CertificateInconsistencyError):
        ClassKFn(lambda r: r + 1.0).validate(GRID)


def test_validate_rejects_non_monotone():
    with pytest.raises(CertificateInconsistencyError) as info:
        ClassKFn(lambda r: math.sin(r)).validate(GRID)
    assert info.value.r is not None


def test_validate_rejects_wrong_inverse():
    with pytest.raises(CertificateInconsistencyError):
        ClassKFn(lambda r: 2.0 * r, lambda y: y).validate(GRID)


def test_linear_rejects_nonpositive_slope():
    with pytest.raises(InvalidInputError):
        ClassKFn.linear(0.0)


def test_compose_and_scale():
    f = ClassKFn.linear(2.0).compose(ClassKFn.power(1.0, 2.0))
    assert f(3.0) == pytest.approx(18.0)
    assert f.inverse(18.0) == pytest.approx(3.0)
    g = ClassKFn.linear(2.0).scaled(3.0)
    assert g(1.0) == pytest.approx(6.0) and g.lipschitz == pytest.approx(6.0)


# 2. Derived thresholds -------------------------------------------------------

def test_psi_with_zero_sigma0_equals_sigma_bar():
    psi = make_psi(ClassKFn.power(1.0, 2.0), ClassKFn.zero())
    for r in (0.0, 0.5, 2.0):
        assert psi(r) == pytest.approx(r * r)


def test_psi_value_with_linear_sigma0():
    psi = make_psi(ClassKFn.power(1.0, 2.0), ClassKFn.identity())
    assert psi(2.0) == pytest.approx(4.0 / 3.0)
    assert psi.inverse(4.0 / 3.0) == pytest.approx(2.0, abs=1e-9)


def test_psi_rejected_when_sigma0_grows_too_fast():
    with pytest.raises(CertificateInconsistencyError):
        make_psi(ClassKFn.identity(), ClassKFn.power(1.0, 2.0))


def test_beta1_bar_switches_between_identity_and_beta1():
    bar = make_beta1_bar(ClassKFn.power(5.0, 2.0, domain_hint=0.1))
    assert bar(0.05) == pytest.approx(0.05)
    assert make_beta1_bar(ClassKFn.power(5.0, 2.0))(1.0) == pytest.approx(5.0)
    assert bar.lipschitz == pytest.approx(1.0)


def test_beta1_bar_of_identity_is_identity():
    bar = make_beta1_bar(ClassKFn.identity())
    for r in GRID:
        assert bar(r) == r


# 3. Lipschitz estimates ------------------------------------------------------

def test_estimate_lipschitz_linear():
    np.testing.assert_allclose(estimate_lipschitz(lambda r: 3.0 * r, (0.0, 1.0), seed=1), 3.0, atol=1e-9)


def test_estimate_lipschitz_square_is_lower_estimate():
    est = estimate_lipschitz(lambda r: r * r, (0.0, 2.0), samples=300, seed=2)
    assert 3.5 < est <= 4.0


def test_estimate_lipschitz_constant_and_degenerate_box():
    assert estimate_lipschitz(lambda r: 1.0, (0.0, 1.0)) == 0.0
    with pytest.raises(InvalidInputError):
        estimate_lipschitz(lambda r: r, (1.0, 1.0))


def test_estimate_lipschitz_deterministic_for_seed():
    fn = lambda v: np.array([np.sin(v[0]) * v[1]])  # noqa: E731
    box = [(-1.0, 1.0), (-1.0, 1.0)]
    assert estimate_lipschitz(fn, box, seed=5) == estimate_lipschitz(fn, box, seed=5)


def test_example1_lipschitz_probe_within_declared_constant(ex1):
    box = [(-1.0, 1.0), (-1.0, 1.0), (-ex1.Q, ex1.Q)]
    assert ex1.plant.probe_lipschitz(box, samples=300, seed=3) <= ex1.plant.L_f * 1.05


# 4. Gamma chain --------------------------------------------------------------

def test_gamma_chain_trivial_pass():
    zero = ClassKFn.zero()
    res = check_gamma_chain(zero, zero, ClassKFn.identity(), GRID)
    assert res.passed and res.margin == pytest.approx(0.0)


def test_gamma_chain_sqrt_gain_fails_for_linear_envelope():
    res = check_gamma_chain(lambda r: math.sqrt(r), lambda r: 10.0 * r, lambda r: r, GRID[1:])
    assert not res.passed
    assert res.first_bad_r == pytest.approx(GRID[1])


def test_gamma_chain_half_gains_pass():
    res = check_gamma_chain(lambda r: r / 2, lambda r: r / 2, lambda r: 2 * r, GRID)
    assert res.passed
    assert res.margin == pytest.approx(0.0)


# 5. Corpus certificates -------------------------------------------------------

@pytest.mark.parametrize("name", ["ex1", "ex2", "ex3"])
def test_corpus_certificates_validate(name, request):
    scenario = request.getfixturevalue(name)
    scenario.certs.validate(scenario.plant.n, radius=1.0, seed=4)
    scenario.plant.check_equilibrium()


def test_example1_storage_is_three_quarters_x_squared(ex1):
    for x in (-1.0, 0.3, 0.8):
        assert ex1.certs.U(np.array([x])) == pytest.approx(0.75 * x * x)
