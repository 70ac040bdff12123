"""
Inter-event bounds and decaying-trigger synthesis.

Groups:
  1. Comparison system: closed form, inverse, escape time
  2. Static and linear-envelope gap bounds
  3. Lipschitz validity of psi^-1
  4. Continuous / discrete amplitudes and design rejections
"""
import math

import numpy as np
import pytest
from pydantic import ValidationError
from scipy import optimize

from app.core.errors import DesignError, InvalidInputError, LipschitzValidityError
from app.models.schemas import DesignInputs
from app.services import corpus
from app.services.design import (
    design, design_continuous, design_discrete, discrete_amplitude, inter_event_bound, integrate_comparison,
    l_psi_inv_from_constants, n_theta, tau_linear_envelope, tau_static, y_closed_form, y_inverse,
)


# 1. Comparison system ----------------------------------------------------------

@pytest.mark.parametrize("theta, expected", [(1.0, 1), (5.0, 9), (0.5, 1), (2.0, 2)])
def test_n_theta(theta, expected):
    assert n_theta(theta) == expected


def test_n_theta_rejects_nonpositive():
    with pytest.raises(InvalidInputError):
        n_theta(0.0)


def test_closed_form_matches_integration():
    rng = np.random.default_rng(0)
    steps = 20000
    idx = np.linspace(0, steps, 51).astype(int)[1:]
    for _ in range(20):
        L_f = rng.uniform(0.5, 3.0)
        L_k = rng.uniform(0.1, 2.0)
        L = L_k + rng.uniform(0.5, 3.0)
        escape = math.log(L / L_k) / (L_f * (L - L_k))
        t_end = 0.5 * escape
        numeric = integrate_comparison(t_end, L_f, L_k, L, steps=steps)
        times = idx * (t_end / steps)
        closed = [y_closed_form(t, L_f, L_k, L) for t in times]
        np.testing.assert_allclose(numeric[idx], closed, rtol=1e-8)


def test_closed_form_escapes_to_infinity():
    L_f, L_k, L = 1.0, 1.0, 2.0
    escape = math.log(2.0)
    assert y_closed_form(escape, L_f, L_k, L) == math.inf
    assert y_closed_form(2.0 * escape, L_f, L_k, L) == math.inf
    assert math.isfinite(y_closed_form(0.99 * escape, L_f, L_k, L))


def test_y_inverse_inverts_closed_form():
    for y in (0.1, 1.0, 7.5):
        t = y_inverse(y, 2.0, 0.5, 3.0)
        assert y_closed_form(t, 2.0, 0.5, 3.0) == pytest.approx(y)


def test_comparison_rejects_bad_constants():
    with pytest.raises(InvalidInputError):
        y_closed_form(0.1, 1.0, 2.0, 1.5)
    with pytest.raises(InvalidInputError):
        y_closed_form(-0.1, 1.0, 0.5, 1.5)


# 2. Gap bounds ---------------------------------------------------------------------

def test_tau_static_is_first_passage_time():
    L_f, L_k, L_gamma3, L_bar = 4.0, 1.0, 1.3, 3.0
    L = L_k + L_gamma3 + 1.0
    tau = tau_static(L_f, L_k, L_gamma3, L_bar)
    escape = math.log(L / L_k) / (L_f * (L - L_k))
    root = optimize.brentq(lambda t: y_closed_form(t, L_f, L_k, L) - 1.0 / L_bar, 0.0, 0.999 * escape, xtol=1e-14)
    assert tau == pytest.approx(root, rel=1e-9)


def test_linear_envelope_published_value():
    assert tau_linear_envelope(1.0, 1.0, 0.0, 0.5) == pytest.approx(math.log(1.5))


def test_linear_envelope_consistent_value():
    assert tau_linear_envelope(1.0, 1.0, 0.0, 0.5, printed=False) == pytest.approx(math.log(1.2))


def test_linear_envelope_without_drift_is_unbounded():
    assert tau_linear_envelope(0.0, 1.0, 0.0, 0.5) == math.inf


def test_inter_event_bound_example1(ex1):
    assert inter_event_bound(ex1.design_inputs) == pytest.approx(0.018, abs=1e-3)


# 3. Lipschitz validity --------------------------------------------------------------

def test_psi_inverse_lipschitz_example1(ex1):
    i = ex1.design_inputs
    res = l_psi_inv_from_constants(i.L_fu or i.L_f, i.L_k, i.L_sigma3, i.L_sigmabar_inv, i.sigmabar_eps, i.sigma0_eps)
    assert res.valid and res.require() == pytest.approx(1.5)


def test_psi_inverse_lipschitz_invalid_for_large_lambda(ex3):
    i = ex3.design_inputs
    res = l_psi_inv_from_constants(i.L_fu or i.L_f, i.L_k, i.L_sigma3, i.L_sigmabar_inv, i.sigmabar_eps, i.sigma0_eps)
    assert not res.valid and res.lhs >= 1.0
    with pytest.raises(LipschitzValidityError):
        res.require()
    with pytest.raises(LipschitzValidityError):
        design(i)


def test_example3_design_valid_for_small_lambda():
    res = design(corpus.example3(lam=1e-3).design_inputs)
    assert res.tau > 0.0 and res.kappa is not None and res.kappa_hat is not None


# 4. Synthesis ---------------------------------------------------------------------------

def test_example1_design(ex1):
    res = design(ex1.design_inputs)
    assert res.valid and not res.notes
    assert res.L_hat == pytest.approx(3.0)
    assert res.tau == pytest.approx(0.018, abs=1e-3)
    assert res.kappa == pytest.approx(12.25, rel=0.02)
    assert res.discrete_case == 1 and res.N_theta == 1
    # the decaying designs push the first gaps beyond the static bound
    assert res.tau1 > res.tau and res.tau2 > res.tau


def test_continuous_design_amplitude_scales_with_horizon(ex1):
    base = design_continuous(ex1.design_inputs).kappa
    longer = design_continuous(ex1.design_inputs.model_copy(update={"T_bar": 2.0})).kappa
    assert longer == pytest.approx(base * math.exp(1.6))


def test_discrete_amplitude_cases():
    assert discrete_amplitude(1.0, 5.0, 3) == (pytest.approx(0.2), 1)
    value, case = discrete_amplitude(1.0, 5.0, 10)
    assert case == 2 and value == pytest.approx(math.factorial(10) / 5.0 ** 10)


def test_discrete_design_rejects_short_deadline(ex1):
    with pytest.raises(DesignError):
        design_discrete(ex1.design_inputs.model_copy(update={"delta": 0.05}))


def test_both_mode_keeps_rejections_as_notes(ex1):
    res = design(ex1.design_inputs.model_copy(update={"delta": 0.05}))
    assert not res.valid
    assert any(note.startswith("discrete:") for note in res.notes)
    assert res.kappa is not None


def test_design_inputs_require_gap_above_critical_period(ex1):
    data = {**ex1.design_inputs.model_dump(), "tau_star": 0.01, "f_cr": 40.0}
    with pytest.raises(ValidationError):
        DesignInputs(**data)


def test_design_report_text(ex1):
    text = design(ex1.design_inputs).to_text()
    assert "tau = " in text and "valid = true" in text
