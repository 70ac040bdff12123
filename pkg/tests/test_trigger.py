"""
Triggering rules.

Groups:
  1. Discrete decay weights
  2. Thresholds of the static, continuous, discrete and baseline rules
  3. Firing decisions, margins and forced deadlines
  4. Parameter validation
"""
import math

import numpy as np
import pytest

from app.core.errors import InvalidInputError
from app.services.trigger import (
    TriggerContext, TriggerRule, decay_term, discrete_weight, margin, next_forced_deadline, should_fire, threshold,
)


def ctx(x, e, t=0.5, i=1, t_last=0.0):
    return TriggerContext(t=t, i=i, t_last=t_last, x=np.atleast_1d(np.asarray(x, float)),
                          e=np.atleast_1d(np.asarray(e, float)))


# 1. Decay weights ---------------------------------------------------------------

def test_discrete_weight_values():
    assert discrete_weight(5.0, 0) == 1.0
    assert discrete_weight(1.0, 4) == pytest.approx(1.0 / 24.0)
    assert discrete_weight(5.0, 2) == pytest.approx(12.5)


def test_discrete_weight_large_index_underflows_gracefully():
    assert discrete_weight(5.0, 500) == pytest.approx(0.0, abs=1e-300)


def test_discrete_weight_rejects_negative_index():
    with pytest.raises(InvalidInputError):
        discrete_weight(1.0, -1)


# 2. Thresholds --------------------------------------------------------------------

def test_example1_static_threshold_is_a_third_of_state(ex1):
    rule = ex1.rule("static")
    assert threshold(rule, ctx(0.6, 0.0)) == pytest.approx(0.2)
    assert threshold(rule, ctx(-0.9, 0.0)) == pytest.approx(0.3)


def test_continuous_decay_raises_threshold(ex1):
    rule = ex1.rule("continuous")
    c = ctx(0.6, 0.0, t=0.0)
    assert decay_term(rule, c) == pytest.approx(15.0)
    expected = 0.5 * (0.36 + 15.0 / 0.5) / (1.5 * 0.6)
    assert threshold(rule, c) == pytest.approx(expected)
    late = ctx(0.6, 0.0, t=50.0)
    assert threshold(rule, late) == pytest.approx(0.2, rel=1e-9)


def test_discrete_decay_uses_event_index(ex3):
    rule = ex3.rule("discrete")
    assert decay_term(rule, ctx([0.1, 0.0], [0, 0], i=2)) == pytest.approx(10.0 * 12.5)
    assert decay_term(rule, ctx([0.1, 0.0], [0, 0], i=0)) == pytest.approx(10.0)


def test_tabuada_threshold_is_c_sigma_bar(ex1):
    rule = TriggerRule.tabuada(ex1.certs, c=0.4)
    assert threshold(rule, ctx(0.5, 0.0)) == pytest.approx(0.4 * 0.25)


def test_example2_completed_square_threshold(ex2):
    rule = ex2.rule("static")
    x = np.array([0.3, -0.4])
    r = 0.5
    s3 = math.sqrt(6.0) * ex2.certs.sigma3(r)
    expected = math.sqrt(0.7 * 0.5 * r * r + s3 * s3 / 20.0) - s3 / (2.0 * math.sqrt(5.0))
    assert threshold(rule, ctx(x, [0.0, 0.0])) == pytest.approx(expected)


def test_example3_threshold_uses_infinity_norm(ex3):
    rule = ex3.rule("static")
    a = threshold(rule, ctx([0.2, 0.1], [0, 0]))
    b = threshold(rule, ctx([0.2, -0.15], [0, 0]))
    assert a == pytest.approx(b)


def test_example3_static_threshold_uses_input_lipschitz_constant(ex3):
    # c r min(b + a b r^2, 1/4) / (sqrt2 (1 + 2 lam (1 + a r^2))) with c = 0.5, lam = a = 1, r = 0.2
    expected = 0.5 * 0.2 * 0.25 / (math.sqrt(2.0) * (1.0 + 2.0 * 1.04))
    assert threshold(ex3.rule("static"), ctx([0.2, 0.1], [0, 0])) == pytest.approx(expected)
    assert ex3.design_inputs.L_fu == 1.0 and ex3.design_inputs.L_f > 10.0


# 3. Decisions -------------------------------------------------------------------------

def test_should_fire_at_threshold(ex1):
    rule = ex1.rule("static")
    assert should_fire(rule, ctx(0.6, 0.21))
    assert not should_fire(rule, ctx(0.6, 0.19))


def test_margin_of_reset_error_never_fires(ex1):
    assert margin(ex1.rule("static"), ctx(0.6, 0.0)) == -math.inf


def test_zero_state_nonzero_error_fires(ex1):
    assert should_fire(ex1.rule("static"), ctx(0.0, 1e-9))


def test_forced_deadline_only_for_discrete(ex1):
    assert next_forced_deadline(ex1.rule("discrete"), ctx(0.5, 0.0, t=2.0, t_last=1.5)) == pytest.approx(2.6)
    assert next_forced_deadline(ex1.rule("continuous"), ctx(0.5, 0.0)) is None


# 4. Validation ---------------------------------------------------------------------

def test_rule_parameter_validation(ex1):
    with pytest.raises(InvalidInputError):
        TriggerRule.continuous(ex1.certs, kappa=0.0, zeta=1.0)
    with pytest.raises(InvalidInputError):
        TriggerRule.discrete(ex1.certs, kappa_hat=1.0, theta=1.0, delta=math.inf)
    with pytest.raises(InvalidInputError):
        TriggerRule.tabuada(ex1.certs, c=1.5)


def test_context_rejects_time_before_last_event():
    with pytest.raises(InvalidInputError):
        ctx(1.0, 0.0, t=0.1, t_last=0.5)
