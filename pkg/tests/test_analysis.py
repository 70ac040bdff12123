"""
Post-run verification.

Groups:
  1. L2-gain curves and the decay bias eta
  2. Dissipation residual
  3. Invariant set, admissibility and practical stability
  4. Inter-event statistics and the baseline implication
"""
import math

import numpy as np
import pytest

from app.core.errors import InvalidInputError
from app.models.schemas import DisturbanceSpec
from app.services.analysis import (
    convergence_check, convergence_time_bound, dissipation_residual, gain_bias, inter_event_stats,
    invariance_check, invariant_set_radius, l2_report, practical_stability_radius, tabuada_implication,
)
from app.services.simulator import RunRecord, simulate

HOLD = DisturbanceSpec(mode="envelope_random_hold", hold_dt=0.05)


@pytest.fixture(scope="module")
def ex1_static_run(ex1):
    return simulate(ex1.plant, ex1.certs, ex1.rule("static"), ex1.sim_config(seed=7, disturbance=HOLD))


@pytest.fixture(scope="module")
def ex1_continuous_run(ex1):
    return simulate(ex1.plant, ex1.certs, ex1.rule("continuous"), ex1.sim_config(seed=7, disturbance=HOLD))


def synthetic(events, t=None, x=None):
    t = np.asarray(t if t is not None else [0.0, 1.0], float)
    x = np.asarray(x if x is not None else [[1.0], [0.5]], float)
    n = t.size
    return RunRecord(t=t, x=x, u=np.zeros((n, 1)), w=np.zeros((n, 1)), z=x.copy(),
                     e_norm=np.zeros(n), threshold=np.zeros(n), fired=np.zeros(n, bool),
                     events=np.asarray(events, float), z_energy=np.zeros(n), w_energy=np.zeros(n))


# 1. Gain -----------------------------------------------------------------------

def test_gain_bias_values(ex1):
    assert gain_bias(ex1.rule("static")) == 0.0
    assert gain_bias(ex1.rule("continuous")) == pytest.approx(2.0 * 15.0 / 1.6)
    assert gain_bias(ex1.rule("discrete")) == pytest.approx(2.0 * 1.5 * 1.1 * math.e)


def test_static_run_respects_gain_bound(ex1, ex1_static_run):
    report = l2_report(ex1_static_run, ex1.certs, ex1.rule("static"))
    assert report.passed and not report.degenerate
    assert report.mu0 == pytest.approx(2.0 * ex1.certs.U(np.array([1.0])))
    assert report.ratio.size == report.bound.size > 0


def test_continuous_run_respects_gain_bound(ex1, ex1_continuous_run):
    report = l2_report(ex1_continuous_run, ex1.certs, ex1.rule("continuous"))
    assert report.passed
    assert report.eta == pytest.approx(18.75)


def test_zero_disturbance_is_degenerate(ex1):
    record = simulate(ex1.plant, ex1.certs, ex1.rule("static"),
                      ex1.sim_config(t_end=3.0, disturbance=DisturbanceSpec(mode="zero")))
    report = l2_report(record, ex1.certs, ex1.rule("static"))
    assert report.degenerate and report.passed
    assert report.w_energy == 0.0


def test_gain_report_text_and_curves(ex1, ex1_static_run, tmp_path):
    report = l2_report(ex1_static_run, ex1.certs, ex1.rule("static"))
    assert "pass = true" in report.to_text()
    lines = report.curves_to_csv(tmp_path / "curves.csv").read_text().splitlines()
    assert lines[0] == "T,ratio,bound"


# 2. Dissipation ------------------------------------------------------------------

def test_static_residual_is_nonpositive(ex1, ex1_static_run):
    assert dissipation_residual(ex1_static_run, ex1.certs, ex1.plant, ex1.rule("static")) <= 1e-3


def test_continuous_residual_within_decay_allowance(ex1, ex1_continuous_run):
    assert dissipation_residual(ex1_continuous_run, ex1.certs, ex1.plant, ex1.rule("continuous")) <= 1e-3


@pytest.mark.parametrize("variant", ["static", "continuous", "discrete"])
@pytest.mark.parametrize("name", ["ex1", "ex2", "ex3"])
def test_gain_and_residual_across_examples(request, name, variant):
    scenario = request.getfixturevalue(name)
    rule = scenario.rule(variant)
    record = simulate(scenario.plant, scenario.certs, rule, scenario.sim_config(seed=11, disturbance=HOLD))
    assert l2_report(record, scenario.certs, rule).passed
    assert dissipation_residual(record, scenario.certs, scenario.plant, rule) <= 1e-3


# 3. Sets and stability -------------------------------------------------------------

def test_invariant_set_radius_example1(ex1):
    eps_bar, Q = invariant_set_radius(ex1.certs, 1.0, ex1.plant.L_gamma3)
    assert eps_bar == pytest.approx(1.0)
    assert Q == pytest.approx(2.0 * math.sqrt(0.45))


def test_invariant_set_radius_example2(ex2):
    eps_bar, Q = invariant_set_radius(ex2.certs, 1.0, ex2.plant.L_gamma3)
    expected = math.sqrt(((7.0 + math.sqrt(13.0)) / 2.0) / ((5.0 - math.sqrt(5.0)) / 2.0))
    assert eps_bar == pytest.approx(expected)
    assert Q == pytest.approx(math.sqrt(0.025) * expected)


def test_invariant_set_radius_example3(ex3):
    eps_bar, Q = invariant_set_radius(ex3.certs, 1.0, ex3.plant.L_gamma3)
    assert eps_bar == pytest.approx(math.sqrt(1.5))
    assert Q == pytest.approx(0.1378, abs=5e-4)


def test_invariant_set_radius_rejects_nonpositive_epsilon(ex1):
    with pytest.raises(InvalidInputError):
        invariant_set_radius(ex1.certs, 0.0, 1.0)


def test_run_stays_in_invariant_set(ex1, ex1_static_run):
    ok, peak = invariance_check(ex1_static_run, ex1.certs, ex1.eps_bar)
    assert ok and peak == pytest.approx(1.0)


def test_practical_stability_radius(ex1):
    assert practical_stability_radius(ex1.rule("continuous")) == pytest.approx(math.sqrt(30.0))
    assert practical_stability_radius(ex1.rule("discrete")) == pytest.approx(math.sqrt(3.0))
    assert practical_stability_radius(ex1.rule("static")) == 0.0


def test_convergence_time_bound_static(ex1):
    assert convergence_time_bound(ex1.rule("static"), ex1.certs, 1.0, 0.1) == pytest.approx(99.0)


def test_convergence_time_bound_rejects_bad_radius(ex1):
    with pytest.raises(InvalidInputError):
        convergence_time_bound(ex1.rule("static"), ex1.certs, 1.0, 0.0)


def test_convergence_check_entry_time():
    record = synthetic([0.0], t=[0.0, 1.0, 2.0, 3.0], x=[[1.0], [0.5], [0.05], [0.01]])
    res = convergence_check(record, 0.1)
    assert res.passed and res.entry_time == 2.0
    assert not convergence_check(record, 0.001, floor=1e-4).passed


def test_convergence_check_requires_staying_inside():
    # inside at t=1, out again at t=2, inside at the end
    record = synthetic([0.0], t=[0.0, 1.0, 2.0, 3.0], x=[[1.0], [0.05], [0.2], [0.01]])
    res = convergence_check(record, 0.1)
    assert not res.passed
    assert res.entry_time == 1.0 and res.final_norm == pytest.approx(0.01)


def test_convergence_check_never_entering():
    record = synthetic([0.0], t=[0.0, 1.0], x=[[1.0], [0.5]])
    res = convergence_check(record, 0.1)
    assert not res.passed and res.entry_time is None


@pytest.mark.parametrize("variant", ["continuous", "discrete"])
@pytest.mark.parametrize("name", ["ex1", "ex2", "ex3"])
def test_decaying_rules_settle_in_practical_ball(request, name, variant):
    scenario = request.getfixturevalue(name)
    rule = scenario.rule(variant)
    record = simulate(scenario.plant, scenario.certs, rule,
                      scenario.sim_config(t_end=30.0, disturbance=DisturbanceSpec(mode="zero")))
    res = convergence_check(record, practical_stability_radius(rule))
    assert res.passed and res.entry_time is not None and res.entry_time <= 30.0


def test_static_rule_drives_state_to_origin(ex1):
    record = simulate(ex1.plant, ex1.certs, ex1.rule("static"),
                      ex1.sim_config(t_end=30.0, disturbance=DisturbanceSpec(mode="zero")))
    assert abs(record.x[-1, 0]) <= 1e-3 * abs(record.x0[0])
    assert convergence_check(record, 1e-3 * abs(record.x0[0])).passed


# 4. Statistics ------------------------------------------------------------------------

def test_inter_event_stats_windows():
    stats = inter_event_stats([0.0, 1.0, 3.0, 12.0, 40.0])
    assert stats.count == 5
    assert stats.min_gap == 1.0 and stats.mean_gap == 10.0
    assert stats.counts == {10.0: 3, 30.0: 4, 100.0: 5}
    assert stats.min_gaps[10.0] == 1.0


def test_inter_event_stats_single_event():
    stats = inter_event_stats(synthetic([0.0]))
    assert stats.count == 1 and stats.min_gap is None and stats.mean_gap is None


def test_inter_event_stats_requires_events():
    with pytest.raises(InvalidInputError):
        inter_event_stats([])


def test_baseline_rule_keeps_its_implication(ex1):
    rule = ex1.rule("tabuada")
    record = simulate(ex1.plant, ex1.certs, rule, ex1.sim_config(t_end=5.0, seed=7, disturbance=HOLD))
    assert tabuada_implication(record, ex1.certs, rule.c_value) == []
