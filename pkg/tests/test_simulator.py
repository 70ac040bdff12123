"""
Sample-and-hold simulator.

Groups:
  1. Crossing localization and the RK4 step
  2. Adversarial Zeno run against the analytic event times
  3. Scalar cubic plant: steady-state gaps, symmetry, determinism
  4. Guards and input validation
"""
import math

import numpy as np
import pytest

from app.core.errors import BracketError, DivergenceError, InvalidInputError, ZenoSuspicionError
from app.models.schemas import DisturbanceSpec
from app.services import corpus
from app.services.simulator import locate_crossing, rk4_step, simulate

ZERO = DisturbanceSpec(mode="zero")


def run(scenario, variant="static", **overrides):
    return simulate(scenario.plant, scenario.certs, scenario.rule(variant), scenario.sim_config(**overrides))


# 1. Localization and integration ----------------------------------------------

def test_locate_crossing_returns_firing_side():
    t = locate_crossing(lambda s: s - 0.3, 0.0, 1.0, 1e-9)
    assert 0.3 <= t <= 0.3 + 1e-9


def test_locate_crossing_at_right_endpoint():
    assert locate_crossing(lambda s: -1.0 if s < 1.0 else 0.0, 0.0, 1.0, 1e-6) <= 1.0


def test_locate_crossing_without_sign_change():
    with pytest.raises(BracketError):
        locate_crossing(lambda s: -1.0, 0.0, 1.0, 1e-6)


def test_rk4_step_matches_exponential_decay(zeno):
    # x' = -x with u and w held at zero
    x = rk4_step(zeno.plant, np.array([1.0]), np.zeros(1), lambda t, x: np.zeros(1), 0.0, 0.1)
    np.testing.assert_allclose(x, [math.exp(-0.1)], atol=1e-6)


def test_rk4_step_rejects_nonpositive_dt(zeno):
    with pytest.raises(InvalidInputError):
        rk4_step(zeno.plant, np.array([1.0]), np.zeros(1), lambda t, x: np.zeros(1), 0.0, 0.0)


# 2. Zeno -------------------------------------------------------------------------

def test_adversarial_run_matches_oracle_then_aborts(zeno):
    config = zeno.sim_defaults
    with pytest.raises(ZenoSuspicionError) as info:
        simulate(zeno.plant, zeno.certs, zeno.rule("static"), config)
    err = info.value
    assert 0.99 < err.t < 1.05
    events = err.record.events
    assert events.size > 9
    expected = [zeno.oracle.event_time(i) for i in range(1, 9)]
    np.testing.assert_allclose(events[1:9], expected, atol=10 * config.event_tol)


def test_several_events_inside_one_step(zeno):
    config = zeno.sim_config(dt=0.25)
    with pytest.raises(ZenoSuspicionError) as info:
        simulate(zeno.plant, zeno.certs, zeno.rule("static"), config)
    events = info.value.record.events
    # t_2 = 0.5556 and t_3 = 0.7037 share the step [0.5, 0.75]
    np.testing.assert_allclose(events[1:4], [zeno.oracle.event_time(i) for i in (1, 2, 3)],
                               atol=10 * config.event_tol)
    assert 0.5 < events[2] < events[3] < 0.75


def test_envelope_limited_gap_is_tight():
    scenario = corpus.zeno_envelope(p=0.5)
    record = run(scenario)
    np.testing.assert_allclose(record.gaps, math.log(1.2), atol=1e-5)


# 3. Scalar cubic plant -------------------------------------------------------------

def cubic_hold_time(x_from: float, x_to: float) -> float:
    """Time for x' = -x^3 - 1 to fall from x_from to x_to."""
    def antiderivative(x: float) -> float:
        return (math.log(1.0 + x) / 3.0 - math.log(x * x - x + 1.0) / 6.0
                + math.atan((2.0 * x - 1.0) / math.sqrt(3.0)) / math.sqrt(3.0))
    return antiderivative(x_from) - antiderivative(x_to)


def test_static_first_gap_and_steady_state_gap(ex1):
    record = run(ex1, disturbance=ZERO)
    assert record.fired[0] and record.e_norm[0] == 0.0
    # u = -1 is held until |e| >= |x|/3, i.e. until x = 0.75
    assert record.gaps[0] == pytest.approx(cubic_hold_time(1.0, 0.75), abs=1e-5)
    assert record.gaps[0] == pytest.approx(0.149947, abs=1e-5)
    assert record.gaps[-1] == pytest.approx(0.25, abs=1e-3)


def test_sign_symmetry_under_held_disturbance(ex1):
    spec = DisturbanceSpec(mode="envelope_random_hold", hold_dt=0.05)
    plus = run(ex1, x0=[0.8], t_end=3.0, seed=3, disturbance=spec)
    minus = run(ex1, x0=[-0.8], t_end=3.0, seed=3, disturbance=spec)
    np.testing.assert_allclose(plus.events, minus.events, rtol=1e-12)
    np.testing.assert_allclose(plus.x, -minus.x, rtol=1e-12, atol=1e-15)


def test_identical_seeds_give_identical_csv(ex1, tmp_path):
    spec = DisturbanceSpec(mode="envelope_random_hold")
    a = run(ex1, t_end=2.0, seed=42, disturbance=spec).to_csv(tmp_path / "a.csv")
    b = run(ex1, t_end=2.0, seed=42, disturbance=spec).to_csv(tmp_path / "b.csv")
    assert a.read_bytes() == b.read_bytes()


def test_window_truncates_samples_and_events(ex1):
    record = run(ex1, t_end=3.0, disturbance=ZERO)
    short = record.window(1.0)
    assert short.t[-1] <= 1.0 + 1e-12
    assert np.all(short.events <= 1.0 + 1e-12)
    assert short.meta["horizon"] == 1.0
    assert short.n_events < record.n_events


def test_events_csv_has_one_row_per_event(ex1, tmp_path):
    record = run(ex1, t_end=2.0, disturbance=ZERO)
    lines = record.events_to_csv(tmp_path / "events.csv").read_text().splitlines()
    assert lines[0] == "index,t,gap"
    assert len(lines) == record.n_events + 1


# 4. Guards and validation ------------------------------------------------------------

def test_unstable_plant_diverges():
    scenario = corpus.zeno_linear(A=2.0, B=1.0, K=0.0)
    config = scenario.sim_config(t_end=5.0, disturbance=ZERO)
    with pytest.raises(DivergenceError) as info:
        simulate(scenario.plant, scenario.certs, scenario.rule("static"), config, divergence_bound=10.0)
    assert info.value.t == pytest.approx(math.log(10.0) / 2.0, abs=0.01)
    assert info.value.record is not None


def test_divergence_inside_an_event_step_aborts_at_the_event():
    # events at x = 2^i, t = i ln2 / 2; the bound 7.99 is first exceeded by the third event
    scenario = corpus.zeno_linear(A=2.0, B=1.0, K=0.0)
    config = scenario.sim_config(t_end=5.0, disturbance=ZERO)
    with pytest.raises(DivergenceError) as info:
        simulate(scenario.plant, scenario.certs, scenario.rule("static"), config, divergence_bound=7.99)
    assert info.value.t == pytest.approx(1.5 * math.log(2.0), abs=1e-5)
    assert info.value.t == info.value.record.events[-1]
    assert info.value.record.n_events == 4


def test_initial_condition_outside_admissible_set(ex1):
    with pytest.raises(InvalidInputError):
        run(ex1, x0=[1.5])


def test_initial_condition_dimension_mismatch(ex1):
    with pytest.raises(InvalidInputError):
        run(ex1, x0=[0.5, 0.5])
