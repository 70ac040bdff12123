"""
Monte-Carlo tables and parameter sweeps.

Groups:
  1. Sampling and seeding helpers (fast)
  2. Row aggregation and CSV output (fast)
  3. Initial-condition laws and published table reproductions (the long ones marked slow)
"""
import numpy as np
import pytest

from app.services.experiments import (
    ExperimentService, TableResult, TableRow, _aggregate, derive_seed, run_job, McJob,
    sample_initial_conditions,
)


# 1. Sampling ---------------------------------------------------------------------

def test_ball_samples_stay_inside_radius():
    pts = sample_initial_conditions("uniform_ball", 200, 2, 1.0, seed=1)
    assert pts.shape == (200, 2)
    assert np.all(np.linalg.norm(pts, axis=1) <= 1.0 + 1e-12)


def test_interval_samples_are_seeded():
    a = sample_initial_conditions("uniform_interval", 10, 1, 1.0, seed=3)
    b = sample_initial_conditions("uniform_interval", 10, 1, 1.0, seed=3)
    np.testing.assert_array_equal(a, b)
    assert np.all(np.abs(a) <= 1.0)


def test_derived_seeds_differ_per_index():
    seeds = {derive_seed(20240101, i) for i in range(50)}
    assert len(seeds) == 50
    assert derive_seed(5, 2) == derive_seed(5, 2)


def test_run_job_returns_events():
    job = McJob(index=4, scenario="example1", params=(), variant="static", x0=(0.5,), t_end=2.0, seed=1)
    index, variant, events, aborted = run_job(job)
    assert (index, variant, aborted) == (4, "static", False)
    assert events[0] == 0.0 and events.size > 1


def test_run_job_reports_aborts():
    job = McJob(index=0, scenario="zeno", params=(("p", 0.5),), variant="static", x0=(1.0,), t_end=2.0, seed=1)
    assert run_job(job)[3] is True


# 2. Aggregation ------------------------------------------------------------------------

def test_aggregate_averages_per_run_minimum_gaps():
    runs = [np.array([0.0, 1.0, 3.0]), np.array([0.0, 0.5]), np.array([0.0])]
    mean_count, min_gap = _aggregate(runs, 10.0)
    assert mean_count == pytest.approx(2.0)
    # runs without a gap do not enter the average
    assert min_gap == pytest.approx(0.75)
    assert _aggregate(runs, 0.1) == (1.0, None)


def test_row_judgement_and_ordering():
    rows = [
        TableRow("ex", "static", 10.0, 40.0, 0.24, published_count=40, published_min_gap=0.24),
        TableRow("ex", "continuous", 10.0, 11.0, 0.6),
    ]
    for row in rows:
        row.judge(0.1)
    result = TableResult("ex", rows)
    assert rows[0].count_ok and rows[0].gap_ok and rows[1].count_ok is None
    assert result.ordering_ok() and result.passed


def test_small_table_writes_csv(tmp_path):
    service = ExperimentService(output_dir=str(tmp_path))
    result = service.tables("example1", horizons=(2.0,), n_ic=3, seed=5, out_dir=tmp_path)
    lines = result.path.read_text().splitlines()
    assert lines[0].startswith("scenario,parameter,value,rule,horizon")
    assert len(lines) == 1 + 3
    assert result.row("static", 2.0).mean_count >= 1.0


# 3. Reproductions ---------------------------------------------------------------------------

@pytest.mark.slow
def test_example1_table_ordering(tmp_path):
    result = ExperimentService().tables("example1", n_ic=100, seed=20240101, out_dir=tmp_path)
    assert result.ordering_ok(10.0)
    assert result.static_within_tolerance()


@pytest.mark.slow
def test_example3_static_count_grows_with_lambda(tmp_path):
    service = ExperimentService()
    result = service.sweep("example3", "lam", [1e-3, 1e-2, 1e-1, 1.0], horizon=10.0, n_ic=20,
                           seed=20240101, out_dir=tmp_path)
    assert service.static_trend_ok(result)
    assert (tmp_path / "sweep_lam.csv").is_file()


def test_ic_distribution_override_changes_drawn_states(monkeypatch, tmp_path):
    import app.services.experiments as experiments

    drawn = []

    def recording(distribution, n, dim, radius, seed):
        pts = sample_initial_conditions(distribution, n, dim, radius, seed)
        drawn.append((distribution, pts))
        return pts

    monkeypatch.setattr(experiments, "sample_initial_conditions", recording)
    service = ExperimentService(output_dir=str(tmp_path))
    service.tables("example1", horizons=(1.0,), n_ic=3, seed=5, out_dir=tmp_path / "a", rules=("static",))
    service.tables("example1", horizons=(1.0,), n_ic=3, seed=5, out_dir=tmp_path / "b", rules=("static",),
                   ic_distribution="uniform_ball")
    assert [d for d, _ in drawn] == ["uniform_interval", "uniform_ball"]
    assert not np.allclose(drawn[0][1], drawn[1][1])


def test_example3_static_row_within_tolerance(tmp_path):
    result = ExperimentService().tables("example3", horizons=(10.0,), n_ic=8, seed=20240101,
                                        out_dir=tmp_path, rules=("static",))
    row = result.row("static", 10.0)
    assert row.aborted == 0
    assert row.count_ok, f"mean count {row.mean_count:.1f} vs published {row.published_count}"
    assert row.gap_ok, f"min gap {row.min_gap} vs published {row.published_min_gap}"
