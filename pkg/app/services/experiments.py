"""
Experiment orchestration shared by the CLI and the HTTP layer.

A single run simulates one scenario/rule pair, verifies the enabled checks and
writes its artifacts. Tables and sweeps fan out over seeded initial conditions;
each initial condition is simulated once to the longest horizon and windowed
for the shorter ones.
"""
from __future__ import annotations

import csv
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from app.core.config import settings
from app.core.errors import DesignError, InvalidInputError, LipschitzValidityError, SimulationAbort
from app.models.schemas import (
    ChecksSpec, DesignFile, DesignInputs, SimConfig, SimulationRequest, SimulationSummary,
)
from app.services import design as design_mod
from app.services.analysis import (
    GainReport, TABLE_HORIZONS, admissibility_check, convergence_check, dissipation_residual,
    invariance_check, invariant_set_radius, inter_event_stats, l2_report, practical_stability_radius,
)
from app.services.corpus import Scenario
from app.services.scenario_loader import LoadedScenario, build_scenario, parse_model, rule_from_spec
from app.services.simulator import RunRecord, simulate
from app.services.trigger import TriggerRule

logger = logging.getLogger(__name__)

TABLE_RULES = ("static", "continuous", "discrete")
SEPARATION_SLACK = 1e-3


# --- single runs -------------------------------------------------------------

@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    value: float
    detail: str = ""


@dataclass
class RunOutcome:
    scenario: str
    rule: str
    record: RunRecord
    gain: GainReport
    residual: float
    checks: List[CheckResult]
    artifacts: Dict[str, Path] = field(default_factory=dict)
    design: Optional[design_mod.DesignResult] = None

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def failures(self) -> List[CheckResult]:
        return [c for c in self.checks if not c.passed]


def run_invariant_set(scenario: Scenario, x0: Sequence[float]) -> Tuple[float, float]:
    """(eps_bar, Q) for a run; an initial condition outside epsilon enlarges the set."""
    radius = scenario.certs.level_norm(np.asarray(x0, dtype=float))
    if radius <= scenario.epsilon:
        return scenario.eps_bar, scenario.Q
    return invariant_set_radius(scenario.certs, radius, scenario.plant.L_gamma3)


def separation_bound(scenario: Scenario) -> Optional[float]:
    """Proven lower bound on inter-event times, if the scenario supplies one."""
    try:
        return scenario.expected_value("tau_bound").value
    except KeyError:
        pass
    if scenario.design_inputs is None:
        return None
    return design_mod.inter_event_bound(scenario.design_inputs)


def evaluate_checks(scenario: Scenario, rule: TriggerRule, record: RunRecord, gain: GainReport,
                    residual: float, spec: ChecksSpec) -> List[CheckResult]:
    certs = scenario.certs
    results: List[CheckResult] = []
    if spec.gain:
        results.append(CheckResult("gain", gain.passed, gain.margin,
                                   f"min(bound - ratio) = {gain.margin:.6g}"))
    if spec.residual:
        results.append(CheckResult("residual", residual <= spec.residual_tolerance, residual,
                                   f"max residual after decay allowance = {residual:.6g}"))
    if spec.invariance or spec.admissibility:
        eps_bar, Q = run_invariant_set(scenario, record.x0)
        if spec.invariance:
            ok, peak = invariance_check(record, certs, eps_bar)
            results.append(CheckResult("invariance", ok, peak, f"max|x| = {peak:.6g}, eps_bar = {eps_bar:.6g}"))
        if spec.admissibility:
            ok, peak = admissibility_check(record, Q)
            results.append(CheckResult("admissibility", ok, peak, f"max|w| = {peak:.6g}, Q = {Q:.6g}"))
    if spec.convergence:
        rho = practical_stability_radius(rule) if rule.is_decaying else 0.0
        floor = 1e-3 * certs.norm(record.x0)
        conv = convergence_check(record, rho, floor, certs.state_norm)
        results.append(CheckResult("convergence", conv.passed, conv.final_norm,
                                   f"|x(T)| = {conv.final_norm:.6g}, radius = {conv.radius:.6g}"))
    if spec.separation:
        try:
            bound = separation_bound(scenario)
        except (DesignError, LipschitzValidityError) as e:
            results.append(CheckResult("separation", False, math.nan, f"no inter-event bound: {e}"))
        else:
            gaps = record.gaps
            gap = float(np.min(gaps)) if gaps.size else math.inf
            if bound is None:
                results.append(CheckResult("separation", False, gap, "scenario supplies no inter-event bound"))
            else:
                results.append(CheckResult("separation", gap >= bound - SEPARATION_SLACK, gap,
                                           f"min gap = {gap:.6g}, bound = {bound:.6g}"))
    return results


def _design_or_note(scenario: Scenario) -> Tuple[Optional[design_mod.DesignResult], str]:
    if scenario.design_inputs is None:
        return None, "valid = false\nnote = scenario carries no design inputs\n"
    try:
        res = design_mod.design(scenario.design_inputs)
    except (DesignError, LipschitzValidityError) as e:
        return None, f"valid = false\nerror = {e}\n"
    return res, res.to_text()


# --- Monte Carlo ---------------------------------------------------------------

def sample_initial_conditions(distribution: str, n: int, dim: int, radius: float, seed: int) -> np.ndarray:
    """n initial conditions drawn uniformly from the interval/box or the Euclidean ball of ``radius``."""
    if n < 1 or radius <= 0.0:
        raise InvalidInputError(f"need n >= 1 and radius > 0, got n={n}, radius={radius}")
    rng = np.random.default_rng(seed)
    if distribution == "uniform_interval":
        return rng.uniform(-radius, radius, size=(n, dim))
    if distribution == "uniform_ball":
        directions = rng.standard_normal((n, dim))
        directions /= np.linalg.norm(directions, axis=1, keepdims=True)
        return directions * radius * rng.uniform(0.0, 1.0, size=(n, 1)) ** (1.0 / dim)
    raise InvalidInputError(f"unknown initial-condition distribution '{distribution}'")


def derive_seed(seed: int, index: int) -> int:
    """Per-run seed: seed XOR index, hashed through a SeedSequence."""
    return int(np.random.SeedSequence(seed ^ index).generate_state(1, dtype=np.uint64)[0])


def _freeze(value: Any) -> Any:
    if isinstance(value, (list, tuple)):
        return tuple(_freeze(v) for v in value)
    return value


@lru_cache(maxsize=16)
def _cached_scenario(name: str, params: Tuple[Tuple[str, Any], ...]) -> Scenario:
    return build_scenario(name, dict(params))


@dataclass(frozen=True)
class McJob:
    index: int
    scenario: str
    params: Tuple[Tuple[str, Any], ...]
    variant: str
    x0: Tuple[float, ...]
    t_end: float
    seed: int
    dt: Optional[float] = None
    disturbance: Optional[Dict[str, Any]] = None


def run_job(job: McJob) -> Tuple[int, str, np.ndarray, bool]:
    """Simulate one initial condition; returns (index, variant, event times, aborted)."""
    scenario = _cached_scenario(job.scenario, job.params)
    overrides: Dict[str, Any] = {"x0": list(job.x0), "t_end": job.t_end, "seed": job.seed, "epsilon": None}
    if job.dt is not None:
        overrides["dt"] = job.dt
        overrides["event_tol"] = min(settings.DEFAULT_EVENT_TOL, job.dt)
    if job.disturbance is not None:
        overrides["disturbance"] = job.disturbance
    config = scenario.sim_config(**overrides)
    try:
        record = simulate(scenario.plant, scenario.certs, scenario.rule(job.variant), config)
    except SimulationAbort as e:
        events = e.record.events if e.record is not None else np.zeros(1)
        logger.warning(f"Monte-Carlo run {job.index} ({job.variant}) aborted at t={e.t:.6g}: {e}")
        return job.index, job.variant, events, True
    return job.index, job.variant, record.events, False


def _execute(jobs: List[McJob]) -> List[Tuple[int, str, np.ndarray, bool]]:
    if settings.MC_WORKERS > 0 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=settings.MC_WORKERS) as pool:
            results = list(pool.map(run_job, jobs, chunksize=max(1, len(jobs) // (4 * settings.MC_WORKERS))))
    else:
        results = [run_job(job) for job in jobs]
    return sorted(results, key=lambda r: (r[1], r[0]))


@dataclass
class TableRow:
    scenario: str
    rule: str
    horizon: float
    mean_count: float
    min_gap: Optional[float]
    published_count: Optional[float] = None
    published_min_gap: Optional[float] = None
    count_ok: Optional[bool] = None
    gap_ok: Optional[bool] = None
    aborted: int = 0
    parameter: Optional[str] = None
    value: Optional[float] = None

    def judge(self, tolerance: float) -> None:
        if self.published_count is not None:
            self.count_ok = abs(self.mean_count - self.published_count) <= tolerance * self.published_count
        if self.published_min_gap is not None and self.min_gap is not None:
            self.gap_ok = abs(self.min_gap - self.published_min_gap) <= tolerance * self.published_min_gap


CSV_FIELDS = ("scenario", "parameter", "value", "rule", "horizon", "mean_count", "min_gap",
              "published_count", "published_min_gap", "count_ok", "gap_ok", "aborted")


def _cell(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return str(value).lower()
    if isinstance(value, float):
        return f"{value:.12g}"
    return str(value)


def write_rows(rows: Sequence[TableRow], path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_FIELDS)
        for row in rows:
            writer.writerow([_cell(getattr(row, name)) for name in CSV_FIELDS])
    return path


@dataclass
class TableResult:
    scenario: str
    rows: List[TableRow]
    path: Optional[Path] = None

    def row(self, rule: str, horizon: float) -> TableRow:
        for r in self.rows:
            if r.rule == rule and math.isclose(r.horizon, horizon):
                return r
        raise KeyError((rule, horizon))

    def ordering_ok(self, horizon: float = TABLE_HORIZONS[0]) -> bool:
        """Static fires more often than each decaying rule, and no decaying rule has a shorter min gap."""
        static = self.row("static", horizon)
        for rule in ("continuous", "discrete"):
            try:
                other = self.row(rule, horizon)
            except KeyError:
                continue
            if not static.mean_count > other.mean_count:
                return False
            if static.min_gap is not None and other.min_gap is not None and other.min_gap < static.min_gap:
                return False
        return True

    def static_within_tolerance(self) -> bool:
        return all(r.count_ok is not False and r.gap_ok is not False for r in self.rows if r.rule == "static")

    @property
    def passed(self) -> bool:
        return self.ordering_ok() and self.static_within_tolerance()


def _aggregate(events_by_ic: List[np.ndarray], horizon: float) -> Tuple[float, Optional[float]]:
    """Mean event count and mean per-run minimum gap over the initial conditions."""
    counts, gaps = [], []
    for events in events_by_ic:
        windowed = events[events <= horizon + 1e-12]
        counts.append(windowed.size)
        if windowed.size > 1:
            gaps.append(float(np.min(np.diff(windowed))))
    return float(np.mean(counts)), (float(np.mean(gaps)) if gaps else None)


class ExperimentService:
    """
    Runs scenarios, Monte-Carlo tables, parameter sweeps and designs, and
    writes their artifacts under the configured output directory.
    """

    def __init__(self, output_dir: Optional[str] = None):
        self.output_dir = Path(output_dir or settings.OUTPUT_DIR)
        logger.info(f"ExperimentService initialized (outputs={self.output_dir}, mc_workers={settings.MC_WORKERS})")

    # 1. Single runs
    def run(self, loaded: LoadedScenario, out_dir: Optional[Path] = None) -> RunOutcome:
        scenario, rule, sim = loaded.scenario, loaded.rule, loaded.sim
        checks = loaded.file.checks
        out = Path(out_dir or loaded.file.outputs)
        started = time.perf_counter()
        try:
            record = simulate(scenario.plant, scenario.certs, rule, sim)
        except SimulationAbort as e:
            if e.record is not None:
                e.record.to_csv(out / "trajectory.csv")
                e.record.events_to_csv(out / "events.csv")
            logger.error(f"RUN ABORTED: {scenario.name}/{rule.kind.value}: {e}")
            raise

        gain = l2_report(record, scenario.certs, rule, tolerance=checks.gain_tolerance)
        residual = dissipation_residual(record, scenario.certs, scenario.plant, rule)
        results = evaluate_checks(scenario, rule, record, gain, residual, checks)
        design_result, design_text = _design_or_note(scenario)

        artifacts = {
            "trajectory": record.to_csv(out / "trajectory.csv"),
            "events": record.events_to_csv(out / "events.csv"),
            "gain_report": self._write_text(out / "gain_report.txt", self._gain_text(gain, residual, results)),
            "gain_curves": gain.curves_to_csv(out / "gain_curves.csv"),
            "design_report": self._write_text(out / "design_report.txt", design_text),
        }
        outcome = RunOutcome(scenario.name, rule.kind.value, record, gain, residual, results, artifacts, design_result)
        elapsed = time.perf_counter() - started
        verdict = "PASS" if outcome.passed else "FAIL " + ",".join(c.name for c in outcome.failures())
        logger.info(f"RUN COMPLETE: {scenario.name}/{rule.kind.value} events={record.n_events} "
                    f"elapsed={elapsed:.2f}s verdict={verdict}")
        return outcome

    @staticmethod
    def _gain_text(gain: GainReport, residual: float, results: List[CheckResult]) -> str:
        lines = [gain.to_text().rstrip("\n"), f"residual = {residual:.12g}"]
        lines.extend(f"check.{c.name} = {'pass' if c.passed else 'fail'} ({c.detail})" for c in results)
        return "\n".join(lines) + "\n"

    @staticmethod
    def _write_text(path: Path, text: str) -> Path:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text)
        return path

    def summarize(self, request: SimulationRequest) -> SimulationSummary:
        """Run one corpus scenario for the HTTP layer and condense the verdicts."""
        scenario = build_scenario(request.scenario, dict(request.params))
        rule = rule_from_spec(scenario, request.rule)
        overrides: Dict[str, Any] = {"t_end": request.t_end}
        for name in ("dt", "x0", "disturbance", "seed"):
            value = getattr(request, name)
            if value is not None:
                overrides[name] = value.model_dump() if name == "disturbance" else value
        if "dt" in overrides:
            overrides["event_tol"] = min(settings.DEFAULT_EVENT_TOL, overrides["dt"])
        sim = parse_model(SimConfig, {**scenario.sim_defaults.model_dump(), **overrides},
                          source="simulate request", prefix="sim")

        started = time.perf_counter()
        record = simulate(scenario.plant, scenario.certs, rule, sim)
        latency_ms = (time.perf_counter() - started) * 1000.0

        gain = l2_report(record, scenario.certs, rule)
        residual = dissipation_residual(record, scenario.certs, scenario.plant, rule)
        eps_bar, _ = run_invariant_set(scenario, record.x0)
        invariant_ok, _ = invariance_check(record, scenario.certs, eps_bar)
        stats = inter_event_stats(record, horizons=())
        return SimulationSummary(
            scenario=scenario.name, rule=rule.kind.value, event_count=stats.count,
            min_gap=stats.min_gap, mean_gap=stats.mean_gap,
            first_events=[float(t) for t in record.events[:10]],
            gain_pass=gain.passed, gain_margin=gain.margin, max_residual=residual,
            invariant_pass=invariant_ok, latency_ms=latency_ms,
        )

    # 2. Monte-Carlo tables
    def _monte_carlo(self, scenario: Scenario, params: Dict[str, Any], variants: Sequence[str],
                     t_end: float, n_ic: int, seed: int, dt: Optional[float],
                     disturbance: Optional[Dict[str, Any]],
                     ic_distribution: Optional[str] = None) -> Dict[str, Tuple[List[np.ndarray], int]]:
        distribution = ic_distribution or scenario.ic_distribution
        ics = sample_initial_conditions(distribution, n_ic, scenario.plant.n, scenario.epsilon, seed)
        frozen = tuple(sorted((k, _freeze(v)) for k, v in params.items()))
        jobs = [
            McJob(index=i, scenario=scenario.name, params=frozen, variant=variant,
                  x0=tuple(float(v) for v in ics[i]), t_end=t_end, seed=derive_seed(seed, i),
                  dt=dt, disturbance=disturbance)
            for variant in variants for i in range(n_ic)
        ]
        grouped: Dict[str, Tuple[List[np.ndarray], int]] = {v: ([], 0) for v in variants}
        for _, variant, events, aborted in _execute(jobs):
            runs, count = grouped[variant]
            runs.append(events)
            grouped[variant] = (runs, count + int(aborted))
        return grouped

    def tables(self, name: str, horizons: Sequence[float] = TABLE_HORIZONS, n_ic: Optional[int] = None,
               seed: Optional[int] = None, params: Optional[Dict[str, Any]] = None,
               out_dir: Optional[Path] = None, tolerance: float = 0.5, dt: Optional[float] = None,
               disturbance: Optional[Dict[str, Any]] = None,
               rules: Sequence[str] = TABLE_RULES, ic_distribution: Optional[str] = None) -> TableResult:
        n_ic = n_ic or settings.DEFAULT_N_IC
        seed = settings.DEFAULT_SEED if seed is None else seed
        params = dict(params or {})
        scenario = build_scenario(name, params)
        variants = [r for r in rules if r in scenario.rules]
        horizons = sorted(float(h) for h in horizons)
        logger.info(f"TABLES: {name} rules={variants} horizons={horizons} n_ic={n_ic} seed={seed} "
                    f"ics={ic_distribution or scenario.ic_distribution}")

        grouped = self._monte_carlo(scenario, params, variants, horizons[-1], n_ic, seed, dt, disturbance,
                                    ic_distribution)
        rows: List[TableRow] = []
        for variant in variants:
            runs, aborted = grouped[variant]
            for h in horizons:
                mean_count, min_gap = _aggregate(runs, h)
                published = scenario.table.get(variant, {}).get(h)
                row = TableRow(name, variant, h, mean_count, min_gap,
                               published_count=published[0] if published else None,
                               published_min_gap=published[1] if published else None, aborted=aborted)
                row.judge(tolerance)
                rows.append(row)

        result = TableResult(name, rows)
        result.path = write_rows(rows, Path(out_dir or self.output_dir / name) / "table.csv")
        logger.info(f"TABLES COMPLETE: {name} ordering={'ok' if result.ordering_ok(horizons[0]) else 'violated'} "
                    f"static_within_tolerance={result.static_within_tolerance()}")
        return result

    # 3. Parameter sweeps
    def sweep(self, name: str, parameter: str, values: Sequence[float], horizon: float = 10.0,
              n_ic: Optional[int] = None, seed: Optional[int] = None, params: Optional[Dict[str, Any]] = None,
              out_dir: Optional[Path] = None, tolerance: float = 0.5,
              rules: Sequence[str] = TABLE_RULES, ic_distribution: Optional[str] = None) -> TableResult:
        if not values:
            raise InvalidInputError("sweep needs at least one parameter value")
        n_ic = n_ic or settings.DEFAULT_N_IC
        seed = settings.DEFAULT_SEED if seed is None else seed
        rows: List[TableRow] = []
        for value in values:
            run_params = {**(params or {}), parameter: float(value)}
            scenario = build_scenario(name, run_params)
            variants = [r for r in rules if r in scenario.rules]
            reference = self._sweep_reference(scenario, parameter, float(value))
            grouped = self._monte_carlo(scenario, run_params, variants, horizon, n_ic, seed, None, None,
                                        ic_distribution)
            for variant in variants:
                runs, aborted = grouped[variant]
                mean_count, min_gap = _aggregate(runs, horizon)
                published = reference.get(variant)
                row = TableRow(name, variant, horizon, mean_count, min_gap,
                               published_count=published[0] if published else None,
                               published_min_gap=published[1] if published else None,
                               aborted=aborted, parameter=parameter, value=float(value))
                row.judge(tolerance)
                rows.append(row)
            logger.info(f"SWEEP: {name} {parameter}={value:g} done")

        result = TableResult(name, rows)
        result.path = write_rows(rows, Path(out_dir or self.output_dir / name) / f"sweep_{parameter}.csv")
        return result

    @staticmethod
    def _sweep_reference(scenario: Scenario, parameter: str, value: float) -> Dict[str, Tuple[float, float]]:
        if parameter != "lam" or not scenario.lambda_sweep:
            return {}
        for key, row in scenario.lambda_sweep.items():
            if math.isclose(key, value, rel_tol=1e-9):
                return dict(row)
        return {}

    @staticmethod
    def static_trend_ok(result: TableResult) -> bool:
        """Static counts are non-decreasing in the swept value."""
        static = sorted((r for r in result.rows if r.rule == "static"), key=lambda r: r.value)
        counts = [r.mean_count for r in static]
        return all(b >= a for a, b in zip(counts, counts[1:]))

    # 4. Design
    def design_inputs(self, file: DesignFile) -> DesignInputs:
        if file.inputs is not None:
            return file.inputs
        scenario = build_scenario(file.scenario, dict(file.params))
        if scenario.design_inputs is None:
            raise InvalidInputError(f"scenario '{scenario.name}' carries no design inputs")
        if not file.overrides:
            return scenario.design_inputs
        merged = {**scenario.design_inputs.model_dump(), **file.overrides}
        return parse_model(DesignInputs, merged, source=f"scenario '{scenario.name}'", prefix="overrides")

    def design(self, inputs: DesignInputs, mode: str = "both", out_dir: Optional[Path] = None) -> design_mod.DesignResult:
        try:
            result = design_mod.design(inputs, mode)
        except (DesignError, LipschitzValidityError) as e:
            logger.error(f"DESIGN REJECTED: {e}")
            if out_dir is not None:
                self._write_text(Path(out_dir) / "design_report.txt", f"valid = false\nerror = {e}\n")
            raise
        if out_dir is not None:
            self._write_text(Path(out_dir) / "design_report.txt", result.to_text())
        return result
