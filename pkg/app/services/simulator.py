"""
Fixed-step RK4 simulation of an event-triggered loop.

The control input is held between events (zero-order hold); the disturbance
is evaluated at every RK4 stage. The trigger margin is checked at every grid
point and a crossing inside a step is localized by bisection, re-integrating
from the left grid point. Several events may fall inside one step.
"""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional

import numpy as np
from scipy.integrate import cumulative_trapezoid

from app.core.config import settings
from app.core.errors import BracketError, DivergenceError, InvalidInputError, ZenoSuspicionError
from app.models.schemas import SimConfig
from app.services.certificates import CertificateSet, PlantBundle
from app.services.disturbance import DisturbanceGenerator
from app.services.trigger import TriggerContext, TriggerRule, margin, next_forced_deadline, threshold

logger = logging.getLogger(__name__)

WFn = Callable[[float, np.ndarray], np.ndarray]


@dataclass
class RunRecord:
    """Sampled trajectory of one run. Event samples carry fired=True and post-reset values."""
    t: np.ndarray
    x: np.ndarray
    u: np.ndarray
    w: np.ndarray
    z: np.ndarray
    e_norm: np.ndarray
    threshold: np.ndarray
    fired: np.ndarray
    events: np.ndarray
    z_energy: np.ndarray
    w_energy: np.ndarray
    trigger_checks: int = 0
    meta: Dict[str, Any] = field(default_factory=dict)

    @property
    def n_events(self) -> int:
        return int(self.events.size)

    @property
    def gaps(self) -> np.ndarray:
        return np.diff(self.events)

    @property
    def x0(self) -> np.ndarray:
        return self.x[0]

    def window(self, horizon: float) -> "RunRecord":
        """Prefix of the run up to ``horizon`` (samples and events with t <= horizon)."""
        keep = self.t <= horizon + 1e-12
        return RunRecord(
            t=self.t[keep], x=self.x[keep], u=self.u[keep], w=self.w[keep], z=self.z[keep],
            e_norm=self.e_norm[keep], threshold=self.threshold[keep], fired=self.fired[keep],
            events=self.events[self.events <= horizon + 1e-12],
            z_energy=self.z_energy[keep], w_energy=self.w_energy[keep],
            trigger_checks=self.trigger_checks, meta={**self.meta, "horizon": horizon},
        )

    def to_csv(self, path: Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        header = (["t"] + [f"x{j + 1}" for j in range(self.x.shape[1])]
                  + [f"u{j + 1}" for j in range(self.u.shape[1])]
                  + [f"w{j + 1}" for j in range(self.w.shape[1])]
                  + [f"z{j + 1}" for j in range(self.z.shape[1])]
                  + ["e_norm", "threshold", "fired"])
        with path.open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            for k in range(self.t.size):
                row = [self.t[k], *self.x[k], *self.u[k], *self.w[k], *self.z[k], self.e_norm[k], self.threshold[k]]
                writer.writerow([f"{v:.12g}" for v in row] + [int(self.fired[k])])
        return path

    def events_to_csv(self, path: Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["index", "t", "gap"])
            prev = None
            for idx, t in enumerate(self.events):
                gap = "" if prev is None else f"{t - prev:.12g}"
                writer.writerow([idx, f"{t:.12g}", gap])
                prev = t
        return path


def rk4_step(plant: PlantBundle, x: np.ndarray, u_held: np.ndarray, w_fn: WFn,
             t: float, dt: float) -> np.ndarray:
    if dt <= 0.0:
        raise InvalidInputError(f"rk4_step needs dt > 0, got {dt}")
    f = plant.f
    k1 = np.asarray(f(x, u_held, w_fn(t, x)), dtype=float)
    x2 = x + 0.5 * dt * k1
    k2 = np.asarray(f(x2, u_held, w_fn(t + 0.5 * dt, x2)), dtype=float)
    x3 = x + 0.5 * dt * k2
    k3 = np.asarray(f(x3, u_held, w_fn(t + 0.5 * dt, x3)), dtype=float)
    x4 = x + dt * k3
    k4 = np.asarray(f(x4, u_held, w_fn(t + dt, x4)), dtype=float)
    x_next = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    if not np.all(np.isfinite(x_next)):
        raise DivergenceError(f"non-finite state at t={t + dt:.6g}", t + dt)
    return x_next


def locate_crossing(trigger_fn: Callable[[float], float], t_lo: float, t_hi: float,
                    event_tol: float) -> float:
    """
    Bisection on a sign change of the trigger margin; returns the right
    endpoint of the final bracket, so the returned time always fires.
    """
    m_lo, m_hi = trigger_fn(t_lo), trigger_fn(t_hi)
    if not (m_lo < 0.0 <= m_hi):
        raise BracketError(f"no sign change on [{t_lo:.9g}, {t_hi:.9g}]: margins {m_lo:.3e}, {m_hi:.3e}")
    while t_hi - t_lo > event_tol:
        mid = 0.5 * (t_lo + t_hi)
        if mid <= t_lo or mid >= t_hi:
            break
        if trigger_fn(mid) >= 0.0:
            t_hi = mid
        else:
            t_lo = mid
    return t_hi


class _Loop:
    """Mutable state of the sample-and-hold loop during one run."""

    def __init__(self, plant: PlantBundle, certs: CertificateSet, rule: TriggerRule,
                 dist: DisturbanceGenerator, x0: np.ndarray):
        self.plant = plant
        self.certs = certs
        self.rule = rule
        self.dist = dist
        self.t = 0.0
        self.x = x0.copy()
        self.x_last = x0.copy()
        self.t_last = 0.0
        self.u = np.asarray(plant.k(self.x_last), dtype=float)
        self.events: List[float] = [0.0]
        self.checks = 0

    def w(self, t: float, x: np.ndarray) -> np.ndarray:
        return np.asarray(self.dist(t, x, self.t_last), dtype=float)

    def context(self, t: float, x: np.ndarray) -> TriggerContext:
        return TriggerContext(t=t, i=len(self.events), t_last=self.t_last, x=x, e=self.x_last - x)

    def margin_at(self, t: float, x: np.ndarray) -> float:
        self.checks += 1
        return margin(self.rule, self.context(t, x))

    def advance(self, dt: float) -> np.ndarray:
        return rk4_step(self.plant, self.x, self.u, self.w, self.t, dt)

    def fire(self, t: float, x: np.ndarray) -> None:
        self.t, self.x = t, x
        self.x_last = x.copy()
        self.t_last = t
        self.u = np.asarray(self.plant.k(self.x_last), dtype=float)
        self.events.append(t)


class _Samples:
    def __init__(self):
        self.rows: List[tuple] = []

    def log(self, loop: _Loop, fired: bool) -> None:
        t, x = loop.t, loop.x
        w = loop.w(t, x)
        z = np.asarray(loop.plant.h(x, w), dtype=float)
        ctx = loop.context(t, x)
        self.rows.append((t, x.copy(), loop.u.copy(), w, z,
                          loop.certs.error_size(ctx.e), threshold(loop.rule, ctx), fired))

    def build(self, loop: _Loop, meta: Dict[str, Any]) -> RunRecord:
        t = np.array([r[0] for r in self.rows])
        x = np.array([r[1] for r in self.rows])
        u = np.array([np.atleast_1d(r[2]) for r in self.rows])
        w = np.array([np.atleast_1d(r[3]) for r in self.rows])
        z = np.array([np.atleast_1d(r[4]) for r in self.rows])
        if t.size > 1:
            z_energy = cumulative_trapezoid(np.sum(z ** 2, axis=1), t, initial=0.0)
            w_energy = cumulative_trapezoid(np.sum(w ** 2, axis=1), t, initial=0.0)
        else:
            z_energy = np.zeros(t.size)
            w_energy = np.zeros(t.size)
        return RunRecord(
            t=t, x=x, u=u, w=w, z=z,
            e_norm=np.array([r[5] for r in self.rows]),
            threshold=np.array([r[6] for r in self.rows]),
            fired=np.array([r[7] for r in self.rows], dtype=bool),
            events=np.array(loop.events),
            z_energy=z_energy, w_energy=w_energy,
            trigger_checks=loop.checks, meta=meta,
        )


def simulate(plant: PlantBundle, certs: CertificateSet, rule: TriggerRule, config: SimConfig,
             max_events_per_unit_time: Optional[float] = None,
             zeno_window: Optional[int] = None,
             divergence_bound: Optional[float] = None) -> RunRecord:
    """
    Run the event-triggered loop on [0, t_end]. The first event is at t=0.

    Raises DivergenceError when the state blows up and ZenoSuspicionError
    when the last ``zeno_window`` events span less than
    zeno_window / max_events_per_unit_time; both carry the partial record.
    """
    max_rate = max_events_per_unit_time or settings.MAX_EVENTS_PER_UNIT_TIME
    window = zeno_window or settings.ZENO_WINDOW_EVENTS
    bound = divergence_bound or settings.DIVERGENCE_BOUND

    # 1. Validate the initial condition against the plant and the admissible set
    x0 = np.asarray(config.x0, dtype=float)
    if x0.shape != (plant.n,):
        raise InvalidInputError(f"{plant.name}: x0 needs {plant.n} entries, got {x0.size}")
    if config.epsilon is not None and certs.level_norm(x0) > config.epsilon * (1.0 + 1e-12):
        raise InvalidInputError(
            f"{plant.name}: |x0|={certs.level_norm(x0):.6g} outside the admissible radius {config.epsilon:g}"
        )

    # 2. Build the loop state
    dist = DisturbanceGenerator(config.disturbance, plant, config.t_end, config.seed,
                                config.dt, certs.state_norm)
    loop = _Loop(plant, certs, rule, dist, x0)
    samples = _Samples()
    samples.log(loop, fired=True)
    meta = {"plant": plant.name, **rule.describe(), "t_end": config.t_end, "dt": config.dt,
            "seed": config.seed, "disturbance": config.disturbance.mode}

    def abort_record() -> RunRecord:
        return samples.build(loop, {**meta, "aborted": True})

    # 3. Integrate grid step by grid step
    dt, t_end = config.dt, config.t_end
    while loop.t < t_end - 1e-12:
        k = math.floor(loop.t / dt + 1e-9) + 1
        if k * dt - loop.t < 1e-12:
            k += 1
        target = min(k * dt, t_end)
        forced = False
        deadline = next_forced_deadline(rule, loop.context(loop.t, loop.x))
        if deadline is not None and deadline <= target:
            target, forced = max(deadline, loop.t + 1e-15), True

        x_next = loop.advance(target - loop.t)
        if loop.margin_at(target, x_next) >= 0.0:
            t0, x_start = loop.t, loop.x

            def trig(s: float) -> float:
                if s <= t0:
                    return loop.margin_at(t0, x_start)
                return loop.margin_at(s, loop.advance(s - t0))

            t_ev = locate_crossing(trig, t0, target, config.event_tol)
            x_ev = x_next if t_ev == target else loop.advance(t_ev - t0)
            loop.fire(t_ev, x_ev)
            samples.log(loop, fired=True)
            fired = True
        elif forced:
            loop.fire(target, x_next)
            samples.log(loop, fired=True)
            fired = True
        else:
            loop.t, loop.x = target, x_next
            samples.log(loop, fired=False)
            fired = False

        # 4. Guards: divergence after every accepted step, accumulation after events
        if not np.all(np.isfinite(loop.x)) or float(np.max(np.abs(loop.x))) > bound:
            raise DivergenceError(
                f"{plant.name}: |x| exceeded {bound:g} at t={loop.t:.6g}", loop.t, abort_record()
            )
        if not fired:
            continue
        n = len(loop.events)
        if n > window and loop.events[-1] - loop.events[-1 - window] < window / max_rate:
            logger.warning(
                f"ZENO SUSPECTED: {window} events within "
                f"{loop.events[-1] - loop.events[-1 - window]:.3e}s near t={loop.t:.9g}"
            )
            raise ZenoSuspicionError(
                f"{plant.name}: event accumulation near t={loop.t:.9g} after {n} events",
                loop.t, n, abort_record(),
            )

    record = samples.build(loop, meta)
    logger.debug(f"Run finished: {plant.name} {rule.kind.value} events={record.n_events} "
                 f"checks={record.trigger_checks}")
    return record
