"""
Disturbance realizations for closed-loop runs.

Envelope modes keep |w| <= scale * min(gamma3(|x|), w_cap). The custom mode
replays a named plant signal as-is; adversarial signals are allowed to leave
the envelope.
"""
import logging
import math
from typing import Optional

import numpy as np

from app.core.errors import InvalidInputError
from app.models.schemas import DisturbanceSpec
from app.services.certificates import PlantBundle, vector_norm

logger = logging.getLogger(__name__)


def _unit(direction: Optional[list], q: int) -> np.ndarray:
    if direction is None:
        return np.ones(q) / math.sqrt(q)
    d = np.asarray(direction, dtype=float)
    if d.shape != (q,):
        raise InvalidInputError(f"disturbance direction needs {q} entries, got {d.size}")
    return d / np.linalg.norm(d)


def envelope(plant: PlantBundle, x: np.ndarray, state_norm: str = "euclidean") -> float:
    """Largest admissible |w| at state x."""
    return min(plant.gamma3(vector_norm(x, state_norm)), plant.w_cap)


def _random_direction(rng: np.random.Generator, q: int) -> np.ndarray:
    d = rng.standard_normal(q)
    norm = np.linalg.norm(d)
    if norm == 0.0:
        return np.ones(q) / math.sqrt(q)
    return d / norm


def gen_disturbance(spec: DisturbanceSpec, t: float, x: np.ndarray, rng: np.random.Generator,
                    plant: PlantBundle, state_norm: str = "euclidean", t_last: float = 0.0) -> np.ndarray:
    """
    One-off evaluation of w(t, x). Random-hold draws are taken straight from
    ``rng``; use DisturbanceGenerator inside a run for held values.
    """
    if spec.mode == "envelope_random_hold":
        bound = spec.scale * envelope(plant, x, state_norm)
        return bound * rng.uniform(0.0, 1.0) * _random_direction(rng, plant.q)
    return _deterministic(spec, t, x, plant, state_norm, t_last)


def _deterministic(spec: DisturbanceSpec, t: float, x: np.ndarray, plant: PlantBundle,
                   state_norm: str, t_last: float) -> np.ndarray:
    if spec.mode == "zero":
        return np.zeros(plant.q)
    if spec.mode == "envelope_constant":
        return spec.scale * envelope(plant, x, state_norm) * _unit(spec.direction, plant.q)
    if spec.mode == "sinusoid":
        amp = spec.scale * envelope(plant, x, state_norm)
        return amp * math.sin(2.0 * math.pi * spec.freq * t) * _unit(spec.direction, plant.q)
    if spec.mode == "custom":
        try:
            signal = plant.signals[spec.signal]
        except KeyError:
            raise InvalidInputError(
                f"{plant.name}: unknown signal '{spec.signal}', available: {sorted(plant.signals)}"
            ) from None
        return np.asarray(signal(t, x, t_last), dtype=float)
    raise InvalidInputError(f"disturbance mode '{spec.mode}' has no deterministic form")


class DisturbanceGenerator:
    """
    Stateful w(t, x, t_last) for one run.

    For envelope_random_hold the magnitudes and directions of every hold
    interval up to ``horizon`` are drawn once from a single seeded generator,
    so a run is reproducible regardless of how often w is sampled.
    """

    def __init__(self, spec: DisturbanceSpec, plant: PlantBundle, horizon: float,
                 seed: int, dt: float, state_norm: str = "euclidean"):
        self.spec = spec
        self.plant = plant
        self.state_norm = state_norm
        self.hold_dt = spec.hold_dt or dt
        self._fixed_dir = None
        self._magnitudes = None
        self._directions = None

        if spec.mode in ("envelope_constant", "sinusoid"):
            self._fixed_dir = _unit(spec.direction, plant.q)
        if spec.mode == "envelope_random_hold":
            rng = np.random.default_rng(seed)
            slots = int(math.ceil(horizon / self.hold_dt)) + 2
            self._magnitudes = rng.uniform(0.0, 1.0, size=slots)
            raw = rng.standard_normal((slots, plant.q))
            norms = np.linalg.norm(raw, axis=1, keepdims=True)
            norms[norms == 0.0] = 1.0
            self._directions = raw / norms
            logger.debug(f"Disturbance: {slots} hold draws precomputed (hold_dt={self.hold_dt:g})")

    def __call__(self, t: float, x: np.ndarray, t_last: float = 0.0) -> np.ndarray:
        if self.spec.mode == "envelope_random_hold":
            slot = min(int(math.floor(t / self.hold_dt + 1e-12)), self._magnitudes.size - 1)
            bound = self.spec.scale * envelope(self.plant, x, self.state_norm)
            return bound * self._magnitudes[slot] * self._directions[slot]
        if self.spec.mode == "envelope_constant":
            return self.spec.scale * envelope(self.plant, x, self.state_norm) * self._fixed_dir
        if self.spec.mode == "sinusoid":
            amp = self.spec.scale * envelope(self.plant, x, self.state_norm)
            return amp * math.sin(2.0 * math.pi * self.spec.freq * t) * self._fixed_dir
        return _deterministic(self.spec, t, x, self.plant, self.state_norm, t_last)
