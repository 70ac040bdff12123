"""
Post-run verification of the closed-loop guarantees.

All functions are pure over a finished RunRecord: L2-gain curves, the
dissipation residual, invariant-set and admissibility checks, practical
stability radii and inter-event statistics.
"""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from app.core.config import settings
from app.core.errors import InvalidInputError
from app.services.certificates import CertificateSet, PlantBundle, vector_norm
from app.services.simulator import RunRecord
from app.services.trigger import RuleKind, TriggerRule, discrete_weight

logger = logging.getLogger(__name__)

TABLE_HORIZONS = (10.0, 30.0, 100.0)


# --- L2 gain -------------------------------------------------------------

@dataclass
class GainReport:
    gamma: float
    eta: float
    mu0: float
    T: np.ndarray
    ratio: np.ndarray
    bound: np.ndarray
    passed: bool
    margin: float
    z_energy: float
    w_energy: float
    degenerate: bool = False
    tolerance: float = 0.0

    def to_text(self) -> str:
        lines = [
            f"gamma = {self.gamma:.12g}",
            f"eta = {self.eta:.12g}",
            f"mu0 = {self.mu0:.12g}",
            f"z_energy = {self.z_energy:.12g}",
            f"w_energy = {self.w_energy:.12g}",
            f"degenerate = {str(self.degenerate).lower()}",
            f"margin = {self.margin:.12g}",
            f"tolerance = {self.tolerance:.12g}",
            f"pass = {str(self.passed).lower()}",
        ]
        return "\n".join(lines) + "\n"

    def curves_to_csv(self, path: Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["T", "ratio", "bound"])
            for T, ratio, bound in zip(self.T, self.ratio, self.bound):
                writer.writerow([f"{T:.12g}", f"{ratio:.12g}", f"{bound:.12g}"])
        return path


def gain_bias(rule: TriggerRule) -> float:
    """eta in the gain inequality, in units of the scaled storage s*U."""
    s = rule.certs.storage_scale
    if rule.kind is RuleKind.CONTINUOUS:
        return s * rule.kappa / rule.zeta
    if rule.kind is RuleKind.DISCRETE:
        return s * rule.kappa_hat * rule.delta * math.exp(rule.theta)
    return 0.0


def l2_report(record: RunRecord, certs: CertificateSet, rule: TriggerRule,
              tolerance: Optional[float] = None) -> GainReport:
    """
    Ratio curve int|z|^2 / int|w|^2 against gamma^2 + (mu(x0) + eta) / int|w|^2.
    With no disturbance energy the check degenerates to int|z|^2 <= mu(x0) + eta.
    """
    tol = settings.GAIN_TOLERANCE if tolerance is None else tolerance
    gamma = certs.l2_gain
    eta = gain_bias(rule)
    mu0 = certs.storage(record.x0)
    zE, wE = record.z_energy, record.w_energy

    mask = wE > 0.0
    if not np.any(mask):
        slack = mu0 + eta - float(zE[-1])
        return GainReport(gamma, eta, mu0, np.empty(0), np.empty(0), np.empty(0),
                          passed=slack >= -tol, margin=slack, z_energy=float(zE[-1]),
                          w_energy=0.0, degenerate=True, tolerance=tol)

    T = record.t[mask]
    ratio = zE[mask] / wE[mask]
    bound = gamma ** 2 + (mu0 + eta) / wE[mask]
    margin = float(np.min(bound - ratio))
    passed = margin >= -tol
    if not passed:
        worst = int(np.argmin(bound - ratio))
        logger.warning(f"GAIN CHECK FAILED: ratio {ratio[worst]:.6g} > bound {bound[worst]:.6g} at T={T[worst]:.6g}")
    return GainReport(gamma, eta, mu0, T, ratio, bound, passed, margin,
                      float(zE[-1]), float(wE[-1]), tolerance=tol)


# --- dissipation ---------------------------------------------------------

def dissipation_allowance(rule: Optional[TriggerRule], t: np.ndarray, events: np.ndarray) -> np.ndarray:
    """Pointwise slack s*decay(t) a decaying rule adds to the dissipation inequality."""
    if rule is None or not rule.is_decaying:
        return np.zeros_like(t)
    s = rule.certs.storage_scale
    if rule.kind is RuleKind.CONTINUOUS:
        return s * rule.kappa * np.exp(-rule.zeta * t)
    counts = np.searchsorted(events, t, side="right")
    return np.array([s * rule.kappa_hat * discrete_weight(rule.theta, int(i)) for i in counts])


def dissipation_series(record: RunRecord, certs: CertificateSet, plant: PlantBundle) -> np.ndarray:
    """grad(sU).f(x, u, w) - gamma^2|w|^2 + |z|^2 at every logged sample."""
    gamma2 = certs.l2_gain ** 2
    out = np.empty(record.t.size)
    for k in range(record.t.size):
        x, u, w, z = record.x[k], record.u[k], record.w[k], record.z[k]
        xdot = np.asarray(plant.f(x, u, w), dtype=float)
        out[k] = float(np.dot(certs.grad_storage(x), xdot)) - gamma2 * float(np.dot(w, w)) + float(np.dot(z, z))
    return out


def dissipation_residual(record: RunRecord, certs: CertificateSet, plant: PlantBundle,
                         rule: Optional[TriggerRule] = None) -> float:
    """Max over samples of the residual minus the rule's decay allowance (<= 0 predicted)."""
    series = dissipation_series(record, certs, plant)
    allowance = dissipation_allowance(rule, record.t, record.events)
    return float(np.max(series - allowance))


# --- invariant set, admissibility, stability -----------------------------

def invariant_set_radius(certs: CertificateSet, epsilon: float, L_gamma3: float) -> Tuple[float, float]:
    """(eps_bar, Q) with eps_bar = sigma1^-1(sigma2(epsilon)) and Q = L_gamma3 * eps_bar."""
    if epsilon <= 0.0:
        raise InvalidInputError(f"epsilon must be positive, got {epsilon}")
    eps_bar = certs.sigma1.inverse(certs.sigma2(epsilon))
    return eps_bar, L_gamma3 * eps_bar


def invariance_check(record: RunRecord, certs: CertificateSet, eps_bar: float,
                     tol: float = 1e-6) -> Tuple[bool, float]:
    peak = max(certs.level_norm(x) for x in record.x)
    return peak <= eps_bar + tol, float(peak)


def admissibility_check(record: RunRecord, Q: float) -> Tuple[bool, float]:
    peak = float(np.max(np.linalg.norm(record.w, axis=1))) if record.w.size else 0.0
    return peak < Q, peak


def practical_stability_radius(rule: TriggerRule, certs: Optional[CertificateSet] = None) -> float:
    certs = certs or rule.certs
    if rule.kind is RuleKind.CONTINUOUS:
        return certs.sigma_bar.inverse(rule.kappa / (1.0 - certs.c))
    if rule.kind is RuleKind.DISCRETE:
        k = math.floor(rule.theta)
        kappa_theta = rule.kappa_hat * discrete_weight(rule.theta, k)
        return certs.sigma_bar.inverse(kappa_theta / (1.0 - certs.c))
    return 0.0


@dataclass(frozen=True)
class ConvergenceResult:
    passed: bool
    radius: float
    final_norm: float
    entry_time: Optional[float]


def convergence_check(record: RunRecord, rho: float, floor: float = 1e-6,
                      norm: str = "euclidean") -> ConvergenceResult:
    """The state enters the max(rho, floor) ball and every later sample stays inside it."""
    radius = max(rho, floor)
    norms = np.array([vector_norm(x, norm) for x in record.x])
    inside = norms <= radius
    hits = np.flatnonzero(inside)
    if not hits.size:
        return ConvergenceResult(False, radius, float(norms[-1]), None)
    first = int(hits[0])
    return ConvergenceResult(bool(np.all(inside[first:])), radius, float(norms[-1]), float(record.t[first]))


def convergence_time_bound(rule: TriggerRule, certs: CertificateSet, r: float, eps: float,
                           max_gap: Optional[float] = None) -> float:
    """
    Sufficient time after which |x| < eps for |x0| <= r with w = 0:
    (sigma2(r) - sigma1(eps) + b) / ((1 - c) * sigma_bar(eps)).
    """
    if eps <= 0.0 or r < 0.0:
        raise InvalidInputError(f"need eps > 0 and r >= 0, got eps={eps}, r={r}")
    if rule.kind is RuleKind.CONTINUOUS:
        b = rule.kappa
    elif rule.kind is RuleKind.DISCRETE:
        gap = rule.delta if max_gap is None else max_gap
        b = gap * rule.kappa_hat * math.exp(rule.theta)
    else:
        b = 0.0
    numerator = certs.sigma2(r) - certs.sigma1(eps) + b
    return max(numerator, 0.0) / ((1.0 - certs.c) * certs.sigma_bar(eps))


def tabuada_implication(record: RunRecord, certs: CertificateSet, c: Optional[float] = None,
                        tol: float = 1e-9) -> List[float]:
    """Times at which beta1(|e|) <= c*sigma_bar(|x|) fails on the logged samples."""
    c = certs.c if c is None else c
    bad = []
    for t, x, e in zip(record.t, record.x, record.e_norm):
        lhs = certs.beta1(float(e))
        rhs = c * certs.sigma_bar(certs.norm(x))
        if lhs > rhs + tol * (1.0 + rhs):
            bad.append(float(t))
    return bad


# --- inter-event statistics ----------------------------------------------

@dataclass
class InterEventStats:
    count: int
    min_gap: Optional[float]
    mean_gap: Optional[float]
    counts: Dict[float, int] = field(default_factory=dict)
    min_gaps: Dict[float, Optional[float]] = field(default_factory=dict)


def _gap_stats(events: np.ndarray) -> Tuple[Optional[float], Optional[float]]:
    if events.size < 2:
        return None, None
    gaps = np.diff(events)
    return float(np.min(gaps)), float(np.mean(gaps))


def inter_event_stats(record_or_events, horizons: Sequence[float] = TABLE_HORIZONS) -> InterEventStats:
    events = record_or_events.events if isinstance(record_or_events, RunRecord) else np.asarray(record_or_events, float)
    if events.size < 1:
        raise InvalidInputError("inter_event_stats needs at least one event")
    min_gap, mean_gap = _gap_stats(events)
    counts: Dict[float, int] = {}
    min_gaps: Dict[float, Optional[float]] = {}
    for h in horizons:
        windowed = events[events <= h + 1e-12]
        counts[h] = int(windowed.size)
        min_gaps[h] = _gap_stats(windowed)[0]
    return InterEventStats(int(events.size), min_gap, mean_gap, counts, min_gaps)
