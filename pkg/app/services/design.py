"""
Inter-event time bounds and decay-term synthesis.

The comparison solution y(t) of y' = L_f (1 + y)(L + L_k y), y(0) = 0 bounds
|e|/|x| after an event; an event cannot occur before y reaches 1/L_bar. The
continuous and discrete designs pick kappa (resp. kappa_hat) so that the
first events are pushed out to tau + tau_star.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from app.core.errors import DesignError, InvalidInputError, LipschitzValidityError
from app.models.schemas import DesignInputs, DesignReportModel
from app.services.certificates import CertificateSet, estimate_lipschitz

logger = logging.getLogger(__name__)


# --- comparison system -----------------------------------------------------

def _check_constants(L_f: float, L_k: float, L: float) -> None:
    if L_f <= 0.0 or L_k < 0.0:
        raise InvalidInputError(f"need L_f > 0 and L_k >= 0, got L_f={L_f}, L_k={L_k}")
    if L <= L_k:
        raise InvalidInputError(f"need L > L_k, got L={L}, L_k={L_k}")


def y_closed_form(t: float, L_f: float, L_k: float, L: float) -> float:
    """
    y(t) = (E - 1) / (1 - (L_k/L) E), E = exp(L_f (L - L_k) t).
    Returns inf at and beyond the finite escape time E = L/L_k.
    """
    if t < 0.0:
        raise InvalidInputError(f"comparison solution needs t >= 0, got {t}")
    _check_constants(L_f, L_k, L)
    exponent = L_f * (L - L_k) * t
    ratio = L_k / L
    if ratio > 0.0 and exponent >= -math.log(ratio):
        return math.inf
    E = math.exp(exponent)
    return (E - 1.0) / (1.0 - ratio * E)


def y_inverse(y: float, L_f: float, L_k: float, L: float) -> float:
    """Time at which the comparison solution reaches ``y``."""
    if y < 0.0:
        raise InvalidInputError(f"y_inverse needs y >= 0, got {y}")
    _check_constants(L_f, L_k, L)
    return math.log((1.0 + y) / (1.0 + (L_k / L) * y)) / (L_f * (L - L_k))


def tau_static(L_f: float, L_k: float, L_gamma3: float, L_bar: float) -> float:
    """tau = ln(1 + (L - L_k)/(L*L_bar + L_k)) / (L_f (L - L_k)) with L = L_k + L_gamma3 + 1."""
    if min(L_f, L_k, L_gamma3, L_bar) <= 0.0:
        raise InvalidInputError("tau_static needs positive constants")
    L = L_k + L_gamma3 + 1.0
    return math.log1p((L - L_k) / (L * L_bar + L_k)) / (L_f * (L - L_k))


def tau_linear_envelope(norm_A: float, norm_BK: float, c_hat: float, p: float,
                        printed: bool = True) -> float:
    """
    Gap bound for x' = Ax + BKx(t_i) + w with |w| <= c_hat|x| and trigger |e| >= p|x|.

    ``printed=True`` returns the published closed form, which evaluates the
    comparison system at the level 1/p. ``printed=False`` evaluates it at p,
    the level the trigger actually imposes; that value is tight for scalar plants.
    """
    if norm_A < 0.0 or norm_BK < 0.0 or c_hat < 0.0 or p <= 0.0:
        raise InvalidInputError("tau_linear_envelope needs non-negative norms and p > 0")
    a = norm_A + c_hat
    if a == 0.0:
        return math.inf
    if printed:
        return math.log1p(a / (p * (norm_A + norm_BK + c_hat) + norm_BK)) / a
    return y_inverse(p, 1.0, norm_BK, norm_A + norm_BK + c_hat)


# --- Lipschitz composites ----------------------------------------------------

@dataclass(frozen=True)
class PsiLipschitz:
    value: float
    valid: bool
    inequality: str
    lhs: float

    def require(self) -> float:
        if not self.valid:
            raise LipschitzValidityError(
                f"psi^-1 is not Lipschitz with these constants: {self.inequality}",
                self.inequality, self.lhs,
            )
        return self.value


def l_psi_inv_from_constants(L_f: float, L_k: float, L_sigma3: float, L_sigmabar_inv: float,
                             sigmabar_eps: float, sigma0_eps: float) -> PsiLipschitz:
    """(1 + sigma0(eps))^2 / (1/L_sigmabar_inv - L_f L_k L_sigma3 sigma_bar(eps))."""
    L_sigma0 = L_f * L_k * L_sigma3
    lhs = L_sigma0 * L_sigmabar_inv * sigmabar_eps
    inequality = f"L_f*L_k*L_sigma3*L_sigmabar_inv*sigma_bar(eps) = {lhs:.6g} < 1"
    denominator = 1.0 / L_sigmabar_inv - L_sigma0 * sigmabar_eps
    if denominator <= 0.0:
        logger.warning(f"DESIGN REJECTED: {inequality} fails; rescale sigma3")
        return PsiLipschitz(math.inf, False, inequality, lhs)
    return PsiLipschitz((1.0 + sigma0_eps) ** 2 / denominator, True, inequality, lhs)


def l_psi_inv(certs: CertificateSet, eps_m: float, L_f: float, L_k: float) -> PsiLipschitz:
    return l_psi_inv_from_constants(L_f, L_k, certs.L_sigma3, certs.L_sigmabar_inv,
                                    certs.sigma_bar(eps_m), certs.sigma0(eps_m))


def estimate_l_bar(certs: CertificateSet, c: float, eps_bar: float,
                   samples: int = 200, seed: int = 0) -> float:
    """
    Sampled Lipschitz estimate of r -> psi^-1(beta1_bar(r)/c) on
    [0, beta1_bar^-1(c psi(eps_bar))]. Sampling gives a lower estimate only.
    """
    upper = certs.beta1_bar.inverse(c * certs.psi(eps_bar))
    fn = lambda r: certs.psi.inverse(certs.beta1_bar(r) / c)  # noqa: E731
    return estimate_lipschitz(fn, (0.0, upper), samples=samples, seed=seed)


def n_theta(theta: float) -> int:
    """Largest i >= 1 with theta^i / i! >= theta."""
    if theta <= 0.0:
        raise InvalidInputError(f"theta must be positive, got {theta}")
    # theta^i/i! rises while i < theta and then falls to 0, so the admissible set is {1..N_theta}
    if theta > 100.0:
        log_theta = math.log(theta)
        i = 1
        while (i + 1) * log_theta - math.lgamma(i + 2) >= log_theta:
            i += 1
        return i
    i, term = 1, theta
    while term * theta / (i + 1) >= theta:
        i, term = i + 1, term * theta / (i + 1)
    return i


# --- synthesis ---------------------------------------------------------------

@dataclass
class DesignResult:
    L: float
    L_psi_inv: float
    L_hat: float
    L_bar: float
    L_star: float
    tau: float
    N_theta: int
    tau1: Optional[float] = None
    tau2: Optional[float] = None
    kappa: Optional[float] = None
    kappa_hat: Optional[float] = None
    discrete_case: Optional[int] = None
    valid: bool = True
    notes: List[str] = field(default_factory=list)

    def to_model(self) -> DesignReportModel:
        return DesignReportModel(**self.__dict__)

    def to_text(self) -> str:
        lines = []
        for key, value in self.__dict__.items():
            if key == "notes":
                continue
            if value is None:
                continue
            if isinstance(value, bool):
                value = str(value).lower()
            elif isinstance(value, float):
                value = f"{value:.12g}"
            lines.append(f"{key} = {value}")
        lines.extend(f"note = {n}" for n in self.notes)
        return "\n".join(lines) + "\n"


def _static_constants(inputs: DesignInputs):
    # 1. Lipschitz constant of psi^-1 on [0, eps_bar]
    L_psi = l_psi_inv_from_constants(
        inputs.L_fu or inputs.L_f, inputs.L_k, inputs.L_sigma3, inputs.L_sigmabar_inv,
        inputs.sigmabar_eps, inputs.sigma0_eps,
    ).require()

    # 2. Composite constants and the static bound
    L = inputs.L_k + inputs.L_gamma3 + 1.0
    L_hat = L_psi * max(inputs.L_beta1, 1.0) / inputs.c
    L_bar = inputs.L_bar if inputs.L_bar is not None else L_hat
    if L_bar > L_hat * (1.0 + 1e-12):
        raise DesignError(f"L_bar={L_bar:.6g} exceeds L_hat={L_hat:.6g}; the decay design cannot lower it")
    tau = tau_static(inputs.L_f, inputs.L_k, inputs.L_gamma3, L_bar)
    return L_psi, L, L_hat, L_bar, tau


def inter_event_bound(inputs: DesignInputs) -> float:
    """Static lower bound tau on every inter-event time."""
    return _static_constants(inputs)[-1]


def _composites(inputs: DesignInputs) -> DesignResult:
    L_psi, L, L_hat, L_bar, tau = _static_constants(inputs)

    # 3. Target level reached at tau + tau_star
    y_target = y_closed_form(tau + inputs.tau_star, inputs.L_f, inputs.L_k, L)
    if not math.isfinite(y_target):
        raise DesignError(f"tau + tau_star = {tau + inputs.tau_star:.6g} lies beyond the comparison escape time")
    L_star = 1.0 / y_target
    return DesignResult(L=L, L_psi_inv=L_psi, L_hat=L_hat, L_bar=L_bar, L_star=L_star,
                        tau=tau, N_theta=n_theta(inputs.theta))


def _base_amplitude(inputs: DesignInputs, res: DesignResult) -> float:
    ratio = res.L_hat / res.L_star
    if ratio <= 1.0:
        raise DesignError(
            f"L_hat/L_star = {ratio:.6g} <= 1: requested gap increase tau_star={inputs.tau_star:g} "
            "is not expressible, enlarge tau_star"
        )
    return inputs.c * inputs.eps_bar / res.L_psi_inv * (ratio - 1.0) * (1.0 + inputs.sigma0_eps)


def design_continuous(inputs: DesignInputs) -> DesignResult:
    res = _composites(inputs)
    res.kappa = _base_amplitude(inputs, res) * math.exp(inputs.zeta * inputs.T_bar)
    res.tau1 = y_inverse(1.0 / res.L_star, inputs.L_f, inputs.L_k, res.L)
    return res


def discrete_amplitude(base: float, theta: float, N: int) -> tuple:
    """kappa_hat and the case number (1 when N <= N_theta, else 2)."""
    if N <= n_theta(theta):
        return base / theta, 1
    return base * math.exp(math.lgamma(N + 1) - N * math.log(theta)), 2


def design_discrete(inputs: DesignInputs, N: Optional[int] = None) -> DesignResult:
    N = inputs.N if N is None else N
    if N < 1:
        raise InvalidInputError(f"iteration horizon N must be >= 1, got {N}")
    if inputs.delta is None:
        raise DesignError("discrete design needs the forced-deadline period delta")
    res = _composites(inputs)
    if inputs.delta <= res.tau + inputs.tau_star:
        raise DesignError(
            f"delta={inputs.delta:.6g} <= tau + tau_star = {res.tau + inputs.tau_star:.6g}; "
            "the deadline would preempt the designed gap"
        )
    res.kappa_hat, res.discrete_case = discrete_amplitude(_base_amplitude(inputs, res), inputs.theta, N)
    res.tau2 = y_inverse(1.0 / res.L_star, inputs.L_f, inputs.L_k, res.L)
    return res


def design(inputs: DesignInputs, mode: str = "both") -> DesignResult:
    """Run the requested designs; rejections of one variant are kept as notes when mode is 'both'."""
    res = _composites(inputs)
    if mode in ("continuous", "both"):
        try:
            cont = design_continuous(inputs)
            res.kappa, res.tau1 = cont.kappa, cont.tau1
        except DesignError as e:
            if mode != "both":
                raise
            res.valid = False
            res.notes.append(f"continuous: {e}")
    if mode in ("discrete", "both"):
        if inputs.delta is None and mode == "both":
            res.notes.append("discrete: skipped, no delta given")
        else:
            try:
                disc = design_discrete(inputs)
                res.kappa_hat, res.tau2, res.discrete_case = disc.kappa_hat, disc.tau2, disc.discrete_case
            except DesignError as e:
                if mode != "both":
                    raise
                res.valid = False
                res.notes.append(f"discrete: {e}")
    logger.info(f"Design complete: tau={res.tau:.6g} kappa={res.kappa} kappa_hat={res.kappa_hat} valid={res.valid}")
    return res


def integrate_comparison(t_end: float, L_f: float, L_k: float, L: float, steps: int = 20000) -> np.ndarray:
    """RK4 integration of the comparison system on [0, t_end]; returns y at the grid points."""
    _check_constants(L_f, L_k, L)
    h = t_end / steps
    rhs = lambda y: L_f * (1.0 + y) * (L + L_k * y)  # noqa: E731
    ys = np.empty(steps + 1)
    y = 0.0
    ys[0] = y
    for k in range(steps):
        k1 = rhs(y)
        k2 = rhs(y + 0.5 * h * k1)
        k3 = rhs(y + 0.5 * h * k2)
        k4 = rhs(y + h * k3)
        y = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        ys[k + 1] = y
    return ys
