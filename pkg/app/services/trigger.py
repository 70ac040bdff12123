"""
Triggering rules and the decision functions the simulator polls.

A rule fires when lhs(|e|) >= threshold. The threshold is the certificate
budget evaluated at sigma_tilde = sigma_bar(|x|) + decay/c, where decay is
0 (static), kappa*exp(-zeta*t) (continuous) or kappa_hat*theta^i/i!
(discrete). The baseline rule compares beta1(|e|) with c*sigma_bar(|x|).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Any, Dict, Optional

import numpy as np

from app.core.errors import InvalidInputError
from app.services.certificates import CertificateSet


class RuleKind(str, Enum):
    STATIC = "static"
    CONTINUOUS = "continuous"
    DISCRETE = "discrete"
    TABUADA = "tabuada"


def discrete_weight(theta: float, i: int) -> float:
    """theta^i / i!, evaluated in log space so large i cannot overflow."""
    if i < 0:
        raise InvalidInputError(f"triggering index must be >= 0, got {i}")
    if i == 0:
        return 1.0
    return math.exp(i * math.log(theta) - math.lgamma(i + 1))


@dataclass(frozen=True)
class TriggerRule:
    kind: RuleKind
    certs: CertificateSet
    kappa: float = 0.0
    zeta: float = 0.0
    kappa_hat: float = 0.0
    theta: float = 0.0
    delta: float = math.inf
    c: Optional[float] = None

    def __post_init__(self):
        if self.kind is RuleKind.CONTINUOUS and not (self.kappa > 0.0 and self.zeta > 0.0):
            raise InvalidInputError(f"continuous decay needs kappa>0 and zeta>0, got {self.kappa}, {self.zeta}")
        if self.kind is RuleKind.DISCRETE:
            if not (self.kappa_hat > 0.0 and self.theta > 0.0):
                raise InvalidInputError(
                    f"discrete decay needs kappa_hat>0 and theta>0, got {self.kappa_hat}, {self.theta}"
                )
            if not (0.0 < self.delta < math.inf):
                raise InvalidInputError(f"discrete decay needs a finite delta > 0, got {self.delta}")
        if self.c is not None and not (0.0 < self.c < 1.0):
            raise InvalidInputError(f"trigger constant c must lie in (0,1), got {self.c}")

    @classmethod
    def static(cls, certs: CertificateSet) -> "TriggerRule":
        return cls(RuleKind.STATIC, certs)

    @classmethod
    def continuous(cls, certs: CertificateSet, kappa: float, zeta: float) -> "TriggerRule":
        return cls(RuleKind.CONTINUOUS, certs, kappa=kappa, zeta=zeta)

    @classmethod
    def discrete(cls, certs: CertificateSet, kappa_hat: float, theta: float, delta: float) -> "TriggerRule":
        return cls(RuleKind.DISCRETE, certs, kappa_hat=kappa_hat, theta=theta, delta=delta)

    @classmethod
    def tabuada(cls, certs: CertificateSet, c: Optional[float] = None) -> "TriggerRule":
        return cls(RuleKind.TABUADA, certs, c=c)

    @property
    def c_value(self) -> float:
        return self.c if self.c is not None else self.certs.c

    @property
    def is_decaying(self) -> bool:
        return self.kind in (RuleKind.CONTINUOUS, RuleKind.DISCRETE)

    def describe(self) -> Dict[str, Any]:
        params: Dict[str, Any] = {"rule": self.kind.value, "c": self.c_value}
        if self.kind is RuleKind.CONTINUOUS:
            params.update(kappa=self.kappa, zeta=self.zeta)
        elif self.kind is RuleKind.DISCRETE:
            params.update(kappa_hat=self.kappa_hat, theta=self.theta, delta=self.delta)
        return params


@dataclass(frozen=True)
class TriggerContext:
    """State of the loop at a monitoring instant; e = x(t_last) - x(t)."""
    t: float
    i: int
    t_last: float
    x: np.ndarray
    e: np.ndarray

    def __post_init__(self):
        if self.i < 0:
            raise InvalidInputError(f"completed-triggering count must be >= 0, got {self.i}")
        if self.t < self.t_last - 1e-12:
            raise InvalidInputError(f"monitoring time {self.t} precedes last event {self.t_last}")


def decay_term(rule: TriggerRule, ctx: TriggerContext) -> float:
    if rule.kind is RuleKind.CONTINUOUS:
        return rule.kappa * math.exp(-rule.zeta * ctx.t)
    if rule.kind is RuleKind.DISCRETE:
        return rule.kappa_hat * discrete_weight(rule.theta, ctx.i)
    return 0.0


def threshold(rule: TriggerRule, ctx: TriggerContext) -> float:
    certs = rule.certs
    r = certs.norm(ctx.x)
    if rule.kind is RuleKind.TABUADA:
        return rule.c_value * certs.sigma_bar(r)
    sigma_tilde = certs.sigma_bar(r) + decay_term(rule, ctx) / certs.c
    return certs.budget(sigma_tilde, r)


def lhs(rule: TriggerRule, ctx: TriggerContext) -> float:
    e_size = rule.certs.error_size(ctx.e)
    if rule.kind is RuleKind.TABUADA:
        return rule.certs.beta1(e_size)
    return rule.certs.lhs(e_size)


def margin(rule: TriggerRule, ctx: TriggerContext) -> float:
    """Signed trigger margin; >= 0 means fire. A freshly reset error never fires."""
    if not np.any(ctx.e):
        return -math.inf
    return lhs(rule, ctx) - threshold(rule, ctx)


def should_fire(rule: TriggerRule, ctx: TriggerContext) -> bool:
    return margin(rule, ctx) >= 0.0


def next_forced_deadline(rule: TriggerRule, ctx: TriggerContext) -> Optional[float]:
    if rule.kind is RuleKind.DISCRETE:
        return ctx.t_last + rule.delta
    return None
