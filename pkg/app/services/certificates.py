"""
Class-K function algebra, plant bundles and certificate families.

Every other service consumes the types defined here: triggers read the
certificate functions, the simulator integrates the plant, the design layer
reads the Lipschitz constants. All objects are immutable after construction.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import optimize

from app.core.errors import CertificateInconsistencyError, InvalidInputError

logger = logging.getLogger(__name__)

_ZERO_TOL = 1e-12
_ROUNDTRIP_RTOL = 1e-9
_BISECT_XTOL = 1e-12
_BISECT_MAXITER = 200
_BRACKET_DOUBLINGS = 200
_DEFAULT_VALIDATION_SPAN = 10.0
_ALL_PAIRS_LIMIT = 400

NORMS = ("euclidean", "inf")

ScalarMap = Callable[[float], float]


def vector_norm(v: np.ndarray, kind: str = "euclidean") -> float:
    if kind == "inf":
        return float(np.max(np.abs(v))) if np.size(v) else 0.0
    return float(np.linalg.norm(v))


@dataclass(frozen=True)
class ClassKFn:
    """
    Scalar strictly increasing map with f(0)=0.

    ``inverse_fn`` is optional; without it the inverse is found by bracketed
    bisection on [0, domain_hint] (bracket grown by doubling when unbounded).
    ``lipschitz`` records a known Lipschitz constant on the domain, if any.
    """
    fn: ScalarMap
    inverse_fn: Optional[ScalarMap] = None
    domain_hint: float = math.inf
    lipschitz: Optional[float] = None
    name: str = "classK"

    def __call__(self, r: float) -> float:
        return float(self.fn(r))

    def eval(self, r: float) -> float:
        return self(r)

    def inverse(self, y: float) -> float:
        if y < 0.0:
            raise InvalidInputError(f"{self.name}: inverse requested for negative value {y}")
        if y == 0.0:
            return 0.0
        if self.inverse_fn is not None:
            return float(self.inverse_fn(y))
        return self._numeric_inverse(y)

    def _numeric_inverse(self, y: float) -> float:
        if math.isfinite(self.domain_hint):
            hi = self.domain_hint
            if self(hi) < y:
                raise CertificateInconsistencyError(
                    f"{self.name}: value {y} outside range [0, {self(hi)}] on domain [0, {hi}]", r=hi
                )
        else:
            hi = 1.0
            for _ in range(_BRACKET_DOUBLINGS):
                if self(hi) >= y:
                    break
                hi *= 2.0
            else:
                raise CertificateInconsistencyError(f"{self.name}: could not bracket inverse of {y}")
        if self(hi) == y:
            return hi
        return float(optimize.bisect(
            lambda r: self(r) - y, 0.0, hi,
            xtol=_BISECT_XTOL, maxiter=_BISECT_MAXITER, disp=False,
        ))

    # --- algebra -------------------------------------------------------

    @classmethod
    def linear(cls, a: float, name: Optional[str] = None) -> "ClassKFn":
        if a <= 0:
            raise InvalidInputError(f"linear class-K slope must be positive, got {a}")
        return cls(lambda r: a * r, lambda y: y / a, lipschitz=a, name=name or f"{a:g}*r")

    @classmethod
    def power(cls, a: float, p: float, name: Optional[str] = None,
              domain_hint: float = math.inf) -> "ClassKFn":
        if a <= 0 or p <= 0:
            raise InvalidInputError(f"power class-K needs a>0, p>0, got a={a}, p={p}")
        if p == 1:
            lip = a
        elif p > 1 and math.isfinite(domain_hint):
            lip = a * p * domain_hint ** (p - 1)
        else:
            lip = None
        return cls(
            lambda r: a * r ** p,
            lambda y: (y / a) ** (1.0 / p),
            domain_hint=domain_hint,
            lipschitz=lip,
            name=name or f"{a:g}*r^{p:g}",
        )

    @classmethod
    def identity(cls) -> "ClassKFn":
        return cls(lambda r: r, lambda y: y, lipschitz=1.0, name="id")

    @classmethod
    def zero(cls) -> "ClassKFn":
        # Placeholder for an empty gain slot; not class-K, never validated.
        return cls(lambda r: 0.0, None, lipschitz=0.0, name="zero")

    def compose(self, inner: "ClassKFn") -> "ClassKFn":
        inv = None
        if self.inverse_fn is not None and inner.inverse_fn is not None:
            inv = lambda y: inner.inverse_fn(self.inverse_fn(y))  # noqa: E731
        lip = None
        if self.lipschitz is not None and inner.lipschitz is not None:
            lip = self.lipschitz * inner.lipschitz
        return ClassKFn(lambda r: self.fn(inner.fn(r)), inv, inner.domain_hint, lip,
                        name=f"{self.name}o{inner.name}")

    def scaled(self, a: float) -> "ClassKFn":
        if a <= 0:
            raise InvalidInputError(f"scale factor must be positive, got {a}")
        inv = (lambda y: self.inverse_fn(y / a)) if self.inverse_fn is not None else None
        lip = a * self.lipschitz if self.lipschitz is not None else None
        return ClassKFn(lambda r: a * self.fn(r), inv, self.domain_hint, lip, name=f"{a:g}*{self.name}")

    def default_grid(self, points: int = 101) -> np.ndarray:
        span = self.domain_hint if math.isfinite(self.domain_hint) else _DEFAULT_VALIDATION_SPAN
        return np.linspace(0.0, span, points)

    def validate(self, grid: Optional[Sequence[float]] = None) -> None:
        """Raise CertificateInconsistencyError on the first broken invariant."""
        grid = np.asarray(self.default_grid() if grid is None else grid, dtype=float)
        if abs(self(0.0)) > _ZERO_TOL:
            raise CertificateInconsistencyError(f"{self.name}: f(0)={self(0.0)} is not zero", r=0.0)
        values = np.array([self(r) for r in grid])
        steps = np.diff(values)
        if np.any(steps <= 0.0):
            bad = int(np.argmax(steps <= 0.0))
            raise CertificateInconsistencyError(
                f"{self.name}: not strictly increasing between r={grid[bad]:.6g} and r={grid[bad + 1]:.6g}",
                r=float(grid[bad + 1]),
            )
        if self.inverse_fn is not None:
            for r, y in zip(grid, values):
                if abs(self.inverse(y) - r) > _ROUNDTRIP_RTOL * (1.0 + r):
                    raise CertificateInconsistencyError(
                        f"{self.name}: inverse round-trip error at r={r:.6g}", r=float(r)
                    )


def make_psi(sigma_bar: ClassKFn, sigma0: ClassKFn,
             grid: Optional[Sequence[float]] = None) -> ClassKFn:
    """psi(r) = sigma_bar(r) / (1 + sigma0(r)), with a bisection inverse."""
    domain = min(sigma_bar.domain_hint, sigma0.domain_hint)
    psi = ClassKFn(
        lambda r: sigma_bar.fn(r) / (1.0 + sigma0.fn(r)),
        None,
        domain_hint=domain,
        name=f"psi[{sigma_bar.name}/(1+{sigma0.name})]",
    )
    try:
        psi.validate(grid if grid is not None else psi.default_grid(200))
    except CertificateInconsistencyError as e:
        logger.error(f"CERTIFICATE REJECTED: psi is not class-K near r={e.r}; sigma0 grows too fast relative to sigma_bar")
        raise
    return psi


def make_beta1_bar(beta1: ClassKFn) -> ClassKFn:
    """Pointwise max of beta1 and the identity; Lipschitz constant max(L_beta1, 1)."""
    inv = None
    if beta1.inverse_fn is not None:
        inv = lambda y: min(beta1.inverse_fn(y), y)  # noqa: E731
    lip = max(beta1.lipschitz, 1.0) if beta1.lipschitz is not None else None
    return ClassKFn(
        lambda r: max(beta1.fn(r), r),
        inv,
        domain_hint=beta1.domain_hint,
        lipschitz=lip,
        name=f"max({beta1.name},id)",
    )


Box = Union[Tuple[float, float], Sequence[Tuple[float, float]]]


def _as_box(box: Box) -> Tuple[np.ndarray, np.ndarray, bool]:
    arr = np.asarray(box, dtype=float)
    scalar = arr.ndim == 1
    arr = np.atleast_2d(arr)
    if arr.shape[-1] != 2:
        raise InvalidInputError(f"box must be (lo, hi) pairs, got shape {arr.shape}")
    return arr[:, 0], arr[:, 1], scalar


def estimate_lipschitz(fn: Callable, box: Box, samples: int = 200, seed: int = 0) -> float:
    """
    Sampled Lipschitz estimate: max |fn(a)-fn(b)| / |a-b| over point pairs.

    This is a lower estimate of the true constant; sampling cannot certify an
    upper bound. A single (lo, hi) pair means ``fn`` takes a float.
    """
    if samples < 2:
        raise InvalidInputError(f"estimate_lipschitz needs at least 2 samples, got {samples}")
    lo, hi, scalar = _as_box(box)
    if np.any(hi <= lo):
        raise InvalidInputError("estimate_lipschitz: zero-volume box")

    rng = np.random.default_rng(seed)
    pts = rng.uniform(lo, hi, size=(samples, lo.size))
    vals = np.array([
        np.atleast_1d(np.asarray(fn(float(p[0]) if scalar else p), dtype=float)) for p in pts
    ])

    if samples <= _ALL_PAIRS_LIMIT:
        i, j = np.triu_indices(samples, k=1)
    else:
        i = rng.integers(0, samples, size=8 * samples)
        j = rng.integers(0, samples, size=8 * samples)

    dx = np.linalg.norm(pts[i] - pts[j], axis=1)
    dy = np.linalg.norm(vals[i] - vals[j], axis=1)
    mask = dx > _ZERO_TOL
    if not np.any(mask):
        return 0.0
    return float(np.max(dy[mask] / dx[mask]))


@dataclass(frozen=True)
class GammaChainResult:
    passed: bool
    margin: float
    first_bad_r: Optional[float] = None
    reason: str = ""


def check_gamma_chain(gamma2: Callable[[float], float], gamma3: Callable[[float], float],
                      gamma4: Callable[[float], float], grid: Sequence[float]) -> GammaChainResult:
    """gamma4(r - gamma2(gamma3(r))) >= r on every grid point."""
    margin = math.inf
    for r in grid:
        r = float(r)
        inner = r - gamma2(gamma3(r))
        if inner < 0.0:
            return GammaChainResult(False, margin, r, f"id - gamma2 o gamma3 is negative ({inner:.3e}) at r={r:.6g}")
        gap = gamma4(inner) - r
        margin = min(margin, gap)
        if gap < 0.0:
            return GammaChainResult(False, margin, r, f"gamma4(id - gamma2 o gamma3)(r) < r at r={r:.6g}")
    return GammaChainResult(True, margin)


@dataclass(frozen=True)
class ISSData:
    gamma1: ClassKFn
    gamma2: ClassKFn
    gamma4: ClassKFn
    beta2: ClassKFn

    def validate(self, grid: Optional[Sequence[float]] = None) -> None:
        for member in (self.gamma1, self.gamma2, self.gamma4, self.beta2):
            member.validate(grid)


@dataclass(frozen=True)
class PlantBundle:
    """Closed-loop ingredients: x' = f(x, u, w), z = h(x, w), u = k(x)."""
    name: str
    n: int
    m: int
    q: int
    p: int
    f: Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray]
    h: Callable[[np.ndarray, np.ndarray], np.ndarray]
    k: Callable[[np.ndarray], np.ndarray]
    gamma3: ClassKFn
    L_f: float
    L_k: float
    L_gamma3: float
    w_cap: float = math.inf
    # named exogenous signals, fn(t, x, t_last) -> w; used by the custom disturbance mode
    signals: Mapping[str, Callable[[float, np.ndarray, float], np.ndarray]] = field(default_factory=dict)

    def check_equilibrium(self, tol: float = _ZERO_TOL) -> None:
        x0, u0, w0 = np.zeros(self.n), np.zeros(self.m), np.zeros(self.q)
        if vector_norm(np.asarray(self.f(x0, u0, w0), dtype=float)) > tol:
            raise CertificateInconsistencyError(f"{self.name}: f(0,0,0) != 0")
        if vector_norm(np.asarray(self.h(x0, w0), dtype=float)) > tol:
            raise CertificateInconsistencyError(f"{self.name}: h(0,0) != 0")
        if vector_norm(np.asarray(self.k(x0), dtype=float)) > tol:
            raise CertificateInconsistencyError(f"{self.name}: k(0) != 0")

    def stacked_f(self, s: np.ndarray) -> np.ndarray:
        x, u, w = s[:self.n], s[self.n:self.n + self.m], s[self.n + self.m:]
        return np.asarray(self.f(x, u, w), dtype=float)

    def probe_lipschitz(self, box: Sequence[Tuple[float, float]], samples: int = 200,
                        seed: int = 0, slack: float = 0.05) -> float:
        """Sampled check that L_f bounds f on the (x, u, w) box; returns the estimate."""
        if len(box) != self.n + self.m + self.q:
            raise InvalidInputError(
                f"{self.name}: probe box needs {self.n + self.m + self.q} intervals, got {len(box)}"
            )
        estimate = estimate_lipschitz(self.stacked_f, box, samples, seed)
        if estimate > self.L_f * (1.0 + slack):
            raise CertificateInconsistencyError(
                f"{self.name}: sampled Lipschitz estimate {estimate:.4g} exceeds L_f={self.L_f:.4g} (+{slack:.0%})"
            )
        return estimate


# budget(sigma_tilde, r) -> threshold compared against lhs(|e|)
TriggerBudget = Callable[[float, float], float]


@dataclass(frozen=True)
class CertificateSet:
    """
    Lyapunov data of one closed loop.

    ``storage_scale`` is the factor s for which s*U satisfies the dissipation
    inequality with gain ``l2_gain``; mu(x0) = s*U(x0).
    ``trigger_budget``/``trigger_lhs`` install a redefined trigger of the form
    lhs(|e|) >= budget(sigma_tilde(t, |x|), |x|). When unset the generic
    c*sigma_tilde/(1+sigma0(r)) against beta1_bar is used.
    """
    V: Callable[[np.ndarray], float]
    W: Callable[[np.ndarray], float]
    grad_V: Callable[[np.ndarray], np.ndarray]
    grad_W: Callable[[np.ndarray], np.ndarray]
    sigma_bar: ClassKFn
    sigma0: ClassKFn
    sigma1: ClassKFn
    sigma2: ClassKFn
    sigma3: ClassKFn
    beta1: ClassKFn
    psi: ClassKFn
    beta1_bar: ClassKFn
    l2_gain: float
    c: float
    c_bar: float
    state_norm: str = "euclidean"
    sandwich_norm: Optional[str] = None
    error_norm: Optional[str] = None
    storage_scale: float = 1.0
    L_sigma3: float = 0.0
    L_sigmabar_inv: float = math.inf
    L_beta1: float = 1.0
    trigger_budget: Optional[TriggerBudget] = None
    trigger_lhs: Optional[ClassKFn] = None
    constraints: Tuple[str, ...] = field(default_factory=tuple)

    def __post_init__(self):
        for kind in (self.state_norm, self.sandwich_norm, self.error_norm):
            if kind is not None and kind not in NORMS:
                raise InvalidInputError(f"unknown norm '{kind}', expected one of {NORMS}")
        if not (0.0 < self.c < 1.0):
            raise InvalidInputError(f"trigger constant c must lie in (0,1), got {self.c}")
        if not (0.0 < self.c_bar < 1.0):
            raise InvalidInputError(f"c_bar must lie in (0,1), got {self.c_bar}")
        if self.l2_gain <= 0.0:
            raise InvalidInputError(f"L2 gain must be positive, got {self.l2_gain}")

    # --- norms and storage -------------------------------------------

    def norm(self, x: np.ndarray) -> float:
        return vector_norm(x, self.state_norm)

    def error_size(self, e: np.ndarray) -> float:
        return vector_norm(e, self.error_norm or self.state_norm)

    def level_norm(self, x: np.ndarray) -> float:
        return vector_norm(x, self.sandwich_norm or self.state_norm)

    def U(self, x: np.ndarray) -> float:
        return float(self.V(x) + self.W(x))

    def grad_U(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(self.grad_V(x), dtype=float) + np.asarray(self.grad_W(x), dtype=float)

    def storage(self, x: np.ndarray) -> float:
        return self.storage_scale * self.U(x)

    def grad_storage(self, x: np.ndarray) -> np.ndarray:
        return self.storage_scale * self.grad_U(x)

    # --- trigger ingredients -----------------------------------------

    def budget(self, sigma_tilde: float, r: float) -> float:
        if self.trigger_budget is not None:
            return float(self.trigger_budget(sigma_tilde, r))
        return self.c * sigma_tilde / (1.0 + self.sigma0(r))

    def lhs(self, e_size: float) -> float:
        if self.trigger_lhs is not None:
            return self.trigger_lhs(e_size)
        return self.beta1_bar(e_size)

    # --- invariants ----------------------------------------------------

    def check_psi_consistency(self, grid: Optional[Sequence[float]] = None, tol: float = 1e-10) -> float:
        grid = self.psi.default_grid(100) if grid is None else grid
        worst = 0.0
        for r in grid:
            sb = self.sigma_bar(r)
            err = abs(self.psi(r) * (1.0 + self.sigma0(r)) - sb)
            worst = max(worst, err)
            if err > tol * max(1.0, abs(sb)):
                raise CertificateInconsistencyError(f"psi(1+sigma0) != sigma_bar at r={r:.6g} (err {err:.3e})", r=float(r))
        return worst

    def check_beta1_bar(self, grid: Optional[Sequence[float]] = None) -> None:
        grid = self.beta1.default_grid(100) if grid is None else grid
        for r in grid:
            if abs(self.beta1_bar(r) - max(self.beta1(r), r)) > _ZERO_TOL * (1.0 + r):
                raise CertificateInconsistencyError(f"beta1_bar != max(beta1, id) at r={r:.6g}", r=float(r))

    def check_sandwich(self, dim: int, radius: float, samples: int = 500, seed: int = 0) -> None:
        """sigma1(|xi|) <= V(xi) <= sigma2(|xi|) on states sampled inside ``radius``."""
        rng = np.random.default_rng(seed)
        kind = self.sandwich_norm or self.state_norm
        if kind == "inf":
            pts = rng.uniform(-radius, radius, size=(samples, dim))
        else:
            directions = rng.standard_normal((samples, dim))
            directions /= np.linalg.norm(directions, axis=1, keepdims=True)
            pts = directions * radius * rng.uniform(0.0, 1.0, size=(samples, 1)) ** (1.0 / dim)
        for xi in pts:
            r = vector_norm(xi, kind)
            v = float(self.V(xi))
            slack = 1e-12 * (1.0 + abs(v))
            if not (self.sigma1(r) - slack <= v <= self.sigma2(r) + slack):
                raise CertificateInconsistencyError(
                    f"sandwich bound violated at |xi|={r:.6g}: sigma1={self.sigma1(r):.6g}, "
                    f"V={v:.6g}, sigma2={self.sigma2(r):.6g}", r=r
                )

    def validate(self, dim: int, radius: float, seed: int = 0) -> None:
        grid = np.linspace(0.0, radius, 100)
        for member in (self.sigma_bar, self.sigma1, self.sigma2, self.beta1):
            member.validate(grid)
        self.check_psi_consistency(grid)
        self.check_beta1_bar(grid)
        self.check_sandwich(dim, radius, seed=seed)


def build_certificates(**fields) -> CertificateSet:
    """CertificateSet with psi and beta1_bar derived unless supplied."""
    if fields.get("psi") is None:
        fields["psi"] = make_psi(fields["sigma_bar"], fields["sigma0"])
    if fields.get("beta1_bar") is None:
        fields["beta1_bar"] = make_beta1_bar(fields["beta1"])
    return CertificateSet(**fields)
