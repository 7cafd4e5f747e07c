"""Asymptotic predictions for the spectral estimator.

The four transforms, evaluated for ``tau >= 1`` with ``G = 1/(tau - T)``::

    Lambda(tau) = tau - (1 - 1/delta) / E[G]
    psi1(tau)   = E[S G] / E[G]
    psi2(tau)   = E[G^2] / E[G]^2
    psi3sq(tau) = E[S G^2] / E[G]^2

``tau_r`` minimizes the convex ``Lambda`` on ``[1, inf)``.  When
``psi1(tau_r) > kappa = delta / (delta - 1)`` the top eigenvalue separates
from the bulk at ``Lambda(theta_star)`` where ``psi1(theta_star) = kappa``,
and the squared overlap is positive.

A second, independent route to the top eigenvalue goes through the scalar
function ``theta(vartheta)`` and the fixed point
``Lambda_plus(theta(vartheta)) = 1/vartheta + E[S T]``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Callable

import numpy as np

from .errors import DomainError, NoMinimum, NoTransition, SolverError
from .model import Model
from .roots import bisect, expand_upward
from .trimmers import TrimmingFunction, opt_trimmer

BOUNDARY_TOL = 1e-9
TAU_LIMIT = 1e8


class Regime(str, Enum):
    UNINFORMATIVE = "Uninformative"
    INFORMATIVE = "Informative"
    BOUNDARY = "Boundary"


@dataclass(frozen=True)
class TransformValues:
    tau: float
    lambda_of_tau: float
    psi1: float
    psi2: float
    psi3sq: float
    derivative: float
    psi_defined: bool = True


@dataclass(frozen=True)
class TheoryPrediction:
    regime: Regime
    tau_r: float
    lambda_r: float
    psi1_at_tau_r: float
    theta_star: float | None
    lambda1_limit: float
    rho2_limit: float
    vartheta_star: float | None
    vartheta_c: float
    lambda1_raw: float

    @property
    def boundary(self) -> bool:
        return self.regime is Regime.BOUNDARY


@dataclass(frozen=True)
class VarthetaStar:
    vartheta_star: float
    lambda1_check: float
    derivative: float
    case: int
    theta: float


@dataclass(frozen=True)
class DeltaTransition:
    delta_T: float
    lo: float
    hi: float
    iterations: int


def _require_unit_range(m: Model) -> None:
    if not m.trimmer.has_unit_range:
        raise DomainError(
            f"trimmer {m.trimmer.name!r} has range {m.trimmer.declared_range}; "
            "normalize it to [0, 1] before theory use"
        )


def _moments(m: Model, tau: float) -> np.ndarray:
    """``[E G, E S G, E G^2, E S G^2]`` with ``G = 1/(tau - T)``."""

    def f(s: np.ndarray, t: np.ndarray) -> np.ndarray:
        g = 1.0 / (tau - t)
        return np.stack([g, s * g, g * g, s * g * g])

    return m.expect(f)


def _transforms_from_moments(m: Model, tau: float, mom: np.ndarray) -> TransformValues:
    eg, esg, eg2, esg2 = (float(v) for v in mom)
    c = 1.0 - 1.0 / m.delta
    if math.isinf(eg):
        # 1/inf = 0: Lambda(1) = 1 and psi1(1) = 1; psi2, psi3 undefined.
        return TransformValues(tau, tau, 1.0, math.nan, math.nan, math.nan, False)
    lam = tau - c / eg
    psi1 = esg / eg
    psi2 = eg2 / eg**2
    psi3sq = esg2 / eg**2
    deriv = 1.0 - c * psi2
    defined = math.isfinite(psi2) and math.isfinite(psi3sq)
    return TransformValues(tau, lam, psi1, psi2, psi3sq, deriv, defined)


def eval_transforms(m: Model, tau: float) -> TransformValues:
    """``Lambda``, ``psi1``, ``psi2``, ``psi3sq`` and ``Lambda'`` at ``tau >= 1``."""
    if not tau >= 1.0:
        raise DomainError(f"tau must be >= 1, got {tau}")
    return _transforms_from_moments(m, tau, _moments(m, tau))


def lambda_value(m: Model, tau: float) -> float:
    """``Lambda(tau)`` for any real ``tau`` outside the open range of ``T``."""

    def f(s: np.ndarray, t: np.ndarray) -> np.ndarray:
        return 1.0 / (tau - t)

    eg = m.expect(f)
    return tau - (1.0 - 1.0 / m.delta) / eg


def lambda_and_derivative(m: Model, tau: complex) -> tuple[complex, complex]:
    """``Lambda`` and ``Lambda'`` at a real or complex argument."""

    def f(s: np.ndarray, t: np.ndarray) -> np.ndarray:
        g = 1.0 / (tau - t)
        return np.stack([g, g * g])

    eg, eg2 = m.expect(f)
    c = 1.0 - 1.0 / m.delta
    if np.isinf(eg):
        return tau, math.nan
    return tau - c / eg, 1.0 - c * eg2 / eg**2


def lambda_derivative(m: Model, tau: float) -> float:
    """``Lambda'(tau) = ((delta-1)/delta) (kappa - psi2(tau))``."""
    v = eval_transforms(m, tau)
    if v.psi_defined:
        return v.derivative
    if math.isinf(v.psi2) and v.psi2 > 0:
        return -math.inf
    # Divergent E[G] at tau = 1: use the right limit.
    return eval_transforms(m, tau + 1e-9).derivative


def find_tau_r(m: Model) -> tuple[float, float]:
    """Minimizer and minimum of ``Lambda`` on ``[1, inf)``."""
    _require_unit_range(m)
    d1 = lambda_derivative(m, 1.0)
    if d1 >= 0.0:
        return 1.0, eval_transforms(m, 1.0).lambda_of_tau
    try:
        br = expand_upward(lambda x: lambda_derivative(m, x), 1.0, limit=TAU_LIMIT)
    except SolverError as exc:
        raise NoMinimum("Lambda' stays negative up to tau = 1e8", **exc.diagnostics) from exc
    res = bisect(
        lambda x: lambda_derivative(m, x),
        br.lo,
        br.hi,
        f_lo=br.f_lo,
        f_hi=br.f_hi,
        xtol=1e-12,
        ftol=1e-10,
    )
    return res.root, eval_transforms(m, res.root).lambda_of_tau


def _solve_psi1(m: Model, start: float, target: float) -> float:
    """Root of ``psi1(tau) = target`` above ``start`` (``psi1(start) > target``)."""

    def h(x: float) -> float:
        return eval_transforms(m, x).psi1 - target

    br = expand_upward(h, start, limit=TAU_LIMIT)
    res = bisect(h, br.lo, br.hi, f_lo=br.f_lo, f_hi=br.f_hi, xtol=0.0, ftol=1e-12)
    if res.residual > 1e-10:
        raise SolverError("psi1 root not resolved", residual=res.residual, root=res.root)
    return res.root


def find_theta_star(m: Model, tau_r: float | None = None) -> float | None:
    """Root of ``psi1 = kappa`` above ``tau_r``, or None if ``psi1(tau_r) <= kappa``."""
    if tau_r is None:
        tau_r, _ = find_tau_r(m)
    gap = eval_transforms(m, tau_r).psi1 - m.kappa
    if gap <= BOUNDARY_TOL:
        return None
    try:
        return _solve_psi1(m, tau_r, m.kappa)
    except SolverError as exc:
        raise SolverError(
            f"theta_star search failed for trimmer {m.trimmer.name!r}",
            tau_r=tau_r,
            psi1_gap=gap,
            **exc.diagnostics,
        ) from exc


def overlap_formula(m: Model, v: TransformValues) -> float:
    """Squared overlap from ``psi2`` and ``psi3sq`` at ``theta_star``."""
    k = m.kappa
    num = k * k - k * v.psi2
    den = v.psi3sq - k * v.psi2
    if not den > 0.0:
        raise SolverError("overlap denominator is not positive", psi2=v.psi2, psi3sq=v.psi3sq)
    rho2 = num / den
    if not -1e-12 <= rho2 <= 1.0 + 1e-12:
        raise SolverError("overlap outside [0, 1]", rho2=rho2)
    return min(max(rho2, 0.0), 1.0)


def e_st(m: Model) -> float:
    """``E[S T]``."""
    return float(m.expect(lambda s, t: s * t))


def vartheta_c(m: Model) -> float:
    """Critical ``vartheta`` below which ``theta(vartheta) = 1``."""
    q1 = float(m.expect(lambda s, t: s / (1.0 - t)))
    inv_q1 = 0.0 if math.isinf(q1) else 1.0 / q1
    den = 1.0 - inv_q1 - e_st(m)
    if den <= 1e-14:
        return math.inf
    return 1.0 / den


def _q(m: Model, lam: float) -> float:
    return float(m.expect(lambda s, t: s / (lam - t)))


def theta_inverse(m: Model, lam: float) -> float:
    """``vartheta`` with ``theta(vartheta) = lam`` for ``lam > 1``."""
    if not lam >= 1.0:
        raise DomainError("theta_inverse needs lam >= 1")
    q = _q(m, lam)
    inv_q = 0.0 if math.isinf(q) else 1.0 / q
    den = lam - e_st(m) - inv_q
    return math.inf if den <= 0.0 else 1.0 / den


def theta_of_vartheta(m: Model, vartheta: float, *, a: float | None = None,
                      vc: float | None = None) -> float:
    """Unique ``lam > 1`` with ``lam - E[ST] - 1/vartheta = 1/E[S/(lam - T)]``.

    Returns 1 when ``vartheta <= vartheta_c``.
    """
    if not vartheta > 0.0:
        raise DomainError("vartheta must be positive")
    if vc is None:
        vc = vartheta_c(m)
    if vartheta <= vc:
        return 1.0
    if a is None:
        a = e_st(m)
    shift = a + 1.0 / vartheta

    def g(lam: float) -> float:
        q = _q(m, lam)
        return lam - shift - (0.0 if math.isinf(q) else 1.0 / q)

    br = expand_upward(g, 1.0, limit=TAU_LIMIT)
    res = bisect(g, br.lo, br.hi, f_lo=br.f_lo, f_hi=br.f_hi, xtol=0.0, ftol=0.0)
    return res.root


def theta_derivative(m: Model, vartheta: float, theta: float | None = None) -> float:
    """``theta'(vartheta)`` for ``vartheta > vartheta_c``."""
    if theta is None:
        theta = theta_of_vartheta(m, vartheta)

    def f(s: np.ndarray, t: np.ndarray) -> np.ndarray:
        g = 1.0 / (theta - t)
        return np.stack([s * g, s * g * g])

    q, q2 = m.expect(f)
    return (q * q / (q2 - q * q)) / vartheta**2


def lambda_plus(m: Model, tau: float, tau_r: float, lambda_r: float) -> float:
    """``lambda_r`` for ``tau <= tau_r``, else ``Lambda(tau)``."""
    if tau <= tau_r:
        return lambda_r
    return eval_transforms(m, tau).lambda_of_tau


def lambda_plus_theta_derivative(m: Model, vartheta: float) -> float:
    """Derivative of ``vartheta -> Lambda_plus(theta(vartheta))``."""
    tau_r, _ = find_tau_r(m)
    theta = theta_of_vartheta(m, vartheta)
    if theta <= tau_r:
        return 0.0
    return eval_transforms(m, theta).derivative * theta_derivative(m, vartheta, theta)


def vartheta_star(m: Model) -> VarthetaStar:
    """Solve ``Lambda_plus(theta(vartheta)) = 1/vartheta + E[S T]`` by bisection."""
    _require_unit_range(m)
    tau_r, lambda_r = find_tau_r(m)
    a = e_st(m)
    vc = vartheta_c(m)

    def h(v: float) -> float:
        th = theta_of_vartheta(m, v, a=a, vc=vc)
        return lambda_plus(m, th, tau_r, lambda_r) - 1.0 / v - a

    lo = hi = 1.0
    f_lo = f_hi = h(1.0)
    for _ in range(200):
        if f_lo < 0.0 < f_hi:
            break
        if f_hi <= 0.0:
            lo, f_lo = hi, f_hi
            hi *= 2.0
            f_hi = h(hi)
        else:
            hi, f_hi = lo, f_lo
            lo /= 2.0
            f_lo = h(lo)
    else:
        raise SolverError("could not bracket vartheta_star")
    res = bisect(h, lo, hi, f_lo=f_lo, f_hi=f_hi, xtol=1e-15, log_scale=True)
    vs = res.root
    theta = theta_of_vartheta(m, vs, a=a, vc=vc)
    lam = lambda_plus(m, theta, tau_r, lambda_r)
    if theta <= tau_r:
        return VarthetaStar(vs, lam, 0.0, 1, theta)
    v = eval_transforms(m, theta)
    k = m.kappa
    deriv = k * (k - v.psi2) / (v.psi3sq - k * k) / vs**2
    return VarthetaStar(vs, lam, deriv, 2, theta)


def predict(m: Model) -> TheoryPrediction:
    """Limiting top eigenvalue and squared overlap."""
    _require_unit_range(m)
    tau_r, lambda_r = find_tau_r(m)
    at_r = eval_transforms(m, tau_r)
    gap = at_r.psi1 - m.kappa
    a = e_st(m)
    vc = vartheta_c(m)
    theta = None
    if abs(gap) < BOUNDARY_TOL:
        regime = Regime.BOUNDARY
        lam1 = lambda_r
        rho2 = overlap_formula(m, at_r) if at_r.psi_defined else math.nan
        vs = 1.0 / (lambda_r - a)
    elif gap < 0.0:
        regime = Regime.UNINFORMATIVE
        lam1 = lambda_r
        rho2 = 0.0
        vs = 1.0 / (lambda_r - a)
    else:
        regime = Regime.INFORMATIVE
        theta = _solve_psi1(m, tau_r, m.kappa)
        v = eval_transforms(m, theta)
        lam1 = v.lambda_of_tau
        rho2 = overlap_formula(m, v)
        vs = theta_inverse(m, theta)
    return TheoryPrediction(
        regime=regime,
        tau_r=tau_r,
        lambda_r=lambda_r,
        psi1_at_tau_r=at_r.psi1,
        theta_star=theta,
        lambda1_limit=lam1,
        rho2_limit=rho2,
        vartheta_star=vs,
        vartheta_c=vc,
        lambda1_raw=m.trimmer.to_raw(lam1),
    )


def regime_indicator(m: Model) -> float:
    """``psi1(tau_r) - kappa``; positive means the informative regime."""
    tau_r, _ = find_tau_r(m)
    return eval_transforms(m, tau_r).psi1 - m.kappa


def find_delta_transition(
    trimmer_family: Callable[[float], TrimmingFunction],
    delta_range: tuple[float, float],
    *,
    width: float = 1e-4,
    quad=None,
) -> DeltaTransition:
    """Critical ``delta`` where the regime indicator changes sign."""
    lo, hi = (float(v) for v in delta_range)
    if not 1.0 < lo < hi:
        raise DomainError("delta_range must satisfy 1 < lo < hi")

    def indicator(d: float) -> float:
        kw = {} if quad is None else {"quad": quad}
        return regime_indicator(Model(trimmer_family(d), d, **kw))

    f_lo, f_hi = indicator(lo), indicator(hi)
    if not ((f_lo < 0.0 < f_hi) or (f_hi < 0.0 < f_lo)):
        raise NoTransition(
            f"regime indicator does not change sign on [{lo}, {hi}] "
            f"(values {f_lo:.3g}, {f_hi:.3g})"
        )
    res = bisect(indicator, lo, hi, f_lo=f_lo, f_hi=f_hi, xtol=width)
    return DeltaTransition(0.5 * (res.lo + res.hi), res.lo, res.hi, res.iterations)


def _opt_model(delta: float) -> Model:
    return Model(opt_trimmer(delta), delta)


def theta_star_opt(delta: float) -> float:
    """Root of ``psi1(tau) = kappa`` for the unbounded optimal trimmer, ``delta > 2``."""
    if not delta > 2.0:
        raise DomainError("theta_star_opt needs delta > 2")
    m = _opt_model(delta)
    # psi1 at tau = 1 equals E[S^2]/E[S] = 2 > kappa.
    return _solve_psi1(m, 1.0, m.kappa)


def rho_opt(delta: float) -> float:
    """Best achievable squared overlap: 0 for ``delta <= 2``, else
    ``(theta - 1) / (theta - 1/delta)`` at ``theta = theta_star_opt(delta)``."""
    if not delta > 1.0:
        raise DomainError("delta must be > 1")
    if delta <= 2.0:
        return 0.0
    th = theta_star_opt(delta)
    return (th - 1.0) / (th - 1.0 / delta)


def rho_opt_overlap_formula(delta: float) -> float:
    """The generic ``psi2``/``psi3sq`` overlap evaluated for the optimal trimmer."""
    if delta <= 2.0:
        return 0.0
    m = _opt_model(delta)
    return overlap_formula(m, eval_transforms(m, theta_star_opt(delta)))
