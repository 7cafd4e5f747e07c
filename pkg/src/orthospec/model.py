"""Joint law of ``(S, T)`` and a deterministic quadrature engine.

``S = |Z|^2`` with ``Z`` standard circular complex Gaussian is Exp(1), and
``T = trimmer(sqrt(S / delta))``.  Every expectation is therefore a
one-dimensional integral against ``exp(-s)`` on ``[0, inf)``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable

import numpy as np

from .errors import IntegrandError
from .trimmers import TrimmingFunction

Integrand = Callable[[np.ndarray, np.ndarray], np.ndarray]

_MAX_STABLE_LAGUERRE = 180
# Panel breakpoints for the adaptive rule: graded towards s = 0 where the
# trimmers vary fastest, doubling widths in the tail.  e^-128 is negligible.
_BREAKS = np.array(
    [0.0, 1e-12, 1e-10, 1e-8, 1e-6, 1e-5, 1e-4, 3e-4, 1e-3, 3e-3, 1e-2, 3e-2,
     0.1, 0.3, 0.6, 1.0, 1.5, 2.0, 3.0, 4.0, 6.0, 8.0, 12.0, 16.0, 24.0, 32.0,
     48.0, 64.0, 96.0, 128.0]
)
_PANEL_ORDER = 8
_MAX_PANELS = 40_000
_MAX_ROUNDS = 80


@dataclass(frozen=True)
class QuadratureSettings:
    primary_order: int = 64
    adaptive_tol: float = 1e-11
    divergence_threshold: float = 1e12

    def __post_init__(self) -> None:
        if not 32 <= self.primary_order <= _MAX_STABLE_LAGUERRE // 2:
            raise ValueError(
                f"primary_order must lie in [32, {_MAX_STABLE_LAGUERRE // 2}] "
                "(the rule is also evaluated at twice this order)"
            )
        if not 0.0 < self.adaptive_tol <= 1e-6:
            raise ValueError("adaptive_tol must lie in (0, 1e-6]")
        if not self.divergence_threshold > 0.0:
            raise ValueError("divergence_threshold must be positive")


@dataclass(frozen=True, eq=False)
class Model:
    trimmer: TrimmingFunction
    delta: float
    quad: QuadratureSettings = field(default_factory=QuadratureSettings)

    def __post_init__(self) -> None:
        if not (math.isfinite(self.delta) and self.delta > 1.0):
            raise ValueError(f"delta must be > 1, got {self.delta}")

    @property
    def kappa(self) -> float:
        """``delta / (delta - 1)``, the threshold appearing in the theory."""
        return self.delta / (self.delta - 1.0)

    def t_of_s(self, s: np.ndarray) -> np.ndarray:
        return self.trimmer(np.sqrt(np.asarray(s, dtype=float) / self.delta))

    def expect(self, f: Integrand):
        return expect(self, f)


@lru_cache(maxsize=8)
def _laguerre(order: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = np.polynomial.laguerre.laggauss(order)
    return x, w


@lru_cache(maxsize=4)
def _legendre(order: int) -> tuple[np.ndarray, np.ndarray]:
    return np.polynomial.legendre.leggauss(order)


class _Evaluator:
    """Evaluates the integrand on node arrays and tracks non-finite values."""

    def __init__(self, model: Model, f: Integrand) -> None:
        self.model = model
        self.f = f
        self.k: int | None = None
        self.vector = False
        self.pos_inf: np.ndarray | None = None
        self.neg_inf: np.ndarray | None = None
        self.pos: np.ndarray | None = None
        self.neg: np.ndarray | None = None

    def __call__(self, s: np.ndarray) -> np.ndarray:
        shape = s.shape
        flat = s.ravel()
        t = self.model.t_of_s(flat)
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            v = np.asarray(self.f(flat, t))
        if v.ndim == 0:
            v = np.broadcast_to(v, flat.shape)
        if v.ndim == 1:
            v = v[None, :]
        else:
            self.vector = True
        v = np.broadcast_to(v, (v.shape[0], flat.size))
        if self.k is None:
            self.k = v.shape[0]
            self.pos_inf = np.zeros(self.k, bool)
            self.neg_inf = np.zeros(self.k, bool)
            self.pos = np.zeros(self.k, bool)
            self.neg = np.zeros(self.k, bool)
        v = self._screen(v)
        return v.reshape((self.k,) + shape)

    def _screen(self, v: np.ndarray) -> np.ndarray:
        if np.iscomplexobj(v):
            if not np.all(np.isfinite(v)):
                raise IntegrandError("complex integrand is not finite at a quadrature node")
            return v
        if np.any(np.isnan(v)):
            raise IntegrandError("integrand is NaN at a quadrature node")
        self.pos |= np.any(v > 0, axis=1)
        self.neg |= np.any(v < 0, axis=1)
        pinf = np.any(v == np.inf, axis=1)
        ninf = np.any(v == -np.inf, axis=1)
        if np.any(pinf | ninf):
            self.pos_inf |= pinf
            self.neg_inf |= ninf
            v = np.where(np.isinf(v), 0.0, v)
        return v

    def finish(self, values: np.ndarray, threshold: float):
        """Apply the divergence conventions and unwrap scalar results."""
        out = np.array(values)
        if not np.iscomplexobj(out):
            out = out.astype(float)
            for i in range(self.k):
                up = self.pos_inf[i] or out[i] > threshold
                down = self.neg_inf[i] or out[i] < -threshold
                if not (up or down):
                    continue
                if up and not down and not self.neg[i]:
                    out[i] = math.inf
                elif down and not up and not self.pos[i]:
                    out[i] = -math.inf
                elif self.pos_inf[i] or self.neg_inf[i]:
                    raise IntegrandError(
                        "integrand is infinite at a node but changes sign"
                    )
        return out if self.vector else out[0]


def expect(model: Model, f: Integrand):
    """``E[f(S, T)]`` by Gauss-Laguerre with an adaptive fallback.

    ``f`` receives 1-D arrays ``s`` and ``t`` and returns values of the same
    length, or a stacked ``(k, len(s))`` array to integrate ``k`` functions
    over one shared set of nodes.  Real or complex values are accepted.

    A sign-definite integrand that is infinite at a node, or whose adaptive
    estimate exceeds ``divergence_threshold`` in magnitude after the fixed
    rules failed to agree, yields ``+inf`` or ``-inf``.  NaN values raise :class:`IntegrandError`.
    """
    q = model.quad
    ev = _Evaluator(model, f)
    x1, w1 = _laguerre(q.primary_order)
    x2, w2 = _laguerre(2 * q.primary_order)
    v1 = ev(x1)
    v2 = ev(x2)
    if not (np.any(ev.pos_inf) or np.any(ev.neg_inf)):
        est1 = v1 @ w1
        est2 = v2 @ w2
        scale = np.abs(v2) @ w2
        if np.all(np.abs(est2 - est1) <= q.adaptive_tol * scale):
            # Two Gauss-Laguerre orders agree: the value is converged, however
            # large, so the divergence threshold does not apply.
            return ev.finish(est2, math.inf)
    total = _adaptive(ev, q.adaptive_tol)
    return ev.finish(total, q.divergence_threshold)


def _panel_sums(ev: _Evaluator, a: np.ndarray, b: np.ndarray):
    """One-panel and two-half-panel Gauss-Legendre estimates for each panel."""
    x, w = _legendre(_PANEL_ORDER)
    mid = 0.5 * (a + b)
    half = 0.5 * (b - a)
    s_whole = mid[:, None] + half[:, None] * x[None, :]
    qh = 0.5 * half
    left_mid = a + qh
    right_mid = b - qh
    s_left = left_mid[:, None] + qh[:, None] * x[None, :]
    s_right = right_mid[:, None] + qh[:, None] * x[None, :]
    s_all = np.concatenate([s_whole, s_left, s_right], axis=1)
    weight = np.exp(-s_all)
    v = ev(s_all) * weight[None]
    p = _PANEL_ORDER
    coarse = (v[:, :, :p] @ w) * half
    fine = (v[:, :, p:2 * p] @ w + v[:, :, 2 * p:] @ w) * qh
    fine_abs = (np.abs(v[:, :, p:2 * p]) @ w + np.abs(v[:, :, 2 * p:]) @ w) * qh
    return coarse, fine, fine_abs


def _adaptive(ev: _Evaluator, tol: float) -> np.ndarray:
    a = _BREAKS[:-1].copy()
    b = _BREAKS[1:].copy()
    done_sum = None
    done_abs = None
    done_err = None
    n_panels = a.size
    for _ in range(_MAX_ROUNDS):
        coarse, fine, fine_abs = _panel_sums(ev, a, b)
        err = np.abs(fine - coarse)  # (k, P)
        if done_sum is None:
            done_sum = np.zeros(fine.shape[0], dtype=fine.dtype)
            done_abs = np.zeros(fine.shape[0])
            done_err = np.zeros(fine.shape[0])
        scale = done_abs + fine_abs.sum(axis=1)
        budget = tol * np.maximum(scale, np.finfo(float).tiny)
        total_err = done_err + err.sum(axis=1)
        if np.all(total_err <= budget):
            return done_sum + fine.sum(axis=1)
        # Panels whose error is small relative to a per-panel share are final.
        share = budget / (4.0 * max(n_panels, 1))
        bad = np.any(err > share[:, None], axis=0)
        keep = ~bad
        done_sum = done_sum + fine[:, keep].sum(axis=1)
        done_abs = done_abs + fine_abs[:, keep].sum(axis=1)
        done_err = done_err + err[:, keep].sum(axis=1)
        a_bad, b_bad = a[bad], b[bad]
        m_bad = 0.5 * (a_bad + b_bad)
        a = np.concatenate([a_bad, m_bad])
        b = np.concatenate([m_bad, b_bad])
        n_panels += a_bad.size
        if n_panels > _MAX_PANELS or not np.all(b > a):
            break
    warnings.warn(
        "adaptive quadrature did not reach the requested tolerance",
        RuntimeWarning,
        stacklevel=3,
    )
    coarse, fine, _ = _panel_sums(ev, a, b) if a.size else (None, np.zeros((ev.k, 0)), None)
    return done_sum + fine.sum(axis=1)


def sample_trimmed(model: Model, seed: int, count: int) -> np.ndarray:
    """Draw ``count`` pairs ``(s, t)`` as an array of shape ``(count, 2)``."""
    if count < 1:
        raise ValueError("count must be at least 1")
    rng = np.random.default_rng(seed)
    s = rng.exponential(1.0, size=count)
    return np.column_stack([s, model.t_of_s(s)])
