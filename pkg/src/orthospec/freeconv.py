"""Limiting spectrum of ``T^{1/2} U R U^H T^{1/2}`` via subordination.

The limit is the free multiplicative convolution of the trimmer law with
``gamma = (1/delta) delta_1 + (1 - 1/delta) delta_0``.  For ``z`` in the lower
half plane the reciprocal subordination value ``tau`` solves
``Lambda(tau) = z`` with ``Im tau < 0`` and the Cauchy transform is

    G(z) = (1 - 1/delta) tau / (z (tau - z)).

The measure has an atom of mass ``1 - 1/delta`` at zero; the absolutely
continuous part, of mass ``1/delta``, lives on ``[lambda_l, lambda_r]``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import DomainError, SolverError
from .model import Model
from .roots import bisect, expand_downward, expand_upward
from .theory import find_tau_r, lambda_and_derivative, lambda_value

EPS_SCHEDULE = (1e-2, 1e-3, 1e-4, 1e-5)
# Extrapolation weights to eps = 0 that annihilate the eps, eps**3 and
# eps**5 terms.  Off the support the smoothed density is odd in eps, and
# close to an edge the coarsest level sits near the radius of that
# expansion, so its weight has to be tiny (about 1e-9 here).
_EPS = np.asarray(EPS_SCHEDULE)
RICHARDSON_WEIGHTS = np.linalg.solve(
    np.vstack([_EPS**0, _EPS, _EPS**3, _EPS**5]), np.array([1.0, 0.0, 0.0, 0.0])
)
RESIDUAL_TOL = 1e-10
MAX_NEWTON = 200


@dataclass(frozen=True)
class Support:
    lambda_l: float
    tau_l: float
    lambda_r: float
    tau_r: float


@dataclass(frozen=True)
class SubordinationPoint:
    z: complex
    tau_T: complex
    cauchy: complex
    iterations: int
    residual: float

    @property
    def cauchy_continuous(self) -> complex:
        """Cauchy transform with the zero atom removed."""
        return self.cauchy - self._atom / self.z

    _atom: float = 0.0


@dataclass(frozen=True)
class BulkSpectrum:
    lambda_l: float
    lambda_r: float
    tau_l: float
    tau_r: float
    grid: np.ndarray
    density: np.ndarray
    converged: np.ndarray
    outlier: float | None = None

    def continuous_mass(self) -> float:
        ok = self.converged & np.isfinite(self.density)
        return float(np.trapezoid(self.density[ok], self.grid[ok]))

    def to_csv(self, path: str | Path) -> None:
        write_density_csv(path, self)


def _left_derivative(m: Model, tau: float) -> float:
    return float(np.real(lambda_and_derivative(m, tau)[1]))


def bulk_support(m: Model) -> Support:
    """Edges of the continuous part of the limiting spectrum.

    ``lambda_r`` is the minimum of ``Lambda`` on ``[1, inf)``; ``lambda_l`` is
    the maximum of the concave ``Lambda`` on ``(-inf, 0]``.
    """
    tau_r, lambda_r = find_tau_r(m)
    near0 = -1e-12
    d0 = _left_derivative(m, near0)
    if not d0 < 0.0:
        tau_l = 0.0
        lambda_l = float(lambda_value(m, 0.0))
        if not math.isfinite(lambda_l):
            lambda_l = 0.0
    else:
        try:
            br = expand_downward(
                lambda x: _left_derivative(m, x), near0, width=1e-12, limit=1e8
            )
        except SolverError as exc:
            raise SolverError("no maximum of Lambda on (-inf, 0]", **exc.diagnostics) from exc
        res = bisect(
            lambda x: _left_derivative(m, x),
            br.lo,
            br.hi,
            f_lo=br.f_lo,
            f_hi=br.f_hi,
            xtol=1e-14,
            ftol=1e-10,
        )
        tau_l = res.root
        lambda_l = float(lambda_value(m, tau_l))
    return Support(lambda_l=lambda_l, tau_l=tau_l, lambda_r=lambda_r, tau_r=tau_r)


def _asymptotic_seed(m: Model, z: complex) -> complex:
    # Lambda(tau) = tau/delta + (1 - 1/delta) E[T] + O(1/tau) for large tau.
    et = float(m.expect(lambda s, t: t))
    return m.delta * (z - (1.0 - 1.0 / m.delta) * et)


def _newton(m: Model, z: complex, tau: complex, max_steps: int) -> tuple[complex, int, float]:
    if not tau.imag < 0.0:
        tau = complex(tau.real, -abs(tau.imag) - 1e-3)
    lam, d = lambda_and_derivative(m, tau)
    r = lam - z
    for it in range(max_steps + 1):
        if abs(r) < RESIDUAL_TOL:
            return tau, it, abs(r)
        if it == max_steps or not np.isfinite(d) or d == 0:
            break
        step = -r / d
        alpha = 1.0
        while alpha > 1e-12:
            cand = tau + alpha * step
            if cand.imag < 0.0:
                lam_c, d_c = lambda_and_derivative(m, cand)
                r_c = lam_c - z
                if abs(r_c) < (1.0 - 1e-4 * alpha) * abs(r):
                    tau, r, d = cand, r_c, d_c
                    break
            alpha *= 0.5
        else:
            break
    raise SolverError("Newton iteration for the subordination value failed",
                      z=z, tau=tau, residual=abs(r))


def subordinate(
    m: Model,
    z: complex,
    *,
    seed: complex | None = None,
    max_steps: int = MAX_NEWTON,
) -> SubordinationPoint:
    """Solve ``Lambda(tau) = z`` for ``tau`` in the lower half plane.

    Newton is started from ``seed`` when given, else from the large-``|tau|``
    expansion.  If that fails, the imaginary part of ``z`` is walked down
    from a large value with warm starts.
    """
    z = complex(z)
    if not z.imag < 0.0:
        raise DomainError("subordinate needs Im(z) < 0")
    start = _asymptotic_seed(m, z) if seed is None else complex(seed)
    try:
        tau, its, res = _newton(m, z, start, max_steps)
    except SolverError:
        tau, its, res = _continuation(m, z, max_steps)
    return _point(m, z, tau, its, res)


def _continuation(m: Model, z: complex, max_steps: int) -> tuple[complex, int, float]:
    """Approach ``z`` along a geometric path in ``Im z`` starting far below."""
    top = max(4.0, 2.0 * abs(z.imag))
    heights = np.geomspace(top, abs(z.imag), 40)
    tau = _asymptotic_seed(m, complex(z.real, -top))
    total = 0
    for h in heights:
        tau, its, res = _newton(m, complex(z.real, -h), tau, max_steps)
        total += its
    return tau, total, res


def _point(m: Model, z: complex, tau: complex, its: int, res: float) -> SubordinationPoint:
    atom = 1.0 - 1.0 / m.delta
    g = atom * tau / (z * (tau - z))
    return SubordinationPoint(z=z, tau_T=tau, cauchy=g, iterations=its, residual=res, _atom=atom)


def boundary_tau(m: Model, x: float, support: Support | None = None) -> float:
    """Real ``tau`` with ``Lambda(tau) = x`` for ``x`` outside the bulk.

    For ``x > lambda_r`` the root lies above ``tau_r``; for ``x < lambda_l``
    it lies below ``tau_l``.
    """
    sup = bulk_support(m) if support is None else support
    if x > sup.lambda_r:
        br = expand_upward(lambda t: lambda_value(m, t) - x, sup.tau_r)
    elif x < sup.lambda_l:
        br = expand_downward(lambda t: lambda_value(m, t) - x, sup.tau_l)
    else:
        raise DomainError("x lies inside the bulk")
    res = bisect(lambda t: lambda_value(m, t) - x, br.lo, br.hi,
                 f_lo=br.f_lo, f_hi=br.f_hi, xtol=0.0, ftol=1e-13)
    return res.root


def _density_at(m: Model, x: float, seed: complex | None) -> tuple[float, complex]:
    """Richardson-extrapolated density at ``x`` and the first-level ``tau``."""
    values = []
    tau = seed
    first = None
    for eps in EPS_SCHEDULE:
        p = subordinate(m, complex(x, -eps), seed=tau)
        tau = p.tau_T
        if first is None:
            first = tau
        values.append(p.cauchy_continuous.imag / math.pi)
    rho = float(RICHARDSON_WEIGHTS @ np.asarray(values))
    return max(rho, 0.0), first


def bulk_density(m: Model, grid: Sequence[float], *, support: Support | None = None) -> BulkSpectrum:
    """Density of the continuous part on ``grid`` (points where the solver
    fails are reported as NaN with ``converged = False``)."""
    x = np.asarray(grid, dtype=float)
    if x.ndim != 1 or x.size == 0 or np.any(x <= 0.0):
        raise DomainError("grid must be a non-empty list of positive values")
    sup = bulk_support(m) if support is None else support
    order = np.argsort(x, kind="stable")
    rho = np.full(x.size, np.nan)
    ok = np.zeros(x.size, dtype=bool)
    seed = None
    for i in order:
        try:
            rho[i], seed = _density_at(m, float(x[i]), seed)
            ok[i] = True
        except SolverError:
            seed = None
    return BulkSpectrum(sup.lambda_l, sup.lambda_r, sup.tau_l, sup.tau_r, x, rho, ok)


def outlier_location(m: Model, theta: float, support: Support | None = None) -> float | None:
    """Limit of the spiked eigenvalue for a spike ``theta`` in the ``T`` factor."""
    sup = bulk_support(m) if support is None else support
    if sup.tau_l <= theta <= sup.tau_r:
        return None
    return float(lambda_value(m, theta))


def write_density_csv(path: str | Path, spec: BulkSpectrum) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["x", "rho", "converged"])
        for xi, ri, ci in zip(spec.grid, spec.density, spec.converged):
            w.writerow([f"{xi:.12g}", f"{ri:.12g}", int(ci)])
