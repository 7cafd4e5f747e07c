"""Scalar bracketing and bisection."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

from .errors import SolverError


@dataclass(frozen=True)
class Bracket:
    lo: float
    hi: float
    f_lo: float
    f_hi: float


@dataclass(frozen=True)
class RootResult:
    root: float
    lo: float
    hi: float
    iterations: int
    residual: float


def expand_upward(
    f: Callable[[float], float],
    start: float,
    *,
    width: float = 1.0,
    factor: float = 2.0,
    limit: float = 1e8,
) -> Bracket:
    """Find ``hi > start`` where ``f`` changes sign relative to ``f(start)``.

    The trial points are ``start + width * factor**k``.  Raises
    ``SolverError`` once a trial point exceeds ``limit``.
    """
    f_lo = f(start)
    lo = start
    step = width
    while True:
        hi = start + step
        if hi > limit:
            raise SolverError(
                "bracket expansion exceeded limit", start=start, limit=limit
            )
        f_hi = f(hi)
        if _opposite(f_lo, f_hi):
            return Bracket(lo, hi, f_lo, f_hi)
        lo, f_lo = hi, f_hi
        step *= factor


def expand_downward(
    f: Callable[[float], float],
    start: float,
    *,
    width: float = 1.0,
    factor: float = 2.0,
    limit: float = 1e8,
) -> Bracket:
    """Mirror image of :func:`expand_upward`; returns ``lo < start``."""
    f_hi = f(start)
    hi = start
    step = width
    while True:
        lo = start - step
        if lo < -limit:
            raise SolverError(
                "bracket expansion exceeded limit", start=start, limit=limit
            )
        f_lo = f(lo)
        if _opposite(f_lo, f_hi):
            return Bracket(lo, hi, f_lo, f_hi)
        hi, f_hi = lo, f_lo
        step *= factor


def bisect(
    f: Callable[[float], float],
    lo: float,
    hi: float,
    *,
    f_lo: float | None = None,
    f_hi: float | None = None,
    xtol: float = 1e-12,
    ftol: float = 0.0,
    max_iter: int = 400,
    log_scale: bool = False,
) -> RootResult:
    """Bisection on a sign change of ``f`` in ``[lo, hi]``.

    Stops when ``|f(mid)| < ftol``, when the bracket is narrower than
    ``xtol`` (relative when ``log_scale``), or when the midpoint can no
    longer be distinguished from an endpoint in floating point.
    """
    if f_lo is None:
        f_lo = f(lo)
    if f_hi is None:
        f_hi = f(hi)
    if f_lo == 0.0:
        return RootResult(lo, lo, lo, 0, 0.0)
    if f_hi == 0.0:
        return RootResult(hi, hi, hi, 0, 0.0)
    if not _opposite(f_lo, f_hi):
        raise SolverError("no sign change in bracket", lo=lo, hi=hi, f_lo=f_lo, f_hi=f_hi)
    if log_scale and lo <= 0.0:
        raise SolverError("log-scale bisection needs a positive bracket", lo=lo)
    best_x, best_f = (lo, f_lo) if abs(f_lo) < abs(f_hi) else (hi, f_hi)
    for it in range(1, max_iter + 1):
        mid = math.sqrt(lo * hi) if log_scale else 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            return RootResult(best_x, lo, hi, it, abs(best_f))
        f_mid = f(mid)
        if abs(f_mid) <= abs(best_f):
            best_x, best_f = mid, f_mid
        if f_mid == 0.0 or abs(f_mid) < ftol:
            return RootResult(mid, lo, hi, it, abs(f_mid))
        if _opposite(f_lo, f_mid):
            hi, f_hi = mid, f_mid
        else:
            lo, f_lo = mid, f_mid
        width = (hi / lo - 1.0) if log_scale else (hi - lo)
        if width < xtol:
            x = math.sqrt(lo * hi) if log_scale else 0.5 * (lo + hi)
            return RootResult(x, lo, hi, it, abs(best_f))
    raise SolverError("bisection did not converge", lo=lo, hi=hi, iterations=max_iter)


def _opposite(a: float, b: float) -> bool:
    return (a < 0.0 < b) or (b < 0.0 < a)
