"""Finite-size simulation of spectral initialization with Haar sensing.

The measurement model is ``y = |A x_star|`` with ``A`` the first ``n``
columns of an ``m x m`` Haar unitary.  The estimator is the leading
eigenvector of ``M = A^H diag(trimmer(y)) A``.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from threadpoolctl import threadpool_limits

from .errors import DimensionError, DomainError
from .model import Model, sample_trimmed
from .roots import bisect
from .trimmers import TrimmingFunction

MAX_FULL_EIG_DIM = 4096
POWER_TOL = 1e-10
POWER_MAX_ITER = 100_000
DIRECT_EIG_MAX_N = 512


@dataclass(frozen=True, eq=False)
class SensingMatrix:
    m: int
    n: int
    entries: np.ndarray

    @property
    def delta(self) -> float:
        return self.m / self.n


@dataclass(frozen=True)
class TrialResult:
    lambda1_hat: float
    overlap: float
    iterations: int
    a_m: float
    seed: int = 0
    method: str = "eigh"
    degenerate: bool = False


@dataclass(frozen=True)
class EmpiricalSummary:
    trials: int
    seed: int
    n: int
    m: int
    lambda1_mean: float
    lambda1_std: float
    overlap_mean: float
    overlap_std: float
    a_m_mean: float
    results: tuple[TrialResult, ...]
    config: dict = field(default_factory=dict)

    @property
    def overlap_stderr(self) -> float:
        return self.overlap_std / math.sqrt(self.trials)

    @property
    def lambda1_stderr(self) -> float:
        return self.lambda1_std / math.sqrt(self.trials)


def _int_seed(seq: np.random.SeedSequence) -> int:
    return int(seq.generate_state(1, dtype=np.uint64)[0])


def trial_seed(seed: int, trial: int) -> int:
    """Seed of trial ``trial``: a counter-based child of ``seed``."""
    return _int_seed(np.random.SeedSequence(seed, spawn_key=(trial,)))


def sample_sensing(m: int, n: int, seed: int) -> SensingMatrix:
    """First ``n`` columns of an ``m x m`` Haar unitary."""
    if n < 1 or m <= n:
        raise DimensionError(f"need m >= n + 1 and n >= 1, got m={m}, n={n}")
    rng = np.random.default_rng(seed)
    z = (rng.standard_normal((m, n)) + 1j * rng.standard_normal((m, n))) / math.sqrt(2.0)
    q, r = np.linalg.qr(z)
    d = np.diag(r)
    q = q * (d / np.abs(d))
    return SensingMatrix(m, n, q)


def _power_iteration(M: np.ndarray, start_seed: int) -> tuple[float, np.ndarray, int] | None:
    """Leading eigenpair of a PSD matrix, or None when convergence stalls.

    The iteration is declared stalled once the observed contraction rate
    predicts more than ``max(1000, 2 n)`` iterations in total, the point
    beyond which a dense eigendecomposition is cheaper.
    """
    n = M.shape[0]
    budget = min(POWER_MAX_ITER, max(1000, 2 * n))
    rng = np.random.default_rng(start_seed)
    v = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    v /= np.linalg.norm(v)
    lam_prev = None
    diff_prev = None
    for it in range(1, POWER_MAX_ITER + 1):
        w = M @ v
        lam = float(np.real(np.vdot(v, w)))
        nw = np.linalg.norm(w)
        if nw == 0.0:
            return None
        v = w / nw
        if lam_prev is not None:
            diff = abs(lam - lam_prev)
            scale = max(abs(lam), np.finfo(float).tiny)
            # The Rayleigh quotient error shrinks geometrically at rate r;
            # the remaining error is about diff * r / (1 - r).
            if diff_prev is not None and diff_prev > 0.0:
                r = min(diff / diff_prev, 1.0)
                remaining = diff * r / (1.0 - r) if r < 1.0 else math.inf
                if remaining <= POWER_TOL * scale:
                    return lam, v, it
                if it >= 200 and r > 0.0 and diff > 0.0:
                    needed = math.log(POWER_TOL * scale / diff) / math.log(r) if r < 1.0 else math.inf
                    if it + needed > budget:
                        return None
            if diff == 0.0:
                return lam, v, it
            diff_prev = diff
        lam_prev = lam
    return None


def spectral_estimate(
    A: SensingMatrix,
    x_star: np.ndarray,
    trimmer: TrimmingFunction,
    *,
    start_seed: int = 0,
    method: str = "auto",
) -> TrialResult:
    """Trimmed spectral estimate and its squared overlap with ``x_star``.

    ``method`` is ``auto`` (power iteration for PSD problems with
    ``n > 512``, full Hermitian eigendecomposition otherwise), ``power`` or
    ``eigh``.  A stalled power iteration falls back to ``eigh``.
    """
    x = np.asarray(x_star, dtype=complex)
    if x.shape != (A.n,):
        raise DimensionError(f"x_star must have length {A.n}")
    nrm2 = float(np.real(np.vdot(x, x)))
    if not math.isclose(nrm2, A.n, rel_tol=1e-9):
        raise DomainError("x_star must have squared norm n")
    E = A.entries
    y = np.abs(E @ x)
    t = np.asarray(trimmer(y), dtype=float)
    M = E.conj().T @ (t[:, None] * E)
    M = 0.5 * (M + M.conj().T)
    a_m = float(np.real(np.vdot(x, M @ x))) / A.n
    signed = trimmer.declared_range[0] < 0.0 or np.any(t < 0.0)
    use_power = method == "power" or (method == "auto" and A.n > DIRECT_EIG_MAX_N and not signed)
    degenerate = False
    iterations = 0
    used = "eigh"
    pair = _power_iteration(M, start_seed) if use_power else None
    if pair is not None:
        lam, v, iterations = pair
        used = "power"
    else:
        w, V = np.linalg.eigh(M)
        lam, v = float(w[-1]), V[:, -1]
        scale = max(abs(w[-1]), abs(w[0]), 1.0)
        degenerate = bool(A.n > 1 and w[-1] - w[-2] <= 1e-10 * scale)
    overlap = float(abs(np.vdot(x, v)) ** 2 / A.n)
    return TrialResult(
        lambda1_hat=float(lam),
        overlap=min(max(overlap, 0.0), 1.0),
        iterations=iterations,
        a_m=a_m,
        method=used,
        degenerate=degenerate,
    )


def _x_star(n: int, kind: str, seed: int) -> np.ndarray:
    if kind == "e1":
        x = np.zeros(n, dtype=complex)
        x[0] = math.sqrt(n)
        return x
    if kind == "random":
        rng = np.random.default_rng([seed, 1])
        x = rng.standard_normal(n) + 1j * rng.standard_normal(n)
        return x * (math.sqrt(n) / np.linalg.norm(x))
    raise ValueError(f"unknown x_star kind {kind!r}")


def _one_trial(args: tuple) -> TrialResult:
    m, n, tseed, trimmer, x_kind, method = args
    with threadpool_limits(limits=1):
        A = sample_sensing(m, n, tseed)
        res = spectral_estimate(A, _x_star(n, x_kind, tseed), trimmer, method=method)
    return TrialResult(
        lambda1_hat=res.lambda1_hat,
        overlap=res.overlap,
        iterations=res.iterations,
        a_m=res.a_m,
        seed=tseed,
        method=res.method,
        degenerate=res.degenerate,
    )


def dimensions(delta: float, n: int) -> tuple[int, int]:
    m = int(round(delta * n))
    if n < 1 or m < n + 1:
        raise DimensionError(f"delta={delta}, n={n} gives m={m} < n + 1")
    return m, n


def run_trials(
    model: Model,
    n: int,
    trials: int,
    seed: int,
    *,
    x_star: str = "e1",
    workers: int = 1,
    method: str = "auto",
    dump: str | Path | None = None,
) -> EmpiricalSummary:
    """Independent trials with counter-derived seeds, aggregated in index order."""
    if trials < 1:
        raise ValueError("trials must be at least 1")
    m, n = dimensions(model.delta, n)
    tasks = [(m, n, trial_seed(seed, t), model.trimmer, x_star, method) for t in range(trials)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = tuple(pool.map(_one_trial, tasks))
    else:
        results = tuple(_one_trial(task) for task in tasks)
    lam = np.array([r.lambda1_hat for r in results])
    ov = np.array([r.overlap for r in results])
    am = np.array([r.a_m for r in results])
    ddof = 1 if trials > 1 else 0
    summary = EmpiricalSummary(
        trials=trials,
        seed=seed,
        n=n,
        m=m,
        lambda1_mean=float(np.mean(lam)),
        lambda1_std=float(np.std(lam, ddof=ddof)),
        overlap_mean=float(np.mean(ov)),
        overlap_std=float(np.std(ov, ddof=ddof)),
        a_m_mean=float(np.mean(am)),
        results=results,
        config={
            "trimmer": model.trimmer.describe(),
            "delta": model.delta,
            "n": n,
            "trials": trials,
            "seed": seed,
            "x_star": x_star,
        },
    )
    if dump is not None:
        write_trial_dump(dump, results)
    return summary


def write_trial_dump(path: str | Path, results: Sequence[TrialResult]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for r in results:
            rec = {
                "seed": r.seed,
                "lambda1_hat": r.lambda1_hat,
                "overlap": r.overlap,
                "iterations": r.iterations,
                "a_m": r.a_m,
            }
            fh.write(json.dumps(rec) + "\n")


def _compressed_spectrum(t: np.ndarray, n: int, seed: int) -> np.ndarray:
    """All ``m`` eigenvalues of ``T^{1/2} U R U^H T^{1/2}`` in ascending order.

    Only the first ``n`` columns ``U_n`` of ``U`` matter, and the nonzero
    spectrum equals that of the ``n x n`` matrix ``U_n^H T U_n``.
    """
    m = t.size
    U = sample_sensing(m, n, seed).entries
    C = U.conj().T @ (t[:, None] * U)
    ev = np.linalg.eigvalsh(0.5 * (C + C.conj().T))
    return np.sort(np.concatenate([np.zeros(m - n), ev]))


def _bulk_inputs(m_dim: int, model: Model, seed: int) -> tuple[np.ndarray, int, int]:
    if not 2 <= m_dim <= MAX_FULL_EIG_DIM:
        raise DimensionError(f"m_dim must lie in [2, {MAX_FULL_EIG_DIM}]")
    n = int(round(m_dim / model.delta))
    if not 1 <= n < m_dim:
        raise DimensionError(f"m_dim={m_dim} and delta={model.delta} give n={n}")
    s_t, s_u = np.random.SeedSequence(seed).spawn(2)
    t = sample_trimmed(model, _int_seed(s_t), m_dim)[:, 1]
    return t, n, _int_seed(s_u)


def empirical_bulk(m_dim: int, model: Model, seed: int) -> np.ndarray:
    """Eigenvalues of the unspiked ``m_dim x m_dim`` bulk model."""
    t, n, useed = _bulk_inputs(m_dim, model, seed)
    with threadpool_limits(limits=1):
        return _compressed_spectrum(t, n, useed)


def empirical_spiked(m_dim: int, model: Model, theta: float, seed: int) -> tuple[float, float]:
    """Top eigenvalue and the largest remaining one when ``T[0] = theta``."""
    t, n, useed = _bulk_inputs(m_dim, model, seed)
    t = t.copy()
    t[0] = theta
    with threadpool_limits(limits=1):
        ev = _compressed_spectrum(t, n, useed)
    return float(ev[-1]), float(ev[-2])


@dataclass(frozen=True)
class RankOneReport:
    degenerate: bool
    a: float
    lambda1_P: float
    vartheta_star: float = math.nan
    lambda1: float = math.nan
    lambda1_reduced: float = math.nan
    overlap: float = math.nan
    overlap_reduced: float = math.nan

    @property
    def eigenvalue_residual(self) -> float:
        return abs(self.lambda1 - self.lambda1_reduced)

    @property
    def overlap_residual(self) -> float:
        return abs(self.overlap - self.overlap_reduced)


def verify_rank_one_reduction(D: np.ndarray) -> RankOneReport:
    """Check the scalar characterization of the top eigenpair of ``D``.

    With ``D = [[a, q^H], [q, P]]`` and ``L(v) = lambda_1(P + v q q^H)``, the
    top eigenvalue is ``L(v*)`` where ``L(v*) = 1/v* + a``, and the squared
    first coordinate of the top eigenvector is ``L'/(L' + 1/v*^2)``.
    """
    D = np.asarray(D)
    if D.ndim != 2 or D.shape[0] != D.shape[1] or D.shape[0] < 3:
        raise DimensionError("D must be square with size >= 3")
    if not np.allclose(D, D.conj().T, rtol=0.0, atol=1e-12 * max(1.0, np.abs(D).max())):
        raise DomainError("D must be Hermitian")
    a = float(np.real(D[0, 0]))
    q = D[1:, 0]
    P = D[1:, 1:]
    lam_P = float(np.linalg.eigvalsh(P)[-1])
    if not np.any(q) and lam_P <= a:
        return RankOneReport(degenerate=True, a=a, lambda1_P=lam_P)
    qq = np.outer(q, q.conj())

    def L(v: float) -> float:
        return float(np.linalg.eigvalsh(P + v * qq)[-1])

    def h(v: float) -> float:
        return L(v) - 1.0 / v - a

    lo = hi = 1.0
    f_lo = f_hi = h(1.0)
    while not f_lo < 0.0:
        hi, f_hi = lo, f_lo
        lo /= 2.0
        f_lo = h(lo)
    while not f_hi > 0.0:
        lo, f_lo = hi, f_hi
        hi *= 2.0
        f_hi = h(hi)
    vs = bisect(h, lo, hi, f_lo=f_lo, f_hi=f_hi, xtol=1e-15, log_scale=True).root
    step = 1e-3 * vs
    d1 = L(vs + step) - L(vs - step)
    d2 = L(vs + 2 * step) - L(vs - 2 * step)
    Lp = max((8.0 * d1 - d2) / (12.0 * step), 0.0)
    w, V = np.linalg.eigh(0.5 * (D + D.conj().T))
    return RankOneReport(
        degenerate=False,
        a=a,
        lambda1_P=lam_P,
        vartheta_star=vs,
        lambda1=float(w[-1]),
        lambda1_reduced=L(vs),
        overlap=float(abs(V[0, -1]) ** 2),
        overlap_reduced=Lp / (Lp + 1.0 / vs**2),
    )


def _first_column_and_trim(
    A: SensingMatrix, trimmer: TrimmingFunction, x_star: np.ndarray | None
) -> tuple[np.ndarray, np.ndarray]:
    if x_star is None:
        x = np.zeros(A.n, dtype=complex)
        x[0] = math.sqrt(A.n)
    else:
        x = np.asarray(x_star, dtype=complex)
    u = A.entries @ x
    t = np.asarray(trimmer(np.abs(u)), dtype=float)
    return u / np.linalg.norm(x), t


def empirical_Qm(
    A: SensingMatrix,
    trimmer: TrimmingFunction,
    lambda_grid: Sequence[float],
    x_star: np.ndarray | None = None,
) -> np.ndarray:
    """``Q_m(lam) = sum_i |A_1i|^2 / (lam - T_i)`` on a grid of ``lam > max T``."""
    a1, t = _first_column_and_trim(A, trimmer, x_star)
    lam = np.asarray(lambda_grid, dtype=float)
    if np.any(lam <= t.max()):
        raise DomainError("every grid point must exceed max T_i")
    w = np.abs(a1) ** 2
    return np.array([np.sum(w / (g - t)) for g in lam])


@dataclass(frozen=True)
class ESpectrumReport:
    eigenvalues: np.ndarray
    t_sorted: np.ndarray
    a_m: float
    upper_interlace_violation: float
    lower_interlace_violation: float
    has_outlier: bool
    outlier_residual: float
    top_bound_ok: bool
    bottom_bound_ok: bool


def e_matrix(
    A: SensingMatrix, trimmer: TrimmingFunction, vartheta: float, x_star: np.ndarray | None = None
) -> tuple[np.ndarray, np.ndarray, np.ndarray, float]:
    """``E(v) = B^H (T + v T A_1 (T A_1)^H) B`` with ``B`` spanning ``A_1^perp``.

    Returns ``(E, A_1, t, a_m)``.
    """
    a1, t = _first_column_and_trim(A, trimmer, x_star)
    full, _ = np.linalg.qr(a1[:, None], mode="complete")
    B = full[:, 1:]
    ta = t * a1
    BT = B.conj().T
    E = (BT * t[None, :]) @ B + vartheta * np.outer(BT @ ta, (BT @ ta).conj())
    a_m = float(np.real(np.vdot(a1, ta)))
    return 0.5 * (E + E.conj().T), a1, t, a_m


def check_e_spectrum(
    A: SensingMatrix, trimmer: TrimmingFunction, vartheta: float, x_star: np.ndarray | None = None
) -> ESpectrumReport:
    """Interlacing, the outlier equation and the range bounds for ``E(v)``."""
    E, a1, t, a_m = e_matrix(A, trimmer, vartheta, x_star)
    ev = np.sort(np.linalg.eigvalsh(E))[::-1]  # lambda_1 >= ... >= lambda_{m-1}
    ts = np.sort(t)[::-1]  # T_(1) >= ... >= T_(m)
    k = ev.size
    # lambda_i <= T_(i-1) for i >= 2 and lambda_i >= T_(i+1) for i >= 1 (1-based).
    upper = float(np.max(ev[1:] - ts[: k - 1], initial=0.0))
    lower = float(np.max(ts[1 : k + 1] - ev, initial=0.0))
    has_outlier = bool(ev[0] > ts[0])
    resid = math.nan
    if has_outlier:
        lam = ev[0]
        qm = float(np.sum(np.abs(a1) ** 2 / (lam - t)))
        resid = abs(qm - 1.0 / (lam - a_m - 1.0 / vartheta))
    return ESpectrumReport(
        eigenvalues=ev,
        t_sorted=ts,
        a_m=a_m,
        upper_interlace_violation=max(upper, 0.0),
        lower_interlace_violation=max(lower, 0.0),
        has_outlier=has_outlier,
        outlier_residual=resid,
        top_bound_ok=bool(ev[0] <= 1.0 + vartheta + 1e-10),
        bottom_bound_ok=bool(ev[-1] >= -1e-10),
    )
