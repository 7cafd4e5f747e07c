"""Recompute the frozen reference values in ``tests/oracle_values.py``.

Nothing here uses the package's quadrature engine.  Run with
``python3 tests/oracles/compute_oracles.py``; it takes about a minute.
"""

from __future__ import annotations

import numpy as np

# Trapezoid rule in u = log(s) on [-40, log 150]; the integrand
# f(s) e^{-s} s is smooth in u and decays at both ends.
U = np.linspace(-40.0, np.log(150.0), 6001)
S = np.exp(U)
W = np.full(U.size, U[1] - U[0]) * S * np.exp(-S)
W[0] *= 0.5
W[-1] *= 0.5


def e_t_opt_eps(eps: float = 0.1) -> float:
    """E[T] for T = 1 - 1/(S + eps): trapezoid in v = log(s + eps), 1e6 points."""
    v = np.linspace(np.log(eps), np.log(60.0 + eps), 1_000_001)
    s = np.exp(v) - eps
    f = (s + eps - 1.0) * np.exp(-s)  # (1 - 1/(s+eps)) e^{-s} ds/dv
    h = v[1] - v[0]
    return float(h * (f.sum() - 0.5 * (f[0] + f[-1])))


def transforms_mc(delta: float = 4.0, eps: float = 0.1, tau: float = 2.0,
                  count: int = 10_000_000, seed: int = 12345):
    """Monte-Carlo ratios for the normalized opt-eps trimmer s/(s+eps)."""
    rng = np.random.default_rng(seed)
    s = rng.exponential(size=count)
    t = s / (s + eps)
    g = 1.0 / (tau - t)
    n = count
    eg, esg, eg2, esg2 = g.mean(), (s * g).mean(), (g * g).mean(), (s * g * g).mean()
    c = 1.0 - 1.0 / delta
    lam = tau - c / eg
    psi1 = esg / eg
    psi2 = eg2 / eg**2
    psi3 = esg2 / eg**2
    # Delta-method standard errors via influence functions.
    se_lam = np.std(c * g / eg**2) / np.sqrt(n)
    se_psi1 = np.std((s * g - psi1 * g) / eg) / np.sqrt(n)
    se_psi2 = np.std(g * g / eg**2 - 2 * eg2 * g / eg**3) / np.sqrt(n)
    se_psi3 = np.std(s * g * g / eg**2 - 2 * esg2 * g / eg**3) / np.sqrt(n)
    return (lam, se_lam), (psi1, se_psi1), (psi2, se_psi2), (psi3, se_psi3)


def lambda_grid(taus: np.ndarray, delta: float, c: float) -> np.ndarray:
    """Lambda on a grid for T = s/(s + c), chunked dense quadrature."""
    t = S / (S + c)
    out = np.empty(taus.size)
    for i in range(0, taus.size, 2000):
        tt = taus[i:i + 2000, None]
        out[i:i + 2000] = tt[:, 0] - (1 - 1 / delta) / ((1.0 / (tt - t[None, :])) @ W)
    return out


def psi1_grid(taus: np.ndarray, c: float) -> np.ndarray:
    t = S / (S + c)
    g = 1.0 / (taus[:, None] - t[None, :])
    return ((S[None, :] * g) @ W) / (g @ W)


def main() -> None:
    print("E_T_OPT_EPS_0_1 =", repr(e_t_opt_eps()))
    for name, (v, se) in zip(("LAMBDA", "PSI1", "PSI2", "PSI3SQ"), transforms_mc()):
        print(f"MC_{name} = ({v!r}, {se!r})")
    delta = 3.0
    c = np.sqrt(delta) - 1.0
    right = np.round(np.arange(1.0, 50.0 + 5e-5, 1e-4), 10)
    lr = lambda_grid(right, delta, c)
    i = int(np.argmin(lr))
    print("MM3_TAU_R_GRID =", repr(float(right[i])), " MM3_LAMBDA_R_GRID =", repr(float(lr[i])))
    left = np.round(np.arange(-50.0, -1e-4 + 5e-5, 1e-4), 10)
    ll = lambda_grid(left, delta, c)
    j = int(np.argmax(ll))
    print("MM3_TAU_L_GRID =", repr(float(left[j])), " MM3_LAMBDA_L_GRID =", repr(float(ll[j])))
    delta = 5.0
    c = np.sqrt(delta) - 1.0
    taus = np.round(np.arange(1.0, 3.0 + 5e-5, 1e-4), 10)
    h = psi1_grid(taus, c) - delta / (delta - 1.0)
    k = int(np.nonzero(np.diff(np.sign(h)))[0][0])
    print("MM5_THETA_BRACKET =", (float(taus[k]), float(taus[k + 1])))


if __name__ == "__main__":
    main()
