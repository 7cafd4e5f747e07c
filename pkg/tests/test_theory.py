from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from orthospec.errors import DomainError, NoTransition
from orthospec.model import Model
from orthospec.theory import (
    Regime,
    e_st,
    eval_transforms,
    find_delta_transition,
    find_tau_r,
    find_theta_star,
    lambda_plus,
    lambda_plus_theta_derivative,
    predict,
    rho_opt,
    rho_opt_overlap_formula,
    theta_inverse,
    theta_of_vartheta,
    theta_star_opt,
    vartheta_c,
    vartheta_star,
)
from orthospec.trimmers import (
    constant_trimmer,
    make_trimmer,
    normalize_trimmer,
    opt_eps_trimmer,
    trimmer_family,
)

from oracle_values import (
    MC_LAMBDA,
    MC_PSI1,
    MC_PSI2,
    MC_PSI3SQ,
    MM3_LAMBDA_R_GRID,
    MM3_TAU_R_GRID,
    MM5_THETA_BRACKET,
)


def model(name: str, delta: float, eps: float = 0.01) -> Model:
    t = make_trimmer(name, delta, eps=eps)
    return Model(t if t.has_unit_range else normalize_trimmer(t), delta)


BUILTINS = ["mm", "lal", "opt-eps"]


def test_constant_trimmer_transforms() -> None:
    c, delta = 0.3, 2.5
    m = Model(constant_trimmer(c), delta)
    for tau in (1.0, 1.7, 4.0):
        v = eval_transforms(m, tau)
        assert v.psi1 == pytest.approx(1.0, rel=1e-12)
        assert v.psi2 == pytest.approx(1.0, rel=1e-12)
        assert v.lambda_of_tau == pytest.approx(tau - (1 - 1 / delta) * (tau - c), rel=1e-12)


def test_tau_below_one_rejected() -> None:
    with pytest.raises(DomainError):
        eval_transforms(model("mm", 3.0), 0.99)


def test_boundary_convention_when_mean_diverges() -> None:
    m = Model(constant_trimmer(1.0), 2.0)
    v = eval_transforms(m, 1.0)
    assert v.lambda_of_tau == 1.0 and v.psi1 == 1.0
    assert not v.psi_defined and math.isnan(v.psi2) and math.isnan(v.psi3sq)


def test_psi1_tends_to_one() -> None:
    for name in BUILTINS:
        assert eval_transforms(model(name, 3.0), 1e6).psi1 == pytest.approx(1.0, abs=1e-4)
        v = eval_transforms(model(name, 3.0), 1e4)
        assert v.psi1 == pytest.approx(1.0, abs=1e-3)
        # Lambda(tau) = tau - (1 - 1/delta) / E[1/(tau - T)] grows like tau / delta.
        assert v.lambda_of_tau / 1e4 == pytest.approx(1.0 / 3.0, abs=1e-3)


def test_transforms_match_monte_carlo_oracle() -> None:
    m = Model(normalize_trimmer(opt_eps_trimmer(4.0, 0.1)), 4.0)
    v = eval_transforms(m, 2.0)
    for got, (ref, se) in zip(
        (v.lambda_of_tau, v.psi1, v.psi2, v.psi3sq), (MC_LAMBDA, MC_PSI1, MC_PSI2, MC_PSI3SQ)
    ):
        assert abs(got - ref) < 3 * se


def test_jensen_strictness() -> None:
    for name in BUILTINS:
        for tau in (1.2, 2.0, 10.0):
            v = eval_transforms(model(name, 2.5), tau)
            assert v.psi2 > 1.0 and v.psi3sq > 0.0


@pytest.mark.parametrize("name", BUILTINS)
@pytest.mark.parametrize("tau", [1.5, 2.0, 5.0])
def test_lambda_derivative_matches_finite_difference(name: str, tau: float) -> None:
    m = model(name, 3.0)
    h = 1e-4
    fd = (eval_transforms(m, tau + h).lambda_of_tau - eval_transforms(m, tau - h).lambda_of_tau) / (2 * h)
    assert eval_transforms(m, tau).derivative == pytest.approx(fd, rel=1e-6)


def test_tau_r_for_constant_trimmer() -> None:
    c, delta = 0.2, 3.0
    tau_r, lam_r = find_tau_r(Model(constant_trimmer(c), delta))
    assert tau_r == 1.0
    assert lam_r == pytest.approx(1 - (1 - 1 / delta) * (1 - c), rel=1e-12)


def test_tau_r_mm_against_grid_oracle() -> None:
    tau_r, lam_r = find_tau_r(model("mm", 3.0))
    assert abs(tau_r - MM3_TAU_R_GRID) < 1e-3
    assert lam_r == pytest.approx(MM3_LAMBDA_R_GRID, abs=1e-9)


def test_tau_r_interior_minimum_has_zero_slope() -> None:
    m = model("lal", 4.0)
    tau_r, _ = find_tau_r(m)
    assert tau_r > 1.0
    assert abs(eval_transforms(m, tau_r).derivative) < 1e-9


def test_tau_r_is_one_for_small_eps_below_two() -> None:
    # Lambda'(1) tends to (2 - delta)/delta > 0 as eps -> 0.
    m = model("opt-eps", 1.6, eps=1e-4)
    assert eval_transforms(m, 1.0).derivative > 0
    assert find_tau_r(m)[0] == 1.0


def test_theta_star_none_for_constant() -> None:
    assert find_theta_star(Model(constant_trimmer(0.5), 3.0)) is None


def test_theta_star_mm_delta5() -> None:
    m = model("mm", 5.0)
    th = find_theta_star(m)
    assert abs(eval_transforms(m, th).psi1 - 5.0 / 4.0) < 1e-9
    assert MM5_THETA_BRACKET[0] <= th <= MM5_THETA_BRACKET[1]


def test_overlap_eps_limit() -> None:
    delta = 3.0
    target = rho_opt(delta)
    gaps = [abs(predict(model("opt-eps", delta, eps)).rho2_limit - target) for eps in (0.1, 0.01, 0.001)]
    assert gaps[0] > gaps[1] > gaps[2]
    assert gaps[2] < 1e-2


def test_predict_constant() -> None:
    p = predict(Model(constant_trimmer(0.5), 3.0))
    assert p.regime is Regime.UNINFORMATIVE and p.rho2_limit == 0.0


def test_predict_opt_eps_close_to_optimum() -> None:
    p = predict(model("opt-eps", 3.0, eps=0.01))
    assert p.regime is Regime.INFORMATIVE
    assert abs(p.rho2_limit - rho_opt(3.0)) < 1e-2


def test_predict_maps_eigenvalue_back_for_raw_trimmer() -> None:
    raw = opt_eps_trimmer(3.0, 0.1)
    p = predict(Model(normalize_trimmer(raw), 3.0))
    lo, hi = raw.declared_range
    assert p.lambda1_raw == pytest.approx(lo + (hi - lo) * p.lambda1_limit, rel=1e-12)


@pytest.mark.parametrize("name", BUILTINS)
@pytest.mark.parametrize("delta", [1.5, 2.5, 4.0])
def test_dual_path_top_eigenvalue(name: str, delta: float) -> None:
    m = model(name, delta)
    p = predict(m)
    v = vartheta_star(m)
    assert abs(p.lambda1_limit - v.lambda1_check) < 1e-8
    assert v.vartheta_star == pytest.approx(p.vartheta_star, rel=1e-8)
    if p.regime is Regime.UNINFORMATIVE:
        assert v.case == 1 and v.derivative == 0.0
        assert v.lambda1_check == pytest.approx(p.lambda_r, abs=1e-12)
    else:
        assert v.case == 2
        assert v.theta == pytest.approx(p.theta_star, rel=1e-8)


@pytest.mark.parametrize("name", BUILTINS)
def test_case2_derivative_matches_finite_difference(name: str) -> None:
    m = model(name, 4.0)
    v = vartheta_star(m)
    assert v.case == 2
    tau_r, lam_r = find_tau_r(m)
    h = 1e-5

    def F(x: float) -> float:
        return lambda_plus(m, theta_of_vartheta(m, x), tau_r, lam_r)

    fd = (F(v.vartheta_star + h) - F(v.vartheta_star - h)) / (2 * h)
    assert v.derivative == pytest.approx(fd, rel=1e-4)
    assert lambda_plus_theta_derivative(m, v.vartheta_star) == pytest.approx(v.derivative, rel=1e-8)


def test_overlap_equals_derivative_ratio() -> None:
    m = model("lal", 4.0)
    v = vartheta_star(m)
    p = predict(m)
    ratio = v.derivative / (v.derivative + 1 / v.vartheta_star**2)
    assert ratio == pytest.approx(p.rho2_limit, rel=1e-8)


def test_theta_of_vartheta_below_critical() -> None:
    m = model("mm", 3.0)
    vc = vartheta_c(m)
    assert math.isfinite(vc) and vc > 0
    assert theta_of_vartheta(m, vc / 2) == 1.0


def test_theta_of_vartheta_increasing_and_unbounded() -> None:
    m = model("mm", 3.0)
    grid = np.geomspace(1.0, 1e6, 25)
    vals = [theta_of_vartheta(m, v) for v in grid]
    assert all(b >= a for a, b in zip(vals, vals[1:]))
    assert vals[-1] > 1e3


def test_theta_inverse_round_trip() -> None:
    m = model("mm", 3.0)
    v = theta_inverse(m, 2.0)
    assert theta_of_vartheta(m, v) == pytest.approx(2.0, abs=1e-8)
    assert theta_inverse(m, 1.0) == pytest.approx(vartheta_c(m), rel=1e-10)


def test_theta_fixed_point_residual() -> None:
    m = model("lal", 2.5)
    v = 40.0
    th = theta_of_vartheta(m, v)
    q = m.expect(lambda s, t: s / (th - t))
    assert abs(th - e_st(m) - 1 / v - 1 / q) < 1e-10


def test_delta_transition_opt_eps() -> None:
    res = find_delta_transition(trimmer_family("opt-eps", eps=1e-3), (1.1, 6.0))
    assert 1.95 <= res.delta_T <= 2.05
    assert res.hi - res.lo <= 1e-4


def test_delta_transition_constant_has_none() -> None:
    with pytest.raises(NoTransition):
        find_delta_transition(trimmer_family("const", value=0.4), (1.1, 6.0))


def test_delta_transition_mm_against_regime_scan() -> None:
    res = find_delta_transition(trimmer_family("mm"), (1.5, 5.0))
    fam = trimmer_family("mm")
    grid = np.round(np.arange(2.55, 2.70 + 1e-9, 1e-3), 6)
    informative = [predict(Model(fam(d), d)).regime is Regime.INFORMATIVE for d in grid]
    k = informative.index(True)
    assert not any(informative[:k]) and all(informative[k:])
    assert grid[k - 1] - 1e-4 <= res.delta_T <= grid[k] + 1e-4


def test_rho_opt_values() -> None:
    assert rho_opt(2.0) == 0.0
    assert rho_opt(1.5) == 0.0
    assert abs(rho_opt(4.0) - rho_opt_overlap_formula(4.0)) < 1e-8
    th = theta_star_opt(4.0)
    assert rho_opt(4.0) == pytest.approx((th - 1) / (th - 0.25), rel=1e-14)


def test_rho_opt_monotone() -> None:
    grid = np.linspace(2.1, 50.0, 40)
    vals = [rho_opt(d) for d in grid]
    assert all(b > a for a, b in zip(vals, vals[1:]))
    assert 0 < vals[0] and vals[-1] < 1


@pytest.mark.parametrize("delta", [2.5, 3.0, 4.0])
def test_no_trimmer_beats_optimum(delta: float) -> None:
    bound = rho_opt(delta) + 1e-9
    for name in BUILTINS:
        assert predict(model(name, delta)).rho2_limit <= bound


@settings(max_examples=25, deadline=None)
@given(
    a=st.floats(1.0, 30.0),
    b=st.floats(1.0, 30.0),
    w=st.floats(0.0, 1.0),
    delta=st.floats(1.1, 8.0),
    name=st.sampled_from(BUILTINS),
)
def test_lambda_convex_on_right_half_line(a: float, b: float, w: float, delta: float, name: str) -> None:
    m = model(name, delta)
    L = lambda x: eval_transforms(m, x).lambda_of_tau  # noqa: E731
    mid = w * a + (1 - w) * b
    assert L(mid) <= w * L(a) + (1 - w) * L(b) + 1e-9


@settings(max_examples=20, deadline=None)
@given(delta=st.floats(1.1, 12.0), name=st.sampled_from(BUILTINS))
def test_overlap_bounds_and_regime_consistency(delta: float, name: str) -> None:
    m = model(name, delta)
    p = predict(m)
    assert 0.0 <= p.rho2_limit <= 1.0
    if p.regime is Regime.INFORMATIVE:
        assert p.psi1_at_tau_r > m.kappa and p.rho2_limit > 0
        v = eval_transforms(m, p.theta_star)
        assert v.psi3sq > m.kappa * v.psi2
        assert p.lambda1_limit == pytest.approx(v.lambda_of_tau)
    elif p.regime is Regime.UNINFORMATIVE:
        assert p.psi1_at_tau_r < m.kappa and p.rho2_limit == 0.0
        assert p.lambda1_limit == p.lambda_r
