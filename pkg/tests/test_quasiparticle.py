import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.constants import h, k

from resofit.errors import InsufficientSpanError, ModelError, ParseError
from resofit.quasiparticle import (QuasiparticleParams, TempSweepPoint, bcs_gap,
                                   default_init, joint_fit, joint_objective, mb_sigma,
                                   model_curves, parse_temperature_csv, synthetic_sweep)

F0 = 5.791625e9
REF_QP = QuasiparticleParams(6.5, 0.0014, 324.0, 1.5e6)
T_GRID = np.linspace(0.02, 5.8, 25)

params = st.builds(QuasiparticleParams,
                   t_c_k=st.floats(1.0, 10.0), alpha=st.floats(1e-4, 1.0),
                   a_qp=st.floats(1.0, 1e4), q_other=st.floats(1e3, 1e8))


def test_constants():
    assert k == 1.380649e-23
    assert h == 6.62607015e-34


def test_gap_zero_temperature():
    d0 = 1.764 * k * 6.5
    assert d0 == pytest.approx(1.583e-22, rel=1e-3)
    assert bcs_gap(0.065, 6.5) == pytest.approx(d0, rel=1e-6)


def test_gap_vanishes_at_tc():
    t = 6.5 * (1 - np.logspace(-1, -8, 30))
    gaps = bcs_gap(t, 6.5)
    assert np.all(np.diff(gaps) < 0)
    assert gaps[-1] < 1e-3 * bcs_gap(0.1, 6.5)


@pytest.mark.parametrize("t", [0.0, 6.5, 7.0])
def test_gap_domain(t):
    with pytest.raises(ModelError):
        bcs_gap(t, 6.5)


def test_sigma_low_temperature_limit():
    s1, s2 = mb_sigma(0.065, F0, 6.5)
    d0 = 1.764 * k * 6.5
    assert s1 < 1e-30
    assert s2 == pytest.approx(math.pi * d0 / (h * F0), rel=1e-6)


def test_sigma_monotone():
    t = np.linspace(0.65, 0.7 * 6.5, 400)
    s1, s2 = mb_sigma(t, F0, 6.5)
    assert np.all(np.diff(s1) > 0)
    assert np.all(np.diff(s2) < 0)
    assert np.all(s2 > 0)


def test_sigma_warns_at_high_frequency():
    with pytest.warns(RuntimeWarning, match="not small"):
        mb_sigma(0.1, 5e11, 1.0)


def test_curves_anchor_and_base_q():
    df, q = model_curves(REF_QP, F0, np.concatenate([[0.01], T_GRID]))
    assert df[0] == 0.0
    assert q[0] == pytest.approx(1.5e6, rel=1e-9)
    assert np.all(np.diff(df) <= 0)
    assert np.all(df[2:] < 0)


def test_alpha_linearity():
    double = QuasiparticleParams(6.5, 0.0028, 324.0, 1.5e6)
    df1, _ = model_curves(REF_QP, F0, T_GRID)
    df2, _ = model_curves(double, F0, T_GRID)
    assert np.array_equal(df2, 2 * df1)


def test_params_validation():
    with pytest.raises(ModelError):
        QuasiparticleParams(6.5, 1.5, 324, 1.5e6)
    with pytest.raises(ModelError):
        QuasiparticleParams(-1, 0.1, 324, 1.5e6)


@settings(max_examples=60, deadline=None)
@given(p=params, lo=st.floats(0.02, 0.2))
def test_curve_invariants(p, lo):
    t = np.linspace(lo * p.t_c_k, 0.7 * p.t_c_k, 60)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        df, q = model_curves(p, F0, t)
        s1, s2 = mb_sigma(t, F0, p.t_c_k)
    assert df[0] == 0.0
    assert np.all(np.diff(q) <= 0)
    qp = 1 / q - 1 / p.q_other
    expected = p.a_qp * p.alpha * s1 / s2
    # forming 1/q - 1/q_other costs a few ulps of 1/q on top of the relative error
    bound = 1e-12 * expected + 4 * np.spacing(1 / q)
    assert np.all(np.abs(qp - expected) <= bound)


def test_decomposition_identity_exact():
    # evaluated directly without the cancellation of 1/q - 1/q_other
    t = np.linspace(2.0, 4.5, 20)
    _, q = model_curves(REF_QP, F0, t)
    s1, s2 = mb_sigma(t, F0, REF_QP.t_c_k)
    expected = REF_QP.a_qp * REF_QP.alpha * s1 / s2
    assert np.allclose(1 / q - 1 / REF_QP.q_other, expected, rtol=1e-12, atol=0)


def test_objective_minimum_at_truth():
    pts = synthetic_sweep(REF_QP, F0, T_GRID)
    at_truth = joint_objective(REF_QP, pts, F0)
    assert at_truth <= 1e-18
    rng = np.random.default_rng(2024)
    base = np.array([REF_QP.t_c_k, REF_QP.alpha, REF_QP.a_qp, REF_QP.q_other])
    for _ in range(20):
        d = rng.standard_normal(4)
        d /= np.linalg.norm(d)
        moved = QuasiparticleParams(*(base * (1 + 0.01 * d)))
        assert joint_objective(moved, pts, F0) > at_truth


def test_noiseless_recovery():
    fit = joint_fit(synthetic_sweep(REF_QP, F0, T_GRID), F0)
    got = fit.params
    for a, b in zip((got.t_c_k, got.alpha, got.a_qp, got.q_other),
                    (REF_QP.t_c_k, REF_QP.alpha, REF_QP.a_qp, REF_QP.q_other)):
        assert a == pytest.approx(b, rel=1e-6)
    assert fit.converged and fit.at_bound == ()


def test_explicit_init_and_cutoff():
    pts = synthetic_sweep(REF_QP, F0, T_GRID)
    init = QuasiparticleParams(7.0, 2e-3, 200.0, 1e6)
    fit = joint_fit(pts, F0, init=init, t_cutoff_k=5.0)
    assert fit.n_points == sum(p.temperature_k <= 5.0 for p in pts)
    assert fit.params.t_c_k == pytest.approx(6.5, rel=1e-5)


def test_default_init():
    pts = synthetic_sweep(REF_QP, F0, T_GRID)
    init = default_init(pts)
    assert init.t_c_k > max(p.temperature_k for p in pts)
    assert init.alpha == 1e-3 and init.a_qp == 100.0
    assert init.q_other == pts[0].q_i


def test_insufficient_span():
    pts = [TempSweepPoint(1.0, 0.0, 1e6)] * 10
    with pytest.raises(InsufficientSpanError):
        joint_fit(pts, F0)


def test_too_few_points():
    pts = synthetic_sweep(REF_QP, F0, np.linspace(0.1, 5, 5))
    with pytest.raises(InsufficientSpanError, match="at least 8"):
        joint_fit(pts, F0)


def test_parse_temperature_csv():
    text = "temperature_k,delta_f_hz,q_i\n0.02,0,1.5e6\n1.0,-3.5,1.4e6\n"
    pts = parse_temperature_csv(text)
    assert pts[1] == TempSweepPoint(1.0, -3.5, 1.4e6)


@pytest.mark.parametrize("text", ["temperature_k,q_i\n1,2\n",
                                  "temperature_k,delta_f_hz,q_i\n1,x,2\n",
                                  "temperature_k,delta_f_hz,q_i\n-1,0,2\n", ""])
def test_parse_temperature_csv_errors(text):
    with pytest.raises(ParseError):
        parse_temperature_csv(text)
