import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import make_trace
from resofit.errors import FitError
from resofit.model import EnvironmentParams, ResonatorParams
from resofit.photon import (HBAR, SweepWarning, assemble_power_sweep, input_power,
                            mean_photon_number, sweep_points)
from resofit.traces import ComplexTrace, SweepRecord


def oracle_n_bar(qt, qc, f0, p):
    return 4 * qt * qt * p / (qc * 1.054571817e-34 * (2 * math.pi * f0) ** 2)


def test_hbar_value():
    assert HBAR == 1.054571817e-34


@pytest.mark.parametrize("dbm, att, watts", [(0, 0, 1e-3), (-20, 100, 1e-15), (10, 130, 1e-15)])
def test_input_power(dbm, att, watts):
    assert input_power(dbm, att) == pytest.approx(watts, rel=1e-12)


def test_input_power_rejects_negative_attenuation():
    with pytest.raises(ValueError, match="negative attenuation"):
        input_power(0, -1)


def test_photon_number_reference():
    n = mean_photon_number(1e5, 1e6, 5e9, 1e-15)
    assert n == pytest.approx(384.3, rel=1e-3)
    assert n == pytest.approx(oracle_n_bar(1e5, 1e6, 5e9, 1e-15), rel=1e-14)


def test_photon_number_overcoupled_limit():
    q = 2e4
    expected = 4 * q * 1e-15 / (HBAR * (2 * math.pi * 5e9) ** 2)
    assert mean_photon_number(q, q, 5e9, 1e-15) == pytest.approx(expected, rel=1e-14)


def test_photon_number_validation():
    with pytest.raises(ValueError):
        mean_photon_number(2e5, 1e5, 5e9, 1e-15)
    with pytest.raises(ValueError):
        mean_photon_number(1e5, 1e6, 5e9, 0.0)


@settings(max_examples=100)
@given(qt=st.floats(1e3, 1e7), ratio=st.floats(1e-3, 1.0), f0=st.floats(1e9, 1e10),
       p=st.floats(1e-20, 1e-10), k=st.floats(0.01, 100))
def test_photon_number_linear_in_power(qt, ratio, f0, p, k):
    qc = qt / ratio
    a = mean_photon_number(qt, qc, f0, p)
    b = mean_photon_number(qt, qc, f0, k * p)
    assert b / a == pytest.approx(k, rel=1e-12)


@settings(max_examples=100)
@given(dbm=st.floats(-150, 30), att=st.floats(0, 150), x=st.floats(0, 50))
def test_input_power_shift_invariance(dbm, att, x):
    assert input_power(dbm + x, att + x) == pytest.approx(input_power(dbm, att), rel=1e-12)


@pytest.fixture(scope="module")
def resonator_trace():
    p = ResonatorParams.from_radius(5.5e9, 3e5, 0.3)
    return make_trace(p, EnvironmentParams(delay_s=2e-9, amp=0.4, phase_rad=0.5))


def records_at(trace, powers):
    return [SweepRecord(trace, pw, 0.0, 0.01, label=f"p{pw}") for pw in powers]


def test_sweep_ratios(resonator_trace):
    pts = assemble_power_sweep(records_at(resonator_trace, [-120, -100, -80]), 0.0)
    n = [pt.n_bar for pt in pts]
    assert n[1] / n[0] == pytest.approx(100, rel=1e-12)
    assert n[2] / n[0] == pytest.approx(10000, rel=1e-12)


def test_sweep_sorted_ascending(resonator_trace):
    pts = assemble_power_sweep(records_at(resonator_trace, [-80, -90, -100, -110]), 0.0)
    assert [pt.source_power_dbm for pt in pts] == [-110, -100, -90, -80]


def test_sweep_empty():
    with pytest.raises(FitError):
        assemble_power_sweep([], 0.0)


def flat_record(label):
    f = np.linspace(5e9, 5.001e9, 201)
    rng = np.random.default_rng(0)
    z = rng.standard_normal(201) + 1j * rng.standard_normal(201)
    return SweepRecord(ComplexTrace(f, z), -50.0, 0.0, 0.01, label=label)


def test_sweep_reports_failures(resonator_trace):
    recs = records_at(resonator_trace, [-100, -90]) + [flat_record("bad")]
    with pytest.warns(SweepWarning, match="bad"):
        pts = assemble_power_sweep(recs, 0.0)
    assert len(pts) == 2
    points, failures = sweep_points(recs, 0.0)
    assert [f.index for f in failures] == [2]
    assert failures[0].code.startswith("circle-fit")
    # every record is accounted for
    assert len(points) + len(failures) == len(recs)


def test_sweep_all_failed():
    with pytest.raises(FitError, match="every record"):
        assemble_power_sweep([flat_record("a"), flat_record("b")], 0.0)


def test_sweep_envelope_fields(resonator_trace):
    pts = assemble_power_sweep(records_at(resonator_trace, [-100]), 0.01, n_phases=8)
    pt = pts[0]
    assert pt.q_i_lo <= pt.q_i <= pt.q_i_hi
    assert pt.q_i_lo < pt.q_i_hi
    assert pt.p_in_w == pytest.approx(1e-13, rel=1e-12)


def test_parallel_matches_serial(resonator_trace):
    recs = records_at(resonator_trace, [-80, -110, -95])
    assert sweep_points(recs, 0.0, workers=2) == sweep_points(recs, 0.0, workers=1)
