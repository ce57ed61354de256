import io

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cryofocus.errors import FormatError, InsufficientDataError, ParameterError, SingularConfigurationError
from cryofocus.focus import (
    FocusTrace,
    exact_shift,
    fov_from_magnification,
    magnification_from_fov,
    objective_shift_from_telescope,
    pixel_scale,
    read_trace_csv,
    recover_focal_change,
    recover_objective_shift,
    sensitivities,
    synthesize_trace,
    telescope_shift,
    write_trace_csv,
)


def exact_lens_oracle(delta_s_obj, delta_f, M, s_o):
    """Re-solve the thin-lens conjugate equation after an object shift."""
    s_t = M * s_o
    f = 1 / (1 / s_o + 1 / s_t)
    return 1 / (1 / (f + delta_f) - 1 / (s_o + delta_s_obj)) - s_t


def constant_trace(M, net, n=5):
    return FocusTrace(np.arange(n), np.linspace(0, net, n), np.full(n, M))


def test_telescope_shift():
    assert telescope_shift(0, 26) == 0
    assert telescope_shift(0.15, 40.82) == pytest.approx(-249.94, abs=0.01)
    assert objective_shift_from_telescope(10, 28) * 1e3 == pytest.approx(-12.755, abs=1e-3)
    with pytest.raises(ParameterError):
        telescope_shift(1, 0)


@given(st.floats(-1, 1), st.floats(-1, 1), st.floats(1, 100))
def test_telescope_shift_odd_and_decreasing(a, b, M):
    assert telescope_shift(-a, M) == -telescope_shift(a, M)
    if a < b:
        assert telescope_shift(a, M) > telescope_shift(b, M)


def test_exact_shift_examples():
    M = 26.0
    assert exact_shift(1e-3 * (1 + 1 / M**2), 1e-3, M, 20) == pytest.approx(0, abs=1e-15)
    assert exact_shift(0.001, 0, M, 20) == pytest.approx(-0.676 / 1.00135, rel=1e-12)
    assert exact_shift(0.001, 0, M, 20) == pytest.approx(-0.675, abs=5e-4)
    assert exact_shift(0, 0.001, M, 20) == pytest.approx((M**2 + 1) * 0.001, rel=2e-3)


def test_exact_shift_singular():
    # moving the object onto the focal plane: s_o + δ = f
    M, s_o = 26.0, 20.0
    f = s_o * M / (M + 1)
    with pytest.raises(SingularConfigurationError):
        exact_shift(f - s_o, 0, M, s_o)


@given(st.floats(-0.2, 0.2), st.floats(2, 60), st.floats(10, 40))
def test_exact_shift_matches_lens_equation(delta, M, s_o):
    got = exact_shift(delta, 0.0, M, s_o)
    ref = exact_lens_oracle(delta, 0.0, M, s_o)
    assert got == pytest.approx(ref, rel=1e-7, abs=1e-9)


@given(st.floats(1e-7, 1e-5), st.floats(2, 60))
def test_exact_shift_focal_term_matches_sensitivity(df, M):
    # the focal-length term carries the M^2 + 1 sensitivity, not the
    # fixed-object thin-lens derivative (M + 1)^2
    got = exact_shift(0.0, df, M, 20.0) / df
    assert got == pytest.approx(sensitivities(M).ds_t_per_df, rel=1e-3)


def test_exact_shift_limit_is_first_order():
    for M in (5.0, 26.0, 48.0):
        ratio = exact_shift(1e-6, 0, M, 20) / telescope_shift(1e-6, M)
        assert ratio == pytest.approx(1, rel=1e-4)


def test_sensitivities():
    assert sensitivities(1) == sensitivities(1.0)
    r = sensitivities(1)
    assert (r.ds_t_per_ds_o, r.ds_t_per_df) == (-1, 2)
    r = sensitivities(26)
    assert (r.ds_t_per_ds_o, r.ds_t_per_df) == (-676, 677)
    r = sensitivities(48)
    assert (r.ds_t_per_ds_o, r.ds_t_per_df) == (-2304, 2305)


@given(st.floats(0.01, 1000))
def test_sensitivities_differ_by_one(M):
    r = sensitivities(M)
    assert r.ds_t_per_df - (-r.ds_t_per_ds_o) == pytest.approx(1, abs=1e-9 * M * M)


def test_trace_invariants():
    with pytest.raises(InsufficientDataError):
        FocusTrace([0], [0], [26])
    with pytest.raises(ParameterError):
        FocusTrace([0, 1], [0, 1], [26, -1])
    with pytest.raises(ParameterError):
        FocusTrace([0, 0], [0, 1], [26, 26])
    FocusTrace([3, 2, 1], [0, 1, 2], [26, 26, 26])


def test_recover_focal_change():
    assert recover_focal_change(constant_trace(26, 0)) == 0
    assert recover_focal_change(constant_trace(48, 33.2)) * 1e3 == pytest.approx(33.2 / 2305 * 1e3)
    assert recover_focal_change(constant_trace(48, 33.2)) * 1e3 == pytest.approx(14.40, abs=0.01)
    assert recover_focal_change(constant_trace(1, 2)) == pytest.approx(1)


def test_recover_objective_shift():
    assert recover_objective_shift(constant_trace(26, 0)) == 0
    assert recover_objective_shift(constant_trace(10, -10)) == pytest.approx(0.1)


def test_panel_uses_mean_magnification():
    trace = FocusTrace([0, 1], [0, 1], [10, 30])
    assert recover_objective_shift(trace) == pytest.approx(-1 / 400)
    assert recover_focal_change(trace) == pytest.approx(1 / 401)


def test_cooldown_round_trip():
    T = np.linspace(293, 4, 120)
    frac = (293 - T) / 289
    obj = 0.10 * frac
    mag = 50 - 22 * frac
    trace = synthesize_trace(T, obj, mag)
    assert recover_objective_shift(trace) == pytest.approx(0.10, rel=1e-2)


def test_evacuation_round_trip():
    p = np.linspace(0, -1013, 100)
    mag = np.linspace(50, 46, 100)
    df = -0.0144 * p / -1013
    trace = synthesize_trace(p, np.zeros(100), mag, delta_f=df, abscissa_kind="pressure")
    assert recover_focal_change(trace) == pytest.approx(-0.0144, rel=1e-2)


@settings(max_examples=20, deadline=None)
@given(
    st.floats(0.02, 0.2),
    st.sampled_from([1, -1]),
    st.floats(20, 60),
    st.floats(20, 60),
    st.floats(0, 0.8),
    st.integers(100, 300),
)
def test_round_trip_property(amp, sign, m0, m1, wiggle, n):
    t = np.linspace(0, 1, n)
    obj = sign * amp * (t + wiggle * np.sin(2 * np.pi * t) / (2 * np.pi))
    mag = m0 + (m1 - m0) * t + 0.1 * min(m0, m1) * np.sin(np.pi * t) * wiggle
    trace = synthesize_trace(t, obj, mag)
    assert recover_objective_shift(trace) == pytest.approx(obj[-1], rel=1e-2)


@given(st.integers(1, 8))
def test_recovery_additive_over_concatenation(k):
    rng = np.random.default_rng(k)
    n = 10
    trace = FocusTrace(np.arange(n), np.cumsum(rng.normal(size=n)), rng.uniform(20, 60, n))
    for fn in (recover_objective_shift, recover_focal_change):
        assert fn(trace[: k + 1]) + fn(trace[k:]) == pytest.approx(fn(trace), rel=1e-12, abs=1e-15)


def test_fov_and_pixel_scale():
    assert fov_from_magnification(1, 23.1) == pytest.approx(23.1)
    assert fov_from_magnification(50, 23.1) == pytest.approx(0.462)
    assert fov_from_magnification(28, 23.1) == pytest.approx(0.825)
    assert magnification_from_fov(0.462, 23.1) == pytest.approx(50)
    assert pixel_scale(2.3, 26) == pytest.approx(0.0885, abs=1e-4)
    assert pixel_scale(1, 1) == 1
    assert pixel_scale(4.63, 26) == pytest.approx(0.178, abs=1e-3)


def test_trace_csv_round_trip(tmp_path):
    trace = synthesize_trace(np.linspace(293, 4, 11), np.linspace(0, 0.1, 11), np.linspace(50, 28, 11))
    path = tmp_path / "trace.csv"
    write_trace_csv(trace, path)
    assert path.read_text().splitlines()[0] == "abscissa,ds_tel_mm,magnification"
    back = read_trace_csv(path)
    assert np.array_equal(back.ds_tel, trace.ds_tel)
    assert np.array_equal(back.magnification, trace.magnification)


@pytest.mark.parametrize(
    "text, exc",
    [
        ("a,b,c\n1,2,3\n4,5,6\n", FormatError),
        ("abscissa,ds_tel_mm,magnification\n1,2\n", FormatError),
        ("abscissa,ds_tel_mm,magnification\n1,x,3\n2,1,3\n", FormatError),
        ("abscissa,ds_tel_mm,magnification\n1,0,26\n", InsufficientDataError),
        ("abscissa,ds_tel_mm,magnification\n", InsufficientDataError),
    ],
)
def test_trace_csv_errors(text, exc):
    with pytest.raises(exc):
        read_trace_csv(io.StringIO(text))
