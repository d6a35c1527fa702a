import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from loopchannel.errors import DataError
from loopchannel.traces import (
    Trace,
    differentiate,
    moving_average,
    read_trace_csv,
    uniform_grid,
    write_trace_csv,
)


def test_trace_validation():
    with pytest.raises(DataError):
        Trace([0.0], [1.0])
    with pytest.raises(DataError):
        Trace([0.0, 1.0], [1.0])
    with pytest.raises(DataError):
        Trace([0.0, 1.0, 1.0], [1.0, 2.0, 3.0])
    with pytest.raises(DataError):
        Trace([0.0, 1.0, 3.0], [1.0, 2.0, 3.0])
    tr = Trace(uniform_grid(1.0, 0.1), np.zeros(11))
    assert tr.dt == pytest.approx(0.1)
    assert len(tr) == 11


def test_uniform_grid_includes_end():
    g = uniform_grid(60.0, 0.05)
    assert g.size == 1201
    assert g[-1] == pytest.approx(60.0)


@given(st.floats(-5, 5), st.floats(-5, 5), st.integers(1, 15))
def test_moving_average_keeps_lines(a, b, window):
    x = np.arange(40.0)
    np.testing.assert_allclose(moving_average(a * x + b, window), a * x + b, atol=1e-9)


def test_differentiate_linear_ramp():
    t = uniform_grid(10.0, 0.1)
    d = differentiate(Trace(t, 3.0 * t + 1.0), 5)
    np.testing.assert_allclose(d.y, 3.0, atol=1e-9)
    np.testing.assert_array_equal(d.t, t[1:-1])


def test_differentiate_constant_is_zero():
    t = uniform_grid(10.0, 0.1)
    assert np.all(differentiate(Trace(t, np.full(t.size, 7.0)), 5).y == 0.0)


def test_differentiate_too_short():
    t = uniform_grid(0.8, 0.1)
    with pytest.raises(DataError):
        differentiate(Trace(t, t), 5)


def test_csv_round_trip(tmp_path):
    t = uniform_grid(2.0, 0.1)
    tr = Trace(t, np.sin(t))
    path = tmp_path / "tr.csv"
    write_trace_csv(tr, path)
    assert path.read_text().splitlines()[0] == "t_s,value"
    back = read_trace_csv(path)
    np.testing.assert_array_equal(back.y, tr.y)
    np.testing.assert_allclose(back.t, tr.t, rtol=0, atol=1e-12)


def test_csv_resamples_jittery_grid(tmp_path):
    t = np.array([0.0, 0.1, 0.25, 0.3, 0.4])
    path = tmp_path / "j.csv"
    path.write_text("t_s,value\n" + "".join(f"{a},{2 * a}\n" for a in t))
    tr = read_trace_csv(path)
    np.testing.assert_allclose(tr.t, [0.0, 0.1, 0.2, 0.3, 0.4])
    np.testing.assert_allclose(tr.y, 2 * tr.t)


@pytest.mark.parametrize("text", ["", "time,value\n0,1\n1,2\n", "t_s,value\n0,1\n1,x\n", "t_s,value\n0,1\n"])
def test_csv_rejects_bad_input(tmp_path, text):
    path = tmp_path / "bad.csv"
    path.write_text(text)
    with pytest.raises(DataError):
        read_trace_csv(path)
