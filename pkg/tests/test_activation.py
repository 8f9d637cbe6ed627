import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mktorus import activation as act
from mktorus import circuits as C
from mktorus.backend import ClearBackend


def test_reference_values():
    assert act.sigmoid_clear(0) == 0.5
    assert act.g_clear(1) == 12
    assert act.taylor_clear(0, 3) == 0.5 and act.taylor_clear(0, 7) == 0.5
    assert act.g_clear([-5, -2, 0, 2, 5]).tolist() == [0, 0, 8, 16, 16]


def test_taylor_tracks_sigmoid_near_zero():
    # bounded by the first omitted term at |x| = 1: 31/1451520 and 1/480
    x = np.linspace(-1, 1, 41)
    assert np.abs(act.taylor_clear(x, 7) - act.sigmoid_clear(x)).max() <= 31 / 1451520
    assert np.abs(act.taylor_clear(x, 3) - act.sigmoid_clear(x)).max() <= 1 / 480


def test_coefficients():
    assert act.taylor_coefficients(3) == (1024, -85)
    assert act.taylor_coefficients(7) == (1024, -85, 9, -1)
    with pytest.raises(ValueError):
        act.taylor_coefficients(5)


def test_act_spec_validation():
    assert act.ActSpec("taylor7", 16).order == 7
    assert act.ActSpec("g").order is None
    with pytest.raises(ValueError):
        act.ActSpec("relu")
    with pytest.raises(ValueError):
        act.ActSpec("g", 12)


def test_g_int_boundaries():
    assert act.g_int([-3, -2, -1, 0, 1, 2, 3]).tolist() == [0, 0, 4, 8, 12, 16, 16]


def test_act_g_exhaustive_small(clear):
    x = np.arange(-32, 32)
    out = act.act_g(C.mk_enc_word(x, 6, clear)).decode()
    assert np.array_equal(out, act.g_int(x))


def test_act_g_properties(clear):
    x = np.arange(-128, 128)
    out = act.act_g(C.mk_enc_word(x, 8, clear)).decode()
    assert np.all(np.diff(out) >= 0)
    assert out.min() == 0 and out.max() == 16
    assert np.all(out[x < -2] == 0) and np.all(out[x > 2] == 16)


def test_act_g_needs_room(clear):
    with pytest.raises(C.WidthError):
        act.act_g(C.mk_enc_word(0, 5, clear))


@pytest.mark.parametrize("l", [6, 8, 16])
def test_act_g_cost(clear, l):
    with clear.count() as c:
        act.act_g(C.mk_enc_word(0, l, clear))
    L = l + 3
    assert c.bootstrapped_gates == act.g_act_cost(l) == 3 + C.g_add(L) + 2 * C.g_compare_quads(L)


@pytest.mark.parametrize("order", [3, 7])
@given(st.lists(st.integers(-2 ** 15, 2 ** 15 - 1), min_size=1, max_size=16))
def test_taylor_circuit_matches_integer_reference(order, xs):
    x = np.array(xs)
    be = ClearBackend()
    got = act.act_taylor(C.mk_enc_word(x, 16, be), order).decode()
    assert np.array_equal(got, act.taylor_int(x, order))


@pytest.mark.parametrize("order", [3, 7])
def test_taylor_integer_reference_near_zero(order):
    x = np.arange(-16, 17)  # |x| <= 1 at 4 fractional bits
    want = 16 * act.taylor_clear(x / 16, order)
    assert np.abs(act.taylor_int(x, order) - want).max() <= 1.5


def test_taylor_coefficient_scale_checked(clear):
    with pytest.raises(C.WidthError):
        act.act_taylor(C.mk_enc_word(0, 8, clear), 3, coef_bits=2)


def test_gate_cost_report():
    g = act.gate_cost("g", 16)
    t7 = act.gate_cost("taylor7", 16)
    assert g["bootstrapped"] == act.g_act_cost(16)
    assert g["value_at_0"] == 8 and t7["value_at_0"] == 8
    assert t7["bootstrapped"] > 5 * g["bootstrapped"]
    with pytest.raises(ValueError):
        act.gate_cost("tanh")
