import csv

import numpy as np
import pytest
from hypothesis import given, strategies as st

from evaptwin.ramps import (
    H,
    TIME,
    V,
    ParamLayout,
    RampSchedule,
    Slot,
    clamp_unit,
    decode,
    encode,
    extend_box,
    extend_tail,
    full_layout,
    make_vector,
    power_at,
    power_slope,
    rescale_time,
    tail_layout,
    write_schedule_csv,
)

BOX = {H: (0.001, 30.0), V: (0.005, 10.0)}


@st.composite
def schedules(draw, min_bp=2, max_bp=9):
    n = draw(st.integers(min_bp, max_bp))
    gaps = draw(st.lists(st.floats(0.05, 5.0), min_size=n - 1, max_size=n - 1))
    times = np.concatenate([[0.0], np.cumsum(gaps)])
    ph = draw(st.lists(st.floats(0.002, 25.0), min_size=n, max_size=n))
    pv = draw(st.lists(st.floats(0.01, 8.0), min_size=n, max_size=n))
    return RampSchedule(times, ph, pv)


def seven():
    return RampSchedule([0, 2, 4, 6, 8, 10, 12], [20, 8, 3, 1, 0.3, 0.1, 0.03], [0, 1, 2, 1.5, 0.8, 0.4, 0.2])


def line(t, t0, t1, p0, p1):
    return (p0 * (t1 - t) + p1 * (t - t0)) / (t1 - t0)


def test_schedule_validation():
    with pytest.raises(ValueError):
        RampSchedule([0, 1], [1], [1, 1])
    with pytest.raises(ValueError):
        RampSchedule([0.5, 1], [1, 1], [1, 1])
    with pytest.raises(ValueError):
        RampSchedule([0, 1, 1], [1, 1, 1], [1, 1, 1])
    with pytest.raises(ValueError):
        RampSchedule([0, 1], [1, -0.1], [1, 1])


def test_knots_and_midpoints():
    s = seven()
    for i, t in enumerate(s.times):
        assert power_at(s, t, H) == s.powers_h[i]
        assert power_at(s, t, V) == s.powers_v[i]
    assert power_at(s, 3.0, H) == pytest.approx((8 + 3) / 2, rel=1e-15)


def test_out_of_range():
    with pytest.raises(ValueError):
        power_at(seven(), -0.01, H)
    with pytest.raises(ValueError):
        power_at(seven(), 12.01, V)


@given(schedules(), st.integers(0, 2**32 - 1))
def test_interpolation_matches_line_oracle(s, seed):
    rng = np.random.default_rng(seed)
    for t in rng.uniform(0, s.duration, 100):
        i = max(k for k in range(len(s.times) - 1) if s.times[k] <= t)
        for beam in (H, V):
            p = s.powers(beam)
            expected = line(t, s.times[i], s.times[i + 1], p[i], p[i + 1])
            assert power_at(s, t, beam) == pytest.approx(expected, rel=1e-12, abs=1e-15)


@given(schedules())
def test_power_at_continuous(s):
    for i, t in enumerate(s.times[1:-1], start=1):
        for beam in (H, V):
            left = power_at(s, np.nextafter(t, 0), beam)
            right = power_at(s, np.nextafter(t, np.inf), beam)
            assert left == pytest.approx(s.powers(beam)[i], rel=1e-9, abs=1e-12)
            assert right == pytest.approx(s.powers(beam)[i], rel=1e-9, abs=1e-12)


def test_power_slope():
    s = seven()
    assert power_slope(s, 0, H) == pytest.approx(-6.0)
    assert power_slope(s, 1, V) == pytest.approx(0.5)


def test_roundtrip_on_seven_breakpoints():
    s = seven()
    lay = full_layout(s, BOX)
    back = decode(encode(s, lay))
    assert back.times == s.times
    np.testing.assert_allclose(back.powers_h, s.powers_h, rtol=1e-12)
    np.testing.assert_allclose(back.powers_v, s.powers_v, rtol=1e-12)
    # the t=0 powers are not exposed and pass through unchanged
    assert back.powers_h[0] == 20 and back.powers_v[0] == 0


def test_tail_layout_is_six_dimensional():
    lay = tail_layout(seven(), BOX, n_tail=3)
    assert lay.dim == 6
    assert lay.names == ["H[4]", "H[5]", "H[6]", "V[4]", "V[5]", "V[6]"]
    mask = lay.frozen_mask()
    assert mask[H] == [True] * 4 + [False] * 3
    with pytest.raises(ValueError):
        tail_layout(seven(), BOX, n_tail=7)


def test_held_beam_is_not_exposed():
    lay = full_layout(seven(), {V: BOX[V]})
    assert lay.names == [f"V[{i}]" for i in range(1, 7)]
    assert all(lay.frozen_mask()[H])
    assert tail_layout(seven(), {H: None, V: BOX[V]}, 3).dim == 3


def test_time_slot_rescales_hand_computed():
    s = RampSchedule([0, 1, 3, 4], [10, 5, 1, 0.5], [0, 1, 1, 0.5])
    lay = full_layout(s, BOX, time_bounds=(2.0, 10.0), log_power=False)
    k = lay.names.index(TIME)
    pv = encode(s, lay)
    vals = list(pv.values)
    vals[k] = 0.75  # 2 + 0.75 * 8 = 8 s
    out = decode(make_vector(vals, lay))
    assert out.times == pytest.approx((0.0, 2.0, 6.0, 8.0), abs=1e-12)
    np.testing.assert_allclose(out.powers_h, s.powers_h, rtol=1e-12)


def test_clamp_and_flag():
    s = RampSchedule([0, 1, 2], [10, 50, 0.0005], [0, 1, 1])
    pv = encode(s, full_layout(s, BOX))
    assert pv.values[0] == 1.0 and pv.values[1] == 0.0
    assert pv.clamped[:2] == (True, True)
    assert pv.n_clamped == 2
    assert clamp_unit([-0.5, 0.5, 1.5]) == ((0.0, 0.5, 1.0), (True, False, True))


def test_layout_validation():
    s = seven()
    with pytest.raises(ValueError):
        ParamLayout(s, (Slot(H, 1),), ())
    with pytest.raises(ValueError):
        ParamLayout(s, (Slot(H, 1), Slot(H, 1)), ((0.1, 1), (0.1, 1)))
    with pytest.raises(ValueError):
        ParamLayout(s, (Slot(H, 9),), ((0.1, 1),))
    with pytest.raises(ValueError):
        ParamLayout(s, (Slot(H, 1),), ((1, 1),))
    with pytest.raises(ValueError):
        ParamLayout(s, (Slot(H, 1),), ((0.0, 1),))
    with pytest.raises(ValueError):
        make_vector([0.5], full_layout(s, BOX))
    with pytest.raises(ValueError):
        encode(RampSchedule([0, 1], [1, 1], [1, 1]), full_layout(s, BOX))


def test_per_breakpoint_bounds():
    s = RampSchedule([0, 1, 2], [10, 1, 0.1], [0, 1, 0.5])
    box = {H: ([0, 0.5, 0.05], [0, 2, 0.2]), V: ([0, 0.5, 0.25], [0, 2, 1.0])}
    lay = full_layout(s, box)
    assert lay.bounds == ((0.5, 2.0), (0.05, 0.2), (0.5, 2.0), (0.25, 1.0))
    # log coordinates: the geometric centre maps to 0.5
    assert encode(s, lay).values == pytest.approx((0.5, 0.5, 0.5, 0.5), abs=1e-12)


@given(schedules(min_bp=3))
def test_decode_encode_identity_on_exposed_slots(s):
    lay = full_layout(s, BOX)
    back = decode(encode(s, lay))
    np.testing.assert_allclose(back.powers_h, s.powers_h, rtol=1e-12)
    np.testing.assert_allclose(back.powers_v, s.powers_v, rtol=1e-12)


@given(schedules(min_bp=3), st.lists(st.floats(0.0, 1.0), min_size=20, max_size=20), st.booleans())
def test_encode_decode_identity_on_in_box_vectors(s, u, log_power):
    lay = full_layout(s, BOX, time_bounds=(1.0, 60.0), log_power=log_power)
    vals = u[: lay.dim]
    back = encode(decode(make_vector(vals, lay)), lay)
    np.testing.assert_allclose(back.values, vals, atol=1e-9)
    assert back.n_clamped == 0


def test_extend_tail_examples():
    s = RampSchedule(np.linspace(0, 14, 6), [20, 5, 1, 0.3, 0.1, 0.05], [0, 1, 1, 0.5, 0.3, 0.2])
    e = extend_tail(s, 2, 1.4)
    assert e.duration == pytest.approx(16.8)
    assert len(e.times) == len(s.times) + 2
    assert e.powers_h[-2:] == (0.05, 0.05) and e.powers_v[-2:] == (0.2, 0.2)
    assert len(extend_tail(s, 1, 1.4).times) == len(s.times) + 1
    with pytest.raises(ValueError):
        extend_tail(s, 0, 1.4)
    with pytest.raises(ValueError):
        extend_tail(s, 1, 0.0)


@given(schedules(), st.integers(1, 4), st.floats(0.1, 3.0))
def test_extend_tail_preserves_original_domain(s, n, d):
    e = extend_tail(s, n, d)
    for t in np.linspace(0, s.duration, 57):
        for beam in (H, V):
            assert power_at(e, t, beam) == power_at(s, t, beam)


def test_extend_box():
    box = {H: ([0.1, 0.2], [1.0, 2.0]), V: (0.05, 8.0), "X": None}
    out = extend_box(box, 2)
    assert out[H] == ((0.1, 0.2, 0.2, 0.2), (1.0, 2.0, 2.0, 2.0))
    assert out[V] == (0.05, 8.0)
    assert out["X"] is None


def test_rescale_time():
    s = RampSchedule([0, 1, 3], [1, 1, 1], [1, 1, 1])
    assert rescale_time(s, 6.0).times == (0.0, 2.0, 6.0)
    with pytest.raises(ValueError):
        rescale_time(s, 0.0)


def test_dict_roundtrip_and_csv(tmp_path):
    s = seven()
    assert RampSchedule.from_dict(s.to_dict()) == s
    p = tmp_path / "s.csv"
    write_schedule_csv(s, p, n_points=25)
    rows = list(csv.reader(open(p)))
    assert rows[0] == ["time_s", "P_H_W", "P_V_W"]
    assert len(rows) == 26
    assert float(rows[-1][0]) == s.duration and float(rows[-1][1]) == s.powers_h[-1]
