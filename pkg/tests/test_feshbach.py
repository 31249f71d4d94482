import math

import pytest
import yaml
from hypothesis import assume, given, strategies as st

from evaptwin.feshbach import (
    HIGH,
    LOW,
    RELIEVED,
    SATURATING,
    FeshbachScenario,
    PoleError,
    Resonance,
    elastic_cross_section,
    load_builtin,
    load_scenario,
    scattering_length,
    scenario_from_dict,
    scenario_table,
    scenario_to_dict,
    three_body_rate,
)

BG = 1e-28
CAP = 1e-24


def three_low():
    return FeshbachScenario(
        4.0, 150.0, (Resonance(1.0, 0.05), Resonance(3.0, -0.1), Resonance(6.5, 0.2)), BG, CAP
    )


def test_no_resonances_gives_background():
    s = FeshbachScenario(4.0, 123.0)
    for B in (0.1, 1.0, 4.8, 100.0):
        assert scattering_length(s, B) == 123.0
        assert three_body_rate(s, B, 0.3) == s.l3_background


def test_zero_crossing():
    s = FeshbachScenario(4.0, 100.0, (Resonance(2.0, 0.3),))
    assert scattering_length(s, 2.3) == pytest.approx(0.0, abs=1e-12)


def test_three_resonance_product_matches_term_by_term():
    s = three_low()
    for B in (0.5, 2.2, 3.5, 4.8, 9.0):
        expected = 150.0
        for b0, d in ((1.0, 0.05), (3.0, -0.1), (6.5, 0.2)):
            expected = expected * (1 - d / (B - b0))
        assert scattering_length(s, B) == pytest.approx(expected, rel=1e-12)


def test_pole_raises_and_l3_is_capped_there():
    s = three_low()
    with pytest.raises(PoleError):
        scattering_length(s, 3.0)
    assert three_body_rate(s, 3.0, 0.5) == CAP


def test_default_field_used():
    s = three_low()
    assert scattering_length(s) == scattering_length(s, 4.0)
    assert three_body_rate(s, T=0.2) == three_body_rate(s, 4.0, 0.2)


def test_elastic_cross_section():
    s = FeshbachScenario(4.0, 100.0)
    a_um = 100.0 * 5.29177210903e-11 / 1e-6
    assert elastic_cross_section(s) == pytest.approx(8 * math.pi * a_um**2, rel=1e-9)


def test_negative_temperature_rejected():
    with pytest.raises(ValueError):
        three_body_rate(three_low(), 4.0, -0.1)


@pytest.mark.parametrize("kwargs", [dict(position=1.0, width=0.0), dict(position=-1.0, width=0.1),
                                    dict(position=1.0, width=0.1, order="mid"),
                                    dict(position=1.0, width=-0.1, order=HIGH)])
def test_invalid_resonance(kwargs):
    with pytest.raises(ValueError):
        Resonance(**kwargs)


def test_invalid_scenario():
    with pytest.raises(ValueError):
        FeshbachScenario(0.0, 100.0)
    with pytest.raises(ValueError):
        FeshbachScenario(1.0, 100.0, l3_background=1e-27, l3_cap=1e-28)
    with pytest.raises(ValueError):
        FeshbachScenario(1.0, 0.0)


def test_builtin_ordering_and_table():
    s = load_builtin()
    t = s.reference_temperature
    assert three_body_rate(s, 3.91, t) > three_body_rate(s, 4.80, t)
    rows = scenario_table()
    fields = [r[0] for r in rows]
    assert 3.91 in fields and 4.8 in fields and len(rows) >= 4
    tags = dict((b, tag) for b, _, tag in rows)
    assert tags[3.91] == SATURATING and tags[4.8] == RELIEVED
    # tags follow L3 ordering: every saturating field has higher L3 than every relieved one
    sat = [l3 for _, l3, tag in rows if tag == SATURATING]
    rel = [l3 for _, l3, tag in rows if tag == RELIEVED]
    assert min(sat) > max(rel)
    # the extra fields sit between background and the saturating value
    extra = [l3 for b, l3, _ in rows if b not in (3.91, 4.8)]
    assert len(extra) == 2
    for l3 in extra:
        assert s.l3_background <= l3 < dict((b, v) for b, v, _ in rows)[3.91]


def test_roundtrip_dict_and_file(tmp_path):
    s = load_builtin()
    assert scenario_from_dict(scenario_to_dict(s)) == s
    p = tmp_path / "s.yaml"
    p.write_text(yaml.safe_dump(scenario_to_dict(s)))
    assert load_scenario(p) == s


scenarios = st.builds(
    lambda b0, w, strength, ta, lo_pos, lo_w: FeshbachScenario(
        4.0, 140.0,
        (Resonance(b0, w, HIGH, strength, ta), Resonance(lo_pos, lo_w, LOW)),
        BG, CAP,
    ),
    st.floats(1.0, 8.0), st.floats(0.01, 0.5), st.floats(0.0, 50.0), st.floats(0.0, 2.0),
    st.floats(0.5, 9.5), st.floats(-0.3, 0.3).filter(lambda w: abs(w) > 1e-3),
)


@given(scenarios, st.floats(0.1, 10.0), st.floats(0.0, 30.0))
def test_l3_clamped(s, B, T):
    l3 = three_body_rate(s, B, T)
    assert BG <= l3 <= CAP


@given(scenarios, st.floats(0.1, 10.0), st.floats(0.0, 30.0), st.floats(1.0, 10.0))
def test_l3_non_decreasing_in_temperature(s, B, T, k):
    assert three_body_rate(s, B, T * k) >= three_body_rate(s, B, T)


@given(scenarios, st.floats(0.1, 10.0), st.floats(0.0, 5.0))
def test_l3_continuous_away_from_poles(s, B, T):
    lo = s.low_order[0]
    assume(abs(B - lo.position) > 0.05)
    h = 1e-7
    a, b = three_body_rate(s, B, T), three_body_rate(s, B + h, T)
    assert abs(b - a) <= 1e-3 * a


def test_moving_off_high_order_center_decreases_l3():
    s = FeshbachScenario(4.0, 140.0, (Resonance(4.0, 0.1, HIGH, 20.0, 0.1),), BG, CAP)
    values = [three_body_rate(s, 4.0 + d, 1.0) for d in (0.0, 0.05, 0.1, 0.3, 1.0)]
    assert all(b < a for a, b in zip(values, values[1:]))
