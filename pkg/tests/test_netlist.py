import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mexpgrid.netlist import (Kind, MeshSpec, NetlistError, PwlWaveform, format_netlist, generate_pdn_mesh,
                              next_breakpoint, parse_netlist, parse_value, pwl_eval)


# -- numbers ------------------------------------------------------------------

@pytest.mark.parametrize("token, value", [
    ("1k", 1e3), ("1K", 1e3), ("2.5u", 2.5e-6), ("10p", 1e-11), ("10pF", 1e-11), ("1f", 1e-15),
    ("3meg", 3e6), ("3MEG", 3e6), ("1m", 1e-3), ("1g", 1e9), ("4n", 4e-9), ("1e-15", 1e-15),
    ("-2.0E3", -2e3), (".5", 0.5), ("5V", 5.0), ("1kohm", 1e3), ("1.5e3k", 1.5e6),
])
def test_parse_value(token, value):
    assert parse_value(token) == value


@pytest.mark.parametrize("token", ["abc", "1x", "1..2", "", "k1", "1e"])
def test_parse_value_rejects(token):
    with pytest.raises(ValueError):
        parse_value(token)


# -- element lines ----------------------------------------------------------------

def test_resistor_suffix():
    e = parse_netlist("R1 1 0 1k").elements[0]
    assert (e.kind, e.name, e.nodes, e.value) == (Kind.RESISTOR, "R1", ("1", "0"), 1000.0)


def test_pwl_step_source():
    e = parse_netlist("V1 2 0 PWL(0 0 10p 1)").elements[0]
    assert e.kind is Kind.VOLTAGE_SOURCE
    assert e.waveform.points == ((0.0, 0.0), (1e-11, 1.0))
    assert pwl_eval(e.waveform, 5e-12) == 0.5


def test_capacitor_scientific():
    e = parse_netlist("C1 3 0 1e-15").elements[0]
    assert e.kind is Kind.CAPACITOR and e.value == 1.00e-15


def test_non_positive_value():
    with pytest.raises(NetlistError) as err:
        parse_netlist("Rbad 1 0 -5")
    assert err.value.line == 1 and err.value.token == "-5"
    assert "non-positive" in str(err.value)


def test_zero_capacitor_rejected():
    with pytest.raises(NetlistError):
        parse_netlist("* header\nC1 1 0 0")


@pytest.mark.parametrize("line", ["I1 0 1 DC 2m", "I1 0 1 2m", "I1 0 1 dc 2m"])
def test_dc_source_forms(line):
    e = parse_netlist(line).elements[0]
    assert e.kind is Kind.CURRENT_SOURCE and e.value == 2e-3 and e.waveform is None


def test_pwl_with_commas_and_spaces():
    e = parse_netlist("V1 a 0 PWL (0,0, 1n,2 ,3n, 2)").elements[0]
    assert e.waveform.points == ((0.0, 0.0), (1e-9, 2.0), (3e-9, 2.0))


def test_continuation_line():
    nl = parse_netlist("V1 a 0 PWL(0 0\n+ 1n 1)\nR1 a 0 1")
    assert nl.elements[0].waveform.points[-1] == (1e-9, 1.0)


def test_comments_blank_lines_and_labels_verbatim():
    nl = parse_netlist("* title\n\n   \nR1 VDD_a n.1 10\n* R2 x y 1\nC9 n.1 0 1f\n")
    assert [e.name for e in nl.elements] == ["R1", "C9"]
    assert nl.nodes() == ["VDD_a", "n.1"]


def test_directives():
    nl = parse_netlist("R1 a 0 1\n.tran 10n 10p\n.probe a\n.end\nthis is ignored")
    assert nl.tran == (1e-8, 1e-11)
    assert nl.probes == ["a"]
    assert parse_netlist(".tran 1u").tran == (1e-6, None)


@pytest.mark.parametrize("text, line, token", [
    ("R1 a 0 1\n.option foo", 2, ".option"),
    ("R1 a 0 1\nR1 b 0 2", 2, "R1"),
    ("R1 a 0 1\nr1 b 0 2", 2, "r1"),
    ("Q1 a b c", 1, "Q1"),
    ("\n\nC1 a 0 1zz", 3, "1zz"),
    ("R1 a 0 1 2", 1, "2"),
    ("R1 a a 1", 1, "R1"),
    ("R1 a 0 1\n.probe b", 2, "b"),
    ("V1 a 0 PWL(0 0 1n)", 1, None),
    ("V1 a 0 PWL(1n 0 0 1)", 1, None),
    ("V1 a 0 SIN(0 1 1k)", 1, None),
])
def test_errors_carry_line_and_token(text, line, token):
    with pytest.raises(NetlistError) as err:
        parse_netlist(text)
    assert err.value.line == line
    if token is not None:
        assert err.value.token == token
    assert f"line {line}" in str(err.value)


def test_too_few_fields():
    with pytest.raises(NetlistError):
        parse_netlist("R1 a 0")


def test_check_transient_needs_source():
    with pytest.raises(NetlistError):
        parse_netlist("R1 a 0 1").check_transient()


# -- PWL ----------------------------------------------------------------------------

def test_pwl_eval_examples():
    w = PwlWaveform(((0.0, 0.0), (1e-11, 1.0)))
    assert pwl_eval(w, 5e-12) == 0.5
    assert pwl_eval(w, 2e-9) == 1.0
    assert pwl_eval(w, 1e-11) == 1.0
    assert w(0.0) == 0.0


def test_pwl_hold_first_value_before_start():
    w = PwlWaveform(((1e-9, 3.0), (2e-9, 5.0)))
    assert pwl_eval(w, 0.0) == 3.0


def test_pwl_invalid():
    with pytest.raises(ValueError):
        PwlWaveform(())
    with pytest.raises(ValueError):
        PwlWaveform(((0.0, 1.0), (0.0, 2.0)))
    with pytest.raises(ValueError):
        PwlWaveform(((0.0, math.nan),))


def test_next_breakpoint_examples():
    w = PwlWaveform(((0.0, 0.0), (10e-12, 1.0)))
    assert next_breakpoint([w], 0.0) == 10e-12
    assert next_breakpoint([w], 10e-12) is None
    a = PwlWaveform(((0.0, 0.0), (5e-12, 1.0)))
    assert next_breakpoint([a, w], 1e-12) == 5e-12
    assert next_breakpoint([], 0.0) is None


pwl_points = st.lists(
    st.tuples(st.floats(0, 1e-6, allow_subnormal=False), st.floats(-10, 10, allow_subnormal=False)),
    min_size=1, max_size=8, unique_by=lambda p: p[0],
).map(lambda pts: PwlWaveform(tuple(sorted(pts))))


@settings(max_examples=100, deadline=None)
@given(w=pwl_points)
def test_pwl_continuous_at_breakpoints(w):
    gap = np.diff(w.times).min(initial=np.inf)
    for t, v in w.points:
        assert pwl_eval(w, t) == v
        # stay inside the neighbouring segments
        eps = min(max(abs(t), 1e-18) * 1e-9, 0.5 * gap)
        assert abs(pwl_eval(w, t + eps) - v) <= 1e-5 * (1 + abs(v)) + abs(np.diff(w.values)).max(initial=0)
        assert abs(pwl_eval(w, max(t - eps, 0.0)) - v) <= 1e-5 * (1 + abs(v)) + abs(np.diff(w.values)).max(initial=0)


@settings(max_examples=100, deadline=None)
@given(w=pwl_points, t=st.floats(0, 2e-6))
def test_pwl_bounded_by_neighbouring_values(w, t):
    v = pwl_eval(w, t)
    assert w.values.min() - 1e-12 <= v <= w.values.max() + 1e-12


# -- round trip ---------------------------------------------------------------------

SAMPLE = """* sample
V1 in 0 PWL(0 0 10p 1 5n 1 5.01n 0.5)
I2 0 mid DC 1m
R1 in mid 1k
L1 mid out 2n
C1 out 0 1e-15
Rload out 0 50
.tran 10n 10p
.probe out mid
.end
"""


def test_round_trip_sample():
    nl = parse_netlist(SAMPLE)
    again = parse_netlist(format_netlist(nl))
    assert again.elements == nl.elements
    assert again.probes == nl.probes and again.tran == nl.tran


@settings(max_examples=25, deadline=None)
@given(rows=st.integers(1, 5), cols=st.integers(1, 5), seed=st.integers(0, 1000))
def test_round_trip_meshes(rows, cols, seed):
    nl = generate_pdn_mesh(MeshSpec(rows, cols, seed=seed))
    again = parse_netlist(format_netlist(nl))
    assert again.elements == nl.elements
    assert again.probes == nl.probes and again.tran == nl.tran


# -- mesh generator ---------------------------------------------------------------------

def test_mesh_2500_nodes():
    nl = generate_pdn_mesh(MeshSpec(50, 50, seed=7))
    assert len(nl.nodes()) == 2500
    assert len([e for e in nl.elements if e.kind is Kind.RESISTOR]) == 2 * 50 * 49
    assert len([e for e in nl.elements if e.kind is Kind.CAPACITOR]) == 2500
    assert nl.probes == ["n49_49"]


def test_mesh_values_within_quoted_extremes():
    spec = MeshSpec(20, 20, r_range=(1 / 1e2, 1 / 1e-2), c_range=(5.04e-19, 1.00e-15), seed=3)
    nl = generate_pdn_mesh(spec)
    g = [1 / e.value for e in nl.elements if e.kind is Kind.RESISTOR]
    c = [e.value for e in nl.elements if e.kind is Kind.CAPACITOR]
    assert 1e-2 * (1 - 1e-12) <= min(g) and max(g) <= 1e2 * (1 + 1e-12)
    assert 5.04e-19 <= min(c) and max(c) <= 1.00e-15
    # log-uniform spread: the samples should span most of the decades
    assert max(g) / min(g) > 1e3 and max(c) / min(c) > 1e2


def test_mesh_one_by_one():
    nl = generate_pdn_mesh(MeshSpec(1, 1))
    kinds = sorted(e.kind.value for e in nl.elements)
    assert kinds == ["C", "V"]
    assert nl.nodes() == ["n0_0"]


def test_mesh_deterministic():
    a = format_netlist(generate_pdn_mesh(MeshSpec(6, 7, seed=11)))
    b = format_netlist(generate_pdn_mesh(MeshSpec(6, 7, seed=11)))
    c = format_netlist(generate_pdn_mesh(MeshSpec(6, 7, seed=12)))
    assert a == b and a != c


@pytest.mark.parametrize("kwargs", [
    dict(rows=0, cols=3), dict(rows=2, cols=2, r_range=(2.0, 1.0)), dict(rows=2, cols=2, c_range=(0.0, 1.0)),
])
def test_mesh_spec_validation(kwargs):
    with pytest.raises(ValueError):
        MeshSpec(**kwargs)
