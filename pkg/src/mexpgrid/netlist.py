"""SPICE-subset netlists, piecewise-linear sources and synthetic PDN meshes."""

from __future__ import annotations

import enum
import math
import re
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

GROUND = "0"


class NetlistError(ValueError):
    def __init__(self, message, line=None, token=None):
        self.line = line
        self.token = token
        where = f"line {line}: " if line is not None else ""
        what = f" (near {token!r})" if token is not None else ""
        super().__init__(f"{where}{message}{what}")


# -- values ---------------------------------------------------------------------

_SCALE = {"f": -15, "p": -12, "n": -9, "u": -6, "m": -3, "k": 3, "meg": 6, "g": 9}
_UNITS = {"", "v", "a", "s", "f", "h", "ohm", "ohms", "hz"}
_NUMBER = re.compile(r"^([+-]?(?:\d+(?:\.\d*)?|\.\d+))(?:[eE]([+-]?\d+))?([a-zA-Z]*)$")


def parse_value(token):
    """Parse a SPICE number such as ``10p``, ``1.5meg``, ``2e-3`` or ``10pF``."""
    m = _NUMBER.match(token)
    if not m:
        raise ValueError(token)
    mantissa, exp, rest = m.group(1), int(m.group(2) or 0), m.group(3).lower()
    if rest.startswith("meg"):
        exp += _SCALE["meg"]
        rest = rest[3:]
    elif rest and rest[0] in _SCALE and rest not in _UNITS - {"f"}:
        exp += _SCALE[rest[0]]
        rest = rest[1:]
    if rest not in _UNITS:
        raise ValueError(token)
    # shift the decimal exponent rather than multiply, so "2.5u" parses to exactly 2.5e-6
    return float(f"{mantissa}e{exp}")


# -- PWL waveforms ----------------------------------------------------------------

@dataclass(frozen=True)
class PwlWaveform:
    """Piecewise-linear waveform; holds its first/last value outside the breakpoints."""

    points: tuple

    def __post_init__(self):
        pts = tuple((float(t), float(v)) for t, v in self.points)
        if not pts:
            raise ValueError("PWL waveform needs at least one point")
        times = [t for t, _ in pts]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError("PWL times must be strictly increasing")
        if not all(math.isfinite(t) and math.isfinite(v) for t, v in pts):
            raise ValueError("PWL points must be finite")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "_t", np.array(times))
        object.__setattr__(self, "_v", np.array([v for _, v in pts]))

    @classmethod
    def constant(cls, value):
        return cls(((0.0, value),))

    @classmethod
    def step(cls, v0=0.0, v1=1.0, rise=10e-12, delay=0.0):
        if delay > 0:
            return cls(((0.0, v0), (delay, v0), (delay + rise, v1)))
        return cls(((0.0, v0), (rise, v1)))

    @property
    def times(self):
        return self._t.copy()

    @property
    def values(self):
        return self._v.copy()

    @property
    def amplitude(self):
        vals = self.values
        return float(vals.max() - vals.min())

    def __call__(self, t):
        return pwl_eval(self, t)


def pwl_eval(w, t):
    """Linear interpolation between breakpoints, constant hold outside them."""
    ts, vs = w._t, w._v
    k = int(np.searchsorted(ts, t, side="right"))
    if k == 0:
        return float(vs[0])
    if k == ts.size:
        return float(vs[-1])
    # fraction first: exact at breakpoints and at segment midpoints
    s = (t - ts[k - 1]) / (ts[k] - ts[k - 1])
    return float(vs[k - 1] + s * (vs[k] - vs[k - 1]))


def next_breakpoint(sources, t):
    """Smallest breakpoint strictly after ``t`` over all waveforms, or None."""
    best = None
    for w in sources:
        times = w._t
        k = np.searchsorted(times, t, side="right")
        if k < times.size and (best is None or times[k] < best):
            best = float(times[k])
    return best


# -- netlist data -------------------------------------------------------------------

class Kind(str, enum.Enum):
    RESISTOR = "R"
    CAPACITOR = "C"
    INDUCTOR = "L"
    VOLTAGE_SOURCE = "V"
    CURRENT_SOURCE = "I"

    @property
    def is_source(self):
        return self in (Kind.VOLTAGE_SOURCE, Kind.CURRENT_SOURCE)


@dataclass(frozen=True)
class Element:
    kind: Kind
    name: str
    nodes: tuple
    value: float = 0.0                       # ohms / farads / henries, or the DC level of a source
    waveform: Optional[PwlWaveform] = None   # PWL sources only

    def source_waveform(self):
        if not self.kind.is_source:
            raise TypeError(f"{self.name} is not a source")
        return self.waveform if self.waveform is not None else PwlWaveform.constant(self.value)


@dataclass
class Netlist:
    elements: list = field(default_factory=list)
    probes: list = field(default_factory=list)
    tran: Optional[tuple] = None             # (stop time, output interval or None)

    def nodes(self):
        """Non-ground node labels in order of first appearance."""
        seen = {}
        for e in self.elements:
            for n in e.nodes:
                if n != GROUND:
                    seen.setdefault(n, None)
        return list(seen)

    def sources(self):
        return [e for e in self.elements if e.kind.is_source]

    def element(self, name):
        for e in self.elements:
            if e.name.lower() == name.lower():
                return e
        raise KeyError(name)

    def check_transient(self):
        if not self.sources():
            raise NetlistError("transient analysis needs at least one source")


# -- parser -----------------------------------------------------------------------------

_PWL = re.compile(r"^pwl\s*\((.*)\)$", re.IGNORECASE)


def _logical_lines(text):
    """Yield (first physical line number, joined text), folding '+' continuations."""
    current, start = None, None
    for no, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if line.startswith("+") and current is not None:
            current += " " + line[1:].strip()
            continue
        if current is not None:
            yield start, current
        current, start = line, no
    if current is not None:
        yield start, current


def _value(token, line):
    try:
        return parse_value(token)
    except ValueError:
        raise NetlistError("malformed number", line, token) from None


def _parse_source(rest, line):
    text = rest.strip()
    m = _PWL.match(text)
    if m:
        toks = [t for t in re.split(r"[\s,]+", m.group(1).strip()) if t]
        if not toks or len(toks) % 2:
            raise NetlistError("PWL needs an even, nonzero number of values", line, text)
        nums = [_value(t, line) for t in toks]
        try:
            w = PwlWaveform(tuple(zip(nums[0::2], nums[1::2])))
        except ValueError as exc:
            raise NetlistError(str(exc), line, text) from None
        return w.values[0], w
    toks = text.split()
    if len(toks) == 2 and toks[0].lower() == "dc":
        return _value(toks[1], line), None
    if len(toks) == 1:
        return _value(toks[0], line), None
    raise NetlistError("expected 'DC <value>', '<value>' or 'PWL(...)'", line, text or None)


def parse_netlist(text):
    """Parse netlist text into a Netlist.

    Element lines: ``R|C|L<name> n+ n- value`` and ``V|I<name> n+ n- DC v``
    or ``... PWL(t1 v1 t2 v2 ...)``.  Directives: ``.tran tstop [tstep]``,
    ``.probe node ...`` and ``.end``.  ``*`` starts a comment line.
    """
    nl = Netlist()
    names = {}
    probe_lines = []
    for no, line in _logical_lines(text):
        if not line or line.startswith("*"):
            continue
        toks = line.split()
        head = toks[0]
        if head.startswith("."):
            d = head.lower()
            if d == ".end":
                break
            if d == ".tran":
                if len(toks) not in (2, 3):
                    raise NetlistError(".tran expects <tstop> [<tstep>]", no, line)
                tstop = _value(toks[1], no)
                tstep = _value(toks[2], no) if len(toks) == 3 else None
                if tstop <= 0 or (tstep is not None and tstep <= 0):
                    raise NetlistError(".tran times must be positive", no, line)
                nl.tran = (tstop, tstep)
            elif d == ".probe":
                if len(toks) < 2:
                    raise NetlistError(".probe needs at least one node", no, line)
                for t in toks[1:]:
                    nl.probes.append(t)
                    probe_lines.append((no, t))
            else:
                raise NetlistError("unknown directive", no, head)
            continue
        letter = head[0].upper()
        try:
            kind = Kind(letter)
        except ValueError:
            raise NetlistError("unknown element type", no, head) from None
        if len(toks) < 4:
            raise NetlistError("element needs a name, two nodes and a value", no, line)
        key = head.lower()
        if key in names:
            raise NetlistError(f"duplicate element name (first defined on line {names[key]})", no, head)
        names[key] = no
        nodes = (toks[1], toks[2])
        if nodes[0] == nodes[1]:
            raise NetlistError("element terminals are the same node", no, head)
        if kind.is_source:
            value, wave = _parse_source(line.split(None, 3)[3], no)
            nl.elements.append(Element(kind, head, nodes, float(value), wave))
        else:
            if len(toks) != 4:
                raise NetlistError("unexpected tokens after value", no, toks[4])
            value = _value(toks[3], no)
            if value <= 0:
                raise NetlistError("non-positive value", no, toks[3])
            nl.elements.append(Element(kind, head, nodes, value))
    known = set(nl.nodes())
    for no, label in probe_lines:
        if label not in known:
            raise NetlistError("probe refers to an unknown node", no, label)
    return nl


def format_netlist(nl, title=None):
    """Serialize a Netlist; parse_netlist(format_netlist(nl)) reproduces it exactly."""
    out = [f"* {title}" if title else "* netlist"]
    for e in nl.elements:
        a, b = e.nodes
        if not e.kind.is_source:
            out.append(f"{e.name} {a} {b} {e.value!r}")
        elif e.waveform is None:
            out.append(f"{e.name} {a} {b} DC {e.value!r}")
        else:
            pts = " ".join(f"{t!r} {v!r}" for t, v in e.waveform.points)
            out.append(f"{e.name} {a} {b} PWL({pts})")
    if nl.tran is not None:
        tstop, tstep = nl.tran
        out.append(f".tran {tstop!r}" + (f" {tstep!r}" if tstep is not None else ""))
    if nl.probes:
        out.append(".probe " + " ".join(nl.probes))
    out.append(".end")
    return "\n".join(out) + "\n"


def read_netlist(path):
    with open(path) as fh:
        return parse_netlist(fh.read())


# -- synthetic meshes ---------------------------------------------------------------

@dataclass(frozen=True)
class MeshSpec:
    rows: int
    cols: int
    r_range: tuple = (1.0 / 1.00e2, 1.0 / 1.09e-2)
    c_range: tuple = (5.04e-19, 1.00e-15)
    input: PwlWaveform = field(default_factory=PwlWaveform.step)
    seed: int = 0
    tran: tuple = (10e-9, 10e-12)

    def __post_init__(self):
        if self.rows < 1 or self.cols < 1:
            raise ValueError("mesh needs rows, cols >= 1")
        for name, (lo, hi) in (("r_range", self.r_range), ("c_range", self.c_range)):
            if not (0 < lo <= hi) or not math.isfinite(hi):
                raise ValueError(f"{name} must satisfy 0 < min <= max, got {(lo, hi)}")


def mesh_node(r, c):
    return f"n{r}_{c}"


def _log_uniform(rng, lo, hi):
    if lo == hi:
        return float(lo)
    return float(math.exp(rng.uniform(math.log(lo), math.log(hi))))


def generate_pdn_mesh(spec):
    """rows x cols RC grid, a capacitor from every node to ground, a PWL supply at n0_0.

    Resistances and capacitances are drawn log-uniformly so the mesh spans the
    same decades of stiffness as an on-chip grid; the far corner is probed.
    """
    rng = np.random.default_rng(spec.seed)
    els = [Element(Kind.VOLTAGE_SOURCE, "V1", (mesh_node(0, 0), GROUND), spec.input.values[0], spec.input)]
    for r in range(spec.rows):
        for c in range(spec.cols):
            here = mesh_node(r, c)
            els.append(Element(Kind.CAPACITOR, f"C{r}_{c}", (here, GROUND), _log_uniform(rng, *spec.c_range)))
            if c + 1 < spec.cols:
                els.append(Element(Kind.RESISTOR, f"RH{r}_{c}", (here, mesh_node(r, c + 1)),
                                   _log_uniform(rng, *spec.r_range)))
            if r + 1 < spec.rows:
                els.append(Element(Kind.RESISTOR, f"RV{r}_{c}", (here, mesh_node(r + 1, c)),
                                   _log_uniform(rng, *spec.r_range)))
    return Netlist(els, [mesh_node(spec.rows - 1, spec.cols - 1)], tuple(spec.tran))
