"""mexpgrid command line.

  mexpgrid run mesh.sp --method all --tol 1e-4 --out wave.csv --stats stats.json
  mexpgrid genmesh --rows 50 --cols 50 --seed 7 --out mesh.sp

Exit status: 0 on success, 1 for unreadable or invalid input, 2 when a
simulation fails numerically.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from . import __version__
from .constants import DEFAULT_GAMMA, DEFAULT_HMAX, DEFAULT_MMAX
from .engine import (METHODS, EngineError, SimConfig, max_abs_error, oracle_transient, simulate, write_stats_json,
                     write_step_records, write_waveform_csv)
from .mna import MnaError, SingularSystemError, build_mna
from .netlist import MeshSpec, NetlistError, PwlWaveform, format_netlist, generate_pdn_mesh, parse_value, read_netlist
from .phi import ExactReference, OracleError
from .sparse import SingularMatrixError, warmup

EXIT_OK, EXIT_INPUT, EXIT_NUMERIC = 0, 1, 2


class _InputError(Exception):
    pass


def _value(text):
    try:
        return parse_value(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None


class _Parser(argparse.ArgumentParser):
    # bad flags are bad input: exit 1, keeping 2 for numerical failures
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT, f"{self.prog}: error: {message}\n")


# -- report ---------------------------------------------------------------------------------

@dataclass
class ReportRow:
    method: str
    dc: float
    lu: float
    total: float
    steps: int
    sum_m: int
    m_avg: float
    m_peak: int
    error: Optional[float] = None


@dataclass
class RunReport:
    rows: list = field(default_factory=list)

    def row(self, method):
        return next((r for r in self.rows if r.method == method), None)

    @property
    def has_reference(self):
        return any(r.error is not None for r in self.rows)

    @property
    def speedup(self):
        tr, mexp = self.row("tr"), self.row("mexp")
        if tr is None or mexp is None or mexp.total <= 0:
            return None
        return tr.total / mexp.total

    def format(self):
        head = ["method", "DC(s)", "LU(s)", "Total(s)", "N", "sum_m", "m_avg", "m_peak"]
        if self.has_reference:
            head.append("max|d| vs oracle")
        lines = []
        for r in self.rows:
            cells = [r.method, f"{r.dc:.4g}", f"{r.lu:.4g}", f"{r.total:.4g}", str(r.steps), str(r.sum_m),
                     f"{r.m_avg:.2f}", str(r.m_peak)]
            if self.has_reference:
                cells.append("-" if r.error is None else f"{r.error:.3e}")
            lines.append(cells)
        widths = [max(len(c) for c in col) for col in zip(head, *lines)]
        fmt = lambda cells: "  ".join(c.rjust(w) if i else c.ljust(w) for i, (c, w) in enumerate(zip(cells, widths)))  # noqa: E731
        out = [fmt(head), fmt(["-" * w for w in widths])] + [fmt(c) for c in lines]
        if self.speedup is not None:
            out.append(f"Speedup (TR total / MEXP total): {self.speedup:.2f}x")
        return "\n".join(out) + "\n"


def _row(wf, error=None):
    s = wf.stats
    return ReportRow(s.method, s.dc_seconds, s.lu_seconds, s.wall_seconds, s.steps, s.sum_m, s.m_avg, s.m_peak,
                     error)


# -- run ---------------------------------------------------------------------------------------

def _per_method(path, method, many):
    if path is None or not many:
        return path
    p = Path(path)
    return p.with_name(f"{p.stem}.{method}{p.suffix}")


def _config(args, nl, method):
    T = args.tmax
    if T is None:
        if nl.tran is None:
            raise _InputError("no .tran directive in the netlist; pass --tmax")
        T = nl.tran[0]
    try:
        return SimConfig(T=T, tol=args.tol, gamma=args.gamma, h_max=args.hmax, m_max=args.mmax,
                         output_dt=args.output_dt, method=method, tr_h=args.tr_h, tr_damping=args.tr_damping)
    except ValueError as exc:
        raise _InputError(str(exc)) from None


def cmd_run(args):
    try:
        nl = read_netlist(args.netlist)
        nl.check_transient()
        mna = build_mna(nl)
    except OSError as exc:
        return _fail(EXIT_INPUT, f"cannot read {args.netlist}: {exc.strerror or exc}")
    except NetlistError as exc:
        return _fail(EXIT_INPUT, f"{args.netlist}: {exc}")
    except SingularSystemError as exc:
        return _fail(EXIT_NUMERIC, f"{args.netlist}: {exc}")
    except MnaError as exc:
        return _fail(EXIT_INPUT, f"{args.netlist}: {exc}")

    methods = list(METHODS) if args.method == "all" else [args.method]
    many = len(methods) > 1
    try:
        cfgs = {m: _config(args, nl, m) for m in methods}
    except _InputError as exc:
        return _fail(EXIT_INPUT, str(exc))

    warmup()                           # keep JIT loading out of the timed columns
    results, reference = {}, None
    for method in methods:
        cfg = cfgs[method]
        try:
            if method == "oracle":
                try:
                    reference = ExactReference(mna)
                except OracleError as exc:
                    if not many:
                        raise
                    print(f"oracle skipped: {exc}", file=sys.stderr)
                    continue
                wf = oracle_transient(mna, cfg, reference=reference)
            else:
                wf = simulate(mna, cfg)
        except EngineError as exc:
            return _fail(EXIT_NUMERIC, f"{method} failed at t={exc.t:.6g}s: {exc}")
        except (SingularSystemError, SingularMatrixError, OracleError, ArithmeticError) as exc:
            return _fail(EXIT_NUMERIC, f"{method} failed at t=0s: {exc}")
        results[method] = wf
        if args.verbose:
            print(f"# {method}: {wf.stats.steps} steps, sum m = {wf.stats.sum_m}, "
                  f"{wf.stats.wall_seconds:.3g}s", file=sys.stderr)
            if wf.records:
                write_step_records(wf.records, sys.stderr)

    report = RunReport()
    for method, wf in results.items():
        err = None
        if reference is not None and method != "oracle":
            ref = oracle_transient(mna, cfgs["oracle"], sample_times=wf.times, reference=reference)
            err = max_abs_error(wf, ref)
        report.rows.append(_row(wf, err))
        out = _per_method(args.out, method, many)
        if out is not None:
            write_waveform_csv(wf, out)
        stats = _per_method(args.stats, method, many)
        if stats is not None:
            extra = {"netlist": str(args.netlist), "T": cfgs[method].T, "gamma": cfgs[method].gamma,
                     "tol": cfgs[method].tol}
            if err is not None:
                extra["max_abs_error_vs_oracle"] = err
            write_stats_json(wf, stats, extra)

    text = report.format()
    sys.stdout.write(text)
    if many and args.out is not None:
        Path(args.out).with_name(f"{Path(args.out).stem}.report.txt").write_text(text)
    return EXIT_OK


# -- genmesh ------------------------------------------------------------------------------------

def cmd_genmesh(args):
    try:
        if args.gmin <= 0 or args.gmax <= 0:
            raise ValueError("conductances must be positive")
        spec = MeshSpec(args.rows, args.cols, r_range=(1.0 / args.gmax, 1.0 / args.gmin),
                        c_range=(args.cmin, args.cmax), input=PwlWaveform.step(0.0, args.vdd, args.rise),
                        seed=args.seed, tran=(args.tstop, args.rise))
        if args.rise <= 0 or args.tstop <= 0:
            raise ValueError("--rise and --tstop must be positive")
    except ValueError as exc:
        return _fail(EXIT_INPUT, f"genmesh: {exc}")
    title = (f"{args.rows}x{args.cols} RC mesh seed={args.seed} C=[{args.cmin!r},{args.cmax!r}] "
             f"G=[{args.gmin!r},{args.gmax!r}]")
    text = format_netlist(generate_pdn_mesh(spec), title)
    if args.out is None:
        sys.stdout.write(text)
    else:
        with open(args.out, "w", newline="\n") as fh:
            fh.write(text)
    return EXIT_OK


def _fail(code, message):
    print(f"error: {message}", file=sys.stderr)
    return code


def build_parser():
    p = _Parser(prog="mexpgrid", description=__doc__.split("\n")[0],
                                formatter_class=argparse.RawDescriptionHelpFormatter, epilog=__doc__)
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    r = sub.add_parser("run", help="transient simulation of a netlist")
    r.add_argument("netlist")
    r.add_argument("--method", choices=(*METHODS, "all"), default="mexp")
    r.add_argument("--gamma", type=_value, default=DEFAULT_GAMMA, help="shift parameter in seconds (default 1e-10)")
    r.add_argument("--tol", type=_value, default=1e-4, help="accumulated error tolerance E_Tol (default 1e-4)")
    r.add_argument("--tmax", type=_value, default=None, help="simulation end time; overrides .tran")
    r.add_argument("--hmax", type=_value, default=DEFAULT_HMAX, help="largest MEXP step (default 1e-9)")
    r.add_argument("--tr-h", type=_value, default=10e-12, help="fixed trapezoidal step (default 10p)")
    r.add_argument("--tr-damping", action="store_true",
                   help="backward-Euler half steps across source corners in the TR baseline")
    r.add_argument("--mmax", type=int, default=DEFAULT_MMAX, help="Krylov dimension cap (default 30)")
    r.add_argument("--output-dt", type=_value, default=None, help="extra MEXP samples at multiples of this spacing")
    r.add_argument("--out", help="waveform CSV (with --method all: one file per method)")
    r.add_argument("--stats", help="statistics JSON (with --method all: one file per method)")
    r.add_argument("-v", "--verbose", action="store_true", help="per-step records on stderr")
    r.set_defaults(func=cmd_run)

    g = sub.add_parser("genmesh", help="write a random RC power-grid mesh netlist")
    g.add_argument("--rows", type=int, default=50)
    g.add_argument("--cols", type=int, default=50)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--cmin", type=_value, default=5.04e-19)
    g.add_argument("--cmax", type=_value, default=1.00e-15)
    g.add_argument("--gmin", type=_value, default=1.09e-2)
    g.add_argument("--gmax", type=_value, default=1.00e2)
    g.add_argument("--vdd", type=_value, default=1.0, help="step amplitude (default 1)")
    g.add_argument("--rise", type=_value, default=10e-12, help="step transition time (default 10p)")
    g.add_argument("--tstop", type=_value, default=10e-9, help=".tran stop time (default 10n)")
    g.add_argument("--out", help="netlist path (default stdout)")
    g.set_defaults(func=cmd_genmesh)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
