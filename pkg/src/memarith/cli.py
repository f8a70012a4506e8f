"""Command-line entry point: ``memarith <sweep|program|block|compile|run> ...``.

Exit status: 0 success, 1 usage error, 2 domain error (range, timeout,
syntax, unreadable files).
"""
from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

from . import blocks
from .blocks import BLOCKS, CURRENT_BLOCKS, BlockResult, Mode, ReadPulse
from .compiler import (DEFAULT_GAMMA, DivideByZero, ExpressionSyntaxError, Plan, PlanError, RangeError,
                       ReadSettings, check_ranges, execute, lower, parse)
from .device import DEVICE_KEYS, DeviceParams, DeviceState, SweepTrace, params_from_mapping, read_kv_file, sweep
from .programmer import ProgrammerConfig, ProgrammingError, ProgramTrace, program

CONFIG_ENV = "MEMARITH_CONFIG"
PROGRAMMER_KEYS = ("a", "tol", "dt", "max_time")
OTHER_KEYS = ("gamma", "margin")

SWEEP_COLUMNS = ("t", "x", "M", "i")
PROGRAM_COLUMNS = ("t", "M", "v_drop", "comparator", "drive_sign")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def __init__(self, *args, **kwargs):
        kwargs.setdefault("allow_abbrev", False)
        super().__init__(*args, **kwargs)

    def error(self, message):
        self.print_help(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _fmt(v) -> str:
    if isinstance(v, int):
        return str(v)
    return repr(float(v))


def write_trace_csv(trace, path) -> None:
    """Write a sweep or programming trace, header first, one sample per row."""
    if path is None or str(path) == "":
        raise ValueError("trace output path is empty")
    if len(trace) == 0:
        raise ValueError("trace has no samples")
    if isinstance(trace, SweepTrace):
        header, cols = SWEEP_COLUMNS, (trace.t, trace.x, trace.m, trace.i)
    elif isinstance(trace, ProgramTrace):
        header, cols = PROGRAM_COLUMNS, (trace.t, trace.m, trace.v_drop, trace.comparator,
                                         trace.drive_sign.astype(int))
    else:
        raise TypeError(f"cannot write trace of type {type(trace).__name__}")
    lines = [",".join(header)]
    lists = [c.tolist() for c in cols]
    lines.extend(",".join(_fmt(v) for v in row) for row in zip(*lists))
    text = "\n".join(lines) + "\n"
    if str(path) == "-":
        sys.stdout.write(text)
    else:
        Path(path).write_text(text, encoding="utf-8")


def _display(v: float) -> str:
    return f"{v:.4g}"


# --- configuration -------------------------------------------------------------

def _load_config(args) -> dict:
    path = args.config or os.environ.get(CONFIG_ENV)
    if not path:
        return {}
    values = read_kv_file(path)
    unknown = set(values) - set(DEVICE_KEYS) - set(PROGRAMMER_KEYS) - set(OTHER_KEYS)
    if unknown:
        raise ValueError(f"{path}: unknown keys {sorted(unknown)}")
    return values


def _device_params(args, values: dict) -> DeviceParams:
    merged = {k: v for k, v in values.items() if k in DEVICE_KEYS}
    for key in DEVICE_KEYS:
        flag = getattr(args, key, None)
        if flag is not None:
            merged[key] = flag
    return params_from_mapping(merged)


def _programmer_config(args, values: dict) -> ProgrammerConfig:
    kwargs = {k: float(values[k]) for k in PROGRAMMER_KEYS if k in values}
    for key in PROGRAMMER_KEYS:
        flag = getattr(args, key, None)
        if flag is not None:
            kwargs[key] = flag
    return ProgrammerConfig(**kwargs)


def _setting(args, values: dict, key: str, default: float) -> float:
    flag = getattr(args, key, None)
    if flag is not None:
        return flag
    return float(values[key]) if key in values else default


# --- subcommands ---------------------------------------------------------------

def cmd_sweep(args, values) -> int:
    params = _device_params(args, values)
    trace = sweep(params, DeviceState(args.x0), args.current, args.dt, args.steps)
    write_trace_csv(trace, args.output)
    return 0


def cmd_program(args, values) -> int:
    params = _device_params(args, values)
    cfg = _programmer_config(args, values)
    trace = program(cfg, params, DeviceState(args.x0), args.target)
    if args.output:
        write_trace_csv(trace, args.output)
    if args.plot:
        _plot_program(trace, args.plot)
    print(_display(trace.final_m))
    return 0


def _plot_program(trace: ProgramTrace, path) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6, 3.5))
    ax.plot(trace.t * 1e3, trace.v_drop)
    ax.set_xlabel("t (ms)")
    ax.set_ylabel("voltage across memristor (V)")
    ax.set_title(f"programming to {trace.target:g} Ohm")
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def cmd_block(args, values) -> int:
    op = args.op
    if op in CURRENT_BLOCKS and args.vi is not None:
        raise UsageError(f"block {op} is current-driven; use --iread, not --vi")
    if op not in CURRENT_BLOCKS and args.iread is not None:
        raise UsageError(f"block {op} is voltage-driven; use --vi, not --iread")
    default = blocks.default_pulse(op)
    amp = args.iread if op in CURRENT_BLOCKS else args.vi
    amp = default.amplitude if amp is None else amp
    pulse = ReadPulse(amp, args.width, Mode(args.mode))
    circuit = {"r1": args.r1, "r2": args.r2, "ra": args.ra, "rb": args.rb}
    params = _device_params(args, values)
    res: BlockResult = blocks.read(op, args.m1, args.m2, pulse, params, **circuit)
    if args.csv:
        print(BlockResult.CSV_HEADER)
        print(res.csv_row())
    else:
        print(_display(res.numeric_value))
    return 0


def cmd_compile(args, values) -> int:
    params = _device_params(args, values)
    gamma = _setting(args, values, "gamma", DEFAULT_GAMMA)
    margin = _setting(args, values, "margin", 10.0)
    plan = lower(check_ranges(parse(args.expression), gamma, margin, params))
    if args.output in (None, "-"):
        sys.stdout.write(plan.to_json())
    else:
        plan.save(args.output)
    return 0


def cmd_run(args, values) -> int:
    params = _device_params(args, values)
    cfg = _programmer_config(args, values)
    plan = Plan.load(args.plan)
    result = execute(plan, Mode(args.mode), cfg, params, ReadSettings())
    if args.out_dir:
        out = Path(args.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        for reg, trace in sorted(result.traces.items()):
            write_trace_csv(trace, out / f"reg{reg}.csv")
        lines = ["step," + BlockResult.CSV_HEADER]
        for step, res in result.reads:
            lines.append(f"{plan.steps.index(step)},{res.csv_row()}")
        (out / "reads.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    print(_display(result.value))
    return 0


# --- parser --------------------------------------------------------------------

def _common() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    g = common.add_argument_group("device (override the config file)")
    g.add_argument("--config", help=f"flat key = value config file (default: ${CONFIG_ENV})")
    g.add_argument("--r-on", dest="r_on", type=float)
    g.add_argument("--r-off", dest="r_off", type=float)
    g.add_argument("--d", type=float, help="film thickness (m)")
    g.add_argument("--mu-v", dest="mu_v", type=float, help="dopant mobility (m^2/(s V))")
    g.add_argument("--window", choices=("hard", "joglekar"))
    g.add_argument("--p", type=int, help="Joglekar exponent")
    g.add_argument("--polarity", type=int, choices=(1, -1))
    return common


def _programmer_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("programmer")
    g.add_argument("--a", type=float, help="sense/drive coefficient (A)")
    g.add_argument("--tol", type=float, help="convergence band (Ohm)")
    g.add_argument("--dt", type=float, help="control step (s)")
    g.add_argument("--max-time", dest="max_time", type=float, help="give up after this long (s)")


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    parser = _Parser(prog="memarith", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("sweep", parents=[common], help="constant-current device trajectory to CSV")
    p.add_argument("--current", type=float, default=1e-3, help="drive current (A)")
    p.add_argument("--dt", type=float, default=1e-6, help="time step (s)")
    p.add_argument("--steps", type=int, default=1000)
    p.add_argument("--x0", type=float, default=0.5, help="initial doped fraction")
    p.add_argument("-o", "--output", default="-", help="CSV path ('-' for stdout)")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("program", parents=[common], help="program one device to a target memristance")
    p.add_argument("--target", type=float, required=True, help="target memristance (Ohm)")
    p.add_argument("--x0", type=float, default=0.5, help="initial doped fraction")
    p.add_argument("-o", "--output", help="trace CSV path")
    p.add_argument("--plot", help="write a voltage-vs-time plot (PNG/PDF)")
    _programmer_flags(p)
    p.set_defaults(func=cmd_program)

    p = sub.add_parser("block", parents=[common], help="evaluate one arithmetic block")
    p.add_argument("op", choices=BLOCKS)
    p.add_argument("--m1", type=float, required=True)
    p.add_argument("--m2", type=float, required=True)
    p.add_argument("--vi", type=float, help="input voltage for div/mul (V)")
    p.add_argument("--iread", type=float, help="read current for add/sub (A)")
    p.add_argument("--width", type=float, default=blocks.DEFAULT_WIDTH, help="pulse width (s)")
    p.add_argument("--mode", choices=[m.value for m in Mode], default="frozen")
    for name in ("r1", "r2", "ra", "rb"):
        p.add_argument(f"--{name}", type=float, default=blocks.DEFAULT_R)
    p.add_argument("--csv", action="store_true", help="print the full-precision CSV row")
    p.set_defaults(func=cmd_block)

    p = sub.add_parser("compile", parents=[common], help="compile an expression to a plan")
    p.add_argument("expression")
    p.add_argument("-o", "--output", help="plan JSON path (default stdout)")
    p.add_argument("--gamma", type=float, help=f"Ohm per unit (default {DEFAULT_GAMMA:g})")
    p.add_argument("--margin", type=float, help="range margin (Ohm, default 10)")
    p.set_defaults(func=cmd_compile)

    p = sub.add_parser("run", parents=[common], help="execute a plan")
    p.add_argument("plan")
    p.add_argument("--mode", choices=[m.value for m in Mode], default="frozen")
    p.add_argument("--out-dir", help="directory for programming traces and read results")
    _programmer_flags(p)
    p.set_defaults(func=cmd_run)
    return parser


DOMAIN_ERRORS = (RangeError, DivideByZero, ExpressionSyntaxError, ProgrammingError, PlanError,
                 ValueError, OSError)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        values = _load_config(args)
        return args.func(args, values)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    except DOMAIN_ERRORS as exc:
        print(f"memarith: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
