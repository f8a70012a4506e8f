"""
Arithmetic expressions lowered onto memristor read-out blocks.

Every operand and every intermediate result lives as the memristance of
its own device (one "register" each), scaled by ``gamma`` Ohm per unit.
Leaves are programmed directly; each operator reads its two source
registers through a block and programs a fresh register with the
magnitude of the result.  Memristances cannot be negative, so signs are
tracked symbolically at compile time and only the magnitude is stored.
"""
from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Union

from .blocks import (DEFAULT_R, DEFAULT_READ_CURRENT, DEFAULT_WIDTH, BlockResult, Mode, ReadPulse,
                     frozen_read, physical_read)
from .device import DeviceParams, DeviceState, memristance, state_for
from .programmer import ProgrammerConfig, ProgramTrace, program

DEFAULT_GAMMA = 1.0


class ExpressionSyntaxError(SyntaxError):
    """Malformed expression; ``offset`` is the 0-based byte offset of the problem."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} at byte {offset}")
        self.offset = offset


class RangeError(ValueError):
    def __init__(self, subexpression: str, value: Fraction, ohms: float, lo: float, hi: float):
        super().__init__(
            f"subexpression {subexpression!r} = {float(value):.6g} needs {ohms:.6g} Ohm, "
            f"outside the programmable range [{lo:.6g}, {hi:.6g}] Ohm")
        self.subexpression = subexpression
        self.value = value
        self.required_ohms = ohms


class DivideByZero(ZeroDivisionError):
    def __init__(self, subexpression: str):
        super().__init__(f"division by zero in {subexpression!r}")
        self.subexpression = subexpression


# --- syntax tree -------------------------------------------------------------

@dataclass(frozen=True)
class Literal:
    value: Fraction


@dataclass(frozen=True)
class Unary:
    child: "Node"
    op: str = "-"


@dataclass(frozen=True)
class Binary:
    op: str
    left: "Node"
    right: "Node"


Node = Union[Literal, Unary, Binary]

_PREC = {"+": 1, "-": 1, "*": 2, "/": 2}


def to_source(node: Node) -> str:
    """Render with the fewest parentheses that preserve the tree."""
    if isinstance(node, Literal):
        v = node.value
        return str(v.numerator) if v.denominator == 1 else _decimal_str(v)
    if isinstance(node, Unary):
        inner = to_source(node.child)
        return f"-{inner}" if isinstance(node.child, (Literal, Unary)) else f"-({inner})"
    p = _PREC[node.op]
    left = to_source(node.left)
    if isinstance(node.left, Binary) and _PREC[node.left.op] < p:
        left = f"({left})"
    right = to_source(node.right)
    if isinstance(node.right, Binary) and _PREC[node.right.op] <= p:
        right = f"({right})"
    return f"{left}{node.op}{right}"


def _decimal_str(v: Fraction) -> str:
    f = float(v)
    if Fraction(repr(f)) == v:
        return repr(f)
    return f"({v.numerator}/{v.denominator})"


# --- parser ------------------------------------------------------------------

_TOKEN = re.compile(r"(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)|(?P<op>[-+*/()])")


def _tokenize(text: str):
    tokens = []
    pos = 0
    while True:
        while pos < len(text) and text[pos].isspace():
            pos += 1
        if pos == len(text):
            break
        m = _TOKEN.match(text, pos)
        if not m:
            raise ExpressionSyntaxError(f"unexpected character {text[pos]!r}", _byte_offset(text, pos))
        tokens.append(("num" if m.group("num") else "op", m.group(), pos))
        pos = m.end()
    tokens.append(("end", "", len(text)))
    return tokens


def _byte_offset(text: str, index: int) -> int:
    return len(text[:index].encode("utf-8"))


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.tokens = _tokenize(text)
        self.pos = 0

    def peek(self):
        return self.tokens[self.pos]

    def advance(self):
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def fail(self, message, tok):
        raise ExpressionSyntaxError(message, _byte_offset(self.text, tok[2]))

    def expr(self) -> Node:
        node = self.term()
        while self.peek()[0] == "op" and self.peek()[1] in "+-":
            op = self.advance()[1]
            node = Binary(op, node, self.term())
        return node

    def term(self) -> Node:
        node = self.factor()
        while self.peek()[0] == "op" and self.peek()[1] in "*/":
            op = self.advance()[1]
            node = Binary(op, node, self.factor())
        return node

    def factor(self) -> Node:
        tok = self.advance()
        kind, text = tok[0], tok[1]
        if kind == "num":
            return Literal(Fraction(text))
        if kind == "op" and text == "-":
            return Unary(self.factor())
        if kind == "op" and text == "(":
            node = self.expr()
            close = self.advance()
            if close[1] != ")":
                self.fail("expected ')'", close)
            return node
        if kind == "end":
            self.fail("unexpected end of expression", tok)
        self.fail(f"unexpected {text!r}", tok)


def parse(text: str) -> Node:
    """Parse ``+ - * /`` expressions over non-negative decimal literals.

    >>> to_source(parse("2 + 3*4"))
    '2+3*4'
    """
    p = _Parser(text)
    node = p.expr()
    tok = p.peek()
    if tok[0] != "end":
        p.fail(f"unexpected {tok[1]!r}", tok)
    return node


def _apply(node: Binary, a: Fraction, b: Fraction) -> Fraction:
    if node.op == "+":
        return a + b
    if node.op == "-":
        return a - b
    if node.op == "*":
        return a * b
    if b == 0:
        raise DivideByZero(to_source(node))
    return a / b


def evaluate(node: Node) -> Fraction:
    """Exact value of the tree in rational arithmetic."""
    if isinstance(node, Literal):
        return node.value
    if isinstance(node, Unary):
        return -evaluate(node.child)
    return _apply(node, evaluate(node.left), evaluate(node.right))


# --- range preview -------------------------------------------------------------

@dataclass(frozen=True)
class Annotated:
    node: Node
    value: Fraction
    ohms: float
    children: tuple["Annotated", ...] = ()


@dataclass(frozen=True)
class AnnotatedAst:
    root: Annotated
    gamma: float
    margin: float
    lo: float
    hi: float


def _output_node(ast: Node) -> Node:
    while isinstance(ast, Unary):
        ast = ast.child
    return ast


def check_ranges(ast: Node, gamma: float = DEFAULT_GAMMA, margin: float = 10.0,
                 params: DeviceParams | None = None) -> AnnotatedAst:
    """Preview every node's value and check that each stored magnitude fits the device.

    Literals and operator results that feed another operator are stored as
    memristances.  The final operator's output is read from its block and is
    not stored, so only literals are range-checked at the output position.
    A zero divisor anywhere is reported (DivideByZero) before any range
    problem; otherwise RangeError names the first offending node in post-order.
    """
    if not gamma > 0:
        raise ValueError("gamma must be positive")
    params = params or DeviceParams()
    lo, hi = params.r_on + margin, params.r_off - margin
    if not lo < hi:
        raise ValueError(f"margin {margin} leaves no programmable range")

    evaluate(ast)
    output = _output_node(ast)

    def visit(node: Node) -> Annotated:
        if isinstance(node, Literal):
            children = ()
            value = node.value
        elif isinstance(node, Unary):
            children = (visit(node.child),)
            value = -children[0].value
        else:
            children = (visit(node.left), visit(node.right))
            value = _apply(node, children[0].value, children[1].value)
        ohms = float(abs(value)) * gamma
        stored = isinstance(node, Literal) or (isinstance(node, Binary) and node is not output)
        if stored and not lo <= ohms <= hi:
            raise RangeError(to_source(node), value, ohms, lo, hi)
        return Annotated(node, value, ohms, children)

    return AnnotatedAst(visit(ast), float(gamma), float(margin), lo, hi)


# --- plans ---------------------------------------------------------------------

@dataclass(frozen=True)
class ProgramStep:
    reg: int
    target_ohms: float
    kind: str = field(default="program", init=False)

    def to_dict(self):
        return {"kind": "program", "reg": self.reg, "target_ohms": self.target_ohms}


@dataclass(frozen=True)
class ComputeStep:
    op: str
    src1: int
    src2: int
    dst: int
    kind: str = field(default="compute", init=False)

    def to_dict(self):
        return {"kind": "compute", "op": self.op, "src1": self.src1, "src2": self.src2, "dst": self.dst}


Step = Union[ProgramStep, ComputeStep]
_OPS = ("add", "sub", "mul", "div")


class PlanError(ValueError):
    pass


@dataclass(frozen=True)
class Plan:
    gamma: float
    registers: int
    result_register: int
    result_sign: int
    steps: tuple[Step, ...]

    def validate(self) -> None:
        """Every register is written exactly once and before it is read."""
        written = set()
        for k, s in enumerate(self.steps):
            if isinstance(s, ComputeStep):
                if s.op not in _OPS:
                    raise PlanError(f"step {k}: unknown op {s.op!r}")
                for src in (s.src1, s.src2):
                    if src not in written:
                        raise PlanError(f"step {k}: reads register {src} before it is written")
                dst = s.dst
            else:
                dst = s.reg
            if not 0 <= dst < self.registers:
                raise PlanError(f"step {k}: register {dst} out of range")
            if dst in written:
                raise PlanError(f"step {k}: register {dst} written twice")
            written.add(dst)
        if self.result_register not in written:
            raise PlanError(f"result register {self.result_register} is never written")
        if self.result_sign not in (1, -1):
            raise PlanError("result_sign must be +1 or -1")

    def to_dict(self) -> dict:
        return {"gamma": self.gamma, "registers": self.registers, "result_register": self.result_register,
                "result_sign": self.result_sign, "steps": [s.to_dict() for s in self.steps]}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "Plan":
        try:
            steps = []
            for s in d["steps"]:
                if s["kind"] == "program":
                    steps.append(ProgramStep(int(s["reg"]), float(s["target_ohms"])))
                elif s["kind"] == "compute":
                    steps.append(ComputeStep(str(s["op"]), int(s["src1"]), int(s["src2"]), int(s["dst"])))
                else:
                    raise PlanError(f"unknown step kind {s['kind']!r}")
            plan = cls(float(d["gamma"]), int(d["registers"]), int(d["result_register"]),
                       int(d["result_sign"]), tuple(steps))
        except (KeyError, TypeError) as exc:
            raise PlanError(f"malformed plan: {exc!r}") from exc
        plan.validate()
        return plan

    @classmethod
    def load(cls, path) -> "Plan":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))

    def save(self, path) -> None:
        Path(path).write_text(self.to_json(), encoding="utf-8")


def lower(annotated: AnnotatedAst, gamma: float | None = None) -> Plan:
    """Post-order lowering; returns a validated plan.

    Division reads the divisor as m1 and the dividend as m2 (the block
    outputs m2/m1), so the divisor is programmed first.  Sums of operands
    with opposite signs become a subtractor with the larger magnitude as m1.
    """
    gamma = annotated.gamma if gamma is None else float(gamma)
    steps: list[Step] = []
    counter = iter(range(1 << 30))

    def emit(a: Annotated) -> tuple[int, int]:
        node = a.node
        if isinstance(node, Literal):
            reg = next(counter)
            steps.append(ProgramStep(reg, float(abs(node.value)) * gamma))
            return reg, 1
        if isinstance(node, Unary):
            reg, sign = emit(a.children[0])
            return reg, -sign
        left, right = a.children
        if node.op == "/":
            r_div, s_div = emit(right)
            r_num, s_num = emit(left)
            dst = next(counter)
            steps.append(ComputeStep("div", r_div, r_num, dst))
            return dst, s_div * s_num
        r1, s1 = emit(left)
        r2, s2 = emit(right)
        dst = next(counter)
        if node.op == "*":
            steps.append(ComputeStep("mul", r1, r2, dst))
            return dst, s1 * s2
        if node.op == "-":
            s2 = -s2
        if s1 == s2:
            steps.append(ComputeStep("add", r1, r2, dst))
            return dst, s1
        if abs(left.value) >= abs(right.value):
            steps.append(ComputeStep("sub", r1, r2, dst))
            return dst, s1
        steps.append(ComputeStep("sub", r2, r1, dst))
        return dst, s2

    result, sign = emit(annotated.root)
    plan = Plan(gamma, next(counter), result, sign, tuple(steps))
    plan.validate()
    return plan


def compile_expression(text: str, gamma: float = DEFAULT_GAMMA, margin: float = 10.0,
                       params: DeviceParams | None = None) -> Plan:
    return lower(check_ranges(parse(text), gamma, margin, params))


# --- execution -----------------------------------------------------------------

@dataclass(frozen=True)
class ReadSettings:
    """Excitation used by compute steps.

    Voltage-driven blocks are scaled down from ``v_read`` so that no
    memristor carries more than ``current_limit`` during a read.
    """

    read_current: float = DEFAULT_READ_CURRENT
    v_read: float = 1.0
    current_limit: float = DEFAULT_READ_CURRENT
    width: float = DEFAULT_WIDTH
    r1: float = DEFAULT_R
    r2: float = DEFAULT_R
    ra: float = DEFAULT_R
    rb: float = DEFAULT_R
    fresh_x: float = 0.5

    def pulse(self, op: str, m1: float, mode: Mode) -> ReadPulse:
        if op in ("add", "sub"):
            return ReadPulse(self.read_current, self.width, mode)
        if op == "div":
            return ReadPulse(-min(self.v_read, self.current_limit * m1), self.width, mode)
        amp = min(self.v_read, self.current_limit * self.ra, self.current_limit * self.ra * self.rb / m1)
        return ReadPulse(amp, self.width, mode)


@dataclass
class Execution:
    value: float
    traces: dict[int, ProgramTrace]
    reads: list[tuple[ComputeStep, BlockResult]]
    registers: dict[int, DeviceState]


def _units(op: str, numeric: float, gamma: float) -> float:
    """Block output converted back to operand units (sign kept)."""
    if op in ("add", "sub"):
        return numeric / gamma
    if op == "div":
        return numeric
    return numeric / gamma**2


def _result_target(op: str, numeric: float, gamma: float) -> float:
    return abs(_units(op, numeric, gamma)) * gamma


def execute(plan: Plan, mode: Mode | str = Mode.FROZEN, cfg: ProgrammerConfig | None = ProgrammerConfig(),
            params: DeviceParams | None = None, settings: ReadSettings | None = None) -> Execution:
    """Run ``plan`` on simulated devices.

    Operator results that feed later steps are programmed into their
    destination register; the final operator's result is taken from its
    block read-out.

    ``cfg=None`` writes registers exactly (the zero-tolerance limit of the
    programmer) instead of simulating the feedback loop.
    """
    plan.validate()
    mode = Mode(mode)
    params = params or DeviceParams()
    settings = settings or ReadSettings()
    regs: dict[int, DeviceState] = {}
    traces: dict[int, ProgramTrace] = {}
    reads = []
    circuit = {"r1": settings.r1, "r2": settings.r2, "ra": settings.ra, "rb": settings.rb}

    def write(reg, target):
        if cfg is None:
            regs[reg] = state_for(params, target)
            return
        trace = program(cfg, params, DeviceState(settings.fresh_x), target)
        traces[reg] = trace
        regs[reg] = trace.final_state

    value = None
    for s in plan.steps:
        if isinstance(s, ProgramStep):
            write(s.reg, s.target_ohms)
            continue
        m1, m2 = memristance(params, regs[s.src1]), memristance(params, regs[s.src2])
        pulse = settings.pulse(s.op, m1, mode)
        if mode is Mode.FROZEN:
            res = frozen_read(s.op, m1, m2, pulse, **circuit)
        else:
            res = physical_read(s.op, (regs[s.src1], regs[s.src2]), params, pulse, **circuit)
            regs[s.src1], regs[s.src2] = res.states
        reads.append((s, res))
        if s.dst == plan.result_register:
            value = plan.result_sign * _units(s.op, res.numeric_value, plan.gamma)
        else:
            write(s.dst, _result_target(s.op, res.numeric_value, plan.gamma))

    if value is None:
        value = plan.result_sign * memristance(params, regs[plan.result_register]) / plan.gamma
    return Execution(value, traces, reads, regs)
