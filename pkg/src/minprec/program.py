"""A small straight-line numerical language (``.mp`` files) and its evaluators.

Grammar::

    program := line*
    line    := input | assign | output | repeat
    input   := "input" ID "=" ["-"] NUM
    assign  := ID "=" expr
    output  := "output" ID
    repeat  := "repeat" INT "{" line* "}"
    expr    := term (("+" | "-") term)*
    term    := unary (("*" | "/") unary)*
    unary   := "-" unary | atom
    atom    := NUM | ID | ID "(" expr ("," expr)* ")" | "(" expr ")"

Functions are sqrt(e), abs(e) and fma(e, e, e). ``#`` starts a comment.
Only assignments may appear inside a repeat block.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Iterator, Union

from .precision import (
    BINARY64,
    NEAREST,
    PrecisionError,
    PrecisionSpec,
    prec_arith,
    round_to_precision,
)
from .stochastic import (
    DigitEstimate,
    DSAContext,
    InstabilityEvent,
    StochasticValue,
    estimate_digits,
    sto_abs,
    sto_arith,
    sto_neg,
)

TypeConfig = dict[str, PrecisionSpec]


class ProgramError(Exception):
    kind = "program"

    def __init__(self, message: str, line: int | None = None, col: int | None = None):
        self.line = line
        self.col = col
        where = f"{line}:{col}: " if line is not None and col is not None else (f"{line}: " if line else "")
        super().__init__(f"{where}{message}")


class ProgramSyntaxError(ProgramError):
    kind = "syntax"


class UseBeforeDefError(ProgramError):
    kind = "use-before-def"

    def __init__(self, name: str, line: int | None = None, col: int | None = None):
        self.name = name
        super().__init__(f"variable {name!r} used before definition", line, col)


class DuplicateInputError(ProgramError):
    kind = "duplicate-input"


class UnknownFunctionError(ProgramError):
    kind = "unknown-function"


class ConfigError(ValueError):
    pass


class EvaluationError(ArithmeticError):
    """An arithmetic failure, tagged with the statement that raised it."""

    def __init__(self, cause: Exception, statement: int | None, line: int | None):
        self.cause = cause
        self.statement = statement
        self.line = line
        super().__init__(f"statement {statement} (line {line}): {cause}")


# --- syntax tree ---------------------------------------------------------


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Neg:
    operand: "Expr"


@dataclass(frozen=True)
class Call:
    func: str
    args: tuple["Expr", ...]


Expr = Union[Num, Var, BinOp, Neg, Call]


@dataclass(frozen=True)
class Input:
    name: str
    value: float
    line: int = field(default=0, compare=False)


@dataclass(frozen=True)
class Assign:
    target: str
    expr: Expr
    line: int = field(default=0, compare=False)
    index: int = field(default=0, compare=False)


@dataclass(frozen=True)
class Repeat:
    count: int
    body: tuple[Assign | "Repeat", ...]
    line: int = field(default=0, compare=False)


@dataclass(frozen=True)
class Output:
    name: str
    line: int = field(default=0, compare=False)


Line = Union[Input, Assign, Repeat, Output]

FUNCTIONS = {"sqrt": 1, "abs": 1, "fma": 3}
_BINOPS = {"+": "add", "-": "sub", "*": "mul", "/": "div"}


@dataclass(frozen=True)
class Program:
    body: tuple[Line, ...]

    @property
    def inputs(self) -> list[Input]:
        return [ln for ln in self.body if isinstance(ln, Input)]

    @property
    def statements(self) -> list[Assign | Repeat]:
        return [ln for ln in self.body if isinstance(ln, (Assign, Repeat))]

    @property
    def outputs(self) -> list[str]:
        return [ln.name for ln in self.body if isinstance(ln, Output)]

    @property
    def variables(self) -> list[str]:
        """Every input and assigned name, in order of first definition."""
        seen: dict[str, None] = {}

        def visit(lines):
            for ln in lines:
                if isinstance(ln, (Input, Assign)):
                    seen.setdefault(ln.name if isinstance(ln, Input) else ln.target, None)
                elif isinstance(ln, Repeat):
                    visit(ln.body)

        visit(self.body)
        return list(seen)

    def uniform_config(self, spec: PrecisionSpec) -> TypeConfig:
        return {v: spec for v in self.variables}


# --- tokenizer and parser ------------------------------------------------

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t\r]+)
  | (?P<comment>\#[^\n]*)
  | (?P<newline>\n)
  | (?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<id>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<op>[-+*/()=,{}])
    """,
    re.VERBOSE,
)

_KEYWORDS = {"input", "output", "repeat"}


@dataclass(frozen=True)
class Token:
    kind: str
    text: str
    line: int
    col: int


def tokenize(text: str) -> Iterator[Token]:
    line, line_start, pos = 1, 0, 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if not m:
            raise ProgramSyntaxError(f"unexpected character {text[pos]!r}", line, pos - line_start + 1)
        kind = m.lastgroup
        col = pos - line_start + 1
        if kind == "newline":
            yield Token("newline", "\n", line, col)
            line += 1
            line_start = m.end()
        elif kind == "id" and m.group() in _KEYWORDS:
            yield Token(m.group(), m.group(), line, col)
        elif kind not in ("ws", "comment"):
            yield Token(kind, m.group(), line, col)
        pos = m.end()
    yield Token("eof", "", line, pos - line_start + 1)


class _Parser:
    def __init__(self, text: str):
        self.tokens = list(tokenize(text))
        self.pos = 0
        self.defined: set[str] = set()
        self.inputs: set[str] = set()
        self.n_assign = 0

    @property
    def tok(self) -> Token:
        return self.tokens[self.pos]

    def advance(self) -> Token:
        t = self.tokens[self.pos]
        self.pos += 1
        return t

    def error(self, msg: str, tok: Token | None = None) -> ProgramSyntaxError:
        tok = tok or self.tok
        return ProgramSyntaxError(msg, tok.line, tok.col)

    def expect(self, kind: str, text: str | None = None) -> Token:
        t = self.tok
        if t.kind != kind or (text is not None and t.text != text):
            want = text or kind
            got = t.text if t.kind != "newline" else "end of line"
            raise self.error(f"expected {want!r}, got {got or 'end of input'!r}")
        return self.advance()

    def skip_newlines(self) -> None:
        while self.tok.kind == "newline":
            self.advance()

    def end_of_line(self) -> None:
        if self.tok.kind in ("newline", "eof") or (self.tok.kind == "op" and self.tok.text == "}"):
            return
        raise self.error(f"unexpected {self.tok.text!r} after statement")

    def program(self) -> Program:
        body = self.lines(top=True)
        if self.tok.kind != "eof":
            raise self.error(f"unexpected {self.tok.text!r}")
        prog = Program(tuple(body))
        if not prog.outputs:
            raise ProgramSyntaxError("program declares no output", self.tok.line, self.tok.col)
        return prog

    def lines(self, top: bool) -> list[Line]:
        out: list[Line] = []
        while True:
            self.skip_newlines()
            t = self.tok
            if t.kind == "eof" or (t.kind == "op" and t.text == "}"):
                return out
            if t.kind in ("input", "output") and not top:
                raise self.error(f"'{t.kind}' is not allowed inside repeat")
            out.append(self.line())
            self.end_of_line()

    def line(self) -> Line:
        t = self.tok
        if t.kind == "input":
            self.advance()
            name = self.expect("id")
            self.expect("op", "=")
            sign = 1.0
            if self.tok.kind == "op" and self.tok.text == "-":
                self.advance()
                sign = -1.0
            num = self.expect("num")
            value = self.number(num)
            if name.text in self.defined:
                raise DuplicateInputError(f"input {name.text!r} is already defined", name.line, name.col)
            self.defined.add(name.text)
            self.inputs.add(name.text)
            return Input(name.text, sign * value, t.line)
        if t.kind == "output":
            self.advance()
            name = self.expect("id")
            if name.text not in self.defined:
                raise UseBeforeDefError(name.text, name.line, name.col)
            return Output(name.text, t.line)
        if t.kind == "repeat":
            self.advance()
            count = self.expect("num")
            if not re.fullmatch(r"\d+", count.text) or int(count.text) < 1:
                raise self.error("repeat count must be a positive integer literal", count)
            self.expect("op", "{")
            body = self.lines(top=False)
            self.expect("op", "}")
            return Repeat(int(count.text), tuple(body), t.line)
        if t.kind == "id":
            name = self.advance()
            self.expect("op", "=")
            expr = self.expr()
            self.defined.add(name.text)
            idx = self.n_assign
            self.n_assign += 1
            return Assign(name.text, expr, t.line, idx)
        raise self.error(f"unexpected {t.text or 'end of input'!r}")

    def number(self, tok: Token) -> float:
        v = float(tok.text)
        if v == float("inf"):
            raise self.error(f"literal {tok.text} overflows binary64", tok)
        return v

    def expr(self) -> Expr:
        node = self.term()
        while self.tok.kind == "op" and self.tok.text in "+-":
            op = self.advance().text
            node = BinOp(op, node, self.term())
        return node

    def term(self) -> Expr:
        node = self.unary()
        while self.tok.kind == "op" and self.tok.text in "*/":
            op = self.advance().text
            node = BinOp(op, node, self.unary())
        return node

    def unary(self) -> Expr:
        if self.tok.kind == "op" and self.tok.text == "-":
            self.advance()
            return Neg(self.unary())
        return self.atom()

    def atom(self) -> Expr:
        t = self.tok
        if t.kind == "num":
            self.advance()
            return Num(self.number(t))
        if t.kind == "id":
            self.advance()
            if self.tok.kind == "op" and self.tok.text == "(":
                if t.text not in FUNCTIONS:
                    raise UnknownFunctionError(f"unknown function {t.text!r}", t.line, t.col)
                self.advance()
                args = [self.expr()]
                while self.tok.kind == "op" and self.tok.text == ",":
                    self.advance()
                    args.append(self.expr())
                self.expect("op", ")")
                if len(args) != FUNCTIONS[t.text]:
                    raise self.error(f"{t.text} takes {FUNCTIONS[t.text]} argument(s), got {len(args)}", t)
                return Call(t.text, tuple(args))
            if t.text not in self.defined:
                raise UseBeforeDefError(t.text, t.line, t.col)
            return Var(t.text)
        if t.kind == "op" and t.text == "(":
            self.advance()
            node = self.expr()
            self.expect("op", ")")
            return node
        raise self.error(f"unexpected {t.text or 'end of input'!r} in expression")


def parse_program(text: str) -> Program:
    """Parse ``.mp`` source text.

    >>> parse_program("input x = 2\\ny = x*x\\noutput y").outputs
    ['y']
    """
    return _Parser(text).program()


def load_program(path) -> Program:
    with open(path, encoding="utf-8") as fh:
        return parse_program(fh.read())


# --- printing ------------------------------------------------------------


def format_expr(e: Expr) -> str:
    if isinstance(e, Num):
        return repr(e.value)
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Neg):
        return f"-({format_expr(e.operand)})"
    if isinstance(e, BinOp):
        return f"({format_expr(e.left)} {e.op} {format_expr(e.right)})"
    return f"{e.func}({', '.join(format_expr(a) for a in e.args)})"


def format_program(p: Program) -> str:
    out: list[str] = []

    def emit(lines, indent):
        pad = "    " * indent
        for ln in lines:
            if isinstance(ln, Input):
                out.append(f"{pad}input {ln.name} = {ln.value!r}")
            elif isinstance(ln, Output):
                out.append(f"{pad}output {ln.name}")
            elif isinstance(ln, Assign):
                out.append(f"{pad}{ln.target} = {format_expr(ln.expr)}")
            else:
                out.append(f"{pad}repeat {ln.count} {{")
                emit(ln.body, indent + 1)
                out.append(f"{pad}}}")

    emit(p.body, 0)
    return "\n".join(out) + "\n"


# --- evaluation ----------------------------------------------------------


def check_config(p: Program, cfg: TypeConfig) -> None:
    have, want = set(cfg), set(p.variables)
    if have != want:
        missing = sorted(want - have)
        extra = sorted(have - want)
        raise ConfigError(f"config does not match program variables (missing {missing}, extra {extra})")


class _Walker:
    """Shared statement walker; subclasses supply the arithmetic."""

    def __init__(self):
        self.env: dict = {}
        self.current: Assign | None = None

    def run(self, p: Program) -> None:
        self.block(p.body)

    def block(self, lines) -> None:
        for ln in lines:
            if isinstance(ln, Input):
                self.env[ln.name] = self.load_input(ln)
            elif isinstance(ln, Assign):
                self.current = ln
                self.before_statement(ln)
                try:
                    self.env[ln.target] = self.store(ln.target, self.eval(ln.expr))
                except PrecisionError as exc:
                    raise EvaluationError(exc, ln.index, ln.line) from exc
            elif isinstance(ln, Repeat):
                for _ in range(ln.count):
                    self.block(ln.body)

    def before_statement(self, ln: Assign) -> None:
        pass

    def eval(self, e: Expr):
        if isinstance(e, Num):
            return self.literal(e.value)
        if isinstance(e, Var):
            return self.env[e.name]
        if isinstance(e, Neg):
            return self.neg(self.eval(e.operand))
        if isinstance(e, BinOp):
            return self.arith(_BINOPS[e.op], [self.eval(e.left), self.eval(e.right)])
        args = [self.eval(a) for a in e.args]
        if e.func == "abs":
            return self.abs(args[0])
        return self.arith(e.func, args)


class _MixedWalker(_Walker):
    """Values are (float, PrecisionSpec) pairs."""

    def __init__(self, cfg: TypeConfig, literal_prec: PrecisionSpec):
        super().__init__()
        self.cfg = cfg
        self.literal_prec = literal_prec

    def load_input(self, ln: Input):
        spec = self.cfg[ln.name]
        try:
            return round_to_precision(ln.value, spec)
        except PrecisionError as exc:
            raise EvaluationError(exc, None, ln.line) from exc

    def eval(self, e: Expr):
        if isinstance(e, Var):
            return self.env[e.name], self.cfg[e.name]
        return super().eval(e)

    def literal(self, v):
        return round_to_precision(v, self.literal_prec), self.literal_prec

    def neg(self, a):
        return -a[0], a[1]

    def abs(self, a):
        return abs(a[0]), a[1]

    def arith(self, op, args):
        spec = max(a[1] for a in args)
        return prec_arith(op, [a[0] for a in args], spec, NEAREST), spec

    def store(self, name, value):
        return round_to_precision(value[0], self.cfg[name])


def eval_mixed(p: Program, cfg: TypeConfig, literal_prec: PrecisionSpec = BINARY64) -> dict[str, float]:
    """Run the program with each variable held at its configured precision.

    An operation runs at the widest precision among its operands (literals
    count as ``literal_prec``); the assignment then rounds to the target's
    precision. All rounding is to nearest, ties to even.
    """
    check_config(p, cfg)
    w = _MixedWalker(cfg, literal_prec)
    w.run(p)
    return {name: w.env[name] for name in p.outputs}


class _DSAWalker(_Walker):
    def __init__(self, ctx: DSAContext):
        super().__init__()
        self.ctx = ctx

    def load_input(self, ln: Input):
        try:
            return self.ctx.const(ln.value)
        except PrecisionError as exc:
            raise EvaluationError(exc, None, ln.line) from exc

    def before_statement(self, ln: Assign) -> None:
        self.ctx.statement = ln.index

    def literal(self, v):
        return self.ctx.const(v)

    def neg(self, a):
        return sto_neg(a)

    def abs(self, a):
        return sto_abs(a)

    def arith(self, op, args):
        return sto_arith(op, args, self.ctx)

    def store(self, name, value):
        return value


def eval_dsa(
    p: Program,
    prec: PrecisionSpec = BINARY64,
    seed: int = 0x5EED,
    events: list[InstabilityEvent] | None = None,
) -> dict[str, tuple[StochasticValue, DigitEstimate]]:
    """Evaluate every output three times with random rounding at ``prec``.

    Instability events are appended to ``events`` when a list is given.
    """
    ctx = DSAContext(seed, prec)
    w = _DSAWalker(ctx)
    try:
        w.run(p)
    finally:
        if events is not None:
            events.extend(ctx.events)
    return {name: (w.env[name], estimate_digits(w.env[name])) for name in p.outputs}


def op_trace(p: Program, cfg: TypeConfig, literal_prec: PrecisionSpec = BINARY64) -> list[tuple[str, PrecisionSpec]]:
    """Dynamic (op, working precision) sequence, repeats unrolled.

    Precisions depend only on the config, never on values, so no arithmetic
    is performed.
    """
    check_config(p, cfg)
    trace: list[tuple[str, PrecisionSpec]] = []

    def expr(e: Expr) -> PrecisionSpec:
        if isinstance(e, Num):
            return literal_prec
        if isinstance(e, Var):
            return cfg[e.name]
        if isinstance(e, Neg):
            return expr(e.operand)
        if isinstance(e, BinOp):
            spec = max(expr(e.left), expr(e.right))
            trace.append((_BINOPS[e.op], spec))
            return spec
        spec = max(expr(a) for a in e.args)
        trace.append((e.func, spec))
        return spec

    def block(lines):
        for ln in lines:
            if isinstance(ln, Assign):
                expr(ln.expr)
            elif isinstance(ln, Repeat):
                for _ in range(ln.count):
                    block(ln.body)

    block(p.body)
    return trace
