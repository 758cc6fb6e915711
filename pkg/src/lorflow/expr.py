"""Arithmetic expression mini-language for scenario files.

Grammar (lowest to highest precedence)::

    expr   := term (('+' | '-') term)*
    term   := unary (('*' | '/') unary)*
    unary  := '-' unary | power
    power  := atom ('^' unary)?          # right associative
    atom   := NUMBER | NAME | NAME '(' expr (',' expr)* ')' | '(' expr ')'

Variables are ``x0`` (time), ``x1``..``x3`` (space) and ``vt`` (the tilt
factor of the normal); ``pi`` is a constant.  Evaluation is vectorized over
numpy arrays.
"""

from dataclasses import dataclass
import math
import re

import numpy as np

from .errors import EvalError, ParseError

VARIABLES = ("x0", "x1", "x2", "x3", "vt")
CONSTANTS = {"pi": math.pi}
FUNCTIONS = {
    "sin": 1,
    "cos": 1,
    "tan": 1,
    "exp": 1,
    "log": 1,
    "sqrt": 1,
    "tanh": 1,
    "abs": 1,
    "pow": 2,
}


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Neg:
    operand: object


@dataclass(frozen=True)
class BinOp:
    op: str
    left: object
    right: object


@dataclass(frozen=True)
class Call:
    func: str
    args: tuple


_TOKEN = re.compile(
    r"""
    (?P<ws>[ \t\r\n]+)
  | (?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<name>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<op>[-+*/^(),])
    """,
    re.VERBOSE,
)


@dataclass
class _Tok:
    kind: str
    text: str
    line: int
    col: int


def _tokenize(text):
    toks = []
    pos = 0
    line, line_start = 1, 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            raise ParseError(f"unexpected character {text[pos]!r}", line, pos - line_start + 1,
                             ("number", "name", "operator"))
        kind = m.lastgroup
        if kind == "ws":
            chunk = m.group()
            if "\n" in chunk:
                line += chunk.count("\n")
                line_start = pos + chunk.rindex("\n") + 1
        else:
            toks.append(_Tok(kind, m.group(), line, pos - line_start + 1))
        pos = m.end()
    toks.append(_Tok("end", "", line, pos - line_start + 1))
    return toks


class _Parser:
    def __init__(self, text):
        self.toks = _tokenize(text)
        self.i = 0

    @property
    def tok(self):
        return self.toks[self.i]

    def fail(self, expected):
        t = self.tok
        what = "end of input" if t.kind == "end" else repr(t.text)
        raise ParseError(f"unexpected {what}", t.line, t.col, expected)

    def accept(self, text):
        if self.tok.kind == "op" and self.tok.text == text:
            self.i += 1
            return True
        return False

    def expect(self, text):
        if not self.accept(text):
            self.fail((f"'{text}'",))

    def parse(self):
        node = self.expr()
        if self.tok.kind != "end":
            self.fail(("'+'", "'-'", "'*'", "'/'", "'^'", "end of input"))
        return node

    def expr(self):
        node = self.term()
        while self.tok.kind == "op" and self.tok.text in "+-":
            op = self.tok.text
            self.i += 1
            node = BinOp(op, node, self.term())
        return node

    def term(self):
        node = self.unary()
        while self.tok.kind == "op" and self.tok.text in "*/":
            op = self.tok.text
            self.i += 1
            node = BinOp(op, node, self.unary())
        return node

    def unary(self):
        if self.accept("-"):
            return Neg(self.unary())
        return self.power()

    def power(self):
        base = self.atom()
        if self.accept("^"):
            return BinOp("^", base, self.unary())
        return base

    def atom(self):
        t = self.tok
        if t.kind == "num":
            self.i += 1
            return Num(float(t.text))
        if t.kind == "name":
            self.i += 1
            if t.text in FUNCTIONS:
                self.expect("(")
                args = [self.expr()]
                while self.accept(","):
                    args.append(self.expr())
                self.expect(")")
                if len(args) != FUNCTIONS[t.text]:
                    raise ParseError(
                        f"{t.text} takes {FUNCTIONS[t.text]} argument(s), got {len(args)}",
                        t.line, t.col,
                    )
                return Call(t.text, tuple(args))
            if t.text in VARIABLES or t.text in CONSTANTS:
                return Var(t.text)
            raise ParseError(f"unknown name {t.text!r}", t.line, t.col,
                             VARIABLES + tuple(CONSTANTS) + tuple(FUNCTIONS))
        if self.accept("("):
            node = self.expr()
            self.expect(")")
            return node
        self.fail(("number", "variable", "function", "'('", "'-'"))


def parse_expression(text):
    """Parse ``text`` into an AST; raises :class:`ParseError` with position."""
    return _Parser(text).parse()


# --------------------------------------------------------------------------
# printing (minimal parentheses; parse(to_text(t)) == t)

_PREC = {"+": 1, "-": 1, "*": 2, "/": 2, "^": 4}


def _prec(node):
    if isinstance(node, BinOp):
        return _PREC[node.op]
    if isinstance(node, Neg):
        return 3
    return 5


def to_text(node):
    if isinstance(node, Num):
        return repr(float(node.value))
    if isinstance(node, Var):
        return node.name
    if isinstance(node, Call):
        return f"{node.func}({', '.join(to_text(a) for a in node.args)})"
    if isinstance(node, Neg):
        inner = to_text(node.operand)
        return "-" + (f"({inner})" if _prec(node.operand) < 3 else inner)
    p = _PREC[node.op]
    left, right = to_text(node.left), to_text(node.right)
    if node.op == "^":
        wrap_left = _prec(node.left) <= 4
        wrap_right = _prec(node.right) < 3
    else:
        wrap_left = _prec(node.left) < p
        wrap_right = _prec(node.right) <= p
    if wrap_left:
        left = f"({left})"
    if wrap_right:
        right = f"({right})"
    return f"{left} {node.op} {right}"


# --------------------------------------------------------------------------
# evaluation


def variables(node):
    """Set of variable names referenced by the tree."""
    if isinstance(node, Var):
        return set() if node.name in CONSTANTS else {node.name}
    if isinstance(node, Num):
        return set()
    if isinstance(node, Neg):
        return variables(node.operand)
    if isinstance(node, BinOp):
        return variables(node.left) | variables(node.right)
    return set().union(*(variables(a) for a in node.args))


def _domain(ok, message):
    if not np.all(ok):
        raise EvalError(message)


def evaluate(node, env):
    """Evaluate with ``env`` mapping variable names to scalars or arrays."""
    if isinstance(node, Num):
        return node.value
    if isinstance(node, Var):
        if node.name in CONSTANTS:
            return CONSTANTS[node.name]
        try:
            return env[node.name]
        except KeyError:
            raise EvalError(f"variable {node.name} is not bound here") from None
    if isinstance(node, Neg):
        return -evaluate(node.operand, env)
    if isinstance(node, BinOp):
        a = evaluate(node.left, env)
        b = evaluate(node.right, env)
        if node.op == "+":
            return a + b
        if node.op == "-":
            return a - b
        if node.op == "*":
            return a * b
        if node.op == "/":
            _domain(np.asarray(b) != 0, "division by zero")
            return np.divide(a, b)
        return _power(a, b)
    args = [evaluate(a, env) for a in node.args]
    x = args[0]
    f = node.func
    if f == "log":
        _domain(np.asarray(x) > 0, "log of a non-positive value")
        return np.log(x)
    if f == "sqrt":
        _domain(np.asarray(x) >= 0, "sqrt of a negative value")
        return np.sqrt(x)
    if f == "pow":
        return _power(x, args[1])
    if f == "tan":
        _domain(np.abs(np.cos(x)) > 1e-15, "tan at a pole")
    return getattr(np, f)(x)


def _power(a, b):
    a_arr, b_arr = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    integral = b_arr == np.round(b_arr)
    _domain((a_arr > 0) | ((a_arr < 0) & integral) | ((a_arr == 0) & (b_arr >= 0)),
            "power outside its real domain")
    with np.errstate(over="raise"):
        try:
            return np.power(a_arr, b_arr)
        except FloatingPointError:
            raise EvalError("power overflow") from None


class Expression:
    """A parsed expression together with its source text."""

    def __init__(self, text):
        self.text = str(text)
        self.ast = parse_expression(self.text)
        self.names = frozenset(variables(self.ast))

    def __call__(self, **env):
        return evaluate(self.ast, env)

    def is_constant(self):
        return not self.names

    def __repr__(self):
        return f"Expression({self.text!r})"
