"""Field-expression language: parsing, evaluation and symbolic differentiation.

Grammar (lowest to highest precedence)::

    expr    := term (('+' | '-') term)*
    term    := unary (('*' | '/') unary)*
    unary   := '-' unary | power
    power   := atom ('^' unary)?          # right-associative
    atom    := NUMBER | NAME | NAME '(' expr ')' | '(' expr ')'

so ``-x^2`` parses as ``-(x^2)`` and ``2^3^2`` as ``2^(3^2)``.

Trees are immutable and hashable; structural equality is dataclass equality.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

__all__ = [
    "Expr", "Num", "Var", "Neg", "Add", "Sub", "Mul", "Div", "Pow", "Call",
    "FUNCTIONS", "ExprError", "ExprSyntaxError", "UnknownIdentifierError",
    "DomainError", "parse", "evaluate", "pretty", "symbolic_partial",
    "compile_expr", "variables",
]

FUNCTIONS = ("sin", "cos", "tan", "cot", "exp", "log", "sqrt", "sinh", "cosh", "abs")


class ExprError(ValueError):
    pass


class ExprSyntaxError(ExprError):
    def __init__(self, message: str, offset: int, source: str = ""):
        super().__init__(f"{message} at byte offset {offset}")
        self.offset = offset
        self.source = source


class UnknownIdentifierError(ExprError):
    def __init__(self, name: str, offset: int):
        super().__init__(f"unknown identifier {name!r} at byte offset {offset}")
        self.name = name
        self.offset = offset


class DomainError(ExprError, ArithmeticError):
    def __init__(self, message: str, subexpr: "Expr", point: Mapping[str, float]):
        super().__init__(f"{message} in {pretty(subexpr)!r} at {dict(point)}")
        self.subexpr = subexpr
        self.point = dict(point)


# --------------------------------------------------------------------------
# tree
# --------------------------------------------------------------------------

class Expr:
    __slots__ = ()

    def __str__(self) -> str:
        return pretty(self)


@dataclass(frozen=True)
class Num(Expr):
    value: float


@dataclass(frozen=True)
class Var(Expr):
    name: str


@dataclass(frozen=True)
class Neg(Expr):
    arg: Expr


@dataclass(frozen=True)
class Add(Expr):
    left: Expr
    right: Expr


@dataclass(frozen=True)
class Sub(Expr):
    left: Expr
    right: Expr


@dataclass(frozen=True)
class Mul(Expr):
    left: Expr
    right: Expr


@dataclass(frozen=True)
class Div(Expr):
    left: Expr
    right: Expr


@dataclass(frozen=True)
class Pow(Expr):
    base: Expr
    exponent: Expr


@dataclass(frozen=True)
class Call(Expr):
    func: str
    arg: Expr


_BINARY = {"+": Add, "-": Sub, "*": Mul, "/": Div}

# --------------------------------------------------------------------------
# parser
# --------------------------------------------------------------------------

_TOKEN = re.compile(
    r"\s*(?:"
    r"(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>[-+*/^()])"
    r")"
)
_IDENT = re.compile(r"[A-Za-z_][A-Za-z_0-9]*\Z")


class _Parser:
    def __init__(self, source: str, names: Sequence[str]):
        self.source = source
        self.names = frozenset(names)
        self.tokens = self._lex(source)
        self.pos = 0

    def _byte_offset(self, char_offset: int) -> int:
        return len(self.source[:char_offset].encode("utf-8"))

    def _lex(self, source: str):
        tokens = []
        i = 0
        n = len(source)
        while i < n:
            if source[i].isspace():
                i += 1
                continue
            m = _TOKEN.match(source, i)
            if m is None or m.end() == i or m.lastgroup is None:
                raise ExprSyntaxError(f"unexpected character {source[i]!r}",
                                      self._byte_offset(i), source)
            start = m.start(m.lastgroup)
            tokens.append((m.lastgroup, m.group(m.lastgroup), start))
            i = m.end()
        tokens.append(("end", "", n))
        return tokens

    def peek(self):
        return self.tokens[self.pos]

    def take(self):
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def error(self, message, tok):
        return ExprSyntaxError(message, self._byte_offset(tok[2]), self.source)

    def expect(self, value):
        tok = self.take()
        if tok[1] != value or tok[0] != "op":
            found = "end of input" if tok[0] == "end" else repr(tok[1])
            raise self.error(f"expected {value!r}, found {found}", tok)

    def parse(self) -> Expr:
        tree = self.expr()
        tok = self.peek()
        if tok[0] != "end":
            raise self.error(f"unexpected token {tok[1]!r}", tok)
        return tree

    def expr(self) -> Expr:
        left = self.term()
        while self.peek()[0] == "op" and self.peek()[1] in "+-":
            op = self.take()[1]
            left = _BINARY[op](left, self.term())
        return left

    def term(self) -> Expr:
        left = self.unary()
        while self.peek()[0] == "op" and self.peek()[1] in "*/":
            op = self.take()[1]
            left = _BINARY[op](left, self.unary())
        return left

    def unary(self) -> Expr:
        tok = self.peek()
        if tok[0] == "op" and tok[1] == "-":
            self.take()
            return Neg(self.unary())
        return self.power()

    def power(self) -> Expr:
        base = self.atom()
        tok = self.peek()
        if tok[0] == "op" and tok[1] == "^":
            self.take()
            return Pow(base, self.unary())
        return base

    def atom(self) -> Expr:
        tok = self.take()
        kind, text, _ = tok
        if kind == "num":
            return Num(float(text))
        if kind == "name":
            nxt = self.peek()
            if nxt[0] == "op" and nxt[1] == "(":
                if text not in FUNCTIONS:
                    raise UnknownIdentifierError(text, self._byte_offset(tok[2]))
                self.take()
                arg = self.expr()
                self.expect(")")
                return Call(text, arg)
            if text not in self.names:
                raise UnknownIdentifierError(text, self._byte_offset(tok[2]))
            return Var(text)
        if kind == "op" and text == "(":
            inner = self.expr()
            self.expect(")")
            return inner
        found = "end of input" if kind == "end" else repr(text)
        raise self.error(f"unexpected {found}", tok)


def parse(source: str, coordinate_names: Sequence[str]) -> Expr:
    """Parse `source` into an expression tree over `coordinate_names`.

    Raises ExprSyntaxError (carrying the byte offset) or
    UnknownIdentifierError (carrying the offending name).
    """
    if not isinstance(source, str) or not source.strip():
        raise ExprSyntaxError("empty expression", 0, source if isinstance(source, str) else "")
    names = list(coordinate_names)
    if len(set(names)) != len(names):
        raise ValueError(f"duplicate coordinate names in {names}")
    for name in names:
        if not _IDENT.match(name) or name in FUNCTIONS:
            raise ValueError(f"invalid coordinate name {name!r}")
    return _Parser(source, names).parse()


def variables(e: Expr) -> frozenset:
    """Names of the coordinate variables occurring in `e`."""
    if isinstance(e, Var):
        return frozenset((e.name,))
    if isinstance(e, Num):
        return frozenset()
    if isinstance(e, (Neg, Call)):
        return variables(e.arg)
    if isinstance(e, Pow):
        return variables(e.base) | variables(e.exponent)
    return variables(e.left) | variables(e.right)


# --------------------------------------------------------------------------
# printing
# --------------------------------------------------------------------------

_PREC = {Add: 1, Sub: 1, Mul: 2, Div: 2, Neg: 3, Pow: 4}
_SYMBOL = {Add: "+", Sub: "-", Mul: "*", Div: "/"}


def _prec(e: Expr) -> int:
    if isinstance(e, Num) and e.value < 0:
        return 3
    return _PREC.get(type(e), 5)


def _fmt_num(v: float) -> str:
    if v == int(v) and abs(v) < 1e15:
        text = str(int(v))
    else:
        text = repr(float(v))
    return text


def pretty(e: Expr) -> str:
    """Render `e` as source text that parses back to the same tree."""
    if isinstance(e, Num):
        if not math.isfinite(e.value):
            raise ExprError(f"cannot print non-finite literal {e.value}")
        if e.value < 0:
            return "-" + _fmt_num(-e.value)
        return _fmt_num(e.value)
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Call):
        return f"{e.func}({pretty(e.arg)})"
    if isinstance(e, Neg):
        inner = pretty(e.arg)
        if _prec(e.arg) < 3:
            inner = f"({inner})"
        return "-" + inner
    if isinstance(e, Pow):
        base = pretty(e.base)
        if _prec(e.base) <= 4:
            base = f"({base})"
        expo = pretty(e.exponent)
        if _prec(e.exponent) < 3:
            expo = f"({expo})"
        return f"{base}^{expo}"
    p = _PREC[type(e)]
    left = pretty(e.left)
    if _prec(e.left) < p:
        left = f"({left})"
    right = pretty(e.right)
    # left-associative: equal precedence on the right needs parentheses
    if _prec(e.right) <= p:
        right = f"({right})"
    return f"{left} {_SYMBOL[type(e)]} {right}"


# --------------------------------------------------------------------------
# evaluation
# --------------------------------------------------------------------------

def _cot(u: float) -> float:
    s = math.sin(u)
    if s == 0.0:
        raise ZeroDivisionError
    return math.cos(u) / s


def _pow(a: float, b: float) -> float:
    return math.pow(a, b)


_MATH: dict[str, Callable[[float], float]] = {
    "sin": math.sin, "cos": math.cos, "tan": math.tan, "cot": _cot,
    "exp": math.exp, "log": math.log, "sqrt": math.sqrt,
    "sinh": math.sinh, "cosh": math.cosh, "abs": abs,
}


def evaluate(e: Expr, point: Mapping[str, float]) -> float:
    """Evaluate `e` at `point` (coordinate name -> value) in double precision.

    Raises DomainError naming the offending sub-expression on log/sqrt of a
    negative number, division by zero, a cot pole or overflow.
    """
    if isinstance(e, Num):
        return e.value
    if isinstance(e, Var):
        try:
            return float(point[e.name])
        except KeyError:
            raise UnknownIdentifierError(e.name, -1) from None
    if isinstance(e, Neg):
        return -evaluate(e.arg, point)
    if isinstance(e, Call):
        u = evaluate(e.arg, point)
        if e.func == "log" and u <= 0.0:
            raise DomainError("log of non-positive value", e, point)
        if e.func == "sqrt" and u < 0.0:
            raise DomainError("sqrt of negative value", e, point)
        try:
            return _MATH[e.func](u)
        except ZeroDivisionError:
            raise DomainError("cot pole", e, point) from None
        except (OverflowError, ValueError):
            raise DomainError(f"{e.func} out of domain", e, point) from None
    if isinstance(e, Pow):
        a = evaluate(e.base, point)
        b = evaluate(e.exponent, point)
        if a < 0.0 and b != int(b):
            raise DomainError("negative base with non-integer exponent", e, point)
        if a == 0.0 and b < 0.0:
            raise DomainError("zero to a negative power", e, point)
        try:
            return _pow(a, b)
        except (OverflowError, ValueError):
            raise DomainError("power out of range", e, point) from None
    a = evaluate(e.left, point)
    b = evaluate(e.right, point)
    if isinstance(e, Add):
        return a + b
    if isinstance(e, Sub):
        return a - b
    if isinstance(e, Mul):
        return a * b
    if b == 0.0:
        raise DomainError("division by zero", e, point)
    return a / b


def _codegen(e: Expr, slots: Mapping[str, int]) -> str:
    if isinstance(e, Num):
        return repr(e.value)
    if isinstance(e, Var):
        return f"x[{slots[e.name]}]"
    if isinstance(e, Neg):
        return f"(-{_codegen(e.arg, slots)})"
    if isinstance(e, Call):
        return f"{e.func}_({_codegen(e.arg, slots)})"
    if isinstance(e, Pow):
        return f"pow_({_codegen(e.base, slots)}, {_codegen(e.exponent, slots)})"
    return f"({_codegen(e.left, slots)} {_SYMBOL[type(e)]} {_codegen(e.right, slots)})"


def compile_expr(exprs: Sequence[Expr], coordinate_names: Sequence[str]) -> Callable:
    """Compile expressions into one fast callable ``f(coords) -> list[float]``.

    The compiled path defers to :func:`evaluate` whenever it hits a floating
    point exception, so error reporting matches the tree walker.
    """
    names = list(coordinate_names)
    slots = {name: i for i, name in enumerate(names)}
    body = ", ".join(_codegen(e, slots) for e in exprs)
    env = {f"{k}_": v for k, v in _MATH.items()}
    env["pow_"] = _pow
    fast = eval(f"lambda x: [{body}]", env)  # noqa: S307 - source built from a validated tree
    exprs = tuple(exprs)

    def run(coords):
        try:
            return fast(coords)
        except (ArithmeticError, ValueError):
            point = dict(zip(names, (float(c) for c in coords)))
            return [evaluate(e, point) for e in exprs]

    return run


# --------------------------------------------------------------------------
# differentiation
# --------------------------------------------------------------------------

ZERO = Num(0.0)
ONE = Num(1.0)
TWO = Num(2.0)


def _is(e: Expr, v: float) -> bool:
    return isinstance(e, Num) and e.value == v


def _add(a, b):
    if _is(a, 0):
        return b
    if _is(b, 0):
        return a
    return Add(a, b)


def _sub(a, b):
    if _is(b, 0):
        return a
    if _is(a, 0):
        return _neg(b)
    return Sub(a, b)


def _neg(a):
    if isinstance(a, Num):
        return Num(-a.value)
    if isinstance(a, Neg):
        return a.arg
    return Neg(a)


def _mul(a, b):
    if _is(a, 0) or _is(b, 0):
        return ZERO
    if _is(a, 1):
        return b
    if _is(b, 1):
        return a
    if isinstance(a, Num) and isinstance(b, Num):
        return Num(a.value * b.value)
    return Mul(a, b)


def _div(a, b):
    if _is(a, 0):
        return ZERO
    if _is(b, 1):
        return a
    return Div(a, b)


def symbolic_partial(e: Expr, var: str) -> Expr:
    """Exact partial derivative of `e` with respect to coordinate `var`.

    Only trivial zero/one folding is applied; the result is not simplified.
    """
    if isinstance(e, Num):
        return ZERO
    if isinstance(e, Var):
        return ONE if e.name == var else ZERO
    if isinstance(e, Neg):
        return _neg(symbolic_partial(e.arg, var))
    if isinstance(e, (Add, Sub)):
        da = symbolic_partial(e.left, var)
        db = symbolic_partial(e.right, var)
        return _add(da, db) if isinstance(e, Add) else _sub(da, db)
    if isinstance(e, Mul):
        da = symbolic_partial(e.left, var)
        db = symbolic_partial(e.right, var)
        return _add(_mul(da, e.right), _mul(e.left, db))
    if isinstance(e, Div):
        da = symbolic_partial(e.left, var)
        db = symbolic_partial(e.right, var)
        if _is(db, 0):
            return _div(da, e.right)
        return _div(_sub(_mul(da, e.right), _mul(e.left, db)), Pow(e.right, TWO))
    if isinstance(e, Pow):
        du = symbolic_partial(e.base, var)
        dv = symbolic_partial(e.exponent, var)
        if var not in variables(e.exponent):
            # u^c: c*u^(c-1)*u'
            if _is(du, 0):
                return ZERO
            lowered = Pow(e.base, _sub(e.exponent, ONE)) if not isinstance(e.exponent, Num) \
                else Pow(e.base, Num(e.exponent.value - 1.0))
            return _mul(_mul(e.exponent, lowered), du)
        # u^v * (v' log u + v u'/u)
        term = _mul(dv, Call("log", e.base))
        if not _is(du, 0):
            term = _add(term, _div(_mul(e.exponent, du), e.base))
        return _mul(e, term)
    if isinstance(e, Call):
        u = e.arg
        du = symbolic_partial(u, var)
        if _is(du, 0):
            return ZERO
        f = e.func
        if f == "sin":
            outer = Call("cos", u)
        elif f == "cos":
            outer = _neg(Call("sin", u))
        elif f == "tan":
            outer = Div(ONE, Pow(Call("cos", u), TWO))
        elif f == "cot":
            outer = Neg(Div(ONE, Pow(Call("sin", u), TWO)))
        elif f == "exp":
            outer = e
        elif f == "log":
            return _div(du, u)
        elif f == "sqrt":
            return _div(du, Mul(TWO, e))
        elif f == "sinh":
            outer = Call("cosh", u)
        elif f == "cosh":
            outer = Call("sinh", u)
        elif f == "abs":
            outer = Div(u, e)
        else:  # pragma: no cover - parser rejects other names
            raise ExprError(f"no derivative rule for {f}")
        return _mul(outer, du)
    raise TypeError(f"not an expression: {e!r}")
