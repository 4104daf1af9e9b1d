"""Small symbolic expression engine for mass-matrix entries.

Supports exactly the configuration grammar::

    expr   := term (('+'|'-') term)*
    term   := factor (('*'|'/') factor)*
    factor := '-' factor | base ('^' int)?
    base   := number | ident | func '(' expr ')' | '(' expr ')'
    func   := sin | cos | exp | ln | sqrt

plus unary minus, which the printer needs to round-trip negation nodes
coming out of :func:`differentiate`.  Expressions are immutable trees;
:func:`simplify` rewrites them into a canonical normal form (flattened,
sorted commutative chains with folded constants) so that structural
equality is meaningful.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Iterable, Mapping

__all__ = [
    "Expr",
    "Const",
    "Var",
    "Unary",
    "Add",
    "Mul",
    "Sub",
    "Div",
    "Pow",
    "ExpressionError",
    "ParseError",
    "UnknownVariableError",
    "EvalDomainError",
    "parse_expression",
    "differentiate",
    "evaluate",
    "simplify",
    "compile_expr",
]

_FUNCTIONS = ("sin", "cos", "exp", "ln", "sqrt")


class ExpressionError(Exception):
    """Base class for expression-level failures."""


class ParseError(ExpressionError):
    """Syntax error; carries the character offset where parsing failed."""

    def __init__(self, message: str, position: int):
        super().__init__(f"{message} (at offset {position})")
        self.position = position


class UnknownVariableError(ExpressionError):
    """Identifier not among the declared variables or parameters."""


class EvalDomainError(ExpressionError):
    """Division by zero, ln of a non-positive value, or sqrt of a negative."""


class Expr:
    """Base node.  Subclasses are frozen dataclasses, so == is structural."""

    def __str__(self) -> str:
        return _print(self, 0)

    def variables(self) -> set[str]:
        out: set[str] = set()
        _collect_vars(self, out)
        return out


@dataclass(frozen=True)
class Const(Expr):
    value: float


@dataclass(frozen=True)
class Var(Expr):
    name: str


@dataclass(frozen=True)
class Unary(Expr):
    op: str  # neg | sin | cos | exp | ln | sqrt
    arg: Expr


@dataclass(frozen=True)
class Add(Expr):
    terms: tuple[Expr, ...]


@dataclass(frozen=True)
class Mul(Expr):
    factors: tuple[Expr, ...]


@dataclass(frozen=True)
class Sub(Expr):
    left: Expr
    right: Expr


@dataclass(frozen=True)
class Div(Expr):
    num: Expr
    den: Expr


@dataclass(frozen=True)
class Pow(Expr):
    base: Expr
    exponent: int


def _collect_vars(e: Expr, out: set[str]) -> None:
    if isinstance(e, Var):
        out.add(e.name)
    elif isinstance(e, Unary):
        _collect_vars(e.arg, out)
    elif isinstance(e, Add):
        for t in e.terms:
            _collect_vars(t, out)
    elif isinstance(e, Mul):
        for f in e.factors:
            _collect_vars(f, out)
    elif isinstance(e, (Sub, Div)):
        a, b = _children(e)
        _collect_vars(a, out)
        _collect_vars(b, out)
    elif isinstance(e, Pow):
        _collect_vars(e.base, out)


def _children(e: Expr) -> tuple[Expr, Expr]:
    if isinstance(e, Sub):
        return e.left, e.right
    if isinstance(e, Div):
        return e.num, e.den
    raise TypeError(type(e))


# --------------------------------------------------------------------------
# Tokenizer / parser
# --------------------------------------------------------------------------

_TOKEN_OPS = set("+-*/^()")


def _tokenize(text: str) -> list[tuple[str, str, int]]:
    """Return (kind, value, position) triples; kind in {num, ident, op}."""
    tokens = []
    i, n = 0, len(text)
    while i < n:
        ch = text[i]
        if ch.isspace():
            i += 1
            continue
        if ch in _TOKEN_OPS:
            tokens.append(("op", ch, i))
            i += 1
            continue
        if ch.isdigit() or ch == ".":
            j = i
            seen_dot = False
            while j < n and (text[j].isdigit() or (text[j] == "." and not seen_dot)):
                seen_dot = seen_dot or text[j] == "."
                j += 1
            # exponent suffix like 1e-3
            if j < n and text[j] in "eE" and j > i:
                k = j + 1
                if k < n and text[k] in "+-":
                    k += 1
                if k < n and text[k].isdigit():
                    while k < n and text[k].isdigit():
                        k += 1
                    j = k
            tokens.append(("num", text[i:j], i))
            i = j
            continue
        if ch.isalpha() or ch == "_":
            j = i
            while j < n and (text[j].isalnum() or text[j] == "_"):
                j += 1
            tokens.append(("ident", text[i:j], i))
            i = j
            continue
        raise ParseError(f"unexpected character {ch!r}", i)
    tokens.append(("end", "", n))
    return tokens


class _Parser:
    def __init__(self, text: str, variables: Iterable[str]):
        self.text = text
        self.tokens = _tokenize(text)
        self.pos = 0
        self.variables = frozenset(variables)

    def peek(self) -> tuple[str, str, int]:
        return self.tokens[self.pos]

    def advance(self) -> tuple[str, str, int]:
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def expect_op(self, op: str) -> None:
        kind, value, at = self.peek()
        if kind != "op" or value != op:
            raise ParseError(f"expected {op!r}", at)
        self.advance()

    def parse(self) -> Expr:
        e = self.expr()
        kind, value, at = self.peek()
        if kind != "end":
            raise ParseError(f"unexpected token {value!r}", at)
        return e

    def expr(self) -> Expr:
        node = self.term()
        while True:
            kind, value, _ = self.peek()
            if kind == "op" and value in "+-":
                self.advance()
                rhs = self.term()
                node = Add((node, rhs)) if value == "+" else Sub(node, rhs)
            else:
                return node

    def term(self) -> Expr:
        node = self.factor()
        while True:
            kind, value, _ = self.peek()
            if kind == "op" and value in "*/":
                self.advance()
                rhs = self.factor()
                node = Mul((node, rhs)) if value == "*" else Div(node, rhs)
            else:
                return node

    def factor(self) -> Expr:
        kind, value, _ = self.peek()
        if kind == "op" and value == "-":
            self.advance()
            return Unary("neg", self.factor())
        node = self.base()
        kind, value, _ = self.peek()
        if kind == "op" and value == "^":
            self.advance()
            node = Pow(node, self.integer())
        return node

    def integer(self) -> int:
        sign = 1
        kind, value, at = self.peek()
        if kind == "op" and value == "-":
            self.advance()
            sign = -1
            kind, value, at = self.peek()
        if kind != "num":
            raise ParseError("expected integer exponent", at)
        if "." in value or "e" in value or "E" in value:
            raise ParseError(f"exponent must be an integer, got {value!r}", at)
        self.advance()
        return sign * int(value)

    def base(self) -> Expr:
        kind, value, at = self.advance()
        if kind == "num":
            return Const(float(value))
        if kind == "ident":
            if value in _FUNCTIONS:
                self.expect_op("(")
                arg = self.expr()
                self.expect_op(")")
                return Unary(value, arg)
            if value not in self.variables:
                raise UnknownVariableError(
                    f"unknown identifier {value!r} (declared: "
                    f"{', '.join(sorted(self.variables)) or 'none'})"
                )
            return Var(value)
        if kind == "op" and value == "(":
            node = self.expr()
            self.expect_op(")")
            return node
        raise ParseError(f"expected number, identifier or '('", at)


def parse_expression(text: str, variables: Iterable[str]) -> Expr:
    """Parse ``text`` over the declared variable/parameter names.

    Returns the simplified canonical tree.  Raises :class:`ParseError` with
    the failing offset, :class:`UnknownVariableError` for undeclared
    identifiers, and :class:`ParseError` for non-integer exponents.
    """
    return simplify(_Parser(text, variables).parse())


# --------------------------------------------------------------------------
# Printing (canonical, reparseable)
# --------------------------------------------------------------------------

# precedence levels: add/sub 1, mul/div 2, pow 3, atoms 4
def _print(e: Expr, parent_prec: int) -> str:
    if isinstance(e, Const):
        v = e.value
        if v == int(v) and abs(v) < 1e16:
            s = str(int(v))
        else:
            s = repr(v)
        return f"({s})" if v < 0 and parent_prec > 1 else s
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Unary):
        if e.op == "neg":
            inner = _print(e.arg, 2)
            s = f"-{inner}"
            return f"({s})" if parent_prec > 1 else s
        return f"{e.op}({_print(e.arg, 0)})"
    if isinstance(e, Add):
        s = " + ".join(_print(t, 1) for t in e.terms)
        return f"({s})" if parent_prec > 1 else s
    if isinstance(e, Sub):
        s = f"{_print(e.left, 1)} - {_print(e.right, 2)}"
        return f"({s})" if parent_prec > 1 else s
    if isinstance(e, Mul):
        s = "*".join(_print(f, 2) for f in e.factors)
        return f"({s})" if parent_prec > 2 else s
    if isinstance(e, Div):
        s = f"{_print(e.num, 2)}/{_print(e.den, 3)}"
        return f"({s})" if parent_prec > 2 else s
    if isinstance(e, Pow):
        return f"{_print(e.base, 4)}^{e.exponent}"
    raise TypeError(type(e))


# --------------------------------------------------------------------------
# Simplification to canonical normal form
# --------------------------------------------------------------------------

def _sort_key(e: Expr):
    if isinstance(e, Const):
        return (0, e.value)
    if isinstance(e, Var):
        return (1, e.name)
    if isinstance(e, Unary):
        return (2, e.op, (_sort_key(e.arg),))
    if isinstance(e, Pow):
        return (3, "pow", (_sort_key(e.base), (0, float(e.exponent))))
    if isinstance(e, Mul):
        return (4, "mul", tuple(_sort_key(f) for f in e.factors))
    if isinstance(e, Div):
        return (5, "div", (_sort_key(e.num), _sort_key(e.den)))
    if isinstance(e, Add):
        return (6, "add", tuple(_sort_key(t) for t in e.terms))
    if isinstance(e, Sub):
        return (7, "sub", (_sort_key(e.left), _sort_key(e.right)))
    raise TypeError(type(e))


def simplify(e: Expr) -> Expr:
    """Rewrite to canonical form: flatten/sort +,* chains, fold constants,
    drop neutral elements, collapse x^0, x^1, and constant subtrees."""
    if isinstance(e, (Const, Var)):
        return e
    if isinstance(e, Unary):
        arg = simplify(e.arg)
        if e.op == "neg":
            if isinstance(arg, Const):
                return Const(-arg.value)
            if isinstance(arg, Unary) and arg.op == "neg":
                return arg.arg
            return Unary("neg", arg)
        if isinstance(arg, Const):
            fn = {"sin": math.sin, "cos": math.cos, "exp": math.exp}.get(e.op)
            if fn is not None:
                return Const(fn(arg.value))
            # keep ln/sqrt of constants symbolic only when out of domain
            if e.op == "ln" and arg.value > 0:
                return Const(math.log(arg.value))
            if e.op == "sqrt" and arg.value >= 0:
                return Const(math.sqrt(arg.value))
        return Unary(e.op, arg)
    if isinstance(e, Add):
        terms: list[Expr] = []
        const = 0.0
        for raw in e.terms:
            t = simplify(raw)
            for piece in (t.terms if isinstance(t, Add) else (t,)):
                if isinstance(piece, Const):
                    const += piece.value
                else:
                    terms.append(piece)
        if const != 0.0 or not terms:
            terms.append(Const(const))
        terms.sort(key=_sort_key)
        return terms[0] if len(terms) == 1 else Add(tuple(terms))
    if isinstance(e, Mul):
        factors: list[Expr] = []
        const = 1.0
        for raw in e.factors:
            f = simplify(raw)
            for piece in (f.factors if isinstance(f, Mul) else (f,)):
                if isinstance(piece, Const):
                    const *= piece.value
                else:
                    factors.append(piece)
        if const == 0.0:
            return Const(0.0)
        if const != 1.0 or not factors:
            factors.append(Const(const))
        factors.sort(key=_sort_key)
        return factors[0] if len(factors) == 1 else Mul(tuple(factors))
    if isinstance(e, Sub):
        left, right = simplify(e.left), simplify(e.right)
        if isinstance(left, Const) and isinstance(right, Const):
            return Const(left.value - right.value)
        if isinstance(right, Const) and right.value == 0.0:
            return left
        if isinstance(left, Const) and left.value == 0.0:
            return simplify(Unary("neg", right))
        if left == right:
            return Const(0.0)
        return Sub(left, right)
    if isinstance(e, Div):
        num, den = simplify(e.num), simplify(e.den)
        if isinstance(num, Const) and num.value == 0.0:
            return Const(0.0)
        if isinstance(den, Const) and den.value == 1.0:
            return num
        if isinstance(num, Const) and isinstance(den, Const) and den.value != 0.0:
            return Const(num.value / den.value)
        return Div(num, den)
    if isinstance(e, Pow):
        base = simplify(e.base)
        if e.exponent == 0:
            return Const(1.0)
        if e.exponent == 1:
            return base
        if isinstance(base, Const):
            return Const(base.value ** e.exponent)
        return Pow(base, e.exponent)
    raise TypeError(type(e))


# --------------------------------------------------------------------------
# Differentiation
# --------------------------------------------------------------------------

def differentiate(e: Expr, var: str) -> Expr:
    """Exact derivative with respect to ``var``, returned in canonical form."""
    return simplify(_diff(e, var))


def _diff(e: Expr, var: str) -> Expr:
    if isinstance(e, Const):
        return Const(0.0)
    if isinstance(e, Var):
        return Const(1.0 if e.name == var else 0.0)
    if isinstance(e, Unary):
        da = _diff(e.arg, var)
        if e.op == "neg":
            return Unary("neg", da)
        if e.op == "sin":
            return Mul((Unary("cos", e.arg), da))
        if e.op == "cos":
            return Unary("neg", Mul((Unary("sin", e.arg), da)))
        if e.op == "exp":
            return Mul((Unary("exp", e.arg), da))
        if e.op == "ln":
            return Div(da, e.arg)
        if e.op == "sqrt":
            return Div(da, Mul((Const(2.0), Unary("sqrt", e.arg))))
        raise TypeError(e.op)
    if isinstance(e, Add):
        return Add(tuple(_diff(t, var) for t in e.terms))
    if isinstance(e, Sub):
        return Sub(_diff(e.left, var), _diff(e.right, var))
    if isinstance(e, Mul):
        terms = []
        factors = e.factors
        for i in range(len(factors)):
            terms.append(Mul(tuple(
                _diff(f, var) if j == i else f for j, f in enumerate(factors)
            )))
        return Add(tuple(terms))
    if isinstance(e, Div):
        return Div(
            Sub(Mul((_diff(e.num, var), e.den)), Mul((e.num, _diff(e.den, var)))),
            Pow(e.den, 2),
        )
    if isinstance(e, Pow):
        return Mul((Const(float(e.exponent)), Pow(e.base, e.exponent - 1),
                    _diff(e.base, var)))
    raise TypeError(type(e))


# --------------------------------------------------------------------------
# Evaluation
# --------------------------------------------------------------------------

def evaluate(e: Expr, bindings: Mapping[str, float]) -> float:
    """Evaluate with every free variable bound; raises on domain violations."""
    if isinstance(e, Const):
        return e.value
    if isinstance(e, Var):
        try:
            return float(bindings[e.name])
        except KeyError:
            raise UnknownVariableError(f"unbound variable {e.name!r}") from None
    if isinstance(e, Unary):
        a = evaluate(e.arg, bindings)
        if e.op == "neg":
            return -a
        if e.op == "sin":
            return math.sin(a)
        if e.op == "cos":
            return math.cos(a)
        if e.op == "exp":
            return math.exp(a)
        if e.op == "ln":
            if a <= 0.0:
                raise EvalDomainError(f"ln of non-positive value {a}")
            return math.log(a)
        if e.op == "sqrt":
            if a < 0.0:
                raise EvalDomainError(f"sqrt of negative value {a}")
            return math.sqrt(a)
        raise TypeError(e.op)
    if isinstance(e, Add):
        return sum(evaluate(t, bindings) for t in e.terms)
    if isinstance(e, Sub):
        return evaluate(e.left, bindings) - evaluate(e.right, bindings)
    if isinstance(e, Mul):
        out = 1.0
        for f in e.factors:
            out *= evaluate(f, bindings)
        return out
    if isinstance(e, Div):
        den = evaluate(e.den, bindings)
        if den == 0.0:
            raise EvalDomainError("division by zero")
        return evaluate(e.num, bindings) / den
    if isinstance(e, Pow):
        base = evaluate(e.base, bindings)
        if e.exponent < 0 and base == 0.0:
            raise EvalDomainError("zero raised to a negative power")
        return base ** e.exponent
    raise TypeError(type(e))


# --------------------------------------------------------------------------
# Compilation (hot path for the integrators)
# --------------------------------------------------------------------------

def _emit(e: Expr, names: Mapping[str, str]) -> str:
    if isinstance(e, Const):
        return repr(e.value)
    if isinstance(e, Var):
        return names[e.name]
    if isinstance(e, Unary):
        inner = _emit(e.arg, names)
        if e.op == "neg":
            return f"(-{inner})"
        fn = {"sin": "sin", "cos": "cos", "exp": "exp", "ln": "log",
              "sqrt": "sqrt"}[e.op]
        return f"{fn}({inner})"
    if isinstance(e, Add):
        return "(" + " + ".join(_emit(t, names) for t in e.terms) + ")"
    if isinstance(e, Sub):
        return f"({_emit(e.left, names)} - {_emit(e.right, names)})"
    if isinstance(e, Mul):
        return "(" + "*".join(_emit(f, names) for f in e.factors) + ")"
    if isinstance(e, Div):
        return f"({_emit(e.num, names)}/{_emit(e.den, names)})"
    if isinstance(e, Pow):
        return f"({_emit(e.base, names)})**{e.exponent}"
    raise TypeError(type(e))


def compile_expr(e: Expr, argnames: list[str]) -> Callable[..., float]:
    """Compile the tree into ``f(*argnames) -> float`` using math functions.

    Agrees with :func:`evaluate` (tested); domain violations surface as the
    math module's ValueError/ZeroDivisionError.
    """
    names = {v: v for v in argnames}
    src = f"def _compiled({', '.join(argnames)}):\n    return {_emit(e, names)}\n"
    scope = {"sin": math.sin, "cos": math.cos, "exp": math.exp,
             "log": math.log, "sqrt": math.sqrt}
    exec(compile(src, "<expr>", "exec"), scope)
    return scope["_compiled"]
