"""Small arithmetic expression language in one free variable.

Grammar::

    expr   := term (("+"|"-") term)*
    term   := factor (("*"|"/") factor)*
    factor := unary ("^" factor)?
    unary  := "-" unary | atom
    atom   := number | ident | ident "(" expr ("," expr)* ")" | "(" expr ")"

Note that unary minus binds tighter than ``^``: ``-x^2`` is ``(-x)^2``.
Write ``-(x^2)`` or ``0-x^2`` for the other reading.

Evaluation is plain IEEE-754 binary64, performed node by node exactly as
the tree is written (no constant folding, no re-association).  Domain
errors (log or sqrt of an invalid argument, division by zero, a negative
base raised to a non-integer power) produce NaN and are reported.
"""

from __future__ import annotations

import math
import re
import warnings
from dataclasses import dataclass
from typing import Union

import numpy as np

__all__ = [
    "Num", "Var", "Neg", "BinOp", "Call", "Node",
    "ExprError", "ExprSyntaxError", "UnknownIdentifierError", "ArityError",
    "ExprDomainWarning",
    "parse_expression", "to_source", "eval_expression", "evaluate",
    "substitute", "affine_coefficients", "Expression", "FUNCTIONS",
]


class ExprError(ValueError):
    """Base class for expression errors."""


class ExprSyntaxError(ExprError):
    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} at offset {offset}")
        self.offset = offset


class UnknownIdentifierError(ExprError):
    def __init__(self, name: str, offset: int):
        super().__init__(f"unknown identifier {name!r} at offset {offset}")
        self.name = name
        self.offset = offset


class ArityError(ExprError):
    def __init__(self, name: str, got: int, offset: int):
        super().__init__(f"function {name!r} called with {got} argument(s) at offset {offset}")
        self.name = name
        self.got = got
        self.offset = offset


class ExprDomainWarning(RuntimeWarning):
    """An expression was evaluated outside its domain; the result is NaN."""


# --- AST -------------------------------------------------------------------

@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Neg:
    operand: "Node"


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Node"
    right: "Node"


@dataclass(frozen=True)
class Call:
    name: str
    args: tuple


Node = Union[Num, Var, Neg, BinOp, Call]

# name -> (min arity, max arity); None means unbounded
FUNCTIONS = {
    "abs": (1, 1), "exp": (1, 1), "log": (1, 1), "sqrt": (1, 1),
    "sin": (1, 1), "cos": (1, 1), "tanh": (1, 1), "atan": (1, 1),
    "min": (2, None), "max": (2, None),
}


# --- tokenizer -------------------------------------------------------------

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<ident>[a-z][a-z0-9_]*)
  | (?P<op>[-+*/^(),])
    """,
    re.VERBOSE,
)


@dataclass(frozen=True)
class _Token:
    kind: str  # "num" | "ident" | "op" | "end"
    text: str
    offset: int  # byte offset into the UTF-8 encoding of the source


def _tokenize(src: str) -> list[_Token]:
    tokens = []
    pos = 0
    byte_pos = 0
    while pos < len(src):
        m = _TOKEN_RE.match(src, pos)
        if m is None:
            raise ExprSyntaxError(f"unexpected character {src[pos]!r}", byte_pos)
        text = m.group()
        if m.lastgroup != "ws":
            tokens.append(_Token(m.lastgroup, text, byte_pos))
        pos = m.end()
        byte_pos += len(text.encode("utf-8"))
    tokens.append(_Token("end", "", byte_pos))
    return tokens


class _Parser:
    def __init__(self, src: str, variable: str):
        self.tokens = _tokenize(src)
        self.i = 0
        self.variable = variable

    @property
    def tok(self) -> _Token:
        return self.tokens[self.i]

    def advance(self) -> _Token:
        t = self.tokens[self.i]
        self.i += 1
        return t

    def expect(self, text: str) -> None:
        if self.tok.text != text or self.tok.kind != "op":
            found = "end of input" if self.tok.kind == "end" else repr(self.tok.text)
            raise ExprSyntaxError(f"expected {text!r}, found {found}", self.tok.offset)
        self.advance()

    def parse(self) -> Node:
        node = self.expr()
        if self.tok.kind != "end":
            raise ExprSyntaxError(f"unexpected {self.tok.text!r}", self.tok.offset)
        return node

    def expr(self) -> Node:
        node = self.term()
        while self.tok.kind == "op" and self.tok.text in "+-":
            op = self.advance().text
            node = BinOp(op, node, self.term())
        return node

    def term(self) -> Node:
        node = self.factor()
        while self.tok.kind == "op" and self.tok.text in "*/":
            op = self.advance().text
            node = BinOp(op, node, self.factor())
        return node

    def factor(self) -> Node:
        base = self.unary()
        if self.tok.kind == "op" and self.tok.text == "^":
            self.advance()
            return BinOp("^", base, self.factor())
        return base

    def unary(self) -> Node:
        if self.tok.kind == "op" and self.tok.text == "-":
            self.advance()
            return Neg(self.unary())
        return self.atom()

    def atom(self) -> Node:
        t = self.tok
        if t.kind == "num":
            self.advance()
            return Num(float(t.text))
        if t.kind == "ident":
            self.advance()
            if self.tok.kind == "op" and self.tok.text == "(":
                if t.text not in FUNCTIONS:
                    raise UnknownIdentifierError(t.text, t.offset)
                self.advance()
                args = [self.expr()]
                while self.tok.kind == "op" and self.tok.text == ",":
                    self.advance()
                    args.append(self.expr())
                self.expect(")")
                lo, hi = FUNCTIONS[t.text]
                if len(args) < lo or (hi is not None and len(args) > hi):
                    raise ArityError(t.text, len(args), t.offset)
                return Call(t.text, tuple(args))
            if t.text == self.variable:
                return Var(t.text)
            if t.text in FUNCTIONS:
                raise ArityError(t.text, 0, t.offset)
            raise UnknownIdentifierError(t.text, t.offset)
        if t.kind == "op" and t.text == "(":
            self.advance()
            node = self.expr()
            self.expect(")")
            return node
        found = "end of input" if t.kind == "end" else repr(t.text)
        raise ExprSyntaxError(f"expected operand, found {found}", t.offset)


def parse_expression(src: str, variable: str = "x") -> Node:
    """Parse ``src`` into an AST whose only free variable is ``variable``."""
    return _Parser(src, variable).parse()


def _format_number(v: float) -> str:
    if math.isinf(v):
        return "1e999" if v > 0 else "(-1e999)"
    if math.isnan(v):
        raise ExprError("NaN constant cannot be printed")
    s = repr(float(v))
    if v < 0 or s.startswith("-"):
        return f"(-{s.lstrip('-')})"
    return s


def to_source(node: Node) -> str:
    """Fully parenthesised source text; ``parse(to_source(a)) == a``."""
    if isinstance(node, Num):
        return _format_number(node.value)
    if isinstance(node, Var):
        return node.name
    if isinstance(node, Neg):
        return f"(-{to_source(node.operand)})"
    if isinstance(node, BinOp):
        return f"({to_source(node.left)} {node.op} {to_source(node.right)})"
    if isinstance(node, Call):
        return f"{node.name}({', '.join(to_source(a) for a in node.args)})"
    raise TypeError(f"not an expression node: {node!r}")


# --- evaluation ------------------------------------------------------------

def _eval(node: Node, x: np.ndarray, flags: list) -> np.ndarray:
    if isinstance(node, Num):
        return np.full(x.shape, node.value)
    if isinstance(node, Var):
        return x
    if isinstance(node, Neg):
        return -_eval(node.operand, x, flags)
    if isinstance(node, BinOp):
        a = _eval(node.left, x, flags)
        b = _eval(node.right, x, flags)
        op = node.op
        if op == "+":
            return a + b
        if op == "-":
            return a - b
        if op == "*":
            return a * b
        if op == "/":
            bad = b == 0
            out = a / np.where(bad, 1.0, b)
            if bad.any():
                flags.append("division by zero")
                out = np.where(bad, np.nan, out)
            return out
        if op == "^":
            bad = ((a < 0) & (b != np.floor(b))) | ((a == 0) & (b < 0))
            out = _int_power(a, b)
            if out is None:
                out = np.power(a, b)
            if bad.any():
                flags.append("invalid power")
                out = np.where(bad, np.nan, out)
            return out
        raise ExprError(f"unknown operator {op!r}")
    if isinstance(node, Call):
        args = [_eval(a, x, flags) for a in node.args]
        name = node.name
        if name == "min":
            return np.minimum.reduce(args)
        if name == "max":
            return np.maximum.reduce(args)
        (a,) = args
        if name == "log":
            bad = ~(a > 0) & ~np.isnan(a)
            if bad.any():
                flags.append("log of nonpositive value")
            return np.where(bad, np.nan, np.log(np.where(bad, 1.0, a)))
        if name == "sqrt":
            bad = a < 0
            if bad.any():
                flags.append("sqrt of negative value")
            return np.where(bad, np.nan, np.sqrt(np.where(bad, 0.0, a)))
        return _UNARY[name](a)
    raise TypeError(f"not an expression node: {node!r}")


def _int_power(a: np.ndarray, b: np.ndarray):
    """a^n by repeated squaring when b is one small integer n; None otherwise.

    numpy's vectorised power is not correctly rounded and may disagree
    with its scalar path; squaring gives the same bits either way.
    """
    if b.size == 0:
        return None
    n = b.flat[0]
    if not (n == np.floor(n) and abs(n) <= 64 and np.all(b == n)):
        return None
    k = int(abs(n))
    result = np.ones(a.shape)
    base = a
    while k:
        if k & 1:
            result = result * base
        k >>= 1
        if k:
            base = base * base
    return 1.0 / result if n < 0 else result


_UNARY = {
    "abs": np.abs, "exp": np.exp, "sin": np.sin, "cos": np.cos,
    "tanh": np.tanh, "atan": np.arctan,
}


def evaluate(node: Node, x, flags: list | None = None):
    """Vectorised evaluation; domain problems are appended to ``flags``."""
    if flags is None:
        flags = []
    arr = np.asarray(x, dtype=float)
    with np.errstate(all="ignore"):
        out = _eval(node, arr, flags)
    if np.ndim(x) == 0:
        return float(out)
    return out


def eval_expression(node: Node, value: float) -> float:
    """Evaluate at a single point, warning with :class:`ExprDomainWarning` on domain errors."""
    flags: list = []
    out = evaluate(node, float(value), flags)
    if flags:
        warnings.warn(f"{'; '.join(flags)} at {value!r}", ExprDomainWarning, stacklevel=2)
    return out


# --- tree utilities --------------------------------------------------------

def substitute(node: Node, name: str, replacement: Node) -> Node:
    """Replace every occurrence of variable ``name`` by ``replacement``."""
    if isinstance(node, Var):
        return replacement if node.name == name else node
    if isinstance(node, Num):
        return node
    if isinstance(node, Neg):
        return Neg(substitute(node.operand, name, replacement))
    if isinstance(node, BinOp):
        return BinOp(node.op, substitute(node.left, name, replacement),
                     substitute(node.right, name, replacement))
    if isinstance(node, Call):
        return Call(node.name, tuple(substitute(a, name, replacement) for a in node.args))
    raise TypeError(f"not an expression node: {node!r}")


def rename(node: Node, old: str, new: str) -> Node:
    return substitute(node, old, Var(new))


def match(template: Node, node: Node, name: str) -> Node | None:
    """If ``node`` equals ``template`` with variable ``name`` replaced by some E, return E."""
    binding: dict = {}

    def walk(t, n) -> bool:
        if isinstance(t, Var) and t.name == name:
            if "e" in binding:
                return binding["e"] == n
            binding["e"] = n
            return True
        if type(t) is not type(n):
            return False
        if isinstance(t, (Num, Var)):
            return t == n
        if isinstance(t, Neg):
            return walk(t.operand, n.operand)
        if isinstance(t, BinOp):
            return t.op == n.op and walk(t.left, n.left) and walk(t.right, n.right)
        return (t.name == n.name and len(t.args) == len(n.args)
                and all(walk(a, b) for a, b in zip(t.args, n.args)))

    if walk(template, node) and "e" in binding:
        return binding["e"]
    return None


def cancel(node: Node, template: Node, name: str) -> Node:
    """Rewrite every subtree of the form ``template(E)`` to ``E``.

    Used with ``template = inverse(forward(x))`` so that composing a map
    with its own inverse does not lose precision to rounding.
    """
    if isinstance(template, Var):
        return node  # the identity template cancels nothing
    e = match(template, node, name)
    if e is not None:
        return cancel(e, template, name)
    if isinstance(node, Neg):
        return Neg(cancel(node.operand, template, name))
    if isinstance(node, BinOp):
        return BinOp(node.op, cancel(node.left, template, name), cancel(node.right, template, name))
    if isinstance(node, Call):
        return Call(node.name, tuple(cancel(a, template, name) for a in node.args))
    return node


def affine_coefficients(node: Node) -> tuple[float, float] | None:
    """Return ``(slope, intercept)`` if ``node`` is syntactically affine in its variable.

    Only structural rules are used (sums, scaling by constant subtrees,
    division by constant subtrees); anything else returns None.
    """
    if isinstance(node, Num):
        return 0.0, node.value
    if isinstance(node, Var):
        return 1.0, 0.0
    if isinstance(node, Neg):
        r = affine_coefficients(node.operand)
        return None if r is None else (-r[0], -r[1])
    if isinstance(node, Call):
        if _is_constant(node):
            return 0.0, evaluate(node, 0.0)
        return None
    if isinstance(node, BinOp):
        if _is_constant(node):
            return 0.0, evaluate(node, 0.0)
        a = affine_coefficients(node.left)
        b = affine_coefficients(node.right)
        if node.op in "+-":
            if a is None or b is None:
                return None
            s = 1.0 if node.op == "+" else -1.0
            return a[0] + s * b[0], a[1] + s * b[1]
        if node.op == "*":
            if a is not None and _is_constant(node.right):
                c = evaluate(node.right, 0.0)
                return a[0] * c, a[1] * c
            if b is not None and _is_constant(node.left):
                c = evaluate(node.left, 0.0)
                return b[0] * c, b[1] * c
            return None
        if node.op == "/":
            if a is not None and _is_constant(node.right):
                c = evaluate(node.right, 0.0)
                if c == 0:
                    return None
                return a[0] / c, a[1] / c
            return None
        if node.op == "^":
            if a is not None and _is_constant(node.right) and evaluate(node.right, 0.0) == 1.0:
                return a
            return None
    return None


def _is_constant(node: Node) -> bool:
    if isinstance(node, Num):
        return True
    if isinstance(node, Var):
        return False
    if isinstance(node, Neg):
        return _is_constant(node.operand)
    if isinstance(node, BinOp):
        return _is_constant(node.left) and _is_constant(node.right)
    if isinstance(node, Call):
        return all(_is_constant(a) for a in node.args)
    return False


class Expression:
    """A parsed expression bound to its variable, callable on floats or arrays."""

    def __init__(self, node: Node, variable: str = "x", source: str | None = None):
        self.node = node
        self.variable = variable
        self.source = source if source is not None else to_source(node)

    @classmethod
    def parse(cls, src: str, variable: str = "x") -> "Expression":
        return cls(parse_expression(src, variable), variable, src)

    def __call__(self, x):
        return evaluate(self.node, x)

    def __repr__(self) -> str:
        return f"Expression({self.source!r})"

    def __eq__(self, other) -> bool:
        return isinstance(other, Expression) and self.node == other.node

    def __hash__(self) -> int:
        return hash(self.node)
