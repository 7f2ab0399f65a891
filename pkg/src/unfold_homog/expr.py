"""Parser and evaluator for the coefficient expression mini-language.

Grammar (lowest to highest precedence, all binary operators left
associative)::

    additive    := multiplicative (("+" | "-") multiplicative)*
    multiplicative := unary (("*" | "/") unary)*
    unary       := "-" unary | atom
    atom        := NUMBER | IDENT | IDENT "(" args ")" | "(" additive ")"

Identifiers are either declared variables (x1..xn, y1..yn by default),
the constant ``pi``, or one of the built-in functions ``sin``, ``cos``,
``exp``, ``sqrt``, ``abs`` (unary) and ``min``, ``max`` (binary).

Evaluation accepts scalars or numpy arrays in the environment and is
transparent to broadcasting.  Division by (near) zero and square roots
of negative numbers raise :class:`ExprDomainError` naming the offending
subexpression.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import UnfoldHomogError

_UNARY_FUNCS = {
    "sin": np.sin,
    "cos": np.cos,
    "exp": np.exp,
    "sqrt": np.sqrt,
    "abs": np.abs,
}
_BINARY_FUNCS = {
    "min": np.minimum,
    "max": np.maximum,
}
FUNCTIONS = {**{k: 1 for k in _UNARY_FUNCS}, **{k: 2 for k in _BINARY_FUNCS}}

_DIV_FLOOR = 1e-300


class ExprError(UnfoldHomogError):
    """Base class for expression problems."""


class ExprSyntaxError(ExprError):
    """Raised on malformed source; carries the byte offset and the expected set."""

    def __init__(self, message, offset, expected=()):
        super().__init__(f"{message} at offset {offset}")
        self.offset = offset
        self.expected = tuple(expected)


class ExprNameError(ExprError):
    """Unknown identifier (undeclared variable or unknown function)."""

    def __init__(self, message, offset, name):
        super().__init__(f"{message} at offset {offset}")
        self.offset = offset
        self.name = name


class ExprDomainError(ExprError):
    """Evaluation hit a domain fault (division by ~0, sqrt of a negative)."""

    def __init__(self, message, source_fragment):
        super().__init__(f"{message} in '{source_fragment}'")
        self.source_fragment = source_fragment


@dataclass(frozen=True)
class Num:
    value: float

    def __str__(self):
        return format(self.value, ".17g")


@dataclass(frozen=True)
class Var:
    name: str

    def __str__(self):
        return self.name


@dataclass(frozen=True)
class Neg:
    arg: "Node"

    def __str__(self):
        return f"-({self.arg})"


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Node"
    right: "Node"

    def __str__(self):
        return f"({self.left} {self.op} {self.right})"


@dataclass(frozen=True)
class Call:
    func: str
    args: tuple

    def __str__(self):
        return f"{self.func}({', '.join(str(a) for a in self.args)})"


Node = Num | Var | Neg | BinOp | Call


class _Scanner:
    """Hand-rolled tokenizer tracking byte offsets for error reporting."""

    def __init__(self, src: str):
        self.src = src
        self.pos = 0

    def _skip_ws(self):
        while self.pos < len(self.src) and self.src[self.pos] in " \t\r\n":
            self.pos += 1

    def peek(self):
        """Return (kind, text, offset) of the next token without consuming it."""
        self._skip_ws()
        i = self.pos
        s = self.src
        if i >= len(s):
            return ("end", "", i)
        c = s[i]
        if c in "+-*/(),":
            return (c, c, i)
        if c.isdigit() or c == ".":
            j = i
            seen_dot = False
            while j < len(s) and (s[j].isdigit() or (s[j] == "." and not seen_dot)):
                seen_dot = seen_dot or s[j] == "."
                j += 1
            if j < len(s) and s[j] in "eE":
                k = j + 1
                if k < len(s) and s[k] in "+-":
                    k += 1
                if k < len(s) and s[k].isdigit():
                    while k < len(s) and s[k].isdigit():
                        k += 1
                    j = k
            return ("num", s[i:j], i)
        if c.isalpha() or c == "_":
            j = i
            while j < len(s) and (s[j].isalnum() or s[j] == "_"):
                j += 1
            return ("ident", s[i:j], i)
        raise ExprSyntaxError(f"unexpected character {c!r}", i)

    def next(self):
        kind, text, off = self.peek()
        self.pos = off + len(text)
        return kind, text, off


class _Parser:
    def __init__(self, src, variables):
        self.scan = _Scanner(src)
        self.src = src
        self.variables = frozenset(variables)

    def parse(self):
        node = self._additive()
        kind, text, off = self.scan.peek()
        if kind != "end":
            raise ExprSyntaxError(
                f"unexpected trailing input {text!r}", off, expected=("end of input",)
            )
        return node

    def _additive(self):
        node = self._multiplicative()
        while True:
            kind, _, _ = self.scan.peek()
            if kind in ("+", "-"):
                self.scan.next()
                node = BinOp(kind, node, self._multiplicative())
            else:
                return node

    def _multiplicative(self):
        node = self._unary()
        while True:
            kind, _, _ = self.scan.peek()
            if kind in ("*", "/"):
                self.scan.next()
                node = BinOp(kind, node, self._unary())
            else:
                return node

    def _unary(self):
        kind, _, _ = self.scan.peek()
        if kind == "-":
            self.scan.next()
            return Neg(self._unary())
        return self._atom()

    def _atom(self):
        kind, text, off = self.scan.next()
        if kind == "num":
            return Num(float(text))
        if kind == "(":
            node = self._additive()
            kind, _, off2 = self.scan.next()
            if kind != ")":
                raise ExprSyntaxError("unbalanced parenthesis", off2, expected=(")",))
            return node
        if kind == "ident":
            nxt, _, _ = self.scan.peek()
            if nxt == "(":
                return self._call(text, off)
            if text == "pi":
                return Num(math.pi)
            if text in FUNCTIONS:
                raise ExprSyntaxError(
                    f"function {text!r} must be called", off, expected=("(",)
                )
            if text not in self.variables:
                raise ExprNameError(f"unknown identifier {text!r}", off, name=text)
            return Var(text)
        raise ExprSyntaxError(
            f"expected a value, got {text!r}" if text else "unexpected end of input",
            off,
            expected=("number", "identifier", "(", "-"),
        )

    def _call(self, name, off):
        if name not in FUNCTIONS:
            raise ExprNameError(f"unknown function {name!r}", off, name=name)
        self.scan.next()  # consume "("
        args = [self._additive()]
        while True:
            kind, _, off2 = self.scan.next()
            if kind == ")":
                break
            if kind != ",":
                raise ExprSyntaxError(
                    "expected ',' or ')' in argument list", off2, expected=(",", ")")
                )
            args.append(self._additive())
        arity = FUNCTIONS[name]
        if len(args) != arity:
            raise ExprSyntaxError(
                f"{name} takes {arity} argument(s), got {len(args)}",
                off,
                expected=(f"{arity} argument(s)",),
            )
        return Call(name, tuple(args))


def default_variables(n: int, kinds: str = "xy") -> tuple:
    """Declared variable names for dimension n: x1..xn and/or y1..yn."""
    names = []
    for k in kinds:
        names.extend(f"{k}{i + 1}" for i in range(n))
    return tuple(names)


def parse(src: str, variables=()) -> Node:
    """Parse source into an expression tree referencing only declared variables."""
    if not isinstance(src, str):
        raise ExprSyntaxError("expression source must be a string", 0)
    return _Parser(src, variables).parse()


def eval_node(node: Node, env) -> float | np.ndarray:
    """Evaluate a tree in an environment mapping variable names to values.

    Values may be scalars or numpy arrays; results follow numpy
    broadcasting.  A scalar-only environment yields a plain float.
    """
    out = _eval(node, env)
    if np.ndim(out) == 0:
        return float(out)
    return out


def _eval(node, env):
    if isinstance(node, Num):
        return node.value
    if isinstance(node, Var):
        try:
            return env[node.name]
        except KeyError:
            raise ExprNameError(f"unbound variable {node.name!r}", 0, node.name) from None
    if isinstance(node, Neg):
        return -_eval(node.arg, env)
    if isinstance(node, BinOp):
        a = _eval(node.left, env)
        b = _eval(node.right, env)
        if node.op == "+":
            return a + b
        if node.op == "-":
            return a - b
        if node.op == "*":
            return a * b
        if np.any(np.abs(b) < _DIV_FLOOR):
            raise ExprDomainError("division by zero", str(node.right))
        return a / b
    if isinstance(node, Call):
        args = [_eval(a, env) for a in node.args]
        if node.func == "sqrt" and np.any(args[0] < 0):
            raise ExprDomainError("sqrt of a negative value", str(node.args[0]))
        fn = _UNARY_FUNCS.get(node.func) or _BINARY_FUNCS[node.func]
        return fn(*args)
    raise TypeError(f"not an expression node: {node!r}")


def to_string(node: Node) -> str:
    """Canonical printed form; parse(to_string(t)) is structurally equal to t."""
    return str(node)


def variables_of(node: Node) -> frozenset:
    """The set of variable names referenced by a tree."""
    if isinstance(node, Var):
        return frozenset((node.name,))
    if isinstance(node, Neg):
        return variables_of(node.arg)
    if isinstance(node, BinOp):
        return variables_of(node.left) | variables_of(node.right)
    if isinstance(node, Call):
        out = frozenset()
        for a in node.args:
            out |= variables_of(a)
        return out
    return frozenset()
