"""Arithmetic expressions for coefficient entry.

Grammar, loosest binding first::

    expr   := term (('+' | '-') term)*
    term   := unary (('*' | '/') unary)*
    unary  := '-' unary | power
    power  := atom ('^' unary)?
    atom   := NUMBER | NAME | NAME '(' expr (',' expr)* ')' | '(' expr ')'

``^`` is right-associative and binds tighter than unary minus, so ``-x^2``
is ``-(x^2)``. Evaluation is vectorized over numpy arrays.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field

import numpy as np

VARIABLES = frozenset({"x", "t", "y", "c", "delta"})
FUNCTIONS = {
    "exp": 1,
    "log": 1,
    "sqrt": 1,
    "sin": 1,
    "cos": 1,
    "tanh": 1,
    "abs": 1,
    "min": -2,
    "max": -2,
}
MAX_DEPTH = 64  # nesting of parentheses, calls and prefix minus
MAX_TREE_DEPTH = 256  # also bounds long operator chains, which parse iteratively


class ExprError(ValueError):
    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte {offset})")
        self.offset = offset


class ExprSyntaxError(ExprError):
    def __init__(self, message: str, offset: int, expected: frozenset = frozenset()):
        if expected:
            message = f"{message}; expected one of {', '.join(sorted(expected))}"
        super().__init__(message, offset)
        self.expected = expected


class ExprEvalError(ExprError):
    pass


@dataclass(frozen=True)
class Num:
    value: float
    pos: int = field(default=0, compare=False)


@dataclass(frozen=True)
class Var:
    name: str
    pos: int = field(default=0, compare=False)


@dataclass(frozen=True)
class Neg:
    operand: object
    pos: int = field(default=0, compare=False)


@dataclass(frozen=True)
class BinOp:
    op: str
    left: object
    right: object
    pos: int = field(default=0, compare=False)


@dataclass(frozen=True)
class Call:
    name: str
    args: tuple
    pos: int = field(default=0, compare=False)


_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)|(?P<name>[A-Za-z_][A-Za-z_0-9]*)|(?P<op>[-+*/^(),]))"
)


def _tokenize(text: str):
    tokens = []
    pos = 0
    n = len(text)
    byte_at = _byte_offsets(text)
    while True:
        while pos < n and text[pos].isspace():
            pos += 1
        if pos >= n:
            break
        m = _TOKEN.match(text, pos)
        if m is None or m.end() == pos:
            raise ExprSyntaxError(f"unexpected character {text[pos]!r}", byte_at[pos])
        kind = m.lastgroup
        tokens.append((kind, m.group(kind), byte_at[m.start(kind)]))
        pos = m.end()
    tokens.append(("end", "", byte_at[n]))
    return tokens


def _byte_offsets(text: str) -> list[int]:
    out, acc = [], 0
    for ch in text:
        out.append(acc)
        acc += len(ch.encode("utf-8", errors="surrogatepass"))
    out.append(acc)
    return out


class _Parser:
    def __init__(self, tokens):
        self.tokens = tokens
        self.i = 0
        self.depth = 0

    def peek(self):
        return self.tokens[self.i]

    def advance(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, value, expected):
        kind, text, pos = self.peek()
        if text != value or kind != "op":
            shown = "end of input" if kind == "end" else repr(text)
            raise ExprSyntaxError(f"unexpected {shown}", pos, frozenset(expected))
        return self.advance()

    def enter(self, pos):
        self.depth += 1
        if self.depth > MAX_DEPTH:
            raise ExprSyntaxError("expression nested too deeply", pos)

    def expr(self):
        left = self.term()
        while self.peek()[0] == "op" and self.peek()[1] in "+-":
            _, op, pos = self.advance()
            left = BinOp(op, left, self.term(), pos)
        return left

    def term(self):
        left = self.unary()
        while self.peek()[0] == "op" and self.peek()[1] in "*/":
            _, op, pos = self.advance()
            left = BinOp(op, left, self.unary(), pos)
        return left

    def unary(self):
        kind, text, pos = self.peek()
        if kind == "op" and text == "-":
            self.advance()
            self.enter(pos)
            node = Neg(self.unary(), pos)
            self.depth -= 1
            return node
        return self.power()

    def power(self):
        base = self.atom()
        kind, text, pos = self.peek()
        if kind == "op" and text == "^":
            self.advance()
            self.enter(pos)
            node = BinOp("^", base, self.unary(), pos)
            self.depth -= 1
            return node
        return base

    def atom(self):
        kind, text, pos = self.advance()
        if kind == "num":
            value = float(text)
            if not math.isfinite(value):
                raise ExprSyntaxError(f"numeric literal {text} overflows", pos)
            return Num(value, pos)
        if kind == "name":
            if self.peek()[0] == "op" and self.peek()[1] == "(":
                if text not in FUNCTIONS:
                    raise ExprSyntaxError(f"unknown function {text!r}", pos, frozenset(FUNCTIONS))
                self.advance()
                self.enter(pos)
                args = [self.expr()]
                while self.peek()[0] == "op" and self.peek()[1] == ",":
                    self.advance()
                    args.append(self.expr())
                self.expect(")", {")", ","})
                self.depth -= 1
                arity = FUNCTIONS[text]
                if (arity > 0 and len(args) != arity) or (arity < 0 and len(args) < -arity):
                    want = arity if arity > 0 else f"at least {-arity}"
                    raise ExprSyntaxError(f"{text}() takes {want} argument(s), got {len(args)}", pos)
                return Call(text, tuple(args), pos)
            if text not in VARIABLES:
                raise ExprSyntaxError(f"unknown identifier {text!r}", pos, VARIABLES)
            return Var(text, pos)
        if kind == "op" and text == "(":
            self.enter(pos)
            node = self.expr()
            self.expect(")", {")"})
            self.depth -= 1
            return node
        shown = "end of input" if kind == "end" else repr(text)
        raise ExprSyntaxError(f"unexpected {shown}", pos, frozenset({"number", "name", "(", "-"}))


def parse_expr(text) -> object:
    """Parse ``text`` (str or UTF-8 bytes) into an AST.

    Every failure is an :class:`ExprSyntaxError` carrying a byte offset.
    """
    if isinstance(text, (bytes, bytearray)):
        try:
            text = bytes(text).decode("utf-8")
        except UnicodeDecodeError as exc:
            raise ExprSyntaxError("input is not valid UTF-8", exc.start) from None
    if not isinstance(text, str):
        raise TypeError(f"expected str or bytes, got {type(text).__name__}")
    parser = _Parser(_tokenize(text))
    node = parser.expr()
    kind, tok, pos = parser.peek()
    if kind != "end":
        raise ExprSyntaxError(f"unexpected {tok!r}", pos, frozenset({"+", "-", "*", "/", "^", "end of input"}))
    _check_tree_depth(node)
    return node


def _children(node):
    if isinstance(node, Neg):
        return (node.operand,)
    if isinstance(node, BinOp):
        return (node.left, node.right)
    if isinstance(node, Call):
        return node.args
    return ()


def _check_tree_depth(root):
    stack = [(root, 1)]
    while stack:
        node, depth = stack.pop()
        if depth > MAX_TREE_DEPTH:
            raise ExprSyntaxError("expression nested too deeply", node.pos)
        stack.extend((ch, depth + 1) for ch in _children(node))


def to_source(node) -> str:
    """Fully parenthesized source text that parses back to the same AST."""
    if isinstance(node, Num):
        return repr(node.value)
    if isinstance(node, Var):
        return node.name
    if isinstance(node, Neg):
        return f"(-{to_source(node.operand)})"
    if isinstance(node, BinOp):
        return f"({to_source(node.left)} {node.op} {to_source(node.right)})"
    if isinstance(node, Call):
        return f"{node.name}({', '.join(to_source(a) for a in node.args)})"
    raise TypeError(f"not an expression node: {node!r}")


def free_variables(node) -> set[str]:
    if isinstance(node, Var):
        return {node.name}
    if isinstance(node, Num):
        return set()
    if isinstance(node, Neg):
        return free_variables(node.operand)
    if isinstance(node, BinOp):
        return free_variables(node.left) | free_variables(node.right)
    return set().union(*(free_variables(a) for a in node.args))


def _finite(value, node, what):
    if not np.all(np.isfinite(value)):
        raise ExprEvalError(f"{what} produced a non-finite value", node.pos)
    return value


def evaluate(node, env: dict):
    """Evaluate ``node`` with variables bound in ``env`` (numbers or arrays)."""
    if isinstance(node, Num):
        return node.value
    if isinstance(node, Var):
        if node.name not in env:
            raise ExprEvalError(f"variable {node.name!r} is not bound here", node.pos)
        return np.asarray(env[node.name], dtype=float)
    if isinstance(node, Neg):
        return -evaluate(node.operand, env)
    if isinstance(node, BinOp):
        a = evaluate(node.left, env)
        b = evaluate(node.right, env)
        with np.errstate(all="ignore"):
            if node.op == "+":
                out = np.add(a, b)
            elif node.op == "-":
                out = np.subtract(a, b)
            elif node.op == "*":
                out = np.multiply(a, b)
            elif node.op == "/":
                if np.any(np.asarray(b) == 0):
                    raise ExprEvalError("division by zero", node.pos)
                out = np.divide(a, b)
            else:
                a_arr = np.asarray(a, dtype=float)
                b_arr = np.asarray(b, dtype=float)
                if np.any((a_arr < 0) & (b_arr != np.round(b_arr))):
                    raise ExprEvalError("negative base with non-integer exponent", node.pos)
                if np.any((a_arr == 0) & (b_arr < 0)):
                    raise ExprEvalError("zero raised to a negative power", node.pos)
                out = np.power(a_arr, b_arr)
        return _finite(out, node, f"operator {node.op!r}")
    if isinstance(node, Call):
        args = [np.asarray(evaluate(a, env), dtype=float) for a in node.args]
        name = node.name
        with np.errstate(all="ignore"):
            if name == "log":
                if np.any(args[0] <= 0):
                    raise ExprEvalError("log of a nonpositive value", node.pos)
                out = np.log(args[0])
            elif name == "sqrt":
                if np.any(args[0] < 0):
                    raise ExprEvalError("sqrt of a negative value", node.pos)
                out = np.sqrt(args[0])
            elif name == "min":
                out = args[0]
                for a in args[1:]:
                    out = np.minimum(out, a)
            elif name == "max":
                out = args[0]
                for a in args[1:]:
                    out = np.maximum(out, a)
            else:
                out = {"exp": np.exp, "sin": np.sin, "cos": np.cos, "tanh": np.tanh, "abs": np.abs}[name](args[0])
        return _finite(out, node, f"{name}()")
    raise TypeError(f"not an expression node: {node!r}")


class CoeffExpr:
    """A parsed expression exposed as a vectorized function of named arguments.

    >>> f = CoeffExpr("1 + 2*x", ("x", "t"))
    >>> float(f(3.0, 0.0))
    7.0
    """

    def __init__(self, text: str, args: tuple[str, ...] = ("x", "t")):
        self.text = text
        self.args = tuple(args)
        self.ast = parse_expr(text)
        unbound = free_variables(self.ast) - set(self.args)
        if unbound:
            name = sorted(unbound)[0]
            raise ExprSyntaxError(
                f"variable {name!r} is not available here (allowed: {', '.join(self.args)})",
                _first_pos(self.ast, name),
            )

    def __call__(self, *values):
        env = dict(zip(self.args, values))
        shape = np.broadcast(*[np.asarray(v) for v in values]).shape if values else ()
        return np.broadcast_to(evaluate(self.ast, env), shape).astype(float)

    @property
    def is_constant(self) -> bool:
        return not free_variables(self.ast)

    def __repr__(self):
        return f"CoeffExpr({self.text!r}, {self.args})"


def _first_pos(node, name):
    if isinstance(node, Var) and node.name == name:
        return node.pos
    for ch in _children(node):
        p = _first_pos(ch, name)
        if p is not None:
            return p
    return None
