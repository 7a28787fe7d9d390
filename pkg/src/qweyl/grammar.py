"""Text grammar for torus expressions.

Grammar (whitespace insignificant)::

    expr   := term (('+' | '-') term)*
    term   := factor (('*' | '/') factor)*
    factor := '-' factor | power
    power  := atom ('^' ['-'] integer)*
    atom   := identifier | integer | '(' expr ')'

``^`` binds tightest and takes a literal (possibly negative) integer
exponent; ``*`` and ``/`` are left-associative and order-significant;
``A/B`` means ``A * B^-1``.  Identifiers must name letters of the system or
the deformation parameter ``q``.

The printer is fully parenthesized by default so noncommutative operand
order is never ambiguous; ``compact=True`` drops parentheses that operator
precedence already implies.
"""

from __future__ import annotations

import re
from fractions import Fraction

from .core import (
    Expression,
    GeneratorSystem,
    Inv,
    Monomial,
    Prod,
    QTorusError,
    Sum,
    add,
    frac,
    inv,
    mul,
    neg,
    power,
)


class ParseError(QTorusError):
    def __init__(self, message: str, pos: int):
        super().__init__(f"{message} (at position {pos})")
        self.pos = pos


_TOKEN = re.compile(r"\s*(?:(?P<int>\d+)|(?P<ident>[A-Za-z][A-Za-z0-9_]*)|(?P<op>[-+*/^()]))")


def _tokenize(text: str) -> list[tuple[str, str, int]]:
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            stripped = text[pos:].lstrip()
            if not stripped:
                break
            raise ParseError(f"unexpected character {stripped[0]!r}", len(text) - len(stripped))
        kind = m.lastgroup
        tokens.append((kind, m.group(kind), m.start(kind)))
        pos = m.end()
    return tokens


class _Parser:
    def __init__(self, sys: GeneratorSystem, text: str):
        self.sys = sys
        self.text = text
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.tokens[self.i] if self.i < len(self.tokens) else (None, None, len(self.text))

    def take(self, kind=None, value=None):
        tok = self.peek()
        if tok[0] is None or (kind and tok[0] != kind) or (value and tok[1] != value):
            want = value or kind or "token"
            raise ParseError(f"expected {want}, found {tok[1]!r}", tok[2])
        self.i += 1
        return tok

    def parse(self) -> Expression:
        e = self.expr()
        tok = self.peek()
        if tok[0] is not None:
            raise ParseError(f"unexpected trailing {tok[1]!r}", tok[2])
        return e

    def expr(self) -> Expression:
        e = self.term()
        while True:
            kind, val, _ = self.peek()
            if kind == "op" and val in "+-":
                self.i += 1
                rhs = self.term()
                e = add(self.sys, e, rhs if val == "+" else neg(self.sys, rhs))
            else:
                return e

    def term(self) -> Expression:
        e = self.factor()
        while True:
            kind, val, _ = self.peek()
            if kind == "op" and val in "*/":
                self.i += 1
                rhs = self.factor()
                e = mul(self.sys, e, rhs) if val == "*" else frac(self.sys, e, rhs)
            else:
                return e

    def factor(self) -> Expression:
        kind, val, _ = self.peek()
        if kind == "op" and val == "-":
            self.i += 1
            return neg(self.sys, self.factor())
        return self.power()

    def power(self) -> Expression:
        e = self.atom()
        while True:
            kind, val, _ = self.peek()
            if kind == "op" and val == "^":
                self.i += 1
                sign = 1
                k2, v2, _ = self.peek()
                if k2 == "op" and v2 == "-":
                    self.i += 1
                    sign = -1
                _, digits, _ = self.take("int")
                e = power(self.sys, e, sign * int(digits))
            else:
                return e

    def atom(self) -> Expression:
        kind, val, pos = self.peek()
        if kind == "int":
            self.i += 1
            return self.sys.scalar(int(val))
        if kind == "ident":
            self.i += 1
            if val == "q":
                return self.sys.q(1)
            if val not in self.sys.index:
                raise ParseError(f"unknown letter {val!r}", pos)
            return self.sys.gen(val)
        if kind == "op" and val == "(":
            self.i += 1
            e = self.expr()
            self.take("op", ")")
            return e
        raise ParseError(f"expected expression, found {val!r}", pos)


def parse_expression(sys: GeneratorSystem, text: str) -> Expression:
    return _Parser(sys, text).parse()


# -- printing ---------------------------------------------------------------------


def _fmt_scalar(c: Fraction) -> str:
    return str(c.numerator) if c.denominator == 1 else f"{c.numerator}/{c.denominator}"


def _monomial_pieces(sys: GeneratorSystem, m: Monomial) -> list[str]:
    pieces: list[str] = []
    if m.qpow:
        pieces.append("q" if m.qpow == 1 else f"q^{m.qpow}")
    for slot, k in enumerate(m.exps):
        if k:
            name = sys.letters[slot]
            pieces.append(name if k == 1 else f"{name}^{k}")
    return pieces


def _fmt_monomial(sys: GeneratorSystem, m: Monomial) -> str:
    pieces = _monomial_pieces(sys, m)
    if not pieces:
        return _fmt_scalar(m.scalar)
    if m.scalar == 1:
        return "*".join(pieces)
    if m.scalar == -1:
        return "-" + "*".join(pieces)
    return "*".join([_fmt_scalar(m.scalar), *pieces])


def _atomic(s: str) -> bool:
    return re.fullmatch(r"[A-Za-z0-9_]+(\^-?\d+)?", s) is not None


def format_expression(sys: GeneratorSystem, e: Expression, compact: bool = False) -> str:
    """Render e; the default wraps every composite factor in parentheses."""

    def wrap(s: str) -> str:
        return s if _atomic(s) else f"({s})"

    def walk(node: Expression) -> str:
        """Bare rendering; the caller adds parentheses where needed."""
        if isinstance(node, Monomial):
            return _fmt_monomial(sys, node)
        if isinstance(node, Inv):
            return f"{wrap(walk(node.child))}^-1"
        if isinstance(node, Prod):
            parts = []
            for c in node.children:
                s = walk(c)
                if not compact:
                    s = wrap(s)
                elif isinstance(c, Sum) or s.startswith("-"):
                    s = f"({s})"
                parts.append(s)
            return "*".join(parts)
        if isinstance(node, Sum):
            if not node.children:
                return "0"
            out = []
            for k, c in enumerate(node.children):
                s = walk(c)
                if k == 0:
                    out.append(s)
                elif s.startswith("-"):
                    out.append(f" - {s[1:]}")
                else:
                    out.append(f" + {s}")
            return "".join(out)
        raise QTorusError(f"unknown node {type(node)!r}")  # pragma: no cover

    return walk(e)


# -- display folding of derived centrals --------------------------------------------


def fold_display(sys: GeneratorSystem, e: Expression) -> Expression:
    """Refold monomial central parts through derived letters for readability.

    Greedy per derived letter (lowest power first): shift the defining
    product in or out while the total central exponent weight strictly
    drops.  Only letters with purely central defining products participate,
    so no q-corrections can arise.  Semantics are preserved exactly.
    """
    ncs = sys.num_noncommuting
    foldable = [
        d for d in sorted(sys.derived, key=lambda d: d.power)
        if not any(d.product.exps[:ncs]) and d.product.qpow == 0
    ]

    def weight(exps: tuple[int, ...]) -> int:
        return sum(abs(k) for k in exps[ncs:])

    def fold_mono(m: Monomial) -> Monomial:
        exps = list(m.exps)
        changed = True
        while changed:
            changed = False
            for d in foldable:
                w = d.product.exps
                slot = sys.index[d.name]
                best_k, best_w = 0, weight(tuple(exps))
                for k in range(-8, 9):
                    if k == 0:
                        continue
                    cand = [a - k * b for a, b in zip(exps, w)]
                    cand[slot] += k * d.power
                    cw = weight(tuple(cand))
                    if cw < best_w or (cw == best_w and abs(k) < abs(best_k) and best_k):
                        best_k, best_w = k, cw
                if best_k:
                    for idx, b in enumerate(w):
                        exps[idx] -= best_k * b
                    exps[slot] += best_k * d.power
                    changed = True
        return Monomial(m.scalar, m.qpow, tuple(exps))

    def walk(node: Expression) -> Expression:
        if isinstance(node, Monomial):
            return fold_mono(node)
        if isinstance(node, Sum):
            return add(sys, *[walk(c) for c in node.children])
        if isinstance(node, Prod):
            return Prod(tuple(walk(c) for c in node.children))
        if isinstance(node, Inv):
            return inv(sys, walk(node.child))
        raise QTorusError(f"unknown node {type(node)!r}")  # pragma: no cover

    return walk(e)
