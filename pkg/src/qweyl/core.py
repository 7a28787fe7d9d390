"""Exact arithmetic for expressions over a quantum torus with central letters.

A :class:`GeneratorSystem` fixes an ordered tuple of q-commuting generators,
a tuple of central letters and an integer antisymmetric commutation matrix
``C`` with the convention

    g_i * g_j == q**C[i][j] * g_j * g_i    for i > j,

so moving a low-index letter leftward past a high-index letter costs the
exponent ``C[i][j]``.  Scalars are exact rationals and the deformation
parameter q never leaves its dedicated integer exponent slot.

Expressions are immutable DAGs with four node kinds: Monomial, Sum, Prod and
Inv.  Products of monomials collapse eagerly; everything else stays
structural until :func:`canonicalize_light`.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property
from typing import Mapping, Sequence


class QTorusError(Exception):
    """Base error for quantum torus arithmetic."""


class InverseOfZeroError(QTorusError):
    pass


class UnmappedLetterError(QTorusError):
    pass


AUTO = "auto"
ANTI = "anti"


class Expression:
    """Abstract immutable expression node."""

    __slots__ = ()


@dataclass(frozen=True)
class Monomial(Expression):
    """scalar * q**qpow * (ordered product of letter powers given by exps).

    ``exps`` runs over noncommuting generators first, then central letters,
    in the order fixed by the owning GeneratorSystem.  The zero element is
    the monomial with scalar 0 and all exponents zero.
    """

    scalar: Fraction
    qpow: int
    exps: tuple[int, ...]

    def __post_init__(self):
        if not isinstance(self.scalar, Fraction):
            object.__setattr__(self, "scalar", Fraction(self.scalar))
        if self.scalar == 0 and (self.qpow or any(self.exps)):
            object.__setattr__(self, "qpow", 0)
            object.__setattr__(self, "exps", tuple(0 for _ in self.exps))

    @property
    def is_zero(self) -> bool:
        return self.scalar == 0

    @property
    def is_unit_one(self) -> bool:
        return self.scalar == 1 and self.qpow == 0 and not any(self.exps)

    @property
    def is_pure_scalar(self) -> bool:
        return not any(self.exps)


@dataclass(frozen=True)
class Sum(Expression):
    children: tuple[Expression, ...]


@dataclass(frozen=True)
class Prod(Expression):
    children: tuple[Expression, ...]


@dataclass(frozen=True)
class Inv(Expression):
    child: Expression


@dataclass(frozen=True)
class DerivedCentral:
    """Central letter constrained by letter**power == product.

    ``product`` is a monomial over earlier letters of the system; oracles
    recompute the letter's sample value from it instead of sampling freely.
    """

    name: str
    power: int
    product: Monomial


@dataclass(frozen=True)
class GeneratorSystem:
    """Presentation data for one quantum torus with central letters."""

    name: str
    names: tuple[str, ...]
    centrals: tuple[str, ...]
    comm: tuple[tuple[int, ...], ...]
    derived: tuple[DerivedCentral, ...] = ()

    def __post_init__(self):
        n = len(self.names)
        if len(self.comm) != n or any(len(row) != n for row in self.comm):
            raise QTorusError("commutation matrix shape mismatch")
        for i in range(n):
            for j in range(n):
                if self.comm[i][j] != -self.comm[j][i]:
                    raise QTorusError("commutation matrix must be antisymmetric")
        seen = set(self.names) | set(self.centrals)
        if len(seen) != n + len(self.centrals) or "q" in seen:
            raise QTorusError("letter names must be distinct and distinct from q")
        for d in self.derived:
            if d.name not in self.centrals:
                raise QTorusError(f"derived letter {d.name!r} is not a central letter")
            if d.power < 1:
                raise QTorusError("derived power must be >= 1")

    @cached_property
    def letters(self) -> tuple[str, ...]:
        return self.names + self.centrals

    @cached_property
    def index(self) -> dict[str, int]:
        return {name: k for k, name in enumerate(self.letters)}

    @property
    def num_noncommuting(self) -> int:
        return len(self.names)

    @property
    def width(self) -> int:
        return len(self.letters)

    @cached_property
    def derived_by_name(self) -> dict[str, DerivedCentral]:
        return {d.name: d for d in self.derived}

    # -- convenience constructors -------------------------------------------------

    @cached_property
    def zero(self) -> Monomial:
        return Monomial(Fraction(0), 0, tuple(0 for _ in range(self.width)))

    @cached_property
    def one(self) -> Monomial:
        return Monomial(Fraction(1), 0, tuple(0 for _ in range(self.width)))

    def scalar(self, c) -> Monomial:
        return Monomial(Fraction(c), 0, tuple(0 for _ in range(self.width)))

    def q(self, k: int = 1) -> Monomial:
        return Monomial(Fraction(1), k, tuple(0 for _ in range(self.width)))

    def gen(self, name: str, k: int = 1) -> Monomial:
        exps = [0] * self.width
        exps[self.index[name]] = k
        return Monomial(Fraction(1), 0, tuple(exps))

    def mono(self, powers: Mapping[str, int] | None = None, *, scalar=1, qpow: int = 0) -> Monomial:
        exps = [0] * self.width
        for name, k in (powers or {}).items():
            exps[self.index[name]] += k
        return Monomial(Fraction(scalar), qpow, tuple(exps))


# -- monomial arithmetic ----------------------------------------------------------


def _inversion_form(sys: GeneratorSystem, left: Sequence[int], right: Sequence[int]) -> int:
    """Sum over i > j of left[i] * right[j] * C[i][j] (noncommuting slots only)."""
    total = 0
    comm = sys.comm
    for i in range(sys.num_noncommuting):
        li = left[i]
        if not li:
            continue
        row = comm[i]
        for j in range(i):
            rj = right[j]
            if rj:
                total += li * rj * row[j]
    return total


def normal_order_product(sys: GeneratorSystem, m1: Monomial, m2: Monomial) -> Monomial:
    """Product of two normal-ordered monomials, renormalized to normal order."""
    if m1.is_zero or m2.is_zero:
        return sys.zero
    qcorr = _inversion_form(sys, m1.exps, m2.exps)
    exps = tuple(a + b for a, b in zip(m1.exps, m2.exps))
    return Monomial(m1.scalar * m2.scalar, m1.qpow + m2.qpow + qcorr, exps)


def monomial_inverse(sys: GeneratorSystem, m: Monomial) -> Monomial:
    if m.is_zero:
        raise InverseOfZeroError("inverse of zero monomial")
    self_form = _inversion_form(sys, m.exps, m.exps)
    exps = tuple(-e for e in m.exps)
    return Monomial(Fraction(1) / m.scalar, -m.qpow + self_form, exps)


def monomial_power(sys: GeneratorSystem, m: Monomial, k: int) -> Monomial:
    if k == 0:
        return sys.one
    if k < 0:
        return monomial_power(sys, monomial_inverse(sys, m), -k)
    if m.is_zero:
        return sys.zero
    self_form = _inversion_form(sys, m.exps, m.exps)
    qpow = k * m.qpow + self_form * (k * (k - 1) // 2)
    return Monomial(m.scalar**k, qpow, tuple(k * e for e in m.exps))


# -- structural constructors -------------------------------------------------------


def add(sys: GeneratorSystem, *exprs: Expression) -> Expression:
    """Sum with flattening; zero monomials are dropped."""
    flat: list[Expression] = []
    for e in exprs:
        if isinstance(e, Sum):
            flat.extend(e.children)
        elif isinstance(e, Monomial) and e.is_zero:
            continue
        else:
            flat.append(e)
    if not flat:
        return sys.zero
    if len(flat) == 1:
        return flat[0]
    return Sum(tuple(flat))


def mul(sys: GeneratorSystem, *exprs: Expression) -> Expression:
    """Product with flattening; adjacent monomial factors collapse."""
    flat: list[Expression] = []
    for e in exprs:
        if isinstance(e, Prod):
            flat.extend(e.children)
        else:
            flat.append(e)
    out: list[Expression] = []
    for e in flat:
        if isinstance(e, Monomial):
            if e.is_zero:
                return sys.zero
            if e.is_unit_one:
                continue
            if out and isinstance(out[-1], Monomial):
                out[-1] = normal_order_product(sys, out[-1], e)
                continue
        out.append(e)
    if not out:
        return sys.one
    if len(out) == 1:
        return out[0]
    return Prod(tuple(out))


def neg(sys: GeneratorSystem, e: Expression) -> Expression:
    return mul(sys, sys.scalar(-1), e)


def sub(sys: GeneratorSystem, e1: Expression, e2: Expression) -> Expression:
    return add(sys, e1, neg(sys, e2))


def inv(sys: GeneratorSystem, e: Expression) -> Expression:
    """Inverse node; monomial inverses collapse to a monomial."""
    if isinstance(e, Monomial):
        return monomial_inverse(sys, e)
    if isinstance(e, Inv):
        return e.child
    return Inv(e)


def power(sys: GeneratorSystem, e: Expression, k: int) -> Expression:
    """Integer power; negative k goes through the inverse."""
    if isinstance(e, Monomial):
        return monomial_power(sys, e, k)
    if k == 0:
        return sys.one
    if k < 0:
        return power(sys, inv(sys, e), -k)
    return mul(sys, *([e] * k))


def frac(sys: GeneratorSystem, num: Expression, den: Expression) -> Expression:
    """Left-to-right division num * den**-1 (order preserved, nothing commuted)."""
    return mul(sys, num, inv(sys, den))


# -- endomorphisms and substitution -------------------------------------------------


@dataclass(frozen=True)
class Endomorphism:
    """A named (anti)automorphism given by its images on every letter and q.

    ``parity`` is AUTO or ANTI; anti-automorphisms reverse products during
    substitution.  Images must cover every noncommuting generator, every
    central letter and "q".
    """

    sys: GeneratorSystem
    name: str
    parity: str
    images: Mapping[str, Expression]

    def __post_init__(self):
        if self.parity not in (AUTO, ANTI):
            raise QTorusError(f"bad parity {self.parity!r}")
        missing = [x for x in (*self.sys.letters, "q") if x not in self.images]
        if missing:
            raise UnmappedLetterError(f"{self.name}: unmapped letters {missing}")

    def __call__(self, e: Expression) -> Expression:
        return substitute(self.sys, e, self)

    def __repr__(self):
        return f"Endomorphism({self.name!r}, {self.parity})"


def make_endomorphism(
    sys: GeneratorSystem,
    name: str,
    images: Mapping[str, Expression],
    parity: str = AUTO,
) -> Endomorphism:
    """Fill identity images for absent letters and derive power-1 central images.

    A derived central with ``power == 1`` can always take its image from the
    defining product; derived letters with higher power need explicit images.
    """
    table = dict(images)
    table.setdefault("q", sys.q(1))
    pending: list[DerivedCentral] = []
    for letter in sys.letters:
        if letter in table:
            continue
        d = sys.derived_by_name.get(letter)
        if d is not None:
            if d.power != 1:
                raise UnmappedLetterError(
                    f"{name}: derived letter {d.name} (power {d.power}) needs an explicit image"
                )
            pending.append(d)
            continue
        table[letter] = sys.gen(letter)
    for d in pending:
        # defining products reference only non-derived letters, so pending
        # letters may be stubbed while the product is pushed through
        stubs = {e.name: sys.one for e in pending if e.name not in table}
        partial = Endomorphism(sys, name + "#partial", parity, {**table, **stubs})
        table[d.name] = substitute(sys, d.product, partial)
    return Endomorphism(sys, name, parity, table)


def substitute(sys: GeneratorSystem, e: Expression, phi: Endomorphism) -> Expression:
    """Apply phi structurally; anti parity reverses every product.

    Monomials are first expanded as ordered products of single-letter powers
    (in system order, scalar and q-power in front), then each power maps
    through phi.
    """
    images = phi.images
    anti = phi.parity == ANTI
    memo: dict[int, Expression] = {}

    def walk(node: Expression) -> Expression:
        key = id(node)
        hit = memo.get(key)
        if hit is not None:
            return hit
        if isinstance(node, Monomial):
            factors: list[Expression] = []
            if node.qpow:
                factors.append(power(sys, images["q"], node.qpow))
            for slot, k in enumerate(node.exps):
                if k:
                    factors.append(power(sys, images[sys.letters[slot]], k))
            if anti:
                factors.reverse()
            out = mul(sys, Monomial(node.scalar, 0, sys.zero.exps), *factors)
        elif isinstance(node, Sum):
            out = add(sys, *[walk(c) for c in node.children])
        elif isinstance(node, Prod):
            kids = [walk(c) for c in node.children]
            if anti:
                kids.reverse()
            out = mul(sys, *kids)
        elif isinstance(node, Inv):
            out = inv(sys, walk(node.child))
        else:  # pragma: no cover
            raise QTorusError(f"unknown node {type(node)!r}")
        memo[key] = out
        return out

    return walk(e)


# -- light canonicalization ---------------------------------------------------------


def canonicalize_light(sys: GeneratorSystem, e: Expression) -> Expression:
    """Flatten, merge monomials, drop zero summands and unit factors.

    Central monomial factors commute with everything and are pulled to the
    front of a product.  No expansion and no fraction simplification: the
    result is semantically equal to the input.
    """
    memo: dict[int, Expression] = {}

    def walk(node: Expression) -> Expression:
        key = id(node)
        hit = memo.get(key)
        if hit is not None:
            return hit
        if isinstance(node, Monomial):
            out: Expression = node
        elif isinstance(node, Inv):
            child = walk(node.child)
            out = inv(sys, child)
        elif isinstance(node, Prod):
            kids: list[Expression] = []
            for c in node.children:
                w = walk(c)
                if isinstance(w, Prod):
                    kids.extend(w.children)
                else:
                    kids.append(w)
            central = sys.one
            rest: list[Expression] = []
            ncslots = sys.num_noncommuting
            for w in kids:
                if isinstance(w, Monomial) and not any(w.exps[:ncslots]):
                    central = normal_order_product(sys, central, w)
                    continue
                # cancel adjacent x * Inv(x) / Inv(x) * x pairs
                if rest:
                    top = rest[-1]
                    if (isinstance(w, Inv) and w.child == top) or (
                        isinstance(top, Inv) and top.child == w
                    ):
                        rest.pop()
                        continue
                    if isinstance(w, Monomial) and isinstance(top, Monomial):
                        rest[-1] = normal_order_product(sys, top, w)
                        continue
                rest.append(w)
            out = mul(sys, central, *rest)
        elif isinstance(node, Sum):
            kids = []
            for c in node.children:
                w = walk(c)
                if isinstance(w, Sum):
                    kids.extend(w.children)
                else:
                    kids.append(w)
            merged: dict[tuple[int, tuple[int, ...]], Fraction] = {}
            others: list[Expression] = []
            for w in kids:
                if isinstance(w, Monomial):
                    if w.is_zero:
                        continue
                    mkey = (w.qpow, w.exps)
                    merged[mkey] = merged.get(mkey, Fraction(0)) + w.scalar
                else:
                    others.append(w)
            monos = [
                Monomial(c, qpow, exps) for (qpow, exps), c in merged.items() if c != 0
            ]
            out = add(sys, *monos, *others)
        else:  # pragma: no cover
            raise QTorusError(f"unknown node {type(node)!r}")
        memo[key] = out
        return out

    return walk(e)


def expand_derived(sys: GeneratorSystem, e: Expression) -> Expression:
    """Rewrite derived letters through their defining products where possible.

    Power-1 letters are eliminated; a power-2 letter keeps exponent 0 or 1
    after pulling out squares.  Useful for exact monomial comparisons.
    """

    def expand_mono(m: Monomial) -> Expression:
        factors: list[Expression] = []
        exps = list(m.exps)
        for d in sys.derived:
            slot = sys.index[d.name]
            k = exps[slot]
            if not k:
                continue
            folds, keep = divmod(k, d.power)
            exps[slot] = keep
            if folds:
                factors.append(monomial_power(sys, d.product, folds))
        base = Monomial(m.scalar, m.qpow, tuple(exps))
        return mul(sys, base, *factors) if factors else base

    def walk(node: Expression) -> Expression:
        if isinstance(node, Monomial):
            return expand_mono(node)
        if isinstance(node, Sum):
            return add(sys, *[walk(c) for c in node.children])
        if isinstance(node, Prod):
            return mul(sys, *[walk(c) for c in node.children])
        if isinstance(node, Inv):
            return inv(sys, walk(node.child))
        raise QTorusError(f"unknown node {type(node)!r}")  # pragma: no cover

    return canonicalize_light(sys, walk(e))


def structurally_equal(e1: Expression, e2: Expression) -> bool:
    """Node-by-node equality of two DAGs (no algebraic reasoning)."""
    return e1 == e2
