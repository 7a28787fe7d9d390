"""Exact series verification for infinite-product operator identities.

Two layers share this module.

The truncated-series layer models elements of the completed skew field as a
unit monomial times a finite coefficient dict graded by q-degree and central
degree.  It provides q-Pochhammer products, the multiplication operator psi,
theta, and a coefficientwise identity check on a two-sided central window
(|central degree| <= cmax, with an internal margin so reported cells are
exact).  Factors with negative q-degree are rewritten via unit extraction so
all expansions follow the Laurent-in-q convention.  It is the oracle for
one-step recurrences, pseudoconstant checks, and closed-form expansions.

The atom layer verifies product identities between words in Pochhammer-type
factors exactly, with no guard margins.  Each side of an identity is an
ordered list of atoms

    poch     (w; q^d)_inf        = sum_n q^{d n(n-1)/2} w^n / (q^d; q^d)_n
    poch_inv (w; q^d)_inf^{-1}   = sum_n (-1)^n      w^n / (q^d; q^d)_n
    theta    sum over all integers j of q^{d j(j-1)/2} w^{-j}

and a windowed coefficient of the product is a sum over index tuples whose
normal-ordering q-corrections are computed exactly.  psi factors expand as
four one-sided Pochhammer atoms (numerator pair and inverted denominator
pair); theta atoms exist for triple-product self-tests

    (q^d M; q^d)_inf (M^{-1}; q^d)_inf = theta_d(M) / (q^d; q^d)_inf

but are avoided in identity sides because their two-sided index ranges
expand far more slowly.  Before expanding, a finiteness gate checks that no
infinite family of index tuples can feed one windowed cell: directions that
preserve every letter and central exponent are computed exactly, the
valuation quadratic form is restricted to them, and any flat cone-feasible
direction with nonincreasing valuation aborts the check with a divergence
certificate.  Expansion bounds are then sealed by re-running with widened
index boxes and demanding identical windows.

Coefficients are integers, or pairs of integers u + v*zeta when factors
carry a cube root of unity; this keeps the hot loop on int64 numpy
convolutions of partition series.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Iterable, Sequence

import numpy as np

from .core import (
    GeneratorSystem,
    Monomial,
    QTorusError,
    monomial_inverse,
    monomial_power,
    normal_order_product,
)


class NonConvergentError(QTorusError):
    """The requested object does not stabilize in the truncated completion."""


_FIELD_BITS = 16
_HALF = 1 << (_FIELD_BITS - 1)
_MASK = (1 << _FIELD_BITS) - 1


class Eisenstein:
    """Exact coefficient u + v*zeta with zeta a primitive cube root of unity.

    Reduction rule zeta^2 = -1 - zeta.  Mixes freely with int and Fraction
    coefficients in series arithmetic; falls back to the rational value when
    v = 0 for equality and hashing.
    """

    __slots__ = ("u", "v")

    def __init__(self, u, v=0):
        self.u = u
        self.v = v

    def __add__(self, other):
        if isinstance(other, Eisenstein):
            return Eisenstein(self.u + other.u, self.v + other.v)
        return Eisenstein(self.u + other, self.v)

    __radd__ = __add__

    def __mul__(self, other):
        if isinstance(other, Eisenstein):
            cross = self.v * other.v
            return Eisenstein(
                self.u * other.u - cross,
                self.u * other.v + self.v * other.u - cross,
            )
        return Eisenstein(self.u * other, self.v * other)

    __rmul__ = __mul__

    def __neg__(self):
        return Eisenstein(-self.u, -self.v)

    def __sub__(self, other):
        return self + (-other if isinstance(other, Eisenstein) else Eisenstein(-other))

    def __rsub__(self, other):
        return (-self) + other

    def __pow__(self, k: int):
        acc = Eisenstein(1)
        base = self
        for _ in range(k):
            acc = acc * base
        return acc

    def __bool__(self):
        return bool(self.u) or bool(self.v)

    def __eq__(self, other):
        if isinstance(other, Eisenstein):
            return self.u == other.u and self.v == other.v
        return self.v == 0 and self.u == other

    def __hash__(self):
        if self.v == 0:
            return hash(self.u)
        return hash((self.u, self.v))

    def __repr__(self):
        if self.v == 0:
            return repr(self.u)
        return f"({self.u}{self.v:+}z)"


ZETA = Eisenstein(0, 1)
ZETA2 = Eisenstein(-1, -1)


# ---------------------------------------------------------------------------
# truncated-series layer
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SeriesParams:
    """Truncation region for stored (q-exponent, exponent vector) cells.

    q-exponents lie in [-margin, qmax + margin); the guard margin absorbs
    reordering twists around the reported window [0, qmax), and defaults to
    maxC * (qmax + cmax).  With ``central_truncation`` on, terms with total
    central degree beyond cmax + cmargin in absolute value are dropped; the
    central margin (default qmax + cmax) keeps every reported cell exact,
    because dropped content can only reenter the window with a torus
    exponent shifted past the margin.  With it off no central bound applies;
    finiteness must then come from the q-grading alone.
    """

    qmax: int
    cmax: int
    central_truncation: bool = True
    qmargin: int | None = None
    cmargin: int | None = None

    def margin_for(self, sys: GeneratorSystem) -> int:
        if self.qmargin is not None:
            return self.qmargin
        maxc = 0
        n = sys.num_noncommuting
        for i in range(n):
            for j in range(n):
                maxc = max(maxc, abs(sys.comm[i][j]))
        return maxc * (self.qmax + self.cmax)

    def qhigh_for(self, sys: GeneratorSystem) -> int:
        return self.qmax + self.margin_for(sys)

    def qlow_for(self, sys: GeneratorSystem) -> int:
        return -self.margin_for(sys)

    def cbound_for(self) -> int:
        margin = self.cmargin if self.cmargin is not None else self.qmax + self.cmax
        return self.cmax + margin


def _coeff(x):
    if isinstance(x, Fraction) and x.denominator == 1:
        return int(x)
    return x


def _cdeg(sys: GeneratorSystem, exps: Sequence[int]) -> int:
    return sum(exps[sys.num_noncommuting :])


def _twist_triples(sys: GeneratorSystem) -> tuple[tuple[int, int, int], ...]:
    out = []
    for i in range(sys.num_noncommuting):
        for j in range(i):
            c = sys.comm[i][j]
            if c:
                out.append((i, j, c))
    return tuple(out)


class TruncatedSeries:
    """Immutable truncated series: unit monomial times a finite coefficient map.

    ``terms`` maps a packed (q-exponent, exponent vector) key to an exact
    coefficient; ``factors``, when present, is a tuple of primitive series
    whose ordered product equals this series (used to fold products cheaply).
    """

    __slots__ = ("sys", "params", "unit", "_terms", "factors", "_qhigh", "_qlow")

    def __init__(self, sys, params, unit, terms, factors=None):
        self.sys = sys
        self.params = params
        self.unit = unit
        self._terms = terms
        self.factors = factors
        self._qhigh = params.qhigh_for(sys)
        self._qlow = params.qlow_for(sys)

    # -- packing -------------------------------------------------------------

    def _pack(self, qexp: int, exps: Sequence[int]) -> int:
        key = 0
        for slot, e in enumerate(exps):
            key |= (e + _HALF) << (_FIELD_BITS * slot)
        return key | ((qexp + _HALF) << (_FIELD_BITS * len(exps)))

    def _unpack(self, key: int) -> tuple[int, tuple[int, ...]]:
        width = self.sys.width
        exps = tuple(((key >> (_FIELD_BITS * s)) & _MASK) - _HALF for s in range(width))
        qexp = ((key >> (_FIELD_BITS * width)) & _MASK) - _HALF
        return qexp, exps

    @property
    def terms(self) -> dict:
        if self._terms is None:
            folded = _fold(one(self.sys, self.params), self.factors)
            self._terms = folded._terms
            self.unit = folded.unit
        return self._terms

    @property
    def qmax(self) -> int:
        return self.params.qmax

    @property
    def cmax(self) -> int:
        return self.params.cmax

    def coefficients(self) -> dict[tuple[int, tuple[int, ...]], object]:
        """Unpacked {(q-exponent, exponent vector): coefficient} view."""
        return {self._unpack(k): c for k, c in self.terms.items()}

    def window_coefficients(self, qbound: int | None = None) -> dict:
        """Coefficients restricted to the reliable window q-exponent < qmax."""
        bound = self.params.qmax if qbound is None else qbound
        return {
            (k, e): c
            for (k, e), c in self.coefficients().items()
            if k < bound
        }

    def __repr__(self):
        n = "lazy" if self._terms is None else str(len(self._terms))
        return f"TruncatedSeries({self.sys.name}, unit={self.unit!r}, terms={n})"


def one(sys: GeneratorSystem, params: SeriesParams) -> TruncatedSeries:
    s = TruncatedSeries(sys, params, sys.one, {})
    s._terms = {s._pack(0, sys.one.exps): 1}
    return s


def monomial_series(sys: GeneratorSystem, params: SeriesParams, m: Monomial) -> TruncatedSeries:
    """The invertible monomial m as a series (everything in the unit)."""
    if m.is_zero:
        raise NonConvergentError("zero monomial is not an invertible unit")
    s = TruncatedSeries(sys, params, m, {})
    s._terms = {s._pack(0, sys.one.exps): 1}
    return s


def _insert_filtered(series: TruncatedSeries, out: dict, qexp: int, exps, coeff) -> None:
    sys, params = series.sys, series.params
    if qexp >= series._qhigh or qexp < series._qlow:
        return
    if params.central_truncation:
        if abs(_cdeg(sys, exps)) > params.cbound_for():
            return
    key = series._pack(qexp, exps)
    new = out.get(key, 0) + coeff
    if new:
        out[key] = new
    elif key in out:
        del out[key]


def binomial_factor(sys: GeneratorSystem, params: SeriesParams, m: Monomial) -> TruncatedSeries:
    """The factor (1 + m); units with negative q-degree are extracted as w(1 + w^{-1})."""
    if m.is_zero:
        return one(sys, params)
    if m.qpow < 0:
        rest = monomial_inverse(sys, m)
        series = TruncatedSeries(sys, params, m, {})
        out: dict = {series._pack(0, sys.one.exps): 1}
        _insert_filtered(series, out, rest.qpow, rest.exps, _coeff(rest.scalar))
        series._terms = out
        return series
    series = TruncatedSeries(sys, params, sys.one, {})
    out = {series._pack(0, sys.one.exps): 1}
    _insert_filtered(series, out, m.qpow, m.exps, _coeff(m.scalar))
    series._terms = out
    return series


def binomial_inverse(sys: GeneratorSystem, params: SeriesParams, m: Monomial) -> TruncatedSeries:
    """Geometric inverse (1 + m)^{-1}; needs a strictly positive grading on m."""
    if m.is_zero:
        return one(sys, params)
    if m.qpow < 0:
        minv = monomial_inverse(sys, m)
        inner = binomial_inverse(sys, params, minv)
        unit = normal_order_product(sys, minv, inner.unit)
        return TruncatedSeries(sys, params, unit, dict(inner.terms))
    cd = _cdeg(sys, m.exps)
    self_form = monomial_power(sys, m, 2).qpow - 2 * m.qpow
    if self_form < 0:
        raise NonConvergentError("geometric series in a monomial with negative self-twist")
    qhigh = params.qhigh_for(sys)
    if m.qpow >= 1:
        kmax = (qhigh - 1) // m.qpow
    elif params.central_truncation and cd != 0:
        kmax = params.cbound_for() // abs(cd)
    else:
        raise NonConvergentError(
            "factor (1 + m) has no strictly positive grading component; "
            "clear it to the other side instead of inverting"
        )
    series = TruncatedSeries(sys, params, sys.one, {})
    out: dict = {}
    sign = 1
    for k in range(kmax + 1):
        mk = monomial_power(sys, m, k)
        if mk.qpow >= qhigh:
            break
        _insert_filtered(series, out, mk.qpow, mk.exps, _coeff(sign * mk.scalar))
        sign = -sign
    series._terms = out
    return series


# -- products ----------------------------------------------------------------


def _expand_items(series: TruncatedSeries, conj_exps: Sequence[int] | None):
    """Per-term tuples (packed, qexp, exps, cdeg, coeff), optionally conjugated.

    Conjugation by a unit u with exponent vector f shifts a term's q-exponent
    by tw(e, f) - tw(f, e) and leaves exponents alone: X^e u = q^shift u X^e.
    """
    sys = series.sys
    triples = _twist_triples(sys)
    n0 = sys.num_noncommuting
    width = sys.width
    qslot = _FIELD_BITS * width
    items = []
    for key, coeff in series.terms.items():
        qexp, exps = series._unpack(key)
        if conj_exps is not None:
            shift = 0
            for i, j, c in triples:
                shift += c * (exps[i] * conj_exps[j] - conj_exps[i] * exps[j])
            if shift:
                qexp += shift
                key += shift << qslot
        items.append((key, qexp, exps, sum(exps[n0:]), coeff))
    return items


def mul_raw(a: TruncatedSeries, b: TruncatedSeries) -> TruncatedSeries:
    """Product of two materialized series (no factor folding)."""
    sys, params = a.sys, a.params
    if b.sys is not sys:
        raise ValueError("series systems differ")
    unit = normal_order_product(sys, a.unit, b.unit)
    left = _expand_items(a, b.unit.exps)
    right = _expand_items(b, None)
    result = TruncatedSeries(sys, params, unit, {})
    qhigh = result._qhigh
    qlow = result._qlow
    cone = params.central_truncation
    cbound = params.cbound_for()
    width = sys.width
    qslot = _FIELD_BITS * width
    zero_key = result._pack(0, sys.one.exps)
    out: dict = {}
    triples = _twist_triples(sys)
    if len(triples) == 1:
        (ti, tj, tc) = triples[0]
        for k1, q1, e1, c1, x1 in left:
            a1 = e1[ti]
            for k2, q2, e2, c2, x2 in right:
                tw = tc * a1 * e2[tj]
                q = q1 + q2 + tw
                if q >= qhigh or q < qlow:
                    continue
                if cone and abs(c1 + c2) > cbound:
                    continue
                key = k1 + k2 - zero_key + (tw << qslot)
                new = out.get(key, 0) + x1 * x2
                if new:
                    out[key] = new
                elif key in out:
                    del out[key]
    else:
        for k1, q1, e1, c1, x1 in left:
            for k2, q2, e2, c2, x2 in right:
                tw = 0
                for i, j, c in triples:
                    tw += c * e1[i] * e2[j]
                q = q1 + q2 + tw
                if q >= qhigh or q < qlow:
                    continue
                if cone and abs(c1 + c2) > cbound:
                    continue
                key = k1 + k2 - zero_key + (tw << qslot)
                new = out.get(key, 0) + x1 * x2
                if new:
                    out[key] = new
                elif key in out:
                    del out[key]
    result._terms = out
    return result


def _fold(acc: TruncatedSeries, factors: Iterable[TruncatedSeries]) -> TruncatedSeries:
    for f in factors:
        if f.factors is not None:
            acc = _fold(acc, f.factors)
        else:
            acc = mul_raw(acc, f)
    return acc


def mul(a: TruncatedSeries, b: TruncatedSeries) -> TruncatedSeries:
    if b.factors is not None:
        return _fold(a, b.factors)
    return mul_raw(a, b)


def _rebase_terms(target_unit: Monomial, s: TruncatedSeries) -> dict:
    """Terms of s rewritten relative to target_unit: s = target_unit * (delta * terms)."""
    sys = s.sys
    delta = normal_order_product(sys, monomial_inverse(sys, target_unit), s.unit)
    if delta.is_unit_one:
        return dict(s.terms)
    shell = TruncatedSeries(sys, s.params, target_unit, {})
    out: dict = {}
    dscal = _coeff(delta.scalar)
    for key, coeff in s.terms.items():
        qexp, exps = s._unpack(key)
        moved = normal_order_product(sys, delta, Monomial(Fraction(1), qexp, exps))
        _insert_filtered(shell, out, moved.qpow, moved.exps, dscal * coeff if dscal != 1 else coeff)
    return out


def add(a: TruncatedSeries, b: TruncatedSeries, sign: int = 1) -> TruncatedSeries:
    sys, params = a.sys, a.params
    result = TruncatedSeries(sys, params, a.unit, {})
    out = dict(a.terms)
    for key, coeff in _rebase_terms(a.unit, b).items():
        new = out.get(key, 0) + sign * coeff
        if new:
            out[key] = new
        elif key in out:
            del out[key]
    result._terms = out
    return result


def sub(a: TruncatedSeries, b: TruncatedSeries) -> TruncatedSeries:
    return add(a, b, sign=-1)


# -- named infinite products ---------------------------------------------------


def _torus_free(sys: GeneratorSystem, m: Monomial) -> bool:
    return all(e == 0 for e in m.exps[: sys.num_noncommuting])


def _check_convergent(sys: GeneratorSystem, params: SeriesParams, x: Monomial) -> None:
    if x.is_zero:
        raise NonConvergentError("zero argument")
    if _torus_free(sys, x) and x.qpow <= 0 and _cdeg(sys, x.exps) == 0:
        raise NonConvergentError(
            "argument has no strictly positive grading component; the product does not stabilize"
        )


def _pochhammer_monomials(sys, params, x: Monomial, d: int):
    if d < 1:
        raise ValueError("pochhammer base exponent must be >= 1")
    _check_convergent(sys, params, x)
    qhigh = params.qhigh_for(sys)
    out = []
    m = 0
    while x.qpow + d * m < qhigh:
        out.append(Monomial(x.scalar, x.qpow + d * m, x.exps))
        m += 1
    return out


def qpochhammer(sys: GeneratorSystem, x: Monomial, d: int, params: SeriesParams) -> TruncatedSeries:
    """(x, q^d)_infinity: the product of (1 + x q^{dm}) over m >= 0, truncated."""
    if params.central_truncation and abs(_cdeg(sys, x.exps)) > params.cbound_for():
        return one(sys, params)
    facs = tuple(
        binomial_factor(sys, params, mm) for mm in _pochhammer_monomials(sys, params, x, d)
    )
    return TruncatedSeries(sys, params, sys.one, None, factors=facs)


def qpochhammer_inverse(
    sys: GeneratorSystem, x: Monomial, d: int, params: SeriesParams
) -> TruncatedSeries:
    """Inverse of (x, q^d)_infinity as a product of geometric factor inverses."""
    if params.central_truncation and abs(_cdeg(sys, x.exps)) > params.cbound_for():
        return one(sys, params)
    mons = _pochhammer_monomials(sys, params, x, d)
    facs = tuple(binomial_inverse(sys, params, mm) for mm in reversed(mons))
    return TruncatedSeries(sys, params, sys.one, None, factors=facs)


def psi(
    sys: GeneratorSystem,
    z: Monomial,
    M: Monomial,
    d: int,
    params: SeriesParams,
) -> TruncatedSeries:
    """Multiplication operator: (q^d M)(M^{-1}) Pochhammers over those with z inserted.

    Requires z purely central with nonzero central degree (denominator
    factors with no q-grading are inverted geometrically in the z-graded
    direction, finite per cell for either sign) and central truncation on.
    Factors whose monomial has negative q-degree are rewritten through the
    unit extraction in ``binomial_inverse``, which expands them in the
    q-adically convergent direction; the result is the coefficientwise
    expansion of the operator in the Laurent-in-q completion.
    """
    if not _torus_free(sys, z):
        raise NonConvergentError("psi parameter z must be purely central")
    if _cdeg(sys, z.exps) == 0:
        raise NonConvergentError("psi parameter z needs nonzero central degree")
    if not params.central_truncation:
        raise NonConvergentError("psi needs central truncation for its z-geometric inverses")
    qd_m = Monomial(M.scalar, M.qpow + d, M.exps)
    m_inv = monomial_inverse(sys, M)
    z_qd_m = normal_order_product(sys, z, qd_m)
    z_m_inv = normal_order_product(sys, z, m_inv)
    facs = (
        qpochhammer(sys, qd_m, d, params).factors
        + qpochhammer(sys, m_inv, d, params).factors
        + qpochhammer_inverse(sys, z_qd_m, d, params).factors
        + qpochhammer_inverse(sys, z_m_inv, d, params).factors
    )
    return TruncatedSeries(sys, params, sys.one, None, factors=facs)


def theta(sys: GeneratorSystem, x: Monomial, params: SeriesParams) -> TruncatedSeries:
    """theta(x) = (x, q)_infinity (q x^{-1}, q)_infinity."""
    _check_convergent(sys, params, x)
    xinv = monomial_inverse(sys, x)
    qxinv = Monomial(xinv.scalar, xinv.qpow + 1, xinv.exps)
    facs = (
        qpochhammer(sys, x, 1, params).factors
        + qpochhammer(sys, qxinv, 1, params).factors
    )
    return TruncatedSeries(sys, params, sys.one, None, factors=facs)


# -- identity verification ------------------------------------------------------


@dataclass(frozen=True)
class SeriesReport:
    """Outcome of a coefficientwise identity check.

    ``diffs`` lists the nonzero coefficients of LHS - RHS inside the reliable
    window (q-exponent in [0, qmax)), each as (q-exponent, exponent vector,
    coefficient); empty means the identity holds to truncation.
    """

    passed: bool
    diffs: tuple
    qmax: int
    cmax: int
    lhs_terms: int
    rhs_terms: int

    def describe(self) -> str:
        if self.passed:
            return f"identity holds to (qmax, cmax) = ({self.qmax}, {self.cmax})"
        head = ", ".join(f"q^{k} X^{list(e)}: {c}" for k, e, c in self.diffs[:3])
        return f"{len(self.diffs)} nonzero coefficients, e.g. {head}"


def _as_series(sys, params, item) -> TruncatedSeries:
    if isinstance(item, TruncatedSeries):
        return item
    if isinstance(item, Monomial):
        return monomial_series(sys, params, item)
    raise TypeError(f"cannot interpret {item!r} as a series factor")


def fold_product(sys: GeneratorSystem, params: SeriesParams, items: Sequence) -> TruncatedSeries:
    """Fold a factor list (series or invertible monomials) left to right."""
    acc = one(sys, params)
    for item in items:
        acc = mul(acc, _as_series(sys, params, item))
    return acc


def verify_identity(
    sys: GeneratorSystem,
    lhs: Sequence,
    rhs: Sequence,
    params: SeriesParams,
    torus_bound: int | None = None,
) -> SeriesReport:
    """Fold both factor lists in order, subtract, and report nonzero coefficients.

    ``torus_bound`` restricts the compared window to terms whose noncommuting
    exponents are at most the bound in absolute value.  Sound for products
    whose torus exponents stay in one cone per letter; mixed-cone products
    belong to the atom layer below.
    """
    left = fold_product(sys, params, lhs)
    right = fold_product(sys, params, rhs)
    diff = sub(left, right)
    n0 = sys.num_noncommuting
    bad = []
    for (qexp, exps), coeff in diff.coefficients().items():
        if qexp >= params.qmax or qexp < 0:
            continue
        if params.central_truncation and abs(sum(exps[n0:])) > params.cmax:
            continue
        if torus_bound is not None and any(abs(e) > torus_bound for e in exps[:n0]):
            continue
        bad.append((qexp, exps, coeff))
    bad.sort(key=lambda t: (t[0], t[1]))
    return SeriesReport(
        passed=not bad,
        diffs=tuple(bad),
        qmax=params.qmax,
        cmax=params.cmax,
        lhs_terms=len(left.terms),
        rhs_terms=len(right.terms),
    )


# ---------------------------------------------------------------------------
# atom layer
# ---------------------------------------------------------------------------


_ATOM_KINDS = ("poch", "poch_inv", "theta")


@dataclass(frozen=True)
class Atom:
    """One primitive factor of an exact windowed product expansion.

    ``w`` is the argument monomial (for theta the letter monomial whose
    negative powers are summed), ``d`` the base exponent (series in q^d), and
    ``zeta_exp`` decorates w with a cube root of unity: the index-n term
    carries an extra zeta^(zeta_exp * n) (theta: zeta^(-zeta_exp * n)).
    """

    kind: str
    d: int
    w: Monomial
    zeta_exp: int = 0

    def __post_init__(self):
        if self.kind not in _ATOM_KINDS:
            raise ValueError(f"unknown atom kind {self.kind!r}")
        if self.d < 1:
            raise ValueError("atom base exponent must be >= 1")
        if self.w.is_zero:
            raise ValueError("atom argument must be nonzero")
        if self.w.scalar not in (1, -1, Fraction(1), Fraction(-1)):
            raise ValueError("atom arguments must carry unit scalars")


def euler_inverse_atom(sys: GeneratorSystem, d: int) -> Atom:
    """The central prefactor (q^d; q^d)_inf^{-1} as an explicit atom."""
    return Atom("poch_inv", d, Monomial(Fraction(-1), d, sys.one.exps))


def euler_atom(sys: GeneratorSystem, d: int) -> Atom:
    """The central factor (q^d; q^d)_inf as an explicit atom."""
    return Atom("poch", d, Monomial(Fraction(-1), d, sys.one.exps))


def psi_atoms(
    sys: GeneratorSystem, z: Monomial, M: Monomial, d: int, zeta_exp: int = 0
) -> tuple[Atom, ...]:
    """Atoms of the multiplication operator with argument z and letter zeta^e M:

        (q^d M)_inf (M^{-1})_inf [(z q^d M)_inf (z M^{-1})_inf]^{-1}, base q^d.

    All four factors are kept as one-sided Pochhammer atoms (index boxes
    start at zero); collapsing the numerator pair to a theta sum is valid
    but produces two-sided index ranges that expand far more slowly.
    """
    if not _torus_free(sys, z):
        raise NonConvergentError("psi parameter z must be purely central")
    e = zeta_exp % 3
    qd_m = Monomial(M.scalar, M.qpow + d, M.exps)
    m_inv = monomial_inverse(sys, M)
    z_qd_m = normal_order_product(sys, z, qd_m)
    z_m_inv = normal_order_product(sys, z, m_inv)
    return (
        Atom("poch", d, qd_m, e),
        Atom("poch", d, m_inv, (-e) % 3),
        Atom("poch_inv", d, z_qd_m, e),
        Atom("poch_inv", d, z_m_inv, (-e) % 3),
    )


@dataclass(frozen=True)
class AtomWindow:
    """Comparison window: q-exponent < qmax, |letter exponent| <= nmax per
    noncommuting letter, |degree| <= cmax per central letter.  All q-exponents
    below qmax are compared, including negative ones (reordering twists push
    genuine content below zero).  nmax defaults to max(qmax, cmax)."""

    qmax: int
    cmax: int
    nmax: int | None = None

    def letter_bound(self) -> int:
        return max(self.qmax, self.cmax) if self.nmax is None else self.nmax


# -- per-atom exact profiles --


def _atom_profile(sys: GeneratorSystem, atom: Atom):
    """Exact per-index data: value quadratic val(n) = a n^2 + b n, unit step
    vector s (exponent change per index), and the structural sign rule."""
    sgn = -1 if atom.kind == "theta" else 1
    struct = Fraction(atom.d, 2) if atom.kind in ("poch", "theta") else Fraction(0)

    def val(n: int) -> Fraction:
        base = monomial_power(sys, atom.w, sgn * n).qpow
        return Fraction(base) + struct * n * (n - 1)

    v1, v2 = val(1), val(2)
    a = (v2 - 2 * v1) / 2
    b = v1 - a
    for n in (-2, -1, 0, 1, 2, 3):
        if val(n) != a * n * n + b * n:
            raise AssertionError("atom valuation is not quadratic in the index")
    step = tuple(sgn * e for e in atom.w.exps)
    return a, b, step


def _pair_twist(sys: GeneratorSystem, s_left: Sequence[int], s_right: Sequence[int]) -> int:
    """Normal-ordering q-correction per unit index pair (left atom earlier)."""
    total = 0
    n0 = sys.num_noncommuting
    for u in range(n0):
        for v in range(u):
            c = sys.comm[u][v]
            if c:
                total += c * s_left[u] * s_right[v]
    return total


# -- exact rational linear algebra for the finiteness gate --


def _null_space(rows: list[list[Fraction]], dim: int) -> list[list[Fraction]]:
    """Basis of the right null space of the given rows, exact over Q."""
    mat = [list(r) for r in rows]
    pivots: list[int] = []
    r = 0
    for c in range(dim):
        piv = None
        for i in range(r, len(mat)):
            if mat[i][c]:
                piv = i
                break
        if piv is None:
            continue
        mat[r], mat[piv] = mat[piv], mat[r]
        inv = Fraction(1) / mat[r][c]
        mat[r] = [x * inv for x in mat[r]]
        for i in range(len(mat)):
            if i != r and mat[i][c]:
                f = mat[i][c]
                mat[i] = [x - f * y for x, y in zip(mat[i], mat[r])]
        pivots.append(c)
        r += 1
        if r == len(mat):
            break
    free = [c for c in range(dim) if c not in pivots]
    basis = []
    for fc in free:
        vec = [Fraction(0)] * dim
        vec[fc] = Fraction(1)
        for ri, pc in enumerate(pivots):
            vec[pc] = -mat[ri][fc]
        basis.append(vec)
    return basis


def _restrict_quadratic(H: list[list[Fraction]], basis: list[list[Fraction]]) -> list[list[Fraction]]:
    k = len(basis)
    out = [[Fraction(0)] * k for _ in range(k)]
    n = len(H)
    for i in range(k):
        hi = [sum(H[r][c] * basis[i][c] for c in range(n)) for r in range(n)]
        for j in range(i, k):
            v = sum(hi[r] * basis[j][r] for r in range(n))
            out[i][j] = v
            out[j][i] = v
    return out


def _is_positive_definite(G: list[list[Fraction]]) -> bool:
    """Sylvester criterion with exact leading principal minors."""
    k = len(G)
    mat = [row[:] for row in G]
    for i in range(k):
        piv = mat[i][i]
        if piv <= 0:
            return False
        for r in range(i + 1, k):
            f = mat[r][i] / piv
            for c in range(i, k):
                mat[r][c] -= f * mat[i][c]
    return True


def atom_gate(sys: GeneratorSystem, atoms: Sequence[Atom]) -> list[tuple]:
    """Reject products whose windowed coefficients are infinite sums.

    An infinite family of index tuples feeding one window cell is a direction
    r with zero net step on every letter and central.  On that null lattice
    the exact valuation quadratic form must be positive semidefinite, and
    every feasible flat ray (nonnegative on the one-sided atoms) must have
    strictly increasing valuation.  Along a flat ray r the valuation grows
    linearly with per-cell slope b.r + 2 x.H r, and x.H r is invariant under
    flat translations of the base point x, so rays whose slope depends on the
    cell are returned as deferred checks (ray, b.r, H r) to be resolved once
    finite index boxes are known.  Definite divergence raises
    NonConvergentError with a certificate.
    """
    k = len(atoms)
    profiles = [_atom_profile(sys, a) for a in atoms]
    steps = [p[2] for p in profiles]
    lin = [p[1] for p in profiles]
    H = [[Fraction(0)] * k for _ in range(k)]
    for i in range(k):
        H[i][i] = profiles[i][0]
        for j in range(i + 1, k):
            t = _pair_twist(sys, steps[i], steps[j])
            if t:
                H[i][j] = H[j][i] = Fraction(t, 2)
    rows = []
    for pos in range(sys.width):
        row = [Fraction(steps[i][pos]) for i in range(k)]
        if any(row):
            rows.append(row)
    null = _null_space(rows, k)
    if not null:
        return []
    G = _restrict_quadratic(H, null)
    if _is_positive_definite(G):
        return []
    kernel = _null_space(G, len(null))
    if not kernel:
        raise NonConvergentError(
            "valuation form is indefinite on the invariant lattice; "
            "the product has no formal monomialwise expansion"
        )
    lifted = [
        [sum(vec[m] * null[m][i] for m in range(len(null))) for i in range(k)]
        for vec in kernel
    ]
    # pointedness: a two-sided flat feasible line cannot have increasing
    # valuation both ways, so any lineality is a divergence certificate
    cone_rows = []
    for i, atom in enumerate(atoms):
        if atom.kind != "theta":
            row = [lifted[m][i] for m in range(len(lifted))]
            if any(row):
                cone_rows.append(row)
    lineal = _null_space(cone_rows, len(lifted))
    if lineal:
        ray = lineal[0]
        cert = [sum(ray[m] * lifted[m][i] for m in range(len(lifted))) for i in range(k)]
        raise NonConvergentError(
            "divergent flat direction with index multiplicities "
            f"{[str(x) for x in cert]}; the sides have no formal monomialwise "
            "expansion and must be reduced first"
        )
    kappa = len(lifted)
    deferred: list[tuple] = []

    def check_ray(c: list[Fraction]) -> None:
        direction = [sum(c[m] * lifted[m][i] for m in range(kappa)) for i in range(k)]
        if not any(direction):
            return
        feasible = all(
            direction[i] >= 0 for i, a in enumerate(atoms) if a.kind != "theta"
        )
        if not feasible:
            return
        slope_b = sum(lin[i] * direction[i] for i in range(k))
        hr = [sum(H[a][b] * direction[b] for b in range(k)) for a in range(k)]
        if not any(hr):
            if slope_b <= 0:
                raise NonConvergentError(
                    "flat feasible direction with nonincreasing valuation "
                    f"{[str(x) for x in direction]}; divergent expansion"
                )
            return
        deferred.append((tuple(direction), slope_b, tuple(hr)))

    if kappa == 1:
        for sgn in (1, -1):
            check_ray([Fraction(sgn)])
        return deferred
    if kappa > 3:
        raise NonConvergentError("flat subspace too large to certify; reduce the identity")
    # extreme rays of the pointed cone: kappa-1 active constraints at a time
    for active in itertools.combinations(range(len(cone_rows)), kappa - 1):
        sub_rows = [cone_rows[i] for i in active]
        dirs = _null_space(sub_rows, kappa)
        if len(dirs) != 1:
            continue
        for sgn in (1, -1):
            check_ray([sgn * x for x in dirs[0]])
    return deferred


def _check_deferred_rays(
    atoms: Sequence[Atom], deferred: Sequence[tuple], bounds: Sequence[tuple[int, int]]
) -> None:
    """Resolve gate rays whose valuation slope depends on the window cell.

    The slope along flat ray r at base x is b.r + 2 x.H r; minimizing the
    invariant bilinear term over the index boxes bounds it below uniformly
    over every cell the expansion can touch.
    """
    for direction, slope_b, hr in deferred:
        worst = slope_b
        for i, h in enumerate(hr):
            if h:
                lo_i, hi_i = bounds[i]
                worst += 2 * min(h * lo_i, h * hi_i)
        if worst <= 0:
            raise NonConvergentError(
                "flat feasible direction with nonincreasing valuation "
                f"{[str(x) for x in direction]} over the expansion boxes; "
                "divergent expansion"
            )


# -- index box bounds --


_HARD_CAP = 4096


def _atom_bounds(
    sys: GeneratorSystem, atoms: Sequence[Atom], window: AtomWindow, pad: int = 0
) -> list[tuple[int, int]]:
    """Per-atom index ranges that cover every tuple landing in the window.

    Constraint propagation over the letter windows, central windows, and the
    exact valuation form.  Opposite-step Pochhammer pairs (the numerator pair
    of a psi factor) are first rotated to difference/sum coordinates
    u = n1 - n2, v = n1 + n2: step negation makes every letter movement and
    every crossing depend on u alone, while v only enters the pair's own
    valuation as a coercive reservoir, so the loop sees one two-sided mover
    instead of two one-sided movers that merely constrain each other's
    difference.  Sound bounds are certified downstream by re-running with
    padded boxes and demanding identical window content.
    """
    k = len(atoms)
    profiles = [_atom_profile(sys, a) for a in atoms]
    rsteps = [p[2] for p in profiles]
    rquad = [p[0] for p in profiles]
    rlin = [p[1] for p in profiles]
    n0 = sys.num_noncommuting
    nmax = window.letter_bound()
    limits = [nmax] * n0 + [window.cmax] * (sys.width - n0)

    used = [False] * k
    members: list[tuple[int, ...]] = []
    quad: list[Fraction] = []
    lin: list[Fraction] = []
    steps: list[tuple[int, ...]] = []
    two_sided: list[bool] = []
    vconst: list[Fraction] = []
    vlin: list[Fraction] = []
    for i in range(k):
        if used[i]:
            continue
        j_found = -1
        if atoms[i].kind == "poch" and any(rsteps[i]):
            neg = tuple(-s for s in rsteps[i])
            for j in range(i + 1, k):
                if (
                    not used[j]
                    and atoms[j].kind == "poch"
                    and rquad[j] == rquad[i]
                    and rsteps[j] == neg
                ):
                    j_found = j
                    break
        used[i] = True
        if j_found >= 0:
            used[j_found] = True
            uq = rquad[i] / 2
            bv = (rlin[i] + rlin[j_found]) / 2
            members.append((i, j_found))
            quad.append(uq)
            lin.append((rlin[i] - rlin[j_found]) / 2)
            steps.append(rsteps[i])
            two_sided.append(True)
            vlin.append(bv)
            if bv >= 0:
                vconst.append(Fraction(0))
            else:
                vtx = -bv / (2 * uq)
                vconst.append(
                    min(
                        uq * v * v + bv * v
                        for v in (math.floor(vtx), math.ceil(vtx))
                    )
                )
        else:
            members.append((i,))
            quad.append(rquad[i])
            lin.append(rlin[i])
            steps.append(rsteps[i])
            two_sided.append(atoms[i].kind == "theta")
            vlin.append(Fraction(0))
            vconst.append(Fraction(0))

    nu = len(members)
    twists = [[0] * nu for _ in range(nu)]
    for i in range(nu):
        for j in range(i + 1, nu):
            t = _pair_twist(sys, steps[i], steps[j])
            twists[i][j] = twists[j][i] = t

    hi = [_HARD_CAP] * nu
    lo = [-_HARD_CAP if two else 0 for two in two_sided]

    # tilted valuations: val + tilt.net is capped by qmax + sum |tilt| limit
    # on window tuples, and a unit tilt can turn a flat atom's linear
    # coefficient positive where the raw valuation cannot contract
    active = [pos for pos in range(sys.width) if any(s[pos] for s in steps)]
    tilts: list[tuple[tuple[int, ...], int]] = [((0,) * sys.width, window.qmax)]
    for pos in active:
        for c in (1, -1, 2, -2, 3, -3):
            t = [0] * sys.width
            t[pos] = c
            tilts.append((tuple(t), window.qmax + abs(c) * limits[pos]))
    tilt_lin = [
        [b + sum(t[pos] * steps[i][pos] for pos in active) for i, b in enumerate(lin)]
        for t, _ in tilts
    ]

    def _box_min(a: Fraction, b: Fraction, nlo: int, nhi: int) -> Fraction:
        cands = {nlo, nhi}
        if a > 0:
            vertex = -b / (2 * a)
            for n in (math.floor(vertex), math.ceil(vertex)):
                if nlo <= n <= nhi:
                    cands.add(n)
        return min(a * n * n + b * n for n in cands)

    def vmin(i: int, tlin, cross: Fraction) -> Fraction:
        """Lower bound for unit i's tilted valuation minus worst crossings."""
        best = _box_min(quad[i], tlin[i] - cross, max(lo[i], 0), hi[i])
        if lo[i] < 0:
            best = min(best, _box_min(quad[i], tlin[i] + cross, lo[i], 0))
        return min(best, Fraction(0)) + vconst[i]

    for _ in range(200):
        changed = False
        crosses = [
            sum(abs(twists[i][j]) * max(abs(lo[j]), abs(hi[j])) for j in range(nu) if j != i)
            for i in range(nu)
        ]
        vmin_tables = [
            [vmin(i, tlin, crosses[i]) for i in range(nu)] for tlin in tilt_lin
        ]
        for i in range(nu):
            best_hi = hi[i]
            best_lo = lo[i]
            # letter and central windows, directional: the other atoms'
            # contributions are signed interval sums, not absolute slack
            for pos in range(sys.width):
                s = steps[i][pos]
                if not s:
                    continue
                pos_lo = 0
                pos_hi = 0
                for j in range(nu):
                    if j == i:
                        continue
                    sj = steps[j][pos]
                    if sj:
                        pos_lo += min(sj * lo[j], sj * hi[j])
                        pos_hi += max(sj * lo[j], sj * hi[j])
                hi_room = (limits[pos] - pos_lo) if s > 0 else (limits[pos] + pos_hi)
                lo_room = (limits[pos] + pos_hi) if s > 0 else (limits[pos] - pos_lo)
                best_hi = min(best_hi, hi_room // abs(s))
                best_lo = max(best_lo, -(lo_room // abs(s)))
            # valuation windows: the tilted quadratic beats the cap plus slack
            for ti in range(len(tilts)):
                vmins = vmin_tables[ti]
                slack = Fraction(tilts[ti][1]) - (sum(vmins) - vmins[i]) - vconst[i]
                a, b = quad[i], tilt_lin[ti][i]
                cross = crosses[i]
                if a > 0:
                    # a n^2 - (|b| + cross)|n| < slack
                    bb = abs(b) + cross
                    disc = bb * bb + 4 * a * slack
                    if disc >= 0:
                        root = (bb + Fraction(_fr_sqrt_ceil(disc))) / (2 * a)
                        bound = int(root) + 1
                        best_hi = min(best_hi, bound)
                        best_lo = max(best_lo, -bound)
                elif b - cross > 0:
                    bound = int(slack / (b - cross)) + 1
                    best_hi = min(best_hi, bound)
                elif b + cross < 0:
                    bound = int(slack / (-b - cross)) + 1
                    best_lo = max(best_lo, -bound)
            if not two_sided[i]:
                best_lo = max(best_lo, 0)
            if best_hi < hi[i]:
                hi[i] = max(best_hi, best_lo)
                changed = True
            if best_lo > lo[i]:
                lo[i] = min(best_lo, hi[i])
                changed = True
        if not changed:
            break
    for i in range(nu):
        if hi[i] >= _HARD_CAP or lo[i] <= -_HARD_CAP:
            a0 = atoms[members[i][0]]
            raise NonConvergentError(
                f"no finite index bound for atom {members[i][0]} ({a0.kind} of {a0.w!r})"
            )

    # translate unit boxes back: for a rotated pair, v = n1 + n2 is capped by
    # the untilted budget once every other unit sits at its valuation floor
    crosses = [
        sum(abs(twists[i][j]) * max(abs(lo[j]), abs(hi[j])) for j in range(nu) if j != i)
        for i in range(nu)
    ]
    vmins0 = [vmin(i, tilt_lin[0], crosses[i]) for i in range(nu)]
    total0 = sum(vmins0)
    rlo = [0] * k
    rhi = [0] * k
    for i, mem in enumerate(members):
        if len(mem) == 1:
            rlo[mem[0]] = lo[i]
            rhi[mem[0]] = hi[i]
        else:
            slack_v = Fraction(window.qmax) - (total0 - vconst[i])
            disc = vlin[i] * vlin[i] + 4 * quad[i] * max(slack_v, Fraction(0))
            vmax = int((abs(vlin[i]) + Fraction(_fr_sqrt_ceil(disc))) / (2 * quad[i])) + 1
            p1, p2 = mem
            rlo[p1] = max(0, lo[i])
            rhi[p1] = max((vmax + hi[i]) // 2, rlo[p1])
            rlo[p2] = max(0, -hi[i])
            rhi[p2] = max((vmax - lo[i]) // 2, rlo[p2])
    for i in range(k):
        rhi[i] += pad
        if atoms[i].kind == "theta":
            rlo[i] -= pad
    return list(zip(rlo, rhi))


def _fr_sqrt_ceil(x: Fraction) -> int:
    """Smallest integer whose square is >= x (x >= 0)."""
    if x <= 0:
        return 0
    num = -(-x.numerator // x.denominator)
    r = int(num**0.5)
    while r * r < num:
        r += 1
    while r > 0 and (r - 1) * (r - 1) >= num:
        r -= 1
    return r


# -- expansion ----------------------------------------------------------------


@lru_cache(maxsize=None)
def _partition_series(d: int, n: int, length: int) -> tuple[int, ...]:
    """q-series of 1 / prod_{m=1..n} (1 - q^{dm}) to the given length."""
    vec = [0] * max(length, 1)
    if length > 0:
        vec[0] = 1
    for m in range(1, n + 1):
        stride = d * m
        for idx in range(stride, length):
            vec[idx] += vec[idx - stride]
    return tuple(vec)


def _atom_entries(sys, atom: Atom, lo: int, hi: int, length: int):
    """Term list [(n, exps, base_val, coeff_vec)] with coeff_vec int64 (2, len).

    Row 0 is the rational part, row 1 the zeta part of u + v*zeta.
    """
    sgn = -1 if atom.kind == "theta" else 1
    entries = []
    for n in range(lo, hi + 1):
        mp = monomial_power(sys, atom.w, sgn * n)
        scal = mp.scalar
        if scal not in (1, -1):
            raise NonConvergentError("atom expansion needs unit scalars")
        sign = int(scal)
        struct = atom.d * (n * (n - 1)) // 2 if atom.kind in ("poch", "theta") else 0
        base = mp.qpow + struct
        if atom.kind == "theta":
            series = (1,)
        else:
            series = _partition_series(atom.d, n, length)
            last = len(series) - 1
            while last > 0 and not series[last]:
                last -= 1
            series = series[: last + 1]
            if atom.kind == "poch_inv" and n % 2:
                sign = -sign
        vec = np.zeros((2, len(series)), dtype=np.int64)
        arr = np.array(series, dtype=np.int64) * sign
        ze = (atom.zeta_exp * (-n if atom.kind == "theta" else n)) % 3
        if ze == 0:
            vec[0] = arr
        elif ze == 1:
            vec[1] = arr
        else:
            vec[0] = -arr
            vec[1] = -arr
        entries.append((n, mp.exps, base, vec))
    return entries


def _int_psd(H: list[list[int]]) -> bool:
    """Exact positive-semidefinite test via symmetric elimination pivots."""
    d = len(H)
    m = [[Fraction(x) for x in row] for row in H]
    for i in range(d):
        piv = m[i][i]
        if piv < 0:
            return False
        if piv == 0:
            if any(m[i][j] for j in range(i + 1, d)):
                return False
            continue
        for r in range(i + 1, d):
            f = m[r][i] / piv
            if f:
                for c in range(i + 1, d):
                    m[r][c] -= f * m[i][c]
    return True


def _conv_rows(a: np.ndarray, b: np.ndarray, top: int):
    """Convolution of 1-D int64 vectors keeping only the first ``top`` slots.

    np.convolve has too much per-call overhead for the tiny vectors seen
    here; scalar factors multiply directly and short factors drive a
    slice-accumulate loop.
    """
    la, lb = a.shape[0], b.shape[0]
    n = min(la + lb - 1, top)
    if n <= 0:
        return None
    if lb == 1:
        return a[:n] * b[0]
    if la == 1:
        return b[:n] * a[0]
    out = np.zeros(n, dtype=np.int64)
    if la <= lb:
        for i in range(min(la, n)):
            c = a[i]
            if c:
                seg = min(lb, n - i)
                out[i : i + seg] += c * b[:seg]
    else:
        for i in range(min(lb, n)):
            c = b[i]
            if c:
                seg = min(la, n - i)
                out[i : i + seg] += c * a[:seg]
    return out


def _convolve_pair(v1: np.ndarray, v2: np.ndarray, zeta_mode: bool, top: int):
    """Row-structured truncated product: plain integers, or u + v*zeta pairs."""
    if not zeta_mode:
        row = _conv_rows(v1[0], v2[0], top)
        if row is None:
            return None
        return row.reshape(1, -1)
    c1 = _conv_rows(v1[0], v2[0], top)
    if c1 is None:
        return None
    c2 = _conv_rows(v1[1], v2[1], top)
    c3 = _conv_rows(v1[0] + v1[1], v2[0] + v2[1], top)
    out = np.empty((2, c1.shape[0]), dtype=np.int64)
    out[0] = c1 - c2
    out[1] = c3 - c1 - 2 * c2
    return out


def expand_atom_product(
    sys: GeneratorSystem,
    atoms: Sequence[Atom],
    window: AtomWindow,
    pad: int = 0,
) -> dict:
    """Exact window coefficients {(qexp, exps): int | Eisenstein} of the product.

    Folds the atoms left to right keeping, per exponent vector, a q-coefficient
    vector; reordering twists shift vectors by the exact bilinear correction.
    Partial terms that provably cannot re-enter the window are pruned using
    per-suffix reachability and valuation slack.
    """
    deferred = atom_gate(sys, atoms)
    bounds = _atom_bounds(sys, atoms, window, pad)
    if deferred:
        _check_deferred_rays(atoms, deferred, bounds)
    k = len(atoms)
    profiles = [_atom_profile(sys, a) for a in atoms]
    steps = [p[2] for p in profiles]
    n0 = sys.num_noncommuting
    nmax = window.letter_bound()
    limits = [nmax] * n0 + [window.cmax] * (sys.width - n0)
    zeta_mode = any(a.zeta_exp % 3 for a in atoms)

    # suffix reachability: exponent movement ranges of atoms s..k-1
    move_lo = [[0] * sys.width for _ in range(k + 1)]
    move_hi = [[0] * sys.width for _ in range(k + 1)]
    for s in range(k - 1, -1, -1):
        lo_i, hi_i = bounds[s]
        for pos in range(sys.width):
            st = steps[s][pos]
            cands = (st * lo_i, st * hi_i)
            move_lo[s][pos] = move_lo[s + 1][pos] + min(cands)
            move_hi[s][pos] = move_hi[s + 1][pos] + max(cands)

    # doubled integer valuation profiles (quadratics in n have half-integer
    # coefficients; scaling by 2 keeps the hot path on plain ints)
    A2 = []
    B2 = []
    for a, b, _st in profiles:
        a2, b2 = 2 * a, 2 * b
        assert a2.denominator == 1 and b2.denominator == 1
        A2.append(int(a2))
        B2.append(int(b2))

    @lru_cache(maxsize=None)
    def val_floor2(j: int, slope: int) -> int:
        """Doubled min of atom j's valuation plus slope * n over its index box."""
        a2, b2 = A2[j], B2[j] + 2 * slope
        nlo, nhi = bounds[j]
        cands = {nlo, nhi}
        if a2 > 0:
            q, r = divmod(-b2, 2 * a2)
            for n in (q, q + 1 if r else q):
                if nlo <= n <= nhi:
                    cands.add(n)
        return min(a2 * n * n + b2 * n for n in cands)

    # base-point-independent floor for crossings among atoms s..k-1
    pair_min = [0] * (k + 1)
    for s in range(k - 1, -1, -1):
        worst = 0
        for i in range(s, k):
            for j in range(i + 1, k):
                t = _pair_twist(sys, steps[i], steps[j])
                if t:
                    corners = [
                        t * bounds[i][0] * bounds[j][0],
                        t * bounds[i][0] * bounds[j][1],
                        t * bounds[i][1] * bounds[j][0],
                        t * bounds[i][1] * bounds[j][1],
                    ]
                    worst += min(0, min(corners))
        pair_min[s] = worst

    # joint suffix floors: the doubled form sum A2_j n_j^2 + 2 sum t_ij n_i n_j
    # + sum c_j n_j over atoms j >= s.  When the suffix Hessian is PSD, any
    # shift y gives the sound bound (c - 2Hy). n_box_min - y^T H y via the
    # completed square; y comes from a float least-squares solve and the
    # bound is then evaluated exactly in integers on the dyadic rounding.
    Hfull = [[0] * k for _ in range(k)]
    for i in range(k):
        Hfull[i][i] = A2[i]
        for j in range(i + 1, k):
            t = _pair_twist(sys, steps[i], steps[j])
            Hfull[i][j] = t
            Hfull[j][i] = t
    suffix_H = [[row[s:] for row in Hfull[s:]] for s in range(k + 1)]
    suffix_psd = [_int_psd(suffix_H[s]) for s in range(k + 1)]
    suffix_Hf = [np.array(suffix_H[s], dtype=np.float64) for s in range(k + 1)]

    def joint_floor2(s: int, slopes: Sequence[int]):
        if not suffix_psd[s]:
            return None
        d = k - s
        if d == 0:
            return 0
        c = [B2[s + i] + 2 * slopes[i] for i in range(d)]
        y = np.linalg.lstsq(suffix_Hf[s], np.array(c, dtype=np.float64) / 2, rcond=None)[0]
        scale = 1 << 20
        Y = [int(round(v * scale)) for v in y]
        Hs = suffix_H[s]
        hy = [sum(Hs[i][j] * Y[j] for j in range(d)) for i in range(d)]
        q1 = 0
        for i in range(d):
            r = c[i] * scale - 2 * hy[i]
            lo_i, hi_i = bounds[s + i]
            q1 += min(r * lo_i, r * hi_i)
        q2 = sum(Y[i] * hy[i] for i in range(d))
        return (q1 * scale - q2) // (scale * scale)

    # partition-series length: enough q-slots above each base valuation to
    # reach the window top from the lowest reachable total below it
    base_floor2 = sum(val_floor2(i, 0) for i in range(k)) + 2 * pair_min[0]
    jf = joint_floor2(0, (0,) * k)
    if jf is not None:
        base_floor2 = max(base_floor2, jf)
    length = max(window.qmax - (base_floor2 // 2 - 1) + 1, 1)

    entry_lists = [
        _atom_entries(sys, atoms[i], bounds[i][0], bounds[i][1], length) for i in range(k)
    ]
    rows = 2 if zeta_mode else 1
    if not zeta_mode:
        entry_lists = [
            [(n, exps2, base2, vec[:1]) for (n, exps2, base2, vec) in lst]
            for lst in entry_lists
        ]
    # per-entry coupling of future atoms to the entry's own exponent step
    entry_slopes = []
    for s in range(k):
        per_entry = []
        for n, exps2, base2, vec2 in entry_lists[s]:
            per_entry.append(
                tuple(_pair_twist(sys, exps2, steps[j]) for j in range(s + 1, k))
            )
        entry_slopes.append(per_entry)

    width = sys.width
    zero = tuple(sys.one.exps)
    start = np.zeros((rows, 1), dtype=np.int64)
    start[0, 0] = 1
    # partial product state: exponent vector -> (q-offset, coefficient rows,
    # twist slopes of the accumulated exponents against atoms s..k-1)
    partial: dict[tuple, tuple[int, np.ndarray, tuple]] = {zero: (0, start, (0,) * k)}

    qtop = window.qmax
    for s in range(k):
        nxt: dict[tuple, tuple[int, np.ndarray, tuple]] = {}
        future = range(s + 1, k)
        nfuture = k - s - 1
        base_rem2 = 2 * pair_min[s + 1]
        rem_cache: dict[tuple, int] = {}
        entries_s = entry_lists[s]
        slopes_s = entry_slopes[s]
        mh = move_hi[s + 1]
        ml = move_lo[s + 1]
        for e1, (off1, vec1, kslopes) in partial.items():
            for ei in range(len(entries_s)):
                n, exps2, base2, vec2 = entries_s[ei]
                e_new = tuple(a + b for a, b in zip(e1, exps2))
                ok = True
                for pos in range(width):
                    v = e_new[pos]
                    if v + mh[pos] < -limits[pos] or v + ml[pos] > limits[pos]:
                        ok = False
                        break
                if not ok:
                    continue
                own = slopes_s[ei]
                combined = tuple(kslopes[i + 1] + own[i] for i in range(nfuture))
                rem2 = rem_cache.get(combined)
                if rem2 is None:
                    rem2 = base_rem2
                    for fj, j in enumerate(future):
                        rem2 += val_floor2(j, combined[fj])
                    jf = joint_floor2(s + 1, combined)
                    if jf is not None and jf > rem2:
                        rem2 = jf
                    rem_cache[combined] = rem2
                off = off1 + base2 + n * kslopes[0]
                # keep q-slots that can still return below the window top
                top = qtop - (rem2 // 2) - off
                if top <= 0:
                    continue
                conv = _convolve_pair(vec1, vec2, zeta_mode, top)
                if conv is None or not conv.any():
                    continue
                prev = nxt.get(e_new)
                if prev is None:
                    nxt[e_new] = (off, conv, combined)
                else:
                    poff, pvec, _ = prev
                    plen = pvec.shape[1]
                    clen = conv.shape[1]
                    if poff <= off and off + clen <= poff + plen:
                        pvec[:, off - poff : off - poff + clen] += conv
                    else:
                        noff = min(poff, off)
                        end = max(poff + plen, off + clen)
                        merged = np.zeros((rows, end - noff), dtype=np.int64)
                        merged[:, poff - noff : poff - noff + plen] = pvec
                        merged[:, off - noff : off - noff + clen] += conv
                        nxt[e_new] = (noff, merged, combined)
        partial = nxt

    out: dict = {}
    for exps, (off, vec, _sl) in partial.items():
        if any(abs(exps[pos]) > limits[pos] for pos in range(width)):
            continue
        for idx in range(vec.shape[1]):
            q = off + idx
            if q >= window.qmax:
                break
            u = int(vec[0, idx])
            v = int(vec[1, idx]) if zeta_mode else 0
            if abs(u) > 1 << 50 or abs(v) > 1 << 50:
                raise NonConvergentError("coefficient overflow guard tripped")
            if v:
                out[(q, exps)] = Eisenstein(u, v)
            elif u:
                out[(q, exps)] = u
    return out


# -- identity driver --


@dataclass(frozen=True)
class AtomReport:
    """Outcome of an exact windowed product comparison.

    ``diffs`` lists (q-exponent, exponent vector, coefficient) of LHS - RHS
    inside the window; ``certified`` records that widening every index box by
    two left both windows unchanged, sealing the expansion bounds.
    """

    passed: bool
    certified: bool
    diffs: tuple
    qmax: int
    cmax: int
    nmax: int
    lhs_cells: int
    rhs_cells: int

    def describe(self) -> str:
        if self.passed:
            seal = "certified" if self.certified else "uncertified"
            return f"identity holds on the window (qmax, cmax) = ({self.qmax}, {self.cmax}), {seal}"
        head = ", ".join(f"q^{k} X^{list(e)}: {c}" for k, e, c in self.diffs[:3])
        return f"{len(self.diffs)} nonzero coefficients, e.g. {head}"


def _flatten_side(side: Sequence) -> list[Atom]:
    atoms: list[Atom] = []
    for item in side:
        if isinstance(item, Atom):
            atoms.append(item)
        else:
            atoms.extend(item)
    return atoms


def verify_atom_identity(
    sys: GeneratorSystem,
    lhs: Sequence,
    rhs: Sequence,
    window: AtomWindow,
    certify: bool = True,
) -> AtomReport:
    """Compare two ordered products of atoms exactly on the window.

    ``lhs``/``rhs`` entries are bare Atoms or iterables of Atoms as returned
    by psi_atoms.
    """
    lhs_atoms = _flatten_side(lhs)
    rhs_atoms = _flatten_side(rhs)

    L = expand_atom_product(sys, lhs_atoms, window)
    R = expand_atom_product(sys, rhs_atoms, window)
    if certify:
        L2 = expand_atom_product(sys, lhs_atoms, window, pad=2)
        R2 = expand_atom_product(sys, rhs_atoms, window, pad=2)
        if L2 != L or R2 != R:
            raise NonConvergentError(
                "expansion window changed under bound widening; bounds are unsound"
            )
    keys = set(L) | set(R)
    diffs = []
    for key in keys:
        delta = L.get(key, 0) - R.get(key, 0)
        if delta:
            diffs.append((key[0], key[1], delta))
    diffs.sort(key=lambda t: (t[0], t[1]))
    return AtomReport(
        passed=not diffs,
        certified=certify,
        diffs=tuple(diffs),
        qmax=window.qmax,
        cmax=window.cmax,
        nmax=window.letter_bound(),
        lhs_cells=len(L),
        rhs_cells=len(R),
    )
