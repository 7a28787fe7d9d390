"""Windowed verification of Psi-product identities over quantum tori.

Psi_{q^d}(z, M) denotes the multiplication operator

    (q^d M; q^d)_inf (M^{-1}; q^d)_inf
    [(z q^d M; q^d)_inf (z M^{-1}; q^d)_inf]^{-1},

with (x; q^d)_inf = prod_{m>=0} (1 + x q^{dm}), z purely central and M a
signed power of a single torus letter, optionally decorated by a cube root
of unity.  Braid-type products of such operators have windowed coefficients
that arise as cancellations between astronomically large intermediate
terms: folding them in fixed-width integers silently wraps, and exact big
integers are far too slow at the windows the identities are stated for.
This module instead evaluates both sides modulo a few word-sized primes
(randomized identity testing).  Each run computes the exact residue of
every windowed coefficient, so equal residues across independent primes
certify the identity on the window up to a collision probability of order
1/(p1 p2) per cell, while any honest mismatch surfaces with a witness cell.

Internally each factor's numerator pair is collapsed through the Jacobi
triple product (self-tested elsewhere in the suite) to a two-sided theta
sum times a scalar Euler series:

    Psi = (q^d; q^d)_inf^{-1} theta_d(M) pinv(z q^d M) pinv(z M^{-1}),

    theta_d(M) = sum_{j in Z} q^{d j(j-1)/2} M^{-j},
    pinv(w)    = sum_{n>=0} (-1)^n w^n / (q^d; q^d)_n.

A product side therefore becomes theta sums separated by short Pochhammer
entries, all against scalar q-series with nonnegative exponents.  The
q-valuation of one term is an explicit quadratic form in the theta indices.
For a fixed window cell the letter exponents pin the per-letter weighted
index sums, and the form restricted to the pinned subspace must be positive
definite for the cell content to be a finite sum; the gate checks that
exactly over Q and raises NonConvergentError with a flat or negative
direction as certificate when it fails.  (Products mixing bases q and q^3
on strongly twisted letters genuinely diverge cellwise; their identities
are verified through root-factorized forms and symbol-chain replay, see
braid_series.)
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np

from .core import GeneratorSystem, Monomial
from .series_oracle import (
    AtomWindow,
    NonConvergentError,
    _null_space,
    _pair_twist,
    _restrict_quadratic,
)


@dataclass(frozen=True)
class PsiFactor:
    """One Psi_{q^d}(z, M) factor.

    ``z`` must be purely central with nonnegative exponents and no q-power;
    ``m`` a (+-1)-signed power of a single noncommuting letter.  ``zeta_exp``
    decorates the letter direction of m with a primitive cube root of unity:
    index-n Pochhammer entries carry zeta^(zeta_exp * n) and theta entries
    zeta^(-zeta_exp * n), so a sign decoration goes through m's scalar and a
    cube-root one through zeta_exp.
    """

    z: Monomial
    m: Monomial
    d: int
    zeta_exp: int = 0


def identity_primes(count: int = 2, start: int = 1 << 20) -> tuple[int, ...]:
    """Deterministic descending primes p = 1 (mod 3), so F_p has cube roots
    of unity."""
    from sympy import isprime

    out: list[int] = []
    p = start
    while len(out) < count:
        p -= 1
        if p % 3 == 1 and isprime(p):
            out.append(p)
    return tuple(out)


def _omega(p: int) -> int:
    """An element of multiplicative order 3 in F_p (needs p = 1 mod 3)."""
    for g in range(2, 64):
        w = pow(g, (p - 1) // 3, p)
        if w != 1:
            if (w * w + w + 1) % p:
                raise ValueError(f"{p} is not 1 mod 3")
            return w
    raise ValueError(f"no cube root of unity found mod {p}")


@dataclass(frozen=True)
class _Part:
    lidx: int
    wpow: int
    neg: bool
    zc: tuple[int, ...]
    d: int
    ze: int


def _factor_parts(sys: GeneratorSystem, f: PsiFactor) -> _Part:
    n0 = sys.num_noncommuting
    if f.d < 1:
        raise ValueError("psi base exponent must be >= 1")
    if f.m.qpow != 0 or f.z.qpow != 0:
        raise ValueError("psi arguments must not carry explicit q powers")
    if f.m.scalar not in (1, -1, Fraction(1), Fraction(-1)):
        raise ValueError("psi letter argument must carry a unit scalar")
    if any(f.m.exps[n0:]):
        raise ValueError("psi letter argument must not involve centrals")
    hot = [i for i in range(n0) if f.m.exps[i]]
    if len(hot) != 1:
        raise ValueError("psi letter argument must be a power of one letter")
    if any(f.z.exps[:n0]):
        raise NonConvergentError("psi parameter z must be purely central")
    zc = tuple(f.z.exps[n0:])
    if any(e < 0 for e in zc) or not any(zc):
        raise NonConvergentError("psi parameter z needs nonnegative, nonzero central degree")
    if f.z.scalar not in (1, Fraction(1)):
        raise ValueError("psi central argument must carry scalar 1")
    return _Part(hot[0], f.m.exps[hot[0]], int(f.m.scalar) < 0, zc, f.d, f.zeta_exp % 3)


def _ldl_certificate(G: list[list[Fraction]]) -> list[Fraction] | None:
    """None when G is positive definite, else a direction v with v'Gv <= 0,
    found by exact congruence elimination."""
    n = len(G)
    m = [[Fraction(x) for x in row] for row in G]
    T = [[Fraction(int(i == j)) for j in range(n)] for i in range(n)]
    for i in range(n):
        if m[i][i] <= 0:
            return T[i]
        factors = [m[r][i] / m[i][i] for r in range(n)]
        for r in range(i + 1, n):
            f = factors[r]
            if f:
                for c in range(n):
                    m[r][c] -= f * m[i][c]
                    T[r][c] -= f * T[i][c]
        for r in range(i + 1, n):
            f = factors[r]
            if f:
                for c in range(n):
                    m[c][r] -= f * m[c][i]
    return None


def _mat_inv_frac(A: list[list[Fraction]]) -> list[list[Fraction]]:
    n = len(A)
    m = [row[:] + [Fraction(int(i == j)) for j in range(n)] for i, row in enumerate(A)]
    for i in range(n):
        piv = next((r for r in range(i, n) if m[r][i]), None)
        if piv is None:
            raise ZeroDivisionError("singular matrix")
        m[i], m[piv] = m[piv], m[i]
        inv = 1 / m[i][i]
        m[i] = [x * inv for x in m[i]]
        for r in range(n):
            if r != i and m[r][i]:
                f = m[r][i]
                m[r] = [a - f * b for a, b in zip(m[r], m[i])]
    return [row[n:] for row in m]


class _Side:
    """Prepared evaluation plan for one ordered list of Psi factors."""

    def __init__(
        self,
        sys: GeneratorSystem,
        factors: Sequence[PsiFactor],
        window: AtomWindow,
        letters: tuple[int, ...],
    ):
        if not factors:
            raise ValueError("empty psi product")
        self.sys = sys
        self.window = window
        self.factors = tuple(factors)
        self.parts = [_factor_parts(sys, f) for f in factors]
        self.r = len(self.parts)
        self.letters = letters
        n0 = sys.num_noncommuting

        def unit(a: int) -> tuple[int, ...]:
            return tuple(int(i == a) for i in range(n0))

        self.tau = [[_pair_twist(sys, unit(a), unit(b)) for b in range(n0)] for a in range(n0)]
        self._plan()
        self._gate()

    def _plan(self) -> None:
        by_letter: dict[int, list[int]] = {lam: [] for lam in self.letters}
        for k, part in enumerate(self.parts):
            by_letter[part.lidx].append(k)
        self.det_of: dict[int, int] = {}
        for lam, ks in by_letter.items():
            if ks:
                best = min(abs(self.parts[k].wpow) for k in ks)
                self.det_of[lam] = [k for k in ks if abs(self.parts[k].wpow) == best][-1]
        det_set = set(self.det_of.values())
        self.free = [k for k in range(self.r) if k not in det_set]
        self.by_letter = by_letter

    def _theta_quad(self) -> list[list[Fraction]]:
        """Doubled quadratic part of the valuation over the theta indices:
        v(i) = i'Hi/2 + linear."""
        r = self.r
        H = [[Fraction(0)] * r for _ in range(r)]
        for k, part in enumerate(self.parts):
            H[k][k] = Fraction(part.d)
        for k in range(r):
            for l in range(k + 1, r):
                t = self.tau[self.parts[k].lidx][self.parts[l].lidx]
                if t:
                    c = Fraction(t * self.parts[k].wpow * self.parts[l].wpow)
                    H[k][l] += c
                    H[l][k] += c
        return H

    def _det_subst(self) -> dict[int, tuple[list[Fraction], int, int]]:
        """Determined index k -> (coefficients over free indices, letter,
        divisor w) with i_k = (pin_const - f_letter - sum w_j i_j) / w."""
        nf = len(self.free)
        ivars = {k: j for j, k in enumerate(self.free)}
        out: dict[int, tuple[list[Fraction], int, int]] = {}
        for lam, kdet in self.det_of.items():
            w = self.parts[kdet].wpow
            vec = [Fraction(0)] * nf
            for k in self.by_letter[lam]:
                if k != kdet and k in ivars:
                    vec[ivars[k]] = Fraction(-self.parts[k].wpow, w)
            out[kdet] = (vec, lam, w)
        return out

    def _gate(self) -> None:
        """Positive definiteness of the valuation on letter-pinned
        directions, then the free-index quadratic form and its inverse."""
        H = self._theta_quad()
        rows = []
        for lam in self.letters:
            ks = self.by_letter.get(lam, ())
            if ks:
                rows.append([Fraction(self.parts[k].wpow if k in ks else 0) for k in range(self.r)])
        basis = _null_space(rows, self.r)
        if basis:
            G = _restrict_quadratic(H, basis)
            cert = _ldl_certificate(G)
            if cert is not None:
                direction = [
                    sum(cert[j] * basis[j][k] for j in range(len(basis))) for k in range(self.r)
                ]
                raise NonConvergentError(
                    "psi product has no finite cellwise expansion: the index "
                    f"valuation is not positive definite along {direction} "
                    "(letter-pinned theta direction)"
                )
        if len(self.free) != len(basis):
            raise AssertionError("free index plan inconsistent with pinned subspace")
        if len(self.free) > 2:
            raise NonConvergentError(
                f"psi product needs {len(self.free)} free theta indices per "
                "cell; direct evaluation handles at most 2 (factor the "
                "product or verify it by chain replay)"
            )
        nf = len(self.free)
        self.subst = self._det_subst()
        ivars = {k: j for j, k in enumerate(self.free)}
        forms: list[list[Fraction]] = []
        for k in range(self.r):
            if k in ivars:
                vec = [Fraction(0)] * nf
                vec[ivars[k]] = Fraction(1)
            else:
                vec = list(self.subst[k][0])
            forms.append(vec)
        A = [[Fraction(0)] * nf for _ in range(nf)]
        for a in range(self.r):
            for b in range(self.r):
                c = H[a][b]
                if not c:
                    continue
                fa, fb = forms[a], forms[b]
                for i in range(nf):
                    if fa[i]:
                        for j in range(nf):
                            if fb[j]:
                                A[i][j] += c * fa[i] * fb[j]
        self.h_free = A
        self.h_free_inv = _mat_inv_frac(A) if nf else []


def _euler_inv_mod(d: int, length: int, p: int) -> np.ndarray:
    vec = np.zeros(max(length, 1), dtype=np.int64)
    vec[0] = 1
    stride = d
    while stride < length:
        for idx in range(stride, length):
            vec[idx] += vec[idx - stride]
        vec %= p
        stride += d
    return vec


def _poch_inv_tail_mod(d: int, n: int, length: int, p: int) -> np.ndarray:
    vec = np.zeros(max(length, 1), dtype=np.int64)
    vec[0] = 1
    for m in range(1, n + 1):
        stride = d * m
        for idx in range(stride, length):
            vec[idx] += vec[idx - stride]
        vec %= p
    return vec


class _TailCache:
    """Scalar q-series tails mod p: a per-side Euler root extended by
    Pochhammer denominators, convolved lazily to the needed length."""

    def __init__(self, p: int):
        self.p = p
        self.store: dict[tuple, np.ndarray] = {}

    def get(
        self, eulers: tuple[int, ...], pairs: tuple[tuple[int, int], ...], length: int
    ) -> np.ndarray:
        key = (eulers, pairs)
        have = self.store.get(key)
        if have is not None and have.shape[0] >= length:
            return have[:length]
        if not pairs:
            vec = _euler_inv_mod(eulers[0], length, self.p)
            for d in eulers[1:]:
                vec = np.convolve(vec, _euler_inv_mod(d, length, self.p))[:length] % self.p
        else:
            head = self.get(eulers, pairs[:-1], length)
            d, n = pairs[-1]
            vec = np.convolve(head, _poch_inv_tail_mod(d, n, length, self.p))[:length] % self.p
        self.store[key] = vec
        return vec


@dataclass
class PsiCellGrid:
    """Residues of one product side: data[prime][central vector] is a dense
    array whose axes are the letter exponents offset by ``nmax``, then the
    q-exponent offset by ``qlo``.  The q-range [qlo, qmax) covers every
    exponent the side can populate inside the window, including negative
    ones reached by valuation valleys."""

    qlo: int
    nmax: int
    data: dict[int, dict[tuple, np.ndarray]]


def _evaluate_side(side: _Side, primes: Sequence[int], caches: dict[int, _TailCache]) -> PsiCellGrid:
    """Window cell residues of one side, all q-exponents below qmax."""
    sys = side.sys
    window = side.window
    qmax = window.qmax
    top = qmax - 1
    nmax = window.letter_bound()
    parts = side.parts
    r = side.r
    letters = side.letters
    L = len(letters)
    lpos = {lam: a for a, lam in enumerate(letters)}
    n0 = sys.num_noncommuting
    ncent = sys.width - n0
    eulers = tuple(sorted(part.d for part in parts))
    wtabs = {}
    for p in primes:
        om = _omega(p)
        wtabs[p] = np.array(
            [pow(om, x, p) if s == 0 else (p - pow(om, x, p)) % p for s in (0, 1) for x in (0, 1, 2)],
            dtype=np.int64,
        )
    out: dict[int, dict[tuple, np.ndarray]] = {p: {} for p in primes}
    qlo = 0
    nf = len(side.free)
    ivars = {k: j for j, k in enumerate(side.free)}
    subst = side.subst
    hinvf = np.array([[float(x) for x in row] for row in side.h_free_inv], dtype=np.float64)

    paths: list[tuple[tuple[int, int], ...]] = []

    def rec(k: int, rem: list[int], acc: list[tuple[int, int]]):
        if k == r:
            paths.append(tuple(acc))
            return
        zc = parts[k].zc
        cap = min(rem[c] // zc[c] for c in range(ncent) if zc[c])
        for tot in range(cap + 1):
            nrem = [rem[c] - tot * zc[c] for c in range(ncent)]
            for nplus in range(tot + 1):
                acc.append((nplus, tot - nplus))
                rec(k + 1, nrem, acc)
                acc.pop()

    rec(0, [window.cmax] * ncent, [])

    for path in paths:
        cvec = [0] * ncent
        qconst = 0
        sigma0 = 0
        xi0 = 0
        cof = [0] * r
        for k, (npl, nmi) in enumerate(path):
            part = parts[k]
            for c in range(ncent):
                cvec[c] += (npl + nmi) * part.zc[c]
            qconst += part.d * npl
            sigma0 += npl + nmi
            if part.neg:
                sigma0 += npl + nmi
            xi0 += part.ze * (npl - nmi)
            cof[k] = part.wpow * (npl - nmi)
        cvec_t = tuple(cvec)
        tail_pairs = tuple(sorted((parts[k].d, n) for k, ab in enumerate(path) for n in ab if n))
        pin_c = {lam: sum(cof[k] for k in side.by_letter[lam]) for lam in letters}

        # valuation over theta indices: qconst + sum lin[k] i_k
        # + sum quad[(k,l)] i_k i_l + sum d_k i_k (i_k - 1) / 2, assembled
        # by a prefix sweep over the product-order entries
        lin = [0] * r
        quad: dict[tuple[int, int], int] = {}
        pref_c = [0] * n0
        pref_i: list[dict[int, int]] = [dict() for _ in range(n0)]
        qc = qconst
        for k in range(r):
            part = parts[k]
            lam = part.lidx
            mu_i = -part.wpow
            for lam2 in range(n0):
                t = side.tau[lam2][lam]
                if not t:
                    continue
                for j, cj in pref_i[lam2].items():
                    key = (j, k) if j < k else (k, j)
                    quad[key] = quad.get(key, 0) + t * cj * mu_i
                if pref_c[lam2]:
                    lin[k] += t * pref_c[lam2] * mu_i
            pref_i[lam][k] = pref_i[lam].get(k, 0) + mu_i
            npl, nmi = path[k]
            for mu_c in (part.wpow * npl, -part.wpow * nmi):
                if mu_c == 0:
                    continue
                for lam2 in range(n0):
                    t = side.tau[lam2][lam]
                    if not t:
                        continue
                    for j, cj in pref_i[lam2].items():
                        lin[j] += t * cj * mu_c
                    if pref_c[lam2]:
                        qc += t * pref_c[lam2] * mu_c
                pref_c[lam] += mu_c

        # substitute determined indices: i_k over (free vars, cells, 1)
        expr: list[tuple[list[Fraction], list[Fraction], Fraction]] = []
        for k in range(r):
            if k in ivars:
                vec = [Fraction(0)] * nf
                vec[ivars[k]] = Fraction(1)
                expr.append((vec, [Fraction(0)] * L, Fraction(0)))
            else:
                vec, lam, w = subst[k]
                fv = [Fraction(0)] * L
                fv[lpos[lam]] = Fraction(-1, w)
                expr.append((list(vec), fv, Fraction(pin_c[lam], w)))

        # linear coefficients of the free indices and the pure-cell part of
        # the valuation, for the per-cell ellipsoid boxes
        b0 = [Fraction(0)] * nf
        bc = [[Fraction(0)] * L for _ in range(nf)]
        c00 = Fraction(qc)
        cl = [Fraction(0)] * L
        cq = [[Fraction(0)] * L for _ in range(L)]

        def acc_quad(coeff: Fraction, ea, eb):
            nonlocal c00
            va, fa, ca = ea
            vb, fb, cb = eb
            for i in range(nf):
                if va[i]:
                    for a in range(L):
                        if fb[a]:
                            bc[i][a] += coeff * va[i] * fb[a]
                    if cb:
                        b0[i] += coeff * va[i] * cb
            for a in range(L):
                if fa[a]:
                    for j in range(nf):
                        if vb[j]:
                            bc[j][a] += coeff * fa[a] * vb[j]
                    for b in range(L):
                        if fb[b]:
                            cq[a][b] += coeff * fa[a] * fb[b]
                    if cb:
                        cl[a] += coeff * fa[a] * cb
            if ca:
                for j in range(nf):
                    if vb[j]:
                        b0[j] += coeff * ca * vb[j]
                for b in range(L):
                    if fb[b]:
                        cl[b] += coeff * ca * fb[b]
                if cb:
                    c00 += coeff * ca * cb

        for k in range(r):
            dk = Fraction(parts[k].d)
            acc_quad(dk / 2, expr[k], expr[k])
            vec, fv, ca = expr[k]
            coeff = Fraction(lin[k]) - dk / 2
            if coeff:
                for j in range(nf):
                    if vec[j]:
                        b0[j] += coeff * vec[j]
                for a in range(L):
                    if fv[a]:
                        cl[a] += coeff * fv[a]
                if ca:
                    c00 += coeff * ca
        for (k, l), c in quad.items():
            acc_quad(Fraction(c), expr[k], expr[l])

        # letter cell axes; strided when a lone theta forces divisibility
        axes: list[np.ndarray] = []
        for lam in letters:
            axis = np.arange(-nmax, nmax + 1, dtype=np.int64)
            ks = side.by_letter[lam]
            if len(ks) == 1:
                w = parts[ks[0]].wpow
                if abs(w) > 1:
                    axis = axis[(pin_c[lam] - axis) % w == 0]
            axes.append(axis)
        if any(a.shape[0] == 0 for a in axes):
            continue
        cellgrids = np.meshgrid(*[a.astype(np.float64) for a in axes], indexing="ij") if L else []
        cellshape = tuple(a.shape[0] for a in axes)

        # float valley geometry with integer slack: minimum value and
        # per-cell centers of the free-index ellipsoid v <= top
        base = np.full(cellshape, float(c00), dtype=np.float64)
        for a in range(L):
            if cl[a]:
                base = base + float(cl[a]) * cellgrids[a]
            for b in range(L):
                if cq[a][b]:
                    base = base + float(cq[a][b]) * cellgrids[a] * cellgrids[b]
        if nf:
            bvals = []
            for i in range(nf):
                bv = np.full(cellshape, float(b0[i]), dtype=np.float64)
                for a in range(L):
                    if bc[i][a]:
                        bv = bv + float(bc[i][a]) * cellgrids[a]
                bvals.append(bv)
            corr = np.zeros(cellshape, dtype=np.float64)
            centers = [np.zeros(cellshape, dtype=np.float64) for _ in range(nf)]
            for i in range(nf):
                for j in range(nf):
                    h = float(hinvf[i][j])
                    if h:
                        corr = corr + h * bvals[i] * bvals[j]
                        centers[i] = centers[i] - h * bvals[j]
            gam = base - corr / 2
        else:
            gam = base
            centers = []
        gmin = float(gam.min()) - 1.0 if gam.size else float(base) - 1.0
        if gmin > top:
            continue
        budget = top - gmin

        # sheared integer grids: free axis j covers the ellipsoid box
        # around the per-cell center
        iaxes = []
        shifts = []
        for j in range(nf):
            rad = int(math.ceil(math.sqrt(max(budget, 0.0) * 2.0 * float(hinvf[j][j])))) + 2
            iaxes.append(np.arange(-rad, rad + 1, dtype=np.int64))
            shifts.append(np.floor(centers[j]).astype(np.int64))
        shape = tuple(a.shape[0] for a in iaxes) + cellshape
        nv = len(shape)

        def as_axis(arr: np.ndarray, pos: int) -> np.ndarray:
            return arr.reshape(tuple(shape[i] if i == pos else 1 for i in range(nv)))

        ifree = [
            as_axis(iaxes[j], j) + shifts[j].reshape((1,) * nf + cellshape) for j in range(nf)
        ]
        ivals: list[np.ndarray] = [np.zeros(1, dtype=np.int64)] * r
        valid: np.ndarray | None = None
        for k in range(r):
            if k in ivars:
                ivals[k] = ifree[ivars[k]]
            else:
                vec, lam, w = subst[k]
                num = pin_c[lam] - as_axis(axes[lpos[lam]], nf + lpos[lam])
                for j in range(nf):
                    cj = vec[j] * w
                    if cj:
                        num = num + int(cj) * ifree[j]
                if abs(w) > 1:
                    ok = (num % w) == 0
                    valid = ok if valid is None else (valid & ok)
                ivals[k] = num // w

        v = np.zeros(shape, dtype=np.int64) + qc
        sig = np.zeros(shape, dtype=np.int64) + (sigma0 % 2)
        xi = np.zeros(shape, dtype=np.int64) + (xi0 % 3)
        for k in range(r):
            ik = ivals[k]
            v = v + parts[k].d * (ik * (ik - 1)) // 2
            if lin[k]:
                v = v + lin[k] * ik
            if parts[k].neg:
                sig = sig + ik
            if parts[k].ze:
                xi = xi - parts[k].ze * ik
        for (k, l), c in quad.items():
            v = v + c * ivals[k] * ivals[l]
        if valid is not None:
            v = np.where(valid, v, np.int64(1) << 40)
        vmin = int(v.min()) if v.size else 1 << 41
        if vmin > top:
            continue
        length = qmax - vmin
        if vmin < qlo:
            pad = [(0, 0)] * L + [(qlo - vmin, 0)]
            for p in primes:
                for key, arr in out[p].items():
                    out[p][key] = np.pad(arr, pad)
            qlo = vmin

        tq = np.arange(vmin, qmax, dtype=np.int64)
        e = tq.reshape((1,) * nv + (length,)) - v[..., None]
        mask = e >= 0
        eidx = np.clip(e, 0, length - 1)
        widx = (np.mod(sig, 2) * 3 + np.mod(xi, 3))[..., None]
        idxs = [ax + nmax for ax in axes] + [np.arange(vmin - qlo, qmax - qlo, dtype=np.intp)]
        for p in primes:
            tail = caches[p].get(eulers, tail_pairs, length)
            vals = wtabs[p][widx] * tail[eidx]
            vals *= mask
            contrib = vals.sum(axis=tuple(range(nf))) if nf else vals
            dest = out[p].get(cvec_t)
            if dest is None:
                dest = np.zeros(tuple([2 * nmax + 1] * L + [qmax - qlo]), dtype=np.int64)
                out[p][cvec_t] = dest
            dest[np.ix_(*idxs)] += contrib

    for p in primes:
        for arr in out[p].values():
            arr %= p
    return PsiCellGrid(qlo=qlo, nmax=nmax, data=out)


@dataclass(frozen=True)
class PsiProductReport:
    """Outcome of a modular windowed comparison of two Psi products.

    ``diffs`` holds cells whose residues disagree for at least one prime,
    each as (qexp, letter exps, central exps, lhs residues, rhs residues);
    ``cells`` counts window cells nonzero on either side.
    """

    passed: bool
    primes: tuple[int, ...]
    cells: int
    diffs: tuple
    qmax: int
    cmax: int
    elapsed: float

    def describe(self) -> str:
        if self.passed:
            return (
                f"psi product identity holds on the ({self.qmax}, {self.cmax}) "
                f"window ({self.cells} cells, primes {list(self.primes)})"
            )
        q, le, ce, lr, rr = self.diffs[0]
        return (
            f"{len(self.diffs)} mismatched cells, e.g. q^{q} letters {list(le)} "
            f"centrals {list(ce)}: {list(lr)} != {list(rr)} mod {list(self.primes)}"
        )


def _letters_of(sys: GeneratorSystem, factors: Sequence[PsiFactor]) -> tuple[int, ...]:
    return tuple(sorted({_factor_parts(sys, f).lidx for f in factors}))


def psi_product_cells(
    sys: GeneratorSystem,
    factors: Sequence[PsiFactor],
    window: AtomWindow,
    primes: Sequence[int] | None = None,
) -> PsiCellGrid:
    """Windowed cell residues of an ordered Psi product."""
    primes = tuple(primes) if primes else identity_primes()
    side = _Side(sys, factors, window, _letters_of(sys, factors))
    caches = {p: _TailCache(p) for p in primes}
    return _evaluate_side(side, primes, caches)


def verify_psi_product_identity(
    sys: GeneratorSystem,
    lhs: Sequence[PsiFactor],
    rhs: Sequence[PsiFactor],
    window: AtomWindow,
    primes: Sequence[int] | None = None,
) -> PsiProductReport:
    """Compare two Psi products coefficientwise on the window, modulo each
    prime independently; the report lists every disagreeing cell."""
    t0 = time.perf_counter()
    primes = tuple(primes) if primes else identity_primes()
    letters = tuple(sorted(set(_letters_of(sys, lhs)) | set(_letters_of(sys, rhs))))
    caches = {p: _TailCache(p) for p in primes}
    lgrid = _evaluate_side(_Side(sys, lhs, window, letters), primes, caches)
    rgrid = _evaluate_side(_Side(sys, rhs, window, letters), primes, caches)

    nmax = window.letter_bound()
    qlo = min(lgrid.qlo, rgrid.qlo)
    shape = tuple([2 * nmax + 1] * len(letters) + [window.qmax - qlo])
    zero = np.zeros(shape, dtype=np.int64)

    def aligned(grid: PsiCellGrid, p: int, cvec: tuple) -> np.ndarray:
        arr = grid.data[p].get(cvec)
        if arr is None:
            return zero
        pad = grid.qlo - qlo
        if pad:
            arr = np.pad(arr, [(0, 0)] * (arr.ndim - 1) + [(pad, 0)])
        return arr

    diffs = []
    nonzero = 0
    p0 = primes[0]
    keys = sorted(set(lgrid.data[p0]) | set(rgrid.data[p0]))
    for cvec in keys:
        larrs = [aligned(lgrid, p, cvec) for p in primes]
        rarrs = [aligned(rgrid, p, cvec) for p in primes]
        any_nonzero = np.zeros(shape, dtype=bool)
        bad = np.zeros(shape, dtype=bool)
        for la, ra in zip(larrs, rarrs):
            any_nonzero |= (la != 0) | (ra != 0)
            bad |= la != ra
        nonzero += int(any_nonzero.sum())
        for idx in np.argwhere(bad):
            tidx = tuple(idx)
            diffs.append(
                (
                    int(idx[-1]) + qlo,
                    tuple(int(i) - nmax for i in idx[:-1]),
                    cvec,
                    tuple(int(a[tidx]) for a in larrs),
                    tuple(int(a[tidx]) for a in rarrs),
                )
            )
    diffs.sort()
    return PsiProductReport(
        passed=not diffs,
        primes=tuple(primes),
        cells=nonzero,
        diffs=tuple(diffs),
        qmax=window.qmax,
        cmax=window.cmax,
        elapsed=time.perf_counter() - t0,
    )
