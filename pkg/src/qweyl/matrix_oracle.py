"""Randomized exact equality testing via clock-and-shift representations.

An antisymmetric integer matrix C decomposes under unimodular congruence as
E^T J E = C with J built from hyperbolic blocks [[0, d_k], [-d_k, 0]].  Each
block is realized over a prime field F_p (p = 1 mod N) by the clock matrix
U = diag(zeta^{d_k j}) and the cyclic shift V, which satisfy UV = zeta^{d_k}VU;
a generator with E-column y maps to a random nonzero scalar times the tensor
product of U_k^{y_{2k}} V_k^{y_{2k+1}}.  Every defining relation of the system
then holds exactly with q specialized to zeta, so a single exact mismatch
between two expressions falsifies the identity; agreement across several
root orders and trials is strong probabilistic evidence of equality.

All arithmetic is exact: integers mod p, with matrix products routed through
float64 BLAS (dimensions and p are small enough that products stay below
2^53).
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from sympy import factorint, isprime
from sympy.ntheory.residue_ntheory import sqrt_mod

from .core import (
    Expression,
    GeneratorSystem,
    Inv,
    Monomial,
    Prod,
    QTorusError,
    Sum,
)


class SingularSampleError(QTorusError):
    """A denominator vanished at this specialization; resample, don't fail."""


class BuildError(QTorusError):
    pass


# -- skew normal form ---------------------------------------------------------------


@dataclass(frozen=True)
class SkewNormalForm:
    E: tuple[tuple[int, ...], ...]
    blocks: tuple[int, ...]
    kernel_dim: int


def skew_normal_form(C: Sequence[Sequence[int]]) -> SkewNormalForm:
    """Decompose antisymmetric integer C as E^T·J·E with E unimodular.

    J is block-diagonal with blocks [[0, d_k], [-d_k, 0]] followed by zeros.
    Classic pivot-and-reduce: congruence transformations shrink the minimal
    nonzero entry until it divides everything it meets.
    """
    n = len(C)
    M = [list(map(int, row)) for row in C]
    for i in range(n):
        for j in range(n):
            if M[i][j] != -M[j][i]:
                raise BuildError("matrix is not antisymmetric")
    Uinv = [[int(i == j) for j in range(n)] for i in range(n)]

    def op_add(dst: int, src: int, f: int):
        # row dst += f*row src and col dst += f*col src; inverse op on Uinv cols
        for k in range(n):
            M[dst][k] += f * M[src][k]
        for k in range(n):
            M[k][dst] += f * M[k][src]
        for k in range(n):
            Uinv[k][src] -= f * Uinv[k][dst]

    def op_swap(i: int, j: int):
        M[i], M[j] = M[j], M[i]
        for k in range(n):
            M[k][i], M[k][j] = M[k][j], M[k][i]
        for k in range(n):
            Uinv[k][i], Uinv[k][j] = Uinv[k][j], Uinv[k][i]

    def op_negate(i: int):
        for k in range(n):
            M[i][k] = -M[i][k]
        for k in range(n):
            M[k][i] = -M[k][i]
        for k in range(n):
            Uinv[k][i] = -Uinv[k][i]

    blocks: list[int] = []
    b = 0
    while True:
        best = None
        for i in range(b, n):
            for j in range(b, n):
                if M[i][j] and (best is None or abs(M[i][j]) < abs(M[best[0]][best[1]])):
                    best = (i, j)
        if best is None:
            break
        i, j = best
        if i != b:
            op_swap(i, b)
            if j == b:
                j = i
        if j != b + 1:
            op_swap(j, b + 1)
        if M[b][b + 1] < 0:
            op_negate(b + 1)
        d = M[b][b + 1]
        # clear the rest of rows b and b+1; a nonzero remainder becomes a
        # smaller pivot and the outer loop retries
        clean = True
        for k in range(b + 2, n):
            # col k -= f col_{b+1} shifts M[b][k] by -f*d
            f = M[b][k] // d
            if f:
                op_add(k, b + 1, -f)
            if M[b][k]:
                clean = False
            # col k += f col_b shifts M[b+1][k] by -f*d
            f = M[b + 1][k] // d
            if f:
                op_add(k, b, f)
            if M[b + 1][k]:
                clean = False
        if clean:
            blocks.append(d)
            b += 2
    E = tuple(tuple(Uinv[j][i] for j in range(n)) for i in range(n))  # transpose
    return SkewNormalForm(E=E, blocks=tuple(blocks), kernel_dim=n - 2 * len(blocks))


# -- representation construction ------------------------------------------------------


def _smallest_prime(N: int, floor: int = 1 << 20) -> int:
    k = floor // N + 1
    while True:
        p = k * N + 1
        if isprime(p):
            return p
        k += 1
        if p > floor * 64:  # pragma: no cover
            raise BuildError(f"no prime found for N={N}")


def _root_of_unity(N: int, p: int) -> int:
    facs = list(factorint(N))
    for g in range(2, p):
        z = pow(g, (p - 1) // N, p)
        if z != 1 and all(pow(z, N // f, p) != 1 for f in facs):
            return z
    raise BuildError(f"no element of order {N} mod {p}")  # pragma: no cover


@dataclass
class MatrixRep:
    sys: GeneratorSystem
    N: int
    p: int
    zeta: int
    dim: int
    block_divisors: tuple[int, ...]
    # letter -> (scalar mod p, per-block (clock exp, shift exp))
    gen_data: dict[str, tuple[int, tuple[tuple[int, int], ...]]]
    gens: dict[str, np.ndarray]
    central_vals: dict[str, int]
    q_val: int


def _clock_shift_matrix(N: int, d: int, zeta: int, p: int, A: int, B: int) -> np.ndarray:
    """U^A V^B for the block with divisor d: entry [i, j] = w^{A i} [i = j+B]."""
    w = pow(zeta, d, p)
    i = np.arange(N)
    col = np.array([pow(w, int(A * k), p) for k in i], dtype=np.int64)
    out = np.zeros((N, N), dtype=np.int64)
    out[(i + B) % N, i % N] = col[(i + B) % N]
    return out


def _materialize(rep_blocks: tuple[int, ...], N: int, zeta: int, p: int,
                 scalar: int, ab: tuple[tuple[int, int], ...]) -> np.ndarray:
    mat = np.array([[scalar % p]], dtype=np.int64)
    for d, (A, B) in zip(rep_blocks, ab):
        mat = np.kron(mat, _clock_shift_matrix(N, d, zeta, p, A % N, B % N)) % p
    return mat


def build_representation(sys: GeneratorSystem, N: int, seed) -> MatrixRep:
    """Seeded representation with q = zeta of exact order N over F_p."""
    if N < 2:
        raise BuildError("root order must be >= 2")
    p = _smallest_prime(N)
    zeta = _root_of_unity(N, p)
    rng = np.random.default_rng(seed)
    snf = skew_normal_form(sys.comm)
    m = len(snf.blocks)
    n = sys.num_noncommuting

    gen_data: dict[str, tuple[int, tuple[tuple[int, int], ...]]] = {}
    for i, name in enumerate(sys.names):
        scalar = int(rng.integers(1, p))
        ab = tuple((snf.E[2 * k][i] % N, snf.E[2 * k + 1][i] % N) for k in range(m))
        gen_data[name] = (scalar, ab)

    gens = {
        name: _materialize(snf.blocks, N, zeta, p, sc, ab)
        for name, (sc, ab) in gen_data.items()
    }

    rep = MatrixRep(
        sys=sys, N=N, p=p, zeta=zeta, dim=N**m, block_divisors=snf.blocks,
        gen_data=gen_data, gens=gens, central_vals={}, q_val=zeta,
    )

    # soundness: every defining relation holds exactly in this sample
    for i in range(n):
        for j in range(i):
            gi, gj = gens[sys.names[i]], gens[sys.names[j]]
            lhs = _mat_mul(gi, gj, p)
            rhs = _mat_mul(gj, gi, p) * pow(zeta, sys.comm[i][j], p) % p
            if not np.array_equal(lhs, rhs):  # pragma: no cover
                raise BuildError(f"relation failed for {sys.names[i]},{sys.names[j]}")

    derived_names = set(sys.derived_by_name)
    free_centrals = [c for c in sys.centrals if c not in derived_names]
    for attempt in range(64):
        vals = {c: int(rng.integers(1, p)) for c in free_centrals}
        ok = True
        for d in sys.derived:
            target = _monomial_value(rep, d.product, vals)
            if isinstance(target, np.ndarray):
                target = _extract_scalar(target, p)
            if d.power == 1:
                vals[d.name] = target
            elif d.power == 2:
                root = sqrt_mod(target, p)
                if root is None:
                    ok = False
                    break
                if rng.integers(2):
                    root = p - root
                vals[d.name] = int(root)
            else:
                raise BuildError(f"unsupported derived power {d.power}")
        if ok:
            rep.central_vals = vals
            return rep
    raise BuildError("could not sample centrals with the required square roots")


def _extract_scalar(mat: np.ndarray, p: int) -> int:
    v = int(mat[0, 0])
    if not np.array_equal(mat, (np.eye(mat.shape[0], dtype=np.int64) * v) % p):
        raise BuildError("derived product did not evaluate to a scalar matrix")
    return v


# -- evaluation -----------------------------------------------------------------------


def _mat_mul(a: np.ndarray, b: np.ndarray, p: int) -> np.ndarray:
    return (a.astype(np.float64) @ b.astype(np.float64) % p).astype(np.int64)


def _mat_inv(a: np.ndarray, p: int) -> np.ndarray:
    """Exact inverse mod p via Gauss-Jordan carried in float64.

    Every intermediate is an exact integer of magnitude < 2**52 (p < 2**26),
    so float arithmetic is error-free.  Reduction uses a vectorized
    floor-multiply whose result may sit one p outside [0, p); entries are
    kept in that lazy range and only pivot residues and the final result are
    normalized exactly.  Columns left of the pivot are never read again, so
    updates run on the shrinking active block only.
    """
    n = a.shape[0]
    M = np.concatenate([a % p, np.eye(n, dtype=np.int64)], axis=1).astype(np.float64)
    buf = np.empty_like(M)
    fp, pinv = float(p), 1.0 / p
    for col in range(n):
        piv = col
        while piv < n and int(M[piv, col]) % p == 0:
            piv += 1
        if piv == n:
            raise SingularSampleError("matrix inverse at singular sample")
        if piv != col:
            M[[col, piv]] = M[[piv, col]]
        row = M[col]
        row *= float(pow(int(M[col, col]) % p, p - 2, p))
        rbuf = buf[0]
        np.multiply(row, pinv, out=rbuf)
        np.floor(rbuf, out=rbuf)
        rbuf *= fp
        row -= rbuf
        row[row < 0.0] += fp
        row[row >= fp] -= fp
        factors = M[:, col].copy()
        factors[col] = 0.0
        np.multiply.outer(factors, row, out=buf)
        M -= buf
        np.multiply(M, pinv, out=buf)
        np.floor(buf, out=buf)
        buf *= fp
        M -= buf
    out = M[:, n:]
    out[out < 0.0] += fp
    out[out >= fp] -= fp
    return out.astype(np.int64)


def _monomial_value(rep: MatrixRep, mono: Monomial, central_vals=None):
    """Exact value of a normal-ordered monomial; int when purely scalar.

    The torus part is accumulated blockwise as clock/shift exponents with the
    reordering phases tracked in the zeta exponent, then materialized once.
    """
    p = rep.p
    vals = rep.central_vals if central_vals is None else central_vals
    num = mono.scalar.numerator % p
    if num == 0:
        return 0
    scalar = num
    den = mono.scalar.denominator
    if den != 1:
        scalar = scalar * pow(den, p - 2, p) % p
    zexp = mono.qpow
    ncs = rep.sys.num_noncommuting
    for slot in range(ncs, rep.sys.width):
        e = mono.exps[slot]
        if e:
            scalar = scalar * pow(vals[rep.sys.letters[slot]], e, p) % p
    m = len(rep.block_divisors)
    acc = [(0, 0)] * m
    torus = False
    for slot in range(ncs):
        e = mono.exps[slot]
        if not e:
            continue
        torus = True
        sc, ab = rep.gen_data[rep.sys.letters[slot]]
        scalar = scalar * pow(sc, e, p) % p
        for k, (alpha, beta) in enumerate(ab):
            d = rep.block_divisors[k]
            A, B = acc[k]
            # (U^a V^b)^e = w^{-ab e(e-1)/2} U^{ea} V^{eb}; then
            # U^A V^B U^{ea} V^{eb} = w^{-B(ea)} U^{A+ea} V^{B+eb}, w = zeta^d
            zexp += -d * alpha * beta * (e * (e - 1) // 2)
            zexp += -d * B * (e * alpha)
            acc[k] = (A + e * alpha, B + e * beta)
    scalar = scalar * pow(rep.zeta, zexp % rep.N, p) % p
    if not torus:
        return scalar
    return _materialize(rep.block_divisors, rep.N, rep.zeta, p, scalar, tuple(acc))


def evaluate(e: Expression, rep: MatrixRep, memo: dict | None = None):
    """Value of e in rep: an int for central values, else an int64 matrix."""
    p = rep.p
    if memo is None:
        memo = {}

    def promote(v) -> np.ndarray:
        if isinstance(v, np.ndarray):
            return v
        return np.eye(rep.dim, dtype=np.int64) * (v % p)

    def walk(node: Expression):
        hit = memo.get(node)
        if hit is not None:
            return hit
        if isinstance(node, Monomial):
            out = _monomial_value(rep, node)
        elif isinstance(node, Sum):
            vals = [walk(c) for c in node.children]
            if any(isinstance(v, np.ndarray) for v in vals):
                out = promote(0)
                for v in vals:
                    out = (out + promote(v)) % p
            else:
                out = sum(vals) % p
        elif isinstance(node, Prod):
            out = 1
            for c in node.children:
                v = walk(c)
                if isinstance(out, np.ndarray) and isinstance(v, np.ndarray):
                    out = _mat_mul(out, v, p)
                elif isinstance(out, np.ndarray):
                    out = out * (v % p) % p
                elif isinstance(v, np.ndarray):
                    out = v * (out % p) % p
                else:
                    out = out * v % p
        elif isinstance(node, Inv):
            v = walk(node.child)
            if isinstance(v, np.ndarray):
                out = _mat_inv(v, p)
            else:
                if v % p == 0:
                    raise SingularSampleError("scalar inverse of zero sample")
                out = pow(v, p - 2, p)
        else:  # pragma: no cover
            raise QTorusError(f"unknown node {type(node)!r}")
        memo[node] = out
        return out

    return walk(e)


def values_equal(v1, v2, rep: MatrixRep) -> bool:
    a1, a2 = isinstance(v1, np.ndarray), isinstance(v2, np.ndarray)
    if a1 and a2:
        return np.array_equal(v1 % rep.p, v2 % rep.p)
    if not a1 and not a2:
        return (v1 - v2) % rep.p == 0
    mat, sc = (v1, v2) if a1 else (v2, v1)
    return np.array_equal(mat % rep.p, np.eye(rep.dim, dtype=np.int64) * (sc % rep.p))


# -- randomized equality --------------------------------------------------------------


@dataclass(frozen=True)
class OracleConfig:
    orders: tuple[int, ...] = (5, 7, 8, 9, 11, 13)
    trials: int = 4
    seed: int = 0
    retries: int = 8

    def replace(self, **kw) -> "OracleConfig":
        return dataclasses.replace(self, **kw)


@dataclass(frozen=True)
class Verdict:
    status: str  # equal | unequal | inconclusive
    witness: tuple | None = None  # (key, value) pairs, JSON-friendly

    @property
    def is_equal(self) -> bool:
        return self.status == "equal"

    def witness_dict(self) -> dict | None:
        return dict(self.witness) if self.witness is not None else None


def randomized_equal_many(
    sys: GeneratorSystem,
    pairs: Sequence[tuple[Expression, Expression]],
    config: OracleConfig = OracleConfig(),
) -> list[Verdict]:
    """Verdicts for many pairs sharing representations (deterministic in seed).

    A pair is unequal as soon as one exact mismatch appears (definitive),
    inconclusive if for some order every trial exhausted its retry budget on
    singular samples, and equal otherwise.
    """
    k = len(pairs)
    status = ["equal"] * k
    witness: list[tuple | None] = [None] * k
    for N in config.orders:
        singular_trials = [0] * k
        for trial in range(config.trials):
            reps: dict[int, MatrixRep] = {}
            memos: dict[int, dict] = {}

            def get_rep(retry: int) -> MatrixRep:
                if retry not in reps:
                    reps[retry] = build_representation(
                        sys, N, [config.seed, N, trial, retry]
                    )
                    memos[retry] = {}
                return reps[retry]

            for idx, (e1, e2) in enumerate(pairs):
                if status[idx] == "unequal":
                    continue
                for retry in range(config.retries):
                    rep = get_rep(retry)
                    try:
                        v1 = evaluate(e1, rep, memos[retry])
                        v2 = evaluate(e2, rep, memos[retry])
                    except SingularSampleError:
                        continue
                    if not values_equal(v1, v2, rep):
                        status[idx] = "unequal"
                        witness[idx] = (
                            ("N", N), ("p", rep.p), ("trial", trial),
                            ("retry", retry), ("seed", config.seed),
                        )
                    break
                else:
                    singular_trials[idx] += 1
        for idx in range(k):
            if status[idx] == "equal" and singular_trials[idx] == config.trials:
                status[idx] = "inconclusive"
                witness[idx] = (("N", N), ("seed", config.seed))
    return [Verdict(status=s, witness=w) for s, w in zip(status, witness)]


def randomized_equal(
    sys: GeneratorSystem,
    e1: Expression,
    e2: Expression,
    config: OracleConfig = OracleConfig(),
) -> Verdict:
    return randomized_equal_many(sys, [(e1, e2)], config)[0]
