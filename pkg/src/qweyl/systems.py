"""Generator systems for the families the package verifies.

Each constructor returns a cached immutable :class:`GeneratorSystem`:

* ``quantum_affine_a(l)``: cyclic letters F_0..F_l with F_iF_{i+1} =
  q^{-1}F_{i+1}F_i, central parameters a_0..a_l, and the derived centrals
  p = a_0...a_l and c = F_0...F_l.
* ``classical_affine_a(l)``: the commutative counterpart (f_i, a_i, C = 0).
* ``rank2("b2" | "g2")``: two letters with F_2F_1 = q^d F_1F_2 (d = 2, 3).
* ``d5_system()``: letters F, G with FG = qGF, parameters a_0..a_5 and the
  derived centrals r, t, p with r^2 = p = a_0a_1a_2^2a_3^2a_4a_5 and
  t^2 = a_3^2a_4a_5.
* ``series_pair(d, ...)``: minimal two-letter systems for series work.
"""

from __future__ import annotations

from functools import lru_cache

from .core import DerivedCentral, GeneratorSystem, Monomial


def _product_monomial(names: tuple[str, ...], centrals: tuple[str, ...], powers: dict[str, int]) -> Monomial:
    letters = names + centrals
    exps = [0] * len(letters)
    for name, k in powers.items():
        exps[letters.index(name)] += k
    return Monomial(1, 0, tuple(exps))


@lru_cache(maxsize=None)
def quantum_affine_a(l: int) -> GeneratorSystem:
    """Quantum torus for the affine A_l family, l >= 2 (cyclic adjacency)."""
    if l < 2:
        raise ValueError("quantum affine A requires rank l >= 2")
    n = l + 1
    names = tuple(f"F{i}" for i in range(n))
    centrals = tuple(f"a{i}" for i in range(n)) + ("p", "c")
    comm = [[0] * n for _ in range(n)]
    for i in range(n):
        j = (i + 1) % n
        # F_j F_i = q F_i F_j for the oriented edge i -> i+1
        comm[j][i] += 1
        comm[i][j] -= 1
    p_mono = _product_monomial(names, centrals, {f"a{i}": 1 for i in range(n)})
    c_mono = _product_monomial(names, centrals, {f"F{i}": 1 for i in range(n)})
    return GeneratorSystem(
        name=f"quantum-a{l}",
        names=names,
        centrals=centrals,
        comm=tuple(tuple(row) for row in comm),
        derived=(DerivedCentral("p", 1, p_mono), DerivedCentral("c", 1, c_mono)),
    )


@lru_cache(maxsize=None)
def classical_affine_a(l: int) -> GeneratorSystem:
    """Commuting counterpart of quantum_affine_a: same layout, C = 0."""
    if l < 2:
        raise ValueError("classical affine A requires rank l >= 2")
    n = l + 1
    names = tuple(f"f{i}" for i in range(n))
    centrals = tuple(f"a{i}" for i in range(n)) + ("p", "c")
    comm = tuple(tuple(0 for _ in range(n)) for _ in range(n))
    p_mono = _product_monomial(names, centrals, {f"a{i}": 1 for i in range(n)})
    c_mono = _product_monomial(names, centrals, {f"f{i}": 1 for i in range(n)})
    return GeneratorSystem(
        name=f"classical-a{l}",
        names=names,
        centrals=centrals,
        comm=comm,
        derived=(DerivedCentral("p", 1, p_mono), DerivedCentral("c", 1, c_mono)),
    )


@lru_cache(maxsize=None)
def rank2(kind: str) -> GeneratorSystem:
    """Two-letter system with F2 F1 = q^d F1 F2 (d = 2 for b2, 3 for g2)."""
    degrees = {"b2": 2, "g2": 3}
    if kind not in degrees:
        raise ValueError(f"unknown rank-2 family {kind!r}")
    d = degrees[kind]
    return GeneratorSystem(
        name=kind,
        names=("F1", "F2"),
        centrals=("a1", "a2"),
        comm=((0, -d), (d, 0)),
    )


@lru_cache(maxsize=None)
def d5_system() -> GeneratorSystem:
    """Two-letter quantum torus FG = qGF with the six a-parameters.

    Derived centrals: p = a0 a1 a2^2 a3^2 a4 a5 (a letter of its own so
    translation images stay short), the square root r with r^2 = p, and t
    with t^2 = a3^2 a4 a5.
    """
    names = ("F", "G")
    centrals = ("a0", "a1", "a2", "a3", "a4", "a5", "r", "t", "p")
    p_pows = {"a0": 1, "a1": 1, "a2": 2, "a3": 2, "a4": 1, "a5": 1}
    t_pows = {"a3": 2, "a4": 1, "a5": 1}
    p_mono = _product_monomial(names, centrals, p_pows)
    t_mono = _product_monomial(names, centrals, t_pows)
    return GeneratorSystem(
        name="d5",
        names=names,
        centrals=centrals,
        comm=((0, 1), (-1, 0)),
        derived=(
            DerivedCentral("r", 2, p_mono),
            DerivedCentral("t", 2, t_mono),
            DerivedCentral("p", 1, p_mono),
        ),
    )


@lru_cache(maxsize=None)
def series_pair(
    d: int,
    centrals: tuple[str, ...] = (),
    names: tuple[str, ...] = ("F", "G"),
    label: str | None = None,
) -> GeneratorSystem:
    """Two noncommuting letters with names[1]*names[0] = q^d names[0]*names[1]."""
    return GeneratorSystem(
        name=label or f"pair{d}-{'-'.join(centrals) or 'none'}",
        names=names,
        centrals=centrals,
        comm=((0, -d), (d, 0)),
    )


@lru_cache(maxsize=None)
def series_single(
    centrals: tuple[str, ...] = (),
    name: str = "F",
    label: str | None = None,
) -> GeneratorSystem:
    """One torus letter plus central parameters (single-letter series work)."""
    return GeneratorSystem(
        name=label or f"single-{'-'.join(centrals) or 'none'}",
        names=(name,),
        centrals=centrals,
        comm=((0,),),
    )
