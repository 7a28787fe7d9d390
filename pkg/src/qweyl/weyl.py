"""Affine Weyl group actions on quantum tori by explicit birational tables.

Every reflection s_i acts on the central letters through the Cartan rule
a_j -> a_i^{-a_ij} a_j and on the noncommuting letters by one-sided
multiplication with short products of binomial fractions in the letter the
reflection is attached to.  Diagram maps permute letters; some of them only
extend to the skew field as anti-automorphisms (product-reversing).

The module builds these endomorphism tables for the supported families
(cyclic quantum and classical ranks, the two non-simply-laced rank-2 tori,
and the six-node fork diagram acting on an FG = qGF torus), expands group
words into expression images, and decides relations by an exact structural
pass with the randomized matrix oracle as fallback.  Words are tuples of
generator names, leftmost factor written first, rightmost factor applied
first, so a relation u = v is checked as u(x) = v(x) on probe letters x.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Mapping, Sequence

from .core import (
    ANTI,
    AUTO,
    Endomorphism,
    Expression,
    GeneratorSystem,
    Monomial,
    Sum,
    add,
    canonicalize_light,
    expand_derived,
    inv,
    make_endomorphism,
    mul,
    power,
    structurally_equal,
)
from .matrix_oracle import OracleConfig, randomized_equal_many
from .systems import classical_affine_a, d5_system, quantum_affine_a, rank2

# -- Cartan data ----------------------------------------------------------------------


def cyclic_cartan(n: int) -> tuple[tuple[int, ...], ...]:
    """Affine Cartan matrix on n >= 3 cyclically adjacent nodes."""
    rows = []
    for i in range(n):
        row = [0] * n
        row[i] = 2
        row[(i + 1) % n] -= 1
        row[(i - 1) % n] -= 1
        rows.append(tuple(row))
    return tuple(rows)


D5_EDGES = ((0, 2), (1, 2), (2, 3), (3, 4), (3, 5))

RANK2_CARTAN = {"b2": ((2, -1), (-2, 2)), "g2": ((2, -1), (-3, 2))}


def tree_cartan(n: int, edges: Sequence[tuple[int, int]]) -> tuple[tuple[int, ...], ...]:
    rows = [[2 * (i == j) for j in range(n)] for i in range(n)]
    for i, j in edges:
        rows[i][j] = rows[j][i] = -1
    return tuple(tuple(r) for r in rows)


# -- family container -----------------------------------------------------------------


@dataclass(frozen=True)
class RelationSpec:
    """One relation u = v between group words (empty word = identity)."""

    name: str
    lhs: tuple[str, ...]
    rhs: tuple[str, ...]


@dataclass(frozen=True)
class WeylFamily:
    key: str
    sys: GeneratorSystem
    gens: Mapping[str, Endomorphism]
    relations: tuple[RelationSpec, ...]
    probes: tuple[str, ...]

    def apply(self, word: Sequence[str], e: Expression) -> Expression:
        """Image of e under the word, rightmost generator applied first."""
        for name in reversed(word):
            e = self.gens[name](e)
        return e

    def letter_image(self, word: Sequence[str], letter: str) -> Expression:
        return self.apply(word, self.sys.gen(letter))


def _cartan_a_images(sys: GeneratorSystem, cartan, i: int, a_names: Sequence[str]) -> dict:
    """Images a_j -> a_i^{-a_ij} a_j for one reflection (identity rows omitted)."""
    images = {}
    for j, name in enumerate(a_names):
        c = cartan[i][j]
        if c:
            images[name] = mul(sys, sys.gen(a_names[i], -c), sys.gen(name))
    return images


# -- cyclic rank-l families -------------------------------------------------------------


def _rotation(sys: GeneratorSystem, name: str, step: int) -> Endomorphism:
    n = sys.num_noncommuting
    images = {}
    for i in range(n):
        images[sys.names[i]] = sys.gen(sys.names[(i + step) % n])
        images[f"a{i}"] = sys.gen(f"a{(i + step) % n}")
    return make_endomorphism(sys, name, images)


def _quantum_a_reflection(sys: GeneratorSystem, i: int) -> Endomorphism:
    n = sys.num_noncommuting
    lo, hi = (i - 1) % n, (i + 1) % n
    ai, Fi = sys.gen(f"a{i}"), sys.gen(f"F{i}")
    pos = add(sys, ai, Fi)
    unit = add(sys, sys.one, mul(sys, ai, Fi))
    images = _cartan_a_images(sys, cyclic_cartan(n), i, [f"a{j}" for j in range(n)])
    images[f"F{lo}"] = mul(sys, unit, inv(sys, pos), sys.gen(f"F{lo}"))
    images[f"F{hi}"] = mul(sys, sys.gen(f"F{hi}"), pos, inv(sys, unit))
    return make_endomorphism(sys, f"s{i}", images)


def _classical_a_reflection(sys: GeneratorSystem, i: int) -> Endomorphism:
    n = sys.num_noncommuting
    lo, hi = (i - 1) % n, (i + 1) % n
    ai, fi = sys.gen(f"a{i}"), sys.gen(f"f{i}")
    ratio = mul(sys, add(sys, ai, fi), inv(sys, add(sys, sys.one, mul(sys, ai, fi))))
    images = _cartan_a_images(sys, cyclic_cartan(n), i, [f"a{j}" for j in range(n)])
    images[f"f{hi}"] = mul(sys, sys.gen(f"f{hi}"), ratio)
    images[f"f{lo}"] = mul(sys, sys.gen(f"f{lo}"), inv(sys, ratio))
    return make_endomorphism(sys, f"s{i}", images)


def cyclic_coxeter_relations(n: int) -> tuple[RelationSpec, ...]:
    """Orders, adjacent braid relations and non-adjacent commutations."""
    rels = [RelationSpec(f"s{i}^2 = e", (f"s{i}", f"s{i}"), ()) for i in range(n)]
    for i in range(n):
        j = (i + 1) % n
        rels.append(
            RelationSpec(
                f"s{i} s{j} s{i} = s{j} s{i} s{j}",
                (f"s{i}", f"s{j}", f"s{i}"),
                (f"s{j}", f"s{i}", f"s{j}"),
            )
        )
    for i in range(n):
        for j in range(i + 1, n):
            if (i - j) % n in (1, n - 1):
                continue
            rels.append(
                RelationSpec(
                    f"s{i} s{j} = s{j} s{i}",
                    (f"s{i}", f"s{j}"),
                    (f"s{j}", f"s{i}"),
                )
            )
    return tuple(rels)


def rotation_conjugation_relations(n: int) -> tuple[RelationSpec, ...]:
    return tuple(
        RelationSpec(
            f"w s{i} w^-1 = s{(i + 1) % n}",
            ("w", f"s{i}", "w_inv"),
            (f"s{(i + 1) % n}",),
        )
        for i in range(n)
    )


@lru_cache(maxsize=None)
def quantum_a_family(l: int) -> WeylFamily:
    sys = quantum_affine_a(l)
    n = l + 1
    gens = {f"s{i}": _quantum_a_reflection(sys, i) for i in range(n)}
    gens["w"] = _rotation(sys, "w", 1)
    gens["w_inv"] = _rotation(sys, "w_inv", -1)
    probes = tuple(f"F{i}" for i in range(n)) + tuple(f"a{i}" for i in range(n))
    return WeylFamily(
        key=f"quantum-a{l}",
        sys=sys,
        gens=gens,
        relations=cyclic_coxeter_relations(n),
        probes=probes,
    )


@lru_cache(maxsize=None)
def classical_a_family(l: int) -> WeylFamily:
    sys = classical_affine_a(l)
    n = l + 1
    gens = {f"s{i}": _classical_a_reflection(sys, i) for i in range(n)}
    gens["w"] = _rotation(sys, "w", 1)
    gens["w_inv"] = _rotation(sys, "w_inv", -1)
    probes = tuple(f"f{i}" for i in range(n)) + tuple(f"a{i}" for i in range(n))
    return WeylFamily(
        key=f"classical-a{l}",
        sys=sys,
        gens=gens,
        relations=cyclic_coxeter_relations(n),
        probes=probes,
    )


# -- rank-2 families ----------------------------------------------------------------------


def _rank2_reflections(sys: GeneratorSystem, d: int) -> dict[str, Endomorphism]:
    """Reflections for the torus F2 F1 = q^d F1 F2, Cartan rows (2,-1), (-d,2).

    s1 conjugates F2 through d binomial steps of F1; s2 conjugates F1 through
    a single step of F2 scaled by q^d and the d-th power of its parameter.
    """
    a1, a2 = sys.gen("a1"), sys.gen("a2")
    F1, F2 = sys.gen("F1"), sys.gen("F2")
    factors = [F2]
    for m in range(d):
        shifted = mul(sys, sys.q(-m), F1)
        factors.append(mul(sys, add(sys, a1, shifted),
                           inv(sys, add(sys, sys.one, mul(sys, a1, shifted)))))
    s1 = make_endomorphism(sys, "s1", {
        "a1": sys.gen("a1", -1),
        "a2": mul(sys, a1, a2),
        "F2": mul(sys, *factors),
    })
    a2d = sys.gen("a2", d)
    qdF2 = mul(sys, sys.q(d), F2)
    s2 = make_endomorphism(sys, "s2", {
        "a2": sys.gen("a2", -1),
        "a1": mul(sys, a2d, a1),
        "F1": mul(sys, F1, add(sys, sys.one, mul(sys, a2d, qdF2)),
                  inv(sys, add(sys, a2d, qdF2))),
    })
    return {"s1": s1, "s2": s2}


def rank2_braid_relations(kind: str) -> tuple[RelationSpec, ...]:
    half = {"b2": 2, "g2": 3}[kind]
    lhs = ("s1", "s2") * half
    rhs = ("s2", "s1") * half
    rels = [
        RelationSpec("s1^2 = e", ("s1", "s1"), ()),
        RelationSpec("s2^2 = e", ("s2", "s2"), ()),
        RelationSpec(f"{' '.join(lhs)} = {' '.join(rhs)}", lhs, rhs),
    ]
    return tuple(rels)


@lru_cache(maxsize=None)
def rank2_family(kind: str) -> WeylFamily:
    sys = rank2(kind)
    d = {"b2": 2, "g2": 3}[kind]
    return WeylFamily(
        key=kind,
        sys=sys,
        gens=_rank2_reflections(sys, d),
        relations=rank2_braid_relations(kind),
        probes=("F1", "F2", "a1", "a2"),
    )


# -- fork-diagram family on the FG = qGF torus ---------------------------------------------


D5_SIGMA_PERM = (1, 0, 2, 3, 5, 4)


def _d5_reflection(sys: GeneratorSystem, cartan, i: int) -> Endomorphism:
    images = _cartan_a_images(sys, cartan, i, [f"a{j}" for j in range(6)])
    if i == 2:
        images["t"] = mul(sys, sys.gen("a2"), sys.gen("t"))
        m = sys.mono({"a0": 1, "a1": -1})
        b = sys.gen("a2", 2)
        G = sys.gen("G")
        images["F"] = mul(
            sys,
            sys.gen("F"),
            add(sys, mul(sys, m, G), b),
            inv(sys, add(sys, mul(sys, m, b, G), sys.one)),
        )
    elif i == 3:
        images["t"] = mul(sys, sys.gen("a3", -1), sys.gen("t"))
        u = mul(sys, sys.mono({"a4": 1, "a5": -1}), sys.gen("F"))
        b = sys.gen("a3", 2)
        images["G"] = mul(
            sys,
            add(sys, mul(sys, b, u), sys.one),
            inv(sys, add(sys, u, b)),
            sys.gen("G"),
        )
    else:
        images["t"] = sys.gen("t")
    images["r"] = sys.gen("r")
    return make_endomorphism(sys, f"s{i}", images)


def _d5_diagram_maps(sys: GeneratorSystem) -> dict[str, Endomorphism]:
    """The three product-reversing diagram maps and their composite."""

    def inverted_a(j: int) -> Expression:
        return sys.gen(f"a{j}", -1)

    sigma01 = make_endomorphism(sys, "sigma01", {
        "a0": inverted_a(1), "a1": inverted_a(0),
        **{f"a{j}": inverted_a(j) for j in range(2, 6)},
        "F": mul(sys, sys.q(-1), sys.gen("F", -1)),
        "G": sys.gen("G"),
        "t": sys.gen("t", -1),
        "r": sys.gen("r", -1),
    }, parity=ANTI)
    sigma45 = make_endomorphism(sys, "sigma45", {
        "a4": inverted_a(5), "a5": inverted_a(4),
        **{f"a{j}": inverted_a(j) for j in range(4)},
        "F": sys.gen("F"),
        "G": mul(sys, sys.q(-1), sys.gen("G", -1)),
        "t": sys.gen("t", -1),
        "r": sys.gen("r", -1),
    }, parity=ANTI)
    tau = make_endomorphism(sys, "tau", {
        **{f"a{j}": inverted_a(5 - j) for j in range(6)},
        "F": sys.gen("G"),
        "G": sys.gen("F"),
        "t": sys.mono({"t": 1, "r": -1}),
        "r": sys.gen("r", -1),
    }, parity=ANTI)
    sigma = compose_endomorphisms(sys, "sigma", sigma01, sigma45)
    return {"sigma01": sigma01, "sigma45": sigma45, "tau": tau, "sigma": sigma}


def compose_endomorphisms(
    sys: GeneratorSystem, name: str, outer: Endomorphism, inner: Endomorphism
) -> Endomorphism:
    """Table for outer∘inner; parity multiplies (two reversals cancel)."""
    parity = AUTO if outer.parity == inner.parity else ANTI
    images = {x: outer(inner.images[x]) for x in (*sys.letters, "q")}
    return Endomorphism(sys, name, parity, images)


def d5_coxeter_relations() -> tuple[RelationSpec, ...]:
    cartan = tree_cartan(6, D5_EDGES)
    rels = [RelationSpec(f"s{i}^2 = e", (f"s{i}", f"s{i}"), ()) for i in range(6)]
    for i in range(6):
        for j in range(i + 1, 6):
            if cartan[i][j]:
                rels.append(
                    RelationSpec(
                        f"s{i} s{j} s{i} = s{j} s{i} s{j}",
                        (f"s{i}", f"s{j}", f"s{i}"),
                        (f"s{j}", f"s{i}", f"s{j}"),
                    )
                )
            else:
                rels.append(
                    RelationSpec(
                        f"s{i} s{j} = s{j} s{i}",
                        (f"s{i}", f"s{j}"),
                        (f"s{j}", f"s{i}"),
                    )
                )
    return tuple(rels)


def d5_diagram_relations() -> tuple[RelationSpec, ...]:
    rels = [
        RelationSpec("sigma01^2 = e", ("sigma01", "sigma01"), ()),
        RelationSpec("sigma45^2 = e", ("sigma45", "sigma45"), ()),
        RelationSpec("tau^2 = e", ("tau", "tau"), ()),
        RelationSpec("sigma01 sigma45 = sigma", ("sigma01", "sigma45"), ("sigma",)),
        RelationSpec("sigma45 sigma01 = sigma", ("sigma45", "sigma01"), ("sigma",)),
    ]
    for j, img in enumerate(D5_SIGMA_PERM):
        rels.append(
            RelationSpec(
                f"sigma s{j} sigma = s{img}",
                ("sigma", f"s{j}", "sigma"),
                (f"s{img}",),
            )
        )
    return tuple(rels)


@lru_cache(maxsize=None)
def d5_family() -> WeylFamily:
    sys = d5_system()
    cartan = tree_cartan(6, D5_EDGES)
    gens = {f"s{i}": _d5_reflection(sys, cartan, i) for i in range(6)}
    gens.update(_d5_diagram_maps(sys))
    probes = ("F", "G") + tuple(f"a{i}" for i in range(6)) + ("t", "r")
    return WeylFamily(
        key="d5",
        sys=sys,
        gens=gens,
        relations=d5_coxeter_relations() + d5_diagram_relations(),
        probes=probes,
    )


# -- consistency pair generators -------------------------------------------------------------


def torus_relation_pairs(
    family: WeylFamily, gen_names: Sequence[str] | None = None
) -> list[tuple[str, Expression, Expression]]:
    """Each map must respect every torus relation g_i g_j = q^C g_j g_i.

    Anti maps reverse the relation before comparison.  Returns labelled
    expression pairs ready for the equality checker.
    """
    sys = family.sys
    out = []
    for name in gen_names if gen_names is not None else sorted(family.gens):
        phi = family.gens[name]
        anti = phi.parity == ANTI
        for i in range(sys.num_noncommuting):
            gi = phi(sys.gen(sys.names[i]))
            for j in range(i):
                if not sys.comm[i][j]:
                    continue
                gj = phi(sys.gen(sys.names[j]))
                twist = sys.q(sys.comm[i][j])
                if anti:
                    lhs, rhs = mul(sys, gj, gi), mul(sys, twist, gi, gj)
                else:
                    lhs, rhs = mul(sys, gi, gj), mul(sys, twist, gj, gi)
                label = f"{name} keeps {sys.names[i]} {sys.names[j]} = q^{sys.comm[i][j]} {sys.names[j]} {sys.names[i]}"
                out.append((label, lhs, rhs))
    return out


def derived_consistency_pairs(
    family: WeylFamily, gen_names: Sequence[str] | None = None
) -> list[tuple[str, Expression, Expression]]:
    """Images of constrained centrals must satisfy image(x)^k = image(defining product)."""
    sys = family.sys
    out = []
    for name in gen_names if gen_names is not None else sorted(family.gens):
        phi = family.gens[name]
        for d in sys.derived:
            lhs = power(sys, phi(sys.gen(d.name)), d.power)
            rhs = phi(d.product)
            out.append((f"{name}({d.name})^{d.power} consistent", lhs, rhs))
    return out


# -- equality decisions -----------------------------------------------------------------------


def monomial_table(e: Expression) -> dict | None:
    """Exact coefficient map of a flat monomial sum, else None."""
    if isinstance(e, Monomial):
        return {} if e.is_zero else {(e.qpow, e.exps): e.scalar}
    if isinstance(e, Sum) and all(isinstance(c, Monomial) for c in e.children):
        out: dict = {}
        for c in e.children:
            key = (c.qpow, c.exps)
            val = out.get(key, Fraction(0)) + c.scalar
            if val:
                out[key] = val
            else:
                out.pop(key, None)
        return out
    return None


def exact_verdict(sys: GeneratorSystem, e1: Expression, e2: Expression) -> str | None:
    """"equal"/"unequal" when decidable without sampling, else None."""
    c1 = canonicalize_light(sys, e1)
    c2 = canonicalize_light(sys, e2)
    if structurally_equal(c1, c2):
        return "equal"
    d1 = expand_derived(sys, c1)
    d2 = expand_derived(sys, c2)
    if structurally_equal(d1, d2):
        return "equal"
    t1, t2 = monomial_table(d1), monomial_table(d2)
    if t1 is not None and t2 is not None:
        return "equal" if t1 == t2 else "unequal"
    return None


def expressions_equal_many(
    sys: GeneratorSystem,
    pairs: Sequence[tuple[Expression, Expression]],
    config: OracleConfig = OracleConfig(),
) -> list[tuple[str, str, tuple | None]]:
    """(status, method, witness) per pair; exact passes settle before sampling.

    Oracle pairs are batched so representations are built once per
    (order, trial) across the whole batch.
    """
    results: list[tuple[str, str, tuple | None] | None] = [None] * len(pairs)
    pending = []
    for k, (e1, e2) in enumerate(pairs):
        v = exact_verdict(sys, e1, e2)
        if v is None:
            pending.append(k)
        else:
            results[k] = (v, "exact", None)
    if pending:
        verdicts = randomized_equal_many(sys, [pairs[k] for k in pending], config)
        for k, v in zip(pending, verdicts):
            results[k] = (v.status, "oracle", v.witness)
    return results  # type: ignore[return-value]


def expressions_equal(
    sys: GeneratorSystem,
    e1: Expression,
    e2: Expression,
    config: OracleConfig = OracleConfig(),
) -> tuple[str, str, tuple | None]:
    return expressions_equal_many(sys, [(e1, e2)], config)[0]


@dataclass(frozen=True)
class RelationOutcome:
    relation: str
    probe: str
    status: str  # equal | unequal | inconclusive
    method: str  # exact | oracle
    witness: tuple | None = None

    @property
    def passed(self) -> bool:
        return self.status == "equal"


def check_relations(
    family: WeylFamily,
    config: OracleConfig = OracleConfig(),
    relations: Sequence[RelationSpec] | None = None,
    probes: Sequence[str] | None = None,
) -> list[RelationOutcome]:
    """Outcome of every relation on every probe letter."""
    relations = family.relations if relations is None else relations
    probes = family.probes if probes is None else probes
    tasks = []
    for rel in relations:
        for x in probes:
            e = family.sys.gen(x)
            tasks.append((rel.name, x, family.apply(rel.lhs, e), family.apply(rel.rhs, e)))
    settled = expressions_equal_many(family.sys, [(a, b) for _, _, a, b in tasks], config)
    return [
        RelationOutcome(name, x, status, method, witness)
        for (name, x, _, _), (status, method, witness) in zip(tasks, settled)
    ]


def check_labelled_pairs(
    sys: GeneratorSystem,
    labelled: Sequence[tuple[str, Expression, Expression]],
    config: OracleConfig = OracleConfig(),
) -> list[RelationOutcome]:
    settled = expressions_equal_many(sys, [(a, b) for _, a, b in labelled], config)
    return [
        RelationOutcome(label, "-", status, method, witness)
        for (label, _, _), (status, method, witness) in zip(labelled, settled)
    ]
