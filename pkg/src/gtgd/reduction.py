"""Clique-reduction constructions and finite witness search.

The central object is a product-style database built from a graph, a pair of
nested databases, a distinguished element set, and a grid minor map of the
set's co-occurrence graph.  Reduction lemma properties are verified by brute
force at desk scale rather than assumed.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

from .chase import ChaseBudget, chase, ground_chase
from .classify import classify_set
from .decide import Budget, _certain_member, cqs_contains, enumerate_models
from .errors import (
    BudgetError,
    InvalidMinorMapError,
    LemmaPreconditionError,
    ModelError,
    NoGridMinorError,
    NotASubsetError,
    NotGuardedError,
    PreconditionViolatedError,
    WitnessNotFoundError,
)
from .homs import core, eval_query, find_homomorphisms, holds
from .model import (
    CQ,
    CQS,
    UCQ,
    Atom,
    Const,
    Instance,
    TGD,
    Term,
    Var,
    canonical_database,
    term_key,
)
from .tw import Graph, MinorMap, exact_treewidth, gaifman, grid_minor


def colex_pairs(k: int) -> List[Tuple[int, int]]:
    """Two-element subsets of [k], colexicographic, as ordered (low, high)."""

    out = []
    for hi in range(2, k + 1):
        for lo in range(1, hi):
            out.append((lo, hi))
    return out


def pair_index(k: int) -> Dict[frozenset, int]:
    return {frozenset(p): c for c, p in enumerate(colex_pairs(k), start=1)}


def labelled_cliques(g: Graph, indices: Sequence[int]):
    """All clique-valued assignments of graph vertices to the given indices.

    Images of distinct indices must be adjacent (hence distinct).  Yields
    dicts in deterministic order; the empty assignment when indices is empty.
    """

    indices = sorted(set(indices))

    def extend(pos: int, acc: dict):
        if pos == len(indices):
            yield dict(acc)
            return
        i = indices[pos]
        for v in g.vertices:
            if all(g.has_edge(v, w) for w in acc.values()):
                acc[i] = v
                yield from extend(pos + 1, acc)
                del acc[i]

    yield from extend(0, {})


@dataclass(frozen=True)
class LabelledClique:
    eta: tuple  # sorted ((index, vertex), ...)

    @staticmethod
    def of(mapping: dict) -> "LabelledClique":
        return LabelledClique(tuple(sorted(mapping.items())))

    def as_dict(self) -> dict:
        return dict(self.eta)

    def validate(self, g: Graph) -> bool:
        items = self.eta
        for a in range(len(items)):
            for b in range(a + 1, len(items)):
                if not g.has_edge(items[a][1], items[b][1]):
                    return False
        return True


def _tuple_const(v: str, e: Tuple[str, str], i: int, p: Tuple[int, int], z: str) -> Const:
    ea, eb = sorted(e)
    pa, pb = sorted(p)
    return Const(f"({v};{ea}+{eb};{i};{pa}+{pb};{z})")


@dataclass(frozen=True)
class GroheDb:
    dstar: Instance
    h0: dict  # adom(dstar) -> adom(dprime)
    chi: dict  # frozenset pair of [k] -> [K]
    graph: Graph
    k: int
    d: Instance
    dprime: Instance
    a: frozenset
    mu: MinorMap


def _restricted_gaifman(d: Instance, a_names) -> Graph:
    return gaifman(d, on_instance=True).subgraph(a_names)


def grohe_db(
    g: Graph, k: int, d: Instance, dprime: Instance, a: Iterable[Const], mu: MinorMap
) -> GroheDb:
    """Product database whose homomorphisms from `d` encode k-cliques of `g`.

    Elements of `a` are split into tuple constants carrying a clique label,
    an edge, and the element's grid cell; everything else is copied.  Facts
    survive once per labelled clique that covers all their `a`-elements, and
    covering assignments are determined up to the clique labelling because
    branch sets are disjoint.
    """

    if k < 2:
        raise ModelError("k must be at least 2")
    a_set = frozenset(a)
    adom_d = set(d.adom)
    if not a_set <= adom_d:
        raise NotASubsetError("distinguished elements must come from the inner database")
    if not set(d.atoms) <= set(dprime.atoms):
        raise PreconditionViolatedError("inner database is not contained in the outer one")

    kk = k * (k - 1) // 2
    if mu.rows != k or mu.cols != kk:
        raise InvalidMinorMapError(
            f"minor map has shape {mu.rows}x{mu.cols}, expected {k}x{kk}"
        )
    a_names = sorted(c.name for c in a_set)
    ga = _restricted_gaifman(d, a_names)
    problems = mu.validate(ga)
    if problems:
        raise InvalidMinorMapError("; ".join(problems))
    covered = {v for _, _, s in mu.branch for v in s}
    if covered != set(a_names):
        raise InvalidMinorMapError("branch sets do not cover the distinguished set exactly")

    chi = pair_index(k)
    pair_of = {idx: tuple(sorted(pr)) for pr, idx in chi.items()}
    cell_of = mu.cell_of()

    atoms = []
    h0: Dict[Const, Const] = {}
    eta_cache: Dict[tuple, list] = {}
    for fact in dprime.atoms:
        needed: List[int] = []
        plan: Dict[Const, Tuple[int, Tuple[int, int]]] = {}
        for t in fact.args:
            if t in a_set and t not in plan:
                i, col = cell_of[t.name]
                p = pair_of[col]
                plan[t] = (i, p)
                needed.extend((i,) + p)
        key = tuple(sorted(set(needed)))
        if key not in eta_cache:
            eta_cache[key] = list(labelled_cliques(g, key))
        for eta in eta_cache[key]:
            args = []
            for t in fact.args:
                if t in plan:
                    i, p = plan[t]
                    j, l = p
                    c = _tuple_const(eta[i], (eta[j], eta[l]), i, p, t.name)
                    h0[c] = t
                    args.append(c)
                else:
                    h0[t] = t
                    args.append(t)
            atoms.append(Atom(fact.pred, tuple(args)))

    dstar = Instance(atoms)
    h0 = {c: h0[c] for c in dstar.adom}
    return GroheDb(dstar, h0, dict(chi), g, k, d, dprime, a_set, mu)


def _is_instance_hom(src: Instance, dst: Instance, h: dict) -> bool:
    for atom in src.atoms:
        if Atom(atom.pred, tuple(h.get(t, t) for t in atom.args)) not in dst:
            return False
    return True


def hom_with_projection(
    src: Instance, dst: Instance, h0: dict, pinned: Iterable[Const]
):
    """A homomorphism src -> dst whose h0-composition fixes `pinned`.

    The pin constraint is compiled into tag atoms so the join search prunes
    on it instead of filtering afterwards.
    """

    pinned = sorted(set(pinned), key=term_key)
    pattern = list(src.atoms)
    target_atoms = list(dst.atoms)
    for z in pinned:
        pred = f"_pin_{z.name}"
        pattern.append(Atom(pred, (z,)))
        for c in dst.adom:
            if h0.get(c, c) == z:
                target_atoms.append(Atom(pred, (c,)))
    return find_homomorphisms(pattern, Instance(target_atoms), mode="first")


def has_k_clique(g: Graph, k: int) -> bool:
    for combo in combinations(g.vertices, k):
        if all(g.has_edge(u, v) for u, v in combinations(combo, 2)):
            return True
    return False


def _max_clique_containing(g: Graph, base: tuple, size: int) -> bool:
    rest = [v for v in g.vertices if v not in base]
    need = size - len(base)
    if need <= 0:
        return True
    for extra in combinations(rest, need):
        cand = base + extra
        if all(g.has_edge(u, v) for u, v in combinations(cand, 2)):
            return True
    return False


def satisfies(inst: Instance, sigma: Sequence[TGD]) -> bool:
    """Model check: every fired body extends to a head match."""

    for tgd in sigma:
        for h in find_homomorphisms(tgd.body, inst):
            fixed = {x: h[x] for x in tgd.frontier}
            if find_homomorphisms(tgd.head, inst, fixed=fixed, mode="first") is None:
                return False
    return True


def check_reduction_properties(
    gdb: GroheDb, sigma: Sequence[TGD], g: Graph, k: int, r: int, m: int
) -> dict:
    """Brute-force verification of the construction's stated properties.

    Report keys: h0_is_hom, h0_surjective, clique_iff_hom (with both sides),
    dprime_models_sigma, clique_extension_holds, dstar_models_sigma, and
    sigma_implication_ok.  Degenerate graphs can drop facts and lose
    surjectivity; the report states what holds rather than raising.
    """

    report: dict = {}
    report["h0_is_hom"] = _is_instance_hom(gdb.dstar, gdb.dprime, gdb.h0)
    image = {gdb.h0.get(c, c) for c in gdb.dstar.adom}
    report["h0_surjective"] = image == set(gdb.dprime.adom)

    clique = has_k_clique(g, k)
    hom = hom_with_projection(gdb.d, gdb.dstar, gdb.h0, gdb.a) is not None
    report["has_k_clique"] = clique
    report["has_pinned_hom"] = hom
    report["clique_iff_hom"] = clique == hom

    dprime_ok = satisfies(gdb.dprime, sigma)
    report["dprime_models_sigma"] = dprime_ok
    ext = True
    for size in range(0, 3 * r + 1):
        for combo in combinations(g.vertices, size):
            if not all(g.has_edge(u, v) for u, v in combinations(combo, 2)):
                continue
            if not _max_clique_containing(g, combo, 3 * r * m):
                ext = False
                break
        if not ext:
            break
    report["clique_extension_holds"] = ext
    dstar_ok = satisfies(gdb.dstar, sigma)
    report["dstar_models_sigma"] = dstar_ok
    report["sigma_implication_ok"] = (not (dprime_ok and ext)) or dstar_ok
    return report


def clique_reduction_constraint_free(g: Graph, k: int, q: CQ):
    """Constraint-free pipeline: D* models q exactly when g has a k-clique.

    Needs a Boolean connected core query whose variable graph contains the
    k x C(k,2) grid as a minor covering all variables.
    """

    if q.arity != 0:
        raise PreconditionViolatedError("query must be Boolean")
    gq = gaifman(q)
    if len(gq.components()) > 1:
        raise PreconditionViolatedError("query must be connected")
    if core(q).body != q.body:
        raise PreconditionViolatedError("query must be its own core")
    if k < 2:
        raise ModelError("k must be at least 2")
    kk = k * (k - 1) // 2
    mu = grid_minor(gq, k, kk, require_onto=True)
    if mu is None:
        raise NoGridMinorError(
            f"variable graph has no {k}x{kk} grid minor; treewidth too small for k={k}"
        )
    db = canonical_database(q)
    gdb = grohe_db(g, k, db, db, db.adom, mu)
    return gdb.dstar, q


def clique_reduction_cqs(
    g: Graph,
    k: int,
    s: CQS,
    p: CQ,
    pprime: CQ,
    x: Iterable[Var],
    s_cap: Optional[int] = None,
    budget: Optional[Budget] = None,
):
    """Constraint-aware pipeline over caller-supplied (p, X, p').

    The checkable preconditions are verified before building anything; a
    failure names the violated item and carries evidence.  Item six, the
    small-query agreement between D[p'] and the chase of D[p], is only
    checked when a variable cap is supplied.
    """

    budget = budget or Budget()
    sigma = tuple(s.sigma)
    q = s.query
    if len(q.disjuncts) != 1:
        raise ModelError("expected a single-disjunct query")
    q0 = q.disjuncts[0]

    both = (
        cqs_contains(CQS(sigma, UCQ([q0])), CQS(sigma, UCQ([p])), budget),
        cqs_contains(CQS(sigma, UCQ([p])), CQS(sigma, UCQ([q0])), budget),
    )
    if not (both[0].answer == "yes" and both[1].answer == "yes"):
        raise LemmaPreconditionError(
            1, f"p is not equivalent to the query ({both[0].answer}/{both[1].answer})"
        )
    dp = canonical_database(p)
    dpp = canonical_database(pprime)
    if not satisfies(dpp, sigma):
        raise LemmaPreconditionError(2, "canonical database of p' violates the rules")
    if not set(dp.atoms) <= set(dpp.atoms):
        raise LemmaPreconditionError(3, "canonical database of p not inside that of p'")

    x_set = frozenset(x)
    if not x_set <= set(p.existential_vars):
        raise LemmaPreconditionError(4, "X must be existential variables of p")
    x_consts = frozenset(Const(v.name) for v in x_set)
    pin = {v: Const(v.name) for v in p.answers}
    for h in find_homomorphisms(p, dpp, fixed=pin):
        imgs = {h[v] for v in x_set}
        if imgs != x_consts:
            raise LemmaPreconditionError(
                4, f"an answer-fixing homomorphism moves X to {sorted(c.name for c in imgs)}"
            )

    r = s.schema.max_arity
    m = max((len(t.head) for t in sigma), default=1)
    ell = r * m
    gx = gaifman(p).subgraph(sorted(v.name for v in x_set))
    tw_x = exact_treewidth(gx) if gx.vertices else 0
    if tw_x <= ell:
        raise LemmaPreconditionError(
            5, f"treewidth of the X-graph is {tw_x}, needs more than {ell}"
        )

    if s_cap is not None:
        _check_small_query_agreement(dp, dpp, sigma, p.answers, s_cap, budget)

    kk = k * (k - 1) // 2
    mu = grid_minor(gx, k, kk, require_onto=True)
    if mu is None:
        raise NoGridMinorError(f"X-graph has no {k}x{kk} grid minor")
    gdb = grohe_db(g, k, dp, dpp, x_consts, mu)
    report = check_reduction_properties(gdb, sigma, g, k, r, m)
    if not report["sigma_implication_ok"]:
        raise ModelError("construction broke rule satisfaction despite met preconditions")
    return gdb.dstar, s


def _check_small_query_agreement(dp, dpp, sigma, answers, s_cap: int, budget: Budget):
    # strongest small query per element subset; weaker ones factor through it
    ans_consts = tuple(Const(v.name) for v in answers)
    pool = [c for c in dpp.adom if c not in set(ans_consts)]
    for extra_n in range(0, max(0, s_cap - len(ans_consts)) + 1):
        for extra in combinations(pool, extra_n):
            chosen = set(ans_consts) | set(extra)
            atoms = [a for a in dpp.atoms if set(a.args) <= chosen]
            if not atoms:
                continue
            present = set()
            for a in atoms:
                present.update(a.args)
            if not set(ans_consts) <= present:
                continue
            cand = CQ(
                tuple(Var(c.name) for c in ans_consts),
                [Atom(a.pred, tuple(Var(t.name) for t in a.args)) for a in atoms],
            )
            holds_there, certified, _ = _certain_member(
                sigma, UCQ([cand]), dp, ans_consts, budget
            )
            if not holds_there and certified:
                raise LemmaPreconditionError(
                    6, f"a {len(chosen)}-variable query separates p' from the chase of p"
                )


def _maximal_guarded_tuples(inst: Instance) -> List[tuple]:
    arg_sets = []
    for a in inst.atoms:
        s = frozenset(a.args)
        if s:
            arg_sets.append(s)
    maximal = []
    for s in sorted(set(arg_sets), key=lambda s: (-len(s), sorted(t.name for t in s))):
        if not any(s < t for t in maximal):
            maximal.append(s)
    return [tuple(sorted(s, key=term_key)) for s in sorted(maximal, key=lambda s: sorted(t.name for t in s))]


def _rename_apart(inst: Instance, keep: set, tag: str) -> Instance:
    mapping = {}
    for c in inst.adom:
        if c in keep:
            mapping[c] = c
        else:
            mapping[c] = Const(f"{c.name}@{tag}")
    return Instance(
        Atom(a.pred, tuple(mapping[t] for t in a.args)) for a in inst.atoms
    )


def satisfying_db_from_omq(
    d: Instance, sigma: Sequence[TGD], q, n: int, budget: Optional[Budget] = None
) -> Instance:
    """Finite database that models the rules and preserves the query's
    certain answers: ground-chase closure plus one finite witness per
    maximal guarded tuple, witnesses renamed apart outside the base domain.
    """

    budget = budget or Budget()
    if not classify_set(sigma).guarded:
        raise NotGuardedError("rules must be guarded")
    dis = q.disjuncts if isinstance(q, UCQ) else (q,)
    most = max(len(p.variables) for p in dis)
    if n < most:
        raise PreconditionViolatedError(
            f"witness agreement bound {n} is below the query's {most} variables"
        )
    dplus = ground_chase(d, sigma)
    parts = [dplus]
    base_dom = set(d.adom)
    for idx, tup in enumerate(_maximal_guarded_tuples(dplus), start=1):
        frag = dplus.restrict(tup)
        m = finite_witness_search(frag, sigma, n, dom_cap=len(tup) + budget.refute_fresh)
        if m is None:
            raise WitnessNotFoundError(
                f"no finite witness for guarded fragment {idx} at the domain cap"
            )
        keep = base_dom | set(frag.adom)
        parts.append(_rename_apart(m, keep, f"w{idx}"))
    out = parts[0]
    for p in parts[1:]:
        out = out.union(p)
    return out


def _connected_components(atoms: Sequence[Atom]) -> List[List[Atom]]:
    parent: Dict[Term, Term] = {}

    def find(t):
        while parent.setdefault(t, t) != t:
            parent[t] = parent[parent[t]]
            t = parent[t]
        return t

    for a in atoms:
        args = list(a.args)
        for other in args[1:]:
            ra, rb = find(args[0]), find(other)
            if ra != rb:
                parent[ra] = rb
    groups: Dict[Term, List[Atom]] = {}
    isolated = []
    for a in atoms:
        if a.args:
            groups.setdefault(find(a.args[0]), []).append(a)
        else:
            isolated.append([a])
    return sorted(groups.values(), key=lambda g: term_key(g[0].args[0])) + isolated


def _agrees_with_chase(m: Instance, chased: Instance, base_dom: set, n: int) -> bool:
    """No small query separates the model from the chase prefix.

    Queries true in the chase hold in every model by universality, so only
    the converse needs checking: strongest induced queries per element
    subset, component-wise, with base elements as answers.
    """

    elements = list(m.adom)
    for size in range(1, n + 1):
        for combo in combinations(elements, size):
            chosen = set(combo)
            atoms = [a for a in m.atoms if a.args and set(a.args) <= chosen]
            for comp in _connected_components(atoms):
                ans = tuple(
                    sorted({t for a in comp for t in a.args if t in base_dom}, key=term_key)
                )
                body = [
                    Atom(a.pred, tuple(Var(t.name) for t in a.args)) for a in comp
                ]
                cq = CQ(tuple(Var(c.name) for c in ans), body)
                target = tuple(ans)
                if target:
                    if target not in eval_query(cq, chased):
                        return False
                elif not holds(cq, chased):
                    return False
    return True


def finite_witness_search(
    d: Instance,
    sigma: Sequence[TGD],
    n: int,
    dom_cap: int,
    node_cap: int = 20000,
) -> Optional[Instance]:
    """Smallest finite model of sigma over d that small queries cannot tell
    apart from the chase; None when the domain cap admits no such model."""

    fresh = dom_cap - len(d.adom)
    if fresh < 0:
        return None
    # agreement target: a chase prefix deep enough for n-variable matches
    chased = chase(d, sigma, ChaseBudget.levels(max(8, 2 * n + 2))).instance
    base_dom = set(d.adom)
    try:
        for m in enumerate_models(d, sigma, fresh_cap=fresh, node_cap=node_cap):
            if _agrees_with_chase(m, chased, base_dom, n):
                return m
    except BudgetError:
        pass
    return None
