"""Low-treewidth approximations of queries under guarded rules.

A specialization fixes a contraction and a set V of variables to keep; each
maximally-connected block of the rest gets replaced by a small guarded query
whose chase absorbs it.  Collecting the low-treewidth replacements gives an
under-approximation that is exact on low-treewidth data.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations, product
from typing import Iterable, List, Optional, Sequence

from .classify import classify, classify_set
from .errors import (
    BudgetError,
    EnumerationCapError,
    KBelowThresholdError,
    ModelError,
    NotGuardedError,
)
from .homs import canonical_cq_key, contractions, iso_dedupe
from .linearize import fpt_eval_omq
from .model import (
    CQ,
    CQS,
    OMQ,
    UCQ,
    Atom,
    Const,
    Instance,
    Schema,
    TGD,
    Var,
    atom_key,
    schema_of_query,
    term_key,
)
from .tw import cq_treewidth

DEFAULT_GROUNDING_CAP = 100000
_SIDE_LIMIT = 17  # 2^17 candidate subsets is the most a lattice sweep may visit


@dataclass(frozen=True)
class Specialization:
    contraction: CQ
    v: frozenset


@dataclass(frozen=True)
class Grounding:
    g0: tuple
    parts: tuple
    cq: CQ


@dataclass(frozen=True)
class OmqApprox:
    """Approximation of a guarded query; `query` is None when nothing survives."""

    data_schema: Schema
    sigma: tuple
    query: Optional[UCQ]
    marker: Optional[str] = None

    @property
    def empty(self) -> bool:
        return self.query is None

    def as_omq(self) -> OMQ:
        if self.query is None:
            raise ModelError("approximation is empty")
        return OMQ(self.data_schema, self.sigma, self.query)


@dataclass(frozen=True)
class CqsApprox:
    sigma: tuple
    query: Optional[UCQ]

    @property
    def empty(self) -> bool:
        return self.query is None

    def as_cqs(self) -> CQS:
        if self.query is None:
            raise ModelError("approximation is empty")
        return CQS(self.sigma, self.query)


def approx_threshold(schema: Schema) -> int:
    return schema.max_arity - 1


def _check_threshold(k: int, schema: Schema):
    thr = approx_threshold(schema)
    if k < thr:
        raise KBelowThresholdError(k, thr)


def _check_guarded(sigma: Sequence[TGD]):
    for t in sigma:
        if t.body and not classify(t).guarded:
            raise NotGuardedError(f"not guarded: {t}")


def _omq_schema(omq: OMQ) -> Schema:
    return omq.full_schema.union(schema_of_query(omq.query))


def specializations(q: CQ) -> List[Specialization]:
    out = []
    for p in contractions(q):
        anchored = frozenset(p.answers)
        free = [x for x in p.variables if x not in anchored]
        subsets = []
        for size in range(len(free) + 1):
            for pick in combinations(free, size):
                subsets.append(anchored | frozenset(pick))
        for v in subsets:
            out.append(Specialization(p, v))
    return out


def v_components(p: CQ, v: Iterable) -> List[tuple]:
    """Atoms of p with a variable outside V, grouped by connectivity through
    those outside variables.  Deterministic order by smallest member atom."""

    v = frozenset(v)
    if not v <= set(p.variables):
        raise ModelError("V is not a subset of the query variables")
    outer = [a for a in p.body if not set(a.args) <= v]
    parent: dict = {}

    def find(x):
        parent.setdefault(x, x)
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for a in outer:
        free = [x for x in a.args if x not in v]
        for x in free[1:]:
            ra, rb = find(free[0]), find(x)
            if ra != rb:
                parent[ra] = rb
    groups: dict = {}
    for a in outer:
        root = find(next(x for x in a.args if x not in v))
        groups.setdefault(root, []).append(a)
    parts = [tuple(sorted(g, key=atom_key)) for g in groups.values()]
    return sorted(parts, key=lambda g: atom_key(g[0]))


def _entailed(component, shared, atoms, sigma, schema, cache) -> bool:
    """component -> chase(atoms, sigma) by a homomorphism fixing `shared`.

    Routed through the linearized evaluator; a budget blowup counts as a
    failed candidate rather than an error.
    """

    key = (frozenset(component), tuple(shared), frozenset(atoms))
    hit = cache.get(key)
    if hit is not None:
        return hit
    target = Instance(
        [Atom(a.pred, tuple(Const(t.name) for t in a.args)) for a in atoms]
    )
    query = CQ(tuple(shared), component)
    try:
        answers = fpt_eval_omq(OMQ(schema, sigma, UCQ([query])), target)
        ok = tuple(Const(x.name) for x in shared) in answers
    except BudgetError:
        ok = False
    cache[key] = ok
    return ok


def _guard_shapes(schema: Schema, shared, pool):
    """Candidate guard atoms over shared and pool variables, covering all of
    shared, deduplicated up to renaming of the pool."""

    pool_set = set(pool)
    ordered = list(shared) + list(pool)
    shapes = []
    seen = set()
    for pred in sorted(schema.preds):
        n = schema.arities[pred]
        for args in product(ordered, repeat=n):
            if not set(shared) <= set(args):
                continue
            ren: dict = {}
            key_parts = []
            for t in args:
                if t in pool_set:
                    if t not in ren:
                        ren[t] = len(ren)
                    key_parts.append(("p", ren[t]))
                else:
                    key_parts.append(("s", t.name))
            key = (pred, tuple(key_parts))
            if key in seen:
                continue
            seen.add(key)
            rebuilt = tuple(
                pool[kp[1]] if kp[0] == "p" else args[i]
                for i, kp in enumerate(key_parts)
            )
            shapes.append(Atom(pred, rebuilt))
    return shapes


def _side_candidates(schema: Schema, guard: Atom):
    vars_ = sorted(set(guard.args), key=term_key)
    out = []
    for pred in sorted(schema.preds):
        for args in product(vars_, repeat=schema.arities[pred]):
            a = Atom(pred, args)
            if a != guard:
                out.append(a)
    return out


def _pool_for(shared, schema: Schema, tag: int, taken):
    width = max(0, schema.max_arity - len(shared))
    prefix = "_f"
    names = {t.name for t in taken}
    while any(n.startswith(prefix) for n in names):
        prefix += "f"
    return [Var(f"{prefix}{tag}_{i}") for i in range(1, width + 1)]


def _component_groundings(component, shared, sigma, schema, tag, cap, cache, avoid):
    """Every passing replacement for one component, as atom tuples.

    Passing is monotone in the side-atom set, so the sweep keeps antichains
    of minimal passers and maximal failers and only chases the frontier.
    """

    pool = _pool_for(shared, schema, tag, avoid)
    out = []
    for guard in _guard_shapes(schema, shared, pool):
        cands = _side_candidates(schema, guard)
        if len(cands) > _SIDE_LIMIT:
            raise EnumerationCapError(
                f"{len(cands)} side candidates for one guard exceeds the sweep limit"
            )
        if not _entailed(component, shared, [guard] + cands, sigma, schema, cache):
            continue
        min_passers: list = []
        max_failers: list = []
        all_pass = _entailed(component, shared, [guard], sigma, schema, cache)
        for size in range(len(cands) + 1):
            for pick in combinations(range(len(cands)), size):
                sset = frozenset(pick)
                if all_pass or any(mp <= sset for mp in min_passers):
                    ok = True
                elif any(sset <= mf for mf in max_failers):
                    ok = False
                else:
                    atoms = [guard] + [cands[i] for i in sorted(sset)]
                    ok = _entailed(component, shared, atoms, sigma, schema, cache)
                    if ok:
                        min_passers.append(sset)
                    else:
                        max_failers = [mf for mf in max_failers if not mf <= sset]
                        max_failers.append(sset)
                if ok:
                    if len(out) >= cap:
                        raise EnumerationCapError(
                            f"component replacements exceed cap {cap}"
                        )
                    out.append(tuple([guard] + [cands[i] for i in sorted(sset)]))
    return out


def _component_witness(component, shared, sigma, schema, tag, cache, avoid):
    """One passing replacement (the side-saturated one), or None."""

    pool = _pool_for(shared, schema, tag, avoid)
    for guard in _guard_shapes(schema, shared, pool):
        atoms = [guard] + _side_candidates(schema, guard)
        if _entailed(component, shared, atoms, sigma, schema, cache):
            return tuple(atoms)
    return None


def groundings(
    s: Specialization,
    sigma: Sequence[TGD],
    schema: Schema,
    cap: int = DEFAULT_GROUNDING_CAP,
    _cache: Optional[dict] = None,
) -> List[Grounding]:
    _check_guarded(sigma)
    cache = _cache if _cache is not None else {}
    p = s.contraction
    g0 = tuple(a for a in p.body if set(a.args) <= s.v)
    comps = v_components(p, s.v)
    per = []
    avoid = set(p.variables)
    for tag, comp in enumerate(comps):
        shared = sorted(set().union(*[a.args for a in comp]) & s.v, key=term_key)
        opts = _component_groundings(
            comp, shared, sigma, schema, tag, cap, cache, avoid
        )
        if not opts:
            return []
        per.append(opts)
    total = 1
    for opts in per:
        total *= len(opts)
        if total > cap:
            raise EnumerationCapError(f"grounding count exceeds cap {cap}")
    out = []
    seen = set()
    for combo in product(*per):
        body = list(g0)
        for part in combo:
            body.extend(part)
        cq = CQ(p.answers, body)
        key = canonical_cq_key(cq)
        if key in seen:
            continue
        seen.add(key)
        out.append(Grounding(g0, tuple(combo), cq))
    return out


def ucq_k_approx(omq: OMQ, k: int, cap: int = DEFAULT_GROUNDING_CAP) -> OmqApprox:
    """Union of all treewidth-<=k replacements, disjunct by disjunct."""

    schema = _omq_schema(omq)
    _check_threshold(k, schema)
    _check_guarded(omq.sigma)
    cache: dict = {}
    kept = []
    for d in omq.query.disjuncts:
        for s in specializations(d):
            for g in groundings(s, omq.sigma, schema, cap=cap, _cache=cache):
                if cq_treewidth(g.cq) <= k:
                    kept.append(g.cq)
    query = UCQ(iso_dedupe(kept)) if kept else None
    return OmqApprox(omq.data_schema, omq.sigma, query)


def _marker_name(schema: Schema) -> str:
    name = "_null"
    while name in schema:
        name += "_"
    return name


def compact_approx(omq: OMQ, k: int) -> OmqApprox:
    """Same answers as the full approximation, single-exponentially smaller.

    Disjuncts are the specialized contractions themselves, with dropped
    variables marked by a fresh unary predicate that the extended rules
    attach to every invented element.  Inclusion is decided by one
    side-saturated replacement per component: above the arity threshold all
    replacements of a specialization share their treewidth verdict.
    """

    schema = _omq_schema(omq)
    _check_threshold(k, schema)
    _check_guarded(omq.sigma)
    marker = _marker_name(schema)
    extended = []
    for t in omq.sigma:
        head = list(t.head) + [Atom(marker, (z,)) for z in t.existentials]
        extended.append(TGD(t.body, head, existentials=t.existentials))
    cache: dict = {}
    kept = []
    for d in omq.query.disjuncts:
        for s in specializations(d):
            p = s.contraction
            comps = v_components(p, s.v)
            body = [a for a in p.body if set(a.args) <= s.v]
            ok = True
            avoid = set(p.variables)
            for tag, comp in enumerate(comps):
                shared = sorted(
                    set().union(*[a.args for a in comp]) & s.v, key=term_key
                )
                w = _component_witness(
                    comp, shared, omq.sigma, schema, tag, cache, avoid
                )
                if w is None:
                    ok = False
                    break
                body.extend(w)
            if not ok:
                continue
            if cq_treewidth(CQ(p.answers, body)) > k:
                continue
            dropped = sorted(set(p.variables) - s.v, key=term_key)
            marked = CQ(p.answers, list(p.body) + [Atom(marker, (x,)) for x in dropped])
            kept.append(marked)
    query = UCQ(iso_dedupe(kept)) if kept else None
    return OmqApprox(omq.data_schema, tuple(extended), query, marker=marker)


def cqs_k_approx(cqs: CQS, k: int) -> CqsApprox:
    """All low-treewidth contractions, kept under the same rules."""

    cls = classify_set(cqs.sigma)
    if not cls.frontier_guarded:
        raise NotGuardedError("rules are not frontier-guarded")
    thr = cqs.schema.max_arity * cls.m - 1
    if k < thr:
        raise KBelowThresholdError(k, thr)
    kept = []
    for d in cqs.query.disjuncts:
        for c in contractions(d):
            if cq_treewidth(c) <= k:
                kept.append(c)
    query = UCQ(iso_dedupe(kept)) if kept else None
    return CqsApprox(cqs.sigma, query)
