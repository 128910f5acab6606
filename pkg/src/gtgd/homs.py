"""Homomorphism search over ground instances, plus query evaluation,
injectivity semantics, contractions and cores.

Constants in a pattern are assignable like variables; callers that want them
pinned pass `fixed`.  All enumeration orders are deterministic.
"""

from __future__ import annotations

from itertools import combinations
from typing import Iterable, Mapping, Optional, Sequence, Union

from .errors import ModelError, PreconditionViolatedError
from .model import (
    CQ,
    Atom,
    Const,
    Instance,
    Term,
    UCQ,
    apply_map,
    atom_key,
    canonical_database,
    term_key,
)

Pattern = Union[CQ, Sequence[Atom]]


def _pattern_atoms(pattern: Pattern):
    return list(pattern.body) if isinstance(pattern, CQ) else list(pattern)


def _target_index(target):
    atoms = target.atoms if isinstance(target, Instance) else sorted(target, key=atom_key)
    idx = {}
    for a in atoms:
        idx.setdefault((a.pred, len(a.args)), []).append(a.args)
    return idx


def _normalize_fixed(fixed) -> dict:
    if fixed is None:
        return {}
    if isinstance(fixed, Mapping):
        return dict(fixed)
    return {t: t for t in fixed}


def _plan(atoms, prebound):
    # Greedy join order: most-bound atom next, then rarest predicate, then
    # input order.  Computed once; candidate filtering happens during search.
    remaining = list(range(len(atoms)))
    bound = set(prebound)
    order = []
    while remaining:
        best = None
        for i in remaining:
            terms = atoms[i].args
            unbound = len({t for t in terms if t not in bound})
            score = (unbound, len(terms), i)
            if best is None or score < best[0]:
                best = (score, i)
        i = best[1]
        remaining.remove(i)
        order.append(atoms[i])
        bound.update(atoms[i].args)
    return order


def find_homomorphisms(
    pattern: Pattern,
    target,
    fixed=None,
    mode: str = "all",
):
    """Search maps from the pattern's terms into the target's domain.

    mode 'all' returns a list of dicts, 'first' one dict or None, 'count' an
    int.  `fixed` is either a term->value mapping or an iterable of terms to
    keep pointwise fixed.
    """

    if mode not in ("all", "first", "count"):
        raise ModelError(f"unknown mode '{mode}'")
    atoms = _pattern_atoms(pattern)
    assignment = _normalize_fixed(fixed)
    if not atoms:
        out = dict(assignment)
        return [out] if mode == "all" else (out if mode == "first" else 1)
    idx = _target_index(target)
    order = _plan(atoms, assignment)
    results = []
    count = [0]
    bound = dict(assignment)
    n = len(order)

    def extend(i):
        if i == n:
            if mode == "count":
                count[0] += 1
                return False
            results.append(dict(bound))
            return mode == "first"
        atom = order[i]
        for args in idx.get((atom.pred, len(atom.args)), ()):
            added = []
            ok = True
            for t, c in zip(atom.args, args):
                v = bound.get(t)
                if v is None:
                    bound[t] = c
                    added.append(t)
                elif v != c:
                    ok = False
                    break
            if ok and extend(i + 1):
                for t in added:
                    del bound[t]
                return True
            for t in added:
                del bound[t]
        return False

    extend(0)
    if mode == "count":
        return count[0]
    if mode == "first":
        return results[0] if results else None
    return results


def is_hom(pattern: Pattern, target, mapping: Mapping[Term, Term]) -> bool:
    atoms = _pattern_atoms(pattern)
    have = set(target.atoms if isinstance(target, Instance) else target)
    for a in atoms:
        try:
            img = Atom(a.pred, tuple(mapping[t] for t in a.args))
        except KeyError:
            return False
        if img not in have:
            return False
    return True


def eval_query(q: Union[CQ, UCQ], target) -> set:
    """All answer tuples of q over the target instance."""

    disjuncts = q.disjuncts if isinstance(q, UCQ) else (q,)
    out = set()
    for d in disjuncts:
        for h in find_homomorphisms(d, target):
            out.add(tuple(h[v] for v in d.answers))
    return out


def holds(q: Union[CQ, UCQ], target, answer: Sequence[Term] = ()) -> bool:
    disjuncts = q.disjuncts if isinstance(q, UCQ) else (q,)
    answer = tuple(answer)
    for d in disjuncts:
        if len(answer) != d.arity:
            raise ModelError("answer arity differs from query arity")
        fixed = dict(zip(d.answers, answer))
        if find_homomorphisms(d, target, fixed=fixed, mode="first") is not None:
            return True
    return False


def _injective_on(h: Mapping[Term, Term], terms) -> bool:
    values = [h[t] for t in terms]
    return len(set(values)) == len(values)


def holds_io(q: CQ, target, answer: Sequence[Term] = ()) -> bool:
    """True iff some witnessing match is injective on the query variables."""

    fixed = dict(zip(q.answers, tuple(answer)))
    if len(fixed) != q.arity:
        raise ModelError("answer arity differs from query arity")
    for h in find_homomorphisms(q, target, fixed=fixed):
        if _injective_on(h, q.variables):
            return True
    return False


def contraction_of(q: CQ, blocks: Iterable[Iterable[Term]]) -> CQ:
    """Quotient q by a variable partition; answer variables name their block."""

    answers = set(q.answers)
    rep = {}
    for block in blocks:
        block = sorted(block, key=term_key)
        named = [v for v in block if v in answers]
        if len(named) > 1:
            raise ModelError("two answer variables in one contraction block")
        r = named[0] if named else block[0]
        for v in block:
            rep[v] = r
    mapping = {v: rep.get(v, v) for v in q.variables}
    return CQ(q.answers, [apply_map(a, mapping) for a in q.body])


def _partitions(items):
    items = list(items)
    if not items:
        yield []
        return
    first, rest = items[0], items[1:]
    for part in _partitions(rest):
        for i in range(len(part)):
            yield part[:i] + [[first] + part[i]] + part[i + 1 :]
        yield [[first]] + part


def contractions(q: CQ):
    """All contractions of q (identity included), deduplicated."""

    answers = set(q.answers)
    seen = []
    have = set()
    for part in _partitions(sorted(q.variables, key=term_key)):
        if any(sum(1 for v in block if v in answers) > 1 for block in part):
            continue
        c = contraction_of(q, part)
        key = (c.answers, c.body)
        if key not in have:
            have.add(key)
            seen.append(c)
    seen.sort(key=lambda c: (len(c.variables), len(c.body), [atom_key(a) for a in c.body]))
    seen.reverse()
    # identity first (most variables), then progressively more collapsed
    return seen


def io_witness_contraction(q: CQ, target, answer: Sequence[Term] = ()) -> CQ:
    """A contraction of q that holds under the injective semantics.

    Exists whenever q itself holds: collapsing a witness's kernel repeatedly
    must bottom out in an injective match.
    """

    answer = tuple(answer)
    current = q
    while True:
        fixed = dict(zip(current.answers, answer))
        hs = find_homomorphisms(current, target, fixed=fixed)
        if not hs:
            raise PreconditionViolatedError("query does not hold at the given answer")
        injective = next((h for h in hs if _injective_on(h, current.variables)), None)
        if injective is not None:
            return current
        h = hs[0]
        groups = {}
        for v in current.variables:
            groups.setdefault(h[v], []).append(v)
        ans = set(current.answers)
        for block in groups.values():
            if sum(1 for v in block if v in ans) > 1:
                raise PreconditionViolatedError(
                    "answer tuple repeats a value; no injective contraction exists"
                )
        current = contraction_of(current, groups.values())


def _equivalent_subquery(q: CQ, body_subset) -> Optional[CQ]:
    vars_in = set()
    for a in body_subset:
        vars_in.update(a.args)
    if not set(q.answers) <= vars_in:
        return None
    sub = CQ(q.answers, body_subset)
    fixed = {v: Const(v.name) for v in q.answers}
    if find_homomorphisms(q, canonical_database(sub), fixed=fixed, mode="first") is None:
        return None
    return sub


def canonical_cq_key(q: CQ):
    """Hash key invariant under renaming of existential variables.

    Answer variables keep their positions.  Existential renamings are searched
    within signature classes only; beyond 8 existential variables the key
    degrades to exact equality (duplicates are then kept, never merged).
    """

    ans_index = {v: i for i, v in enumerate(q.answers)}
    ex = list(q.existential_vars)
    if len(ex) > 8:
        return ("exact", q.answers, q.body)

    def signature(v):
        rows = []
        for a in q.body:
            for i, t in enumerate(a.args):
                if t == v:
                    rows.append((a.pred, len(a.args), i))
        return tuple(sorted(rows))

    groups: dict = {}
    for v in ex:
        groups.setdefault(signature(v), []).append(v)
    group_list = [sorted(vs, key=term_key) for _, vs in sorted(groups.items())]

    from itertools import permutations as _perms, product as _product

    best = None
    for choice in _product(*(_perms(g) for g in group_list)):
        label = {}
        for g, perm in zip(group_list, choice):
            for v, slot in zip(g, perm):
                label[v] = slot
        order = {}
        for g in group_list:
            for v in g:
                order.setdefault(label[v], len(order))
        rows = []
        for a in q.body:
            row = []
            for t in a.args:
                if t in ans_index:
                    row.append(("a", ans_index[t]))
                else:
                    row.append(("e", order[label[t]]))
            rows.append((a.pred, tuple(row)))
        key = tuple(sorted(rows))
        if best is None or key < best:
            best = key
    return ("iso", len(q.answers), best)


def iso_dedupe(cqs: Iterable[CQ]):
    seen = set()
    out = []
    for c in cqs:
        k = canonical_cq_key(c)
        if k not in seen:
            seen.add(k)
            out.append(c)
    return out


def subsumes(general: CQ, specific: CQ) -> bool:
    """Every answer of `specific` is an answer of `general` on any database."""

    if general.arity != specific.arity:
        return False
    fixed = {g: Const(s.name) for g, s in zip(general.answers, specific.answers)}
    target = canonical_database(specific)
    return find_homomorphisms(general, target, fixed=fixed, mode="first") is not None


def subsumption_prune(cqs: Sequence[CQ]):
    """Drop disjuncts subsumed by a kept one.  More general disjuncts first."""

    ordered = sorted(cqs, key=lambda c: (len(c.body), len(c.variables), canonical_cq_key(c)))
    kept = []
    for c in ordered:
        if any(subsumes(k, c) for k in kept):
            continue
        kept.append(c)
    return kept


def core(q: CQ) -> CQ:
    """Smallest equivalent subquery.  Exhaustive up to 8 atoms, greedy above."""

    body = q.body
    if len(body) <= 8:
        for size in range(1, len(body) + 1):
            for subset in combinations(range(len(body)), size):
                sub = _equivalent_subquery(q, [body[i] for i in subset])
                if sub is not None:
                    return sub
        return q
    current = q
    changed = True
    while changed:
        changed = False
        for i in range(len(current.body)):
            trimmed = current.body[:i] + current.body[i + 1 :]
            if not trimmed:
                continue
            sub = _equivalent_subquery(current, trimmed)
            if sub is not None:
                current = sub
                changed = True
                break
    return current
