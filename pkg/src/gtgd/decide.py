"""Containment and equivalence deciders.

Verdicts are three-valued: yes, no, or unknown-at-budget.  A yes or no comes
with a witness whenever the route constructs one; unknown is an explicit
outcome, never a silent guess.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass
from itertools import combinations
from typing import List, Optional, Sequence

from .approx import compact_approx, cqs_k_approx
from .chase import ChaseBudget, chase
from .classify import classify_set
from .errors import (
    ArityMismatchError,
    BudgetError,
    BudgetExceededError,
    DifferingConstraintsError,
    GtgdError,
    ModelError,
)
from .homs import (
    contractions,
    core,
    eval_query,
    find_homomorphisms,
    holds,
    subsumption_prune,
)
from .linearize import fpt_eval_omq, ucq_rewrite
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
    canonical_database,
)
from .tw import cq_treewidth, guarded_sets, guarded_unravel

YES = "yes"
NO = "no"
UNKNOWN = "unknown-at-budget"


@dataclass(frozen=True)
class Budget:
    rewrite_cap: int = 10000
    chase_levels: int = 24
    refute_fresh: int = 4
    search_nodes: int = 20000
    type_cap: int = 50000


@dataclass(frozen=True)
class Counterexample:
    """Database where the two sides disagree on the given answer tuple.

    `counter_model` is only set when the disagreement was certified by a
    finite model rather than by a terminating chase.
    """

    database: Instance
    answers: tuple
    counter_model: Optional[Instance] = None


@dataclass(frozen=True)
class Verdict:
    answer: str
    witness: Optional[object] = None
    detail: str = ""

    def __bool__(self) -> bool:
        return self.answer == YES


def _level_steps(cap: int):
    step = 4
    while step < cap:
        yield step
        step *= 2
    yield cap


def _sound_answers(sigma, query: UCQ, inst: Instance, budget: Budget):
    """Answers certain to hold, and whether the set is also complete.

    Guarded rule sets go through the linearized route; anything else gets a
    level-escalated chase.  A terminated chase is complete; a merely stable
    one only vouches for the answers it found.
    """

    cls = classify_set(sigma)
    if cls.guarded:
        try:
            omq = OMQ(Schema({}), sigma, query)
            return fpt_eval_omq(omq, inst, type_cap=budget.type_cap), True
        except BudgetError:
            pass
    adom = set(inst.adom)
    prev: Optional[set] = None
    ans: set = set()
    for levels in _level_steps(budget.chase_levels):
        res = chase(inst, sigma, ChaseBudget.levels(levels))
        ans = {
            row
            for row in eval_query(query, res.instance)
            if all(c in adom for c in row)
        }
        if res.terminated:
            return ans, True
        if prev is not None and prev == ans:
            break
        prev = ans
    return ans, False


def enumerate_models(
    inst: Instance,
    sigma: Sequence[TGD],
    fresh_cap: int = 4,
    node_cap: int = 20000,
):
    """Finite models of sigma extending inst, smallest first.

    Domains are adom(inst) plus at most fresh_cap invented elements, brought
    in one at a time in first-use order so renaming-equivalent branches
    collapse.  Raises when the node budget runs out mid-search.
    """

    taken = {t.name for t in inst.adom}
    prefix = "_m"
    while any(n.startswith(prefix) for n in taken):
        prefix += "m"
    pool = [Const(f"{prefix}{i}") for i in range(1, fresh_cap + 1)]

    def unsatisfied(cur: Instance):
        for tgd in sigma:
            for h in find_homomorphisms(tgd.body, cur):
                fixed = {x: h[x] for x in tgd.frontier}
                if find_homomorphisms(tgd.head, cur, fixed=fixed, mode="first") is None:
                    return tgd, h
        return None

    counter = 0
    heap: list = []
    start = frozenset(inst.atoms)
    heapq.heappush(heap, (len(start), counter, start))
    visited = set()
    nodes = 0
    while heap:
        _, _, atoms = heapq.heappop(heap)
        if atoms in visited:
            continue
        visited.add(atoms)
        nodes += 1
        if nodes > node_cap:
            raise BudgetExceededError("model search exceeded its node budget")
        cur = Instance(atoms)
        gap = unsatisfied(cur)
        if gap is None:
            yield cur
            continue
        tgd, h = gap
        used = list(cur.adom)
        used_set = set(used)
        options = [dict(h)]
        for z in tgd.existentials:
            extended = []
            for opt in options:
                have = used_set | set(opt.values())
                choices = used + [c for c in pool if c in have and c not in used_set]
                nxt_fresh = next((c for c in pool if c not in have), None)
                if nxt_fresh is not None:
                    choices = choices + [nxt_fresh]
                for c in choices:
                    nxt = dict(opt)
                    nxt[z] = c
                    extended.append(nxt)
            options = extended
        for opt in options:
            new = atoms | {
                Atom(a.pred, tuple(opt[t] for t in a.args)) for a in tgd.head
            }
            if new not in visited:
                counter += 1
                heapq.heappush(heap, (len(new), counter, new))


def _refute(sigma, query: UCQ, inst: Instance, tup, budget: Budget):
    """A finite model of sigma over inst where the answer fails, or None."""

    try:
        for m in enumerate_models(
            inst, sigma, fresh_cap=budget.refute_fresh, node_cap=budget.search_nodes
        ):
            if tup not in eval_query(query, m):
                return m
    except BudgetExceededError:
        pass
    return None


def _certain_member(sigma, query: UCQ, inst: Instance, tup, budget: Budget):
    """(holds, certified, counter_model) for one certain-answer membership."""

    ans, complete = _sound_answers(sigma, query, inst, budget)
    if tup in ans:
        return True, True, None
    if complete:
        return False, True, None
    m = _refute(sigma, query, inst, tup, budget)
    if m is not None:
        return False, True, m
    return False, False, None


def _answer_consts(q: CQ):
    return tuple(Const(x.name) for x in q.answers)


def cqs_contains(s1: CQS, s2: CQS, budget: Optional[Budget] = None) -> Verdict:
    """Containment of constraint-query pairs sharing their rules.

    Checks each left disjunct against the right union on its own canonical
    database; the chase there is universal, so membership transfers to every
    database.
    """

    budget = budget or Budget()
    if tuple(s1.sigma) != tuple(s2.sigma):
        raise DifferingConstraintsError("the two specifications carry different rules")
    if s1.query.arity != s2.query.arity:
        raise ArityMismatchError(
            f"arity {s1.query.arity} vs {s2.query.arity}"
        )
    sigma = tuple(s1.sigma)
    soft_misses = []
    for p1 in s1.query.disjuncts:
        db = canonical_database(p1)
        tup = _answer_consts(p1)
        holds, certified, counter = _certain_member(sigma, s2.query, db, tup, budget)
        if holds:
            continue
        if certified:
            return Verdict(
                NO,
                witness=Counterexample(db, tup, counter),
                detail="left disjunct escapes",
            )
        soft_misses.append(p1)
    if soft_misses:
        return Verdict(UNKNOWN, detail=f"{len(soft_misses)} disjunct(s) undecided at budget")
    return Verdict(YES)


def _data_only(q: CQ, schema: Schema) -> bool:
    return all(a.pred in schema for a in q.body)


def _eval_certain(omq: OMQ, inst: Instance, budget: Budget):
    return _sound_answers(omq.sigma, omq.query, inst, budget)


def omq_contains(q1: OMQ, q2: OMQ, budget: Optional[Budget] = None) -> Verdict:
    """Containment of ontology-mediated queries over a shared data schema.

    Equal rules over the full schema reduce to the chase route.  Otherwise
    the left query is rewritten backwards through its rules; if the rewriting
    saturates, its data-schema disjuncts are a complete set of test databases
    and both verdicts are certified.  A capped rewriting falls back to a
    bounded counterexample search, which can only certify "no".
    """

    budget = budget or Budget()
    if q1.data_schema != q2.data_schema:
        raise ModelError("data schemas differ")
    if q1.query.arity != q2.query.arity:
        raise ArityMismatchError(f"arity {q1.query.arity} vs {q2.query.arity}")

    if (
        q1.is_full
        and q2.is_full
        and tuple(q1.sigma) == tuple(q2.sigma)
    ):
        return cqs_contains(
            CQS(q1.sigma, q1.query), CQS(q2.sigma, q2.query), budget
        )

    rewritten, saturated = ucq_rewrite(
        q1.sigma, q1.query, cap=budget.rewrite_cap, on_cap="partial"
    )
    candidates = [r for r in rewritten.disjuncts if _data_only(r, q1.data_schema)]
    undecided = 0
    for r in candidates:
        db = canonical_database(r)
        tup = _answer_consts(r)
        holds, certified, counter = _certain_member(q2.sigma, q2.query, db, tup, budget)
        if holds:
            continue
        if certified:
            return Verdict(
                NO,
                witness=Counterexample(db, tup, counter),
                detail="rewritten disjunct escapes",
            )
        undecided += 1
    if saturated and undecided == 0:
        return Verdict(YES, detail="rewriting saturated; all test databases pass")

    found = _counterexample_search(q1, q2, budget)
    if found is not None:
        inst, tup = found
        return Verdict(NO, witness=Counterexample(inst, tup), detail="found by bounded search")
    return Verdict(UNKNOWN, detail="rewriting capped" if not saturated else "evaluation capped")


def _counterexample_search(q1: OMQ, q2: OMQ, budget: Budget):
    """Small data-schema databases built from the left query's shapes, their
    contractions, and shallow unravelings; certified misses only."""

    data = q1.data_schema
    seen = set()
    queue: List[Instance] = []

    def push(inst: Instance):
        if not inst.atoms:
            return
        if any(a.pred not in data for a in inst.atoms):
            inst = Instance([a for a in inst.atoms if a.pred in data])
            if not inst.atoms:
                return
        key = frozenset(inst.atoms)
        if key not in seen:
            seen.add(key)
            queue.append(inst)

    for d in q1.query.disjuncts:
        push(canonical_database(d))
        for c in contractions(d):
            push(canonical_database(c))
    for base in list(queue):
        sets = guarded_sets(base)
        for anchor in sets[: min(len(sets), 6)]:
            for depth in (1, 2):
                try:
                    push(guarded_unravel(base, anchor, depth))
                except GtgdError:
                    continue

    checked = 0
    for inst in queue:
        checked += 1
        if checked > budget.search_nodes:
            break
        left, _ = _eval_certain(q1, inst, budget)
        if not left:
            continue
        right, complete = _eval_certain(q2, inst, budget)
        if not complete:
            continue
        missing = sorted(left - right)
        if missing:
            return inst, missing[0]
    return None


def _normalized_witness_query(query: UCQ) -> UCQ:
    return UCQ(subsumption_prune([core(d) for d in query.disjuncts]))


def _drop_unmatchable(query: UCQ, data_schema: Schema, sigma) -> UCQ:
    """Remove disjuncts that no chase of a legal database can satisfy.

    Chase facts only ever use data predicates or rule-head predicates, so a
    disjunct mentioning anything else is dead weight.  Keeps at least one
    disjunct so the union stays well formed.
    """

    feasible = set(data_schema.preds)
    for t in sigma:
        feasible.update(a.pred for a in t.head)
    live = [
        d for d in query.disjuncts if all(a.pred in feasible for a in d.body)
    ]
    return UCQ(live) if live else query


def _sigma_prune(query: UCQ, sigma, budget: Budget, k: int) -> UCQ:
    """Drop disjuncts certified contained in a kept sibling under sigma.

    A match of the sibling in a chase prefix of the disjunct's canonical
    database certifies containment, so dropping is sound even when the
    chase is cut off.  High-treewidth disjuncts are tried first; when every
    one of them is subsumed the surviving union sits inside UCQ_k.
    """

    disjuncts = list(query.disjuncts)
    order = sorted(
        range(len(disjuncts)),
        key=lambda i: (cq_treewidth(disjuncts[i]) <= k, -len(disjuncts[i].body), i),
    )
    kept = set(range(len(disjuncts)))
    chased = {}

    def prefix(i):
        if i not in chased:
            db = canonical_database(disjuncts[i])
            res = chase(db, sigma, ChaseBudget.levels(budget.chase_levels))
            chased[i] = res.instance
        return chased[i]

    for i in order:
        if len(kept) == 1:
            break
        d = disjuncts[i]
        tup = tuple(Const(v.name) for v in d.answers)
        target = prefix(i)
        for j in sorted(kept):
            if j == i:
                continue
            if holds(disjuncts[j], target, answer=tup):
                kept.discard(i)
                break
    return UCQ([disjuncts[i] for i in sorted(kept)])


def omq_equiv_k(omq: OMQ, k: int, budget: Optional[Budget] = None) -> Verdict:
    """Is the query equivalent to one whose disjuncts have treewidth <= k?

    Decided against the compact approximation; the reverse containment holds
    by construction, so one containment check settles it.  A yes ships the
    approximation itself (normalized, marker rules and all) as the
    equivalent low-width query.
    """

    budget = budget or Budget()
    ap = compact_approx(omq, k)
    if ap.empty:
        d = omq.query.disjuncts[0]
        return Verdict(
            NO,
            witness=Counterexample(canonical_database(d), _answer_consts(d)),
            detail="approximation is empty",
        )
    approx_omq = ap.as_omq()
    res = omq_contains(omq, approx_omq, budget)
    if res.answer == YES:
        pruned = _sigma_prune(
            _drop_unmatchable(
                _normalized_witness_query(approx_omq.query),
                approx_omq.data_schema,
                approx_omq.sigma,
            ),
            approx_omq.sigma,
            budget,
            k,
        )
        witness = OMQ(approx_omq.data_schema, approx_omq.sigma, pruned)
        return Verdict(YES, witness=witness)
    return Verdict(res.answer, witness=res.witness, detail=res.detail)


def cqs_equiv_k(cqs: CQS, k: int, budget: Optional[Budget] = None) -> Verdict:
    budget = budget or Budget()
    ap = cqs_k_approx(cqs, k)
    if ap.empty:
        d = cqs.query.disjuncts[0]
        return Verdict(
            NO,
            witness=Counterexample(canonical_database(d), _answer_consts(d)),
            detail="approximation is empty",
        )
    res = cqs_contains(cqs, ap.as_cqs(), budget)
    if res.answer == YES:
        pruned = _sigma_prune(
            _normalized_witness_query(ap.query), cqs.sigma, budget, k
        )
        return Verdict(YES, witness=pruned)
    return Verdict(res.answer, witness=res.witness, detail=res.detail)


def cq_k_equiv_baseline(q: CQ, k: int) -> bool:
    """A lone CQ is low-width-equivalent exactly when its core is."""

    return cq_treewidth(core(q)) <= k


def _stable_chase(inst: Instance, sigma, budget: Budget) -> Instance:
    prev = None
    for levels in _level_steps(budget.chase_levels):
        res = chase(inst, sigma, ChaseBudget.levels(levels))
        if res.terminated:
            return res.instance
        if prev is not None and prev == res.instance:
            return res.instance
        prev = res.instance
    raise BudgetExceededError("chase did not stabilize within the level budget")


def sigma_minimal_cq(q: CQ, sigma: Sequence[TGD], budget: Optional[Budget] = None) -> CQ:
    """Equivalent CQ with the fewest variables, under the given rules.

    Any equivalent query maps homomorphically into the chase of q's canonical
    database, so its image there is an equivalent query over chase elements;
    searching maximal subqueries per element subset is therefore complete up
    to the chase prefix the budget affords.
    """

    budget = budget or Budget()
    sigma = tuple(sigma)
    base = canonical_database(q)
    chased = _stable_chase(base, sigma, budget)
    elements = list(chased.adom)
    ans = _answer_consts(q)
    if len(q.variables) <= len(ans):
        return q
    others = [e for e in elements if e not in set(ans)]
    tried = 0
    for n in range(len(ans), len(q.variables)):
        for extra in combinations(others, n - len(ans)):
            tried += 1
            if tried > budget.search_nodes:
                raise BudgetExceededError("candidate sweep exceeded its budget")
            chosen = set(ans) | set(extra)
            atoms = [a for a in chased.atoms if set(a.args) <= chosen]
            if not atoms:
                continue
            present = set()
            for a in atoms:
                present.update(a.args)
            if not set(ans) <= present:
                continue
            as_vars = [
                Atom(a.pred, tuple(Var(c.name) for c in a.args)) for a in atoms
            ]
            cand = CQ(tuple(Var(c.name) for c in ans), as_vars)
            holds, certified, _ = _certain_member(
                sigma, UCQ([q]), canonical_database(cand), ans, budget
            )
            if not (holds and certified):
                continue
            return _prune_atoms(cand, q, sigma, budget)
    return q


def _prune_atoms(cand: CQ, q: CQ, sigma, budget: Budget) -> CQ:
    """Greedy drop of atoms that the equivalence does not need."""

    ans = _answer_consts(q)
    body = list(cand.body)
    changed = True
    while changed:
        changed = False
        for a in list(body):
            rest = [b for b in body if b != a]
            if not rest:
                continue
            present = set()
            for b in rest:
                present.update(b.args)
            if not set(cand.answers) <= present:
                continue
            smaller = CQ(cand.answers, rest)
            holds, certified, _ = _certain_member(
                sigma, UCQ([q]), canonical_database(smaller), ans, budget
            )
            if holds and certified:
                body = rest
                changed = True
    return CQ(cand.answers, body)
