"""Type-based compilation of guarded rule sets into linear ones.

A type packages a guard atom shape (first-occurrence integer pattern) with the
set of co-located facts over its positions.  Typed predicates are
content-addressed: the same type gets the same name in every run, so instances
and rule sets built independently stay compatible.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from itertools import permutations, product
from typing import Iterable, Optional, Sequence

from .chase import ChaseBudget, chase, ground_chase
from .classify import classify
from .errors import (
    BudgetExceededError,
    ModelError,
    NotGuardedError,
    NotLinearError,
    RewritingCapError,
    TypeSpaceCapError,
)
from .homs import canonical_cq_key, eval_query, iso_dedupe, subsumption_prune
from .model import (
    CQ,
    OMQ,
    UCQ,
    Atom,
    Const,
    Instance,
    Schema,
    TGD,
    Term,
    Var,
    schema_of_tgds,
    term_key,
)

DEFAULT_TYPE_CAP = 50000
DEFAULT_REWRITE_CAP = 10000

SideAtom = tuple  # (pred, tuple of ints)


@dataclass(frozen=True)
class SigmaType:
    """Guard pattern plus co-located side atoms, all over guard positions."""

    guard_pred: str
    guard_args: tuple
    side: frozenset

    @property
    def arity(self) -> int:
        return len(self.guard_args)

    @property
    def width(self) -> int:
        # number of distinct positions the pattern touches
        return max(self.guard_args, default=0)

    def atom_shapes(self):
        """Guard first, then side atoms sorted; each as (pred, int tuple)."""
        return ((self.guard_pred, self.guard_args),) + tuple(sorted(self.side))

    def atoms(self) -> tuple:
        """The shapes as ground atoms over integer-named constants."""
        return tuple(
            Atom(p, tuple(Const(str(i)) for i in args)) for p, args in self.atom_shapes()
        )

    def canon(self) -> str:
        guard = f"{self.guard_pred}({','.join(str(i) for i in self.guard_args)})"
        side = ";".join(
            f"{p}({','.join(str(i) for i in args)})" for p, args in sorted(self.side)
        )
        return f"{guard}|{side}"


_NAME_CACHE: dict = {}


def typed_pred_name(t: SigmaType) -> str:
    name = _NAME_CACHE.get(t)
    if name is None:
        digest = hashlib.sha256(t.canon().encode("ascii")).hexdigest()[:12]
        name = f"_t{digest}"
        _NAME_CACHE[t] = name
    return name


class TypeRegistry:
    """Bidirectional map between types and their generated predicate names."""

    def __init__(self):
        self._by_name: dict = {}
        self._order: list = []

    def add(self, t: SigmaType) -> str:
        name = typed_pred_name(t)
        if name not in self._by_name:
            self._by_name[name] = t
            self._order.append(t)
        return name

    def type_of(self, name: str) -> SigmaType:
        try:
            return self._by_name[name]
        except KeyError:
            raise ModelError(f"unknown typed predicate {name}") from None

    def __contains__(self, name: str) -> bool:
        return name in self._by_name

    @property
    def types(self) -> tuple:
        return tuple(self._order)

    def legend(self) -> list:
        lines = []
        for t in self._order:
            guard, *side = t.atom_shapes()
            parts = f"{guard[0]}({','.join(map(str, guard[1]))})"
            if side:
                parts += " | " + ", ".join(
                    f"{p}({','.join(map(str, a))})" for p, a in side
                )
            lines.append(f"{typed_pred_name(t)} = [{parts}]")
        return lines


def guard_patterns(n: int):
    """First-occurrence integer sequences of length n: t1=1, each next value
    is an already-used one or the next unused."""

    if n == 0:
        return [()]
    seqs = [(1,)]
    for _ in range(n - 1):
        seqs = [s + (v,) for s in seqs for v in range(1, max(s) + 2)]
    return seqs


def _side_candidates(schema: Schema, width: int, guard: SideAtom):
    cands = []
    for pred in schema.preds:
        ar = schema.arities[pred]
        for args in product(range(1, width + 1), repeat=ar):
            shape = (pred, args)
            if shape != guard:
                cands.append(shape)
    return cands


def enumerate_types(schema: Schema, cap: int = DEFAULT_TYPE_CAP):
    """All types over the schema.  Counted before materialising: a schema
    whose type space exceeds `cap` raises instead of churning."""

    guards = []
    for pred in schema.preds:
        for pattern in guard_patterns(schema.arities[pred]):
            guards.append((pred, pattern))
    total = 0
    sized = []
    for guard in guards:
        width = max(guard[1], default=0)
        cands = _side_candidates(schema, width, guard)
        if len(cands) > 60 or total + (1 << len(cands)) > cap:
            raise TypeSpaceCapError(
                f"type space over {sorted(schema.preds)} exceeds cap {cap}"
            )
        total += 1 << len(cands)
        sized.append((guard, cands))
    out = []
    for (pred, pattern), cands in sized:
        for mask in range(1 << len(cands)):
            side = frozenset(c for i, c in enumerate(cands) if mask >> i & 1)
            out.append(SigmaType(pred, pattern, side))
    return out


def _normalized_type(guard_atom: Atom, side_atoms: Iterable[Atom]) -> SigmaType:
    ren: dict = {}
    pattern = []
    for t in guard_atom.args:
        if t not in ren:
            ren[t] = len(ren) + 1
        pattern.append(ren[t])
    side = set()
    for b in side_atoms:
        if b == guard_atom:
            continue
        side.add((b.pred, tuple(ren[t] for t in b.args)))
    return SigmaType(guard_atom.pred, tuple(pattern), frozenset(side))


def _colocated(atom: Atom, atoms: Iterable[Atom]):
    scope = set(atom.args)
    return [b for b in atoms if set(b.args) <= scope]


def type_of_atom(atom: Atom, inst: Instance, sigma: Sequence[TGD]) -> SigmaType:
    """The one maximal type the atom realises in `inst` under `sigma`:
    side atoms are everything derivable-ground over the atom's constants."""

    if not atom.is_ground():
        raise ModelError("type assignment needs a ground atom")
    closure = ground_chase(inst, sigma)
    return _normalized_type(atom, _colocated(atom, closure.atoms))


def base_db(inst: Instance, sigma: Sequence[TGD]) -> Instance:
    """Typed copy of the instance: one atom per input fact, carrying its
    maximal type and the original argument tuple."""

    closure = ground_chase(inst, sigma)
    typed = []
    for a in inst.atoms:
        t = _normalized_type(a, _colocated(a, closure.atoms))
        typed.append(Atom(typed_pred_name(t), a.args))
    return Instance(typed)


@dataclass(frozen=True)
class LinearizationResult:
    rules: tuple
    types: tuple
    registry: TypeRegistry


def _int_instance(shapes: Iterable[SideAtom]) -> Instance:
    return Instance(
        [Atom(p, tuple(Const(str(i)) for i in args)) for p, args in shapes]
    )


def _generator_rule(t: SigmaType, tgd: TGD, sigma: Sequence[TGD], ar_base: int):
    """The one linear rule the pair (type, dependency) induces, or None.

    The guard match pins every body variable positionally, so at most one
    body image exists; it must land inside the type's atoms.
    """

    cls = classify(tgd)
    guard = cls.guard
    if guard is None or not cls.guarded:
        raise NotGuardedError("type translation needs guarded dependencies")
    if guard.pred != t.guard_pred or len(guard.args) != len(t.guard_args):
        return None
    h: dict = {}
    for v, val in zip(guard.args, t.guard_args):
        if h.setdefault(v, val) != val:
            return None
    shapes = set(t.atom_shapes())
    for b in tgd.body:
        if (b.pred, tuple(h[x] for x in b.args)) not in shapes:
            return None

    f = dict(h)
    for i, z in enumerate(tgd.existentials, start=1):
        f[z] = ar_base + i
    head_ints = [(a.pred, tuple(f[x] for x in a.args)) for a in tgd.head]
    frontier_img = {h[x] for x in tgd.frontier}
    projected = [s for s in t.atom_shapes() if set(s[1]) <= frontier_img]
    closure = ground_chase(_int_instance(head_ints + projected), sigma)

    head_atoms = []
    succs = []
    seen = set()
    for (pred, ints), src in zip(head_ints, tgd.head):
        ground = Atom(pred, tuple(Const(str(i)) for i in ints))
        succ = _normalized_type(ground, _colocated(ground, closure.atoms))
        atom = Atom(typed_pred_name(succ), src.args)
        if atom not in seen:
            seen.add(atom)
            head_atoms.append(atom)
            succs.append(succ)
    rule = TGD(
        [Atom(typed_pred_name(t), guard.args)],
        head_atoms,
        existentials=tgd.existentials,
    )
    return rule, succs


def linearize(
    sigma: Sequence[TGD],
    schema: Optional[Schema] = None,
    seed_types: Optional[Iterable[SigmaType]] = None,
    cap: int = DEFAULT_TYPE_CAP,
) -> LinearizationResult:
    """Compile guarded dependencies to linear rules over typed predicates.

    Full mode enumerates every type over the rule schema.  Seeded mode closes
    the given set under successor generation, which is what evaluation over a
    fixed database needs.  Empty-body rules have no guard to type and must be
    handled by the caller (pre-firing); they are rejected here.
    """

    for t in sigma:
        if not t.body:
            raise NotGuardedError("empty-body dependency has no guard to type")
        if not classify(t).guarded:
            raise NotGuardedError(f"not guarded: {t}")
    sigma = list(sigma)
    rule_schema = schema_of_tgds(sigma)
    ar_base = rule_schema.max_arity

    if seed_types is None:
        pool = enumerate_types(schema or rule_schema, cap=cap)
        closing = False
    else:
        pool = list(seed_types)
        closing = True

    registry = TypeRegistry()
    seen = {}
    queue = []
    for t in pool:
        if t not in seen:
            seen[t] = None
            queue.append(t)
            registry.add(t)

    generators = []
    while queue:
        t = queue.pop(0)
        for tgd in sigma:
            step = _generator_rule(t, tgd, sigma, ar_base)
            if step is None:
                continue
            rule, succs = step
            generators.append(rule)
            for s in succs:
                registry.add(s)
                if closing and s not in seen:
                    seen[s] = None
                    queue.append(s)

    expanders = []
    for t in seen:
        xs = tuple(Var(f"x{i}") for i in range(1, t.arity + 1))
        expanders.append(
            TGD([Atom(typed_pred_name(t), xs)], [Atom(t.guard_pred, xs)], existentials=())
        )
    return LinearizationResult(
        tuple(generators + expanders), tuple(seen), registry
    )


def fpt_eval_omq(
    omq: OMQ,
    inst: Instance,
    level_budget: Optional[int] = None,
    type_cap: int = DEFAULT_TYPE_CAP,
):
    """Certain answers of a guarded query via the linear compilation.

    Chases the typed database with the seeded linear rules for a bounded
    number of levels; termination gives an exact answer set, otherwise two
    consecutive stable levels are accepted and anything else raises.
    """

    for t in omq.sigma:
        if t.body and not classify(t).guarded:
            raise NotGuardedError(f"not guarded: {t}")
    empties = [t for t in omq.sigma if not t.body]
    rest = [t for t in omq.sigma if t.body]
    base = inst
    if empties:
        base = chase(inst, empties, ChaseBudget.levels(1)).instance
    adom = set(inst.adom)

    def filtered(target: Instance):
        return {
            row
            for row in eval_query(omq.query, target)
            if all(c in adom for c in row)
        }

    if not rest:
        return filtered(base)

    closure = ground_chase(base, rest)
    seeds = []
    seen = set()
    for a in base.atoms:
        t = _normalized_type(a, _colocated(a, closure.atoms))
        if t not in seen:
            seen.add(t)
            seeds.append(t)
    lin = linearize(rest, seed_types=seeds, cap=type_cap)
    dstar = base_db(base, rest)

    biggest = max(len(d.body) for d in omq.query.disjuncts)
    levels = level_budget or (max(1, len(lin.types)) * biggest + 2)
    res = chase(dstar, lin.rules, ChaseBudget.levels(levels))
    full = res.instance.union(base)
    answers = filtered(full)
    if res.terminated:
        return answers
    deepest = max(res.instance.levels.values(), default=0)
    keep = {a: lv for a, lv in res.instance.levels.items() if lv < deepest}
    trimmed = Instance(keep, keep).union(base)
    if filtered(trimmed) == answers:
        return answers
    raise BudgetExceededError(
        f"no-at-depth: answers still changing at level {deepest}"
    )


# ---------------------------------------------------------------------------
# UCQ rewriting


class _UnionFind:
    def __init__(self):
        self.parent: dict = {}

    def find(self, x):
        p = self.parent.setdefault(x, x)
        if p != x:
            p = self.find(p)
            self.parent[x] = p
        return p

    def union(self, a, b):
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            self.parent[ra] = rb


_FRESH = 0


def _rename_apart(tgd: TGD) -> TGD:
    global _FRESH
    _FRESH += 1
    tag = _FRESH
    ren = {}
    for v in sorted(tgd.body_vars | tgd.head_vars, key=term_key):
        ren[v] = Var(f"{v.name}~{tag}")
    from .model import apply_map

    return TGD(
        [apply_map(a, ren) for a in tgd.body],
        [apply_map(a, ren) for a in tgd.head],
        existentials=tuple(ren[z] for z in tgd.existentials),
    )


def _nonempty_subsets(n: int):
    for mask in range(1, 1 << n):
        yield [i for i in range(n) if mask >> i & 1]


def _piece_rewrites(d: CQ, tgd: TGD):
    """One-step backward rewritings of `d` through `tgd`.

    A piece of the body is unified with head atoms; classes touching an
    existential variable must stay internal to the piece and never meet an
    answer variable, a second existential, or a frontier variable.
    """

    rule = _rename_apart(tgd)
    ex = set(rule.existentials)
    answers = set(d.answers)
    body = list(d.body)
    out = []
    for piece_idx in _nonempty_subsets(len(body)):
        piece = [body[i] for i in piece_idx]
        outside = [body[i] for i in range(len(body)) if i not in piece_idx]
        outside_vars = set()
        for a in outside:
            outside_vars.update(a.args)
        targets = []
        for p in piece:
            cands = [h for h in rule.head if h.pred == p.pred and len(h.args) == len(p.args)]
            if not cands:
                targets = None
                break
            targets.append(cands)
        if targets is None:
            continue
        for combo in product(*targets):
            uf = _UnionFind()
            for p, h in zip(piece, combo):
                for a, b in zip(p.args, h.args):
                    uf.union(a, b)
            classes: dict = {}
            for p, h in zip(piece, combo):
                for t in list(p.args) + list(h.args):
                    classes.setdefault(uf.find(t), set()).add(t)
            ok = True
            for members in classes.values():
                zs = members & ex
                if not zs:
                    if len(members & answers) > 1:
                        ok = False
                        break
                    continue
                if len(zs) > 1 or members & answers or members & outside_vars:
                    ok = False
                    break
                if (members - ex) & rule.body_vars:
                    ok = False
                    break
            if not ok:
                continue

            def rep(term):
                members = classes.get(uf.find(term))
                if members is None:
                    return term
                anchored = sorted(members & answers, key=term_key)
                if anchored:
                    return anchored[0]
                dvars = sorted(
                    (m for m in members if m not in ex and m not in rule.body_vars),
                    key=term_key,
                )
                if dvars:
                    return dvars[0]
                return sorted(members, key=term_key)[0]

            new_atoms = []
            for a in outside + list(rule.body):
                new_atoms.append(Atom(a.pred, tuple(rep(t) for t in a.args)))
            if not new_atoms:
                continue
            present = set()
            for a in new_atoms:
                present.update(a.args)
            if not answers <= present:
                continue
            out.append(CQ(d.answers, new_atoms))
    return out


def ucq_rewrite(
    sigma: Sequence[TGD],
    q: UCQ,
    cap: int = DEFAULT_REWRITE_CAP,
    on_cap: str = "raise",
):
    """Backward rewriting closure of `q` under `sigma`.

    Returns (ucq, saturated).  With on_cap="raise" an exceeded cap is an
    error; with "partial" the rewriting so far comes back flagged unsaturated.
    """

    seen: dict = {}
    queue = []
    for d in q.disjuncts:
        k = canonical_cq_key(d)
        if k not in seen:
            seen[k] = d
            queue.append(d)
    saturated = True
    while queue:
        d = queue.pop(0)
        stop = False
        for tgd in sigma:
            for r in _piece_rewrites(d, tgd):
                k = canonical_cq_key(r)
                if k in seen:
                    continue
                if len(seen) >= cap:
                    if on_cap == "raise":
                        raise RewritingCapError(
                            f"rewriting exceeded {cap} conjunctive queries"
                        )
                    saturated = False
                    stop = True
                    break
                seen[k] = r
                queue.append(r)
            if stop:
                break
        if stop:
            break
    disjuncts = subsumption_prune(list(seen.values()))
    return UCQ(disjuncts), saturated


def ucq_rewrite_linear(sigma: Sequence[TGD], q: UCQ, cap: int = DEFAULT_REWRITE_CAP) -> UCQ:
    for t in sigma:
        if len(t.body) > 1:
            raise NotLinearError(f"not linear: {t}")
    rewritten, _ = ucq_rewrite(sigma, q, cap=cap, on_cap="raise")
    return rewritten


# ---------------------------------------------------------------------------
# Existential elimination


def _pattern_var(i: int) -> Term:
    return Var(f"v{i}")


def _shape_as_var_atom(shape: SideAtom) -> Atom:
    pred, args = shape
    return Atom(pred, tuple(_pattern_var(i) for i in args))


def _unfold_typed(d: CQ, registry: TypeRegistry):
    """Replace typed atoms by their defining pattern.  Returns None when the
    unfolding would have to merge two answer variables."""

    body = list(d.body)
    while True:
        idx = next((i for i, a in enumerate(body) if a.pred in registry), None)
        if idx is None:
            break
        atom = body.pop(idx)
        t = registry.type_of(atom.pred)
        binding: dict = {}
        merges = []
        for term, slot in zip(atom.args, t.guard_args):
            prior = binding.get(slot)
            if prior is None:
                binding[slot] = term
            elif prior != term:
                merges.append((prior, term))
        answers = set(d.answers)
        subst: dict = {}
        for a, b in merges:
            a = subst.get(a, a)
            b = subst.get(b, b)
            if a == b:
                continue
            if a in answers and b in answers:
                return None
            keep, drop = (a, b) if a in answers else (b, a)
            for k, v in list(subst.items()):
                if v == drop:
                    subst[k] = keep
            subst[drop] = keep
        for slot in list(binding):
            term = binding[slot]
            binding[slot] = subst.get(term, term)
        replacement = [
            Atom(p, tuple(binding[i] for i in args)) for p, args in t.atom_shapes()
        ]
        body = [
            Atom(a.pred, tuple(subst.get(x, x) for x in a.args)) for a in body
        ] + replacement
    return CQ(d.answers, body)


def eliminate_existentials(
    omq: OMQ,
    type_cap: int = DEFAULT_TYPE_CAP,
    rewrite_cap: int = DEFAULT_REWRITE_CAP,
) -> OMQ:
    """Equivalent query whose rules are guarded and full.

    Runs the full type enumeration, rewrites the query backwards through the
    linear compilation, then unfolds typed atoms into their defining patterns.
    The surviving rules are the per-type completion rules, split single-head.
    """

    for t in omq.sigma:
        if not t.body:
            raise ModelError("empty-body dependency unsupported here")
        if not classify(t).guarded:
            raise NotGuardedError(f"not guarded: {t}")
    sigma = list(omq.sigma)
    rule_schema = schema_of_tgds(sigma)
    types = enumerate_types(rule_schema, cap=type_cap)
    lin = linearize(sigma, cap=type_cap)

    completion_rules = []
    for t in types:
        shapes = t.atom_shapes()
        body = [_shape_as_var_atom(s) for s in shapes]
        closure = ground_chase(_int_instance(shapes), sigma)
        known = set(shapes)
        for a in sorted(closure.atoms, key=lambda a: (a.pred, a.args)):
            shape = (a.pred, tuple(int(c.name) for c in a.args))
            if shape in known:
                continue
            known.add(shape)
            completion_rules.append(TGD(body, [_shape_as_var_atom(shape)], existentials=()))

    rewritten = ucq_rewrite_linear(lin.rules, omq.query, cap=rewrite_cap)
    unfolded = []
    for d in rewritten.disjuncts:
        u = _unfold_typed(d, lin.registry)
        if u is not None:
            unfolded.append(u)
    if not unfolded:
        raise ModelError("rewriting produced no usable disjunct")
    query = UCQ(subsumption_prune(iso_dedupe(unfolded)))
    return OMQ(omq.data_schema, tuple(completion_rules), query)
