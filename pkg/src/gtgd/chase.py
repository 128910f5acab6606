"""Oblivious level-wise chase, full-rule fixpoints, and the ground
projection of guarded chases.

Triggers fire in a canonical order (natural level, rule index, image, then
assignment), fresh nulls are numbered `_n<counter>` above anything already in
the input, and a trigger is suppressed only when the same rule has fired with
the same body assignment before.  Keying suppression on the atom image would
be wrong: distinct assignments can share an image.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

from .errors import (
    ModelError,
    NotFullError,
    NotGuardedError,
    NotLinearError,
    SaturationCapError,
    TriggerError,
)
from .homs import eval_query, find_homomorphisms, is_hom
from .model import (
    Atom,
    Instance,
    TGD,
    Term,
    UCQ,
    apply_map,
    atom_key,
    null_factory,
    term_key,
)


@dataclass(frozen=True)
class ChaseBudget:
    kind: str
    value: int

    @staticmethod
    def levels(n: int) -> "ChaseBudget":
        return ChaseBudget("levels", n)

    @staticmethod
    def atom_cap(n: int) -> "ChaseBudget":
        return ChaseBudget("atom_cap", n)

    @staticmethod
    def fixpoint_with_cap(n: int) -> "ChaseBudget":
        return ChaseBudget("fixpoint_with_cap", n)


@dataclass
class ChaseResult:
    instance: Instance
    terminated: bool
    budget_exhausted: bool
    steps: int


def _sorted_body_vars(tgd: TGD):
    return tuple(sorted(tgd.body_vars, key=term_key))


def chase_step(inst: Instance, tgd: TGD, assignment: Dict[Term, Term]) -> Instance:
    """Fire one trigger.  The assignment must be a homomorphism of the body."""

    if not is_hom(tgd.body, inst, assignment):
        raise TriggerError("assignment is not a homomorphism of the rule body")
    fresh = null_factory(t.name for t in inst.adom)
    mapping = dict(assignment)
    for z in tgd.existentials:
        mapping[z] = fresh()
    base = 0 if not tgd.body else max(inst.level(apply_map(a, assignment)) for a in tgd.body)
    levels = dict(inst.levels)
    for a in tgd.head:
        img = apply_map(a, mapping)
        if not img.is_ground():
            raise TriggerError(f"head variable {next(t.name for t in img.args if t.is_var)} unbound")
        levels.setdefault(img, base + 1)
    return Instance(levels.keys(), levels)


def _candidate_triggers(levels: Dict[Atom, int], sigma: Sequence[TGD], fired):
    inst_atoms = list(levels)
    out = []
    for ti, tgd in enumerate(sigma):
        bvars = _sorted_body_vars(tgd)
        for h in find_homomorphisms(tgd.body, inst_atoms, mode="all"):
            key = (ti, tuple(h[v] for v in bvars))
            if key in fired:
                continue
            image = [apply_map(a, h) for a in tgd.body]
            natural = 1 + max((levels[a] for a in image), default=0)
            image_key = tuple(sorted(atom_key(a) for a in image))
            out.append((natural, ti, image_key, tuple(term_key(h[v]) for v in bvars), key, h))
    out.sort(key=lambda row: row[:4])
    return out


def chase(inst: Instance, sigma: Sequence[TGD], budget: ChaseBudget) -> ChaseResult:
    """Level-wise oblivious chase under a budget.

    Budget exhaustion is reported in the result, never raised; `terminated`
    means no unfired trigger remains.
    """

    for tgd in sigma:
        undeclared = tgd.head_vars - tgd.body_vars - set(tgd.existentials)
        if undeclared:
            raise ModelError(
                f"head variable {sorted(undeclared, key=term_key)[0].name} "
                "neither frontier nor declared existential"
            )
    levels: Dict[Atom, int] = dict(inst.levels)
    fresh = null_factory(t.name for t in inst.adom)
    fired = set()
    steps = 0
    exhausted = False
    while True:
        cands = _candidate_triggers(levels, sigma, fired)
        if not cands:
            return ChaseResult(Instance(levels.keys(), levels), True, exhausted, steps)
        current = cands[0][0]
        if budget.kind == "levels" and current > budget.value:
            return ChaseResult(Instance(levels.keys(), levels), False, True, steps)
        wave = [row for row in cands if row[0] == current]
        for natural, ti, _ik, _ak, key, h in wave:
            new_atoms = []
            mapping = dict(h)
            for z in sigma[ti].existentials:
                mapping[z] = fresh()
            for a in sigma[ti].head:
                img = apply_map(a, mapping)
                if img not in levels:
                    new_atoms.append(img)
            if budget.kind in ("atom_cap", "fixpoint_with_cap"):
                if len(levels) + len(new_atoms) > budget.value:
                    return ChaseResult(Instance(levels.keys(), levels), False, True, steps)
            fired.add(key)
            steps += 1
            for img in new_atoms:
                levels[img] = natural
            for a in sigma[ti].head:
                img = apply_map(a, mapping)
                if levels[img] > natural:
                    levels[img] = natural


def is_full_tgd(tgd: TGD) -> bool:
    return not tgd.existentials and tgd.head_vars <= tgd.body_vars


def _guard_atom(tgd: TGD) -> Optional[Atom]:
    need = tgd.body_vars
    for a in tgd.body:
        if need <= set(a.args):
            return a
    return None


def is_guarded_tgd(tgd: TGD) -> bool:
    return not tgd.body or _guard_atom(tgd) is not None


def chase_full(inst: Instance, sigma: Sequence[TGD]) -> Instance:
    """Fixpoint chase for full rule sets; always terminates."""

    for tgd in sigma:
        if not is_full_tgd(tgd):
            raise NotFullError(f"rule has existentials: {tgd!r}")
    result = chase(inst, sigma, ChaseBudget.fixpoint_with_cap(10**9))
    assert result.terminated
    if all(is_guarded_tgd(t) for t in sigma):
        preds = {a.pred for t in sigma for a in t.body + t.head} | {a.pred for a in inst}
        r = max(
            [a.arity for t in sigma for a in t.body + t.head] + [a.arity for a in inst],
            default=0,
        )
        bound = max(1, len(inst)) * max(1, len(preds)) * max(1, r) ** r
        assert len(result.instance) <= bound, "guarded full chase exceeded its size bound"
    return result.instance


def _pattern_of(atom: Atom, prefix: Iterable[Atom], base: set):
    args = atom.args
    label = {}
    labels = []
    for t in args:
        if t in base:
            labels.append(("c", t.name))
        else:
            if t not in label:
                label[t] = len(label)
            labels.append(("n", label[t]))
    scope = set(args)
    side = []
    for b in prefix:
        if b is atom or not set(b.args) <= scope:
            continue
        row = []
        for t in b.args:
            row.append(("c", t.name) if t in base else ("n", label[t]))
        side.append((b.pred, tuple(row)))
    return (atom.pred, tuple(labels), frozenset(side))


def ground_chase(
    inst: Instance,
    sigma: Sequence[TGD],
    stable_rounds: int = 2,
    max_levels: int = 64,
) -> Instance:
    """Ground atoms over the input domain entailed by the chase.

    Runs the chase level by level and stops once both the ground projection
    and the set of local type patterns (guard shape with base constants
    labelled, plus co-located atoms) have been stable for `stable_rounds`
    consecutive levels.  Both are monotone and range over finite spaces, so
    the loop always ends; the level cap turns pathological slow convergence
    into an error instead of a wrong answer.
    """

    for tgd in sigma:
        if not is_guarded_tgd(tgd):
            raise NotGuardedError(f"rule not guarded: {tgd!r}")
    base = set(inst.adom)
    levels: Dict[Atom, int] = dict(inst.levels)
    fresh = null_factory(t.name for t in inst.adom)
    fired = set()
    stable = 0
    seen_patterns = set()
    ground = {a for a in levels if set(a.args) <= base}
    rounds = 0
    while True:
        prefix = list(levels)
        new_patterns = False
        for a in prefix:
            p = _pattern_of(a, prefix, base)
            if p not in seen_patterns:
                seen_patterns.add(p)
                new_patterns = True
        new_ground = {a for a in levels if set(a.args) <= base}
        if new_ground == ground and not new_patterns:
            stable += 1
        else:
            stable = 0
        ground = new_ground
        if stable >= stable_rounds:
            keep = {a: l for a, l in levels.items() if set(a.args) <= base}
            return Instance(keep.keys(), keep)
        cands = _candidate_triggers(levels, sigma, fired)
        if not cands:
            keep = {a: l for a, l in levels.items() if set(a.args) <= base}
            return Instance(keep.keys(), keep)
        rounds += 1
        if rounds > max_levels:
            raise SaturationCapError(f"ground chase not stable within {max_levels} levels")
        current = cands[0][0]
        for natural, ti, _ik, _ak, key, h in cands:
            if natural != current:
                continue
            mapping = dict(h)
            for z in sigma[ti].existentials:
                mapping[z] = fresh()
            fired.add(key)
            for a in sigma[ti].head:
                img = apply_map(a, mapping)
                if img not in levels or levels[img] > natural:
                    levels[img] = min(levels.get(img, natural), natural)


def check_level_bound(result: ChaseResult, sigma: Sequence[TGD]) -> List[str]:
    """Per-level prefix size against the linear-chase growth bound."""

    from .classify import classify

    for tgd in sigma:
        if not classify(tgd).linear:
            raise NotLinearError(f"rule not linear: {tgd!r}")
    h_max = max((len(t.head) for t in sigma), default=0)
    per_level: Dict[int, int] = {}
    for a in result.instance:
        lvl = result.instance.level(a)
        per_level[lvl] = per_level.get(lvl, 0) + 1
    d0 = per_level.get(0, 0)
    factor = len(sigma) * h_max + 1
    out = []
    running = 0
    for lvl in sorted(per_level):
        running += per_level[lvl]
        bound = max(1, d0) * factor**lvl
        if running > bound:
            out.append(f"level {lvl}: prefix {running} exceeds bound {bound}")
    return out


def chase_certain_answers(
    inst: Instance, sigma: Sequence[TGD], query: UCQ, budget: ChaseBudget
):
    """(answers over the input domain, exact flag).  Sound under any budget;
    exact when the chase terminated within it."""

    result = chase(inst, sigma, budget)
    base = set(inst.adom)
    answers = {
        t for t in eval_query(query, result.instance) if all(c in base for c in t)
    }
    return answers, result.terminated
