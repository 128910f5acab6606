"""Core value types: terms, atoms, instances, queries, dependencies.

Everything is immutable and hashable except Instance, which is a frozen-ish
container with cached views.  Queries and dependency bodies are constant-free;
instances are ground.  The total order on terms puts constants before
variables, then sorts by name; atom and instance iteration orders derive from
it so that every downstream enumeration is deterministic.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional, Sequence

from .errors import ModelError


@dataclass(frozen=True)
class Term:
    name: str
    is_var: bool

    def __repr__(self):
        return f"{'?' if self.is_var else ''}{self.name}"


def Var(name: str) -> Term:
    return Term(name, True)


def Const(name: str) -> Term:
    return Term(name, False)


def term_key(t: Term):
    return (t.is_var, t.name)


@dataclass(frozen=True)
class Atom:
    pred: str
    args: tuple

    def __init__(self, pred: str, args: Iterable[Term]):
        object.__setattr__(self, "pred", pred)
        object.__setattr__(self, "args", tuple(args))

    def __repr__(self):
        return f"{self.pred}({', '.join(repr(a) for a in self.args)})"

    @property
    def arity(self) -> int:
        return len(self.args)

    def variables(self) -> set:
        return {a for a in self.args if a.is_var}

    def constants(self) -> set:
        return {a for a in self.args if not a.is_var}

    def is_ground(self) -> bool:
        return all(not a.is_var for a in self.args)


def atom_key(a: Atom):
    return (a.pred, len(a.args), tuple(term_key(t) for t in a.args))


def apply_map(atom: Atom, mapping: Mapping[Term, Term]) -> Atom:
    return Atom(atom.pred, tuple(mapping.get(t, t) for t in atom.args))


@dataclass(frozen=True)
class Schema:
    arities: Mapping[str, int] = field(default_factory=dict)

    def __init__(self, arities: Mapping[str, int] = ()):
        object.__setattr__(self, "arities", dict(arities))

    def __contains__(self, pred: str) -> bool:
        return pred in self.arities

    @property
    def preds(self):
        return tuple(sorted(self.arities))

    @property
    def max_arity(self) -> int:
        return max(self.arities.values(), default=0)

    def union(self, other: "Schema") -> "Schema":
        merged = dict(self.arities)
        for p, n in other.arities.items():
            if merged.get(p, n) != n:
                raise ModelError(f"arity conflict for {p}: {merged[p]} vs {n}")
            merged[p] = n
        return Schema(merged)

    def __eq__(self, other):
        return isinstance(other, Schema) and dict(self.arities) == dict(other.arities)

    def __hash__(self):
        return hash(tuple(sorted(self.arities.items())))


def schema_of_atoms(atoms: Iterable[Atom]) -> Schema:
    arities = {}
    for a in atoms:
        if arities.setdefault(a.pred, a.arity) != a.arity:
            raise ModelError(f"arity conflict for {a.pred}")
    return Schema(arities)


class Instance:
    """Finite set of ground atoms, each carrying a derivation level.

    Level 0 marks original database atoms; the chase assigns higher levels.
    Equality and hashing ignore levels so chase outputs compare by content.
    """

    __slots__ = ("_levels", "_atoms", "_adom")

    def __init__(self, atoms: Iterable[Atom] = (), levels: Optional[Mapping[Atom, int]] = None):
        levels = dict(levels) if levels else {}
        table = {}
        for a in atoms:
            if not a.is_ground():
                raise ModelError(f"instance atom not ground: {a!r}")
            lvl = levels.get(a, 0)
            if a in table:
                table[a] = min(table[a], lvl)
            else:
                table[a] = lvl
        self._levels = {a: table[a] for a in sorted(table, key=atom_key)}
        self._atoms = tuple(self._levels)
        self._adom = None

    @property
    def atoms(self) -> tuple:
        return self._atoms

    def level(self, atom: Atom) -> int:
        return self._levels[atom]

    @property
    def levels(self) -> Mapping[Atom, int]:
        return dict(self._levels)

    @property
    def adom(self) -> tuple:
        if self._adom is None:
            seen = set()
            for a in self._atoms:
                seen.update(a.args)
            self._adom = tuple(sorted(seen, key=term_key))
        return self._adom

    def restrict(self, consts: Iterable[Term]) -> "Instance":
        keep = set(consts)
        return Instance(
            (a for a in self._atoms if set(a.args) <= keep),
            {a: l for a, l in self._levels.items()},
        )

    def union(self, other: "Instance") -> "Instance":
        levels = dict(self._levels)
        for a, l in other._levels.items():
            levels[a] = min(levels.get(a, l), l)
        return Instance(levels.keys(), levels)

    def schema(self) -> Schema:
        return schema_of_atoms(self._atoms)

    def __contains__(self, atom: Atom) -> bool:
        return atom in self._levels

    def __iter__(self):
        return iter(self._atoms)

    def __len__(self):
        return len(self._atoms)

    def __eq__(self, other):
        return isinstance(other, Instance) and set(self._atoms) == set(other._atoms)

    def __hash__(self):
        return hash(frozenset(self._atoms))

    def __repr__(self):
        return f"Instance({list(self._atoms)!r})"


class CQ:
    """Conjunctive query: distinct answer variables plus a nonempty body.

    Bodies are variable-only.  Every answer variable must occur in the body;
    anything else cannot be evaluated by matching.
    """

    __slots__ = ("answers", "body", "_vars")

    def __init__(self, answers: Sequence[Term], body: Sequence[Atom]):
        answers = tuple(answers)
        body = tuple(sorted(set(body), key=atom_key))
        if not body:
            raise ModelError("query body is empty")
        if len(set(answers)) != len(answers):
            raise ModelError("answer variables repeat")
        body_vars = set()
        for a in body:
            for t in a.args:
                if not t.is_var:
                    raise ModelError(f"constant {t.name} in query body")
                body_vars.add(t)
        for v in answers:
            if not v.is_var:
                raise ModelError(f"answer position holds constant {v.name}")
            if v not in body_vars:
                raise ModelError(f"answer variable {v.name} not in body")
        self.answers = answers
        self.body = body
        self._vars = None

    @property
    def variables(self) -> tuple:
        if self._vars is None:
            seen = set()
            for a in self.body:
                seen.update(a.args)
            self._vars = tuple(sorted(seen, key=term_key))
        return self._vars

    @property
    def existential_vars(self) -> tuple:
        ans = set(self.answers)
        return tuple(v for v in self.variables if v not in ans)

    @property
    def arity(self) -> int:
        return len(self.answers)

    def __eq__(self, other):
        return (
            isinstance(other, CQ)
            and self.answers == other.answers
            and self.body == other.body
        )

    def __hash__(self):
        return hash((self.answers, self.body))

    def __repr__(self):
        return f"CQ({self.answers!r} :- {list(self.body)!r})"


class UCQ:
    __slots__ = ("disjuncts",)

    def __init__(self, disjuncts: Sequence[CQ]):
        disjuncts = tuple(disjuncts)
        if not disjuncts:
            raise ModelError("union query has no disjuncts")
        arity = disjuncts[0].arity
        for d in disjuncts:
            if d.arity != arity:
                raise ModelError("disjunct arities differ")
        self.disjuncts = disjuncts

    @property
    def arity(self) -> int:
        return self.disjuncts[0].arity

    def __eq__(self, other):
        return isinstance(other, UCQ) and self.disjuncts == other.disjuncts

    def __hash__(self):
        return hash(self.disjuncts)

    def __repr__(self):
        return f"UCQ({list(self.disjuncts)!r})"


class TGD:
    """Dependency body -> exists z . head.  The body may be empty.

    When `existentials` is omitted it is derived as the head variables absent
    from the body.  An explicit value is stored as given; validate() reports
    head variables that are neither frontier nor declared existential.
    """

    __slots__ = ("body", "head", "existentials")

    def __init__(
        self,
        body: Sequence[Atom],
        head: Sequence[Atom],
        existentials: Optional[Sequence[Term]] = None,
    ):
        self.body = tuple(body)
        self.head = tuple(head)
        if not self.head:
            raise ModelError("dependency head is empty")
        body_vars = self._atom_vars(self.body)
        head_vars = self._atom_vars(self.head)
        if existentials is None:
            self.existentials = tuple(
                sorted(head_vars - body_vars, key=term_key)
            )
        else:
            self.existentials = tuple(existentials)

    @staticmethod
    def _atom_vars(atoms):
        out = set()
        for a in atoms:
            out.update(t for t in a.args if t.is_var)
        return out

    @property
    def body_vars(self) -> set:
        return self._atom_vars(self.body)

    @property
    def head_vars(self) -> set:
        return self._atom_vars(self.head)

    @property
    def frontier(self) -> tuple:
        return tuple(sorted(self.body_vars & self.head_vars, key=term_key))

    def __eq__(self, other):
        return (
            isinstance(other, TGD)
            and self.body == other.body
            and self.head == other.head
            and self.existentials == other.existentials
        )

    def __hash__(self):
        return hash((self.body, self.head, self.existentials))

    def __repr__(self):
        return f"TGD({list(self.body)!r} -> {list(self.head)!r})"


@dataclass(frozen=True)
class OMQ:
    """Ontology-mediated query: data schema, dependencies, union query."""

    data_schema: Schema
    sigma: tuple
    query: UCQ

    def __init__(self, data_schema: Schema, sigma: Sequence[TGD], query: UCQ):
        object.__setattr__(self, "data_schema", data_schema)
        object.__setattr__(self, "sigma", tuple(sigma))
        object.__setattr__(self, "query", query)

    @property
    def full_schema(self) -> Schema:
        sch = self.data_schema
        sch = sch.union(schema_of_tgds(self.sigma))
        return sch.union(schema_of_query(self.query))

    @property
    def is_full(self) -> bool:
        needed = self.full_schema
        return all(p in self.data_schema for p in needed.preds)


@dataclass(frozen=True)
class CQS:
    """Query under constraints: dependencies plus a union query; evaluated
    over constraint-satisfying databases of the combined schema."""

    sigma: tuple
    query: UCQ

    def __init__(self, sigma: Sequence[TGD], query: UCQ):
        object.__setattr__(self, "sigma", tuple(sigma))
        object.__setattr__(self, "query", query)

    @property
    def schema(self) -> Schema:
        return schema_of_tgds(self.sigma).union(schema_of_query(self.query))


def schema_of_tgds(sigma: Iterable[TGD]) -> Schema:
    atoms = []
    for t in sigma:
        atoms.extend(t.body)
        atoms.extend(t.head)
    return schema_of_atoms(atoms)


def schema_of_query(q: UCQ) -> Schema:
    atoms = []
    for d in q.disjuncts:
        atoms.extend(d.body)
    return schema_of_atoms(atoms)


def validate(obj, schema: Optional[Schema] = None) -> list:
    """Collect violations without raising.  Returns a list of messages."""

    out = []
    seen = {} if schema is None else dict(schema.arities)

    def check_atom(a: Atom):
        if seen.setdefault(a.pred, a.arity) != a.arity:
            out.append(f"arity mismatch {a.pred}")

    if isinstance(obj, Instance):
        for a in obj:
            check_atom(a)
            for t in a.args:
                if t.is_var:
                    out.append(f"variable {t.name} in database atom")
    elif isinstance(obj, TGD):
        for a in obj.body + obj.head:
            check_atom(a)
            for t in a.args:
                if not t.is_var:
                    out.append(f"constant {t.name} in dependency")
        frontier = obj.body_vars
        declared = set(obj.existentials)
        for v in sorted(obj.head_vars, key=term_key):
            if v not in frontier and v not in declared:
                out.append(
                    f"head variable {v.name} neither frontier nor declared existential"
                )
        for v in obj.existentials:
            if v in frontier:
                out.append(f"declared existential {v.name} occurs in body")
    elif isinstance(obj, (list, tuple)):
        for item in obj:
            out.extend(validate(item, Schema(seen)))
            try:
                seen.update(schema_of_tgds([item]).arities if isinstance(item, TGD) else {})
            except ModelError:
                pass
    elif isinstance(obj, CQ):
        for a in obj.body:
            check_atom(a)
    elif isinstance(obj, UCQ):
        for d in obj.disjuncts:
            for a in d.body:
                check_atom(a)
    elif isinstance(obj, OMQ):
        seen.update(obj.data_schema.arities)
        out.extend(validate(list(obj.sigma), Schema(seen)))
        try:
            seen.update(schema_of_tgds(obj.sigma).arities)
        except ModelError:
            pass
        out.extend(validate(obj.query, Schema(seen)))
    elif isinstance(obj, CQS):
        out.extend(validate(list(obj.sigma), Schema(seen)))
        try:
            seen.update(schema_of_tgds(obj.sigma).arities)
        except ModelError:
            pass
        out.extend(validate(obj.query, Schema(seen)))
    else:
        out.append(f"unsupported object {type(obj).__name__}")
    return out


def canonical_database(cq: CQ) -> Instance:
    """Freeze a query body into a database, keeping variable names."""

    frozen = {v: Const(v.name) for v in cq.variables}
    return Instance(apply_map(a, frozen) for a in cq.body)


_NULL_RE = re.compile(r"^_n(\d+)$")


def null_factory(existing_names: Iterable[str]):
    """Fresh-null generator `_n<counter>`, starting above any null already
    present so reruns over chase output never collide."""

    start = 0
    taken = set()
    for name in existing_names:
        taken.add(name)
        m = _NULL_RE.match(name)
        if m:
            start = max(start, int(m.group(1)))
    counter = [start]

    def fresh() -> Term:
        while True:
            counter[0] += 1
            name = f"_n{counter[0]}"
            if name not in taken:
                taken.add(name)
                return Const(name)

    return fresh
