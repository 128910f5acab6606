"""Syntactic classification of dependencies.

A rule is guarded when some body atom carries every body variable (an empty
body counts), frontier-guarded when some body atom carries every frontier
variable, linear when the body has at most one atom, and full when it has no
existentials.  Guard reporting uses the first qualifying body atom in body
order.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

from .model import Atom, TGD, schema_of_tgds


@dataclass(frozen=True)
class Classification:
    guarded: bool
    frontier_guarded: bool
    linear: bool
    full: bool
    head_atoms: int
    guard: Optional[Atom]


@dataclass(frozen=True)
class SetClassification:
    guarded: bool
    frontier_guarded: bool
    linear: bool
    full: bool
    m: int
    r: int


def classify(tgd: TGD) -> Classification:
    body_vars = tgd.body_vars
    frontier = set(tgd.frontier)
    guard = None
    frontier_guard = None
    for a in tgd.body:
        args = set(a.args)
        if guard is None and body_vars <= args:
            guard = a
        if frontier_guard is None and frontier <= args:
            frontier_guard = a
    guarded = not tgd.body or guard is not None
    return Classification(
        guarded=guarded,
        frontier_guarded=not tgd.body or frontier_guard is not None,
        linear=len(tgd.body) <= 1,
        full=not tgd.existentials and tgd.head_vars <= body_vars,
        head_atoms=len(tgd.head),
        guard=guard if tgd.body else None,
    )


def classify_set(sigma: Sequence[TGD]) -> SetClassification:
    rows = [classify(t) for t in sigma]
    return SetClassification(
        guarded=all(r.guarded for r in rows),
        frontier_guarded=all(r.frontier_guarded for r in rows),
        linear=all(r.linear for r in rows),
        full=all(r.full for r in rows),
        m=max((r.head_atoms for r in rows), default=0),
        r=schema_of_tgds(sigma).max_arity,
    )


def verdict_line(c) -> str:
    parts = []
    if c.linear:
        parts.append("linear")
    if c.guarded:
        parts.append("guarded")
    if c.frontier_guarded and not c.guarded:
        parts.append("frontier-guarded")
    if c.full:
        parts.append("full")
    if not parts:
        parts.append("unrestricted")
    if isinstance(c, SetClassification):
        parts.append(f"m={c.m}")
        parts.append(f"r={c.r}")
    else:
        parts.append(f"m={c.head_atoms}")
    return " ".join(parts)
