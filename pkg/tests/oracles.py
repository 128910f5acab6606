"""Independent reference implementations the tests check the package against.

Deliberately naive: total-map enumeration for homomorphisms, round-based
chasing with separate trigger bookkeeping, elimination-order search for
treewidth.  Shares only the value types with the package, none of the
algorithms.
"""

from itertools import combinations, product

from gtgd.model import CQ, UCQ, Atom, Const, Instance


def _atom_set(target):
    if isinstance(target, Instance):
        return set(target.atoms)
    return set(target)


def _domain(atoms):
    return sorted({t for a in atoms for t in a.args}, key=lambda t: t.name)


def brute_homs(atoms, target, fixed=None):
    """Every map of the pattern variables into adom(target) sending all
    pattern atoms into the target.  No pruning, no ordering heuristics."""

    atoms = list(atoms)
    tatoms = _atom_set(target)
    dom = _domain(tatoms)
    seen = []
    for a in atoms:
        for t in a.args:
            if t.is_var and t not in seen:
                seen.append(t)
    base = dict(fixed or {})
    free = [v for v in seen if v not in base]
    out = []
    for image in product(dom, repeat=len(free)):
        h = dict(base)
        h.update(zip(free, image))
        if all(
            Atom(a.pred, tuple(h.get(t, t) for t in a.args)) in tatoms for a in atoms
        ):
            out.append(h)
    return out


def brute_eval(q, target):
    if isinstance(q, UCQ):
        out = set()
        for d in q.disjuncts:
            out |= brute_eval(d, target)
        return out
    return {tuple(h[v] for v in q.answers) for h in brute_homs(q.body, target)}


def set_partitions(items):
    items = list(items)
    if not items:
        yield []
        return
    head, rest = items[0], items[1:]
    for part in set_partitions(rest):
        for i in range(len(part)):
            yield part[:i] + [[head] + part[i]] + part[i + 1 :]
        yield [[head]] + part


def _body_maps(tgd, atoms):
    if not tgd.body:
        return [{}]
    return brute_homs(tgd.body, atoms)


def naive_chase(inst, sigma, rounds):
    """Round-based oblivious chase, each trigger fired at most once.

    Returns (atom set, saturated); saturated means a whole round passed with
    no unfired trigger left.
    """

    atoms = set(inst.atoms)
    fired = set()
    fresh = [0]

    def fire(i, tgd, h):
        m = dict(h)
        for z in tgd.existentials:
            fresh[0] += 1
            m[z] = Const(f"w${fresh[0]}")
        return [Atom(a.pred, tuple(m[x] for x in a.args)) for a in tgd.head]

    for _ in range(rounds):
        new = []
        any_fired = False
        for i, tgd in enumerate(sigma):
            order = sorted(tgd.body_vars, key=lambda v: v.name)
            for h in _body_maps(tgd, atoms):
                key = (i, tuple(h[v] for v in order))
                if key in fired:
                    continue
                fired.add(key)
                any_fired = True
                new.extend(fire(i, tgd, h))
        if not any_fired:
            return atoms, True
        atoms.update(new)
    # one more scan so a final no-op round counts as saturation
    for i, tgd in enumerate(sigma):
        order = sorted(tgd.body_vars, key=lambda v: v.name)
        for h in _body_maps(tgd, atoms):
            if (i, tuple(h[v] for v in order)) not in fired:
                return atoms, False
    return atoms, True


def deep_chase_answers(sigma, q, inst, schedule=(2, 4, 8, 16, 32)):
    """Certain answers over adom(inst) by escalating chase depth.

    A saturated depth is exact; otherwise two consecutive agreeing depths
    are accepted.  Callers pick fixtures where the schedule stabilizes.
    """

    base = set(inst.adom)
    prev = None
    for rounds in schedule:
        atoms, saturated = naive_chase(inst, sigma, rounds)
        ans = {t for t in brute_eval(q, atoms) if all(c in base for c in t)}
        if saturated:
            return ans
        if prev is not None and ans == prev:
            return ans
        prev = ans
    return prev


def brute_satisfies(target, sigma):
    atoms = _atom_set(target)
    dom = _domain(atoms)
    for tgd in sigma:
        for h in _body_maps(tgd, atoms):
            ok = False
            for image in product(dom, repeat=len(tgd.existentials)):
                m = dict(h)
                m.update(zip(tgd.existentials, image))
                if all(
                    Atom(a.pred, tuple(m.get(x, x) for x in a.args)) in atoms
                    for a in tgd.head
                ):
                    ok = True
                    break
            if not ok:
                return False
    return True


def brute_clique(g, k):
    verts = sorted(g.vertices)
    for combo in combinations(verts, k):
        if all(g.has_edge(u, v) for u, v in combinations(combo, 2)):
            return True
    return False


def perm_treewidth(g):
    """Exhaustive elimination-order minimum with branch pruning; the greedy
    fill-in order seeds the bound so dense graphs cut off immediately."""

    verts = sorted(g.vertices)
    if not verts:
        return 0
    adj0 = {v: set(g.neighbors(v)) for v in verts}

    adj = {v: set(s) for v, s in adj0.items()}
    seed = 0
    while adj:
        v = min(adj, key=lambda x: (len(adj[x]), x))
        nb = adj.pop(v)
        seed = max(seed, len(nb))
        for u in nb:
            adj[u] |= nb - {u}
            adj[u].discard(v)
    best = [seed]

    def go(adj, width):
        if not adj:
            best[0] = min(best[0], width)
            return
        for v in sorted(adj):
            nb = adj[v]
            w2 = max(width, len(nb))
            if w2 >= best[0]:
                continue
            nxt = {}
            for u, s in adj.items():
                if u == v:
                    continue
                nxt[u] = ((s | nb) - {u, v}) if u in nb else (s - {v})
            go(nxt, w2)

    go(adj0, 0)
    return best[0]


def atom_space(preds, consts):
    out = []
    for p, ar in sorted(preds.items()):
        for args in product(consts, repeat=ar):
            out.append(Atom(p, args))
    return out


def all_databases(preds, consts):
    space = atom_space(preds, consts)
    for r in range(1, len(space) + 1):
        for sel in combinations(space, r):
            yield sel


def preds_of(sigma, *queries):
    out = {}
    srcs = []
    for q in queries:
        srcs.extend(q.disjuncts if isinstance(q, UCQ) else [q])
    for tgd in sigma:
        for a in list(tgd.body) + list(tgd.head):
            out[a.pred] = len(a.args)
    for cq in srcs:
        for a in cq.body:
            out[a.pred] = len(a.args)
    return out


def brute_containment(sigma, q1, q2, consts):
    """Answer inclusion q1 <= q2 over every sigma-satisfying database on the
    given constants.  Returns (verdict, (database, tuple) or None)."""

    preds = preds_of(sigma, q1, q2)
    for sel in all_databases(preds, consts):
        if not brute_satisfies(sel, sigma):
            continue
        extra = brute_eval(q1, sel) - brute_eval(q2, sel)
        if extra:
            tup = sorted(extra, key=lambda t: tuple(x.name for x in t))[0]
            return False, (sel, tup)
    return True, None
