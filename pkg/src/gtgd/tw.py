"""Graphs, exact treewidth, width-bounded query evaluation, grid minors and
guarded unravelings.

The exact solver is the elimination-order dynamic program over vertex subsets,
memoized on bitmasks; it is limited to 16 vertices and reports degeneracy /
min-degree-heuristic bounds beyond that.  Query-side conventions: the graph of
a query is induced on its existentially quantified variables only, and query
treewidth is clamped to at least 1 so edgeless queries land in the width-1
class.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from functools import lru_cache
from itertools import product
from typing import Dict, Iterable, Optional, Sequence, Tuple, Union

from .errors import ModelError, NotGuardedError, SizeLimitError, WidthExceededError
from .model import CQ, Atom, Const, Instance, Term, UCQ, term_key


class Graph:
    """Simple undirected graph with string vertices, deterministic order."""

    __slots__ = ("vertices", "_adj")

    def __init__(self, vertices: Iterable[str] = (), edges: Iterable[Tuple[str, str]] = ()):
        adj: Dict[str, set] = {v: set() for v in vertices}
        for u, v in edges:
            if u == v:
                raise ModelError(f"self-loop at {u}")
            adj.setdefault(u, set())
            adj.setdefault(v, set())
            adj[u].add(v)
            adj[v].add(u)
        self.vertices = tuple(sorted(adj))
        self._adj = {v: tuple(sorted(adj[v])) for v in self.vertices}

    def neighbors(self, v: str) -> tuple:
        return self._adj[v]

    def has_edge(self, u: str, v: str) -> bool:
        return v in self._adj.get(u, ())

    def degree(self, v: str) -> int:
        return len(self._adj[v])

    def sorted_edges(self):
        out = []
        for u in self.vertices:
            for v in self._adj[u]:
                if u < v:
                    out.append((u, v))
        return out

    @property
    def edge_count(self) -> int:
        return len(self.sorted_edges())

    def subgraph(self, keep: Iterable[str]) -> "Graph":
        keep = set(keep)
        return Graph(
            [v for v in self.vertices if v in keep],
            [(u, v) for u, v in self.sorted_edges() if u in keep and v in keep],
        )

    def components(self):
        seen = set()
        out = []
        for start in self.vertices:
            if start in seen:
                continue
            comp = []
            stack = [start]
            seen.add(start)
            while stack:
                v = stack.pop()
                comp.append(v)
                for w in self._adj[v]:
                    if w not in seen:
                        seen.add(w)
                        stack.append(w)
            out.append(tuple(sorted(comp)))
        return out

    def __eq__(self, other):
        return (
            isinstance(other, Graph)
            and self.vertices == other.vertices
            and self._adj == other._adj
        )

    def __repr__(self):
        return f"Graph({len(self.vertices)} vertices, {self.edge_count} edges)"


def grid_graph(rows: int, cols: int) -> Graph:
    verts = [f"{i}_{p}" for i in range(1, rows + 1) for p in range(1, cols + 1)]
    edges = []
    for i in range(1, rows + 1):
        for p in range(1, cols + 1):
            if p < cols:
                edges.append((f"{i}_{p}", f"{i}_{p + 1}"))
            if i < rows:
                edges.append((f"{i}_{p}", f"{i + 1}_{p}"))
    return Graph(verts, edges)


@dataclass(frozen=True)
class TreeDecomposition:
    bags: tuple
    edges: tuple

    @property
    def width(self) -> int:
        if not self.bags:
            return 0
        return max(0, max(len(b) for b in self.bags) - 1)

    def validate(self, g: Graph) -> list:
        out = []
        covered = set()
        for b in self.bags:
            covered.update(b)
        for v in g.vertices:
            if v not in covered:
                out.append(f"vertex {v} in no bag")
        for u, v in g.sorted_edges():
            if not any(u in b and v in b for b in self.bags):
                out.append(f"edge {u}-{v} in no bag")
        # occurrence subtrees must be connected
        adj = {i: [] for i in range(len(self.bags))}
        for i, j in self.edges:
            adj[i].append(j)
            adj[j].append(i)
        for v in g.vertices:
            holding = [i for i, b in enumerate(self.bags) if v in b]
            if not holding:
                continue
            seen = {holding[0]}
            stack = [holding[0]]
            holding_set = set(holding)
            while stack:
                i = stack.pop()
                for j in adj[i]:
                    if j in holding_set and j not in seen:
                        seen.add(j)
                        stack.append(j)
            if seen != holding_set:
                out.append(f"occurrences of {v} not connected")
        return out


def gaifman(obj: Union[CQ, Instance], on_instance: bool = False) -> Graph:
    """Co-occurrence graph.  For queries: existential variables only."""

    if isinstance(obj, CQ):
        ex = set(obj.existential_vars)
        verts = sorted(v.name for v in ex)
        edges = []
        for a in obj.body:
            args = [t for t in a.args if t in ex]
            for i in range(len(args)):
                for j in range(i + 1, len(args)):
                    if args[i] != args[j]:
                        edges.append((args[i].name, args[j].name))
        return Graph(verts, edges)
    if isinstance(obj, Instance):
        if not on_instance:
            raise ModelError("pass on_instance=True to build the graph of a database")
        verts = sorted(t.name for t in obj.adom)
        edges = []
        for a in obj:
            args = list(dict.fromkeys(a.args))
            for i in range(len(args)):
                for j in range(i + 1, len(args)):
                    edges.append((args[i].name, args[j].name))
        return Graph(verts, edges)
    raise ModelError(f"no graph for {type(obj).__name__}")


EXACT_LIMIT = 16


def _adjacency_masks(g: Graph):
    index = {v: i for i, v in enumerate(g.vertices)}
    adj = [0] * len(g.vertices)
    for u, v in g.sorted_edges():
        adj[index[u]] |= 1 << index[v]
        adj[index[v]] |= 1 << index[u]
    return index, adj


def tw_bounds(g: Graph):
    """(degeneracy lower bound, min-degree-heuristic upper bound)."""

    # degeneracy
    adj = {v: set(g.neighbors(v)) for v in g.vertices}
    lower = 0
    work = dict(adj)
    while work:
        v = min(work, key=lambda x: (len(work[x]), x))
        lower = max(lower, len(work[v]))
        for w in work[v]:
            work[w].discard(v)
        del work[v]
    # min-degree elimination with fill
    work = {v: set(adj[v]) for v in adj}
    upper = 0
    while work:
        v = min(work, key=lambda x: (len(work[x]), x))
        nb = list(work[v])
        upper = max(upper, len(nb))
        for i in range(len(nb)):
            for j in range(i + 1, len(nb)):
                work[nb[i]].add(nb[j])
                work[nb[j]].add(nb[i])
        for w in nb:
            work[w].discard(v)
        del work[v]
    return lower, upper


def _exact_order(g: Graph):
    """Optimal elimination order via the subset dynamic program."""

    n = len(g.vertices)
    _, adj = _adjacency_masks(g)
    full = (1 << n) - 1

    def reach_cost(s_mask, v):
        # neighbors of v outside s_mask reachable through s_mask
        seen = 1 << v
        frontier = 1 << v
        reach = 0
        while frontier:
            nxt = 0
            f = frontier
            while f:
                b = f & -f
                f ^= b
                nxt |= adj[b.bit_length() - 1]
            nxt &= ~seen
            reach |= nxt & ~s_mask & ~(1 << v)
            frontier = nxt & s_mask
            seen |= nxt
        return bin(reach).count("1")

    @lru_cache(maxsize=None)
    def best(s_mask):
        if s_mask == 0:
            return -1
        out = n
        s = s_mask
        while s:
            b = s & -s
            s ^= b
            v = b.bit_length() - 1
            rest = s_mask ^ b
            cost = max(best(rest), reach_cost(rest, v))
            if cost < out:
                out = cost
        return out

    width = best(full)
    order_rev = []
    s_mask = full
    while s_mask:
        pick = None
        s = s_mask
        while s:
            b = s & -s
            s ^= b
            v = b.bit_length() - 1
            rest = s_mask ^ b
            cost = max(best(rest), reach_cost(rest, v))
            if cost <= best(s_mask) and pick is None:
                pick = v
        order_rev.append(pick)
        s_mask ^= 1 << pick
    best.cache_clear()
    return width, [g.vertices[i] for i in reversed(order_rev)]


def exact_treewidth(g: Graph) -> int:
    if len(g.vertices) == 0:
        return 0
    if len(g.vertices) > EXACT_LIMIT:
        raise SizeLimitError(*tw_bounds(g))
    width, _ = _exact_order(g)
    return max(0, width)


def decomposition_from_order(g: Graph, order: Sequence[str]) -> TreeDecomposition:
    pos = {v: i for i, v in enumerate(order)}
    adj = {v: set(g.neighbors(v)) for v in g.vertices}
    bags = []
    parent_vertex = {}
    for i, v in enumerate(order):
        higher = {w for w in adj[v] if pos[w] > i}
        bags.append(frozenset({v} | higher))
        if higher:
            parent_vertex[v] = min(higher, key=lambda w: pos[w])
        elif i + 1 < len(order):
            parent_vertex[v] = order[i + 1]
        for a in higher:
            for b in higher:
                if a != b:
                    adj[a].add(b)
        for w in higher:
            adj[w].discard(v)
    edges = []
    for v, p in parent_vertex.items():
        edges.append((pos[v], pos[p]))
    return TreeDecomposition(tuple(bags), tuple(edges))


def decide_tw(g: Graph, k: int) -> Optional[TreeDecomposition]:
    """Exact decision: a width-<=k decomposition, or None when tw(g) > k."""

    if k < 1:
        raise ModelError("width parameter must be at least 1")
    if len(g.vertices) == 0:
        return TreeDecomposition((frozenset(),), ())
    if len(g.vertices) > EXACT_LIMIT:
        raise SizeLimitError(*tw_bounds(g))
    width, order = _exact_order(g)
    if width > k:
        return None
    return decomposition_from_order(g, order)


def cq_treewidth(q: CQ) -> int:
    # an edgeless Gaifman graph (answer-only or unary queries) has width 0
    return exact_treewidth(gaifman(q))


def _rooted_orders(td: TreeDecomposition):
    n = len(td.bags)
    adj = {i: [] for i in range(n)}
    for i, j in td.edges:
        adj[i].append(j)
        adj[j].append(i)
    root = n - 1 if n else 0
    parent = {root: None}
    post = []
    stack = [(root, False)]
    seen = {root}
    while stack:
        node, done = stack.pop()
        if done:
            post.append(node)
            continue
        stack.append((node, True))
        for j in sorted(adj[node]):
            if j not in seen:
                seen.add(j)
                parent[j] = node
                stack.append((j, False))
    return root, parent, post


def _eval_disjunct_bounded(d: CQ, inst: Instance, k: int) -> set:
    g = gaifman(d)
    td = decide_tw(g, k)
    if td is None:
        raise WidthExceededError(f"query graph width exceeds {k}")
    by_name = {v.name: v for v in d.variables}
    idx = {}
    for a in inst:
        idx.setdefault((a.pred, len(a.args)), []).append(a.args)

    cand: Dict[Term, list] = {}
    for v in d.variables:
        allowed = None
        for a in d.body:
            if v not in a.args:
                continue
            vals = set()
            for args in idx.get((a.pred, len(a.args)), ()):
                vals.update(args[i] for i, t in enumerate(a.args) if t == v)
            allowed = vals if allowed is None else allowed & vals
        cand[v] = sorted(allowed or (), key=term_key)

    answers = d.answers
    ex = set(d.existential_vars)
    # each atom goes to the first bag containing its existential variables
    bag_atoms = {i: [] for i in range(len(td.bags))}
    answer_only = []
    for a in d.body:
        need = {t.name for t in a.args if t in ex}
        if not need:
            answer_only.append(a)
            continue
        home = next(i for i, b in enumerate(td.bags) if need <= b)
        bag_atoms[home].append(a)

    root, parent, post = _rooted_orders(td)
    out = set()
    for ans_vals in product(*(cand[v] for v in answers)):
        sigma = dict(zip(answers, ans_vals))
        if any(
            Atom(a.pred, tuple(sigma[t] for t in a.args)) not in inst for a in answer_only
        ):
            continue
        child_proj: Dict[int, set] = {}
        ok = True
        for node in post:
            bag = sorted(td.bags[node])
            rows = set()
            kids = [j for j, p in parent.items() if p == node]
            shares = [
                (j, tuple(v for v in bag if v in td.bags[j]))
                for j in kids
            ]
            for values in product(*(cand[by_name[v]] for v in bag)):
                local = dict(zip(bag, values))
                good = True
                for a in bag_atoms[node]:
                    img = tuple(
                        sigma[t] if t in sigma else local[t.name] for t in a.args
                    )
                    if Atom(a.pred, img) not in inst:
                        good = False
                        break
                if not good:
                    continue
                for j, shared in shares:
                    if tuple(local[v] for v in shared) not in child_proj[j]:
                        good = False
                        break
                if good:
                    rows.add(values)
            if not rows:
                ok = False
                break
            if node != root:
                shared = tuple(v for v in bag if v in td.bags[parent[node]])
                pos = [bag.index(v) for v in shared]
                child_proj[node] = {tuple(r[i] for i in pos) for r in rows}
        if ok:
            out.add(tuple(ans_vals))
    return out


def eval_bounded_tw(q: Union[CQ, UCQ], inst: Instance, k: int) -> set:
    """Evaluate along a width-<=k decomposition of each disjunct's graph."""

    disjuncts = q.disjuncts if isinstance(q, UCQ) else (q,)
    out = set()
    for d in disjuncts:
        out |= _eval_disjunct_bounded(d, inst, k)
    return out


@dataclass(frozen=True)
class MinorMap:
    rows: int
    cols: int
    branch: tuple  # ((row, col, frozenset vertices), ...)

    def branch_sets(self) -> dict:
        return {(i, p): s for i, p, s in self.branch}

    def cell_of(self) -> dict:
        out = {}
        for i, p, s in self.branch:
            for v in s:
                out[v] = (i, p)
        return out

    def validate(self, g: Graph) -> list:
        out = []
        sets = self.branch_sets()
        used = set()
        for cell, s in sets.items():
            if not s:
                out.append(f"cell {cell} empty")
                continue
            if used & s:
                out.append(f"cell {cell} overlaps another branch set")
            used |= s
            sub = g.subgraph(s)
            if len(sub.components()) != 1:
                out.append(f"cell {cell} branch set not connected")
        for (i, p), s in sets.items():
            for (i2, p2) in ((i + 1, p), (i, p + 1)):
                if (i2, p2) not in sets:
                    continue
                t = sets[(i2, p2)]
                if not any(g.has_edge(u, v) for u in s for v in t):
                    out.append(f"no edge between cells {(i, p)} and {(i2, p2)}")
        return out


def _connected_subsets(g: Graph, allowed, max_size):
    # canonical enumeration: grow from the minimum vertex of each subset
    allowed = sorted(allowed)
    seen = set()
    out = []
    for start in allowed:
        frontier = [frozenset([start])]
        while frontier:
            s = frontier.pop()
            if s in seen:
                continue
            seen.add(s)
            out.append(s)
            if len(s) >= max_size:
                continue
            boundary = set()
            for v in s:
                boundary.update(g.neighbors(v))
            for w in sorted(boundary):
                if w in s or w not in set(allowed) or w < start:
                    continue
                frontier.append(s | {w})
    out.sort(key=lambda s: (len(s), sorted(s)))
    return out


def grid_minor(
    g: Graph, rows: int, cols: int, require_onto: bool = False
) -> Optional[MinorMap]:
    """Search a rows x cols grid minor; branch sets optionally cover all of g."""

    if rows * cols > 9:
        raise ModelError("grid larger than 9 cells")
    if rows < 1 or cols < 1:
        raise ModelError("grid dimensions must be positive")
    cells = [(i, p) for i in range(1, rows + 1) for p in range(1, cols + 1)]
    n_cells = len(cells)
    if len(g.vertices) < n_cells:
        return None

    assignment: Dict[tuple, frozenset] = {}

    def absorb(sets: Dict[tuple, set]):
        uncovered = set(g.vertices) - {v for s in sets.values() for v in s}
        progress = True
        while uncovered and progress:
            progress = False
            for v in sorted(uncovered):
                for cell in cells:
                    if any(g.has_edge(v, u) for u in sets[cell]):
                        sets[cell].add(v)
                        uncovered.discard(v)
                        progress = True
                        break
                if progress:
                    break
        return not uncovered

    def search(ci: int, used: set) -> Optional[MinorMap]:
        if ci == n_cells:
            sets = {c: set(assignment[c]) for c in cells}
            if require_onto and not absorb(sets):
                return None
            branch = tuple((i, p, frozenset(sets[(i, p)])) for i, p in cells)
            return MinorMap(rows, cols, branch)
        cell = cells[ci]
        i, p = cell
        free = [v for v in g.vertices if v not in used]
        limit = len(g.vertices) - len(used) - (n_cells - ci - 1)
        for s in _connected_subsets(g, free, max(1, limit)):
            ok = True
            for other in ((i - 1, p), (i, p - 1)):
                if other in assignment:
                    t = assignment[other]
                    if not any(g.has_edge(u, v) for u in s for v in t):
                        ok = False
                        break
            if not ok:
                continue
            assignment[cell] = s
            found = search(ci + 1, used | s)
            if found is not None:
                return found
            del assignment[cell]
        return None

    return search(0, set())


def guarded_sets(inst: Instance):
    """All nonempty subsets of some atom's argument set."""

    out = set()
    for a in inst:
        args = tuple(dict.fromkeys(a.args))
        n = len(args)
        for mask in range(1, 1 << n):
            out.add(frozenset(args[i] for i in range(n) if mask & (1 << i)))
    return sorted(out, key=lambda s: (len(s), sorted(t.name for t in s)))


def _path_tag(path) -> str:
    text = "|".join(",".join(sorted(t.name for t in s)) for s in path)
    return hashlib.sha1(text.encode()).hexdigest()[:8]


def unravel_origin(t: Term) -> Term:
    return Const(t.name.split("@", 1)[0])


def guarded_unravel(inst: Instance, anchor: Sequence[Term], depth: int) -> Instance:
    """Tree unraveling along overlapping guarded sets, rooted at the anchor.

    Depth 0 is the restriction to the anchor set with original names; deeper
    nodes introduce fresh copies named `<orig>@<path-hash>`, so the map back
    to the original instance is recoverable from the names.
    """

    anchor_set = frozenset(anchor)
    if not anchor_set:
        raise ModelError("empty anchor")
    gsets = guarded_sets(inst)
    if anchor_set not in set(gsets):
        raise NotGuardedError("anchor tuple is not guarded in the instance")
    atoms_in = inst.atoms
    out = []
    # nodes: (set, copy map, path), breadth first
    queue = [(anchor_set, {c: c for c in anchor_set}, (anchor_set,))]
    for level in range(depth + 1):
        next_queue = []
        for s, copies, path in queue:
            for a in atoms_in:
                if set(a.args) <= s:
                    out.append(Atom(a.pred, tuple(copies[t] for t in a.args)))
            if level == depth:
                continue
            for s2 in gsets:
                if s2 == s or not (s2 & s):
                    continue
                child_path = path + (s2,)
                tag = _path_tag(child_path)
                child_copies = {}
                for c in sorted(s2, key=term_key):
                    if c in s:
                        child_copies[c] = copies[c]
                    else:
                        child_copies[c] = Const(f"{c.name}@{tag}")
                next_queue.append((s2, child_copies, child_path))
        queue = next_queue
    return Instance(out)
