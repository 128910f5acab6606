"""Command line front end over the library.

Exit codes: 0 definitive positive, 1 definitive negative, 2 unknown at
budget, 64 usage error, 65 bad input data.  With --machine the output is
one key=value record per line under [section] headers; the default is
plain text.  Documents (witnesses, chase results, rewritten queries) go
to the path given with -o, or to stdout in text mode.
"""

from __future__ import annotations

import argparse
import os
import sys
from typing import List, Optional

from . import model
from .approx import compact_approx, cqs_k_approx, ucq_k_approx
from .chase import ChaseBudget, chase, ground_chase
from .classify import classify, classify_set, verdict_line
from .decide import (
    NO,
    UNKNOWN,
    YES,
    Budget,
    Counterexample,
    Verdict,
    cqs_contains,
    cqs_equiv_k,
    omq_contains,
    omq_equiv_k,
    sigma_minimal_cq,
)
from .errors import BudgetError, GtgdError, ModelError
from .homs import core, eval_query, holds
from .linearize import fpt_eval_omq, linearize, ucq_rewrite
from .model import CQ, CQS, OMQ, UCQ, Const, Instance, Var
from .reduction import (
    clique_reduction_cqs,
    clique_reduction_constraint_free,
    finite_witness_search,
    grohe_db,
)
from .textio import dump, load, serialize, term_text
from .tw import (
    Graph,
    MinorMap,
    decide_tw,
    exact_treewidth,
    gaifman,
    grid_minor,
)

EXIT_YES = 0
EXIT_NO = 1
EXIT_UNKNOWN = 2
EXIT_USAGE = 64
EXIT_DATA = 65

_BUDGET_FIELDS = ("rewrite_cap", "chase_levels", "refute_fresh", "search_nodes", "type_cap")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


class Output:
    """Line buffer; assembled and flushed once per invocation."""

    def __init__(self, machine: bool):
        self.machine = machine
        self.lines: List[str] = []

    def section(self, name: str):
        if self.machine:
            self.lines.append(f"[{name}]")

    def kv(self, key: str, value):
        if self.machine:
            self.lines.append(f"{key}={value}")

    def text(self, line: str):
        if not self.machine:
            self.lines.append(line)

    def document(self, obj, path: Optional[str], with_levels: bool = False):
        # machine mode never mixes document bodies into the record stream
        if path:
            dump(obj, path, with_levels)
            self.kv("file", path)
            self.text(f"wrote {path}")
        else:
            self.kv("inline", "omitted (no -o)")
            body = serialize(obj, with_levels)
            if not self.machine:
                self.lines.append(body.rstrip("\n"))

    def flush(self):
        if self.lines:
            sys.stdout.write("\n".join(self.lines) + "\n")


def _budget_from(args) -> Budget:
    vals = {}
    for field in _BUDGET_FIELDS:
        env = os.environ.get("GTGD_BUDGET_" + field.upper())
        flag = getattr(args, field, None)
        if flag is not None:
            vals[field] = flag
        elif env is not None:
            try:
                vals[field] = int(env)
            except ValueError:
                raise ModelError(f"GTGD_BUDGET_{field.upper()} must be an integer")
    return Budget(**vals)


def _tuple_text(tup) -> str:
    return ",".join(term_text(t) for t in tup)


def _emit_verdict(v: Verdict, out: Output, outfile: Optional[str]) -> int:
    out.section("verdict")
    out.kv("answer", v.answer)
    if v.detail:
        out.kv("detail", v.detail)
    out.text(v.answer if not v.detail else f"{v.answer} ({v.detail})")
    w = v.witness
    if w is not None:
        if isinstance(w, Counterexample):
            out.kv("witness_answers", _tuple_text(w.answers))
            out.text(f"disagreeing answer: ({_tuple_text(w.answers)})")
            if outfile:
                dump(w.database, outfile)
                out.kv("witness_file", outfile)
                out.text(f"wrote {outfile}")
                if w.counter_model is not None:
                    dump(w.counter_model, outfile + ".model")
                    out.kv("counter_model_file", outfile + ".model")
                    out.text(f"wrote {outfile}.model")
        elif outfile:
            dump(w, outfile)
            out.kv("witness_file", outfile)
            out.text(f"wrote {outfile}")
    return {YES: EXIT_YES, NO: EXIT_NO}.get(v.answer, EXIT_UNKNOWN)


def _answer_lines(answers, boolean: bool, out: Output) -> int:
    out.section("answers")
    rows = sorted(answers, key=lambda t: tuple(term_text(x) for x in t))
    out.kv("count", len(rows))
    if boolean:
        verdict = YES if rows else NO
        out.kv("answer", verdict)
        out.text(verdict)
        return EXIT_YES if rows else EXIT_NO
    for tup in rows:
        out.kv("answer", _tuple_text(tup))
        out.text(f"({_tuple_text(tup)})")
    if not rows:
        out.text("no answers")
    return EXIT_YES


# ---------------------------------------------------------------- handlers


def _cmd_validate(args, out: Output) -> int:
    bad = 0
    for path in args.files:
        obj = load(path)
        report = model.validate(obj)
        out.section(f"validate {path}")
        out.kv("ok", "true" if not report else "false")
        for line in report:
            out.kv("violation", line)
            out.text(f"{path}: {line}")
        if report:
            bad += 1
        else:
            out.text(f"{path}: ok")
    return EXIT_YES if bad == 0 else EXIT_NO


def _chase_budget(args, budget: Budget) -> ChaseBudget:
    picked = [
        name
        for name, val in (
            ("levels", args.levels),
            ("atoms", args.atoms),
            ("fixpoint-cap", args.fixpoint_cap),
        )
        if val is not None
    ]
    if len(picked) > 1:
        raise ModelError("pick at most one of --levels, --atoms, --fixpoint-cap")
    if args.levels is not None:
        return ChaseBudget.levels(args.levels)
    if args.atoms is not None:
        return ChaseBudget.atom_cap(args.atoms)
    if args.fixpoint_cap is not None:
        return ChaseBudget.fixpoint_with_cap(args.fixpoint_cap)
    return ChaseBudget.fixpoint_with_cap(budget.chase_levels)


def _cmd_chase(args, out: Output) -> int:
    sigma = load(args.tgds)
    db = load(args.db)
    if args.ground:
        inst = ground_chase(db, sigma)
        out.section("chase")
        out.kv("ground", "true")
        out.kv("atoms", len(inst.atoms))
        out.document(inst, args.out)
        return EXIT_YES
    res = chase(db, sigma, _chase_budget(args, _budget_from(args)))
    out.section("chase")
    out.kv("terminated", "true" if res.terminated else "false")
    out.kv("steps", res.steps)
    out.kv("atoms", len(res.instance.atoms))
    out.document(res.instance, args.out, with_levels=True)
    return EXIT_YES if res.terminated else EXIT_UNKNOWN


def _cmd_eval(args, out: Output) -> int:
    budget = _budget_from(args)
    db = load(args.db)
    if args.mode == "omq":
        if not args.spec:
            raise ModelError("--mode omq needs --spec")
        omq = load(args.spec)
        if not isinstance(omq, OMQ):
            raise ModelError(f"{args.spec} is not an ontology-mediated query")
        answers = fpt_eval_omq(omq, db, type_cap=budget.type_cap)
        boolean = not omq.query.disjuncts[0].answers
    else:
        if not args.query:
            raise ModelError("--mode direct needs --query")
        q = load(args.query)
        answers = eval_query(q, db)
        first = q.disjuncts[0] if isinstance(q, UCQ) else q
        boolean = not first.answers
    return _answer_lines(answers, boolean, out)


def _cmd_classify(args, out: Output) -> int:
    sigma = load(args.tgds)
    for i, tgd in enumerate(sigma, 1):
        c = classify(tgd)
        out.section(f"tgd {i}")
        out.kv("verdict", verdict_line(c))
        out.kv("guarded", str(c.guarded).lower())
        out.kv("frontier_guarded", str(c.frontier_guarded).lower())
        out.kv("linear", str(c.linear).lower())
        out.kv("full", str(c.full).lower())
        out.kv("m", c.head_atoms)
        out.text(verdict_line(c))
    cs = classify_set(sigma)
    out.section("set")
    out.kv("verdict", verdict_line(cs))
    out.kv("guarded", str(cs.guarded).lower())
    out.kv("frontier_guarded", str(cs.frontier_guarded).lower())
    out.kv("linear", str(cs.linear).lower())
    out.kv("full", str(cs.full).lower())
    out.kv("m", cs.m)
    out.kv("r", cs.r)
    out.text(f"set: {verdict_line(cs)}")
    return EXIT_YES


def _cmd_linearize(args, out: Output) -> int:
    sigma = load(args.tgds)
    res = linearize(sigma, cap=_budget_from(args).type_cap)
    out.section("linearize")
    out.kv("rules", len(res.rules))
    out.kv("types", len(res.types))
    out.document(list(res.rules), args.out)
    return EXIT_YES


def _cmd_rewrite(args, out: Output) -> int:
    sigma = load(args.tgds)
    q = load(args.query)
    if isinstance(q, CQ):
        q = UCQ([q])
    ucq, saturated = ucq_rewrite(sigma, q, cap=_budget_from(args).rewrite_cap, on_cap="partial")
    out.section("rewrite")
    out.kv("saturated", "true" if saturated else "false")
    out.kv("disjuncts", len(ucq.disjuncts))
    out.document(ucq, args.out)
    return EXIT_YES if saturated else EXIT_UNKNOWN


def _decomposition_lines(td, out: Output):
    out.kv("width", td.width)
    out.text(f"width {td.width}")
    for i, bag in enumerate(td.bags):
        row = " ".join(sorted(bag))
        out.kv(f"bag {i}", row)
        out.text(f"bag {i}: {row}")
    for i, j in sorted(td.edges):
        out.kv("edge", f"{i} {j}")
        out.text(f"edge {i} {j}")


def _cmd_treewidth(args, out: Output) -> int:
    if args.graph:
        g = load(args.graph)
    elif args.query:
        q = load(args.query)
        if isinstance(q, UCQ):
            if len(q.disjuncts) != 1:
                raise ModelError("treewidth expects a single conjunctive query")
            q = q.disjuncts[0]
        g = gaifman(q)
    else:
        raise ModelError("need --graph or --query")
    out.section("treewidth")
    if args.k is None:
        width = exact_treewidth(g)
        out.kv("treewidth", width)
        out.text(str(width))
        return EXIT_YES
    td = decide_tw(g, args.k)
    if td is None:
        out.kv("answer", NO)
        out.text(f"no (treewidth exceeds {args.k})")
        return EXIT_NO
    out.kv("answer", YES)
    _decomposition_lines(td, out)
    return EXIT_YES


def _cmd_core(args, out: Output) -> int:
    q = load(args.query)
    if isinstance(q, UCQ):
        if len(q.disjuncts) != 1:
            raise ModelError("core expects a single conjunctive query")
        q = q.disjuncts[0]
    if args.tgds:
        sigma = load(args.tgds)
        small = sigma_minimal_cq(q, sigma, _budget_from(args))
        mode = "constraint-aware"
    else:
        small = core(q)
        mode = "plain"
    out.section("core")
    out.kv("mode", mode)
    out.kv("atoms_before", len(q.body))
    out.kv("atoms_after", len(small.body))
    out.document(small, args.out)
    return EXIT_YES


def _cmd_approx(args, out: Output) -> int:
    spec = load(args.spec)
    if isinstance(spec, OMQ):
        ap = compact_approx(spec, args.k) if args.compact else ucq_k_approx(spec, args.k)
        doc = None if ap.empty else ap.as_omq()
    elif isinstance(spec, CQS):
        if args.compact:
            raise ModelError("--compact applies to ontology-mediated queries only")
        ap = cqs_k_approx(spec, args.k)
        doc = None if ap.empty else ap.as_cqs()
    else:
        raise ModelError(f"{args.spec} is neither an OMQ nor a CQS document")
    out.section("approx")
    out.kv("empty", "true" if ap.empty else "false")
    if doc is None:
        out.text("empty approximation")
        return EXIT_NO
    out.kv("disjuncts", len(ap.query.disjuncts))
    out.document(doc, args.out)
    return EXIT_YES


def _cmd_equivk(args, out: Output) -> int:
    spec = load(args.spec)
    budget = _budget_from(args)
    if isinstance(spec, OMQ):
        v = omq_equiv_k(spec, args.k, budget)
    elif isinstance(spec, CQS):
        v = cqs_equiv_k(spec, args.k, budget)
    else:
        raise ModelError(f"{args.spec} is neither an OMQ nor a CQS document")
    return _emit_verdict(v, out, args.out)


def _cmd_contains(args, out: Output) -> int:
    left = load(args.left)
    right = load(args.right)
    budget = _budget_from(args)
    if args.mode == "cqs":
        if not (isinstance(left, CQS) and isinstance(right, CQS)):
            raise ModelError("--mode cqs expects two .cqs documents")
        v = cqs_contains(left, right, budget)
    else:
        if not (isinstance(left, OMQ) and isinstance(right, OMQ)):
            raise ModelError("--mode omq expects two .omq documents")
        v = omq_contains(left, right, budget)
    return _emit_verdict(v, out, args.out)


def _parse_elems(raw: str):
    names = [s for s in (part.strip() for part in raw.split(",")) if s]
    if not names:
        raise ModelError("empty element list")
    return [Const(n) for n in names]


def _parse_minor_map(path: str) -> MinorMap:
    """`cell <row> <col>: v1 v2 ...` per line; blank lines and # ignored."""

    branch = []
    rows = cols = 0
    with open(path, "r", encoding="utf-8") as fh:
        for ln, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            head, sep, tail = line.partition(":")
            parts = head.split()
            if not sep or len(parts) != 3 or parts[0] != "cell":
                raise ModelError(f"{path}:{ln}: expected 'cell <row> <col>: elems'")
            try:
                i, p = int(parts[1]), int(parts[2])
            except ValueError:
                raise ModelError(f"{path}:{ln}: cell coordinates must be integers")
            elems = frozenset(tail.split())
            if not elems:
                raise ModelError(f"{path}:{ln}: empty branch set")
            branch.append((i, p, elems))
            rows = max(rows, i)
            cols = max(cols, p)
    if not branch:
        raise ModelError(f"{path}: no cells")
    return MinorMap(rows, cols, tuple(sorted(branch, key=lambda t: (t[0], t[1]))))


def _cmd_grohe_db(args, out: Output) -> int:
    g = load(args.graph)
    d = load(args.db)
    dprime = load(args.dbprime)
    a = _parse_elems(args.a)
    if args.minor_map:
        mu = _parse_minor_map(args.minor_map)
    else:
        keep = {c.name for c in a}
        sub = Graph(
            sorted(keep), [e for e in gaifman(d, on_instance=True).sorted_edges() if e[0] in keep and e[1] in keep]
        )
        pairs = args.k * (args.k - 1) // 2
        mu = grid_minor(sub, args.k, pairs, require_onto=True)
        if mu is None:
            raise ModelError(f"no {args.k}x{pairs} grid minor on the selected elements")
    gdb = grohe_db(g, args.k, d, dprime, a, mu)
    out.section("grohe-db")
    out.kv("facts", len(gdb.dstar.atoms))
    out.kv("adom", len(gdb.dstar.adom))
    out.document(gdb.dstar, args.out)
    return EXIT_YES


def _cmd_reduce_clique(args, out: Output) -> int:
    g = load(args.graph)
    if args.query:
        q = load(args.query)
        if isinstance(q, UCQ):
            if len(q.disjuncts) != 1:
                raise ModelError("constraint-free route expects a single conjunctive query")
            q = q.disjuncts[0]
        dstar, _ = clique_reduction_constraint_free(g, args.k, q)
        route = "constraint-free"
    else:
        for name, val in (("--cqs", args.cqs), ("--p", args.p), ("--pprime", args.pprime), ("--X", args.x)):
            if not val:
                raise ModelError(f"constraint route needs {name}")
        s = load(args.cqs)
        if not isinstance(s, CQS):
            raise ModelError(f"{args.cqs} is not a constraint-query pair")
        p = load(args.p)
        pprime = load(args.pprime)
        if isinstance(p, UCQ):
            p = p.disjuncts[0]
        if isinstance(pprime, UCQ):
            pprime = pprime.disjuncts[0]
        x = [Var(n.name) for n in _parse_elems(args.x)]
        dstar, _ = clique_reduction_cqs(
            g, args.k, s, p, pprime, x, s_cap=args.s_cap, budget=_budget_from(args)
        )
        route = "constrained"
    out.section("reduce-clique")
    out.kv("route", route)
    out.kv("facts", len(dstar.atoms))
    out.kv("adom", len(dstar.adom))
    out.document(dstar, args.out)
    return EXIT_YES


def _cmd_witness(args, out: Output) -> int:
    db = load(args.db)
    sigma = load(args.tgds)
    budget = _budget_from(args)
    found = finite_witness_search(db, sigma, args.n, args.dom_cap, node_cap=budget.search_nodes)
    out.section("witness")
    if found is None:
        out.kv("answer", UNKNOWN)
        out.text(f"none within domain cap {args.dom_cap}")
        return EXIT_UNKNOWN
    out.kv("answer", YES)
    out.kv("atoms", len(found.atoms))
    out.kv("adom", len(found.adom))
    out.document(found, args.out)
    return EXIT_YES


# ----------------------------------------------------------------- parser


def _build_parser() -> _Parser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-o", "--out", help="write the result document here")
    common.add_argument("--machine", action="store_true", help="key=value output")
    for field in _BUDGET_FIELDS:
        common.add_argument(
            "--" + field.replace("_", "-"), type=int, dest=field, default=None
        )

    p = _Parser(prog="gtgd", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True, metavar="command")

    def add(name, fn, help_text, **kwargs):
        sp = sub.add_parser(name, parents=[common], help=help_text, **kwargs)
        sp.set_defaults(fn=fn)
        return sp

    sp = add("validate", _cmd_validate, "check documents against the type invariants")
    sp.add_argument("files", nargs="+")

    sp = add("chase", _cmd_chase, "run the chase on a database")
    sp.add_argument("--tgds", required=True)
    sp.add_argument("--db", required=True)
    sp.add_argument("--levels", type=int)
    sp.add_argument("--atoms", type=int)
    sp.add_argument("--fixpoint-cap", type=int, dest="fixpoint_cap")
    sp.add_argument("--ground", action="store_true", help="ground closure over the input domain")

    sp = add("eval", _cmd_eval, "evaluate a query over a database")
    sp.add_argument("--db", required=True)
    sp.add_argument("--query")
    sp.add_argument("--spec")
    sp.add_argument("--mode", choices=["direct", "omq"], default="direct")

    sp = add("classify", _cmd_classify, "guardedness classes of a rule set")
    sp.add_argument("--tgds", required=True)

    sp = add("linearize", _cmd_linearize, "compile guarded rules to linear rules")
    sp.add_argument("--tgds", required=True)

    sp = add("rewrite", _cmd_rewrite, "backward rewriting of a query under rules")
    sp.add_argument("--tgds", required=True)
    sp.add_argument("--query", required=True)

    sp = add("treewidth", _cmd_treewidth, "exact treewidth or width-k decision")
    sp.add_argument("--graph")
    sp.add_argument("--query")
    sp.add_argument("-k", type=int)

    sp = add("core", _cmd_core, "minimal equivalent query, optionally under rules")
    sp.add_argument("--query", required=True)
    sp.add_argument("--tgds")

    sp = add("approx", _cmd_approx, "treewidth-k underapproximation of a query spec")
    sp.add_argument("--spec", required=True)
    sp.add_argument("-k", type=int, required=True)
    sp.add_argument("--compact", action="store_true")

    sp = add("equivk", _cmd_equivk, "is the spec equivalent to its width-k approximation")
    sp.add_argument("--spec", required=True)
    sp.add_argument("-k", type=int, required=True)

    sp = add("contains", _cmd_contains, "containment between two query specs")
    sp.add_argument("--left", required=True)
    sp.add_argument("--right", required=True)
    sp.add_argument("--mode", choices=["cqs", "omq"], required=True)

    sp = add("grohe-db", _cmd_grohe_db, "clique-encoding product database")
    sp.add_argument("--graph", required=True)
    sp.add_argument("-k", type=int, required=True)
    sp.add_argument("--db", required=True)
    sp.add_argument("--dbprime", required=True)
    sp.add_argument("--A", required=True, dest="a", help="comma-separated elements")
    sp.add_argument("--minor-map", dest="minor_map")

    sp = add("reduce-clique", _cmd_reduce_clique, "clique-hardness reduction pipelines")
    sp.add_argument("--graph", required=True)
    sp.add_argument("-k", type=int, required=True)
    sp.add_argument("--query")
    sp.add_argument("--cqs")
    sp.add_argument("--p")
    sp.add_argument("--pprime")
    sp.add_argument("--X", dest="x", help="comma-separated answer-relevant variables")
    sp.add_argument("--s-cap", type=int, dest="s_cap")

    sp = add("witness", _cmd_witness, "finite model agreeing with the chase on small queries")
    sp.add_argument("--db", required=True)
    sp.add_argument("--tgds", required=True)
    sp.add_argument("-n", type=int, required=True)
    sp.add_argument("--dom-cap", type=int, required=True, dest="dom_cap")

    return p


def main(argv: Optional[List[str]] = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else EXIT_USAGE
    out = Output(machine=args.machine)
    try:
        code = args.fn(args, out)
    except BudgetError as e:
        out.flush()
        sys.stderr.write(f"gtgd: budget exhausted: {e}\n")
        return EXIT_UNKNOWN
    except (GtgdError, OSError) as e:
        out.flush()
        sys.stderr.write(f"gtgd: {e}\n")
        return EXIT_DATA
    out.flush()
    return code


def entry():
    sys.exit(main())
