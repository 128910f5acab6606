"""Line-oriented text formats.

One object per file: `.tgd` dependency sets, `.db` databases, `.cq` union
queries (one disjunct per line), `.omq` / `.cqs` sectioned documents, and
`.edges` graphs.  `#` starts a comment anywhere.  Serializers emit LF and a
deterministic atom order, and parse(serialize(x)) is structurally x.
"""

from __future__ import annotations

import re
from typing import Optional

from .errors import ArityConflictError, ModelError, ParseError, UnknownSectionError
from .model import (
    CQ,
    CQS,
    OMQ,
    TGD,
    Atom,
    Const,
    Instance,
    Schema,
    Term,
    UCQ,
    Var,
)
from .tw import Graph

_IDENT_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_]*")
_VERTEX_RE = re.compile(r"[A-Za-z0-9_]+")
_LEVEL_RE = re.compile(r"^\s*level\s*=\s*(\d+)\s*$")

EXTENSIONS = {
    ".tgd": "tgds",
    ".db": "database",
    ".cq": "query",
    ".omq": "omq",
    ".cqs": "cqs",
    ".edges": "graph",
}


class _LineScanner:
    def __init__(self, text: str, line_no: int):
        self.text = text
        self.line = line_no
        self.pos = 0

    def error(self, message: str, pos: Optional[int] = None) -> ParseError:
        col = (self.pos if pos is None else pos) + 1
        return ParseError(self.line, col, message)

    def skip_ws(self):
        while self.pos < len(self.text) and self.text[self.pos].isspace():
            self.pos += 1

    def at_end(self) -> bool:
        self.skip_ws()
        return self.pos >= len(self.text)

    def peek(self) -> str:
        self.skip_ws()
        return self.text[self.pos] if self.pos < len(self.text) else ""

    def take(self, literal: str) -> bool:
        self.skip_ws()
        if self.text.startswith(literal, self.pos):
            self.pos += len(literal)
            return True
        return False

    def expect(self, literal: str):
        if not self.take(literal):
            raise self.error(f"expected '{literal}'")

    def ident(self, what="identifier") -> str:
        self.skip_ws()
        m = _IDENT_RE.match(self.text, self.pos)
        if not m:
            raise self.error(f"expected {what}")
        self.pos = m.end()
        return m.group(0)

    def term_token(self, what="argument") -> str:
        # bare identifier, or "..." with \" and \\ escapes for generated names
        self.skip_ws()
        if self.pos >= len(self.text) or self.text[self.pos] != '"':
            return self.ident(what)
        i = self.pos + 1
        out = []
        while i < len(self.text):
            ch = self.text[i]
            if ch == "\\":
                if i + 1 >= len(self.text):
                    break
                out.append(self.text[i + 1])
                i += 2
                continue
            if ch == '"':
                if not out:
                    raise self.error("empty quoted name")
                self.pos = i + 1
                return "".join(out)
            out.append(ch)
            i += 1
        raise self.error("unterminated quoted name")


class _ArityTracker:
    def __init__(self):
        self.arities = {}
        self.declared = set()

    def declare(self, pred: str, arity: int, scanner: _LineScanner):
        self.see(pred, arity, scanner)
        self.declared.add(pred)

    def see(self, pred: str, arity: int, scanner: _LineScanner):
        old = self.arities.setdefault(pred, arity)
        if old != arity:
            raise ArityConflictError(
                scanner.line, scanner.pos + 1, f"arity conflict for {pred}: {old} vs {arity}"
            )

    def schema(self) -> Schema:
        return Schema(self.arities)


def _strip_comment(line: str):
    idx = line.find("#")
    if idx < 0:
        return line, None
    return line[:idx], line[idx + 1 :]


def _parse_atom(sc: _LineScanner, tracker: _ArityTracker, as_vars: bool) -> Atom:
    pred = sc.ident("predicate")
    sc.expect("(")
    args = []
    if not sc.take(")"):
        while True:
            name = sc.term_token()
            args.append(Var(name) if as_vars else Const(name))
            if sc.take(")"):
                break
            sc.expect(",")
    tracker.see(pred, len(args), sc)
    return Atom(pred, args)


def _parse_atom_list(sc: _LineScanner, tracker: _ArityTracker, as_vars: bool):
    atoms = [_parse_atom(sc, tracker, as_vars)]
    while sc.take(","):
        atoms.append(_parse_atom(sc, tracker, as_vars))
    return atoms


def _parse_schema_decl(sc: _LineScanner, tracker: _ArityTracker):
    while True:
        pred = sc.ident("predicate")
        sc.expect("/")
        sc.skip_ws()
        m = re.match(r"\d+", sc.text[sc.pos :])
        if not m:
            raise sc.error("expected arity")
        sc.pos += m.end()
        tracker.declare(pred, int(m.group(0)), sc)
        if not sc.take(","):
            break
    if not sc.at_end():
        raise sc.error("trailing input after schema declaration")


def _parse_tgd_line(sc: _LineScanner, tracker: _ArityTracker) -> TGD:
    mark = sc.pos
    if sc.take("true"):
        nxt = sc.peek()
        if nxt == "(":
            sc.pos = mark
            body = _parse_atom_list(sc, tracker, True)
        else:
            body = []
    else:
        body = _parse_atom_list(sc, tracker, True)
    sc.expect("->")
    existentials = []
    mark = sc.pos
    if sc.take("exists"):
        if sc.peek() == "(":
            sc.pos = mark
        else:
            while True:
                existentials.append(Var(sc.ident("variable")))
                if sc.take("."):
                    break
                sc.expect(",")
    head = _parse_atom_list(sc, tracker, True)
    if not sc.at_end():
        raise sc.error("trailing input after dependency")
    return TGD(body, head, existentials)


def _parse_cq_line(sc: _LineScanner, tracker: _ArityTracker) -> CQ:
    sc.ident("query name")
    sc.expect("(")
    answers = []
    if not sc.take(")"):
        while True:
            answers.append(Var(sc.ident("answer variable")))
            if sc.take(")"):
                break
            sc.expect(",")
    sc.expect(":-")
    body = _parse_atom_list(sc, tracker, True)
    if not sc.at_end():
        raise sc.error("trailing input after query")
    try:
        return CQ(answers, body)
    except ModelError as exc:
        raise ParseError(sc.line, 1, str(exc)) from exc


def _flat_lines(text: str):
    for i, raw in enumerate(text.split("\n"), start=1):
        code, _comment = _strip_comment(raw)
        if code.strip():
            yield i, code, raw


def parse_tgds(text: str):
    tracker = _ArityTracker()
    out = []
    for line_no, code, _raw in _flat_lines(text):
        sc = _LineScanner(code, line_no)
        if sc.take("@schema"):
            _parse_schema_decl(sc, tracker)
            continue
        out.append(_parse_tgd_line(sc, tracker))
    return out, tracker.schema()


def parse_database(text: str):
    tracker = _ArityTracker()
    atoms = []
    levels = {}
    for i, raw in enumerate(text.split("\n"), start=1):
        code, comment = _strip_comment(raw)
        if not code.strip():
            continue
        sc = _LineScanner(code, i)
        if sc.take("@schema"):
            _parse_schema_decl(sc, tracker)
            continue
        atom = _parse_atom(sc, tracker, False)
        if not sc.at_end():
            raise sc.error("trailing input after atom")
        atoms.append(atom)
        if comment:
            m = _LEVEL_RE.match(comment)
            if m:
                levels[atom] = int(m.group(1))
    return Instance(atoms, levels), tracker.schema()


def parse_query(text: str):
    tracker = _ArityTracker()
    disjuncts = []
    arity = None
    for line_no, code, _raw in _flat_lines(text):
        sc = _LineScanner(code, line_no)
        if sc.take("@schema"):
            _parse_schema_decl(sc, tracker)
            continue
        cq = _parse_cq_line(sc, tracker)
        if arity is None:
            arity = cq.arity
        elif cq.arity != arity:
            raise ParseError(line_no, 1, f"disjunct arity {cq.arity} differs from {arity}")
        disjuncts.append(cq)
    if not disjuncts:
        raise ParseError(1, 1, "no query disjuncts")
    return UCQ(disjuncts), tracker.schema()


def _split_sections(text: str, allowed):
    sections = []
    current = None
    for i, raw in enumerate(text.split("\n"), start=1):
        code, _comment = _strip_comment(raw)
        stripped = code.strip()
        if not stripped:
            continue
        if stripped.startswith("@"):
            m = re.match(r"@([A-Za-z-]+)\s*:\s*(.*)$", stripped)
            if not m:
                raise ParseError(i, 1, "malformed section header")
            name = m.group(1)
            if name not in allowed:
                raise UnknownSectionError(i, 1, f"unknown section @{name}")
            current = (name, i, [])
            sections.append(current)
            rest = m.group(2)
            if rest.strip():
                current[2].append((i, rest))
        else:
            if current is None:
                raise ParseError(i, 1, "content before first section header")
            current[2].append((i, code))
    return sections


def _parse_schema_section(lines, header_line) -> Schema:
    tracker = _ArityTracker()
    for line_no, code in lines:
        sc = _LineScanner(code, line_no)
        _parse_schema_decl(sc, tracker)
    return tracker.schema()


def _section_text(lines) -> str:
    # Rebuild with original line numbers so errors point at the source file.
    if not lines:
        return ""
    max_line = max(n for n, _ in lines)
    rows = [""] * max_line
    for n, code in lines:
        rows[n - 1] = code
    return "\n".join(rows)


def parse_omq(text: str) -> OMQ:
    found = {}
    for name, line, lines in _split_sections(text, {"data-schema", "tgds", "query"}):
        if name in found:
            raise ParseError(line, 1, f"duplicate section @{name}")
        found[name] = (line, lines)
    for required in ("data-schema", "tgds", "query"):
        if required not in found:
            raise ParseError(1, 1, f"missing section @{required}")
    schema = _parse_schema_section(found["data-schema"][1], found["data-schema"][0])
    sigma, _ = parse_tgds(_section_text(found["tgds"][1]))
    query, _ = parse_query(_section_text(found["query"][1]))
    return OMQ(schema, sigma, query)


def parse_cqs(text: str) -> CQS:
    found = {}
    for name, line, lines in _split_sections(text, {"tgds", "query"}):
        if name in found:
            raise ParseError(line, 1, f"duplicate section @{name}")
        found[name] = (line, lines)
    if "query" not in found:
        raise ParseError(1, 1, "missing section @query")
    sigma = []
    if "tgds" in found:
        sigma, _ = parse_tgds(_section_text(found["tgds"][1]))
    query, _ = parse_query(_section_text(found["query"][1]))
    return CQS(sigma, query)


def parse_graph(text: str) -> Graph:
    vertices = []
    edges = []
    seen = set()
    for i, raw in enumerate(text.split("\n"), start=1):
        code, _comment = _strip_comment(raw)
        tokens = code.split()
        if not tokens:
            continue
        for t in tokens:
            if not _VERTEX_RE.fullmatch(t):
                raise ParseError(i, code.index(t) + 1, f"bad vertex name '{t}'")
        if len(tokens) == 1:
            v = tokens[0]
            if v not in seen:
                seen.add(v)
                vertices.append(v)
        elif len(tokens) == 2:
            u, v = tokens
            if u == v:
                raise ParseError(i, 1, "self-loop")
            for t in (u, v):
                if t not in seen:
                    seen.add(t)
                    vertices.append(t)
            edges.append((u, v))
        else:
            raise ParseError(i, 1, "expected 'u v' edge line")
    return Graph(vertices, edges)


_PARSERS = {
    "tgds": lambda text: parse_tgds(text)[0],
    "database": lambda text: parse_database(text)[0],
    "query": lambda text: parse_query(text)[0],
    "omq": parse_omq,
    "cqs": parse_cqs,
    "graph": parse_graph,
}


def parse(text: str, kind: str):
    if kind not in _PARSERS:
        raise ModelError(f"unknown document kind '{kind}'")
    return _PARSERS[kind](text)


def kind_of_path(path: str) -> str:
    for ext, kind in EXTENSIONS.items():
        if path.endswith(ext):
            return kind
    raise ModelError(f"cannot infer document kind from '{path}'")


def load(path: str):
    with open(path, "r", encoding="utf-8") as fh:
        return parse(fh.read(), kind_of_path(path))


def term_text(t: Term) -> str:
    if _IDENT_RE.fullmatch(t.name):
        return t.name
    escaped = t.name.replace("\\", "\\\\").replace('"', '\\"')
    return f'"{escaped}"'


def atom_text(a: Atom) -> str:
    return f"{a.pred}({','.join(term_text(t) for t in a.args)})"


def tgd_text(t: TGD) -> str:
    body = ", ".join(atom_text(a) for a in t.body) if t.body else "true"
    head = ", ".join(atom_text(a) for a in t.head)
    if t.existentials:
        head = "exists " + ", ".join(v.name for v in t.existentials) + " . " + head
    return f"{body} -> {head}"


def cq_text(c: CQ) -> str:
    return f"q({','.join(v.name for v in c.answers)}) :- " + ", ".join(
        atom_text(a) for a in c.body
    )


def serialize_tgds(sigma) -> str:
    return "".join(tgd_text(t) + "\n" for t in sigma)


def serialize_instance(inst: Instance, with_levels: bool = False) -> str:
    if not len(inst):
        return "# empty database\n"
    out = []
    for a in inst.atoms:
        line = atom_text(a)
        if with_levels:
            line += f"  # level={inst.level(a)}"
        out.append(line + "\n")
    return "".join(out)


def serialize_query(q: UCQ) -> str:
    return "".join(cq_text(d) + "\n" for d in q.disjuncts)


def _schema_decl_text(schema: Schema) -> str:
    return ", ".join(f"{p}/{schema.arities[p]}" for p in schema.preds)


def serialize_omq(omq: OMQ) -> str:
    return (
        f"@data-schema: {_schema_decl_text(omq.data_schema)}\n"
        "@tgds:\n"
        + serialize_tgds(omq.sigma)
        + "@query:\n"
        + serialize_query(omq.query)
    )


def serialize_cqs(cqs: CQS) -> str:
    return "@tgds:\n" + serialize_tgds(cqs.sigma) + "@query:\n" + serialize_query(cqs.query)


def serialize_graph(g: Graph) -> str:
    out = []
    covered = set()
    for u, v in g.sorted_edges():
        covered.add(u)
        covered.add(v)
        out.append(f"{u} {v}\n")
    for v in g.vertices:
        if v not in covered:
            out.append(f"{v}\n")
    return "".join(out)


def serialize(obj, with_levels: bool = False) -> str:
    if isinstance(obj, Instance):
        return serialize_instance(obj, with_levels)
    if isinstance(obj, UCQ):
        return serialize_query(obj)
    if isinstance(obj, CQ):
        return serialize_query(UCQ([obj]))
    if isinstance(obj, OMQ):
        return serialize_omq(obj)
    if isinstance(obj, CQS):
        return serialize_cqs(obj)
    if isinstance(obj, Graph):
        return serialize_graph(obj)
    if isinstance(obj, (list, tuple)) and all(isinstance(t, TGD) for t in obj):
        return serialize_tgds(obj)
    raise ModelError(f"cannot serialize {type(obj).__name__}")


def dump(obj, path: str, with_levels: bool = False):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(serialize(obj, with_levels))
