"""Code property graph construction over MiniC ASTs.

A graph bundles the AST with control-flow and reaching-definition edges,
plus a dummy node 0 linked to every statement so that "node 0" can stand
for "this function is clean". Graphs serialize to one JSON object per line.
"""

import json
from dataclasses import dataclass, field

from .errors import GraphTooLarge, LineNotFound, MalformedRecord, SchemaVersionMismatch
from .frontend import AstNode

SCHEMA_VERSION = 1

EDGE_TYPES = ("AST_CHILD", "AST_PARENT", "CFG_NEXT", "DFG_REACH", "NEXT_TOKEN", "GRAPH_LINK")

DUMMY_KIND = "Dummy"
DUMMY_TOKEN = "<GRAPH>"

DEFAULT_MAX_NODES = 512


@dataclass(frozen=True)
class GraphNode:
    id: int
    kind: str
    tokens: tuple[str, ...]
    line: int | None


@dataclass(frozen=True)
class GraphEdge:
    src: int
    dst: int
    type: str


@dataclass
class CodeGraph:
    nodes: list[GraphNode]
    edges: list[GraphEdge]
    function_name: str

    def __len__(self) -> int:
        return len(self.nodes)

    def statement_ids(self) -> list[int]:
        """Statement-level node ids, recoverable as the dummy's link targets."""
        return sorted(e.dst for e in self.edges if e.type == "GRAPH_LINK")

    def edges_of(self, edge_type: str) -> list[GraphEdge]:
        return [e for e in self.edges if e.type == edge_type]


@dataclass
class Sample:
    graph: CodeGraph
    label_node: int
    vulnerable_line: int | None
    commit_ts: int = 0
    source_path: str = ""


def _is_statement(node: AstNode) -> bool:
    if node.kind in ("Decl", "Assign", "If", "While", "For", "Return"):
        return True
    if node.kind == "Call":
        return bool(node.meta.get("is_stmt"))
    return False


# -- control flow --

def _stmt_cfg(node: AstNode, edges: set) -> tuple[int | None, set[int]]:
    """Return (entry ast id or None, set of fall-through exit ast ids)."""
    kind = node.kind
    if kind in ("Decl", "Assign", "Call"):
        return node.id, {node.id}
    if kind == "Return":
        return node.id, set()
    if kind == "Block":
        return _seq_cfg(node.children, edges)
    if kind == "If":
        exits: set[int] = set()
        branches = node.children[1:]
        for branch in branches:
            entry, b_exits = _stmt_cfg(branch, edges)
            if entry is None:
                exits.add(node.id)
            else:
                edges.add((node.id, entry))
                exits |= b_exits
        if len(branches) == 1:
            exits.add(node.id)  # false path falls through
        return node.id, exits
    if kind == "While":
        entry, b_exits = _stmt_cfg(node.children[1], edges)
        if entry is None:
            edges.add((node.id, node.id))
        else:
            edges.add((node.id, entry))
            for x in b_exits:
                edges.add((x, node.id))
        return node.id, {node.id}
    if kind == "For":
        init, post, body = node.children[0], node.children[2], node.children[3]
        edges.add((init.id, node.id))  # init runs once, then the condition check
        entry, b_exits = _stmt_cfg(body, edges)
        if entry is None:
            edges.add((node.id, post.id))
        else:
            edges.add((node.id, entry))
            for x in b_exits:
                edges.add((x, post.id))
        edges.add((post.id, node.id))
        return init.id, {node.id}
    raise ValueError(f"not a statement node: {kind}")


def _seq_cfg(stmts, edges: set) -> tuple[int | None, set[int]]:
    entry = None
    pending: set[int] = set()
    for stmt in stmts:
        e, x = _stmt_cfg(stmt, edges)
        if e is None:
            continue
        for p in pending:
            edges.add((p, e))
        if entry is None:
            entry = e
        pending = x
    return entry, pending


def cfg_successors(ast: AstNode) -> set[tuple[int, int]]:
    """(src, dst) pairs over AST ids of statement-level nodes."""
    edges: set[tuple[int, int]] = set()
    body = ast.children[1]
    _seq_cfg(body.children, edges)
    return edges


# -- data flow --

def _ident_name(node: AstNode) -> str:
    return node.tokens[node.meta.get("parens", 0)]


def _expr_vars(node: AstNode, out: set[str]) -> None:
    if node.kind == "Identifier":
        out.add(_ident_name(node))
        return
    if node.kind == "Call":  # the callee is a function name, not a variable
        for arg in node.children[1:]:
            _expr_vars(arg, out)
        return
    for c in node.children:
        _expr_vars(c, out)


def _vars(expr: AstNode) -> set[str]:
    out: set[str] = set()
    _expr_vars(expr, out)
    return out


def _defs_uses(node: AstNode) -> tuple[set[str], set[str], set[str]]:
    """(strong defs, weak defs, uses) of one statement-level node.

    Strong defs kill earlier definitions; weak (array element) defs do not.
    Pointer writes define nothing we track; calls are opaque.
    """
    kind = node.kind
    strong: set[str] = set()
    weak: set[str] = set()
    uses: set[str] = set()
    if kind == "Decl":
        if node.meta.get("has_init"):
            strong.add(_ident_name(node.children[0]))
            uses |= _vars(node.children[1])
    elif kind == "Assign":
        lhs, rhs = node.children
        uses |= _vars(rhs)
        if lhs.kind == "Identifier":
            strong.add(_ident_name(lhs))
        elif lhs.kind == "Index":
            weak.add(_ident_name(lhs.children[0]))
            uses |= _vars(lhs.children[1])
        elif lhs.kind == "UnaryOp":  # *p = e uses p
            uses |= _vars(lhs.children[0])
    elif kind in ("If", "While", "For"):
        uses |= _vars(node.children[0] if kind != "For" else node.children[1])
    elif kind == "Return":
        if node.children:
            uses |= _vars(node.children[0])
    elif kind == "Call":
        for arg in node.children[1:]:
            uses |= _vars(arg)
    return strong, weak, uses


def dfg_edges(ast: AstNode, cfg: set[tuple[int, int]]) -> set[tuple[int, int]]:
    """(def stmt, use stmt) pairs from an iterative reaching-definitions fixpoint."""
    stmts = [n for n in ast.walk() if _is_statement(n)]
    info = {n.id: _defs_uses(n) for n in stmts}
    preds: dict[int, list[int]] = {n.id: [] for n in stmts}
    for s, d in sorted(cfg):
        preds[d].append(s)

    ins: dict[int, set[tuple[int, str]]] = {n.id: set() for n in stmts}
    outs: dict[int, set[tuple[int, str]]] = {n.id: set() for n in stmts}
    changed = True
    while changed:
        changed = False
        for n in stmts:
            sid = n.id
            strong, weak, _ = info[sid]
            new_in: set[tuple[int, str]] = set()
            for p in preds[sid]:
                new_in |= outs[p]
            new_out = {(d, v) for (d, v) in new_in if v not in strong}
            new_out |= {(sid, v) for v in strong | weak}
            if new_in != ins[sid] or new_out != outs[sid]:
                ins[sid] = new_in
                outs[sid] = new_out
                changed = True

    edges: set[tuple[int, int]] = set()
    for n in stmts:
        _, _, uses = info[n.id]
        for (d, v) in ins[n.id]:
            if v in uses:
                edges.add((d, n.id))
    return edges


# -- graph assembly --

def build_cpg(ast: AstNode, max_nodes: int = DEFAULT_MAX_NODES) -> CodeGraph:
    ast_nodes = list(ast.walk())
    if len(ast_nodes) + 1 > max_nodes:
        raise GraphTooLarge(
            f"{len(ast_nodes) + 1} nodes exceeds the {max_nodes}-node cap")

    nodes = [GraphNode(0, DUMMY_KIND, (DUMMY_TOKEN,), None)]
    for n in ast_nodes:
        nodes.append(GraphNode(n.id + 1, n.kind, tuple(n.tokens), n.line))

    edges: set[GraphEdge] = set()
    for n in ast_nodes:
        for c in n.children:
            edges.add(GraphEdge(n.id + 1, c.id + 1, "AST_CHILD"))
            edges.add(GraphEdge(c.id + 1, n.id + 1, "AST_PARENT"))

    leaves = [n for n in ast_nodes if not n.children]
    for a, b in zip(leaves, leaves[1:]):
        edges.add(GraphEdge(a.id + 1, b.id + 1, "NEXT_TOKEN"))

    cfg = cfg_successors(ast)
    for s, d in cfg:
        edges.add(GraphEdge(s + 1, d + 1, "CFG_NEXT"))

    for s, d in dfg_edges(ast, cfg):
        edges.add(GraphEdge(s + 1, d + 1, "DFG_REACH"))

    for n in ast_nodes:
        if _is_statement(n):
            edges.add(GraphEdge(0, n.id + 1, "GRAPH_LINK"))

    ordered = sorted(edges, key=lambda e: (e.type, e.src, e.dst))
    return CodeGraph(nodes, ordered, ast.meta["name"])


def annotate(graph: CodeGraph, vulnerable_line: int | None,
             commit_ts: int = 0, source_path: str = "") -> Sample:
    """Attach the ground-truth node for a vulnerable line (None = clean)."""
    if vulnerable_line is None:
        return Sample(graph, 0, None, commit_ts, source_path)
    candidates = [
        i for i in graph.statement_ids() if graph.nodes[i].line == vulnerable_line
    ]
    if not candidates:
        raise LineNotFound(
            f"no statement-level node on line {vulnerable_line} of {graph.function_name}")
    return Sample(graph, min(candidates), vulnerable_line, commit_ts, source_path)


# -- interchange format --

def serialize(sample: Sample) -> bytes:
    g = sample.graph
    record = {
        "v": SCHEMA_VERSION,
        "function_name": g.function_name,
        "source_path": sample.source_path,
        "commit_ts": sample.commit_ts,
        "label_node": sample.label_node,
        "vulnerable_line": sample.vulnerable_line,
        "nodes": [
            {"id": n.id, "kind": n.kind, "tokens": list(n.tokens), "line": n.line}
            for n in g.nodes
        ],
        "edges": [
            {"src": e.src, "dst": e.dst, "type": e.type}
            for e in sorted(g.edges, key=lambda e: (e.type, e.src, e.dst))
        ],
    }
    return (json.dumps(record, separators=(",", ":")) + "\n").encode("utf-8")


def deserialize(data: bytes) -> Sample:
    try:
        record = json.loads(data)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise MalformedRecord(f"not valid JSON: {exc}") from None
    if not isinstance(record, dict):
        raise MalformedRecord("record must be a JSON object")
    version = record.get("v")
    if version != SCHEMA_VERSION:
        raise SchemaVersionMismatch(f"unsupported schema version {version!r}")
    required = ("function_name", "source_path", "commit_ts", "label_node",
                "vulnerable_line", "nodes", "edges")
    for key in required:
        if key not in record:
            raise MalformedRecord(f"missing {key!r} field")
    try:
        nodes = [
            GraphNode(n["id"], n["kind"], tuple(n["tokens"]), n["line"])
            for n in record["nodes"]
        ]
        edges = [
            GraphEdge(e["src"], e["dst"], e["type"]) for e in record["edges"]
        ]
    except (KeyError, TypeError) as exc:
        raise MalformedRecord(f"bad node or edge record: {exc}") from None
    if not nodes or nodes[0].kind != DUMMY_KIND:
        raise MalformedRecord("node 0 must be the dummy node")
    if [n.id for n in nodes] != list(range(len(nodes))):
        raise MalformedRecord("node ids must be dense and ascending")
    for e in edges:
        if e.type not in EDGE_TYPES:
            raise MalformedRecord(f"unknown edge type {e.type!r}")
        if not (0 <= e.src < len(nodes) and 0 <= e.dst < len(nodes)):
            raise MalformedRecord(f"edge endpoint out of range: {e}")
    graph = CodeGraph(nodes, edges, record["function_name"])
    return Sample(graph, record["label_node"], record["vulnerable_line"],
                  record["commit_ts"], record["source_path"])


def save_samples(samples, path) -> None:
    with open(path, "wb") as fh:
        for s in samples:
            fh.write(serialize(s))


def load_samples(path) -> list[Sample]:
    out = []
    with open(path, "rb") as fh:
        for line in fh:
            if line.strip():
                out.append(deserialize(line))
    return out
