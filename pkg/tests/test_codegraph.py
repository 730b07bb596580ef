import random

import pytest

from vulloc import codegraph
from vulloc.codegraph import annotate, build_cpg, cfg_successors, deserialize, dfg_edges, serialize
from vulloc.errors import GraphTooLarge, LineNotFound, MalformedRecord, SchemaVersionMismatch
from vulloc.frontend import parse_source

from oracles import check_dfg_against_oracle, random_loopfree_source


def stmt_by_line(graph, line):
    ids = [i for i in graph.statement_ids() if graph.nodes[i].line == line]
    assert len(ids) == 1
    return ids[0]


def cfg_pairs(graph):
    return {(e.src, e.dst) for e in graph.edges_of("CFG_NEXT")}


class TestCfg:
    def test_straight_line(self):
        g = build_cpg(parse_source("int f()\n{\nint a = 1;\nint b = 2;\nreturn a + b;\n}"))
        s1, s2, s3 = (stmt_by_line(g, ln) for ln in (3, 4, 5))
        assert cfg_pairs(g) == {(s1, s2), (s2, s3)}

    def test_branch_join(self):
        src = "int f(int c)\n{\nint y;\nif (c)\n{\ny = 1;\n}\nelse\n{\ny = 2;\n}\ny = 3;\nreturn y;\n}"
        g = build_cpg(parse_source(src))
        decl = stmt_by_line(g, 3)
        ifn = stmt_by_line(g, 4)
        a = stmt_by_line(g, 6)
        b = stmt_by_line(g, 10)
        d = stmt_by_line(g, 12)
        ret = stmt_by_line(g, 13)
        assert cfg_pairs(g) == {(decl, ifn), (ifn, a), (ifn, b), (a, d), (b, d), (d, ret)}

    def test_while_loop(self):
        src = "int f(int c)\n{\nint a = 0;\nwhile (c)\n{\na = a + 1;\n}\nreturn a;\n}"
        g = build_cpg(parse_source(src))
        init = stmt_by_line(g, 3)
        wh = stmt_by_line(g, 4)
        body = stmt_by_line(g, 6)
        ret = stmt_by_line(g, 8)
        assert cfg_pairs(g) == {(init, wh), (wh, body), (body, wh), (wh, ret)}

    def test_for_loop(self):
        src = "int f(int n)\n{\nint s = 0;\nint i;\nfor (i = 0; i < n; i = i + 1)\n{\ns = s + i;\n}\nreturn s;\n}"
        g = build_cpg(parse_source(src))
        pairs = cfg_pairs(g)
        for_ids = [i for i in g.statement_ids() if g.nodes[i].kind == "For"]
        assert len(for_ids) == 1
        for_id = for_ids[0]
        body = stmt_by_line(g, 7)
        ret = stmt_by_line(g, 9)
        # init -> For(cond) -> body -> post -> For; For -> return on exit
        assigns_on_5 = [i for i in g.statement_ids()
                        if g.nodes[i].line == 5 and g.nodes[i].kind == "Assign"]
        init, post = min(assigns_on_5), max(assigns_on_5)
        assert (init, for_id) in pairs
        assert (for_id, body) in pairs
        assert (body, post) in pairs
        assert (post, for_id) in pairs
        assert (for_id, ret) in pairs

    def test_return_has_no_successor(self):
        src = "int f(int c)\n{\nif (c)\n{\nreturn 1;\n}\nreturn 0;\n}"
        g = build_cpg(parse_source(src))
        pairs = cfg_pairs(g)
        for i in g.statement_ids():
            if g.nodes[i].kind == "Return":
                assert not any(s == i for s, _ in pairs)

    def test_non_terminal_statements_have_successors(self):
        src = "int f(int c)\n{\nint x = 0;\nif (c)\n{\nx = 1;\n}\nwhile (x < 5)\n{\nx = x + 2;\n}\nreturn x;\n}"
        g = build_cpg(parse_source(src))
        pairs = cfg_pairs(g)
        with_succ = {s for s, _ in pairs}
        for i in g.statement_ids():
            if g.nodes[i].kind != "Return":
                assert i in with_succ


class TestDfg:
    def edges_by_line(self, src):
        g = build_cpg(parse_source(src))
        return {(g.nodes[s].line, g.nodes[d].line)
                for s, d in ((e.src, e.dst) for e in g.edges_of("DFG_REACH"))}

    def test_direct_reach(self):
        assert self.edges_by_line(
            "int f()\n{\nint x;\nint y;\nx = 1;\ny = x;\nreturn y;\n}"
        ) == {(5, 6), (6, 7)}

    def test_kill_semantics(self):
        edges = self.edges_by_line(
            "int f()\n{\nint x;\nint y;\nx = 1;\nx = 2;\ny = x;\nreturn y;\n}")
        assert (6, 7) in edges
        assert (5, 7) not in edges

    def test_branch_union(self):
        # Frozen from the two-path enumeration: the branch may or may not kill.
        edges = self.edges_by_line(
            "int f(int c)\n{\nint x;\nint y;\nx = 1;\nif (c)\n{\nx = 2;\n}\ny = x;\nreturn y;\n}")
        assert (5, 10) in edges and (8, 10) in edges

    def test_array_defs_are_weak(self):
        edges = self.edges_by_line(
            "int f(int i)\n{\nint a[4];\na[0] = 1;\na[1] = 2;\nreturn a[i];\n}")
        assert (4, 6) in edges and (5, 6) in edges

    def test_uninitialized_use_has_no_edge(self):
        edges = self.edges_by_line(
            "int f()\n{\nint u;\nint y;\ny = u;\nreturn y;\n}")
        assert all(dst != 5 for _, dst in edges)

    def test_loop_carried_dependency(self):
        src = "int f(int n)\n{\nint s = 0;\nwhile (s < n)\n{\ns = s + 1;\n}\nreturn s;\n}"
        edges = self.edges_by_line(src)
        assert (6, 6) in edges  # s = s + 1 reaches itself around the loop
        assert (3, 6) in edges and (6, 8) in edges and (3, 8) in edges

    @pytest.mark.parametrize("seed", range(40))
    def test_matches_path_oracle(self, seed):
        rng = random.Random(seed)
        src = random_loopfree_source(rng)
        computed, expected = check_dfg_against_oracle(src)
        assert computed == expected


class TestGraphShape:
    SRC = "int f(int n)\n{\nint a[8];\nint i;\nfor (i = 0; i < 8; i = i + 1)\n{\na[i] = n;\n}\nreturn a[0];\n}"

    def test_dummy_node(self):
        g = build_cpg(parse_source(self.SRC))
        d = g.nodes[0]
        assert d.kind == "Dummy" and d.tokens == ("<GRAPH>",) and d.line is None
        assert all(n.line is not None for n in g.nodes[1:])
        assert len(g.edges_of("GRAPH_LINK")) >= 1
        assert all(e.src == 0 for e in g.edges_of("GRAPH_LINK"))

    def test_ast_child_parent_mirror(self):
        g = build_cpg(parse_source(self.SRC))
        child = {(e.src, e.dst) for e in g.edges_of("AST_CHILD")}
        parent = {(e.src, e.dst) for e in g.edges_of("AST_PARENT")}
        assert parent == {(b, a) for a, b in child}

    def test_ids_follow_preorder(self):
        ast = parse_source(self.SRC)
        g = build_cpg(ast)
        for n in ast.walk():
            assert g.nodes[n.id + 1].kind == n.kind
            assert g.nodes[n.id + 1].tokens == tuple(n.tokens)

    def test_next_token_chain(self):
        g = build_cpg(parse_source("int f()\n{\nint x = 1;\nreturn x;\n}"))
        nt = sorted((e.src, e.dst) for e in g.edges_of("NEXT_TOKEN"))
        # chain over childless nodes: ParamList, x, 1, x(in return) by id order
        leaves = [n.id for n in g.nodes[1:]
                  if not any(e.src == n.id for e in g.edges_of("AST_CHILD"))]
        assert nt == [(a, b) for a, b in zip(leaves, leaves[1:])]

    def test_graph_too_large(self):
        body = "\n".join(f"int v{i} = {i};" for i in range(200))
        src = f"int f()\n{{\n{body}\nreturn 0;\n}}"
        with pytest.raises(GraphTooLarge):
            build_cpg(parse_source(src), max_nodes=64)

    def test_statement_ids_cover_kinds(self):
        g = build_cpg(parse_source(self.SRC))
        kinds = {g.nodes[i].kind for i in g.statement_ids()}
        assert kinds == {"Decl", "Assign", "For", "Return"}


class TestAnnotate:
    SRC = "int f(int n)\n{\nint x;\nx = n + 1;\nreturn x;\n}"

    def test_non_vulnerable(self):
        s = annotate(build_cpg(parse_source(self.SRC)), None)
        assert s.label_node == 0 and s.vulnerable_line is None

    def test_direct_mapping(self):
        g = build_cpg(parse_source(self.SRC))
        s = annotate(g, 4)
        assert g.nodes[s.label_node].kind == "Assign"
        assert g.nodes[s.label_node].line == 4

    def test_line_not_found(self):
        with pytest.raises(LineNotFound):
            annotate(build_cpg(parse_source(self.SRC)), 999)

    def test_smallest_id_tie_break(self):
        g = build_cpg(parse_source("int f(int n)\n{\nint i;\nfor (i = 0; i < n; i = i + 1)\n{\nn = n - 1;\n}\nreturn n;\n}"))
        s = annotate(g, 4)
        on_line = [i for i in g.statement_ids() if g.nodes[i].line == 4]
        assert s.label_node == min(on_line)


class TestSerialize:
    SRC = "int f(int n)\n{\nint x;\nx = n * 2;\nreturn x;\n}"

    def sample(self):
        return annotate(build_cpg(parse_source(self.SRC)), 4, commit_ts=17, source_path="a/b.c")

    def test_round_trip_identity(self):
        s = self.sample()
        t = deserialize(serialize(s))
        assert t == s

    def test_byte_stability(self):
        s = self.sample()
        data = serialize(s)
        assert serialize(deserialize(data)) == data

    def test_missing_key(self):
        import json
        record = json.loads(serialize(self.sample()))
        del record["nodes"]
        with pytest.raises(MalformedRecord):
            deserialize(json.dumps(record).encode())

    def test_version_mismatch(self):
        import json
        record = json.loads(serialize(self.sample()))
        record["v"] = 99
        with pytest.raises(SchemaVersionMismatch):
            deserialize(json.dumps(record).encode())

    def test_not_json(self):
        with pytest.raises(MalformedRecord):
            deserialize(b"definitely not json{")

    def test_edge_order_canonical(self):
        s = self.sample()
        data = serialize(s)
        rec = deserialize(data)
        keys = [(e.type, e.src, e.dst) for e in rec.graph.edges]
        assert keys == sorted(keys)

    def test_save_load_roundtrip(self, tmp_path):
        samples = [self.sample(), annotate(build_cpg(parse_source(self.SRC)), None)]
        path = tmp_path / "graphs.jsonl"
        codegraph.save_samples(samples, path)
        loaded = codegraph.load_samples(path)
        assert loaded == samples
