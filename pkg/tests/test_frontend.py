import json

import pytest

from ipag.errors import (
    AstValidationError,
    InterchangeError,
    MiniCSyntaxError,
    UnsupportedConstructError,
)
from ipag.frontend import (
    PROPERTY,
    TOKEN,
    Ast,
    AstNode,
    RoutineCorpus,
    load_ast_interchange,
    mini_c_property_names,
    parse_mini_c,
    save_ast_interchange,
    token_frontier,
    validate_ast,
)

from _generators import MiniCGenerator, gen_random_ast


def frontier_labels(ast):
    return [label for _, label in token_frontier(ast)]


class TestParseMiniC:
    def test_dump_relocs_frontier_and_root(self, dump_relocs_ast):
        ast = dump_relocs_ast
        assert ast.routine_name == "dump_relocs"
        labels = frontier_labels(ast)
        assert len(labels) == 9
        assert labels[:2] == ["static void", "dump_relocs"]
        assert labels == [
            "static void", "dump_relocs", "bfd", "*", "abfd",
            "bfd_map_over_sections", "abfd", "dump_relocs_in_section", "NULL",
        ]
        root = ast.nodes[ast.root]
        assert root.label == "FunctionDefinition"
        assert [ast.nodes[c].label for c in root.children] == [
            "SimpleDeclSpecifier", "FunctionDeclarator", "CompoundStatement",
        ]

    def test_empty_source_gives_empty_list(self):
        assert parse_mini_c("") == []

    def test_call_in_return_matches_hand_built_tree(self):
        # Expected tree for this fixed string, built by hand node for node.
        (ast,) = parse_mini_c("int f(){return g(1);}")

        def prop(label, children):
            return (PROPERTY, label, children)

        def tok(text):
            return (TOKEN, text, [])

        expected = prop("FunctionDefinition", [
            prop("SimpleDeclSpecifier", [tok("int")]),
            prop("FunctionDeclarator", [prop("Name", [tok("f")])]),
            prop("CompoundStatement", [
                prop("ReturnStatement", [
                    tok("return"),
                    prop("FunctionCallExpression", [
                        prop("IdExpression", [prop("Name", [tok("g")])]),
                        prop("LiteralExpression", [tok("1")]),
                    ]),
                ]),
            ]),
        ])

        def shape(node_id):
            node = ast.nodes[node_id]
            return (node.kind, node.label, [shape(c) for c in node.children])

        assert shape(ast.root) == expected
        labels = [n.label for n in ast.nodes.values() if n.kind == PROPERTY]
        assert labels.count("FunctionCallExpression") == 1
        assert labels.count("ReturnStatement") == 1

    def test_syntax_error_carries_position(self):
        with pytest.raises(MiniCSyntaxError) as err:
            parse_mini_c("int f() { return }")
        assert err.value.line == 1
        assert err.value.col > 0

    @pytest.mark.parametrize(
        "source,construct",
        [
            ("struct s { int x; };", "struct"),
            ("typedef int myint;", "typedef"),
            ("int f(int x, ...) { return 0; }", "variadic"),
            ("int f() { goto done; }", "goto"),
            ("int f() { return sizeof(int); }", "sizeof"),
            ("int f(void);", "prototype"),
        ],
    )
    def test_unsupported_constructs_are_named(self, source, construct):
        with pytest.raises(UnsupportedConstructError) as err:
            parse_mini_c(source)
        assert construct.split()[0] in str(err.value)

    def test_comments_and_preprocessor_are_stripped(self):
        src = """\
#include <stdio.h>
// leading comment
int f(int a) {
    /* block
       comment */
    return a + 1; // trailing
}
"""
        (ast,) = parse_mini_c(src)
        assert frontier_labels(ast) == ["int", "f", "int", "a", "return", "a", "+", "1"]

    def test_address_and_deref_are_two_tokens(self):
        (ast,) = parse_mini_c("int f(int x) { int y = &x; return *y; }")
        labels = frontier_labels(ast)
        assert "&" in labels and "x" in labels
        i = labels.index("&")
        assert labels[i + 1] == "x"

    def test_statement_variety_parses(self):
        src = """\
int toolbox(int n, char *buf) {
    int total = 0;
    unsigned int mask = 0x10;
    for (int i = 0; i < n; i = i + 1) {
        if (buf[i] == 'x' && total < 100) { total += 2; }
        else { total = total - 1; }
    }
    while (total > 0) { total = total - 3; }
    do { total++; } while (total % 7);
    switch (n) {
        case 0: total = 1; break;
        case 1: continue;
        default: total = n > 4 ? n : -n;
    }
    long vals[3] = {1, 2, 3};
    bfd *handle = (bfd *) buf;
    return total + vals[0] + handle->size;
}
"""
        (ast,) = parse_mini_c(src)
        assert not validate_ast(ast)
        kinds = {ast.nodes[n].label for n in ast.nodes if ast.nodes[n].kind == PROPERTY}
        for expected in (
            "ForStatement", "IfStatement", "WhileStatement", "DoStatement",
            "SwitchStatement", "CaseStatement", "DefaultStatement",
            "ConditionalExpression", "InitializerList", "CastExpression",
            "ArraySubscriptExpression", "FieldReference", "BreakStatement",
            "ContinueStatement", "ArrayDeclarator",
        ):
            assert expected in kinds, expected

    def test_every_emitted_label_is_in_vocabulary(self):
        vocab = mini_c_property_names()
        gen = MiniCGenerator(3)
        for ast in parse_mini_c(gen.corpus(40)):
            for node in ast.nodes.values():
                if node.kind == PROPERTY:
                    assert node.label in vocab


class TestTokenFrontier:
    def test_single_token_ast(self):
        nodes = {
            0: AstNode(0, PROPERTY, "FunctionDefinition", [1]),
            1: AstNode(1, TOKEN, "lone", []),
        }
        ast = Ast(nodes=nodes, root=0, routine_name="r")
        assert frontier_labels(ast) == ["lone"]

    @pytest.mark.parametrize("seed", range(25))
    def test_frontier_matches_generator_emission_order(self, seed):
        ast, emitted = gen_random_ast(seed)
        assert frontier_labels(ast) == emitted

    def test_parse_is_deterministic(self):
        gen = MiniCGenerator(5)
        src = gen.corpus(20)
        first = [frontier_labels(a) for a in parse_mini_c(src)]
        second = [frontier_labels(a) for a in parse_mini_c(src)]
        assert first == second
        assert all(labels for labels in first)


class TestInterchange:
    def make_minimal(self, tmp_path):
        doc = {
            "version": 1,
            "routines": [
                {
                    "name": "tiny",
                    "language": "c",
                    "root": 0,
                    "nodes": [
                        {"id": 0, "kind": "property", "label": "FunctionDefinition", "children": [1]},
                        {"id": 1, "kind": "property", "label": "CompoundStatement", "children": [2]},
                        {"id": 2, "kind": "token", "label": "x", "children": []},
                    ],
                }
            ],
        }
        path = tmp_path / "corpus.json"
        path.write_text(json.dumps(doc))
        return path

    def test_minimal_file_loads(self, tmp_path):
        corpus = load_ast_interchange(str(self.make_minimal(tmp_path)))
        assert len(corpus.asts) == 1
        assert corpus.index["tiny"].routine_name == "tiny"

    def test_token_with_child_is_rejected(self, tmp_path):
        doc = {
            "version": 1,
            "routines": [
                {
                    "name": "bad",
                    "language": "c",
                    "root": 0,
                    "nodes": [
                        {"id": 0, "kind": "property", "label": "FunctionDefinition", "children": [1]},
                        {"id": 1, "kind": "token", "label": "x", "children": [2]},
                        {"id": 2, "kind": "token", "label": "y", "children": []},
                    ],
                }
            ],
        }
        path = tmp_path / "bad.json"
        path.write_text(json.dumps(doc))
        with pytest.raises(AstValidationError, match="token nodes have zero children"):
            load_ast_interchange(str(path))

    def test_malformed_json_reports_offset(self, tmp_path):
        path = tmp_path / "broken.json"
        path.write_text('{"version": 1, "routines": [')
        with pytest.raises(InterchangeError, match="byte offset"):
            load_ast_interchange(str(path))

    def test_round_trip_preserves_structure(self, tmp_path, reloc_asts):
        path = tmp_path / "rt.json"
        save_ast_interchange(list(reloc_asts), str(path))
        corpus = load_ast_interchange(str(path))
        assert [a.routine_name for a in corpus.asts] == [a.routine_name for a in reloc_asts]
        for original, loaded in zip(reloc_asts, corpus.asts):
            def shape(ast, node_id):
                node = ast.nodes[node_id]
                return (node.kind, node.label, [shape(ast, c) for c in node.children])

            assert shape(original, original.root) == shape(loaded, loaded.root)

    def test_generated_corpus_round_trips(self, tmp_path):
        gen = MiniCGenerator(9)
        asts = parse_mini_c(gen.corpus(15))
        path = tmp_path / "gen.json"
        save_ast_interchange(asts, str(path))
        reloaded = load_ast_interchange(str(path)).asts
        for a, b in zip(asts, reloaded):
            assert frontier_labels(a) == frontier_labels(b)


class TestRoutineCorpus:
    def test_duplicates_resolve_to_last(self, caplog):
        src = "int f() { return 1; }\nint f() { return 2; }"
        asts = parse_mini_c(src)
        with caplog.at_level("WARNING"):
            corpus = RoutineCorpus(asts=asts)
        assert "duplicate routine" in caplog.text
        assert corpus.index["f"] is asts[-1]
