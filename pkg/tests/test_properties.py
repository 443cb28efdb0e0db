"""Property tests over the spec invariants that hold for arbitrary inputs."""

import math

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from ipag.compress import (
    AGG_SEP,
    constituent_names,
    entry_name,
    label_parts,
    merge_sequences,
)
from ipag.embed import HashEmbedder, PropertyVocabulary, decode_property, embed_property
from ipag.frontend import PROPERTY, TOKEN, Ast, AstNode, token_frontier
from ipag.graph import build_preliminary, validate_ipag
from ipag.model import geometric_mean, metrics_from_counts

names = st.sampled_from(["Alpha", "Beta", "Gamma", "Delta", "Epsilon", "Zeta"])
name_lists = st.lists(names, min_size=1, max_size=6)


def seq_label(parts):
    return ", ".join(parts)


@st.composite
def merged_labels(draw):
    kind = draw(st.integers(0, 2))
    if kind == 0:
        return draw(names)
    if kind == 1:
        return seq_label(draw(st.lists(names, min_size=2, max_size=6)))
    parent = seq_label(draw(name_lists))
    children = [seq_label(draw(name_lists)) for _ in range(draw(st.integers(2, 4)))]
    return "(" + parent + AGG_SEP + AGG_SEP.join(children) + ")"


@st.composite
def random_asts(draw):
    """Small random trees: property interiors, token leaves, source order."""
    node_counter = [0]
    nodes = {}

    def alloc():
        node_counter[0] += 1
        return node_counter[0] - 1

    def build(depth):
        nid = alloc()
        if depth >= 3 or draw(st.booleans()):
            nodes[nid] = AstNode(nid, TOKEN, f"t{nid}", [])
            return nid
        children = [
            build(depth + 1) for _ in range(draw(st.integers(1, 3)))
        ]
        nodes[nid] = AstNode(nid, PROPERTY, draw(names), children)
        return nid

    root = alloc()
    children = [build(1) for _ in range(draw(st.integers(1, 3)))]
    nodes[root] = AstNode(root, PROPERTY, "FunctionDefinition", children)
    return Ast(nodes=nodes, root=root, routine_name="prop", language="other")


class TestLabelGrammar:
    @given(merged_labels())
    def test_parts_flatten_to_constituents(self, label):
        parts = label_parts(label)
        assert [n for part in parts for n in part] == constituent_names(label)
        assert all(part for part in parts)

    @given(merged_labels())
    def test_entry_name_is_a_constituent_or_absent(self, label):
        name = entry_name(label)
        if label.startswith("("):
            assert name is None
        else:
            assert name == constituent_names(label)[-1]


class TestPropertyEmbedding:
    vocab = PropertyVocabulary(
        names={n: i for i, n in enumerate(
            ["Alpha", "Beta", "Gamma", "Delta", "Epsilon", "Zeta"], start=1)}
    )

    @given(merged_labels())
    def test_round_trip_preserves_names_in_order(self, label):
        vec = embed_property(label, self.vocab)
        decoded = decode_property(vec, self.vocab)
        assert [name for name, _, _ in decoded] == constituent_names(label)

    @given(merged_labels())
    def test_positions_and_depths_are_positive(self, label):
        decoded = decode_property(embed_property(label, self.vocab), self.vocab)
        assert all(p >= 1 and d >= 1 for _, p, d in decoded)


class TestGraphInvariants:
    @settings(max_examples=40, deadline=None)
    @given(random_asts())
    def test_build_and_compress_keep_invariants(self, ast):
        g = build_preliminary(ast)
        assert validate_ipag(g) == []
        frontier = [label for _, label in token_frontier(ast)]
        assert [label for _, label in g.token_sequence()] == frontier
        reduced = merge_sequences(g)
        assert validate_ipag(reduced) == []
        assert [label for _, label in reduced.token_sequence()] == frontier
        assert reduced.node_count() <= g.node_count()
        assert reduced.edge_count() <= g.edge_count()

    @settings(max_examples=40, deadline=None)
    @given(random_asts())
    def test_compressible_tags_invariant_under_id_shift(self, ast):
        # Renaming node ids must not change what compresses.
        from ipag.compress import CompressRuleset, find_aggregations

        rules = CompressRuleset(
            languages={
                "other": {
                    "Alpha": ("Expression", True),
                    "Beta": ("Expression", True),
                    "Gamma": ("Statement", False),
                    "Delta": ("Statement", False),
                    "Epsilon": ("Declaration", True),
                    "Zeta": ("Other", False),
                    "FunctionDefinition": ("Other", False),
                }
            }
        )
        g1 = merge_sequences(build_preliminary(ast))
        shifted = Ast(
            nodes={
                nid + 1000: AstNode(
                    n.id + 1000, n.kind, n.label, [c + 1000 for c in n.children]
                )
                for nid, n in ast.nodes.items()
            },
            root=ast.root + 1000,
            routine_name=ast.routine_name,
            language=ast.language,
        )
        g2 = merge_sequences(build_preliminary(shifted))
        tags1 = sorted(
            (g1.properties[a.parent], a.compressible)
            for a in find_aggregations(g1, rules)
        )
        tags2 = sorted(
            (g2.properties[a.parent], a.compressible)
            for a in find_aggregations(g2, rules)
        )
        assert tags1 == tags2


class TestMetricsProperties:
    counts = st.integers(min_value=0, max_value=500)

    @given(counts, counts, counts, counts)
    def test_defined_metrics_are_ratios_in_unit_interval(self, tp, tn, fp, fn):
        m = metrics_from_counts(tp, tn, fp, fn)
        for value in m.values():
            assert value is None or 0.0 <= value <= 1.0
        if tp + tn + fp + fn:
            assert m["accuracy"] == (tp + tn) / (tp + tn + fp + fn)
        if fp + tn:
            assert m["fpr"] == fp / (fp + tn)
        if fn + tp:
            assert m["fnr"] == fn / (fn + tp)
        if m["precision"] is not None and m["recall"] is not None and (
            m["precision"] + m["recall"] > 0
        ):
            expected = (
                2 * m["precision"] * m["recall"] / (m["precision"] + m["recall"])
            )
            assert math.isclose(m["f1"], expected)

    @given(st.lists(st.one_of(st.none(), st.floats(0.01, 1.0)), max_size=8))
    def test_geometric_mean_bounds(self, values):
        gm = geometric_mean(values)
        defined = [v for v in values if v is not None]
        if not defined:
            assert gm is None
        else:
            assert min(defined) - 1e-12 <= gm <= max(defined) + 1e-12


class TestHashEmbedderProperties:
    @given(st.text(min_size=1, max_size=30))
    def test_unit_norm_and_determinism(self, text):
        e = HashEmbedder(width=32)
        a = e.embed([text])[0]
        b = e.embed([text])[0]
        assert np.array_equal(a, b)
        assert abs(np.linalg.norm(a) - 1.0) < 1e-9
