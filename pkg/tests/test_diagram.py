import random

import networkx as nx
import pytest
from hypothesis import given
from hypothesis import strategies as st

from strategies import equivalent_pairs, expression_pairs, expressions, random_expression, scrambled
from tensorsys.core import Delta, EinsteinExpression, Label, LabelError, LabelSupply, TensorSymbol, free_labels
from tensorsys.diagram import (
    BoundaryRef,
    Box,
    Diagram,
    DiagramError,
    PortRef,
    Wire,
    boundary_order,
    diagram_json,
    from_diagram,
    iso,
    parse_diagram_json,
    to_diagram,
    to_dot,
)
from tensorsys.normal_form import equivalent
from tensorsys.syntax import parse


def A(name: str) -> Label:
    return Label.named(name, "A")


@pytest.fixture
def two_boxes(two_boxes_file) -> EinsteinExpression:
    return parse(two_boxes_file.read_text()).expression("two_boxes")


def _node_match(a, b):
    return a["label"] == b["label"]


def _edge_match(a, b):
    return sorted(e["ports"] for e in a.values()) == sorted(e["ports"] for e in b.values())


def networkx_iso(D: Diagram, D2: Diagram) -> bool:
    return nx.is_isomorphic(D.to_networkx(), D2.to_networkx(), node_match=_node_match, edge_match=_edge_match)


class TestToDiagram:
    def test_golden_dot(self, two_boxes, golden_dir):
        assert to_dot(to_diagram(two_boxes)) == (golden_dir / "two_boxes.dot").read_text()

    def test_golden_json(self, two_boxes, golden_dir):
        assert diagram_json(to_diagram(two_boxes)) == (golden_dir / "two_boxes.json").read_text()

    def test_boxes_follow_symbol_order(self, two_boxes):
        D = to_diagram(two_boxes)
        assert [b.name for b in D.boxes] == ["psi", "phi"]
        assert D.inputs == ("A", "A")
        assert Wire(PortRef(1, 0, "out"), PortRef(0, 1, "in")) in D.wires

    def test_explicit_boundary_order(self, two_boxes):
        D = to_diagram(two_boxes, [A("d"), A("a")], [A("e"), A("c")])
        assert Wire(BoundaryRef("in", 0), PortRef(1, 0, "in")) in D.wires
        assert Wire(PortRef(0, 0, "out"), BoundaryRef("out", 1)) in D.wires

    def test_boundary_order_must_cover_free_labels(self, two_boxes):
        with pytest.raises(LabelError):
            to_diagram(two_boxes, [A("a")], [A("c"), A("e")])
        with pytest.raises(LabelError):
            to_diagram(two_boxes, [A("a"), A("b")], [A("c"), A("e")])

    def test_bare_wire_and_circle(self):
        E = EinsteinExpression.of(Delta(A("a"), A("b")), Delta(A("z"), A("z")))
        D = to_diagram(E)
        assert D.wires == frozenset({Wire(BoundaryRef("in", 0), BoundaryRef("out", 0))})
        assert D.circles == (("A", 1),)
        assert "circle0 -> circle0" in to_dot(D)

    def test_eliminable_deltas_leave_no_trace(self):
        E = EinsteinExpression.of(TensorSymbol("f", (A("a"),), (A("k"),)), Delta(A("k"), A("b")))
        assert to_diagram(E) == to_diagram(EinsteinExpression.of(TensorSymbol("f", (A("a"),), (A("b"),))))

    def test_canonical_labels_come_first(self):
        E = EinsteinExpression.of(
            TensorSymbol("f", (A("a"),), ()), TensorSymbol("f", (Label.canonical("A", 1, 0),), ())
        )
        lower, _ = boundary_order(E)
        assert lower == (Label.canonical("A", 1, 0), A("a"))


class TestValidate:
    def test_dangling_port(self):
        D = Diagram(boxes=(Box(0, "f", ("A",), ()),))
        with pytest.raises(DiagramError):
            D.validate()

    def test_wire_direction(self):
        D = Diagram(
            boxes=(Box(0, "f", ("A",), ("A",)),),
            wires=frozenset({Wire(PortRef(0, 0, "in"), PortRef(0, 0, "out"))}),
        )
        with pytest.raises(DiagramError):
            D.validate()

    def test_wire_types(self):
        D = Diagram(
            boxes=(Box(0, "f", ("A",), ()),),
            wires=frozenset({Wire(BoundaryRef("in", 0), PortRef(0, 0, "in"))}),
            inputs=("B",),
        )
        with pytest.raises(DiagramError):
            D.validate()

    def test_missing_port(self):
        D = Diagram(wires=frozenset({Wire(BoundaryRef("in", 0), BoundaryRef("out", 3))}), inputs=("A",), outputs=("A",))
        with pytest.raises(DiagramError):
            D.validate()


class TestJson:
    def test_reads_back(self, two_boxes, golden_dir):
        D = parse_diagram_json((golden_dir / "two_boxes.json").read_text())
        assert D == to_diagram(two_boxes)

    @pytest.mark.parametrize(
        "text",
        [
            "not json",
            "[]",
            '{"types": []}',
            '{"types": [], "boxes": [], "wires": [], "inputs": ["A"], "outputs": [], "circles": {}}',
            '{"types": ["A"], "boxes": [], "wires": [], "inputs": ["A"], "outputs": [], "circles": {}}',
            '{"types": ["A"], "boxes": [], "wires": [], "inputs": [], "outputs": [], "circles": {"A": -1}}',
        ],
    )
    def test_rejects(self, text):
        with pytest.raises(DiagramError):
            parse_diagram_json(text)


class TestFromDiagram:
    def test_round_trip(self, two_boxes):
        lower, upper = boundary_order(two_boxes)
        D = to_diagram(two_boxes)
        assert equivalent(from_diagram(D, lower_labels=lower, upper_labels=upper), two_boxes)

    def test_canonical_labels_by_default(self, two_boxes):
        E = from_diagram(to_diagram(two_boxes))
        lower, upper = free_labels(E)
        assert lower == frozenset({Label.canonical("A", 1, 0), Label.canonical("A", 2, 0)})
        assert upper == frozenset({Label.canonical("A", 1, 1), Label.canonical("A", 2, 1)})

    def test_label_supply_is_irrelevant(self, two_boxes):
        D = to_diagram(two_boxes)
        E = from_diagram(D, LabelSupply((("A", 3),)))
        E2 = from_diagram(D, LabelSupply((("A", 7),)))
        assert E != E2
        assert equivalent(E, E2)
        assert iso(to_diagram(E), to_diagram(E2))

    def test_boundary_labels_must_match(self, two_boxes):
        D = to_diagram(two_boxes)
        with pytest.raises(LabelError):
            from_diagram(D, lower_labels=[A("a")])
        with pytest.raises(LabelError):
            from_diagram(D, lower_labels=[A("a"), A("a")])


class TestIso:
    def test_box_numbering_is_irrelevant(self, two_boxes):
        swapped = EinsteinExpression(tuple(reversed(two_boxes.factors)))
        assert to_diagram(swapped) != to_diagram(two_boxes)
        assert iso(to_diagram(swapped), to_diagram(two_boxes))

    def test_many_identical_loops(self):
        def loops(prefix: str, count: int) -> Diagram:
            return to_diagram(
                EinsteinExpression(
                    tuple(TensorSymbol("f", (A(f"{prefix}{i}"),), (A(f"{prefix}{i}"),)) for i in range(count))
                )
            )

        assert iso(loops("a", 10), loops("b", 10))
        assert not iso(loops("a", 10), loops("b", 9))

    def test_boundary_order_matters(self, two_boxes):
        D = to_diagram(two_boxes)
        D2 = to_diagram(two_boxes, [A("d"), A("a")], [A("c"), A("e")])
        assert not iso(D, D2)


@given(expressions())
def test_diagram_round_trip(E):
    lower, upper = boundary_order(E)
    D = to_diagram(E)
    assert parse_diagram_json(diagram_json(D)) == D
    assert equivalent(from_diagram(D, lower_labels=lower, upper_labels=upper), E)
    assert iso(to_diagram(from_diagram(D)), D)


@given(equivalent_pairs())
def test_equivalent_expressions_have_isomorphic_diagrams(pair):
    E, E2 = pair
    assert iso(to_diagram(E), to_diagram(E2))


@given(expression_pairs())
def test_iso_matches_equivalence(pair):
    E, E2 = pair
    D, D2 = to_diagram(E), to_diagram(E2)
    assert iso(D, D2) == equivalent(E, E2)


@given(expression_pairs())
def test_iso_agrees_with_networkx(pair):
    E, E2 = pair
    D, D2 = to_diagram(E), to_diagram(E2)
    assert iso(D, D2) == networkx_iso(D, D2)


@given(st.randoms(use_true_random=False))
def test_dot_is_deterministic(rnd):
    E = random_expression(rnd)
    E2 = scrambled(random.Random(rnd.random()), E)
    lower, upper = boundary_order(E)
    assert to_dot(to_diagram(E, lower, upper)) == to_dot(to_diagram(E, lower, upper))
    assert iso(to_diagram(E2, lower, upper), to_diagram(E, lower, upper))
