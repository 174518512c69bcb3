import pytest
from hypothesis import given

from strategies import alphabet_for, expressions
from tensorsys.core import (
    Delta,
    EinsteinExpression,
    Label,
    LabelDisciplineError,
    LabelSupply,
    TensorSymbol,
    TypeMismatchError,
    UndeclaredSymbolError,
)
from tensorsys.normal_form import canonical, equivalent
from tensorsys.syntax import (
    ParseError,
    SourceFile,
    UnknownExpressionError,
    format_expression,
    format_source,
    parse,
    parse_expression,
)
from tensorsys.valuation import ConcreteTensor, ValuationError

HEADER = """
type A, B;
sym psi : A, A -> A;
sym phi : A -> A, A;
sym chi : A -> B;
sym unit : -> ;
"""


def A(name: str) -> Label:
    return Label.named(name, "A")


def parse_body(body: str) -> EinsteinExpression:
    return parse(HEADER + f"expr e = {body};\n").expression("e")


class TestParse:
    def test_two_boxes(self, two_boxes_file):
        source = parse(two_boxes_file.read_text())
        E = source.expression("two_boxes")
        assert E == EinsteinExpression.of(
            TensorSymbol("psi", (A("a"), A("b")), (A("c"),)),
            TensorSymbol("phi", (A("d"),), (A("b"), A("e"))),
        )
        assert source.alphabet.types == ("A",)
        assert not source.has_valuation

    def test_delta_types_are_inferred(self):
        E = parse_body("psi_{a,b}^{c} delta_{c}^{d} delta_{x}^{y} chi_{y}^{z}")
        assert Delta(A("c"), A("d")) in E.factors
        assert Delta(A("x"), A("y")) in E.factors

    def test_annotated_delta(self):
        E = parse_body("delta_{z:B}^{z}")
        assert E.factors == (Delta(Label.named("z", "B"), Label.named("z", "B")),)

    def test_canonical_labels(self):
        E = parse_body("chi_{@A.1.0}^{@B.1.1}")
        assert E.factors[0].lower == (Label.canonical("A", 1, 0),)

    def test_unit_and_one(self):
        assert parse_body("unit").factors == (TensorSymbol("unit"),)
        assert parse_body("1") == EinsteinExpression()

    def test_comments(self):
        source = parse("# nothing\ntype A; # trailing\nexpr e = delta_{a:A}^{b};")
        assert len(source.expression("e")) == 1

    def test_valuation_declarations(self):
        source = parse(
            'type A; dim A = 2; sym psi : A -> A;\n'
            'bind psi = {"lower": [2], "upper": [2], "entries": ["1", "0", "0", "1/2"]};\n'
            "expr e = psi_{a}^{a};"
        )
        assert source.has_valuation
        assert source.valuation().tensor("psi") == ConcreteTensor.from_flat([2], [2], [1, 0, 0, "1/2"])

    def test_unknown_expression(self):
        with pytest.raises(UnknownExpressionError):
            parse(HEADER).expression("missing")


class TestErrors:
    @pytest.mark.parametrize(
        "text",
        [
            "type A",
            "type A; type A;",
            "typo A;",
            "type A; expr e = ;",
            "type A; expr e = 2;",
            "type A; sym psi : A -> A; expr e = psi_{a}^{b} psi_{a,}^{c};",
            "type A; expr e = delta_{a:A}^{b} delta_{b};",
            "type A; expr e = delta_{\\_A1:A}^{b};",
            "type A; expr e = delta_{a:A}^{b} $;",
            "type A; sym psi : A -> A; expr e = psi_{a}^{b}; expr e = psi_{a}^{b};",
            "type A; dim A = 0;",
            "type A; sym delta : A -> A;",
        ],
    )
    def test_parse_errors(self, text):
        with pytest.raises(ParseError):
            parse(text)

    def test_error_location(self):
        with pytest.raises(ParseError) as info:
            parse("type A;\nexpr e = delta_{a:A}^{b} $;")
        assert info.value.line == 2
        assert info.value.column == 26

    def test_reserved_namespace_is_named(self):
        with pytest.raises(ParseError, match="reserved") as info:
            parse("type A;\nexpr e = delta_{\\_A1:A}^{b};")
        assert (info.value.line, info.value.column) == (2, 17)

    def test_label_discipline(self):
        with pytest.raises(LabelDisciplineError):
            parse_body("psi_{a,a}^{c}")

    def test_types(self):
        with pytest.raises(TypeMismatchError):
            parse_body("chi_{a}^{b} psi_{a,c}^{b}")
        with pytest.raises(TypeMismatchError):
            parse_body("delta_{a}^{b}")
        with pytest.raises(TypeMismatchError):
            parse_body("psi_{a}^{b}")
        with pytest.raises(TypeMismatchError):
            parse("type A; dim B = 1;")

    def test_undeclared_symbol(self):
        with pytest.raises(UndeclaredSymbolError):
            parse_body("omega_{a}^{b}")

    def test_bad_binding(self):
        with pytest.raises(ValuationError):
            parse('type A; sym psi : A -> A; bind psi = {"lower": [1], "upper": [1], "entries": [0.5]};')
        with pytest.raises(ValuationError):
            parse('type A; dim A = 2; sym psi : A -> A; bind psi = {"lower": [1], "upper": [1], "entries": ["1"]};')


class TestPrinting:
    def test_reduced_two_boxes(self, two_boxes_file, golden_dir):
        E = parse(two_boxes_file.read_text()).expression("two_boxes")
        printed = format_expression(canonical(E).to_expression())
        assert printed + "\n" == (golden_dir / "two_boxes.reduced").read_text()

    def test_reserved_labels_are_renamed(self):
        k, _ = LabelSupply().fresh("A")
        E = EinsteinExpression.of(
            TensorSymbol("psi", (A("k1"), k), (A("c"),)), TensorSymbol("phi", (A("d"),), (k, A("e")))
        )
        assert format_expression(E) == "psi_{k1,k2}^{c} phi_{d}^{k2,e}"

    def test_deltas_carry_types(self):
        E = EinsteinExpression.of(Delta(Label.named("z", "B"), Label.named("z", "B")))
        assert format_expression(E) == "delta_{z:B}^{z:B}"

    def test_empty_and_nullary(self):
        assert format_expression(EinsteinExpression()) == "1"
        assert format_expression(EinsteinExpression.of(TensorSymbol("unit"))) == "unit"

    def test_source_round_trip(self, two_boxes_file):
        source = parse(two_boxes_file.read_text() + "dim A = 2;\n")
        again = parse(format_source(source))
        assert again.alphabet == source.alphabet
        assert again.dims == {"A": 2}
        assert again.expressions == source.expressions


@given(expressions(types=("A", "B")))
def test_print_then_parse(E):
    alphabet = alphabet_for(E)
    text = format_expression(E)
    assert equivalent(parse_expression(text, alphabet), E)


@given(expressions())
def test_print_canonical_then_parse(E):
    normal = canonical(E).to_expression()
    source = SourceFile(alphabet_for(E), {"e": normal})
    assert canonical(parse(format_source(source)).expression("e")) == canonical(E)
