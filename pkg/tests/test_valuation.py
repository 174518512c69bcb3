import json
from fractions import Fraction

import pytest
from hypothesis import given
from hypothesis import strategies as st

from strategies import (
    TYPES,
    alphabet_for,
    random_expression,
    random_morphism,
    random_valuation,
    scrambled,
)
from tensorsys.category import ObjectList, compose, identity, mtensor, symmetry, trace
from tensorsys.core import (
    Alphabet,
    Delta,
    EinsteinExpression,
    Label,
    LabelError,
    SymbolDeclaration,
    TensorSymbol,
)
from tensorsys.valuation import (
    ConcreteTensor,
    Signature,
    Valuation,
    ValuationError,
    ccompose,
    ccontract,
    cdelta,
    cidentity,
    cpartial_trace,
    cproduct,
    csymmetry,
    ctensor,
    eval_morphism,
    eval_pinned,
    evaluate,
    load_valuation,
    tensor_json,
    valuation_from_json,
)

seeds = st.randoms(use_true_random=False)
small_objects = st.lists(st.sampled_from(TYPES[:2]), max_size=2).map(lambda ts: ObjectList(tuple(ts)))

M = ConcreteTensor.from_flat([2], [2], [1, 2, 3, 4])
ALPHABET = Alphabet(("A",), (SymbolDeclaration("psi", ("A",), ("A",)), SymbolDeclaration("v", (), ("A",))))
VALUATION = Valuation(
    Signature.from_alphabet(ALPHABET),
    {"A": 2},
    {"psi": M, "v": ConcreteTensor.from_flat([], [2], [1, 2])},
)


def A(name: str) -> Label:
    return Label.named(name, "A")


def psi(a: str, b: str) -> TensorSymbol:
    return TensorSymbol("psi", (A(a),), (A(b),))


def values(t: ConcreteTensor) -> list[Fraction]:
    return t.flat()


class TestConcreteTensor:
    def test_outer_product(self):
        t = ConcreteTensor.from_flat([], [2], [1, 2])
        u = ConcreteTensor.from_flat([], [2], [3, 4])
        assert values(cproduct(t, u)) == [3, 4, 6, 8]
        assert cproduct(t, u).upper_dims == (2, 2)

    def test_product_puts_lower_axes_first(self):
        t = ConcreteTensor.from_flat([], [2], [1, 2])
        u = ConcreteTensor.from_flat([2], [], [3, 4])
        p = cproduct(t, u)
        assert p.lower_dims == (2,) and p.upper_dims == (2,)
        # entry [i][j] = u[i] * t[j]
        assert values(p) == [3, 6, 4, 8]

    def test_trace(self):
        assert ccontract(M, 0, 0) == ConcreteTensor.scalar(5)

    def test_compose_is_matrix_product(self):
        assert values(ccompose(M, M)) == [7, 10, 15, 22]

    def test_delta_and_identity(self):
        assert values(cdelta(2)) == [1, 0, 0, 1]
        assert ccompose(M, cidentity([2])) == M
        assert cidentity([]) == ConcreteTensor.scalar(1)

    def test_symmetry_swaps_factors(self):
        t = ConcreteTensor.from_flat([], [2], [1, 2])
        u = ConcreteTensor.from_flat([], [3], [5, 6, 7])
        assert ccompose(csymmetry([2], [3]), cproduct(t, u)) == cproduct(u, t)

    def test_partial_trace(self):
        assert cpartial_trace(M, 1) == ConcreteTensor.scalar(5)
        with pytest.raises(ValuationError):
            cpartial_trace(M, 2)

    def test_exact_rationals(self):
        t = ConcreteTensor.from_flat([2], [], ["1/3", "2/3"])
        total = ccompose(ConcreteTensor.from_flat([2], [], [1, 1]), ConcreteTensor.from_flat([], [2], [1, 1]))
        assert values(t) == [Fraction(1, 3), Fraction(2, 3)]
        assert total == ConcreteTensor.scalar(2)

    @pytest.mark.parametrize("entry", [0.5, True, "one", "1/0"])
    def test_rejects_inexact_entries(self, entry):
        with pytest.raises(ValuationError):
            ConcreteTensor.from_flat([1], [], [entry])

    def test_rejects_wrong_size(self):
        with pytest.raises(ValuationError):
            ConcreteTensor.from_flat([2], [], [1, 2, 3])

    def test_json(self):
        t = ConcreteTensor.from_flat([1], [2], ["1/2", -3])
        assert t.to_json() == {"lower": [1], "upper": [2], "entries": ["1/2", "-3"]}
        assert ConcreteTensor.from_json(t.to_json()) == t
        assert tensor_json(ConcreteTensor.scalar(3)) == '{"lower": [], "upper": [], "entries": ["3"]}\n'


class TestEvaluate:
    def test_matrix_product(self):
        E = EinsteinExpression.of(psi("a", "b"), psi("b", "c"))
        assert values(evaluate(E, VALUATION)) == [7, 10, 15, 22]
        assert eval_pinned(E, VALUATION) == evaluate(E, VALUATION)

    def test_trace(self):
        assert evaluate(EinsteinExpression.of(psi("a", "a")), VALUATION) == ConcreteTensor.scalar(5)

    def test_circle_is_the_dimension(self):
        E = EinsteinExpression.of(Delta(A("z"), A("z")))
        assert evaluate(E, VALUATION) == ConcreteTensor.scalar(2)
        assert eval_pinned(E, VALUATION) == ConcreteTensor.scalar(2)

    def test_empty_expression_is_one(self):
        assert evaluate(EinsteinExpression(), VALUATION) == ConcreteTensor.scalar(1)

    def test_output_order(self):
        E = EinsteinExpression.of(
            TensorSymbol("v", (), (A("x"),)),
            TensorSymbol("v", (), (A("y"),)),
            psi("a", "b"),
        )
        forward = evaluate(E, VALUATION, [A("a")], [A("x"), A("y"), A("b")])
        assert forward.upper_dims == (2, 2, 2)
        swapped = evaluate(E, VALUATION, [A("a")], [A("b"), A("y"), A("x")])
        assert forward.entries[1, 0, 1, 0] == swapped.entries[1, 0, 1, 0]
        assert forward.entries[0, 0, 0, 1] == M.entries[0, 1]
        assert swapped.entries[0, 1, 0, 0] == M.entries[0, 1]

    def test_bad_order(self):
        with pytest.raises(LabelError):
            evaluate(EinsteinExpression.of(psi("a", "b")), VALUATION, [A("b")], [A("a")])

    def test_missing_symbol(self):
        E = EinsteinExpression.of(TensorSymbol("phi", (A("a"),), ()))
        with pytest.raises(ValuationError):
            evaluate(E, VALUATION)

    def test_missing_dimension(self):
        v = Valuation(Signature.from_alphabet(ALPHABET))
        with pytest.raises(ValuationError):
            evaluate(EinsteinExpression.of(Delta(A("z"), A("z"))), v)


class TestValuation:
    def test_tensor_dims_are_checked(self):
        with pytest.raises(ValuationError):
            Valuation(Signature.from_alphabet(ALPHABET), {"A": 3}, {"psi": M})

    def test_undeclared_type(self):
        with pytest.raises(ValuationError):
            Valuation(Signature.from_alphabet(ALPHABET), {"B": 2})

    def test_signature_round_trip(self):
        assert Signature.from_alphabet(ALPHABET).alphabet() == ALPHABET

    def test_from_json(self):
        v = valuation_from_json(
            {"dims": {"A": 2}, "tensors": {"psi": M.to_json()}}, Signature.from_alphabet(ALPHABET)
        )
        assert v.tensor("psi") == M

    def test_load(self, tmp_path):
        path = tmp_path / "valuation.json"
        path.write_text(json.dumps({"dims": {"A": 1}, "tensors": {"psi": {"lower": [1], "upper": [1], "entries": ["7"]}}}))
        v = load_valuation(path, Signature.from_alphabet(ALPHABET))
        assert evaluate(EinsteinExpression.of(psi("a", "a")), v) == ConcreteTensor.scalar(7)

    def test_load_rejects_garbage(self, tmp_path):
        path = tmp_path / "valuation.json"
        path.write_text("{")
        with pytest.raises(ValuationError):
            load_valuation(path, Signature.from_alphabet(ALPHABET))
        with pytest.raises(ValuationError):
            valuation_from_json({"dims": {"A": 1}, "extra": 1}, Signature.from_alphabet(ALPHABET))


@given(seeds)
def test_einsum_and_pinned_evaluation_agree(rnd):
    E = random_expression(rnd, max_symbols=3)
    v = random_valuation(rnd, alphabet_for(E), max_dim=2)
    assert evaluate(E, v) == eval_pinned(E, v)


@given(seeds)
def test_equivalent_expressions_have_equal_values(rnd):
    E = random_expression(rnd, max_symbols=3)
    v = random_valuation(rnd, alphabet_for(E), max_dim=2)
    assert evaluate(scrambled(rnd, E), v) == evaluate(E, v)


def _valuation_for(rnd, *morphisms):
    return random_valuation(rnd, alphabet_for(*(f.expression() for f in morphisms)), max_dim=2)


@given(seeds, small_objects, small_objects, small_objects)
def test_composition_is_preserved(rnd, X, Y, Z):
    f, g = random_morphism(rnd, X, Y, 2), random_morphism(rnd, Y, Z, 2)
    v = _valuation_for(rnd, f, g)
    assert eval_morphism(compose(g, f), v) == ccompose(eval_morphism(g, v), eval_morphism(f, v))


@given(seeds, small_objects, small_objects, small_objects, small_objects)
def test_tensor_is_preserved(rnd, X, Y, X2, Y2):
    f, g = random_morphism(rnd, X, Y, 2), random_morphism(rnd, X2, Y2, 2)
    v = _valuation_for(rnd, f, g)
    assert eval_morphism(mtensor(f, g), v) == ctensor(eval_morphism(f, v), eval_morphism(g, v))


@given(seeds, small_objects, small_objects)
def test_identity_and_symmetry_are_preserved(rnd, X, Y):
    v = random_valuation(rnd, alphabet_for(), max_dim=3)
    dims_x, dims_y = [v.dim(t) for t in X], [v.dim(t) for t in Y]
    assert eval_morphism(identity(X), v) == cidentity(dims_x)
    assert eval_morphism(symmetry(X, Y), v) == csymmetry(dims_x, dims_y)


@given(seeds, small_objects, small_objects, small_objects)
def test_trace_is_preserved(rnd, U, V, X):
    f = random_morphism(rnd, U + X, V + X, 2)
    v = _valuation_for(rnd, f)
    assert eval_morphism(trace(f, X), v) == cpartial_trace(eval_morphism(f, v), len(X))
