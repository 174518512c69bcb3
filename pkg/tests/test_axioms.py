"""The abstract tensor system laws, checked on the free system up to equivalence."""

import random

from hypothesis import given
from hypothesis import strategies as st

from strategies import TYPES, fresh_names, random_expression, rename_bound
from tensorsys.core import (
    Delta,
    EinsteinExpression,
    Label,
    Relabelling,
    contract,
    delta,
    free_labels,
    product,
    relabel,
)
from tensorsys.normal_form import equivalent

seeds = st.randoms(use_true_random=False)


def tagged(E: EinsteinExpression, tag: str) -> EinsteinExpression:
    mapping = {x: Label.named(f"{tag}{x.name}", x.type) for x in E.labels()}
    return E.map_labels(mapping, mapping)


def with_wires(rnd: random.Random, E: EinsteinExpression, count: int) -> EinsteinExpression:
    """E plus ``count`` bare wires u_k -> v_k, so contractions are always available."""
    wires = []
    for k in range(count):
        t = rnd.choice(TYPES[:2])
        wires.append(Delta(Label.named(f"u{k}", t), Label.named(f"v{k}", t)))
    return EinsteinExpression(E.factors + tuple(wires))


def sample(rnd: random.Random, max_symbols: int = 4, wires: int = 1) -> EinsteinExpression:
    return with_wires(rnd, random_expression(rnd, max_symbols, types=TYPES[:3]), wires)


def contraction_pairs(E: EinsteinExpression) -> list[tuple[Label, Label]]:
    lower, upper = free_labels(E)
    return [(a, b) for a in sorted(lower) for b in sorted(upper) if a.type == b.type]


def random_relabelling(rnd: random.Random, E: EinsteinExpression, prefix: str) -> Relabelling:
    """Send a random subset of E's free labels to fresh names."""
    lower, upper = free_labels(E)
    names = fresh_names(E, prefix)
    chosen = [x for x in sorted(lower | upper) if rnd.random() < 0.5]
    return Relabelling.of({x: Label.named(next(names), x.type) for x in chosen})


@given(seeds)
def test_contractions_commute(rnd):
    E = sample(rnd, wires=2)
    pairs = contraction_pairs(E)
    (a, b), (a2, b2) = rnd.choice(
        [(p, q) for p in pairs for q in pairs if p[0] != q[0] and p[1] != q[1]]
    )
    assert equivalent(contract(contract(E, a, b), a2, b2), contract(contract(E, a2, b2), a, b))


@given(seeds)
def test_product_is_associative_with_unit(rnd):
    E1, E2, E3 = (tagged(random_expression(rnd, 2, types=TYPES[:3]), tag) for tag in "pqr")
    assert equivalent(product(product(E1, E2), E3), product(E1, product(E2, E3)))
    assert equivalent(product(E1, EinsteinExpression()), E1)
    assert equivalent(product(EinsteinExpression(), E1), E1)


@given(seeds)
def test_contraction_passes_through_product(rnd):
    E = tagged(sample(rnd), "l")
    E2 = tagged(random_expression(rnd, 2), "r")
    a, b = rnd.choice(contraction_pairs(E))
    assert equivalent(contract(product(E, E2), a, b), product(contract(E, a, b), E2))


@given(seeds)
def test_contracting_a_delta_renames(rnd):
    E = sample(rnd)
    lower, upper = free_labels(E)
    names = fresh_names(E, "t")
    b = rnd.choice(sorted(upper))
    a, c = Label.named(next(names), b.type), Label.named(next(names), b.type)
    assert equivalent(contract(product(delta(a, c), E), a, b), relabel(E, {b: c}))

    b = rnd.choice(sorted(lower))
    a, c = Label.named(next(names), b.type), Label.named(next(names), b.type)
    assert equivalent(contract(product(delta(c, a), E), b, a), relabel(E, {b: c}))


@given(seeds)
def test_relabellings_compose(rnd):
    E = sample(rnd)
    f = random_relabelling(rnd, E, "p")
    E_f = relabel(E, f)
    g = random_relabelling(rnd, E_f, "q")
    assert equivalent(relabel(E_f, g), relabel(E, f.then(g)))
    assert relabel(E, Relabelling()) == E


@given(seeds)
def test_relabelling_passes_through_product(rnd):
    E = tagged(sample(rnd), "l")
    E2 = tagged(random_expression(rnd, 2), "r")
    f = random_relabelling(rnd, E, "p")
    assert equivalent(relabel(product(E, E2), f), product(relabel(E, f), E2))


@given(seeds)
def test_relabelling_passes_through_contraction(rnd):
    E = sample(rnd)
    a, b = rnd.choice(contraction_pairs(E))
    f = random_relabelling(rnd, E, "p")
    E_ab = contract(E, a, b)
    lower, upper = free_labels(E_ab)
    rest = f.restricted(lower | upper)
    assert equivalent(relabel(E_ab, rest), contract(relabel(E, f), f(a), f(b)))


def test_relabelling_a_delta():
    a, b, a2, b2 = (Label.named(n, "A") for n in ("a", "b", "a2", "b2"))
    assert relabel(delta(a, b), {a: a2, b: b2}) == delta(a2, b2)


@given(seeds)
def test_bound_labels_are_irrelevant(rnd):
    E = sample(rnd)
    assert equivalent(rename_bound(rnd, E), E)
