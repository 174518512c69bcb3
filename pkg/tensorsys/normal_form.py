"""Delta elimination, canonical representatives and the equivalence decision.

Two expressions are equivalent when one is obtained from the other by
permuting factors, adding or removing eliminable deltas and renaming bound
labels. Free labels are never renamed by ``equivalent``.
"""

import itertools
import logging
from collections import Counter
from dataclasses import dataclass
from typing import Callable

from tensorsys import config
from tensorsys.core import (
    Delta,
    EinsteinExpression,
    Factor,
    Label,
    LabelSupply,
    TensorSymbol,
    TensorSystemError,
    TypeName,
    factor_lower,
    factor_upper,
    free_labels,
)
from tensorsys.refine import PortGraph, canonical_order

logger = logging.getLogger(__name__)


class OracleBoundError(TensorSystemError):
    """Raised when the brute-force oracle is asked for a too large instance."""

    code = "oracle-bound-exceeded"
    exit_status = 5


@dataclass(frozen=True)
class FreeTensor:
    """Canonical representative of an equivalence class.

    Two equivalent expressions produce equal (field-by-field) FreeTensors.
    """

    symbols: tuple[TensorSymbol, ...]
    wires: tuple[tuple[Label, Label], ...]
    circles: tuple[tuple[TypeName, int], ...]
    free_lower: frozenset[Label]
    free_upper: frozenset[Label]

    def to_expression(self) -> EinsteinExpression:
        factors: list[Factor] = list(self.symbols)
        factors.extend(Delta(a, b) for a, b in self.wires)
        supply = LabelSupply().seeded(EinsteinExpression(tuple(factors)))
        for t, count in self.circles:
            for _ in range(count):
                label, supply = supply.fresh(t)
                factors.append(Delta(label, label))
        return EinsteinExpression(tuple(factors))


def _eliminate_one(factors: list[Factor]) -> list[Factor] | None:
    """Remove the first eliminable delta, or return None when reduced."""
    upper_at: dict[Label, int] = {}
    lower_at: dict[Label, int] = {}
    for i, factor in enumerate(factors):
        for label in factor_lower(factor):
            lower_at[label] = i
        for label in factor_upper(factor):
            upper_at[label] = i

    for i, factor in enumerate(factors):
        if not isinstance(factor, Delta) or factor.is_circle:
            continue
        a, b = factor.lower, factor.upper
        rest = factors[:i] + factors[i + 1:]
        j = upper_at.get(a)
        if j is not None and j != i:
            # E delta_a^b  ~>  E^[a -> b]
            rest[j if j < i else j - 1] = factors[j].renamed({}, {a: b})
            logger.debug(f"eliminated delta_{{{a}}}^{{{b}}} into upper {a} of factor {j}")
            return rest
        j = lower_at.get(b)
        if j is not None and j != i:
            # E delta_a^b  ~>  E_[b -> a]
            rest[j if j < i else j - 1] = factors[j].renamed({b: a}, {})
            logger.debug(f"eliminated delta_{{{a}}}^{{{b}}} into lower {b} of factor {j}")
            return rest
    return None


def delta_reduce(E: EinsteinExpression) -> EinsteinExpression:
    """Eliminate deltas until only bare wires and circles remain."""
    factors = list(E.factors)
    while True:
        reduced = _eliminate_one(factors)
        if reduced is None:
            return EinsteinExpression(tuple(factors))
        factors = reduced


def is_reduced(E: EinsteinExpression) -> bool:
    return _eliminate_one(list(E.factors)) is None


def _symbol_key(symbol: TensorSymbol) -> tuple:
    return (
        symbol.name,
        tuple(x.sort_key for x in symbol.lower),
        tuple(y.sort_key for y in symbol.upper),
    )


def _symbol_graph(
    symbols: tuple[TensorSymbol, ...],
    free: frozenset[Label],
    free_key: Callable[[Label], tuple],
) -> PortGraph:
    lower_at: dict[Label, tuple[int, int]] = {}
    upper_at: dict[Label, tuple[int, int]] = {}
    for i, symbol in enumerate(symbols):
        for p, label in enumerate(symbol.lower):
            lower_at[label] = (i, p)
        for p, label in enumerate(symbol.upper):
            upper_at[label] = (i, p)

    def endpoint(label: Label, opposite: dict[Label, tuple[int, int]]) -> tuple:
        if label in free:
            return (0, free_key(label))
        node, port = opposite[label]
        return (1, node, port)

    return PortGraph(
        colors=tuple(
            (s.name, tuple(x.type for x in s.lower), tuple(y.type for y in s.upper))
            for s in symbols
        ),
        ins=tuple(tuple(endpoint(x, upper_at) for x in s.lower) for s in symbols),
        outs=tuple(tuple(endpoint(y, lower_at) for y in s.upper) for s in symbols),
    )


def _split(E: EinsteinExpression) -> tuple[tuple[TensorSymbol, ...], list[Delta], Counter]:
    wires = [d for d in E.deltas if not d.is_circle]
    circles = Counter(d.lower.type for d in E.deltas if d.is_circle)
    return E.symbols, wires, circles


def canonical(E: EinsteinExpression) -> FreeTensor:
    """The canonical representative of E's equivalence class."""
    reduced = delta_reduce(E)
    lower, upper = free_labels(reduced)
    symbols, wires, circles = _split(reduced)

    order, _ = canonical_order(_symbol_graph(symbols, lower | upper, lambda x: x.sort_key))

    # bound labels are numbered in traversal order, from a supply that has
    # already stepped past any reserved free labels
    supply = LabelSupply().seeded(lower | upper)
    bound = reduced.bound_labels()
    rename: dict[Label, Label] = {}
    for node in order:
        for label in symbols[node].labels:
            if label in bound and label not in rename:
                rename[label], supply = supply.fresh(label.type)

    renamed = sorted((symbols[node].renamed(rename, rename) for node in order), key=_symbol_key)
    return FreeTensor(
        symbols=tuple(renamed),
        wires=tuple(
            sorted(
                ((d.lower, d.upper) for d in wires),
                key=lambda w: (w[0].sort_key, w[1].sort_key),
            )
        ),
        circles=tuple(sorted(circles.items())),
        free_lower=lower,
        free_upper=upper,
    )


def equivalent(E: EinsteinExpression, E2: EinsteinExpression) -> bool:
    return canonical(E) == canonical(E2)


def equivalent_up_to_free(E: EinsteinExpression, E2: EinsteinExpression) -> bool:
    """Equivalence allowing any type-preserving renaming of free labels.

    Lower free labels still go to lower free labels and upper to upper.
    """
    r1, r2 = delta_reduce(E), delta_reduce(E2)
    l1, u1 = free_labels(r1)
    l2, u2 = free_labels(r2)
    if Counter(x.type for x in l1) != Counter(x.type for x in l2):
        return False
    if Counter(y.type for y in u1) != Counter(y.type for y in u2):
        return False

    s1, w1, c1 = _split(r1)
    s2, w2, c2 = _split(r2)
    if c1 != c2 or Counter(d.lower.type for d in w1) != Counter(d.lower.type for d in w2):
        return False
    if len(s1) != len(s2):
        return False

    def anonymous(label: Label) -> tuple:
        return ("free", label.type)

    _, cert1 = canonical_order(_symbol_graph(s1, l1 | u1, anonymous))
    _, cert2 = canonical_order(_symbol_graph(s2, l2 | u2, anonymous))
    return cert1 == cert2


def _match_symbol(
    a: TensorSymbol,
    b: TensorSymbol,
    bound_a: set[Label],
    bound_b: set[Label],
    forward: dict[Label, Label],
    backward: dict[Label, Label],
) -> bool:
    if a.name != b.name or len(a.lower) != len(b.lower) or len(a.upper) != len(b.upper):
        return False
    for x, y in zip(a.labels, b.labels):
        if x in bound_a:
            if y not in bound_b or x.type != y.type:
                return False
            if forward.setdefault(x, y) != y or backward.setdefault(y, x) != x:
                return False
        elif x != y:
            return False
    return True


def oracle_equivalent(
    E: EinsteinExpression,
    E2: EinsteinExpression,
    max_factors: int | None = None,
    max_bound_labels: int | None = None,
) -> bool:
    """Brute-force equivalence: try every factor permutation.

    Inputs are delta-reduced first. For a fixed permutation the bound-label
    bijection is forced position by position, so trying all permutations
    covers all bijections.
    """
    max_factors = config.ORACLE_MAX_FACTORS if max_factors is None else max_factors
    max_bound_labels = (
        config.ORACLE_MAX_BOUND_LABELS if max_bound_labels is None else max_bound_labels
    )
    r1, r2 = delta_reduce(E), delta_reduce(E2)
    for r in (r1, r2):
        if len(r.factors) > max_factors:
            raise OracleBoundError(
                f"oracle bound exceeded: {len(r.factors)} factors (limit {max_factors})"
            )
        if len(r.bound_labels()) > max_bound_labels:
            raise OracleBoundError(
                f"oracle bound exceeded: {len(r.bound_labels())} bound labels "
                f"(limit {max_bound_labels})"
            )

    if free_labels(r1) != free_labels(r2):
        return False
    s1, w1, c1 = _split(r1)
    s2, w2, c2 = _split(r2)
    if c1 != c2 or Counter(w1) != Counter(w2) or len(s1) != len(s2):
        return False

    bound1, bound2 = r1.bound_labels(), r2.bound_labels()
    for perm in itertools.permutations(range(len(s2))):
        forward: dict[Label, Label] = {}
        backward: dict[Label, Label] = {}
        if all(
            _match_symbol(s1[i], s2[j], bound1, bound2, forward, backward)
            for i, j in enumerate(perm)
        ):
            return True
    return False
