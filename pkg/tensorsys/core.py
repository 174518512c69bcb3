"""Typed labels, tensor symbols, Einstein expressions and the free abstract
tensor system operations (product, contraction, relabelling, delta and the
fresh-label supply).

Expressions are immutable values. Nothing here quotients by equivalence;
``normal_form`` owns that.
"""

import logging
from collections import defaultdict
from dataclasses import dataclass
from typing import Iterable, Iterator, Literal, Mapping, NamedTuple

from tensorsys.config import RESERVED_PREFIX

logger = logging.getLogger(__name__)

TypeName = str
Side = Literal["lower", "upper"]


class TensorSystemError(Exception):
    """Base class for every error raised by tensorsys.

    ``code`` is the machine-readable name printed by the CLI and
    ``exit_status`` the process status it exits with.
    """

    code = "tensor-system-error"
    exit_status = 1


class LabelDisciplineError(TensorSystemError):
    """Raised when an expression breaks the once-or-lower/upper-pair rule."""

    code = "label-discipline"
    exit_status = 3


class UndeclaredSymbolError(TensorSystemError):
    """Raised when a tensor symbol is not declared by the alphabet."""

    code = "undeclared-symbol"
    exit_status = 3


class TypeMismatchError(TensorSystemError):
    """Raised when labels, ports or symbols disagree on types."""

    code = "type-mismatch"
    exit_status = 4


class LabelError(TensorSystemError):
    """Raised for missing, non-free, clashing or non-injective labels."""

    code = "label-error"
    exit_status = 4


@dataclass(frozen=True)
class Label:
    """An index name carrying its type.

    Named labels have a ``name``; canonical labels (``name is None``) are
    the triple (type, position, polarity) with polarity 0 for the input side
    and 1 for the output side.
    """

    type: TypeName
    name: str | None = None
    position: int = 0
    polarity: int = 0

    @classmethod
    def named(cls, name: str, type: TypeName) -> "Label":
        if not name:
            raise LabelError("label names must be nonempty")
        if not type:
            raise TypeMismatchError(f"label {name!r} needs a type")
        return cls(type=type, name=name)

    @classmethod
    def canonical(cls, type: TypeName, position: int, polarity: int) -> "Label":
        if position < 1:
            raise LabelError(f"canonical positions start at 1, got {position}")
        if polarity not in (0, 1):
            raise LabelError(f"canonical polarity must be 0 or 1, got {polarity}")
        return cls(type=type, position=position, polarity=polarity)

    @property
    def is_canonical(self) -> bool:
        return self.name is None

    @property
    def is_reserved(self) -> bool:
        return self.name is not None and self.name.startswith(RESERVED_PREFIX)

    @property
    def ident(self) -> tuple:
        """Identity used by the label discipline (the type is not part of it)."""
        if self.name is None:
            return ("canonical", self.type, self.position, self.polarity)
        return ("named", self.name)

    @property
    def sort_key(self) -> tuple:
        # canonical before named; canonical by (type, position, polarity)
        if self.name is None:
            return (0, self.type, self.position, self.polarity)
        return (1, self.name, self.type)

    def __lt__(self, other: "Label") -> bool:
        return self.sort_key < other.sort_key

    def __str__(self) -> str:
        if self.name is None:
            return f"@{self.type}.{self.position}.{self.polarity}"
        return self.name


def input_labels(types: Iterable[TypeName]) -> tuple[Label, ...]:
    """Canonical input labels x_1^(0) .. x_n^(0) for a list of types."""
    return tuple(Label.canonical(t, i, 0) for i, t in enumerate(types, 1))


def output_labels(types: Iterable[TypeName]) -> tuple[Label, ...]:
    """Canonical output labels y_1^(1) .. y_n^(1) for a list of types."""
    return tuple(Label.canonical(t, i, 1) for i, t in enumerate(types, 1))


@dataclass(frozen=True)
class TensorSymbol:
    """A tensor symbol with ordered lower and upper labels.

    Label order is significant: it is the symbol's port order.
    """

    name: str
    lower: tuple[Label, ...] = ()
    upper: tuple[Label, ...] = ()

    @property
    def labels(self) -> tuple[Label, ...]:
        return self.lower + self.upper

    def renamed(
        self, lower: Mapping[Label, Label], upper: Mapping[Label, Label]
    ) -> "TensorSymbol":
        return TensorSymbol(
            self.name,
            tuple(lower.get(x, x) for x in self.lower),
            tuple(upper.get(y, y) for y in self.upper),
        )


@dataclass(frozen=True)
class Delta:
    """The delta element with one lower and one upper label."""

    lower: Label
    upper: Label

    @property
    def labels(self) -> tuple[Label, ...]:
        return (self.lower, self.upper)

    @property
    def is_circle(self) -> bool:
        return self.lower == self.upper

    def renamed(
        self, lower: Mapping[Label, Label], upper: Mapping[Label, Label]
    ) -> "Delta":
        return Delta(lower.get(self.lower, self.lower), upper.get(self.upper, self.upper))


Factor = TensorSymbol | Delta


class Occurrence(NamedTuple):
    label: Label
    side: Side
    factor: int
    port: int


def factor_lower(factor: Factor) -> tuple[Label, ...]:
    return factor.lower if isinstance(factor, TensorSymbol) else (factor.lower,)


def factor_upper(factor: Factor) -> tuple[Label, ...]:
    return factor.upper if isinstance(factor, TensorSymbol) else (factor.upper,)


@dataclass(frozen=True)
class EinsteinExpression:
    """An ordered list of tensor symbols and delta elements."""

    factors: tuple[Factor, ...] = ()

    @classmethod
    def of(cls, *factors: Factor) -> "EinsteinExpression":
        return cls(tuple(factors))

    def __len__(self) -> int:
        return len(self.factors)

    def occurrences(self) -> Iterator[Occurrence]:
        for i, factor in enumerate(self.factors):
            for p, label in enumerate(factor_lower(factor)):
                yield Occurrence(label, "lower", i, p)
            for p, label in enumerate(factor_upper(factor)):
                yield Occurrence(label, "upper", i, p)

    @property
    def symbols(self) -> tuple[TensorSymbol, ...]:
        return tuple(f for f in self.factors if isinstance(f, TensorSymbol))

    @property
    def deltas(self) -> tuple[Delta, ...]:
        return tuple(f for f in self.factors if isinstance(f, Delta))

    def lower_labels(self) -> set[Label]:
        return {o.label for o in self.occurrences() if o.side == "lower"}

    def upper_labels(self) -> set[Label]:
        return {o.label for o in self.occurrences() if o.side == "upper"}

    def labels(self) -> set[Label]:
        return {o.label for o in self.occurrences()}

    def bound_labels(self) -> set[Label]:
        return self.lower_labels() & self.upper_labels()

    def map_labels(
        self, lower: Mapping[Label, Label], upper: Mapping[Label, Label]
    ) -> "EinsteinExpression":
        """Rename lower and upper occurrences simultaneously."""
        return EinsteinExpression(tuple(f.renamed(lower, upper) for f in self.factors))

    def validate(self, alphabet: "Alphabet | None" = None) -> "EinsteinExpression":
        """Check the label discipline (and the alphabet, when given).

        Returns the expression so calls can be chained.
        """
        by_ident: dict[tuple, set[Label]] = defaultdict(set)
        counts: dict[tuple[Label, Side], int] = defaultdict(int)
        for occ in self.occurrences():
            by_ident[occ.label.ident].add(occ.label)
            counts[(occ.label, occ.side)] += 1

        for variants in by_ident.values():
            if len(variants) > 1:
                label = min(variants)
                types = ", ".join(sorted(v.type for v in variants))
                raise TypeMismatchError(f"label {label} is used with types {types}")

        for (label, side), n in sorted(counts.items(), key=lambda kv: kv[0][0].sort_key):
            if n > 1:
                raise LabelDisciplineError(
                    f"label {label} occurs {n} times in {side} position"
                )

        for factor in self.factors:
            if isinstance(factor, Delta) and factor.lower.type != factor.upper.type:
                raise TypeMismatchError(
                    f"delta_{{{factor.lower}}}^{{{factor.upper}}} joins types "
                    f"{factor.lower.type} and {factor.upper.type}"
                )
            if isinstance(factor, TensorSymbol) and alphabet is not None:
                alphabet.check(factor)
        return self

    def is_valid(self, alphabet: "Alphabet | None" = None) -> bool:
        try:
            self.validate(alphabet)
        except TensorSystemError:
            return False
        return True


@dataclass(frozen=True)
class SymbolDeclaration:
    name: str
    inputs: tuple[TypeName, ...] = ()
    outputs: tuple[TypeName, ...] = ()


@dataclass(frozen=True)
class Alphabet:
    """Declared types and tensor symbols (name, input types, output types)."""

    types: tuple[TypeName, ...] = ()
    declarations: tuple[SymbolDeclaration, ...] = ()

    def __post_init__(self):
        if any(not t for t in self.types):
            raise TypeMismatchError("type names must be nonempty")
        if len(set(self.types)) != len(self.types):
            raise TypeMismatchError(f"duplicate type declaration in {list(self.types)}")
        names = [d.name for d in self.declarations]
        if len(set(names)) != len(names):
            raise LabelError(f"duplicate symbol declaration in {names}")
        known = set(self.types)
        for d in self.declarations:
            if d.name == "delta":
                raise LabelError("'delta' is reserved for delta elements")
            unknown = [t for t in d.inputs + d.outputs if t not in known]
            if unknown:
                raise TypeMismatchError(f"symbol {d.name} uses undeclared types {unknown}")

    def declaration(self, name: str) -> SymbolDeclaration:
        for d in self.declarations:
            if d.name == name:
                return d
        raise UndeclaredSymbolError(f"symbol {name!r} is not declared")

    def check(self, symbol: TensorSymbol) -> None:
        d = self.declaration(symbol.name)
        if len(symbol.lower) != len(d.inputs) or len(symbol.upper) != len(d.outputs):
            raise TypeMismatchError(
                f"{symbol.name} takes {len(d.inputs)} lower and {len(d.outputs)} upper "
                f"labels, got {len(symbol.lower)} and {len(symbol.upper)}"
            )
        got = (tuple(x.type for x in symbol.lower), tuple(y.type for y in symbol.upper))
        if got != (d.inputs, d.outputs):
            raise TypeMismatchError(
                f"{symbol.name} is declared {list(d.inputs)} -> {list(d.outputs)}, "
                f"used as {list(got[0])} -> {list(got[1])}"
            )

    def instance(self, name: str) -> TensorSymbol:
        """The canonically labelled symbol psi_{x^(0)}^{y^(1)}."""
        d = self.declaration(name)
        return TensorSymbol(name, input_labels(d.inputs), output_labels(d.outputs))


def _fresh_name(prefix: str, t: TypeName, n: int) -> str:
    # a separator keeps "A1" #1 and "A" #11 apart
    sep = "_" if t[-1:].isdigit() else ""
    return f"{prefix}{t}{sep}{n}"


def _issued_index(prefix: str, label: Label) -> int:
    """The counter value a supply would have used to emit ``label``, or 0."""
    if label.name is None:
        return 0
    head = prefix + label.type + ("_" if label.type[-1:].isdigit() else "")
    rest = label.name[len(head):]
    if label.name.startswith(head) and rest.isdigit():
        return int(rest)
    return 0


@dataclass(frozen=True)
class LabelSupply:
    """Deterministic source of fresh labels in the reserved namespace.

    A supply is a value: ``fresh`` returns the label and the advanced supply.
    """

    counters: tuple[tuple[TypeName, int], ...] = ()
    prefix: str = RESERVED_PREFIX

    def issued(self, t: TypeName) -> int:
        return dict(self.counters).get(t, 0)

    def _with(self, t: TypeName, n: int) -> "LabelSupply":
        counters = dict(self.counters)
        counters[t] = n
        return LabelSupply(tuple(sorted(counters.items())), self.prefix)

    def fresh(self, t: TypeName) -> tuple[Label, "LabelSupply"]:
        n = self.issued(t) + 1
        return Label.named(_fresh_name(self.prefix, t, n), t), self._with(t, n)

    def fresh_many(self, types: Iterable[TypeName]) -> tuple[tuple[Label, ...], "LabelSupply"]:
        labels = []
        supply = self
        for t in types:
            label, supply = supply.fresh(t)
            labels.append(label)
        return tuple(labels), supply

    def seeded(self, *sources: "EinsteinExpression | Iterable[Label]") -> "LabelSupply":
        """Advance past every reserved label found in ``sources``."""
        counters = dict(self.counters)
        for source in sources:
            labels = source.labels() if isinstance(source, EinsteinExpression) else source
            for label in labels:
                n = _issued_index(self.prefix, label)
                if n > counters.get(label.type, 0):
                    counters[label.type] = n
        return LabelSupply(tuple(sorted(counters.items())), self.prefix)


def fresh(s: LabelSupply, t: TypeName) -> tuple[Label, LabelSupply]:
    return s.fresh(t)


@dataclass(frozen=True)
class Relabelling:
    """A finite, injective, type-preserving partial map on labels."""

    pairs: tuple[tuple[Label, Label], ...] = ()

    def __post_init__(self):
        sources = [a for a, _ in self.pairs]
        if len(set(sources)) != len(sources):
            raise LabelError("a relabelling maps each label at most once")
        targets = [b for _, b in self.pairs]
        if len(set(targets)) != len(targets):
            clash = sorted({b for b in targets if targets.count(b) > 1})
            raise LabelError(f"relabelling is not injective: {', '.join(map(str, clash))}")
        for a, b in self.pairs:
            if a.type != b.type:
                raise TypeMismatchError(f"relabelling {a} -> {b} changes type {a.type} to {b.type}")

    @classmethod
    def of(cls, mapping: Mapping[Label, Label]) -> "Relabelling":
        return cls(tuple(sorted(mapping.items(), key=lambda kv: kv[0].sort_key)))

    @property
    def mapping(self) -> dict[Label, Label]:
        return dict(self.pairs)

    @property
    def domain(self) -> frozenset[Label]:
        return frozenset(a for a, _ in self.pairs)

    @property
    def codomain(self) -> frozenset[Label]:
        return frozenset(b for _, b in self.pairs)

    def __call__(self, label: Label) -> Label:
        return self.mapping.get(label, label)

    def then(self, g: "Relabelling") -> "Relabelling":
        """The composite g after self."""
        f = self.mapping
        composite = {a: g(b) for a, b in f.items()}
        for a, b in g.pairs:
            if a not in f.values() and a not in f:
                composite[a] = b
        return Relabelling.of({a: b for a, b in composite.items() if a != b})

    def restricted(self, labels: Iterable[Label]) -> "Relabelling":
        keep = set(labels)
        return Relabelling(tuple((a, b) for a, b in self.pairs if a in keep))


def free_labels(E: EinsteinExpression) -> tuple[frozenset[Label], frozenset[Label]]:
    """Non-repeated labels of E, split into (lower, upper)."""
    lower, upper = E.lower_labels(), E.upper_labels()
    return frozenset(lower - upper), frozenset(upper - lower)


def _fmt(labels: Iterable[Label]) -> str:
    return ", ".join(str(x) for x in sorted(labels))


def product(
    E: EinsteinExpression, E2: EinsteinExpression, s: LabelSupply | None = None
) -> EinsteinExpression:
    """Juxtapose two expressions with disjoint free labels.

    Bound labels that would collide are renamed with fresh labels from ``s``.
    """
    l1, u1 = free_labels(E)
    l2, u2 = free_labels(E2)
    clash = (l1 | u1) & (l2 | u2)
    if clash:
        raise LabelError(f"free labels shared by both operands: {_fmt(clash)}")

    supply = (s or LabelSupply()).seeded(E, E2)
    left_labels = E.labels()
    rename_right: dict[Label, Label] = {}
    for b in sorted(E2.bound_labels()):
        if b in left_labels:
            rename_right[b], supply = supply.fresh(b.type)
    rename_left: dict[Label, Label] = {}
    for b in sorted(E.bound_labels()):
        if b in l2 | u2:
            rename_left[b], supply = supply.fresh(b.type)

    if rename_left or rename_right:
        logger.debug(
            f"product renamed bound labels left={_fmt(rename_left)} right={_fmt(rename_right)}"
        )
    left = E.map_labels(rename_left, rename_left)
    right = E2.map_labels(rename_right, rename_right)
    return EinsteinExpression(left.factors + right.factors)


def contract(E: EinsteinExpression, a: Label, b: Label) -> EinsteinExpression:
    """Contract free lower ``a`` with free upper ``b`` by renaming b to a."""
    lower, upper = free_labels(E)
    if a not in lower:
        raise LabelError(f"{a} is not a free lower label")
    if b not in upper:
        raise LabelError(f"{b} is not a free upper label")
    if a.type != b.type:
        raise TypeMismatchError(f"cannot contract {a}:{a.type} with {b}:{b.type}")
    return E.map_labels({}, {b: a})


def relabel(
    E: EinsteinExpression, f: Relabelling | Mapping[Label, Label], s: LabelSupply | None = None
) -> EinsteinExpression:
    """Rename free labels by ``f``; bound labels hit by cod(f) become fresh."""
    if not isinstance(f, Relabelling):
        f = Relabelling.of(f)
    lower, upper = free_labels(E)
    free = lower | upper
    not_free = f.domain - free
    if not_free:
        raise LabelError(f"relabelling touches labels that are not free: {_fmt(not_free)}")
    untouched = free - f.domain
    collision = f.codomain & untouched
    if collision:
        raise LabelError(f"relabelling collides with free labels: {_fmt(collision)}")

    supply = (s or LabelSupply()).seeded(E, f.codomain)
    mapping = f.mapping
    for b in sorted(E.bound_labels()):
        if b in f.codomain:
            mapping[b], supply = supply.fresh(b.type)
    return E.map_labels(mapping, mapping)


def delta(a: Label, b: Label) -> EinsteinExpression:
    """The single-factor expression delta_a^b (a circle when a == b)."""
    if a.type != b.type:
        raise TypeMismatchError(f"delta joins types {a.type} and {b.type}")
    return EinsteinExpression((Delta(a, b),))
