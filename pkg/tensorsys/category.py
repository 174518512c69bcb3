"""The strict traced symmetric monoidal category of free tensors.

Objects are lists of types. A morphism X -> Y is a canonical free tensor
whose free lower labels are the canonical input labels of X and whose free
upper labels are the canonical output labels of Y. Morphism equality is
expression equivalence of the bodies.
"""

import logging
from dataclasses import dataclass
from typing import Iterable, Sequence

from tensorsys.core import (
    Alphabet,
    Delta,
    EinsteinExpression,
    Label,
    LabelError,
    LabelSupply,
    TensorSymbol,
    TensorSystemError,
    TypeMismatchError,
    TypeName,
    contract,
    free_labels,
    input_labels,
    output_labels,
    product,
    relabel,
)
from tensorsys.normal_form import FreeTensor, canonical, delta_reduce

logger = logging.getLogger(__name__)


class ObjectMismatchError(TensorSystemError):
    """Raised when domains and codomains do not line up."""

    code = "object-mismatch"
    exit_status = 4


@dataclass(frozen=True)
class ObjectList:
    """An object: an ordered list of types. Tensor is concatenation."""

    types: tuple[TypeName, ...] = ()

    @classmethod
    def of(cls, *types: TypeName) -> "ObjectList":
        return cls(tuple(types))

    def __add__(self, other: "ObjectList") -> "ObjectList":
        return ObjectList(self.types + other.types)

    def __len__(self) -> int:
        return len(self.types)

    def __iter__(self):
        return iter(self.types)

    def __getitem__(self, index):
        if isinstance(index, slice):
            return ObjectList(self.types[index])
        return self.types[index]

    def __str__(self) -> str:
        return "[" + ", ".join(self.types) + "]"

    def inputs(self) -> tuple[Label, ...]:
        return input_labels(self.types)

    def outputs(self) -> tuple[Label, ...]:
        return output_labels(self.types)


def _objects(X: ObjectList | Iterable[TypeName]) -> ObjectList:
    return X if isinstance(X, ObjectList) else ObjectList(tuple(X))


@dataclass(frozen=True)
class Morphism:
    dom: ObjectList
    cod: ObjectList
    body: FreeTensor

    def __post_init__(self):
        if self.body.free_lower != frozenset(self.dom.inputs()):
            raise ObjectMismatchError(
                f"free lower labels {sorted(str(x) for x in self.body.free_lower)} "
                f"are not the canonical inputs of {self.dom}"
            )
        if self.body.free_upper != frozenset(self.cod.outputs()):
            raise ObjectMismatchError(
                f"free upper labels {sorted(str(y) for y in self.body.free_upper)} "
                f"are not the canonical outputs of {self.cod}"
            )

    @classmethod
    def from_expression(
        cls, E: EinsteinExpression, dom: ObjectList | Iterable[TypeName], cod: ObjectList | Iterable[TypeName]
    ) -> "Morphism":
        return cls(_objects(dom), _objects(cod), canonical(E.validate()))

    def expression(self) -> EinsteinExpression:
        return self.body.to_expression()

    def __str__(self) -> str:
        return f"{self.dom} -> {self.cod}"


def _shift(E: EinsteinExpression, m: int, n: int, s: LabelSupply | None = None) -> EinsteinExpression:
    """Move canonical inputs up by m positions and canonical outputs by n."""
    lower, upper = free_labels(E)
    mapping = {}
    for label in lower | upper:
        if label.is_canonical:
            step = m if label.polarity == 0 else n
            mapping[label] = Label.canonical(label.type, label.position + step, label.polarity)
    return relabel(E, mapping, s)


def compose(g: Morphism, f: Morphism, s: LabelSupply | None = None) -> Morphism:
    """g after f: f's outputs are joined to g's inputs through fresh labels."""
    if f.cod != g.dom:
        raise ObjectMismatchError(f"cannot compose: cod(f) = {f.cod} but dom(g) = {g.dom}")
    F, G = f.expression(), g.expression()
    supply = (s or LabelSupply()).seeded(F, G)
    joins, supply = supply.fresh_many(f.cod)
    ends, supply = supply.fresh_many(g.dom)

    F = relabel(F, dict(zip(f.cod.outputs(), joins)), supply)
    G = relabel(G, dict(zip(g.dom.inputs(), ends)), supply)
    E = product(F, G, supply)
    for a, b in zip(ends, joins):
        E = contract(E, a, b)
    return Morphism.from_expression(E, f.dom, g.cod)


def mtensor(f: Morphism, g: Morphism, s: LabelSupply | None = None) -> Morphism:
    """f tensor g: g's canonical labels are shifted past f's."""
    G = _shift(g.expression(), len(f.dom), len(f.cod), s)
    return Morphism.from_expression(product(f.expression(), G, s), f.dom + g.dom, f.cod + g.cod)


def tensor_all(morphisms: Sequence[Morphism], s: LabelSupply | None = None) -> Morphism:
    result = identity(ObjectList())
    for m in morphisms:
        result = mtensor(result, m, s)
    return result


def identity(X: ObjectList | Iterable[TypeName]) -> Morphism:
    X = _objects(X)
    wires = tuple(Delta(a, b) for a, b in zip(X.inputs(), X.outputs()))
    return Morphism.from_expression(EinsteinExpression(wires), X, X)


def symmetry(X: ObjectList | Iterable[TypeName], Y: ObjectList | Iterable[TypeName]) -> Morphism:
    """sigma_{X,Y}: XY -> YX."""
    X, Y = _objects(X), _objects(Y)
    m, n = len(X), len(Y)
    wires = [
        Delta(Label.canonical(t, i, 0), Label.canonical(t, n + i, 1))
        for i, t in enumerate(X, 1)
    ]
    wires.extend(
        Delta(Label.canonical(t, m + j, 0), Label.canonical(t, j, 1))
        for j, t in enumerate(Y, 1)
    )
    return Morphism.from_expression(EinsteinExpression(tuple(wires)), X + Y, Y + X)


def permutation(X: ObjectList | Iterable[TypeName], perm: Sequence[int]) -> Morphism:
    """The wiring whose output k is input perm[k] (0-based)."""
    X = _objects(X)
    if sorted(perm) != list(range(len(X))):
        raise ObjectMismatchError(f"{list(perm)} is not a permutation of {len(X)} objects")
    cod = ObjectList(tuple(X[p] for p in perm))
    wires = tuple(
        Delta(Label.canonical(X[p], p + 1, 0), Label.canonical(X[p], k + 1, 1))
        for k, p in enumerate(perm)
    )
    return Morphism.from_expression(EinsteinExpression(wires), X, cod)


def _adjacent_swap(objects: Sequence[TypeName], k: int) -> Morphism:
    """id ⊗ sigma_{A,B} ⊗ id swapping positions k and k+1."""
    objects = tuple(objects)
    return tensor_all(
        [
            identity(objects[:k]),
            symmetry([objects[k]], [objects[k + 1]]),
            identity(objects[k + 2:]),
        ]
    )


def block_symmetry(X: ObjectList | Iterable[TypeName], i: int) -> Morphism:
    """sigma_{X:i}: moves object i (0-based) to the end, keeping the rest in order.

    Built as a composite of adjacent transpositions.
    """
    X = _objects(X)
    if not 0 <= i < len(X):
        raise ObjectMismatchError(f"no object {i} in {X}")
    current = list(X)
    result = identity(X)
    for k in range(i, len(X) - 1):
        result = compose(_adjacent_swap(current, k), result)
        current[k], current[k + 1] = current[k + 1], current[k]
    return result


def block_symmetry_inverse(X: ObjectList | Iterable[TypeName], i: int) -> Morphism:
    """The inverse of sigma_{X:i}: moves the last object back to position i."""
    X = _objects(X)
    if not 0 <= i < len(X):
        raise ObjectMismatchError(f"no object {i} in {X}")
    current = list(X[:i]) + list(X[i + 1:]) + [X[i]]
    result = identity(current)
    for k in range(len(X) - 2, i - 1, -1):
        result = compose(_adjacent_swap(current, k), result)
        current[k], current[k + 1] = current[k + 1], current[k]
    return result


def trace(f: Morphism, X: ObjectList | Iterable[TypeName], s: LabelSupply | None = None) -> Morphism:
    """Tr^X(f) for f: UX -> VX; the trailing |X| inputs and outputs are joined."""
    X = _objects(X)
    k = len(X)
    if k == 0:
        return f
    if len(f.dom) < k or len(f.cod) < k or f.dom[len(f.dom) - k:] != X or f.cod[len(f.cod) - k:] != X:
        raise ObjectMismatchError(f"cannot trace {X} out of {f}")
    m, n = len(f.dom) - k, len(f.cod) - k

    E = f.expression()
    supply = (s or LabelSupply()).seeded(E)
    loops, supply = supply.fresh_many(X)
    E = relabel(E, {Label.canonical(t, m + i, 0): x for i, (t, x) in enumerate(zip(X, loops), 1)}, supply)
    for i, (t, x) in enumerate(zip(X, loops), 1):
        E = contract(E, x, Label.canonical(t, n + i, 1))
    return Morphism.from_expression(E, f.dom[:m], f.cod[:n])


@dataclass(frozen=True)
class LabelledMorphism:
    """A morphism whose input and output positions carry names."""

    base: Morphism
    in_labels: tuple[Label, ...] = ()
    out_labels: tuple[Label, ...] = ()

    def __post_init__(self):
        if len(self.in_labels) != len(self.base.dom) or len(self.out_labels) != len(self.base.cod):
            raise LabelError(
                f"{len(self.in_labels)} in-labels and {len(self.out_labels)} out-labels "
                f"for a morphism {self.base}"
            )
        labels = self.in_labels + self.out_labels
        if len(set(labels)) != len(labels):
            raise LabelError("in-labels and out-labels must be distinct")
        for label, t in zip(self.in_labels, self.base.dom):
            if label.type != t:
                raise TypeMismatchError(f"in-label {label}:{label.type} on an input of type {t}")
        for label, t in zip(self.out_labels, self.base.cod):
            if label.type != t:
                raise TypeMismatchError(f"out-label {label}:{label.type} on an output of type {t}")

    def tensor(self, s: LabelSupply | None = None) -> EinsteinExpression:
        """The labelled tensor psi_{in}^{out}."""
        mapping = dict(zip(self.base.dom.inputs(), self.in_labels))
        mapping.update(zip(self.base.cod.outputs(), self.out_labels))
        return relabel(self.base.expression(), mapping, s)

    @classmethod
    def from_tensor(
        cls,
        E: EinsteinExpression,
        in_labels: Sequence[Label],
        out_labels: Sequence[Label],
        s: LabelSupply | None = None,
    ) -> "LabelledMorphism":
        in_labels, out_labels = tuple(in_labels), tuple(out_labels)
        lower, upper = free_labels(E.validate())
        if lower != frozenset(in_labels) or upper != frozenset(out_labels):
            raise LabelError(
                "in/out labels must be exactly the free lower/upper labels "
                f"{sorted(str(x) for x in lower)} / {sorted(str(y) for y in upper)}"
            )
        dom = ObjectList(tuple(x.type for x in in_labels))
        cod = ObjectList(tuple(y.type for y in out_labels))
        mapping = dict(zip(in_labels, dom.inputs()))
        mapping.update(zip(out_labels, cod.outputs()))
        return cls(Morphism.from_expression(relabel(E, mapping, s), dom, cod), in_labels, out_labels)


def _positions(lm: LabelledMorphism, i: Label, j: Label) -> tuple[int, int]:
    if i not in lm.in_labels:
        raise LabelError(f"{i} is not an in-label")
    if j not in lm.out_labels:
        raise LabelError(f"{j} is not an out-label")
    a, b = lm.in_labels.index(i), lm.out_labels.index(j)
    if lm.base.dom[a] != lm.base.cod[b]:
        raise TypeMismatchError(f"cannot contract {i}:{lm.base.dom[a]} with {j}:{lm.base.cod[b]}")
    return a, b


def _without(labels: tuple[Label, ...], k: int) -> tuple[Label, ...]:
    return labels[:k] + labels[k + 1:]


def trace_contraction(
    lm: LabelledMorphism, i: Label, j: Label, s: LabelSupply | None = None
) -> LabelledMorphism:
    """C_i^j(f) = Tr(sigma_{Y:j} . f . sigma_{X:i}^-1)."""
    a, b = _positions(lm, i, j)
    f = lm.base
    moved = compose(block_symmetry(f.cod, b), compose(f, block_symmetry_inverse(f.dom, a), s), s)
    traced = trace(moved, [f.dom[a]], s)
    logger.debug(f"trace contraction of {i} with {j} on {f}")
    return LabelledMorphism(traced, _without(lm.in_labels, a), _without(lm.out_labels, b))


def contract_labelled(
    lm: LabelledMorphism, i: Label, j: Label, s: LabelSupply | None = None
) -> LabelledMorphism:
    """The same contraction computed on the labelled tensor."""
    a, b = _positions(lm, i, j)
    E = contract(lm.tensor(s), i, j)
    return LabelledMorphism.from_tensor(E, _without(lm.in_labels, a), _without(lm.out_labels, b), s)


def labelled_product(parts: Sequence[LabelledMorphism], s: LabelSupply | None = None) -> LabelledMorphism:
    in_labels = tuple(x for p in parts for x in p.in_labels)
    out_labels = tuple(y for p in parts for y in p.out_labels)
    labels = in_labels + out_labels
    if len(set(labels)) != len(labels):
        clash = sorted({str(x) for x in labels if labels.count(x) > 1})
        raise LabelError(f"label collision between parts: {', '.join(clash)}")
    return LabelledMorphism(tensor_all([p.base for p in parts], s), in_labels, out_labels)


def cnf(
    parts: Sequence[LabelledMorphism],
    pairs: Sequence[tuple[Label, Label]],
    s: LabelSupply | None = None,
) -> LabelledMorphism:
    """Contraction normal form: the product of ``parts``, then each pair contracted in order."""
    used = [x for pair in pairs for x in pair]
    if len(set(used)) != len(used):
        raise LabelError("contraction pairs must use distinct labels")
    result = labelled_product(parts, s)
    for i, j in pairs:
        result = trace_contraction(result, i, j, s)
    return result


def pinned_form(
    E: EinsteinExpression,
    lower: Sequence[Label] | None = None,
    upper: Sequence[Label] | None = None,
    s: LabelSupply | None = None,
) -> EinsteinExpression:
    """E rewritten as deltas followed by symbols carrying no free labels.

    Every free label on a symbol is moved onto a delta joining it to a fresh
    label, lower ones in ``lower`` order and upper ones in ``upper`` order.
    The result is equivalent to E.
    """
    E = delta_reduce(E.validate())
    free_lower, free_upper = free_labels(E)
    lower = sorted(free_lower) if lower is None else list(lower)
    upper = sorted(free_upper) if upper is None else list(upper)
    if set(lower) != free_lower or set(upper) != free_upper:
        raise LabelError("pinned form needs an ordering of exactly the free labels")

    supply = (s or LabelSupply()).seeded(E)
    on_symbols = {x for sym in E.symbols for x in sym.labels}
    pins: dict[Label, Label] = {}
    heads: list[Delta] = []
    tails: list[Delta] = []
    for x in lower:
        if x in on_symbols:
            pins[x], supply = supply.fresh(x.type)
            heads.append(Delta(x, pins[x]))
    for y in upper:
        if y in on_symbols:
            pins[y], supply = supply.fresh(y.type)
            tails.append(Delta(pins[y], y))

    bare = [d for d in E.deltas if not d.is_circle]
    circles = [d for d in E.deltas if d.is_circle]
    symbols = [sym.renamed(pins, pins) for sym in E.symbols]
    return EinsteinExpression(tuple(heads + bare + tails + symbols + circles))


def generator(alphabet: Alphabet, name: str) -> Morphism:
    """The morphism of a single canonically labelled symbol."""
    d = alphabet.declaration(name)
    return Morphism.from_expression(
        EinsteinExpression((alphabet.instance(name),)), ObjectList(d.inputs), ObjectList(d.outputs)
    )


def morphism_of(symbol: TensorSymbol) -> Morphism:
    """A symbol occurrence read as a morphism, by its label types."""
    dom = ObjectList(tuple(x.type for x in symbol.lower))
    cod = ObjectList(tuple(y.type for y in symbol.upper))
    instance = TensorSymbol(symbol.name, dom.inputs(), cod.outputs())
    return Morphism.from_expression(EinsteinExpression((instance,)), dom, cod)
