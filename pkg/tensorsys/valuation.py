"""Monoidal signatures, concrete tensors and evaluation under a valuation.

Concrete tensors are dense numpy object arrays of ``Fraction`` entries with
axes ordered lower indices first, then upper indices. All arithmetic is
exact.
"""

import json
import logging
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

import numpy as np

from tensorsys.category import Morphism, ObjectList, pinned_form
from tensorsys.core import (
    Alphabet,
    Delta,
    EinsteinExpression,
    Label,
    LabelError,
    LabelSupply,
    SymbolDeclaration,
    TensorSymbol,
    TensorSystemError,
    TypeName,
    factor_lower,
    factor_upper,
    free_labels,
)
from tensorsys.diagram import boundary_order

logger = logging.getLogger(__name__)

# np.einsum sublists accept integer subscripts 0..51
MAX_EINSUM_LABELS = 52


class ValuationError(TensorSystemError):
    """Raised for missing assignments, bad dimensions and bad tensor literals."""

    code = "valuation-error"
    exit_status = 4


@dataclass(frozen=True)
class SignatureMorphism:
    name: str
    dom: ObjectList
    cod: ObjectList


@dataclass(frozen=True)
class Signature:
    """A strict monoidal signature: objects plus morphism symbols with
    lists of objects as domain and codomain."""

    objects: frozenset[TypeName] = frozenset()
    morphisms: tuple[SignatureMorphism, ...] = ()

    def __post_init__(self):
        names = [m.name for m in self.morphisms]
        if len(set(names)) != len(names):
            raise ValuationError(f"duplicate morphism symbols in {names}")
        for m in self.morphisms:
            unknown = sorted((set(m.dom) | set(m.cod)) - self.objects)
            if unknown:
                raise ValuationError(f"morphism {m.name} uses unknown objects {unknown}")

    @classmethod
    def from_alphabet(cls, alphabet: Alphabet) -> "Signature":
        return cls(
            frozenset(alphabet.types),
            tuple(
                SignatureMorphism(d.name, ObjectList(d.inputs), ObjectList(d.outputs))
                for d in alphabet.declarations
            ),
        )

    def alphabet(self) -> Alphabet:
        return Alphabet(
            tuple(sorted(self.objects)),
            tuple(SymbolDeclaration(m.name, m.dom.types, m.cod.types) for m in self.morphisms),
        )

    def lookup(self, name: str) -> SignatureMorphism:
        for m in self.morphisms:
            if m.name == name:
                return m
        raise ValuationError(f"{name!r} is not a morphism of the signature")


def _fraction(value: Any) -> Fraction:
    if isinstance(value, Fraction):
        return value
    if isinstance(value, np.integer):
        return Fraction(int(value))
    if isinstance(value, bool) or isinstance(value, float):
        raise ValuationError(f"tensor entries must be exact rationals, got {value!r}")
    try:
        return Fraction(value)
    except (TypeError, ValueError, ZeroDivisionError) as e:
        raise ValuationError(f"bad rational entry {value!r}") from e


def _fraction_array(values: Any, shape: tuple[int, ...]) -> np.ndarray:
    flat_in = np.asarray(values, dtype=object).reshape(-1)
    size = int(np.prod(shape, dtype=np.int64))
    if flat_in.size != size:
        raise ValuationError(f"{flat_in.size} entries for a tensor of shape {shape}")
    flat = np.empty(size, dtype=object)
    flat[:] = [_fraction(x) for x in flat_in]
    array = flat.reshape(shape)
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class ConcreteTensor:
    """An indexed family of rationals psi_{i1..im}^{j1..jn}."""

    lower_dims: tuple[int, ...]
    upper_dims: tuple[int, ...]
    entries: np.ndarray

    def __post_init__(self):
        lower, upper = tuple(self.lower_dims), tuple(self.upper_dims)
        for d in lower + upper:
            if not isinstance(d, (int, np.integer)) or d < 1:
                raise ValuationError(f"dimensions must be positive integers, got {d!r}")
        object.__setattr__(self, "lower_dims", tuple(int(d) for d in lower))
        object.__setattr__(self, "upper_dims", tuple(int(d) for d in upper))
        object.__setattr__(self, "entries", _fraction_array(self.entries, self.shape))

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(self.lower_dims) + tuple(self.upper_dims)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, ConcreteTensor):
            return NotImplemented
        return (
            self.lower_dims == other.lower_dims
            and self.upper_dims == other.upper_dims
            and bool(np.array_equal(self.entries, other.entries))
        )

    __hash__ = None

    @classmethod
    def from_flat(cls, lower: Sequence[int], upper: Sequence[int], values: Iterable[Any]) -> "ConcreteTensor":
        """Entries listed in row-major order over (lower..., upper...)."""
        return cls(tuple(lower), tuple(upper), list(values))

    @classmethod
    def scalar(cls, value: Any = 1) -> "ConcreteTensor":
        return cls((), (), value)

    def flat(self) -> list[Fraction]:
        return list(self.entries.reshape(-1))

    def to_json(self) -> dict:
        return {
            "lower": list(self.lower_dims),
            "upper": list(self.upper_dims),
            "entries": [str(x) for x in self.flat()],
        }

    @classmethod
    def from_json(cls, data: Any) -> "ConcreteTensor":
        if not isinstance(data, dict) or set(data) != {"lower", "upper", "entries"}:
            raise ValuationError("a tensor literal needs exactly lower, upper and entries")
        if not isinstance(data["entries"], list):
            raise ValuationError("tensor entries must be a list")
        for key in ("lower", "upper"):
            if not isinstance(data[key], list):
                raise ValuationError(f"tensor {key} dims must be a list")
        for x in data["entries"]:
            if not isinstance(x, (str, int)) or isinstance(x, bool):
                raise ValuationError(f"tensor entries are rationals written as 'p/q', got {x!r}")
        return cls.from_flat(data["lower"], data["upper"], data["entries"])


def cproduct(t: ConcreteTensor, u: ConcreteTensor) -> ConcreteTensor:
    """Pointwise product over the concatenated index sets."""
    a, b = len(t.lower_dims), len(t.upper_dims)
    c, d = len(u.lower_dims), len(u.upper_dims)
    outer = np.asarray(np.multiply.outer(t.entries, u.entries), dtype=object)
    axes = (
        list(range(a))
        + list(range(a + b, a + b + c))
        + list(range(a, a + b))
        + list(range(a + b + c, a + b + c + d))
    )
    return ConcreteTensor(
        t.lower_dims + u.lower_dims,
        t.upper_dims + u.upper_dims,
        np.transpose(outer, axes),
    )


ctensor = cproduct


def ccontract(t: ConcreteTensor, lower_pos: int, upper_pos: int) -> ConcreteTensor:
    """Sum the diagonal of lower index ``lower_pos`` and upper index ``upper_pos`` (0-based)."""
    m, n = len(t.lower_dims), len(t.upper_dims)
    if not 0 <= lower_pos < m or not 0 <= upper_pos < n:
        raise ValuationError(f"cannot contract positions ({lower_pos}, {upper_pos}) of a {m},{n} tensor")
    if t.lower_dims[lower_pos] != t.upper_dims[upper_pos]:
        raise ValuationError(
            f"dimension mismatch: lower {lower_pos} has {t.lower_dims[lower_pos]}, "
            f"upper {upper_pos} has {t.upper_dims[upper_pos]}"
        )
    traced = np.trace(t.entries, axis1=lower_pos, axis2=m + upper_pos)
    lower = t.lower_dims[:lower_pos] + t.lower_dims[lower_pos + 1:]
    upper = t.upper_dims[:upper_pos] + t.upper_dims[upper_pos + 1:]
    return ConcreteTensor(lower, upper, traced)


def cdelta(D: int) -> ConcreteTensor:
    return ConcreteTensor((D,), (D,), np.eye(D, dtype=np.int64))


def cidentity(dims: Sequence[int]) -> ConcreteTensor:
    result = ConcreteTensor.scalar(1)
    for d in dims:
        result = cproduct(result, cdelta(d))
    return result


def ccompose(g: ConcreteTensor, f: ConcreteTensor) -> ConcreteTensor:
    """g after f: f's upper indices summed against g's lower indices."""
    if f.upper_dims != g.lower_dims:
        raise ValuationError(f"cannot compose {f.upper_dims} outputs with {g.lower_dims} inputs")
    m = len(f.lower_dims)
    result = cproduct(f, g)
    for k in reversed(range(len(f.upper_dims))):
        result = ccontract(result, m + k, k)
    return result


def cpermute(dims: Sequence[int], perm: Sequence[int]) -> ConcreteTensor:
    """The permutation tensor whose output k is input perm[k]."""
    dims = tuple(dims)
    if sorted(perm) != list(range(len(dims))):
        raise ValuationError(f"{list(perm)} is not a permutation of {len(dims)} indices")
    upper = tuple(dims[p] for p in perm)
    entries = np.zeros(dims + upper, dtype=np.int64)
    for index in np.ndindex(*dims):
        entries[index + tuple(index[p] for p in perm)] = 1
    return ConcreteTensor(dims, upper, entries)


def csymmetry(xs: Sequence[int], ys: Sequence[int]) -> ConcreteTensor:
    m, n = len(xs), len(ys)
    return cpermute(tuple(xs) + tuple(ys), list(range(m, m + n)) + list(range(m)))


def cpartial_trace(t: ConcreteTensor, k: int) -> ConcreteTensor:
    """Join the last k lower indices with the last k upper indices pairwise."""
    if k > len(t.lower_dims) or k > len(t.upper_dims):
        raise ValuationError(f"cannot trace {k} indices of a {len(t.lower_dims)},{len(t.upper_dims)} tensor")
    for _ in range(k):
        t = ccontract(t, len(t.lower_dims) - 1, len(t.upper_dims) - 1)
    return t


@dataclass(frozen=True)
class Valuation:
    """Dimensions per type and a concrete tensor per assigned symbol."""

    signature: Signature
    dims: Mapping[TypeName, int] = field(default_factory=dict)
    tensors: Mapping[str, ConcreteTensor] = field(default_factory=dict)

    def __post_init__(self):
        for t, d in self.dims.items():
            if t not in self.signature.objects:
                raise ValuationError(f"dimension given for undeclared type {t}")
            if not isinstance(d, int) or isinstance(d, bool) or d < 1:
                raise ValuationError(f"dimension of {t} must be a positive integer, got {d!r}")
        for name, tensor in self.tensors.items():
            m = self.signature.lookup(name)
            expected = (
                tuple(self.dim(t) for t in m.dom),
                tuple(self.dim(t) for t in m.cod),
            )
            if (tensor.lower_dims, tensor.upper_dims) != expected:
                raise ValuationError(
                    f"{name} needs dims {list(expected[0])} -> {list(expected[1])}, "
                    f"got {list(tensor.lower_dims)} -> {list(tensor.upper_dims)}"
                )

    def dim(self, t: TypeName) -> int:
        try:
            return self.dims[t]
        except KeyError:
            raise ValuationError(f"no dimension assigned to type {t}") from None

    def tensor(self, name: str) -> ConcreteTensor:
        try:
            return self.tensors[name]
        except KeyError:
            raise ValuationError(f"symbol {name} is not assigned by the valuation") from None

    def image(self, factor: TensorSymbol | Delta) -> ConcreteTensor:
        if isinstance(factor, Delta):
            return cdelta(self.dim(factor.lower.type))
        tensor = self.tensor(factor.name)
        expected = (
            tuple(self.dim(x.type) for x in factor.lower),
            tuple(self.dim(y.type) for y in factor.upper),
        )
        if (tensor.lower_dims, tensor.upper_dims) != expected:
            raise ValuationError(f"dimension mismatch for {factor.name} at its labels")
        return tensor


def _orders(
    E: EinsteinExpression, lower_order: Sequence[Label] | None, upper_order: Sequence[Label] | None
) -> tuple[tuple[Label, ...], tuple[Label, ...]]:
    lower, upper = free_labels(E)
    default_lower, default_upper = boundary_order(E)
    lower_order = tuple(default_lower if lower_order is None else lower_order)
    upper_order = tuple(default_upper if upper_order is None else upper_order)
    if len(lower_order) != len(lower) or set(lower_order) != lower:
        raise LabelError(f"lower order {[str(x) for x in lower_order]} does not enumerate the free lower labels")
    if len(upper_order) != len(upper) or set(upper_order) != upper:
        raise LabelError(f"upper order {[str(y) for y in upper_order]} does not enumerate the free upper labels")
    return lower_order, upper_order


def evaluate(
    E: EinsteinExpression,
    v: Valuation,
    lower_order: Sequence[Label] | None = None,
    upper_order: Sequence[Label] | None = None,
) -> ConcreteTensor:
    """Einstein-summation value of E: every repeated label is summed over.

    Output axes follow ``lower_order`` then ``upper_order`` (the default
    boundary ordering when omitted).
    """
    E.validate()
    lower_order, upper_order = _orders(E, lower_order, upper_order)
    images = [v.image(f) for f in E.factors]
    if not E.factors:
        return ConcreteTensor.scalar(1)

    labels = sorted(E.labels())
    if len(labels) > MAX_EINSUM_LABELS:
        logger.debug(f"{len(labels)} labels exceed the einsum subscript range, using the pinned evaluator")
        return eval_pinned(E, v, lower_order, upper_order)
    ids = {label: i for i, label in enumerate(labels)}

    operands: list[Any] = []
    for factor, image in zip(E.factors, images):
        operands.append(image.entries)
        operands.append([ids[x] for x in factor_lower(factor)] + [ids[y] for y in factor_upper(factor)])
    operands.append([ids[x] for x in lower_order] + [ids[y] for y in upper_order])
    result = np.einsum(*operands, optimize="greedy")
    return ConcreteTensor(
        tuple(v.dim(x.type) for x in lower_order),
        tuple(v.dim(y.type) for y in upper_order),
        result,
    )


def eval_pinned(
    E: EinsteinExpression,
    v: Valuation,
    lower_order: Sequence[Label] | None = None,
    upper_order: Sequence[Label] | None = None,
    s: LabelSupply | None = None,
) -> ConcreteTensor:
    """Evaluate through the pinned form with explicit products and contractions.

    Factors of the pinned form are multiplied in one at a time, each symbol
    followed by the deltas pinning its labels; a label is contracted as soon
    as both of its occurrences are present.
    """
    E.validate()
    lower_order, upper_order = _orders(E, lower_order, upper_order)
    pinned = pinned_form(E, lower_order, upper_order, s)

    schedule: list[TensorSymbol | Delta] = []
    deltas = list(pinned.deltas)
    for symbol in pinned.symbols:
        schedule.append(symbol)
        pins = [d for d in deltas if set(d.labels) & set(symbol.labels)]
        schedule.extend(pins)
        deltas = [d for d in deltas if d not in pins]
    schedule.extend(deltas)

    result = ConcreteTensor.scalar(1)
    lowers: list[Label] = []
    uppers: list[Label] = []
    contractions = 0
    for factor in schedule:
        result = cproduct(result, v.image(factor))
        lowers.extend(factor_lower(factor))
        uppers.extend(factor_upper(factor))
        for label in [x for x in lowers if x in uppers]:
            result = ccontract(result, lowers.index(label), uppers.index(label))
            lowers.remove(label)
            uppers.remove(label)
            contractions += 1
    logger.debug(f"pinned evaluation of {len(pinned)} factors used {contractions} contractions")

    axes = [lowers.index(x) for x in lower_order] + [len(lowers) + uppers.index(y) for y in upper_order]
    return ConcreteTensor(
        tuple(v.dim(x.type) for x in lower_order),
        tuple(v.dim(y.type) for y in upper_order),
        np.transpose(result.entries, axes),
    )


def eval_morphism(f: Morphism, v: Valuation) -> ConcreteTensor:
    """The functor image of f: inputs as lower axes, outputs as upper axes."""
    return evaluate(f.expression(), v, f.dom.inputs(), f.cod.outputs())


def valuation_from_json(data: Any, signature: Signature) -> Valuation:
    """Build a valuation from ``{"dims": {type: n}, "tensors": {symbol: literal}}``."""
    if not isinstance(data, dict) or not set(data) <= {"dims", "tensors"}:
        raise ValuationError("a valuation needs dims and tensors")
    dims = data.get("dims", {})
    tensors = data.get("tensors", {})
    if not isinstance(dims, dict) or not isinstance(tensors, dict):
        raise ValuationError("dims and tensors must be objects")
    return Valuation(
        signature,
        dict(dims),
        {name: ConcreteTensor.from_json(literal) for name, literal in tensors.items()},
    )


def load_valuation(path: Path | str, signature: Signature) -> Valuation:
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except OSError as e:
        raise ValuationError(f"cannot read valuation file {path}: {e}") from e
    except json.JSONDecodeError as e:
        raise ValuationError(f"malformed valuation JSON in {path}: {e}") from e
    logger.info(f"loaded valuation from {path}")
    return valuation_from_json(data, signature)


def tensor_json(t: ConcreteTensor) -> str:
    return json.dumps(t.to_json()) + "\n"
