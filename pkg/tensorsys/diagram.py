"""Combinatorial string diagrams.

A diagram stores connectivity only: boxes with ordered typed ports, wires
between endpoints, ordered input and output boundaries and a multiset of
circles. Labels never appear on diagrams.
"""

import json
import logging
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Literal, Mapping

import networkx as nx

from tensorsys.core import (
    Delta,
    EinsteinExpression,
    Label,
    LabelError,
    LabelSupply,
    TensorSymbol,
    TensorSystemError,
    TypeName,
    free_labels,
    input_labels,
    output_labels,
)
from tensorsys.normal_form import delta_reduce
from tensorsys.refine import PortGraph, canonical_order

logger = logging.getLogger(__name__)

PortSide = Literal["in", "out"]


class DiagramError(TensorSystemError):
    """Raised for malformed diagrams and diagram JSON."""

    code = "diagram-error"
    exit_status = 4


@dataclass(frozen=True)
class PortRef:
    """Port ``port`` (0-based) on the input or output side of a box."""

    box: int
    port: int
    side: PortSide


@dataclass(frozen=True)
class BoundaryRef:
    """Position ``pos`` (0-based) of the diagram's input or output boundary."""

    side: PortSide
    pos: int


Endpoint = PortRef | BoundaryRef


def _endpoint_key(e: Endpoint) -> tuple:
    if isinstance(e, BoundaryRef):
        return (0, 0 if e.side == "in" else 1, e.pos)
    return (1, e.box, 0 if e.side == "in" else 1, e.port)


@dataclass(frozen=True)
class Box:
    id: int
    name: str
    ins: tuple[TypeName, ...] = ()
    outs: tuple[TypeName, ...] = ()


@dataclass(frozen=True)
class Wire:
    """Directed from a box output or diagram input to a box input or diagram output."""

    source: Endpoint
    target: Endpoint

    @property
    def key(self) -> tuple:
        return (_endpoint_key(self.source), _endpoint_key(self.target))

    @property
    def is_bare(self) -> bool:
        return isinstance(self.source, BoundaryRef) and isinstance(self.target, BoundaryRef)


def _normal_circles(
    circles: Mapping[TypeName, int] | Iterable[tuple[TypeName, int]],
) -> tuple[tuple[TypeName, int], ...]:
    items = circles.items() if isinstance(circles, Mapping) else circles
    counts: Counter = Counter()
    for t, n in items:
        counts[t] += n
    return tuple(sorted((t, n) for t, n in counts.items() if n))


@dataclass(frozen=True)
class Diagram:
    """An anchored string diagram.

    Boxes are kept sorted by id and circles as a sorted (type, count) tuple,
    so equal diagrams compare equal field by field.
    """

    boxes: tuple[Box, ...] = ()
    wires: frozenset[Wire] = field(default_factory=frozenset)
    inputs: tuple[TypeName, ...] = ()
    outputs: tuple[TypeName, ...] = ()
    circles: tuple[tuple[TypeName, int], ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "boxes", tuple(sorted(self.boxes, key=lambda b: b.id)))
        object.__setattr__(self, "wires", frozenset(self.wires))
        object.__setattr__(self, "inputs", tuple(self.inputs))
        object.__setattr__(self, "outputs", tuple(self.outputs))
        object.__setattr__(self, "circles", _normal_circles(self.circles))

    @property
    def types(self) -> tuple[TypeName, ...]:
        used = set(self.inputs) | set(self.outputs) | {t for t, _ in self.circles}
        for box in self.boxes:
            used.update(box.ins)
            used.update(box.outs)
        return tuple(sorted(used))

    def box(self, box_id: int) -> Box:
        for b in self.boxes:
            if b.id == box_id:
                return b
        raise DiagramError(f"no box with id {box_id}")

    def sorted_wires(self) -> list[Wire]:
        return sorted(self.wires, key=lambda w: w.key)

    def endpoint_type(self, e: Endpoint) -> TypeName:
        if isinstance(e, BoundaryRef):
            ports = self.inputs if e.side == "in" else self.outputs
            where = f"{e.side}put boundary position {e.pos}"
        else:
            b = self.box(e.box)
            ports = b.ins if e.side == "in" else b.outs
            where = f"{e.side}put port {e.port} of box {e.box}"
        index = e.pos if isinstance(e, BoundaryRef) else e.port
        if not 0 <= index < len(ports):
            raise DiagramError(f"{where} does not exist")
        return ports[index]

    def endpoints(self) -> list[Endpoint]:
        """Every endpoint that must carry exactly one wire."""
        result: list[Endpoint] = [BoundaryRef("in", k) for k in range(len(self.inputs))]
        result.extend(BoundaryRef("out", k) for k in range(len(self.outputs)))
        for b in self.boxes:
            result.extend(PortRef(b.id, p, "in") for p in range(len(b.ins)))
            result.extend(PortRef(b.id, p, "out") for p in range(len(b.outs)))
        return result

    def validate(self) -> "Diagram":
        """Check the well-formedness invariants; returns the diagram."""
        ids = [b.id for b in self.boxes]
        if len(set(ids)) != len(ids):
            raise DiagramError(f"duplicate box ids in {ids}")
        for t, n in self.circles:
            if n < 0:
                raise DiagramError(f"negative circle count {n} for type {t}")

        seen: Counter = Counter()
        for wire in self.sorted_wires():
            src, tgt = wire.source, wire.target
            if not (isinstance(src, BoundaryRef) and src.side == "in") and not (
                isinstance(src, PortRef) and src.side == "out"
            ):
                raise DiagramError(f"wire starts at {src}, not at an output port or diagram input")
            if not (isinstance(tgt, BoundaryRef) and tgt.side == "out") and not (
                isinstance(tgt, PortRef) and tgt.side == "in"
            ):
                raise DiagramError(f"wire ends at {tgt}, not at an input port or diagram output")
            t1, t2 = self.endpoint_type(src), self.endpoint_type(tgt)
            if t1 != t2:
                raise DiagramError(f"wire {src} -> {tgt} joins types {t1} and {t2}")
            seen[src] += 1
            seen[tgt] += 1

        for e in self.endpoints():
            if seen[e] != 1:
                raise DiagramError(f"{e} is the endpoint of {seen[e]} wires, expected 1")
        return self

    def to_networkx(self) -> nx.MultiDiGraph:
        """A MultiDiGraph view with boundary, box and circle nodes.

        Node attribute ``label`` identifies boundary positions, box symbols
        and circle types; edge attribute ``ports`` is (source port, target
        port) with -1 for boundary ends.
        """
        g = nx.MultiDiGraph()
        for k, t in enumerate(self.inputs):
            g.add_node(("in", k), kind="input", label=f"in{k}", type=t)
        for k, t in enumerate(self.outputs):
            g.add_node(("out", k), kind="output", label=f"out{k}", type=t)
        for b in self.boxes:
            g.add_node(("box", b.id), kind="box", label=(b.name, b.ins, b.outs))
        i = 0
        for t, n in self.circles:
            for _ in range(n):
                g.add_node(("circle", i), kind="circle", label=t)
                g.add_edge(("circle", i), ("circle", i), ports=(-1, -1), type=t)
                i += 1

        def node(e: Endpoint) -> tuple:
            if isinstance(e, BoundaryRef):
                return (e.side, e.pos)
            return ("box", e.box)

        def port(e: Endpoint) -> int:
            return -1 if isinstance(e, BoundaryRef) else e.port

        for wire in self.sorted_wires():
            g.add_edge(
                node(wire.source),
                node(wire.target),
                ports=(port(wire.source), port(wire.target)),
                type=self.endpoint_type(wire.source),
            )
        return g


def _boundary_key(label: Label) -> tuple:
    if label.is_canonical:
        return (0, label.position, label.polarity, label.type)
    return (1, label.name, label.type)


def boundary_order(E: EinsteinExpression) -> tuple[tuple[Label, ...], tuple[Label, ...]]:
    """Default boundary ordering: canonical labels by position, then named
    labels by name."""
    lower, upper = free_labels(E)
    return tuple(sorted(lower, key=_boundary_key)), tuple(sorted(upper, key=_boundary_key))


def _check_order(given: Iterable[Label], free: frozenset[Label], side: str) -> tuple[Label, ...]:
    order = tuple(given)
    if len(order) != len(free) or set(order) != free:
        raise LabelError(
            f"{side} boundary order {[str(x) for x in order]} is not an ordering of the "
            f"free {side} labels {sorted(str(x) for x in free)}"
        )
    return order


def to_diagram(
    E: EinsteinExpression,
    lower_order: Iterable[Label] | None = None,
    upper_order: Iterable[Label] | None = None,
) -> Diagram:
    """The string diagram of E.

    Args:
        E: a well-formed expression; eliminable deltas are removed first.
        lower_order: free lower labels in input-boundary order.
        upper_order: free upper labels in output-boundary order.

    Returns:
        One box per tensor symbol (ids in factor order), one wire per
        label, one bare wire per remaining delta and one circle per
        delta_a^a.
    """
    E = delta_reduce(E.validate())
    lower, upper = free_labels(E)
    default_lower, default_upper = boundary_order(E)
    lower_order = _check_order(default_lower if lower_order is None else lower_order, lower, "lower")
    upper_order = _check_order(default_upper if upper_order is None else upper_order, upper, "upper")

    source_of: dict[Label, Endpoint] = {a: BoundaryRef("in", k) for k, a in enumerate(lower_order)}
    target_of: dict[Label, Endpoint] = {b: BoundaryRef("out", k) for k, b in enumerate(upper_order)}

    boxes = []
    symbol_labels: list[Label] = []
    for i, symbol in enumerate(E.symbols):
        boxes.append(
            Box(i, symbol.name, tuple(x.type for x in symbol.lower), tuple(y.type for y in symbol.upper))
        )
        for p, x in enumerate(symbol.lower):
            target_of[x] = PortRef(i, p, "in")
            symbol_labels.append(x)
        for p, y in enumerate(symbol.upper):
            source_of[y] = PortRef(i, p, "out")
            symbol_labels.append(y)

    wires = {Wire(source_of[x], target_of[x]) for x in symbol_labels}
    circles: Counter = Counter()
    for d in E.deltas:
        if d.is_circle:
            circles[d.lower.type] += 1
        else:
            wires.add(Wire(source_of[d.lower], target_of[d.upper]))

    return Diagram(
        boxes=tuple(boxes),
        wires=frozenset(wires),
        inputs=tuple(a.type for a in lower_order),
        outputs=tuple(b.type for b in upper_order),
        circles=tuple(circles.items()),
    )


def from_diagram(
    D: Diagram,
    s: LabelSupply | None = None,
    lower_labels: Iterable[Label] | None = None,
    upper_labels: Iterable[Label] | None = None,
) -> EinsteinExpression:
    """An expression whose diagram is D.

    Boundary wires carry the given boundary labels (canonical labels by
    default); every internal wire and circle gets a fresh label from ``s``.
    """
    D.validate()
    lower = tuple(input_labels(D.inputs) if lower_labels is None else lower_labels)
    upper = tuple(output_labels(D.outputs) if upper_labels is None else upper_labels)
    if tuple(x.type for x in lower) != D.inputs:
        raise LabelError(f"input labels {[str(x) for x in lower]} do not match boundary {list(D.inputs)}")
    if tuple(y.type for y in upper) != D.outputs:
        raise LabelError(f"output labels {[str(y) for y in upper]} do not match boundary {list(D.outputs)}")
    if len(set(lower + upper)) != len(lower) + len(upper):
        raise LabelError("boundary labels must be distinct")

    supply = (s or LabelSupply()).seeded(lower + upper)
    label_at: dict[Endpoint, Label] = {}
    bare: list[Delta] = []
    for wire in D.sorted_wires():
        src, tgt = wire.source, wire.target
        if wire.is_bare:
            bare.append(Delta(lower[src.pos], upper[tgt.pos]))
            continue
        if isinstance(src, BoundaryRef):
            label = lower[src.pos]
        elif isinstance(tgt, BoundaryRef):
            label = upper[tgt.pos]
        else:
            label, supply = supply.fresh(D.endpoint_type(src))
        label_at[src] = label
        label_at[tgt] = label

    factors: list[TensorSymbol | Delta] = [
        TensorSymbol(
            b.name,
            tuple(label_at[PortRef(b.id, p, "in")] for p in range(len(b.ins))),
            tuple(label_at[PortRef(b.id, p, "out")] for p in range(len(b.outs))),
        )
        for b in D.boxes
    ]
    factors.extend(bare)
    for t, n in D.circles:
        for _ in range(n):
            label, supply = supply.fresh(t)
            factors.append(Delta(label, label))
    return EinsteinExpression(tuple(factors))


def _port_graph(D: Diagram) -> PortGraph:
    place = {b.id: i for i, b in enumerate(D.boxes)}
    feeds: dict[Endpoint, Endpoint] = {}
    for wire in D.wires:
        feeds[wire.target] = wire.source
        feeds[wire.source] = wire.target

    def endpoint(e: Endpoint) -> tuple:
        other = feeds[e]
        if isinstance(other, BoundaryRef):
            return (0, (other.side, other.pos))
        return (1, place[other.box], other.port)

    return PortGraph(
        colors=tuple((b.name, b.ins, b.outs) for b in D.boxes),
        ins=tuple(tuple(endpoint(PortRef(b.id, p, "in")) for p in range(len(b.ins))) for b in D.boxes),
        outs=tuple(tuple(endpoint(PortRef(b.id, p, "out")) for p in range(len(b.outs))) for b in D.boxes),
    )


def iso(D: Diagram, D2: Diagram) -> bool:
    """Whether a box bijection preserves names, ports, wiring, boundaries and circles."""
    if (D.inputs, D.outputs, D.circles) != (D2.inputs, D2.outputs, D2.circles):
        return False
    if len(D.boxes) != len(D2.boxes):
        return False
    bare1 = {(w.source.pos, w.target.pos) for w in D.wires if w.is_bare}
    bare2 = {(w.source.pos, w.target.pos) for w in D2.wires if w.is_bare}
    if bare1 != bare2:
        return False
    _, cert1 = canonical_order(_port_graph(D.validate()))
    _, cert2 = canonical_order(_port_graph(D2.validate()))
    return cert1 == cert2


def _dot_node(e: Endpoint) -> str:
    if isinstance(e, BoundaryRef):
        return f"{e.side}{e.pos}"
    return f"box{e.box}:{'i' if e.side == 'in' else 'o'}{e.port}"


def _record_label(b: Box) -> str:
    sections = []
    if b.ins:
        sections.append("{" + "|".join(f"<i{p}> {t}" for p, t in enumerate(b.ins)) + "}")
    sections.append(b.name)
    if b.outs:
        sections.append("{" + "|".join(f"<o{p}> {t}" for p, t in enumerate(b.outs)) + "}")
    return "{" + "|".join(sections) + "}"


def to_dot(D: Diagram) -> str:
    """Deterministic Graphviz DOT text for D."""
    lines = ["digraph diagram {"]
    append = lines.append

    for k, t in enumerate(D.inputs):
        append(f'  in{k} [shape=point, xlabel="{t}"];')
    if D.inputs:
        append("  { rank=source; " + " ".join(f"in{k};" for k in range(len(D.inputs))) + " }")

    for b in D.boxes:
        append(f'  box{b.id} [shape=record, label="{_record_label(b)}"];')

    for k, t in enumerate(D.outputs):
        append(f'  out{k} [shape=point, xlabel="{t}"];')
    if D.outputs:
        append("  { rank=sink; " + " ".join(f"out{k};" for k in range(len(D.outputs))) + " }")

    i = 0
    for t, n in D.circles:
        for _ in range(n):
            append(f'  circle{i} [shape=point, label=""];')
            append(f'  circle{i} -> circle{i} [dir=none, label="{t}"];')
            i += 1

    for wire in D.sorted_wires():
        t = D.endpoint_type(wire.source)
        append(f'  {_dot_node(wire.source)} -> {_dot_node(wire.target)} [label="{t}"];')

    append("}")
    return "\n".join(lines) + "\n"


def _endpoint_json(e: Endpoint) -> dict:
    if isinstance(e, BoundaryRef):
        return {"boundary": e.side, "pos": e.pos}
    return {"box": e.box, "port": e.port, "side": e.side}


def diagram_json(D: Diagram) -> str:
    """Stable JSON text for D (indent 2, trailing newline)."""
    data = {
        "types": list(D.types),
        "boxes": [
            {"id": b.id, "name": b.name, "ins": list(b.ins), "outs": list(b.outs)}
            for b in D.boxes
        ],
        "wires": [
            {"from": _endpoint_json(w.source), "to": _endpoint_json(w.target)}
            for w in D.sorted_wires()
        ],
        "inputs": list(D.inputs),
        "outputs": list(D.outputs),
        "circles": dict(D.circles),
    }
    return json.dumps(data, indent=2) + "\n"


def _require(cond: bool, message: str) -> None:
    if not cond:
        raise DiagramError(message)


def _str_list(value, where: str) -> tuple[str, ...]:
    _require(
        isinstance(value, list) and all(isinstance(t, str) and t for t in value),
        f"{where} must be a list of type names",
    )
    return tuple(value)


def _int(value, where: str) -> int:
    _require(isinstance(value, int) and not isinstance(value, bool), f"{where} must be an integer")
    return value


def _parse_endpoint(value, where: str) -> Endpoint:
    _require(isinstance(value, dict), f"{where} must be an object")
    if set(value) == {"boundary", "pos"}:
        _require(value["boundary"] in ("in", "out"), f"{where}.boundary must be 'in' or 'out'")
        return BoundaryRef(value["boundary"], _int(value["pos"], f"{where}.pos"))
    _require(set(value) == {"box", "port", "side"}, f"{where} has unexpected keys {sorted(value)}")
    _require(value["side"] in ("in", "out"), f"{where}.side must be 'in' or 'out'")
    return PortRef(_int(value["box"], f"{where}.box"), _int(value["port"], f"{where}.port"), value["side"])


def parse_diagram_json(text: str) -> Diagram:
    """Parse and validate JSON produced by ``diagram_json``."""
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise DiagramError(f"malformed diagram JSON: {e}") from e

    _require(isinstance(data, dict), "diagram JSON must be an object")
    keys = {"types", "boxes", "wires", "inputs", "outputs", "circles"}
    _require(set(data) == keys, f"diagram JSON keys must be {sorted(keys)}, got {sorted(data)}")

    types = set(_str_list(data["types"], "types"))
    _require(isinstance(data["boxes"], list), "boxes must be a list")
    boxes = []
    for n, b in enumerate(data["boxes"]):
        where = f"boxes[{n}]"
        _require(isinstance(b, dict) and set(b) == {"id", "name", "ins", "outs"}, f"{where} needs id, name, ins, outs")
        _require(isinstance(b["name"], str) and b["name"], f"{where}.name must be a nonempty string")
        boxes.append(
            Box(_int(b["id"], f"{where}.id"), b["name"], _str_list(b["ins"], f"{where}.ins"), _str_list(b["outs"], f"{where}.outs"))
        )

    _require(isinstance(data["wires"], list), "wires must be a list")
    wires = []
    for n, w in enumerate(data["wires"]):
        where = f"wires[{n}]"
        _require(isinstance(w, dict) and set(w) == {"from", "to"}, f"{where} needs from and to")
        wires.append(Wire(_parse_endpoint(w["from"], f"{where}.from"), _parse_endpoint(w["to"], f"{where}.to")))
    _require(len(set(wires)) == len(wires), "duplicate wires")

    circles = data["circles"]
    _require(
        isinstance(circles, dict) and all(isinstance(n, int) and n >= 0 for n in circles.values()),
        "circles must map type names to counts",
    )

    D = Diagram(
        boxes=tuple(boxes),
        wires=frozenset(wires),
        inputs=_str_list(data["inputs"], "inputs"),
        outputs=_str_list(data["outputs"], "outputs"),
        circles=circles,
    )
    undeclared = sorted(set(D.types) - types)
    _require(not undeclared, f"types {undeclared} are used but not listed in types")
    return D.validate()
