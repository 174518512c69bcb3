"""Colour refinement and canonical ordering of port graphs.

Expressions (symbols joined by bound labels) and diagrams (boxes joined by
wires) are both port graphs: nodes with a colour, ordered input ports and
ordered output ports. Each port is attached to an endpoint:

    (0, key)          a fixed endpoint (a free label, a boundary position)
    (1, node, port)   the opposite port of another (or the same) node

``canonical_order`` returns an ordering of the nodes and a certificate; two
port graphs are isomorphic exactly when their certificates are equal.
"""

import logging
from collections import Counter
from dataclasses import dataclass
from typing import Hashable

import networkx as nx

from tensorsys import config

logger = logging.getLogger(__name__)

Endpoint = tuple


@dataclass(frozen=True)
class PortGraph:
    colors: tuple[Hashable, ...]
    ins: tuple[tuple[Endpoint, ...], ...]
    outs: tuple[tuple[Endpoint, ...], ...]

    def __post_init__(self):
        if not (len(self.colors) == len(self.ins) == len(self.outs)):
            raise ValueError("colors, ins and outs must describe the same nodes")

    def __len__(self) -> int:
        return len(self.colors)


def _rank(signatures: list) -> list[int]:
    """Replace sortable signatures by their rank among the distinct ones."""
    ranks = {sig: i for i, sig in enumerate(sorted(set(signatures)))}
    return [ranks[sig] for sig in signatures]


def _encode(endpoint: Endpoint, ranks: list[int]) -> tuple:
    if endpoint[0] == 0:
        return endpoint
    _, node, port = endpoint
    return (1, ranks[node], port)


def refine(graph: PortGraph, ranks: list[int]) -> list[int]:
    """Refine a colouring until the partition is stable."""
    rounds = 0
    while True:
        rounds += 1
        signatures = [
            (
                ranks[v],
                tuple(_encode(e, ranks) for e in graph.ins[v]),
                tuple(_encode(e, ranks) for e in graph.outs[v]),
            )
            for v in range(len(graph))
        ]
        refined = _rank(signatures)
        if len(set(refined)) == len(set(ranks)):
            logger.debug(f"refinement stable after {rounds} rounds")
            return refined
        ranks = refined


def certificate(graph: PortGraph, order: tuple[int, ...]) -> tuple:
    """The graph rewritten with nodes renumbered by their place in ``order``."""
    place = {node: i for i, node in enumerate(order)}

    def renumber(endpoint: Endpoint) -> tuple:
        if endpoint[0] == 0:
            return endpoint
        _, node, port = endpoint
        return (1, place[node], port)

    return tuple(
        (
            graph.colors[node],
            tuple(renumber(e) for e in graph.ins[node]),
            tuple(renumber(e) for e in graph.outs[node]),
        )
        for node in order
    )




def components(graph: PortGraph) -> list[list[int]]:
    """Node sets of the connected components, each sorted."""
    g = nx.Graph()
    g.add_nodes_from(range(len(graph)))
    for v in range(len(graph)):
        for endpoint in graph.ins[v] + graph.outs[v]:
            if endpoint[0] == 1:
                g.add_edge(v, endpoint[1])
    return sorted(sorted(c) for c in nx.connected_components(g))


def _restrict(graph: PortGraph, nodes: list[int]) -> PortGraph:
    local = {v: i for i, v in enumerate(nodes)}

    def renumber(endpoint: Endpoint) -> tuple:
        if endpoint[0] == 0:
            return endpoint
        _, node, port = endpoint
        return (1, local[node], port)

    return PortGraph(
        colors=tuple(graph.colors[v] for v in nodes),
        ins=tuple(tuple(renumber(e) for e in graph.ins[v]) for v in nodes),
        outs=tuple(tuple(renumber(e) for e in graph.outs[v]) for v in nodes),
    )


def _search(graph: PortGraph) -> tuple[tuple[int, ...], tuple, int]:
    """Refinement plus individualization over one graph.

    Every node of the first non-singleton cell is individualized in turn and
    the leaf with the smallest certificate is kept. On a connected graph a
    single individualized node already refines to a discrete partition.
    """
    n = len(graph)
    best: tuple[tuple, tuple[int, ...]] | None = None
    leaves = 0

    def search(ranks: list[int]) -> None:
        nonlocal best, leaves
        ranks = refine(graph, ranks)
        sizes = Counter(ranks)
        if len(sizes) == n:
            leaves += 1
            order = tuple(sorted(range(n), key=ranks.__getitem__))
            cert = certificate(graph, order)
            if best is None or cert < best[0]:
                best = (cert, order)
            return
        target = min(r for r, size in sizes.items() if size > 1)
        for v in range(n):
            if ranks[v] != target:
                continue
            search(_rank([(r, 0 if u == v else 1) for u, r in enumerate(ranks)]))

    search(_rank(list(graph.colors)))
    cert, order = best
    return order, cert, leaves


def canonical_order(graph: PortGraph) -> tuple[tuple[int, ...], tuple]:
    """Canonical node ordering and certificate.

    Connected components are canonized separately and concatenated in the
    order of their certificates, so repeated components cost no search.
    """
    if len(graph) == 0:
        return (), ()

    parts = []
    leaves = 0
    for nodes in components(graph):
        local_order, local_cert, explored = _search(_restrict(graph, nodes))
        leaves += explored
        parts.append((local_cert, tuple(nodes[i] for i in local_order)))
    parts.sort(key=lambda part: part[0])

    order = tuple(v for _, part in parts for v in part)
    if leaves > config.CANONICAL_LEAF_WARNING:
        logger.warning(f"canonical search explored {leaves} leaves for {len(graph)} nodes")
    else:
        logger.debug(
            f"canonical search explored {leaves} leaves over {len(parts)} components of {len(graph)} nodes"
        )
    return order, certificate(graph, order)
