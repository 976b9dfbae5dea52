"""Key-semantics graph: key instructions connected along control flow."""

from __future__ import annotations

import json
import logging
from collections import deque
from dataclasses import dataclass, replace
from typing import Iterable, Optional

import networkx as nx

from .errors import GraphCycleError
from .keysem import KeyExpr
from .models import Cfg, Function

logger = logging.getLogger(__name__)


@dataclass(frozen=True, slots=True)
class KeyNode:
    address: int
    expr: KeyExpr
    while_marker: bool = False


@dataclass(frozen=True, slots=True)
class KeySemGraph:
    """Nodes are sorted by address; edges and entries refer to node positions."""

    nodes: tuple[KeyNode, ...] = ()
    edges: tuple[tuple[int, int], ...] = ()
    removed_back_edges: tuple[tuple[int, int], ...] = ()
    entries: tuple[int, ...] = ()

    def to_networkx(self) -> nx.DiGraph:
        graph = nx.DiGraph()
        graph.add_nodes_from(range(len(self.nodes)))
        graph.add_edges_from(self.edges)
        return graph

    def is_acyclic(self) -> bool:
        return nx.is_directed_acyclic_graph(self.to_networkx())


def _instruction_successors(function: Function, cfg: Cfg) -> list[list[int]]:
    """Successor instruction indices of every instruction."""
    successors: list[list[int]] = [[] for _ in function.instructions]
    for block in cfg.blocks:
        for index in block.indices():
            if index + 1 < block.end:
                successors[index] = [index + 1]
        successors[block.end - 1] = [cfg.blocks[child].start for child in cfg.successors(block.id)]
    return successors


def build_key_semantics_graph(
    function: Function,
    cfg: Cfg,
    keys: Iterable[tuple[int, KeyExpr]],
) -> KeySemGraph:
    """Connect key a to key b when a CFG path leads from a to b through no other key."""
    ordered = sorted(keys, key=lambda item: item[0])
    if not ordered or not cfg.blocks:
        return KeySemGraph()
    nodes = tuple(KeyNode(address, expr) for address, expr in ordered)
    position = {instr.address: index for index, instr in enumerate(function.instructions)}
    node_at = {position[node.address]: node_id for node_id, node in enumerate(nodes)}
    successors = _instruction_successors(function, cfg)

    def reachable_keys(starts: list[int]) -> list[int]:
        found: set[int] = set()
        seen: set[int] = set()
        queue = deque(starts)
        while queue:
            index = queue.popleft()
            if index in seen:
                continue
            seen.add(index)
            if index in node_at:
                found.add(node_at[index])
                continue
            queue.extend(successors[index])
        return sorted(found)

    edges = []
    for node_id, node in enumerate(nodes):
        for target in reachable_keys(successors[position[node.address]]):
            edges.append((node_id, target))
    entry_index = cfg.blocks[cfg.entry].start
    entries = tuple(reachable_keys([entry_index]))
    logger.debug("%s: key graph with %d nodes and %d edges", function.label, len(nodes), len(edges))
    return KeySemGraph(nodes=nodes, edges=tuple(edges), entries=entries)


def break_loops(graph: KeySemGraph) -> KeySemGraph:
    """Remove DFS back edges and mark their targets with WHILE.

    The DFS starts at the entry nodes, then at any unvisited node in address
    order; children are visited in address order.
    """
    on_stack: set[int] = set()
    visited: set[int] = set()
    removed: list[tuple[int, int]] = []
    adjacency: dict[int, list[int]] = {node: [] for node in range(len(graph.nodes))}
    for src, dst in sorted(set(graph.edges)):
        adjacency[src].append(dst)

    roots = list(graph.entries) + list(range(len(graph.nodes)))
    for root in roots:
        if root in visited:
            continue
        visited.add(root)
        on_stack.add(root)
        stack = [(root, iter(adjacency[root]))]
        while stack:
            node, children = stack[-1]
            child = next(children, None)
            if child is None:
                stack.pop()
                on_stack.discard(node)
            elif child in on_stack:
                removed.append((node, child))
            elif child not in visited:
                visited.add(child)
                on_stack.add(child)
                stack.append((child, iter(adjacency[child])))

    if not removed:
        return graph
    dropped = set(removed)
    headers = {dst for _, dst in removed}
    nodes = tuple(replace(node, while_marker=True) if index in headers else node for index, node in enumerate(graph.nodes))
    return KeySemGraph(
        nodes=nodes,
        edges=tuple(edge for edge in graph.edges if edge not in dropped),
        removed_back_edges=graph.removed_back_edges + tuple(removed),
        entries=graph.entries,
    )


def topo_serialize(graph: KeySemGraph) -> list[KeyNode]:
    """Kahn order with the lowest address first among ready nodes."""
    try:
        order = list(nx.lexicographical_topological_sort(graph.to_networkx(), key=lambda node: graph.nodes[node].address))
    except nx.NetworkXUnfeasible as exc:
        raise GraphCycleError("key-semantics graph has a cycle; break loops before serializing") from exc
    return [graph.nodes[node] for node in order]


def _quote(text: str) -> str:
    return json.dumps(text)


def to_dot(graph: KeySemGraph, *, name: Optional[str] = None) -> str:
    """Graphviz text; removed back edges are drawn dashed."""
    lines = [f"digraph {_quote(name or 'keysem')} {{", "  node [shape=box];"]
    for node_id, node in enumerate(graph.nodes):
        label = f"{node.address:#x}: {'WHILE ' if node.while_marker else ''}{node.expr}"
        lines.append(f"  n{node_id} [label={_quote(label)}];")
    for src, dst in graph.edges:
        lines.append(f"  n{src} -> n{dst};")
    for src, dst in graph.removed_back_edges:
        lines.append(f"  n{src} -> n{dst} [style=dashed];")
    lines.append("}")
    return "\n".join(lines) + "\n"
