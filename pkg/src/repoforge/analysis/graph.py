from __future__ import annotations

import logging
from dataclasses import dataclass, field

from .imports import AnalysisError
from .languages import DEFAULT_ANALYZER
from .order import ImplementationOrder, order_nodes

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class DependencyGraph:
    nodes: tuple[str, ...]
    edges: tuple[tuple[str, str], ...]   # (dependent, dependee), sorted
    unresolved: tuple[tuple[str, str], ...] = ()  # (importing file, module string)
    errors: tuple[AnalysisError, ...] = field(default=(), compare=False)

    def dependencies(self, path: str) -> list[str]:
        return [b for a, b in self.edges if a == path]

    def dependents(self, path: str) -> list[str]:
        return [a for a, b in self.edges if b == path]

    def to_dict(self) -> dict:
        return {
            "nodes": list(self.nodes),
            "edges": [list(e) for e in self.edges],
            "unresolved": [list(u) for u in self.unresolved],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DependencyGraph":
        return cls(
            tuple(d["nodes"]),
            tuple(tuple(e) for e in d["edges"]),
            tuple(tuple(u) for u in d["unresolved"]),
        )


def is_analyzable(path: str, analyzer=DEFAULT_ANALYZER) -> bool:
    return analyzer.handles(path)


def build_dependency_graph(snap, analyzer=DEFAULT_ANALYZER) -> DependencyGraph:
    """Union of per-file imports over the snapshot's Python files.

    Files that fail to parse stay in the node set without edges; their
    errors are returned on the graph for the caller to act on.
    """
    nodes = tuple(p for p in sorted(snap.files) if analyzer.handles(p))
    files = set(nodes)
    edges: set[tuple[str, str]] = set()
    unresolved: list[tuple[str, str]] = []
    errors: list[AnalysisError] = []
    for path in nodes:
        try:
            refs = analyzer.extract_imports(path, snap.text(path), files)
        except AnalysisError as exc:
            log.warning("skipping imports of %s", exc)
            errors.append(exc)
            continue
        for ref in refs:
            if ref.target is None:
                unresolved.append((path, ref.module))
            elif ref.target != path:
                edges.add((path, ref.target))
    return DependencyGraph(nodes, tuple(sorted(edges)), tuple(unresolved), tuple(errors))


def plan_order(graph: DependencyGraph) -> ImplementationOrder:
    return order_nodes(graph.nodes, graph.edges)
