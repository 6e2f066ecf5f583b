"""Static analysis that grounds the simulation: file tree, imports, skeletons, order.

Only Python is supported. `LanguageAnalyzer` is the seam for adding others.
"""

from __future__ import annotations

from dataclasses import dataclass
from .graph import DependencyGraph, build_dependency_graph, is_analyzable, plan_order
from .imports import AnalysisError, ImportRef, extract_imports, resolve_module
from .languages import DEFAULT_ANALYZER, LanguageAnalyzer, PythonAnalyzer
from .order import ImplementationOrder, order_nodes, strongly_connected_components
from .skeleton import ClassSig, FileSkeleton, FunctionSig, extract_skeleton
from .tree import FileTree, build_file_tree


@dataclass(frozen=True)
class RepoAnalysis:
    repo_id: str
    tree: FileTree
    graph: DependencyGraph
    skeletons: dict[str, FileSkeleton]
    order: ImplementationOrder

    def to_dict(self) -> dict:
        return {
            "repo_id": self.repo_id,
            "tree": self.tree.render(),
            "nodes": list(self.graph.nodes),
            "edges": [list(e) for e in self.graph.edges],
            "unresolved": [list(u) for u in self.graph.unresolved],
            "skeletons": {p: s.to_dict() for p, s in self.skeletons.items()},
            "order": list(self.order.order),
            "cycle_groups": [list(g) for g in self.order.cycle_groups],
        }

    @classmethod
    def from_dict(cls, d: dict, paths) -> "RepoAnalysis":
        return cls(
            d["repo_id"],
            build_file_tree(paths),
            DependencyGraph(
                tuple(d["nodes"]), tuple(tuple(e) for e in d["edges"]), tuple(tuple(u) for u in d["unresolved"])
            ),
            {p: FileSkeleton.from_dict(s) for p, s in d["skeletons"].items()},
            ImplementationOrder(tuple(d["order"]), tuple(tuple(g) for g in d["cycle_groups"])),
        )


def analyze_snapshot(snap, strict: bool = True, analyzer=DEFAULT_ANALYZER) -> RepoAnalysis:
    """Run every analysis over a snapshot.

    With `strict`, the first unparsable file raises `AnalysisError`;
    otherwise it is left out of the skeleton map.
    """
    graph = build_dependency_graph(snap, analyzer)
    if strict and graph.errors:
        raise graph.errors[0]
    skeletons = {}
    for path in graph.nodes:
        try:
            skeletons[path] = analyzer.extract_skeleton(path, snap.text(path))
        except AnalysisError:
            if strict:
                raise
    return RepoAnalysis(snap.repo_id, build_file_tree(snap), graph, skeletons, plan_order(graph))


__all__ = [
    "AnalysisError", "ClassSig", "DependencyGraph", "FileSkeleton", "FileTree", "FunctionSig",
    "ImplementationOrder", "ImportRef", "LanguageAnalyzer", "PythonAnalyzer", "RepoAnalysis",
    "analyze_snapshot", "build_dependency_graph", "build_file_tree", "extract_imports",
    "extract_skeleton", "is_analyzable", "order_nodes", "plan_order", "resolve_module",
    "strongly_connected_components",
]
