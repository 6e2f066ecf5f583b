"""Import extraction and module resolution for Python sources."""

from __future__ import annotations

import ast
from dataclasses import dataclass
from typing import Collection


class AnalysisError(Exception):
    def __init__(self, path: str, message: str, lineno: int | None = None, offset: int | None = None):
        self.path = path
        self.lineno = lineno
        self.offset = offset
        where = f"{path}:{lineno}:{offset}" if lineno is not None else path
        super().__init__(f"{where}: {message}")


@dataclass(frozen=True)
class ImportRef:
    module: str           # as written, relative imports keep their leading dots
    target: str | None    # repo-relative file, None when external
    lineno: int

    @property
    def external(self) -> bool:
        return self.target is None


def parse_source(path: str, source: str) -> ast.Module:
    try:
        return ast.parse(source, filename=path)
    except SyntaxError as exc:
        raise AnalysisError(path, exc.msg or "invalid syntax", exc.lineno, exc.offset) from None


def resolve_module(dotted: str, files: Collection[str]) -> str | None:
    """`p.q` -> `p/q.py`, else `p/q/__init__.py`, else None."""
    if not dotted:
        return None
    base = dotted.replace(".", "/")
    for candidate in (base + ".py", base + "/__init__.py"):
        if candidate in files:
            return candidate
    return None


def package_of(path: str) -> list[str]:
    return path.split("/")[:-1]


def absolute_module(path: str, module: str | None, level: int) -> str | None:
    """Absolute dotted name for a (possibly relative) import in `path`."""
    if level == 0:
        return module
    pkg = package_of(path)
    if level - 1 > len(pkg):
        return None
    pkg = pkg[: len(pkg) - (level - 1)]
    parts = pkg + (module.split(".") if module else [])
    return ".".join(parts)


def extract_imports(path: str, source: str, files: Collection[str] = ()) -> list[ImportRef]:
    """All imports in `source`, including nested and conditional ones, in source order.

    `import a, b` yields one reference per name. `from m import x` points at
    the submodule `m.x` when that is a repo file, otherwise at `m` itself.
    """
    tree = parse_source(path, source)
    files = set(files)
    refs: list[ImportRef] = []
    nodes = [n for n in ast.walk(tree) if isinstance(n, (ast.Import, ast.ImportFrom))]
    nodes.sort(key=lambda n: (n.lineno, n.col_offset))
    for node in nodes:
        if isinstance(node, ast.Import):
            for alias in node.names:
                refs.append(ImportRef(alias.name, resolve_module(alias.name, files), node.lineno))
            continue
        written = "." * node.level + (node.module or "")
        base = absolute_module(path, node.module, node.level)
        if base is None:
            refs.append(ImportRef(written, None, node.lineno))
            continue
        seen = set()
        for alias in node.names:
            target = None
            label = written
            if alias.name != "*":
                sub = f"{base}.{alias.name}" if base else alias.name
                target = resolve_module(sub, files)
                if target is not None:
                    label = written + ("" if written.endswith(".") else ".") + alias.name
            if target is None:
                target = resolve_module(base, files)
                label = written
            if (label, target) in seen:
                continue
            seen.add((label, target))
            refs.append(ImportRef(label, target, node.lineno))
    return refs
