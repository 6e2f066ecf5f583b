from __future__ import annotations

import ast
from dataclasses import dataclass

from .imports import parse_source


@dataclass(frozen=True)
class FunctionSig:
    name: str
    params: tuple[str, ...]
    has_docstring: bool = False
    is_async: bool = False

    def render(self) -> str:
        prefix = "async def" if self.is_async else "def"
        return f"{prefix} {self.name}({', '.join(self.params)}): ..."


@dataclass(frozen=True)
class ClassSig:
    name: str
    methods: tuple[FunctionSig, ...] = ()
    has_docstring: bool = False
    bases: tuple[str, ...] = ()


@dataclass(frozen=True)
class FileSkeleton:
    path: str
    classes: tuple[ClassSig, ...] = ()
    functions: tuple[FunctionSig, ...] = ()
    module_docstring: str | None = None

    def names(self) -> list[str]:
        out = []
        for c in self.classes:
            out.append(c.name)
            out.extend(m.name for m in c.methods)
        out.extend(f.name for f in self.functions)
        return out

    def render(self) -> str:
        lines = []
        if self.module_docstring:
            lines.append('"""' + self.module_docstring.strip().splitlines()[0] + '"""')
        for c in self.classes:
            bases = f"({', '.join(c.bases)})" if c.bases else ""
            lines.append(f"class {c.name}{bases}:")
            lines.extend("    " + m.render() for m in c.methods)
            if not c.methods:
                lines.append("    ...")
        lines.extend(f.render() for f in self.functions)
        return "\n".join(lines)

    def to_dict(self) -> dict:
        return {
            "path": self.path,
            "module_docstring": self.module_docstring,
            "classes": [
                {
                    "name": c.name,
                    "bases": list(c.bases),
                    "has_docstring": c.has_docstring,
                    "methods": [_fn_dict(m) for m in c.methods],
                }
                for c in self.classes
            ],
            "functions": [_fn_dict(f) for f in self.functions],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FileSkeleton":
        return cls(
            path=d["path"],
            module_docstring=d.get("module_docstring"),
            classes=tuple(
                ClassSig(c["name"], tuple(_fn_from(m) for m in c["methods"]), c["has_docstring"], tuple(c["bases"]))
                for c in d["classes"]
            ),
            functions=tuple(_fn_from(f) for f in d["functions"]),
        )


def _fn_dict(f: FunctionSig) -> dict:
    return {"name": f.name, "params": list(f.params), "has_docstring": f.has_docstring, "is_async": f.is_async}


def _fn_from(d: dict) -> FunctionSig:
    return FunctionSig(d["name"], tuple(d["params"]), d["has_docstring"], d.get("is_async", False))


def _params(args: ast.arguments) -> tuple[str, ...]:
    out = [a.arg for a in args.posonlyargs + args.args]
    if args.vararg:
        out.append("*" + args.vararg.arg)
    elif args.kwonlyargs:
        out.append("*")
    out.extend(a.arg for a in args.kwonlyargs)
    if args.kwarg:
        out.append("**" + args.kwarg.arg)
    return tuple(out)


def _fn(node) -> FunctionSig:
    return FunctionSig(
        node.name,
        _params(node.args),
        ast.get_docstring(node) is not None,
        isinstance(node, ast.AsyncFunctionDef),
    )


def _collect_classes(body, out: list[ClassSig]):
    for node in body:
        if isinstance(node, ast.ClassDef):
            methods = tuple(_fn(n) for n in node.body if isinstance(n, (ast.FunctionDef, ast.AsyncFunctionDef)))
            out.append(
                ClassSig(node.name, methods, ast.get_docstring(node) is not None, tuple(ast.unparse(b) for b in node.bases))
            )
            _collect_classes(node.body, out)


def extract_skeleton(path: str, source: str) -> FileSkeleton:
    """Top-level functions and classes (nested classes flattened after their parent), in source order."""
    tree = parse_source(path, source)
    classes: list[ClassSig] = []
    _collect_classes(tree.body, classes)
    functions = tuple(_fn(n) for n in tree.body if isinstance(n, (ast.FunctionDef, ast.AsyncFunctionDef)))
    return FileSkeleton(path, tuple(classes), functions, ast.get_docstring(tree))
