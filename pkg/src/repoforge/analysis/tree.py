from __future__ import annotations

from dataclasses import dataclass, field


@dataclass
class TreeNode:
    name: str
    dirs: dict[str, "TreeNode"] = field(default_factory=dict)
    files: list[str] = field(default_factory=list)

    def leaves(self, prefix: str = "") -> list[str]:
        out = [prefix + f for f in self.files]
        for name, child in self.dirs.items():
            out.extend(child.leaves(prefix + name + "/"))
        return sorted(out)

    def to_dict(self) -> dict:
        return {"name": self.name, "dirs": [d.to_dict() for d in self.dirs.values()], "files": list(self.files)}


@dataclass
class FileTree:
    root: TreeNode

    @property
    def leaves(self) -> list[str]:
        return self.root.leaves()

    def render(self) -> str:
        lines = ["."]

        def emit(node: TreeNode, indent: str):
            children = [(name + "/", child) for name, child in node.dirs.items()]
            children += [(name, None) for name in node.files]
            children.sort(key=lambda c: c[0])
            for i, (label, child) in enumerate(children):
                last = i == len(children) - 1
                lines.append(indent + ("└── " if last else "├── ") + label)
                if child is not None:
                    emit(child, indent + ("    " if last else "│   "))

        emit(self.root, "")
        return "\n".join(lines)

    def to_dict(self) -> dict:
        return self.root.to_dict()


def build_file_tree(paths) -> FileTree:
    """Build the directory tree from repo-relative paths (a snapshot works too)."""
    if hasattr(paths, "files"):
        paths = list(paths.files)
    root = TreeNode("")
    for path in sorted(paths):
        *dirs, leaf = path.split("/")
        node = root
        for d in dirs:
            node = node.dirs.setdefault(d, TreeNode(d))
        node.files.append(leaf)
    _sort(root)
    return FileTree(root)


def _sort(node: TreeNode):
    node.files.sort()
    node.dirs = dict(sorted(node.dirs.items()))
    for child in node.dirs.values():
        _sort(child)
