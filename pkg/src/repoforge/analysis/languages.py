from __future__ import annotations

from typing import Collection, Protocol

from .imports import ImportRef, extract_imports
from .skeleton import FileSkeleton, extract_skeleton


class LanguageAnalyzer(Protocol):
    extensions: tuple[str, ...]

    def extract_imports(self, path: str, source: str, files: Collection[str]) -> list[ImportRef]: ...

    def extract_skeleton(self, path: str, source: str) -> FileSkeleton: ...


class PythonAnalyzer:
    extensions = ("py",)

    def extract_imports(self, path, source, files=()):
        return extract_imports(path, source, files)

    def extract_skeleton(self, path, source):
        return extract_skeleton(path, source)

    def handles(self, path: str) -> bool:
        return path.rsplit(".", 1)[-1] in self.extensions if "." in path else False


DEFAULT_ANALYZER = PythonAnalyzer()
