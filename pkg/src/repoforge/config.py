"""YAML pipeline configuration with key-path diagnostics."""

from __future__ import annotations

from pathlib import Path
from typing import Optional

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .corpus import MixtureSource, MixtureSpec
from .ingest import FilterConfig
from .search import SearchConfig
from .simulation import SimulationConfig

DOCS_PLACEHOLDER = "@docs"


class ConfigError(ValueError):
    def __init__(self, problems: list[str]):
        self.problems = problems
        super().__init__("invalid config:\n" + "\n".join(f"  {p}" for p in problems))


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


class FilterSection(_Section):
    min_files: int = Field(2, ge=0)
    max_files: int = Field(64, ge=0)
    min_total_bytes: int = Field(1024, ge=0)
    max_total_bytes: int = Field(262144, ge=0)
    include_extensions: list[str] = ["py"]

    @model_validator(mode="after")
    def _bounds(self):
        if self.min_files > self.max_files:
            raise ValueError("min_files must be <= max_files")
        if self.min_total_bytes > self.max_total_bytes:
            raise ValueError("min_total_bytes must be <= max_total_bytes")
        return self

    def build(self) -> FilterConfig:
        return FilterConfig(self.min_files, self.max_files, self.min_total_bytes, self.max_total_bytes,
                            frozenset(self.include_extensions))


class SimulateSection(_Section):
    max_prompt_retries: int = Field(3, ge=1)
    temperature: float = Field(0.7, ge=0)
    seed: int = 0
    max_read_calls_per_file: int = Field(8, ge=0)

    def build(self) -> SimulationConfig:
        return SimulationConfig(self.max_prompt_retries, self.temperature, self.seed, self.max_read_calls_per_file)


class SearchSection(_Section):
    enabled: bool = True
    k: int = Field(2, ge=1)
    rounds: int = Field(3, ge=1)
    seed: int = 0
    include_main: bool = False
    max_proposal_attempts: int = Field(3, ge=1)

    def build(self) -> SearchConfig:
        return SearchConfig(self.k, self.rounds, self.seed, include_main=self.include_main,
                            max_proposal_attempts=self.max_proposal_attempts)


class SourceSection(_Section):
    name: str
    path: str
    share: float = Field(ge=0, le=1)


class MixtureSection(_Section):
    sources: list[SourceSection]
    total_token_budget: int = Field(gt=0)
    seed: int = 0

    @field_validator("sources")
    @classmethod
    def _shares(cls, v):
        total = sum(s.share for s in v)
        if not v or abs(total - 1.0) > 1e-9:
            raise ValueError(f"shares must sum to 1 (got {total})")
        return v


class EndpointSection(_Section):
    url: Optional[str] = None
    model: Optional[str] = None
    api_key_env: Optional[str] = None
    timeout: float = 120.0


class BackendsSection(_Section):
    generator: str = "template"
    scorer: str = "ngram"
    max_inflight: int = Field(8, ge=1)
    gen: EndpointSection = EndpointSection()
    score: EndpointSection = EndpointSection()


class FlattenSection(_Section):
    keep_sub_system_prompt: bool = True


class PipelineSection(_Section):
    repos_root: str = "repos"
    out_dir: str = "out"
    jobs: int = Field(1, ge=1)


class PipelineConfig(_Section):
    filter: FilterSection = FilterSection()
    simulate: SimulateSection = SimulateSection()
    search: SearchSection = SearchSection()
    mixture: Optional[MixtureSection] = None
    backends: BackendsSection = BackendsSection()
    flatten: FlattenSection = FlattenSection()
    pipeline: PipelineSection = PipelineSection()
    base_dir: str = Field(".", exclude=True)

    def resolve(self, path: str) -> Path:
        p = Path(path)
        return p if p.is_absolute() else Path(self.base_dir) / p

    def mixture_spec(self, docs_path: Path | None = None) -> MixtureSpec:
        if self.mixture is None:
            raise ConfigError(["mixture: section is required for mixing"])
        sources = []
        for s in self.mixture.sources:
            if s.path == DOCS_PLACEHOLDER:
                if docs_path is None:
                    raise ConfigError([f"mixture.sources.{s.name}: {DOCS_PLACEHOLDER} only works inside `run`"])
                path = docs_path
            else:
                path = self.resolve(s.path)
            sources.append(MixtureSource(s.name, str(path), s.share))
        return MixtureSpec(tuple(sources), self.mixture.total_token_budget, self.mixture.seed)

    def with_seed(self, seed: int) -> "PipelineConfig":
        data = self.model_copy(deep=True)
        data.simulate.seed = data.search.seed = seed
        if data.mixture is not None:
            data.mixture.seed = seed
        return data

    def endpoint(self, slot: str) -> dict:
        import os

        sec = self.backends.gen if slot == "gen" else self.backends.score
        out = {"base_url": sec.url, "model": sec.model, "timeout": sec.timeout}
        if sec.api_key_env:
            out["api_key"] = os.environ.get(sec.api_key_env, "")
        return out


def _format(err: ValidationError) -> list[str]:
    out = []
    for e in err.errors():
        loc = ".".join(str(p) for p in e["loc"]) or "<root>"
        out.append(f"{loc}: {e['msg']}")
    return out


def parse_config(data: dict | None, base_dir: str | Path = ".") -> PipelineConfig:
    data = dict(data or {})
    if "base_dir" in data:
        raise ConfigError(["base_dir: not a configurable key"])
    try:
        return PipelineConfig(**data, base_dir=str(base_dir))
    except ValidationError as exc:
        raise ConfigError(_format(exc)) from None
    except TypeError as exc:
        raise ConfigError([f"<root>: {exc}"]) from None


def load_config(path: str | Path | None) -> PipelineConfig:
    if path is None:
        return parse_config({})
    path = Path(path)
    try:
        data = yaml.safe_load(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError([f"<file>: cannot read {path}: {exc}"]) from None
    except yaml.YAMLError as exc:
        raise ConfigError([f"<file>: YAML syntax error: {exc}"]) from None
    if data is not None and not isinstance(data, dict):
        raise ConfigError(["<root>: expected a mapping"])
    return parse_config(data, path.parent)
