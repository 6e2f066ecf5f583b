"""Generation and scoring backends, selected by name."""

from __future__ import annotations

from .base import (
    AuthError,
    BackendError,
    BackendTimeout,
    GenerationRequest,
    Generator,
    QuotaError,
    ScoreRequest,
    ScoreResult,
    Scorer,
    TransientBackendError,
    derive_seed,
    with_retries,
)
from .mock import NgramScorer, OverlapScorer, ScriptedGenerator, TemplateGenerator, UniformScorer

GENERATORS = ("template", "openai")
SCORERS = ("uniform", "ngram", "overlap", "openai")


def make_generator(name: str, seed: int = 0, endpoint: dict | None = None, max_inflight: int = 8):
    if name == "template":
        return TemplateGenerator(seed)
    if name == "openai":
        from .remote import EndpointConfig, OpenAIChatGenerator

        return OpenAIChatGenerator(EndpointConfig.from_env("gen", max_inflight=max_inflight, **(endpoint or {})), seed=seed)
    raise ValueError(f"unknown generation backend {name!r}; choose from {GENERATORS}")


def make_scorer(name: str, seed: int = 0, endpoint: dict | None = None, max_inflight: int = 8):
    if name == "uniform":
        return UniformScorer()
    if name == "ngram":
        return NgramScorer()
    if name == "overlap":
        return OverlapScorer()
    if name == "openai":
        from .remote import EndpointConfig, OpenAICompletionScorer

        return OpenAICompletionScorer(EndpointConfig.from_env("score", max_inflight=max_inflight, **(endpoint or {})), seed=seed)
    raise ValueError(f"unknown scoring backend {name!r}; choose from {SCORERS}")


__all__ = [
    "AuthError", "BackendError", "BackendTimeout", "GenerationRequest", "Generator", "GENERATORS",
    "NgramScorer", "OverlapScorer", "QuotaError", "ScoreRequest", "ScoreResult", "Scorer", "SCORERS",
    "ScriptedGenerator", "TemplateGenerator", "TransientBackendError", "UniformScorer", "derive_seed",
    "make_generator", "make_scorer", "with_retries",
]
