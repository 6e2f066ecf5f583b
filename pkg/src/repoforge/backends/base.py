from __future__ import annotations

import hashlib
import logging
import math
import random
import time
from dataclasses import dataclass
from typing import Callable, Protocol, Sequence, TypeVar

log = logging.getLogger(__name__)

T = TypeVar("T")


class BackendError(Exception):
    """Base class; `retryable` tells the pipeline whether another attempt may help."""

    retryable = False


class TransientBackendError(BackendError):
    retryable = True


class BackendTimeout(TransientBackendError):
    pass


class AuthError(BackendError):
    pass


class QuotaError(BackendError):
    pass


@dataclass(frozen=True)
class GenerationRequest:
    messages: tuple[tuple[str, str], ...]
    temperature: float = 0.0
    max_output_tokens: int = 8192
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "messages", tuple((r, t) for r, t in self.messages))
        if not self.messages:
            raise ValueError("GenerationRequest needs at least one message")

    @property
    def prompt(self) -> str:
        return self.messages[-1][1]


@dataclass(frozen=True)
class ScoreRequest:
    context: str
    target: str

    def __post_init__(self):
        if not self.target:
            raise ValueError("ScoreRequest target must be non-empty")


@dataclass(frozen=True)
class ScoreResult:
    total_logprob: float
    token_count: int

    def __post_init__(self):
        if self.token_count <= 0:
            raise ValueError("token_count must be positive")
        if self.total_logprob > 0:
            raise ValueError("total_logprob must be <= 0")

    @property
    def ppl(self) -> float:
        return math.exp(-self.total_logprob / self.token_count)


class Generator(Protocol):
    def generate(self, req: GenerationRequest) -> str: ...


class Scorer(Protocol):
    def score(self, req: ScoreRequest) -> ScoreResult: ...


def derive_seed(*parts) -> int:
    """Stable 63-bit seed from arbitrary printable parts."""
    h = hashlib.sha256("\x1f".join(map(str, parts)).encode("utf-8")).digest()
    return int.from_bytes(h[:8], "big") >> 1


BACKOFF_SECONDS = (1.0, 4.0, 16.0)


def with_retries(
    fn: Callable[[], T],
    attempts: int = 3,
    seed: int = 0,
    delays: Sequence[float] = BACKOFF_SECONDS,
    sleep: Callable[[float], None] = time.sleep,
) -> T:
    """Call `fn`, retrying retryable BackendErrors with jittered backoff."""
    rng = random.Random(seed)
    for attempt in range(attempts):
        try:
            return fn()
        except BackendError as exc:
            if not exc.retryable or attempt == attempts - 1:
                raise
            delay = delays[min(attempt, len(delays) - 1)] * (1 + 0.25 * rng.random())
            log.debug("attempt %d failed (%s); sleeping %.2fs", attempt + 1, exc, delay)
            sleep(delay)
    raise AssertionError("unreachable")
