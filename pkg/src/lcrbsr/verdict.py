"""Solver results and resource errors shared by all deciders."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any


class BudgetExceeded(RuntimeError):
    """A solver hit its node or state cap before deciding."""

    def __init__(self, what: str, limit: int):
        super().__init__(f"{what} budget of {limit} exceeded")
        self.limit = limit


@dataclass
class Verdict:
    """``reachable`` means an unsafe (target) state is reachable."""

    reachable: bool
    certificate: Any = None
    nodes: int = 0
    seconds: float = 0.0
    extra: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.certificate is not None and not self.reachable:
            raise ValueError("a certificate only accompanies a reachable verdict")

    @property
    def label(self) -> str:
        return "reachable" if self.reachable else "unreachable"
