"""Collected, non-fatal problems found while processing a corpus."""

from __future__ import annotations

import logging
from collections import Counter
from dataclasses import dataclass, field

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Diagnostic:
    level: str  # "warning" or "error"
    code: str
    message: str

    def to_json(self) -> dict:
        return {"level": self.level, "code": self.code, "message": self.message}


@dataclass
class Diagnostics:
    entries: list[Diagnostic] = field(default_factory=list)

    def warn(self, code: str, message: str) -> None:
        logger.warning("%s: %s", code, message)
        self.entries.append(Diagnostic("warning", code, message))

    def error(self, code: str, message: str) -> None:
        logger.error("%s: %s", code, message)
        self.entries.append(Diagnostic("error", code, message))

    def counts(self) -> Counter:
        return Counter(d.code for d in self.entries)

    @property
    def has_errors(self) -> bool:
        return any(d.level == "error" for d in self.entries)

    def extend(self, other: "Diagnostics") -> None:
        self.entries.extend(other.entries)

    def __len__(self) -> int:
        return len(self.entries)

    def to_json(self) -> list[dict]:
        return [d.to_json() for d in self.entries]
