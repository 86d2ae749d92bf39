"""Half-open time windows and sliding-window iteration."""

from __future__ import annotations

from dataclasses import dataclass
from datetime import date, datetime, timedelta, timezone

from .errors import ConfigError


@dataclass(frozen=True, order=True)
class Window:
    """The interval ``[start, end)``. Both bounds are timezone-aware."""

    start: datetime
    end: datetime

    def __post_init__(self) -> None:
        if self.start.tzinfo is None or self.end.tzinfo is None:
            raise ConfigError("window bounds must be timezone-aware")
        if self.end <= self.start:
            raise ConfigError(f"window end {self.end} is not after start {self.start}")

    def __contains__(self, ts: datetime) -> bool:
        return self.start <= ts < self.end

    @property
    def length(self) -> timedelta:
        return self.end - self.start

    def overlaps(self, other: "Window") -> bool:
        return self.start < other.end and other.start < self.end

    def to_json(self) -> dict:
        return {"start": self.start.isoformat(), "end": self.end.isoformat()}

    @classmethod
    def from_json(cls, obj: dict) -> "Window":
        return cls(parse_instant(obj["start"]), parse_instant(obj["end"]))

    def label(self) -> str:
        return f"{self.start.date().isoformat()}..{self.end.date().isoformat()}"


def parse_instant(text: str) -> datetime:
    """Parse an ISO-8601 date or datetime; naive values are taken as UTC."""
    text = text.strip()
    if text.endswith("Z"):
        text = text[:-1] + "+00:00"
    try:
        ts = datetime.fromisoformat(text)
    except ValueError:
        ts = datetime.combine(date.fromisoformat(text), datetime.min.time())
    if ts.tzinfo is None:
        ts = ts.replace(tzinfo=timezone.utc)
    return ts


def sliding_windows(start: datetime, end: datetime, length: timedelta,
                    step: timedelta) -> list[Window]:
    if step <= timedelta(0) or length < step:
        raise ConfigError("sliding windows need length >= step > 0")
    out = []
    cursor = start
    while cursor < end:
        out.append(Window(cursor, cursor + length))
        cursor += step
    return out


def covering_windows(instants: list[datetime], length: timedelta, step: timedelta,
                     start: datetime | None = None,
                     end: datetime | None = None) -> list[Window]:
    """Windows from ``start`` (default: midnight UTC of the earliest instant)
    until past ``end`` (default: just after the latest instant)."""
    if not instants and (start is None or end is None):
        return []
    if start is None:
        first = min(instants).astimezone(timezone.utc)
        start = first.replace(hour=0, minute=0, second=0, microsecond=0)
    if end is None:
        end = max(instants) + timedelta(seconds=1)
    return sliding_windows(start, end, length, step)
