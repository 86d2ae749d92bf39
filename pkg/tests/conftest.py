from __future__ import annotations

from datetime import datetime, timedelta, timezone

import pytest

from sttwatch.ingest import CommitRecord, FileChange, MessageRecord
from sttwatch.windows import Window

T0 = datetime(2023, 1, 1, tzinfo=timezone.utc)


def at(days: float = 0, hours: float = 0) -> datetime:
    return T0 + timedelta(days=days, hours=hours)


def commit(cid: str, author: str, ts: datetime, *changes: tuple, merge: bool = False) -> CommitRecord:
    fcs = tuple(FileChange(p, a, d) for p, a, d in changes)
    return CommitRecord(cid, author.title(), f"{author}@x.example", author, ts, merge, fcs)


def message(mid: str, author: str, ts: datetime, thread: str, body: str = "",
            reply_to: str | None = None) -> MessageRecord:
    return MessageRecord(mid, "mailing_list", thread, reply_to, author, ts, body)


@pytest.fixture
def month() -> Window:
    return Window(T0, T0 + timedelta(days=30))


# criterion number -> (status, detail); filled by test_acceptance
ACCEPTANCE_RESULTS: dict[int, tuple[str, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE_RESULTS):
        status, detail = ACCEPTANCE_RESULTS[number]
        terminalreporter.write_line(f"{status} criterion {number}: {detail}")
