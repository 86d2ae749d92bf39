"""Parsers for local activity exports and the canonical JSONL record format.

Three raw inputs are understood:

* ``git log --numstat`` text (any ``--date`` style git emits, merges
  recognised from ``Merge:`` headers or ``--parents`` hash lists),
* mbox archives (RFC 4155 ``From `` separators),
* a JSON array of issues, each with its comment list.

Every parser returns immutable records and reports skipped input through an
optional :class:`~sttwatch.diagnostics.Diagnostics` collector instead of
raising, except for whole-input format violations.
"""

from __future__ import annotations

import email
import email.policy
import email.utils
import hashlib
import io
import json
import re
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import IO, Iterable, Iterator, Mapping, NewType

from .diagnostics import Diagnostics
from .errors import ConfigError, FormatError, IdentityError

AuthorId = NewType("AuthorId", str)

MAILING_LIST = "mailing_list"
ISSUE = "issue"
SOURCES = (MAILING_LIST, ISSUE)

_MIN_TS = datetime(1970, 1, 1, tzinfo=timezone.utc)
_MAX_TS = datetime(2100, 1, 1, tzinfo=timezone.utc)


@dataclass(frozen=True)
class FileChange:
    """Per-file line counts of one commit. ``None`` counts mark a binary file."""

    path: str
    additions: int | None
    deletions: int | None

    def __post_init__(self) -> None:
        if not self.path:
            raise FormatError("file change with empty path")
        if (self.additions is None) != (self.deletions is None):
            raise FormatError(f"{self.path}: binary marker on only one count")
        for n in (self.additions, self.deletions):
            if n is not None and n < 0:
                raise FormatError(f"{self.path}: negative line count")

    @property
    def binary(self) -> bool:
        return self.additions is None

    @property
    def lines_added(self) -> int:
        return self.additions or 0

    @property
    def lines_deleted(self) -> int:
        return self.deletions or 0

    def to_json(self) -> dict:
        return {"path": self.path, "additions": self.additions,
                "deletions": self.deletions, "binary": self.binary}

    @classmethod
    def from_json(cls, obj: dict) -> "FileChange":
        if obj.get("binary"):
            return cls(obj["path"], None, None)
        return cls(obj["path"], obj["additions"], obj["deletions"])


@dataclass(frozen=True)
class CommitRecord:
    commit_id: str
    author_name: str
    author_email: str
    canonical_author: AuthorId
    timestamp: datetime
    is_merge: bool = False
    file_changes: tuple[FileChange, ...] = ()

    def __post_init__(self) -> None:
        if not self.commit_id:
            raise FormatError("commit without id")
        _check_instant(self.timestamp, self.commit_id)

    def to_json(self) -> dict:
        return {
            "commit_id": self.commit_id,
            "author_name": self.author_name,
            "author_email": self.author_email,
            "canonical_author": self.canonical_author,
            "timestamp": self.timestamp.isoformat(),
            "is_merge": self.is_merge,
            "file_changes": [fc.to_json() for fc in self.file_changes],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "CommitRecord":
        return cls(
            commit_id=obj["commit_id"],
            author_name=obj["author_name"],
            author_email=obj["author_email"],
            canonical_author=AuthorId(obj["canonical_author"]),
            timestamp=datetime.fromisoformat(obj["timestamp"]),
            is_merge=bool(obj["is_merge"]),
            file_changes=tuple(FileChange.from_json(fc) for fc in obj["file_changes"]),
        )


@dataclass(frozen=True)
class MessageRecord:
    message_id: str
    source: str
    thread_id: str
    in_reply_to: str | None
    canonical_author: AuthorId
    timestamp: datetime
    body: str = field(repr=False)

    def __post_init__(self) -> None:
        if not self.message_id:
            raise FormatError("message without id")
        if self.source not in SOURCES:
            raise FormatError(f"unknown message source {self.source!r}")
        _check_instant(self.timestamp, self.message_id)

    def to_json(self) -> dict:
        return {
            "message_id": self.message_id,
            "source": self.source,
            "thread_id": self.thread_id,
            "in_reply_to": self.in_reply_to,
            "canonical_author": self.canonical_author,
            "timestamp": self.timestamp.isoformat(),
            "body": self.body,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "MessageRecord":
        return cls(
            message_id=obj["message_id"],
            source=obj["source"],
            thread_id=obj["thread_id"],
            in_reply_to=obj.get("in_reply_to"),
            canonical_author=AuthorId(obj["canonical_author"]),
            timestamp=datetime.fromisoformat(obj["timestamp"]),
            body=obj["body"],
        )


def _check_instant(ts: datetime, owner: str) -> None:
    if ts.tzinfo is None:
        raise FormatError(f"{owner}: timestamp lacks a UTC offset")
    if not _MIN_TS <= ts < _MAX_TS:
        raise FormatError(f"{owner}: timestamp {ts.isoformat()} out of range")


# -- author identities -------------------------------------------------------

def load_alias_map(source: str | Path | IO[str]) -> dict[str, str]:
    """Read ``key = canonical`` lines. Keys are lower-cased emails or names.

    A key mapped to two different canonical labels is a configuration error.
    """
    if isinstance(source, (str, Path)):
        text = Path(source).read_text(encoding="utf-8")
    else:
        text = source.read()
    aliases: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, canonical = line.partition("=")
        key, canonical = key.strip().lower(), canonical.strip()
        if not sep or not key or not canonical:
            raise ConfigError(f"alias map line {lineno}: expected 'key = canonical'")
        if aliases.get(key, canonical) != canonical:
            raise ConfigError(
                f"alias map line {lineno}: {key!r} maps to both "
                f"{aliases[key]!r} and {canonical!r}")
        aliases[key] = canonical
    return aliases


def normalize_author(name: str, email_addr: str,
                     alias_map: Mapping[str, str] | None = None) -> AuthorId:
    name = (name or "").strip()
    email_addr = (email_addr or "").strip()
    if not name and not email_addr:
        raise IdentityError("author has neither name nor email")
    alias_map = alias_map or {}
    if email_addr and email_addr.lower() in alias_map:
        return AuthorId(alias_map[email_addr.lower()])
    if name and name.lower() in alias_map:
        return AuthorId(alias_map[name.lower()])
    return AuthorId(email_addr.lower() if email_addr else name.lower())


# -- git numstat -------------------------------------------------------------

_COMMIT_RE = re.compile(r"^commit ([0-9a-fA-F]{4,})((?: [0-9a-fA-F]{4,})*)(?:\s+\(.*\))?\s*$")
_NUMSTAT_RE = re.compile(r"^(\d+|-)\t(\d+|-)\t(.+)$")
_AUTHOR_RE = re.compile(r"^(.*?)\s*<([^>]*)>\s*$")
_HEADER_RE = re.compile(r"^(Merge|Author|AuthorDate|Date|Commit|CommitDate):\s*(.*)$")
_BRACE_RENAME_RE = re.compile(r"\{([^{}]*) => ([^{}]*)\}")


def parse_git_date(text: str) -> datetime:
    """Accept the date styles ``git log`` can emit: default, iso, iso-strict,
    rfc2822 and raw epoch-plus-offset."""
    text = text.strip()
    m = re.fullmatch(r"(\d+) ([+-]\d{4})", text)
    if m:
        ts = datetime.fromtimestamp(int(m.group(1)), timezone.utc)
        return ts.astimezone(datetime.strptime(m.group(2), "%z").tzinfo)
    m = re.fullmatch(r"(\d{4}-\d\d-\d\d) (\d\d:\d\d:\d\d) ([+-]\d{4})", text)
    if m:
        return datetime.strptime(" ".join(m.groups()), "%Y-%m-%d %H:%M:%S %z")
    try:
        ts = datetime.fromisoformat(text.replace("Z", "+00:00"))
        if ts.tzinfo is not None:
            return ts
    except ValueError:
        pass
    for fmt in ("%a %b %d %H:%M:%S %Y %z",):
        try:
            return datetime.strptime(text, fmt)
        except ValueError:
            pass
    try:
        ts = email.utils.parsedate_to_datetime(text)
    except (TypeError, ValueError):
        ts = None
    if ts is None or ts.tzinfo is None:
        raise FormatError(f"unparseable date {text!r}")
    return ts


def _resolve_rename(path: str) -> str:
    if "=>" not in path:
        return path
    if "{" in path:
        path = _BRACE_RENAME_RE.sub(lambda m: m.group(2), path)
        return re.sub(r"/{2,}", "/", path).strip("/")
    return path.split("=>", 1)[1].strip()


def _lines(stream: str | IO[str] | Iterable[str]) -> Iterator[str]:
    if isinstance(stream, str):
        stream = io.StringIO(stream)
    for line in stream:
        yield line.rstrip("\r\n")


@dataclass
class _PendingCommit:
    commit_id: str
    is_merge: bool
    lineno: int
    author_name: str = ""
    author_email: str = ""
    date: datetime | None = None
    changes: list[FileChange] = field(default_factory=list)


def parse_numstat_log(stream: str | IO[str] | Iterable[str],
                      alias_map: Mapping[str, str] | None = None,
                      diagnostics: Diagnostics | None = None) -> list[CommitRecord]:
    diag = diagnostics if diagnostics is not None else Diagnostics()
    commits: list[CommitRecord] = []
    seen: set[str] = set()
    pending: _PendingCommit | None = None
    nonblank = False
    headers = 0

    def flush(p: _PendingCommit | None) -> None:
        if p is None:
            return
        if p.commit_id in seen:
            diag.warn("duplicate-commit", f"line {p.lineno}: commit {p.commit_id} repeated")
            return
        if p.date is None:
            diag.warn("missing-date", f"line {p.lineno}: commit {p.commit_id} has no date")
            return
        try:
            author = normalize_author(p.author_name, p.author_email, alias_map)
            record = CommitRecord(p.commit_id, p.author_name, p.author_email, author,
                                  p.date, p.is_merge, tuple(p.changes))
        except (IdentityError, FormatError) as exc:
            diag.warn("bad-commit", f"line {p.lineno}: {exc}")
            return
        seen.add(p.commit_id)
        commits.append(record)

    for lineno, line in enumerate(_lines(stream), 1):
        if not line.strip():
            continue
        nonblank = True
        m = _COMMIT_RE.match(line)
        if m:
            flush(pending)
            headers += 1
            parents = m.group(2).split()
            pending = _PendingCommit(m.group(1).lower(), len(parents) > 1, lineno)
            continue
        if pending is None:
            diag.warn("malformed-line", f"line {lineno}: content before first commit header")
            continue
        if line.startswith("    "):
            continue  # commit message body
        m = _NUMSTAT_RE.match(line)
        if m:
            adds, dels, path = m.groups()
            if (adds == "-") != (dels == "-"):
                diag.warn("malformed-line", f"line {lineno}: half-binary numstat entry")
                continue
            path = _resolve_rename(path)
            if adds == "-":
                pending.changes.append(FileChange(path, None, None))
            else:
                pending.changes.append(FileChange(path, int(adds), int(dels)))
            continue
        m = _HEADER_RE.match(line)
        if m:
            key, value = m.groups()
            if key == "Merge":
                pending.is_merge = True
            elif key == "Author":
                am = _AUTHOR_RE.match(value)
                if am:
                    pending.author_name, pending.author_email = am.group(1), am.group(2)
                else:
                    pending.author_name = value.strip()
            elif key in ("Date", "AuthorDate"):
                try:
                    pending.date = parse_git_date(value)
                except FormatError as exc:
                    diag.warn("bad-date", f"line {lineno}: {exc}")
            continue
        diag.warn("malformed-line", f"line {lineno}: unrecognised content {line[:60]!r}")
    flush(pending)

    if nonblank and headers == 0:
        raise FormatError("input contains no commit headers")
    return commits


# -- mbox --------------------------------------------------------------------

_SUBJECT_PREFIX_RE = re.compile(r"^\s*(?:(?:re|fw|fwd|aw|sv)\s*(?:\[\d+\])?\s*:|\[[^\]]*\])\s*",
                                re.IGNORECASE)
_MSGID_RE = re.compile(r"<[^<>\s]+>")


def normalize_subject(subject: str) -> str:
    subject = " ".join(subject.split())
    while True:
        stripped = _SUBJECT_PREFIX_RE.sub("", subject, count=1)
        if stripped == subject:
            break
        subject = stripped
    return subject.lower()


def strip_quoted(body: str) -> str:
    """Drop quoted reply lines (leading ``>``) after undoing mboxrd escaping."""
    kept = []
    for line in body.splitlines():
        if re.match(r"^>+From ", line):
            line = line[1:]
        if line.lstrip().startswith(">"):
            continue
        kept.append(line)
    return "\n".join(kept).strip()


def _split_mbox(data: bytes) -> list[bytes]:
    if not data.startswith(b"From "):
        raise FormatError("mbox does not start with a 'From ' separator line")
    chunks: list[bytes] = []
    current: list[bytes] = []
    for line in data.splitlines(keepends=True):
        if line.startswith(b"From ") and current:
            chunks.append(b"".join(current))
            current = []
        current.append(line)
    chunks.append(b"".join(current))
    # drop the separator line itself
    return [c.split(b"\n", 1)[1] if b"\n" in c else b"" for c in chunks]


def _decode_part(part) -> str | None:
    payload = part.get_payload(decode=True)
    if payload is None:
        return None
    charsets = [part.get_content_charset(), "utf-8", "latin-1"]
    for charset in charsets:
        if not charset:
            continue
        try:
            return payload.decode(charset)
        except (LookupError, UnicodeDecodeError):
            continue
    return None


def _text_body(msg) -> str | None:
    for part in msg.walk():
        if part.is_multipart():
            continue
        if part.get_content_type() != "text/plain":
            continue
        if part.get_content_disposition() == "attachment":
            continue
        return _decode_part(part)
    return None


class _UnionFind:
    def __init__(self) -> None:
        self.parent: dict[str, str] = {}

    def find(self, x: str) -> str:
        self.parent.setdefault(x, x)
        while self.parent[x] != x:
            self.parent[x] = self.parent[self.parent[x]]
            x = self.parent[x]
        return x

    def union(self, a: str, b: str) -> None:
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            self.parent[rb] = ra


def parse_mbox(stream: bytes | IO[bytes], alias_map: Mapping[str, str] | None = None,
               diagnostics: Diagnostics | None = None) -> list[MessageRecord]:
    diag = diagnostics if diagnostics is not None else Diagnostics()
    data = stream if isinstance(stream, bytes) else stream.read()
    if not data.strip():
        return []

    parsed = []  # (message_id, in_reply_to, refs, subject_key, author, ts, body)
    ids: set[str] = set()
    for index, raw in enumerate(_split_mbox(data)):
        try:
            msg = email.message_from_bytes(raw, policy=email.policy.default)
            msgid_header = str(msg.get("Message-ID", "") or "")
            found = _MSGID_RE.findall(msgid_header)
            message_id = found[0] if found else (
                "<generated-" + hashlib.sha1(raw).hexdigest()[:16] + "@sttwatch>")
            in_reply = _MSGID_RE.findall(str(msg.get("In-Reply-To", "") or ""))
            refs = _MSGID_RE.findall(str(msg.get("References", "") or ""))
            subject = str(msg.get("Subject", "") or "")
            name, addr = email.utils.parseaddr(str(msg.get("From", "") or ""))
            date_header = msg.get("Date")
        except Exception as exc:  # the email package raises a wide variety
            diag.warn("bad-message", f"message #{index}: unreadable headers ({exc})")
            continue
        if message_id in ids:
            diag.warn("duplicate-message", f"message #{index}: {message_id} repeated")
            continue
        try:
            author = normalize_author(name, addr, alias_map)
        except IdentityError:
            diag.warn("bad-message", f"message #{index}: no sender identity")
            continue
        try:
            ts = email.utils.parsedate_to_datetime(str(date_header))
            if ts.tzinfo is None:
                ts = ts.replace(tzinfo=timezone.utc)
        except (TypeError, ValueError):
            diag.warn("bad-message", f"message #{index}: missing or invalid Date")
            continue
        try:
            body = _text_body(msg)
        except Exception:
            body = None
        if body is None:
            diag.warn("undecodable-body", f"message #{index}: no decodable text part")
            continue
        ids.add(message_id)
        parsed.append((message_id, in_reply[0] if in_reply else (refs[-1] if refs else None),
                       refs, normalize_subject(subject), author, ts, strip_quoted(body)))

    threads = _UnionFind()
    first_by_subject: dict[str, str] = {}
    order = {p[0]: i for i, p in enumerate(parsed)}
    for message_id, parent, refs, subject_key, *_ in parsed:
        threads.find(message_id)
        linked = [r for r in ([parent] if parent else []) + refs if r in ids]
        for ref in linked:
            threads.union(ref, message_id)
        if parent and parent not in ids:
            diag.warn("dangling-reply", f"{message_id} replies to unseen {parent}")
        if not linked and subject_key:
            root = first_by_subject.setdefault(subject_key, message_id)
            threads.union(root, message_id)

    members: dict[str, list[str]] = {}
    for message_id in order:
        members.setdefault(threads.find(message_id), []).append(message_id)
    thread_of = {}
    for group in members.values():
        head = min(group, key=order.__getitem__)
        for message_id in group:
            thread_of[message_id] = head

    records = []
    for message_id, parent, _refs, _subj, author, ts, body in parsed:
        try:
            records.append(MessageRecord(message_id, MAILING_LIST, thread_of[message_id],
                                         parent, author, ts, body))
        except FormatError as exc:
            diag.warn("bad-message", str(exc))
    return records


# -- issues JSON -------------------------------------------------------------

def _issue_user(user) -> tuple[str, str]:
    if isinstance(user, str):
        return user, ""
    if isinstance(user, dict) and user.get("login"):
        return user["login"], user.get("email") or ""
    raise KeyError("user")


def parse_issues_json(stream: bytes | str | IO, alias_map: Mapping[str, str] | None = None,
                      diagnostics: Diagnostics | None = None) -> list[MessageRecord]:
    diag = diagnostics if diagnostics is not None else Diagnostics()
    data = stream if isinstance(stream, (bytes, str)) else stream.read()
    try:
        issues = json.loads(data)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise FormatError(f"issues export is not valid JSON: {exc}") from exc
    if not isinstance(issues, list):
        raise FormatError("issues export must be a JSON array")

    def record(message_id, thread_id, parent, obj, what):
        try:
            login, addr = _issue_user(obj["user"])
            ts = datetime.fromisoformat(str(obj["created_at"]).replace("Z", "+00:00"))
            if ts.tzinfo is None:
                ts = ts.replace(tzinfo=timezone.utc)
            body = obj.get("body") or ""
            return MessageRecord(message_id, ISSUE, thread_id, parent,
                                 normalize_author(login, addr, alias_map), ts, body)
        except KeyError as exc:
            diag.warn("missing-field", f"{what}: missing {exc.args[0]!r}")
        except (ValueError, IdentityError, FormatError) as exc:
            diag.warn("bad-record", f"{what}: {exc}")
        return None

    out: list[MessageRecord] = []
    for pos, issue in enumerate(issues):
        if not isinstance(issue, dict) or "number" not in issue:
            diag.warn("missing-field", f"issue #{pos}: missing 'number'")
            continue
        number = str(issue["number"])
        issue_id = f"issue-{number}"
        head = record(issue_id, number, None, issue, f"issue {number}")
        if head is not None:
            out.append(head)
        for ci, comment in enumerate(issue.get("comments") or []):
            if not isinstance(comment, dict):
                diag.warn("bad-record", f"issue {number} comment {ci}: not an object")
                continue
            rec = record(f"{issue_id}-comment-{ci}", number, issue_id, comment,
                         f"issue {number} comment {ci}")
            if rec is not None:
                out.append(rec)
    return out


# -- canonical JSONL ---------------------------------------------------------

def dumps_jsonl(records: Iterable[CommitRecord | MessageRecord]) -> str:
    return "".join(json.dumps(r.to_json(), ensure_ascii=False, sort_keys=True) + "\n"
                   for r in records)


def write_jsonl(records: Iterable[CommitRecord | MessageRecord], path: str | Path) -> None:
    Path(path).write_text(dumps_jsonl(records), encoding="utf-8")


def _read_jsonl(path: str | Path | IO[str], factory):
    text = Path(path).read_text(encoding="utf-8") if isinstance(path, (str, Path)) else path.read()
    # str.splitlines would also break on U+0085 and U+2028, which JSON leaves unescaped
    lines = text.split("\n")
    out = []
    for lineno, line in enumerate(lines, 1):
        if not line.strip():
            continue
        try:
            out.append(factory(json.loads(line)))
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise FormatError(f"line {lineno}: {exc}") from exc
    return out


def read_commits_jsonl(path: str | Path | IO[str]) -> list[CommitRecord]:
    return _read_jsonl(path, CommitRecord.from_json)


def read_messages_jsonl(path: str | Path | IO[str]) -> list[MessageRecord]:
    return _read_jsonl(path, MessageRecord.from_json)
