"""Raw-input parsing: unified diffs, execution logs, coverage listings.

A corpus on disk is one directory per project::

    <root>/<project>/commits.jsonl      {commit_id, timestamp, sequence_index, diff_file}
    <root>/<project>/diffs/...          unified-diff documents named by diff_file
    <root>/<project>/executions.csv     commit_id,suite,verdict,order_index
    <root>/<project>/coverage.csv       suite,class_path
    <root>/<project>/coverage_ratio.csv suite,ratio   (optional)

``diff_file`` is resolved relative to the project directory.
"""

from __future__ import annotations

import csv
import json
import re
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Mapping

from .errors import DuplicateExecution, InputError, MalformedDiff, UnknownVerdict


class ChangeKind(str, Enum):
    ADDED = "added"
    MODIFIED = "modified"
    DELETED = "deleted"
    RENAMED = "renamed"


class Verdict(str, Enum):
    PASS = "pass"
    FAIL = "fail"


@dataclass(frozen=True)
class FileDiff:
    path: str
    lines_added: int
    lines_removed: int
    change_kind: ChangeKind = ChangeKind.MODIFIED
    old_path: str | None = None
    binary: bool = False

    def __post_init__(self):
        if self.lines_added < 0 or self.lines_removed < 0:
            raise ValueError(f"negative line counts for {self.path}")
        if self.change_kind is ChangeKind.DELETED and self.lines_added:
            raise ValueError(f"deleted file {self.path} cannot add lines")
        if self.change_kind is ChangeKind.ADDED and self.lines_removed:
            raise ValueError(f"added file {self.path} cannot remove lines")

    @property
    def churn(self) -> int:
        return self.lines_added + self.lines_removed


@dataclass(frozen=True)
class CommitRecord:
    commit_id: str
    timestamp: int
    sequence_index: int
    diffs: tuple[FileDiff, ...] = ()

    @property
    def churn(self) -> int:
        return sum(d.churn for d in self.diffs)


@dataclass(frozen=True, order=True)
class TestSuiteId:
    __test__ = False  # keep pytest from collecting this as a test class

    project: str
    class_path: str

    @property
    def simple_name(self) -> str:
        return simple_name(self.class_path)

    def __str__(self) -> str:
        return self.class_path


@dataclass(frozen=True)
class ExecutionRecord:
    commit_id: str
    suite: TestSuiteId
    verdict: Verdict
    order_index: int

    @property
    def failed(self) -> bool:
        return self.verdict is Verdict.FAIL


@dataclass(frozen=True)
class CoverageMap:
    suite: TestSuiteId
    covered_classes: frozenset[str]
    coverage_ratio: float
    # False: the ratio was derived from the class universe and is recomputed per commit
    ratio_supplied: bool = False

    def __post_init__(self):
        if not 0.0 <= self.coverage_ratio <= 1.0:
            raise ValueError(f"coverage ratio {self.coverage_ratio} outside [0, 1]")


# ---------------------------------------------------------------------------
# unified diff
# ---------------------------------------------------------------------------

_HUNK_RE = re.compile(r"^@@ -(\d+)(?:,(\d+))? \+(\d+)(?:,(\d+))? @@")
_DEV_NULL = "/dev/null"


def _strip_side(raw: str) -> str | None:
    path = raw.split("\t", 1)[0].strip()
    if path == _DEV_NULL:
        return None
    if path.startswith(("a/", "b/")):
        path = path[2:]
    return path


@dataclass
class _PendingFile:
    git_old: str | None = None
    git_new: str | None = None
    old: str | None = None
    new: str | None = None
    headers_seen: bool = False
    new_mode: bool = False
    deleted_mode: bool = False
    rename_from: str | None = None
    rename_to: str | None = None
    binary: bool = False
    added: int = 0
    removed: int = 0
    hunks: int = 0

    def build(self) -> FileDiff:
        if self.headers_seen:
            old, new = self.old, self.new
        else:
            old, new = self.git_old, self.git_new
            if self.new_mode:
                old = None
            if self.deleted_mode:
                new = None
        if self.rename_from is not None:
            old = self.rename_from
        if self.rename_to is not None:
            new = self.rename_to
        if old is None and new is None:
            raise ValueError("file entry without any path")
        if old is None or self.new_mode:
            kind = ChangeKind.ADDED
        elif new is None or self.deleted_mode:
            kind = ChangeKind.DELETED
        elif old != new:
            kind = ChangeKind.RENAMED
        else:
            kind = ChangeKind.MODIFIED
        path = new if new is not None else old
        return FileDiff(
            path=path,
            lines_added=self.added,
            lines_removed=self.removed,
            change_kind=kind,
            old_path=old if kind is ChangeKind.RENAMED else None,
            binary=self.binary,
        )


def _split_git_header(rest: str) -> tuple[str | None, str | None]:
    # "a/<old> b/<new>"; paths with spaces make this ambiguous, take the last " b/"
    if rest.startswith("a/") and " b/" in rest:
        cut = rest.rindex(" b/")
        return rest[2:cut], rest[cut + 3:]
    parts = rest.split()
    if len(parts) == 2:
        return _strip_side(parts[0]), _strip_side(parts[1])
    return None, None


def parse_unified_diff(text: str) -> list[FileDiff]:
    """Parse a unified diff (plain ``diff -u`` or ``git diff``) into per-file counts.

    Hunk bodies are consumed by the line counts in their ``@@`` header, so a
    removed line that happens to start with ``--`` is never mistaken for a
    file header. Truncated hunks and unparsable hunk headers raise
    :class:`MalformedDiff` with the 1-based line number.
    """
    lines = text.splitlines()
    out: list[FileDiff] = []
    cur: _PendingFile | None = None

    def flush():
        nonlocal cur
        if cur is not None:
            out.append(cur.build())
        cur = None

    i, n = 0, len(lines)
    while i < n:
        line = lines[i]
        if line.startswith("diff --git "):
            flush()
            cur = _PendingFile()
            cur.git_old, cur.git_new = _split_git_header(line[len("diff --git "):])
        elif line.startswith("--- ") and i + 1 < n and lines[i + 1].startswith("+++ "):
            if cur is None or cur.headers_seen or cur.hunks:
                flush()
                cur = _PendingFile()
            cur.old = _strip_side(line[4:])
            cur.new = _strip_side(lines[i + 1][4:])
            cur.headers_seen = True
            i += 1
        elif line.startswith("@@"):
            if cur is None or not (cur.headers_seen or cur.git_new or cur.git_old):
                raise MalformedDiff(i + 1, "hunk before any file header")
            m = _HUNK_RE.match(line)
            if m is None:
                raise MalformedDiff(i + 1, f"unparsable hunk header {line!r}")
            old_left = int(m.group(2)) if m.group(2) is not None else 1
            new_left = int(m.group(4)) if m.group(4) is not None else 1
            header_line = i + 1
            i += 1
            while old_left > 0 or new_left > 0:
                if i >= n:
                    raise MalformedDiff(header_line, "truncated hunk")
                body = lines[i]
                tag = body[:1]
                if tag == "\\":
                    pass
                elif tag == "" or tag == " ":
                    old_left -= 1
                    new_left -= 1
                elif tag == "-":
                    old_left -= 1
                    cur.removed += 1
                elif tag == "+":
                    new_left -= 1
                    cur.added += 1
                else:
                    raise MalformedDiff(i + 1, f"unexpected line in hunk {body!r}")
                if old_left < 0 or new_left < 0:
                    raise MalformedDiff(header_line, "hunk body longer than its header states")
                i += 1
            cur.hunks += 1
            if i < n and lines[i].startswith("\\"):
                i += 1
            continue
        elif cur is not None:
            if line.startswith("new file mode"):
                cur.new_mode = True
            elif line.startswith("deleted file mode"):
                cur.deleted_mode = True
            elif line.startswith("rename from "):
                cur.rename_from = line[len("rename from "):]
            elif line.startswith("rename to "):
                cur.rename_to = line[len("rename to "):]
            elif line.startswith("Binary files ") or line.startswith("GIT binary patch"):
                cur.binary = True
                m = re.match(r"Binary files (.+) and (.+) differ", line)
                if m and not cur.headers_seen:
                    cur.old, cur.new = _strip_side(m.group(1)), _strip_side(m.group(2))
                    cur.headers_seen = True
        i += 1
    flush()
    return out


def format_unified_diff(diffs: Iterable[FileDiff]) -> str:
    """Render FileDiffs as a git-style diff whose parse reproduces the same records.

    Line contents are placeholders; only the counts and file-level metadata
    are meaningful.
    """
    chunks: list[str] = []
    for d in diffs:
        old = d.old_path if d.change_kind is ChangeKind.RENAMED else d.path
        chunks.append(f"diff --git a/{old} b/{d.path}")
        if d.change_kind is ChangeKind.ADDED:
            chunks.append("new file mode 100644")
        elif d.change_kind is ChangeKind.DELETED:
            chunks.append("deleted file mode 100644")
        elif d.change_kind is ChangeKind.RENAMED:
            chunks.append("similarity index 90%")
            chunks.append(f"rename from {old}")
            chunks.append(f"rename to {d.path}")
        minus = _DEV_NULL if d.change_kind is ChangeKind.ADDED else f"a/{old}"
        plus = _DEV_NULL if d.change_kind is ChangeKind.DELETED else f"b/{d.path}"
        if d.binary:
            chunks.append(f"Binary files {minus} and {plus} differ")
            continue
        if d.lines_added == 0 and d.lines_removed == 0:
            continue
        chunks.append(f"--- {minus}")
        chunks.append(f"+++ {plus}")
        old_start = 0 if d.lines_removed == 0 else 1
        new_start = 0 if d.lines_added == 0 else 1
        chunks.append(f"@@ -{old_start},{d.lines_removed} +{new_start},{d.lines_added} @@")
        chunks.extend(f"-removed line {k}" for k in range(d.lines_removed))
        chunks.extend(f"+added line {k}" for k in range(d.lines_added))
    return "\n".join(chunks) + ("\n" if chunks else "")


# ---------------------------------------------------------------------------
# executions
# ---------------------------------------------------------------------------

def parse_execution_log(rows: Iterable[Mapping[str, str]], project: str) -> list[ExecutionRecord]:
    records: list[ExecutionRecord] = []
    seen: set[tuple[str, str]] = set()
    orders: dict[str, set[int]] = {}
    for row in rows:
        commit_id = str(row["commit_id"]).strip()
        suite_path = str(row["suite"]).strip()
        raw_verdict = str(row["verdict"]).strip().lower()
        try:
            verdict = Verdict(raw_verdict)
        except ValueError:
            raise UnknownVerdict(f"verdict {row['verdict']!r} for {suite_path} at {commit_id}") from None
        key = (commit_id, suite_path)
        if key in seen:
            raise DuplicateExecution(f"{suite_path} executed twice at {commit_id}")
        seen.add(key)
        order_index = int(row["order_index"])
        if order_index < 0:
            raise InputError(f"negative order_index for {suite_path} at {commit_id}")
        used = orders.setdefault(commit_id, set())
        if order_index in used:
            raise InputError(f"order_index {order_index} repeated at {commit_id}")
        used.add(order_index)
        records.append(ExecutionRecord(commit_id, TestSuiteId(project, suite_path), verdict, order_index))
    return records


# ---------------------------------------------------------------------------
# suite -> production class mapping
# ---------------------------------------------------------------------------

_TEST_SUFFIXES = ("TestCase", "Tests", "Test", "IT")
_CAMEL_RE = re.compile(r"[A-Z]+(?=[A-Z][a-z]|\d|\b|$)|[A-Z]?[a-z]+|\d+")


def simple_name(class_path: str) -> str:
    return class_path.rsplit(".", 1)[-1]


def strip_test_affixes(name: str) -> str:
    if name.startswith("Test") and len(name) > 4 and name[4].isupper():
        name = name[4:]
    for suffix in _TEST_SUFFIXES:
        if name.endswith(suffix) and len(name) > len(suffix):
            return name[: -len(suffix)]
    return name


def camel_tokens(name: str) -> frozenset[str]:
    return frozenset(t.lower() for t in _CAMEL_RE.findall(name))


def map_suite_to_classes(suite: TestSuiteId, production_classes: Iterable[str]) -> frozenset[str]:
    """Name-similarity link from a test suite to the production classes it exercises.

    Exact simple-name match after affix stripping wins; otherwise every class
    whose camel-case tokens are a subset of the stripped suite name. An empty
    result means the suite is unmapped.
    """
    classes = frozenset(production_classes)
    stripped = strip_test_affixes(suite.simple_name)
    exact = frozenset(c for c in classes if simple_name(c) == stripped)
    if exact:
        return exact
    suite_tokens = camel_tokens(stripped)
    if not suite_tokens:
        return frozenset()
    return frozenset(
        c for c in classes
        if (toks := camel_tokens(simple_name(c))) and toks <= suite_tokens
    )


def mapping_rate(mapping: Mapping[TestSuiteId, frozenset[str]]) -> float:
    if not mapping:
        return 0.0
    return sum(1 for v in mapping.values() if v) / len(mapping)


def linked_classes(
    suite: TestSuiteId,
    mapping: Mapping[TestSuiteId, frozenset[str]],
    coverage: Mapping[TestSuiteId, CoverageMap],
) -> frozenset[str]:
    """Heuristic name mapping united with any recorded coverage; empty means unmapped."""
    linked = mapping.get(suite, frozenset())
    cov = coverage.get(suite)
    if cov is not None:
        linked = linked | cov.covered_classes
    return frozenset(linked)


_SOURCE_ROOTS = ("src/main/java/", "src/test/java/", "src/java/", "src/test/", "src/", "source/", "java/")


def is_test_path(path: str) -> bool:
    p = "/" + path
    if "/test/" in p or "/tests/" in p:
        return True
    stem = simple_name(path.rsplit("/", 1)[-1].rsplit(".", 1)[0])
    return strip_test_affixes(stem) != stem


def path_to_class(path: str) -> str | None:
    """``src/main/java/org/x/Foo.java`` -> ``org.x.Foo``; None for non-Java files."""
    if not path.endswith(".java"):
        return None
    body = path[: -len(".java")]
    for root in _SOURCE_ROOTS:
        k = body.find(root)
        if k >= 0 and (k == 0 or body[k - 1] == "/"):
            body = body[k + len(root):]
            break
    return body.replace("/", ".")


# ---------------------------------------------------------------------------
# on-disk corpus
# ---------------------------------------------------------------------------

@dataclass
class ProjectData:
    """One loaded project.

    ``production_classes`` and ``mapping`` span the whole history and serve
    reporting; feature assembly rebuilds both from data visible at each commit.
    """
    name: str
    commits: list[CommitRecord]
    executions: list[ExecutionRecord]
    coverage: dict[TestSuiteId, CoverageMap]
    production_classes: frozenset[str]
    mapping: dict[TestSuiteId, frozenset[str]] = field(default_factory=dict)

    @property
    def suites(self) -> list[TestSuiteId]:
        return sorted({e.suite for e in self.executions})

    def linked_classes(self, suite: TestSuiteId) -> frozenset[str]:
        return linked_classes(suite, self.mapping, self.coverage)


@dataclass
class Corpus:
    projects: dict[str, ProjectData]

    @property
    def project_names(self) -> list[str]:
        return sorted(self.projects)


def _read_csv(path: Path, required: tuple[str, ...]) -> list[dict[str, str]]:
    if not path.is_file():
        raise InputError(f"missing file: {path}")
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        missing = [c for c in required if c not in header]
        if missing:
            raise InputError(f"{path}: missing columns {missing}")
        return list(reader)


def load_project(directory: str | Path, name: str | None = None) -> ProjectData:
    directory = Path(directory)
    name = name or directory.name
    manifest = directory / "commits.jsonl"
    if not manifest.is_file():
        raise InputError(f"missing file: {manifest}")
    commits: list[CommitRecord] = []
    with manifest.open() as fh:
        for line_no, raw in enumerate(fh, 1):
            if not raw.strip():
                continue
            try:
                obj = json.loads(raw)
            except json.JSONDecodeError as exc:
                raise InputError(f"{manifest}:{line_no}: {exc}") from None
            diff_path = directory / obj["diff_file"]
            if not diff_path.is_file():
                raise InputError(f"missing file: {diff_path}")
            try:
                diffs = parse_unified_diff(diff_path.read_text())
            except MalformedDiff as exc:
                raise InputError(f"{diff_path}: {exc}") from None
            commits.append(CommitRecord(
                commit_id=str(obj["commit_id"]),
                timestamp=int(obj["timestamp"]),
                sequence_index=int(obj["sequence_index"]),
                diffs=tuple(diffs),
            ))
    commits.sort(key=lambda c: c.sequence_index)
    ids = [c.commit_id for c in commits]
    if len(set(ids)) != len(ids):
        raise InputError(f"{manifest}: duplicate commit_id")
    for a, b in zip(commits, commits[1:]):
        if a.sequence_index == b.sequence_index or a.timestamp > b.timestamp:
            raise InputError(f"{manifest}: sequence_index must strictly increase with timestamp "
                             f"({a.commit_id}, {b.commit_id})")

    executions = parse_execution_log(
        _read_csv(directory / "executions.csv", ("commit_id", "suite", "verdict", "order_index")), name)
    known = set(ids)
    for e in executions:
        if e.commit_id not in known:
            raise InputError(f"{directory / 'executions.csv'}: unknown commit {e.commit_id}")

    covered: dict[str, set[str]] = {}
    cov_path = directory / "coverage.csv"
    if cov_path.is_file():
        for row in _read_csv(cov_path, ("suite", "class_path")):
            covered.setdefault(row["suite"].strip(), set()).add(row["class_path"].strip())

    production: set[str] = set()
    for classes in covered.values():
        production |= classes
    for c in commits:
        for d in c.diffs:
            cls = path_to_class(d.path)
            if cls is not None and not is_test_path(d.path):
                production.add(cls)

    ratios: dict[str, float] = {}
    ratio_path = directory / "coverage_ratio.csv"
    if ratio_path.is_file():
        for row in _read_csv(ratio_path, ("suite", "ratio")):
            ratios[row["suite"].strip()] = float(row["ratio"])

    coverage: dict[TestSuiteId, CoverageMap] = {}
    for suite_path in sorted(set(covered) | set(ratios)):
        classes = frozenset(covered.get(suite_path, ()))
        if suite_path in ratios:
            ratio = ratios[suite_path]
        else:
            ratio = len(classes) / len(production) if production else 0.0
        sid = TestSuiteId(name, suite_path)
        coverage[sid] = CoverageMap(sid, classes, ratio, suite_path in ratios)

    project = ProjectData(name, commits, executions, coverage, frozenset(production))
    if production:
        project.mapping = {s: map_suite_to_classes(s, production) for s in project.suites}
    else:
        project.mapping = {s: frozenset() for s in project.suites}
    return project


def load_corpus(root: str | Path) -> Corpus:
    root = Path(root)
    if not root.is_dir():
        raise InputError(f"missing corpus directory: {root}")
    projects = {}
    for sub in sorted(p for p in root.iterdir() if p.is_dir()):
        if (sub / "commits.jsonl").exists():
            projects[sub.name] = load_project(sub)
    if not projects:
        raise InputError(f"no projects (directories with commits.jsonl) under {root}")
    return Corpus(projects)
