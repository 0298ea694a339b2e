import json
from pathlib import Path

import pytest

from commitprio.config import SynthConfig
from commitprio.corpus import FileDiff, format_unified_diff, load_corpus
from commitprio.synth import generate_synthetic_corpus

# small enough to train in seconds, large enough for every code path
SMALL_SYNTH = SynthConfig(projects=3, commits=12, suites=8, degenerate_commits=2,
                          degenerate_suites=4, helpers_per_suite=3, seed=3)


def write_project(root: Path, name: str, commits, executions, coverage=(), ratios=None) -> Path:
    """commits: [(commit_id, [FileDiff...])]; executions: [(commit_id, suite, verdict, order)]."""
    pdir = root / name
    (pdir / "diffs").mkdir(parents=True, exist_ok=True)
    with (pdir / "commits.jsonl").open("w") as fh:
        for seq, (cid, diffs) in enumerate(commits):
            (pdir / "diffs" / f"{cid}.diff").write_text(format_unified_diff(diffs))
            fh.write(json.dumps({"commit_id": cid, "timestamp": 1000 + seq, "sequence_index": seq,
                                 "diff_file": f"diffs/{cid}.diff"}) + "\n")
    lines = ["commit_id,suite,verdict,order_index"] + [f"{c},{s},{v},{o}" for c, s, v, o in executions]
    (pdir / "executions.csv").write_text("\n".join(lines) + "\n")
    (pdir / "coverage.csv").write_text("\n".join(["suite,class_path"] + [f"{s},{c}" for s, c in coverage]) + "\n")
    if ratios is not None:
        (pdir / "coverage_ratio.csv").write_text(
            "\n".join(["suite,ratio"] + [f"{s},{r}" for s, r in ratios.items()]) + "\n")
    return pdir


def java(cls: str, added: int, removed: int) -> FileDiff:
    return FileDiff(f"src/main/java/{cls.replace('.', '/')}.java", added, removed)


@pytest.fixture
def tiny_corpus(tmp_path):
    """Two hand-built projects with known features."""
    p = "org.p."
    write_project(
        tmp_path, "Alpha",
        commits=[("a0", [java(p + "Foo", 5, 2), java(p + "Bar", 9, 9)]),
                 ("a1", [java(p + "Bar", 1, 0)]),
                 ("a2", [java(p + "Foo", 3, 3)])],
        executions=[("a0", p + "FooTest", "pass", 0), ("a0", p + "BarTest", "fail", 1),
                    ("a0", p + "SmokeIT", "pass", 2),
                    ("a1", p + "FooTest", "fail", 1), ("a1", p + "BarTest", "pass", 0),
                    ("a1", p + "SmokeIT", "pass", 2),
                    ("a2", p + "FooTest", "fail", 0), ("a2", p + "BarTest", "pass", 1),
                    ("a2", p + "SmokeIT", "fail", 2)],
        coverage=[(p + "FooTest", p + "Foo"), (p + "BarTest", p + "Bar"), (p + "BarTest", p + "Baz")],
    )
    write_project(
        tmp_path, "Beta",
        commits=[("b0", [java("q.Widget", 4, 0)]), ("b1", [java("q.Gadget", 2, 2)])],
        executions=[("b0", "q.WidgetTest", "fail", 0), ("b0", "q.GadgetTest", "pass", 1),
                    ("b1", "q.WidgetTest", "pass", 0), ("b1", "q.GadgetTest", "fail", 1)],
        coverage=[("q.WidgetTest", "q.Widget"), ("q.GadgetTest", "q.Gadget")],
    )
    return tmp_path


@pytest.fixture(scope="session")
def small_synth_root(tmp_path_factory):
    root = tmp_path_factory.mktemp("synth")
    generate_synthetic_corpus(root, SMALL_SYNTH)
    return root


@pytest.fixture(scope="session")
def small_synth(small_synth_root):
    return load_corpus(small_synth_root)


# ---------------------------------------------------------------------------
# acceptance reporting: one PASS/FAIL line per criterion in the terminal summary
# ---------------------------------------------------------------------------

_CRITERIA: dict[int, tuple[str, bool, str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion check")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or (rep.when != "call" and not rep.failed):
        return
    number, title = marker.args
    detail = dict(item.user_properties).get("detail", "")
    if rep.failed and rep.when != "call":
        detail = f"{rep.when} error"
    _CRITERIA[number] = (title, rep.passed, detail)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        title, ok, detail = _CRITERIA[number]
        line = f"criterion {number:>2} {'PASS' if ok else 'FAIL'}  {title}"
        terminalreporter.write_line(line + (f"  [{detail}]" if detail else ""))
