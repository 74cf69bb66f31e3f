from pathlib import Path

import pytest

ROOT = Path(__file__).resolve().parents[1]
UCI = ROOT / "data" / "uci"


@pytest.fixture
def uci_dir():
    return UCI


def pytest_terminal_summary(terminalreporter):
    mod = __import__("sys").modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for criterion in sorted(results):
        entries = results[criterion]
        ok = all(e[0] for e in entries)
        details = "; ".join(e[1].split(" - ", 1)[1] for e in entries)
        terminalreporter.write_line(f"criterion {criterion}: {'PASS' if ok else 'FAIL'} - {details}")
