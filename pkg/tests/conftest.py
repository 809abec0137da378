import pytest

from pcfamp.deck import default_design

# criterion id -> (description, passed) filled in by test_acceptance
ACCEPTANCE = {}


def record(cid, text, ok):
    ACCEPTANCE[cid] = (text, bool(ok))
    return ok


@pytest.fixture(scope="session")
def design():
    return default_design()


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for cid in sorted(ACCEPTANCE):
        text, ok = ACCEPTANCE[cid]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'} {cid}: {text}")
