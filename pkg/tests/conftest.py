import pytest

VERDICTS = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[VERDICTS] = []


@pytest.fixture
def verdict(request):
    """Record a one-line verdict for an acceptance criterion, then act on it.

    ``ok=None`` marks the criterion as skipped.
    """

    def record(number, name, ok, detail=""):
        status = "SKIP" if ok is None else "PASS" if ok else "FAIL"
        line = f"criterion {number:>2} {status}  {name}: {detail}"
        print(line)
        request.config.stash[VERDICTS].append((number, line))
        if ok is None:
            pytest.skip(line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(VERDICTS, [])
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(lines, key=lambda x: x[0]):
        terminalreporter.write_line(line)
