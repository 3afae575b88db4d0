import pytest

_results = {}


@pytest.fixture
def criterion(request):
    """Record one PASS/FAIL line per acceptance criterion; reprinted in the terminal summary."""
    recorded = []

    def record(cid, ok, detail):
        line = f"{cid} {'PASS' if ok else 'FAIL'}: {detail}"
        _results[cid] = line
        recorded.append(cid)
        print(line)
        return ok

    yield record
    if not recorded:
        cid = request.node.name
        _results.setdefault(cid, f"{cid} FAIL: no result recorded (test errored)")


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for cid in sorted(_results):
        terminalreporter.write_line(_results[cid])
