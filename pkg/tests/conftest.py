import pytest

from mining_calculus.simulator import reference_grid, run_corpus


@pytest.fixture(scope="session")
def small_corpus():
    return run_corpus(reference_grid(max_d=8), seed=11, race_count=200)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(RESULTS):
        ok, detail = RESULTS[number]
        terminalreporter.write_line(f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
