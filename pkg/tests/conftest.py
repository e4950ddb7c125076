import pytest

from zslopt.dataset import synth


@pytest.fixture(scope="session")
def ds42():
    return synth(seed=42)


@pytest.fixture(scope="session")
def tiny():
    return synth(seed=3, p=4, q=2, d=8, k=5, n_per_class=6, noise_sigma=0.1, test_seen_frac=0.34)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
