import contextlib
import time

import pytest
import torch

_LINES = pytest.StashKey[list]()


@pytest.fixture(autouse=True)
def float64_default():
    """Every test runs at 64-bit precision and restores the previous default."""
    prev = torch.get_default_dtype()
    torch.set_default_dtype(torch.float64)
    torch.manual_seed(0)
    yield
    torch.set_default_dtype(prev)


class _Record:
    detail = ""


@pytest.fixture
def criterion(request):
    """Context manager that logs one PASS/FAIL line for an acceptance criterion."""
    lines = request.config.stash.setdefault(_LINES, [])

    @contextlib.contextmanager
    def run(number, title):
        rec = _Record()
        start = time.perf_counter()
        status = "FAIL"
        try:
            yield rec
            status = "PASS"
        finally:
            line = f"[{status}] criterion {number}: {title} ({time.perf_counter() - start:.1f}s) {rec.detail}".rstrip()
            lines.append(line)
            print(line)

    return run


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_LINES, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split("criterion ")[1].split(":")[0])):
            terminalreporter.write_line(line)
