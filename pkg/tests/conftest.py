"""Shared fixtures and the acceptance summary printed at the end of a run."""
import pytest

_VERDICTS = pytest.StashKey[dict]()


def pytest_configure(config):
    config.stash[_VERDICTS] = {}


class Criterion:
    """Collects the sub-checks of one acceptance criterion.

    A criterion passes when every evaluated check passes.  Checks that need
    inputs the repository does not ship are recorded as skipped and turn the
    verdict into ``PARTIAL`` rather than ``PASS``.
    """

    def __init__(self, store):
        self._store = store
        self.number = None
        self.title = ""
        self.checks = []
        self.skipped = []

    def begin(self, number: int, title: str):
        self.number, self.title = number, title

    def check(self, ok: bool, detail: str) -> bool:
        self.checks.append((bool(ok), detail))
        return bool(ok)

    def skip(self, detail: str):
        self.skipped.append(detail)

    @property
    def status(self) -> str:
        if not all(ok for ok, _ in self.checks) or not self.checks:
            return "FAIL"
        return "PARTIAL" if self.skipped else "PASS"

    def line(self) -> str:
        failed = [d for ok, d in self.checks if not ok]
        shown = failed or [d for _, d in self.checks]
        text = f"criterion {self.number:>2} {self.status:<7} {self.title}: " + "; ".join(shown)
        if self.skipped:
            text += " | skipped: " + "; ".join(self.skipped)
        return text

    def done(self):
        self._store[self.number] = self.line()
        print(self.line())
        failed = [d for ok, d in self.checks if not ok]
        assert self.checks, "no checks were evaluated"
        assert not failed, "; ".join(failed)


@pytest.fixture
def criterion(request):
    store = request.config.stash[_VERDICTS]
    c = Criterion(store)
    yield c
    if c.number is not None and c.number not in store:
        c.checks.append((False, "aborted before all checks ran"))
        store[c.number] = c.line()


def pytest_terminal_summary(terminalreporter, config):
    store = config.stash.get(_VERDICTS, {})
    if not store:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(store):
        terminalreporter.write_line(store[n])
