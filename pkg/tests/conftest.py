import contextlib

# acceptance outcomes, printed in the terminal summary
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


@contextlib.contextmanager
def criterion(n: int, title: str):
    """Record PASS if the block finishes, FAIL with the error otherwise."""
    notes: list[str] = []
    try:
        yield notes
    except BaseException as exc:
        ACCEPTANCE[n] = (False, f"{title}: {'; '.join(notes + [type(exc).__name__ + ': ' + str(exc).splitlines()[0] if str(exc) else type(exc).__name__])}")
        raise
    ACCEPTANCE[n] = (True, f"{title}: {'; '.join(notes)}")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, text = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'} - {text}")
