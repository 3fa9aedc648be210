from helpers import ACCEPTANCE

N_CRITERIA = 11


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in range(1, N_CRITERIA + 1):
        passed, detail = ACCEPTANCE.get(n, (False, "not run or did not complete"))
        terminalreporter.write_line(f"criterion {n:2d} {'PASS' if passed else 'FAIL'}: {detail}")
