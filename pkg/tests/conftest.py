from pathlib import Path


def pytest_terminal_summary(terminalreporter):
    """Echo the acceptance gate's PASS/FAIL lines into the run summary."""
    ran_acceptance = any(
        rep.nodeid.startswith("tests/test_acceptance.py")
        for rep in terminalreporter.stats.get("passed", [])
        + terminalreporter.stats.get("failed", [])
    )
    report = Path(__file__).resolve().parent.parent / "acceptance_report.txt"
    if not ran_acceptance or not report.is_file():
        return
    terminalreporter.section("acceptance criteria")
    for line in report.read_text().splitlines():
        terminalreporter.write_line(line)
